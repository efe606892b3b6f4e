//! Validator and commander selection, trust weights and reputation scores.

use serde::{Deserialize, Serialize};

use crate::config::{
    CommanderProtocol, ReputationMap, ScenarioConfig, TrustDenominator, UtilityForm, ValidatorProtocol,
};
use crate::crypto::{vrf_verify, KeyPair, VrfOutput};
use crate::ParticipantId;

/// VRF sortition: selected iff `hash/2^hl > 1 − prob`, so `P(selected) = prob`.
/// A proof that fails verification never selects.
pub fn selection(keys: &KeyPair, seed: u64, prob: f64) -> (bool, VrfOutput) {
    let out = keys.vrf_eval(seed);
    (selected(&out, keys, seed, prob), out)
}

fn selected(out: &VrfOutput, keys: &KeyPair, seed: u64, prob: f64) -> bool {
    if !vrf_verify(keys.public, seed, out) {
        return false;
    }
    prob >= 1.0 || out.unit() > 1.0 - prob
}

/// Commander-selection probabilities `w_m(t)` (validator probabilities stay 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustCoefficients {
    pub w: Vec<f64>,
}

impl TrustCoefficients {
    pub fn uniform(num_participants: usize) -> Self {
        Self {
            w: vec![1.0; num_participants],
        }
    }

    /// Honest `1 − ln T / T`, malicious `ln(|M_A|/η)/D` with `D` the burn-in
    /// length or the horizon, both clipped to `[0, 1]`.
    pub fn weighted(cfg: &ScenarioConfig, eta: f64) -> Self {
        let t = cfg.horizon as f64;
        let honest = (1.0 - t.ln() / t).clamp(0.0, 1.0);
        let denom = match cfg.trust_denominator {
            TrustDenominator::BurnIn => cfg.burn_in as f64,
            TrustDenominator::Horizon => t,
        };
        let a = cfg.malicious.len() as f64;
        let malicious = if a > 0.0 {
            ((a / eta).ln() / denom).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let w = (0..cfg.num_participants as u32)
            .map(|m| {
                if cfg.is_honest(ParticipantId(m)) {
                    honest
                } else {
                    malicious
                }
            })
            .collect();
        Self { w }
    }
}

/// Accuracy scores `U_i` and reputation scores `RS_i = G(U_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationState {
    pub utility: Vec<f64>,
    pub score: Vec<f64>,
    pub map: ReputationMap,
    pub form: UtilityForm,
}

impl ReputationState {
    pub fn new(num_participants: usize, map: ReputationMap, form: UtilityForm) -> Self {
        Self {
            utility: vec![0.0; num_participants],
            score: vec![apply_map(map, 0.0); num_participants],
            map,
            form,
        }
    }

    /// `U_i = Σ_j −(ȳμ_j^i − μ̃_j)² − ε²·pen(Δμ_j^i − μ̃_j)`.
    pub fn update(&mut self, broadcasts: &[Vec<f64>], global: &[f64], delta: &[Vec<f64>], epsilon: f64) {
        for i in 0..self.utility.len() {
            self.utility[i] = utility(&broadcasts[i], global, &delta[i], epsilon, self.form);
            self.score[i] = apply_map(self.map, self.utility[i]);
        }
    }

    /// Ids of the `n` highest scores, ties by id.
    pub fn top_n(&self, n: usize) -> Vec<ParticipantId> {
        top_n(&self.score, n)
    }
}

pub fn apply_map(map: ReputationMap, u: f64) -> f64 {
    match map {
        ReputationMap::Identity => u,
        ReputationMap::Exp => u.exp(),
    }
}

pub fn utility(broadcast: &[f64], global: &[f64], delta: &[f64], epsilon: f64, form: UtilityForm) -> f64 {
    let mut u = 0.0;
    for j in 0..global.len() {
        let acc = broadcast[j] - global[j];
        let dev = (delta[j] - global[j]).powi(2);
        let pen = match form {
            UtilityForm::Quartic => dev * dev,
            UtilityForm::Exponential => dev.exp(),
        };
        u -= acc * acc + epsilon * epsilon * pen;
    }
    u
}

pub fn top_n(scores: &[f64], n: usize) -> Vec<ParticipantId> {
    let mut ids: Vec<u32> = (0..scores.len() as u32).collect();
    ids.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    ids.into_iter().take(n).map(ParticipantId).collect()
}

/// `S_V(t)` in id order; callers apply `sc_sort` afterwards.
pub fn select_validators(
    protocol: ValidatorProtocol,
    keys: &[KeyPair],
    reputation: &ReputationState,
    seed: u64,
    t: u64,
    burn_in: u64,
) -> Vec<ParticipantId> {
    let all = || (0..keys.len() as u32).map(ParticipantId).collect();
    match protocol {
        ValidatorProtocol::All => all(),
        ValidatorProtocol::Vrf(p) => (0..keys.len() as u32)
            .filter(|&m| selection(&keys[m as usize], seed, p).0)
            .map(ParticipantId)
            .collect(),
        ValidatorProtocol::ReputationTopN(n) => {
            if t <= burn_in {
                all()
            } else {
                let mut ids = reputation.top_n(n);
                ids.sort_unstable();
                ids
            }
        }
    }
}

/// `S_C(t)` from an already sorted validator list; order is preserved.
pub fn select_commanders(
    protocol: CommanderProtocol,
    sorted_validators: &[ParticipantId],
    keys: &[KeyPair],
    trust: &TrustCoefficients,
    seed: u64,
) -> Vec<ParticipantId> {
    match protocol {
        CommanderProtocol::AllSorted => sorted_validators.to_vec(),
        CommanderProtocol::FixedCount(c) => sorted_validators.iter().copied().take(c).collect(),
        CommanderProtocol::WeightedVrf(_) => sorted_validators
            .iter()
            .copied()
            .filter(|m| selection(&keys[m.0 as usize], seed, trust.w[m.0 as usize]).0)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;

    #[test]
    fn degenerate_probabilities() {
        let k = keygen(1);
        for seed in 0..200 {
            assert!(!selection(&k, seed, 0.0).0);
            assert!(selection(&k, seed, 1.0).0);
        }
    }

    #[test]
    fn top_n_example() {
        assert_eq!(
            top_n(&[5.0, 9.0, 1.0, 9.0, 2.0], 3),
            vec![ParticipantId(1), ParticipantId(3), ParticipantId(0)]
        );
    }

    #[test]
    fn zero_residual_is_maximal_utility() {
        let g = [0.3, 0.6];
        assert_eq!(utility(&g, &g, &g, 0.5, UtilityForm::Quartic), 0.0);
        assert!(utility(&[0.6, 0.6], &g, &g, 0.5, UtilityForm::Quartic) < 0.0);
    }

    #[test]
    fn vrf_validators_with_certain_probability_take_everyone() {
        let keys: Vec<KeyPair> = (0..6).map(keygen).collect();
        let rep = ReputationState::new(6, ReputationMap::Identity, UtilityForm::Quartic);
        assert_eq!(select_validators(ValidatorProtocol::Vrf(1.0), &keys, &rep, 9, 50, 10).len(), 6);
        assert_eq!(select_validators(ValidatorProtocol::All, &keys, &rep, 9, 50, 10).len(), 6);
    }

    #[test]
    fn fixed_count_takes_prefix() {
        let keys: Vec<KeyPair> = (0..12).map(keygen).collect();
        let sorted: Vec<ParticipantId> = (0..12).rev().map(ParticipantId).collect();
        let trust = TrustCoefficients::uniform(12);
        let c = select_commanders(CommanderProtocol::FixedCount(5), &sorted, &keys, &trust, 0);
        assert_eq!(c, sorted[..5].to_vec());
        let all = select_commanders(CommanderProtocol::AllSorted, &sorted, &keys, &trust, 0);
        assert_eq!(all.len(), 12);
    }
}
