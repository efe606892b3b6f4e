//! Participant state, honest BC-UCB arm selection and the attacker library.

use rand::Rng;

use crate::config::{
    ArmAttack, ContaminationLaw, EstimatorAttack, HonestPolicy, MaliciousSpec, ScenarioConfig,
};
use crate::crypto::KeyPair;
use crate::env::{Delivery, Payload};
use crate::rng::RngStream;
use crate::ParticipantId;

#[derive(Debug, Clone, PartialEq)]
pub enum Role {
    Honest,
    Malicious(MaliciousSpec),
}

impl Role {
    pub fn is_honest(&self) -> bool {
        matches!(self, Role::Honest)
    }

    pub fn spec(&self) -> Option<&MaliciousSpec> {
        match self {
            Role::Honest => None,
            Role::Malicious(s) => Some(s),
        }
    }
}

/// UCB settings shared by every participant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcbParams {
    pub num_arms: usize,
    pub burn_in: u64,
    pub c1: f64,
    pub beta: f64,
    pub policy: HonestPolicy,
}

impl UcbParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            num_arms: cfg.num_arms,
            burn_in: cfg.burn_in,
            c1: cfg.ucb_c1,
            beta: cfg.ucb_beta,
            policy: cfg.honest_policy,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParticipantState {
    pub id: ParticipantId,
    pub role: Role,
    pub keys: KeyPair,
    /// `n_{m,i}`: approved pulls per arm.
    pub counts: Vec<u64>,
    /// `ȳμ^m`: running mean of raw rewards per arm.
    pub local_means: Vec<f64>,
    /// `μ̃^m`: the adopted global estimate.
    pub global: Vec<f64>,
    /// Set once an approved delivery arrives after burn-in.
    pub ucb_ready: bool,
    /// Running means of the contaminated reward stream (ε-contamination only).
    contaminated: Vec<f64>,
}

impl ParticipantState {
    pub fn new(id: ParticipantId, role: Role, keys: KeyPair, num_arms: usize) -> Self {
        Self {
            id,
            role,
            keys,
            counts: vec![0; num_arms],
            local_means: vec![0.0; num_arms],
            global: vec![0.0; num_arms],
            ucb_ready: false,
            contaminated: vec![0.0; num_arms],
        }
    }

    pub fn is_honest(&self) -> bool {
        self.role.is_honest()
    }
}

/// `μ̃_i + (C_1 ln t / n_i)^β`. Unpulled arms score `+∞`.
pub fn ucb_score(global: f64, n: u64, t: u64, c1: f64, beta: f64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    global + (c1 * (t as f64).ln() / n as f64).powf(beta)
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// The honest arm choice at step `t` (1-based).
pub fn select_arm_honest(state: &ParticipantState, t: u64, params: &UcbParams) -> usize {
    let k = params.num_arms;
    let round_robin = (t % k as u64) as usize;
    if params.policy == HonestPolicy::RoundRobin || t <= params.burn_in || !state.ucb_ready {
        return round_robin;
    }
    argmax(
        state
            .global
            .iter()
            .zip(&state.counts)
            .map(|(&g, &n)| ucb_score(g, n, t, params.c1, params.beta)),
    )
}

pub fn select_arm_malicious(
    state: &ParticipantState,
    spec: &MaliciousSpec,
    t: u64,
    params: &UcbParams,
    stream: &mut RngStream,
) -> usize {
    match spec.arm {
        ArmAttack::None => select_arm_honest(state, t, params),
        ArmAttack::FixedArm(i) => i,
        ArmAttack::UniformRandom => stream.random_range(0..params.num_arms),
    }
}

pub fn select_arm(state: &ParticipantState, t: u64, params: &UcbParams, stream: &mut RngStream) -> usize {
    match &state.role {
        Role::Honest => select_arm_honest(state, t, params),
        Role::Malicious(spec) => select_arm_malicious(state, spec, t, params, stream),
    }
}

fn draw_contamination(q: ContaminationLaw, stream: &mut RngStream) -> f64 {
    match q {
        ContaminationLaw::Constant(v) => v,
        ContaminationLaw::Uniform => stream.unit(),
        ContaminationLaw::Bernoulli(p) => {
            if stream.unit() < p {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// The estimator vector this participant broadcasts.
pub fn broadcast_estimators(state: &ParticipantState, stream: &mut RngStream) -> Vec<f64> {
    let spec = match &state.role {
        Role::Honest => return state.local_means.clone(),
        Role::Malicious(spec) => spec,
    };
    let local = &state.local_means;
    match spec.estimator {
        EstimatorAttack::None => local.clone(),
        EstimatorAttack::EpsilonContamination { .. } => state.contaminated.clone(),
        EstimatorAttack::ConstantShift(d) => local.iter().map(|&x| (x + d).clamp(0.0, 2.0)).collect(),
        EstimatorAttack::RandomNoise(range) => local
            .iter()
            .map(|&x| (x + range * (2.0 * stream.unit() - 1.0)).clamp(0.0, 2.0))
            .collect(),
        EstimatorAttack::WorstArmBoost => {
            let mut out = local.clone();
            let worst = argmax(local.iter().map(|&x| -x));
            out[worst] = 1.0;
            out
        }
    }
}

/// Applies one step's delivery for the arm this participant pulled.
pub fn apply_delivery(
    state: &mut ParticipantState,
    delivery: &Delivery,
    arm: usize,
    t: u64,
    burn_in: u64,
    stream: &mut RngStream,
) {
    debug_assert_eq!(delivery.recipient, state.id);
    match &delivery.payload {
        Payload::Nothing => {
            state.global.clone_from(&state.local_means);
        }
        Payload::RewardAndGlobal { raw_reward, global, .. } => {
            state.counts[arm] += 1;
            let n = state.counts[arm] as f64;
            state.local_means[arm] += (raw_reward - state.local_means[arm]) / n;
            if let Some(EstimatorAttack::EpsilonContamination { epsilon, q }) =
                state.role.spec().map(|s| s.estimator)
            {
                let observed = if stream.unit() < epsilon {
                    draw_contamination(q, stream)
                } else {
                    *raw_reward
                };
                state.contaminated[arm] += (observed - state.contaminated[arm]) / n;
            }
            for (i, &g) in global.iter().enumerate() {
                state.global[i] = if g.is_finite() { g } else { state.local_means[i] };
            }
            if t > burn_in {
                state.ucb_ready = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConsensusAttack;
    use crate::crypto::keygen;
    use crate::rng::StreamId;

    fn params(k: usize, l: u64) -> UcbParams {
        UcbParams {
            num_arms: k,
            burn_in: l,
            c1: 1.0,
            beta: 0.5,
            policy: HonestPolicy::Ucb,
        }
    }

    fn honest(k: usize) -> ParticipantState {
        ParticipantState::new(ParticipantId(0), Role::Honest, keygen(0), k)
    }

    fn stream() -> RngStream {
        RngStream::new(1, StreamId::Participant(ParticipantId(0)))
    }

    fn deliver(reward: f64, global: Vec<f64>) -> Delivery {
        Delivery {
            recipient: ParticipantId(0),
            payload: Payload::RewardAndGlobal {
                reward,
                raw_reward: reward,
                global,
            },
        }
    }

    #[test]
    fn burn_in_is_round_robin() {
        assert_eq!(select_arm_honest(&honest(5), 3, &params(5, 20)), 3);
    }

    #[test]
    fn ucb_score_example() {
        let mut s = honest(2);
        s.global = vec![0.5, 0.6];
        s.counts = vec![10, 20];
        s.ucb_ready = true;
        let s0 = ucb_score(0.5, 10, 100, 1.0, 0.5);
        let s1 = ucb_score(0.6, 20, 100, 1.0, 0.5);
        assert!((s0 - 1.1786).abs() < 1e-4 && (s1 - 1.0799).abs() < 1e-4);
        assert_eq!(select_arm_honest(&s, 100, &params(2, 10)), 0);
    }

    #[test]
    fn ties_go_to_lowest_arm() {
        let mut s = honest(2);
        s.global = vec![0.5, 0.5];
        s.counts = vec![4, 4];
        s.ucb_ready = true;
        assert_eq!(select_arm_honest(&s, 50, &params(2, 10)), 0);
    }

    #[test]
    fn fixed_and_uniform_arm_attacks() {
        let mut spec = MaliciousSpec::new(0);
        spec.arm = ArmAttack::FixedArm(2);
        let s = ParticipantState::new(ParticipantId(0), Role::Malicious(spec), keygen(0), 4);
        let mut rng = stream();
        assert!((1..50).all(|t| select_arm(&s, t, &params(4, 12), &mut rng) == 2));

        spec.arm = ArmAttack::UniformRandom;
        let s = ParticipantState::new(ParticipantId(0), Role::Malicious(spec), keygen(0), 4);
        let mut hist = [0usize; 4];
        for t in 1..=10_000 {
            hist[select_arm(&s, t, &params(4, 12), &mut rng)] += 1;
        }
        for h in hist {
            assert!((h as f64 / 10_000.0 - 0.25).abs() < 0.02, "{hist:?}");
        }
    }

    #[test]
    fn mimic_attacker_matches_honest_twin() {
        let spec = MaliciousSpec::new(0).with_consensus(ConsensusAttack::Equivocate);
        let mut a = honest(3);
        let mut b = ParticipantState::new(ParticipantId(0), Role::Malicious(spec), keygen(0), 3);
        let p = params(3, 9);
        let mut rng = stream();
        for t in 1..200u64 {
            let arm_a = select_arm(&a, t, &p, &mut rng);
            let arm_b = select_arm(&b, t, &p, &mut rng);
            assert_eq!(arm_a, arm_b);
            let r = ((t * 7) % 3) as f64 / 2.0;
            let d = deliver(r, vec![0.2, 0.5, 0.4]);
            apply_delivery(&mut a, &d, arm_a, t, 9, &mut rng);
            apply_delivery(&mut b, &d, arm_b, t, 9, &mut rng);
        }
    }

    #[test]
    fn shift_clamps() {
        let spec = MaliciousSpec::new(0).with_estimator(EstimatorAttack::ConstantShift(0.3));
        let mut s = ParticipantState::new(ParticipantId(0), Role::Malicious(spec), keygen(0), 2);
        s.local_means = vec![0.4, 0.7];
        let b = broadcast_estimators(&s, &mut stream());
        assert!((b[0] - 0.7).abs() < 1e-12 && (b[1] - 1.0).abs() < 1e-12);
        s.local_means = vec![1.9, 0.0];
        let spec = MaliciousSpec::new(0).with_estimator(EstimatorAttack::ConstantShift(0.3));
        s.role = Role::Malicious(spec);
        assert_eq!(broadcast_estimators(&s, &mut stream())[0], 2.0);
    }

    #[test]
    fn contamination_mixture_mean() {
        let spec = MaliciousSpec::new(0).with_estimator(EstimatorAttack::EpsilonContamination {
            epsilon: 0.5,
            q: ContaminationLaw::Constant(1.0),
        });
        let mut s = ParticipantState::new(ParticipantId(0), Role::Malicious(spec), keygen(0), 1);
        let env = crate::env::Environment::new(&[0.4], crate::config::ArmFamily::Bernoulli);
        let mut rewards = RngStream::new(2, StreamId::Rewards(ParticipantId(0)));
        let mut rng = stream();
        for t in 1..=100_000 {
            let r = env.draw_reward(0, &mut rewards).unwrap();
            apply_delivery(&mut s, &deliver(r, vec![0.0]), 0, t, 10, &mut rng);
        }
        let b = broadcast_estimators(&s, &mut rng)[0];
        assert!((b - 0.7).abs() < 0.01, "{b}");
        assert!((s.local_means[0] - 0.4).abs() < 0.01);
    }

    #[test]
    fn delivery_updates() {
        let mut s = honest(2);
        s.counts = vec![4, 0];
        s.local_means = vec![0.5, 0.0];
        let mut rng = stream();
        let nothing = Delivery {
            recipient: ParticipantId(0),
            payload: Payload::Nothing,
        };
        apply_delivery(&mut s, &nothing, 0, 30, 10, &mut rng);
        assert_eq!(s.counts, vec![4, 0]);
        assert_eq!(s.global, s.local_means);
        assert!(!s.ucb_ready);

        apply_delivery(&mut s, &deliver(1.0, vec![0.3, 0.9]), 0, 31, 10, &mut rng);
        assert_eq!(s.counts, vec![5, 0]);
        assert!((s.local_means[0] - 0.6).abs() < 1e-12);
        assert_eq!(s.global, vec![0.3, 0.9]);
        assert!(s.ucb_ready);
    }

    #[test]
    fn worst_arm_boost() {
        let spec = MaliciousSpec::new(0).with_estimator(EstimatorAttack::WorstArmBoost);
        let mut s = ParticipantState::new(ParticipantId(0), Role::Malicious(spec), keygen(0), 3);
        s.local_means = vec![0.5, 0.1, 0.9];
        assert_eq!(broadcast_estimators(&s, &mut stream()), vec![0.5, 1.0, 0.9]);
    }
}
