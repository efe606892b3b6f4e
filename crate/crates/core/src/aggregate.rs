//! Filter set `A_t`, trusted set `B_t`, blocklist `D_t` and safe-zone set `C_t`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::AggregationOption;
use crate::crypto::{Hash32, PublicKeyRing, SignedMessage};
use crate::mpc::ComparisonOracle;
use crate::ParticipantId;

/// Per-arm surviving members and the estimator values they broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustedSet {
    pub per_arm: Vec<Vec<(ParticipantId, f64)>>,
}

impl TrustedSet {
    /// Flattened membership, sorted and deduplicated.
    pub fn members(&self) -> Vec<ParticipantId> {
        let mut ids: Vec<ParticipantId> = self.per_arm.iter().flatten().map(|(id, _)| *id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn is_empty(&self) -> bool {
        self.per_arm.iter().all(|a| a.is_empty())
    }

    /// Per-arm mean of the member values; `INFINITY` for an empty arm.
    pub fn means(&self) -> Vec<f64> {
        self.per_arm
            .iter()
            .map(|arm| {
                if arm.is_empty() {
                    f64::INFINITY
                } else {
                    arm.iter().map(|(_, v)| v).sum::<f64>() / arm.len() as f64
                }
            })
            .collect()
    }
}

/// What a validator proposes as `B_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    /// The consensus default value.
    Empty,
    /// Burn-in block: records only the round-robin arm.
    Placeholder { arm: usize },
    Trusted(TrustedSet),
}

impl Proposal {
    /// Canonical byte encoding; equal proposals encode equally.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Proposal::Empty => out.push(0),
            Proposal::Placeholder { arm } => {
                out.push(1);
                out.extend_from_slice(&(*arm as u64).to_le_bytes());
            }
            Proposal::Trusted(set) => {
                out.push(2);
                out.extend_from_slice(&(set.per_arm.len() as u64).to_le_bytes());
                for arm in &set.per_arm {
                    out.extend_from_slice(&(arm.len() as u64).to_le_bytes());
                    for (id, v) in arm {
                        out.extend_from_slice(&id.0.to_le_bytes());
                        out.extend_from_slice(&v.to_bits().to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn digest(&self) -> Hash32 {
        Hash32::of(&self.to_bytes())
    }

    pub fn members(&self) -> Vec<ParticipantId> {
        match self {
            Proposal::Trusted(set) => set.members(),
            _ => Vec::new(),
        }
    }
}

/// `A_t^j` for querier `j`; empty during burn-in.
pub fn build_filter_set(oracle: &ComparisonOracle, querier: ParticipantId, t: u64) -> Vec<ParticipantId> {
    oracle.filter_set(querier, t)
}

/// Sorts `(id, value)` pairs by value, ties by id, and drops `trim` from each end.
pub fn trim_arm(mut values: Vec<(ParticipantId, f64)>, trim: usize) -> Vec<(ParticipantId, f64)> {
    values.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    if values.len() <= 2 * trim {
        return Vec::new();
    }
    let mut kept: Vec<(ParticipantId, f64)> = values[trim..values.len() - trim].to_vec();
    kept.sort_by_key(|(id, _)| *id);
    kept
}

/// Inputs shared by every validator's trusted-set computation at one step.
#[derive(Debug, Clone, Copy)]
pub struct TrimParams {
    pub option: AggregationOption,
    pub f: usize,
    pub t: u64,
    pub burn_in: u64,
    pub num_arms: usize,
}

/// Builds the proposal for `B_t`.
///
/// Option 1 trims `f` per side only when `|A| > 2f` and otherwise yields
/// the burn-in placeholder. Options 2 and 3 always trim after burn-in; when
/// `|A| ≤ 2f` the per-side trim is capped at `⌊(|A| − 1)/2⌋` so that the
/// middle of the pool survives. Option 3 removes blocklisted ids from the
/// pool before trimming.
pub fn build_trusted_set(
    params: TrimParams,
    filter: &[ParticipantId],
    broadcasts: &[Vec<f64>],
    blocklist: &Blocklist,
) -> Proposal {
    let placeholder = Proposal::Placeholder {
        arm: (params.t % params.num_arms as u64) as usize,
    };
    if params.t <= params.burn_in {
        return placeholder;
    }
    let pool: Vec<ParticipantId> = match params.option {
        AggregationOption::Option3 => filter.iter().copied().filter(|id| !blocklist.contains(*id)).collect(),
        _ => filter.to_vec(),
    };
    let n = pool.len();
    let trim = match params.option {
        AggregationOption::Option1 => {
            if n <= 2 * params.f {
                return placeholder;
            }
            params.f
        }
        AggregationOption::Option2 | AggregationOption::Option3 => {
            if n > 2 * params.f {
                params.f
            } else {
                n.saturating_sub(1) / 2
            }
        }
    };
    let per_arm = (0..params.num_arms)
        .map(|i| {
            let values = pool.iter().map(|&id| (id, broadcasts[id.0 as usize][i])).collect();
            trim_arm(values, trim)
        })
        .collect();
    Proposal::Trusted(TrustedSet { per_arm })
}

/// Two verifying chains from one originator with different payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub first: SignedMessage,
    pub second: SignedMessage,
}

impl Evidence {
    pub fn accused(&self) -> Option<ParticipantId> {
        self.first.originator()
    }

    pub fn is_valid(&self, ring: &PublicKeyRing) -> bool {
        self.first.originator().is_some()
            && self.first.originator() == self.second.originator()
            && self.first.payload != self.second.payload
            && self.first.verify(ring)
            && self.second.verify(ring)
    }
}

/// `D_t` with the evidence that put each id there.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Blocklist {
    entries: BTreeMap<ParticipantId, Evidence>,
}

impl Blocklist {
    pub fn contains(&self, id: ParticipantId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParticipantId> + '_ {
        self.entries.keys().copied()
    }

    pub fn evidence(&self, id: ParticipantId) -> Option<&Evidence> {
        self.entries.get(&id)
    }

    /// Adds every accused id whose evidence verifies. Returns how many
    /// records were rejected.
    pub fn update(&mut self, evidence: &[Evidence], ring: &PublicKeyRing) -> usize {
        let mut rejected = 0;
        for ev in evidence {
            match ev.accused() {
                Some(id) if ev.is_valid(ring) => {
                    self.entries.entry(id).or_insert_with(|| ev.clone());
                }
                _ => rejected += 1,
            }
        }
        rejected
    }
}

/// `C_t`: candidates within `ε/2` of `ĥμ` on every arm.
pub fn build_safe_zone_set(
    trimmed_mean: &[f64],
    broadcasts: &[Vec<f64>],
    candidates: &[ParticipantId],
    epsilon: f64,
) -> Vec<ParticipantId> {
    candidates
        .iter()
        .copied()
        .filter(|id| {
            broadcasts[id.0 as usize]
                .iter()
                .zip(trimmed_mean)
                .all(|(&b, &h)| (h - b).abs() <= epsilon / 2.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;

    fn ids(v: &[u32]) -> Vec<ParticipantId> {
        v.iter().map(|&i| ParticipantId(i)).collect()
    }

    fn params(option: AggregationOption, f: usize) -> TrimParams {
        TrimParams {
            option,
            f,
            t: 100,
            burn_in: 10,
            num_arms: 1,
        }
    }

    fn example() -> Vec<Vec<f64>> {
        vec![vec![0.1], vec![0.5], vec![0.55], vec![0.6], vec![0.9]]
    }

    fn arm0(p: &Proposal) -> Vec<u32> {
        match p {
            Proposal::Trusted(s) => s.per_arm[0].iter().map(|(id, _)| id.0).collect(),
            other => panic!("expected trusted set, got {other:?}"),
        }
    }

    #[test]
    fn trims_extremes() {
        let a = ids(&[0, 1, 2, 3, 4]);
        let p = build_trusted_set(params(AggregationOption::Option1, 1), &a, &example(), &Blocklist::default());
        assert_eq!(arm0(&p), vec![1, 2, 3]);
        let p = build_trusted_set(params(AggregationOption::Option2, 0), &a, &example(), &Blocklist::default());
        assert_eq!(arm0(&p), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn option3_drops_blocklisted() {
        let keys: Vec<_> = (0..5).map(keygen).collect();
        let ring = PublicKeyRing::new(keys.iter().map(|k| k.public).collect());
        let a = SignedMessage::originate(Hash32::of(b"a"), ParticipantId(3), &keys[3]);
        let b = SignedMessage::originate(Hash32::of(b"b"), ParticipantId(3), &keys[3]);
        let mut d = Blocklist::default();
        assert_eq!(d.update(&[Evidence { first: a, second: b }], &ring), 0);
        let p = build_trusted_set(
            params(AggregationOption::Option3, 1),
            &ids(&[0, 1, 2, 3, 4]),
            &example(),
            &d,
        );
        assert_eq!(arm0(&p), vec![1, 2]);
    }

    #[test]
    fn forged_evidence_is_rejected() {
        let keys: Vec<_> = (0..3).map(keygen).collect();
        let ring = PublicKeyRing::new(keys.iter().map(|k| k.public).collect());
        let a = SignedMessage::originate(Hash32::of(b"a"), ParticipantId(1), &keys[1]);
        // Signed by 2 but attributed to 1.
        let mut b = SignedMessage::originate(Hash32::of(b"b"), ParticipantId(2), &keys[2]);
        b.links[0].0 = ParticipantId(1);
        let mut d = Blocklist::default();
        assert_eq!(d.update(&[Evidence { first: a.clone(), second: b }], &ring), 1);
        assert!(d.is_empty());
        // Same payload twice is not equivocation.
        assert_eq!(d.update(&[Evidence { first: a.clone(), second: a }], &ring), 1);
        assert!(d.is_empty());
    }

    #[test]
    fn option1_gate_and_burn_in_yield_placeholder() {
        let a = ids(&[0, 1, 2, 3, 4]);
        let p = build_trusted_set(params(AggregationOption::Option1, 3), &a, &example(), &Blocklist::default());
        assert_eq!(p, Proposal::Placeholder { arm: 0 });
        let mut early = params(AggregationOption::Option2, 1);
        early.t = 7;
        early.num_arms = 3;
        let p = build_trusted_set(early, &a, &example(), &Blocklist::default());
        assert_eq!(p, Proposal::Placeholder { arm: 1 });
    }

    #[test]
    fn capped_trim_keeps_middle() {
        let a = ids(&[0, 1, 2, 3, 4]);
        let p = build_trusted_set(params(AggregationOption::Option2, 3), &a, &example(), &Blocklist::default());
        assert_eq!(arm0(&p), vec![2]);
        let p = build_trusted_set(params(AggregationOption::Option2, 3), &a[..4], &example(), &Blocklist::default());
        assert_eq!(arm0(&p), vec![1, 2]);
    }

    #[test]
    fn safe_zone_examples() {
        let b = vec![vec![0.55], vec![0.62]];
        assert_eq!(build_safe_zone_set(&[0.5], &b, &ids(&[0, 1]), 0.2), ids(&[0]));
    }

    #[test]
    fn proposal_bytes_distinguish_variants() {
        let a = Proposal::Placeholder { arm: 0 }.digest();
        let b = Proposal::Empty.digest();
        let c = Proposal::Trusted(TrustedSet { per_arm: vec![vec![]] }).digest();
        assert!(a != b && b != c && a != c);
    }
}
