//! Threshold comparisons over private pull counts.
//!
//! Stands in for a secure multi-party computation: the oracle is sealed
//! with every participant's reported count vector and answers only
//! membership booleans and the per-arm thresholds `k_i(t)`.

use thiserror::Error;

use crate::ParticipantId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MpcError {
    #[error("comparisons are only defined after burn-in (t = {t}, L = {burn_in})")]
    DuringBurnIn { t: u64, burn_in: u64 },
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
}

#[derive(Clone)]
pub struct ComparisonOracle {
    counts: Vec<Vec<u64>>,
    num_arms: usize,
    burn_in: u64,
    /// Per arm: `max(L, max_k n_{k,i}·K)`, i.e. `L·k_i(t)`.
    scaled_threshold: Vec<u128>,
}

impl std::fmt::Debug for ComparisonOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ComparisonOracle")
            .field("participants", &self.counts.len())
            .field("num_arms", &self.num_arms)
            .finish_non_exhaustive()
    }
}

impl ComparisonOracle {
    /// `reported[m]` is the count vector participant `m` submitted.
    pub fn seal(reported: Vec<Vec<u64>>, num_arms: usize, burn_in: u64) -> Self {
        let scaled_threshold = (0..num_arms)
            .map(|i| {
                let max = reported.iter().map(|c| c[i]).max().unwrap_or(0) as u128;
                (max * num_arms as u128).max(burn_in as u128)
            })
            .collect();
        Self {
            counts: reported,
            num_arms,
            burn_in,
            scaled_threshold,
        }
    }

    fn check(&self, t: u64) -> Result<(), MpcError> {
        if t <= self.burn_in {
            Err(MpcError::DuringBurnIn { t, burn_in: self.burn_in })
        } else {
            Ok(())
        }
    }

    /// `k_i(t) = max(1, max_k n_{k,i}(t)·K/L)`.
    pub fn threshold(&self, t: u64) -> Result<Vec<f64>, MpcError> {
        self.check(t)?;
        Ok(self
            .scaled_threshold
            .iter()
            .map(|&s| s as f64 / self.burn_in as f64)
            .collect())
    }

    /// `k_i·n_{m,i} ≥ n_{j,i}` for every arm, evaluated in exact integers.
    pub fn membership(&self, candidate: ParticipantId, querier: ParticipantId, t: u64) -> Result<bool, MpcError> {
        self.check(t)?;
        let m = self
            .counts
            .get(candidate.0 as usize)
            .ok_or(MpcError::UnknownParticipant(candidate))?;
        let j = self
            .counts
            .get(querier.0 as usize)
            .ok_or(MpcError::UnknownParticipant(querier))?;
        let l = self.burn_in as u128;
        Ok((0..self.num_arms).all(|i| m[i] as u128 * self.scaled_threshold[i] >= j[i] as u128 * l))
    }

    /// `A_t^j`: every candidate passing the querier's comparison.
    pub fn filter_set(&self, querier: ParticipantId, t: u64) -> Vec<ParticipantId> {
        if t <= self.burn_in {
            return Vec::new();
        }
        (0..self.counts.len() as u32)
            .map(ParticipantId)
            .filter(|&m| self.membership(m, querier, t).unwrap_or(false))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let o = ComparisonOracle::seal(vec![vec![5, 5, 5]; 3], 3, 15);
        assert_eq!(o.threshold(16).unwrap(), vec![1.0, 1.0, 1.0]);
        let o = ComparisonOracle::seal(vec![vec![10, 10], vec![5, 5]], 2, 10);
        assert_eq!(o.threshold(11).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn burn_in_queries_fail() {
        let o = ComparisonOracle::seal(vec![vec![1, 1]], 2, 10);
        assert!(o.threshold(10).is_err());
        assert!(o.membership(ParticipantId(0), ParticipantId(0), 3).is_err());
        assert!(o.filter_set(ParticipantId(0), 3).is_empty());
    }

    #[test]
    fn self_membership_and_zero_count() {
        let o = ComparisonOracle::seal(vec![vec![7, 6], vec![7, 0]], 2, 12);
        assert!(o.membership(ParticipantId(0), ParticipantId(0), 13).unwrap());
        assert!(!o.membership(ParticipantId(1), ParticipantId(0), 13).unwrap());
    }

    #[test]
    fn equal_round_robin_counts_admit_everyone() {
        let o = ComparisonOracle::seal(vec![vec![4, 4, 4]; 5], 3, 12);
        assert_eq!(o.filter_set(ParticipantId(2), 13).len(), 5);
    }
}
