//! Reward generation, the cost mechanism and reward distribution.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ArmFamily, CostMechanism};
use crate::rng::RngStream;
use crate::ParticipantId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("arm {arm} out of range for {num_arms} arms")]
    ArmOutOfRange { arm: usize, num_arms: usize },
    #[error("distance-based cost needs a finite global estimate, arm {0} is infinite")]
    InfiniteEstimate(usize),
}

/// Reward law of one arm.
///
/// The truncated Gaussian is truncated symmetrically to
/// `[μ − d, μ + d]` with `d = min(μ, 1 − μ)`, which keeps every draw in
/// `[0, 1]` and keeps the mean exactly `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmDistribution {
    pub mean: f64,
    pub family: ArmFamily,
}

impl ArmDistribution {
    pub fn draw(&self, stream: &mut RngStream) -> f64 {
        match self.family {
            ArmFamily::Bernoulli => {
                if stream.unit() < self.mean {
                    1.0
                } else {
                    0.0
                }
            }
            ArmFamily::TruncatedGaussian(var) => {
                let d = self.mean.min(1.0 - self.mean);
                if d <= 0.0 {
                    return self.mean;
                }
                let normal = Normal::new(self.mean, var.sqrt()).expect("variance validated positive");
                for _ in 0..64 {
                    let x = normal.sample(stream);
                    if (x - self.mean).abs() <= d {
                        return x;
                    }
                }
                // Window far narrower than σ: the law is close to uniform on it.
                self.mean + d * (2.0 * stream.unit() - 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    arms: Vec<ArmDistribution>,
}

impl Environment {
    pub fn new(means: &[f64], family: ArmFamily) -> Self {
        Self {
            arms: means.iter().map(|&mean| ArmDistribution { mean, family }).collect(),
        }
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arm(&self, i: usize) -> &ArmDistribution {
        &self.arms[i]
    }

    pub fn draw_reward(&self, arm: usize, stream: &mut RngStream) -> Result<f64, EnvError> {
        self.arms
            .get(arm)
            .map(|a| a.draw(stream))
            .ok_or(EnvError::ArmOutOfRange {
                arm,
                num_arms: self.arms.len(),
            })
    }

    /// One draw for every arm, in arm order.
    pub fn draw_all(&self, stream: &mut RngStream, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.arms.iter().map(|a| a.draw(stream)));
    }
}

/// Per-step cost `c_t` for an approved block.
///
/// `contributors_malicious` says whether any estimate that entered the
/// global estimate came from a malicious participant.
pub fn compute_cost(
    mechanism: CostMechanism,
    global: &[f64],
    arm_means: &[f64],
    contributors_malicious: bool,
) -> Result<f64, EnvError> {
    match mechanism {
        CostMechanism::Constant(c) => Ok(if contributors_malicious { c } else { 0.0 }),
        CostMechanism::DistanceBased => {
            let mut best = f64::INFINITY;
            for (i, (&g, &mu)) in global.iter().zip(arm_means).enumerate() {
                if !g.is_finite() {
                    return Err(EnvError::InfiniteEstimate(i));
                }
                best = best.min((g - mu).abs().powi(6));
            }
            Ok(best)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Nothing,
    RewardAndGlobal {
        /// Cost-adjusted reward.
        reward: f64,
        /// Reward before the cost adjustment.
        raw_reward: f64,
        global: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub recipient: ParticipantId,
    pub payload: Payload,
}

/// Distributes rewards for one step. `rewards[m]` is participant `m`'s raw
/// reward for the arm it pulled; `honest[m]` its role.
pub fn operate(
    global: &[f64],
    rewards: &[f64],
    honest: &[bool],
    approved: bool,
    cost: f64,
    contributors_malicious: bool,
) -> Vec<Delivery> {
    rewards
        .iter()
        .zip(honest)
        .enumerate()
        .map(|(m, (&r, &is_honest))| {
            let payload = if !approved {
                Payload::Nothing
            } else {
                let adj = match (contributors_malicious, is_honest) {
                    (false, _) => 0.0,
                    (true, true) => -cost,
                    (true, false) => cost,
                };
                Payload::RewardAndGlobal {
                    reward: r + adj,
                    raw_reward: r,
                    global: global.to_vec(),
                }
            };
            Delivery {
                recipient: ParticipantId(m as u32),
                payload,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    fn stream() -> RngStream {
        RngStream::new(5, StreamId::Rewards(ParticipantId(0)))
    }

    #[test]
    fn degenerate_bernoulli() {
        let env = Environment::new(&[1.0, 0.0], ArmFamily::Bernoulli);
        let mut s = stream();
        for _ in 0..100 {
            assert_eq!(env.draw_reward(0, &mut s).unwrap(), 1.0);
            assert_eq!(env.draw_reward(1, &mut s).unwrap(), 0.0);
        }
    }

    #[test]
    fn bernoulli_sample_mean() {
        let env = Environment::new(&[0.6], ArmFamily::Bernoulli);
        let mut s = stream();
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| env.draw_reward(0, &mut s).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.6).abs() < 0.005, "{mean}");
    }

    #[test]
    fn truncated_gaussian_in_unit_interval_and_unbiased() {
        for mu in [0.0, 0.05, 0.5, 0.9, 1.0] {
            let arm = ArmDistribution {
                mean: mu,
                family: ArmFamily::TruncatedGaussian(0.01),
            };
            let mut s = stream();
            let n = 100_000;
            let mut sum = 0.0;
            for _ in 0..n {
                let x = arm.draw(&mut s);
                assert!((0.0..=1.0).contains(&x));
                sum += x;
            }
            let tol = 3.0 * 0.1 / (n as f64).sqrt();
            assert!((sum / n as f64 - mu).abs() <= tol, "mu {mu} mean {}", sum / n as f64);
        }
    }

    #[test]
    fn arm_out_of_range() {
        let env = Environment::new(&[0.5], ArmFamily::Bernoulli);
        assert!(matches!(env.draw_reward(3, &mut stream()), Err(EnvError::ArmOutOfRange { .. })));
    }

    #[test]
    fn distance_cost_examples() {
        let mu = [0.5, 0.3];
        assert_eq!(compute_cost(CostMechanism::DistanceBased, &mu, &mu, true).unwrap(), 0.0);
        let c = compute_cost(CostMechanism::DistanceBased, &[0.6, 0.0], &mu, false).unwrap();
        assert!((c - 1e-6).abs() < 1e-15);
        assert!(compute_cost(CostMechanism::DistanceBased, &[f64::INFINITY, 0.3], &mu, false).is_err());
    }

    #[test]
    fn constant_cost_depends_on_contributors() {
        let c = CostMechanism::Constant(0.3);
        assert_eq!(compute_cost(c, &[0.5], &[0.5], true).unwrap(), 0.3);
        assert_eq!(compute_cost(c, &[0.5], &[0.5], false).unwrap(), 0.0);
    }

    #[test]
    fn operate_cases() {
        let honest = [true, true, false];
        let rewards = [0.7, 0.7, 0.4];
        let none = operate(&[0.5], &rewards, &honest, false, 0.2, true);
        assert!(none.iter().all(|d| d.payload == Payload::Nothing));

        let clean = operate(&[0.5], &rewards, &honest, true, 0.0, false);
        assert!(matches!(clean[1].payload, Payload::RewardAndGlobal { reward, .. } if reward == 0.7));

        let tainted = operate(&[0.5], &rewards, &honest, true, 0.2, true);
        let got: Vec<f64> = tainted
            .iter()
            .map(|d| match &d.payload {
                Payload::RewardAndGlobal { reward, .. } => *reward,
                Payload::Nothing => f64::NAN,
            })
            .collect();
        assert!((got[0] - 0.5).abs() < 1e-12 && (got[2] - 0.6).abs() < 1e-12);
    }
}
