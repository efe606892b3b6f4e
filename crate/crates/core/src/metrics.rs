//! Regret, pseudo-regret and cost accounting, plus log-T diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("step {got} recorded after step {last}")]
    OutOfOrder { got: u64, last: u64 },
    #[error("regret diagnostics need at least 3 horizons, got {0}")]
    TooFewPoints(usize),
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub b_t: u8,
    pub c_t: f64,
    /// Mean raw reward over honest participants (0 when `b_t = 0`).
    pub mean_honest_reward: f64,
    pub cumulative_regret: f64,
    pub trusted_size: usize,
    pub blocklist_size: usize,
    /// Position of the successful commander, empty when consensus failed.
    pub commander_index: Option<usize>,
}

pub const CSV_HEADER: &str = "t,b_t,c_t,mean_honest_reward,cumulative_regret,trusted_size,blocklist_size,commander_index";

impl StepRecord {
    pub fn csv_row(&self) -> String {
        let ci = self.commander_index.map(|c| c.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t,
            self.b_t,
            self.c_t,
            self.mean_honest_reward,
            self.cumulative_regret,
            self.trusted_size,
            self.blocklist_size,
            ci
        )
    }
}

/// What the round driver reports for one step.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub t: u64,
    pub approved: bool,
    pub cost: f64,
    /// Pulled arm of every honest participant.
    pub honest_arms: &'a [usize],
    /// Full reward vector drawn for every honest participant.
    pub honest_rewards: &'a [Vec<f64>],
    pub trusted_size: usize,
    pub blocklist_size: usize,
    pub commander_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    num_arms: usize,
    last_t: u64,
    /// `Σ_H Σ_t r·1_{b_t=1}` over pulled arms.
    pub reward: f64,
    pub cost: f64,
    /// Per arm, `Σ_H Σ_t r_i·1_{b_t=1}` over the counterfactual draws.
    pub arm_sums: Vec<f64>,
    /// Honest pulls per arm over approved steps.
    pub pulls: Vec<u64>,
    pub approvals: u64,
    pub steps: u64,
    pub honest: usize,
    pub records: Vec<StepRecord>,
    keep_records: bool,
}

impl RegretLedger {
    pub fn new(num_arms: usize, honest: usize, keep_records: bool) -> Self {
        Self {
            num_arms,
            last_t: 0,
            reward: 0.0,
            cost: 0.0,
            arm_sums: vec![0.0; num_arms],
            pulls: vec![0; num_arms],
            approvals: 0,
            steps: 0,
            honest,
            records: Vec::new(),
            keep_records,
        }
    }

    /// `r_T = Σ_H Σ_t r·1_{b_t=1} − Σ_t c_t`.
    pub fn received(&self) -> f64 {
        self.reward - self.cost
    }

    /// `R_T = max_i Σ_H Σ_t r_i·1_{b_t=1} − r_T`.
    pub fn regret(&self) -> f64 {
        let best = self.arm_sums.iter().copied().fold(0.0, f64::max);
        best - self.received()
    }

    pub fn record_step(&mut self, step: StepInput<'_>) -> Result<&StepRecord, MetricsError> {
        if step.t <= self.last_t {
            return Err(MetricsError::OutOfOrder {
                got: step.t,
                last: self.last_t,
            });
        }
        self.last_t = step.t;
        self.steps += 1;
        let mut step_reward = 0.0;
        if step.approved {
            self.approvals += 1;
            for (&a, rewards) in step.honest_arms.iter().zip(step.honest_rewards) {
                step_reward += rewards[a];
                self.pulls[a] += 1;
                for (s, r) in self.arm_sums.iter_mut().zip(rewards) {
                    *s += r;
                }
            }
            self.reward += step_reward;
            self.cost += step.cost;
        }
        let mean_honest_reward = if step.honest_arms.is_empty() {
            0.0
        } else {
            step_reward / step.honest_arms.len() as f64
        };
        let record = StepRecord {
            t: step.t,
            b_t: step.approved as u8,
            c_t: if step.approved { step.cost } else { 0.0 },
            mean_honest_reward,
            cumulative_regret: self.regret(),
            trusted_size: step.trusted_size,
            blocklist_size: step.blocklist_size,
            commander_index: step.commander_index,
        };
        if self.keep_records {
            self.records.push(record);
        } else {
            self.records.clear();
            self.records.push(record);
        }
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn finalize(&self, arm_means: &[f64]) -> Summary {
        let best = arm_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (regret, pseudo) = if self.steps == 0 {
            (0.0, 0.0)
        } else {
            (
                self.regret(),
                self.honest as f64 * self.steps as f64 * best - self.received(),
            )
        };
        Summary {
            horizon: self.steps,
            regret,
            pseudo_regret: pseudo,
            received: self.received(),
            total_cost: self.cost,
            approvals: self.approvals,
            approval_rate: if self.steps == 0 {
                0.0
            } else {
                self.approvals as f64 / self.steps as f64
            },
            pulls: self.pulls.clone(),
            gaps: arm_means.iter().map(|m| best - m).collect(),
        }
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub horizon: u64,
    pub regret: f64,
    pub pseudo_regret: f64,
    pub received: f64,
    pub total_cost: f64,
    pub approvals: u64,
    pub approval_rate: f64,
    /// Honest pulls per arm.
    pub pulls: Vec<u64>,
    pub gaps: Vec<f64>,
}

/// Mean and standard error of `R_T` at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonPoint {
    pub horizon: u64,
    pub mean: f64,
    pub stderr: f64,
}

impl HorizonPoint {
    pub fn from_samples(horizon: u64, samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let stderr = if samples.len() > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { horizon, mean, stderr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    LogConsistent,
    SuperLog,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::LogConsistent => "log-consistent",
            Verdict::SuperLog => "super-log",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub points: Vec<HorizonPoint>,
    /// `mean R_T / ln T` per horizon.
    pub ratios: Vec<f64>,
    /// Relative change of the ratio between the two largest horizons.
    pub last_ratio_change: f64,
    pub increments_non_increasing: bool,
    pub verdict: Verdict,
}

/// Ratio tolerance between the two largest horizons.
pub const RATIO_TOLERANCE: f64 = 0.25;

/// Log-consistent iff the last two `R_T/ln T` ratios agree within 25% and
/// successive increments never grow by more than one combined stderr.
pub fn regret_diagnostics(points: &[HorizonPoint]) -> Result<Diagnostics, MetricsError> {
    if points.len() < 3 {
        return Err(MetricsError::TooFewPoints(points.len()));
    }
    let mut points = points.to_vec();
    points.sort_by_key(|p| p.horizon);
    let ratios: Vec<f64> = points.iter().map(|p| p.mean / (p.horizon as f64).ln()).collect();
    let n = ratios.len();
    let last_ratio_change = (ratios[n - 1] - ratios[n - 2]).abs() / ratios[n - 2].abs();
    let increments: Vec<(f64, f64)> = points
        .windows(2)
        .map(|w| (w[1].mean - w[0].mean, w[1].stderr.hypot(w[0].stderr)))
        .collect();
    let increments_non_increasing = increments
        .windows(2)
        .all(|w| w[1].0 - w[0].0 <= w[0].1.hypot(w[1].1));
    let verdict = if last_ratio_change <= RATIO_TOLERANCE && increments_non_increasing {
        Verdict::LogConsistent
    } else {
        Verdict::SuperLog
    };
    Ok(Diagnostics {
        points,
        ratios,
        last_ratio_change,
        increments_non_increasing,
        verdict,
    })
}
