//! Named scenarios for the analytical regimes, plus their regime checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{
    AggregationOption, ArmFamily, CommanderProtocol, ConsensusAttack, ContaminationLaw, CostMechanism,
    EstimatorAttack, MaliciousSpec, ScenarioConfig, ScenarioDoc, UpdateRule, ValidatorProtocol, BETA_HALF,
    BETA_SIXTH,
};
use crate::error::ConfigError;
use crate::ParticipantId;

/// Arm means shared by every preset. Smallest gap is 0.2.
pub const PRESET_MEANS: [f64; 5] = [0.9, 0.7, 0.5, 0.3, 0.1];
pub const PRESET_PARTICIPANTS: usize = 12;
pub const PRESET_HORIZON: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "no-attack")]
    NoAttack,
    #[serde(rename = "theorem1")]
    Theorem1,
    #[serde(rename = "theorem2")]
    Theorem2,
    #[serde(rename = "theorem3")]
    Theorem3,
    #[serde(rename = "theorem4")]
    Theorem4,
    #[serde(rename = "theorem5")]
    Theorem5,
    #[serde(rename = "theorem6")]
    Theorem6,
    #[serde(rename = "theorem7")]
    Theorem7,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::NoAttack,
        Preset::Theorem1,
        Preset::Theorem2,
        Preset::Theorem3,
        Preset::Theorem4,
        Preset::Theorem5,
        Preset::Theorem6,
        Preset::Theorem7,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::NoAttack => "no-attack",
            Preset::Theorem1 => "theorem1",
            Preset::Theorem2 => "theorem2",
            Preset::Theorem3 => "theorem3",
            Preset::Theorem4 => "theorem4",
            Preset::Theorem5 => "theorem5",
            Preset::Theorem6 => "theorem6",
            Preset::Theorem7 => "theorem7",
        }
    }

    /// The preset as a partial document. Horizon-dependent values such as
    /// the burn-in length are left to resolution.
    pub fn document(&self) -> ScenarioDoc {
        let m = PRESET_PARTICIPANTS;
        let mut doc = ScenarioDoc {
            num_arms: Some(PRESET_MEANS.len()),
            horizon: Some(PRESET_HORIZON),
            num_participants: Some(m),
            arm_means: Some(PRESET_MEANS.to_vec()),
            arm_family: Some(ArmFamily::Bernoulli),
            master_seed: Some(1),
            ..ScenarioDoc::default()
        };
        let shift = |id: u32, d: f64| MaliciousSpec::new(id).with_estimator(EstimatorAttack::ConstantShift(d));
        let equivocator = |id: u32| MaliciousSpec::new(id).with_consensus(ConsensusAttack::Equivocate);
        let contaminate = |id: u32| {
            MaliciousSpec::new(id).with_estimator(EstimatorAttack::EpsilonContamination {
                epsilon: 0.5,
                q: ContaminationLaw::Constant(1.0),
            })
        };
        let malicious: Vec<MaliciousSpec> = match self {
            Preset::NoAttack => vec![],
            Preset::Theorem1 => [2, 6, 10]
                .iter()
                .map(|&id| shift(id, 1.5).with_consensus(ConsensusAttack::Equivocate))
                .collect(),
            Preset::Theorem2 => vec![
                shift(1, 1.5),
                shift(3, 1.5),
                shift(5, 1.5),
                shift(7, -1.5),
                shift(9, -1.5),
                shift(11, -1.5),
            ],
            Preset::Theorem3 => vec![
                shift(1, 1.5),
                shift(4, 1.5),
                shift(7, 1.5),
                equivocator(2),
                equivocator(5),
                shift(8, -1.5).with_consensus(ConsensusAttack::Equivocate),
                shift(11, -1.5).with_consensus(ConsensusAttack::Equivocate),
            ],
            Preset::Theorem4 | Preset::Theorem5 => vec![
                shift(1, 1.5),
                shift(4, 1.5),
                shift(7, -1.5),
                shift(10, -1.5),
                equivocator(2),
                equivocator(5),
                equivocator(8),
                equivocator(11),
            ],
            Preset::Theorem6 | Preset::Theorem7 => vec![
                contaminate(1),
                contaminate(4),
                contaminate(7),
                equivocator(2),
                equivocator(5),
                equivocator(8),
                equivocator(11),
            ],
        };
        let honest: Vec<ParticipantId> = (0..m as u32)
            .map(ParticipantId)
            .filter(|id| !malicious.iter().any(|s| s.id == *id))
            .collect();
        doc.f_known = Some(malicious.len());
        doc.honest = Some(honest.clone());
        doc.malicious = Some(malicious);

        match self {
            Preset::NoAttack | Preset::Theorem1 => {
                doc.ucb_beta = Some(BETA_HALF);
                doc.ucb_c1 = Some(1.0);
                doc.aggregation = Some(AggregationOption::Option1);
                doc.update_rule = Some(UpdateRule::Halving);
                if *self == Preset::Theorem1 {
                    doc.commanders = Some(CommanderProtocol::FixedCount(m / 3 + 1));
                }
            }
            _ => {
                doc.ucb_beta = Some(BETA_SIXTH);
                doc.ucb_c1 = Some(1e-4);
                doc.update_rule = Some(UpdateRule::Contraction);
                doc.cost = Some(CostMechanism::DistanceBased);
                doc.aggregation = Some(if *self == Preset::Theorem2 {
                    AggregationOption::Option2
                } else {
                    AggregationOption::Option3
                });
            }
        }
        if !matches!(self, Preset::NoAttack | Preset::Theorem1 | Preset::Theorem2) {
            // Every commander must get its turn for equivocators to be caught.
            doc.full_commander_iteration = Some(true);
        }
        match self {
            Preset::Theorem5 => doc.commanders = Some(CommanderProtocol::WeightedVrf(0.1)),
            Preset::Theorem6 | Preset::Theorem7 => {
                doc.update_rule = Some(UpdateRule::SafeZone);
                doc.arm_family = Some(ArmFamily::TruncatedGaussian(0.01));
                doc.epsilon = Some(0.3);
                if *self == Preset::Theorem7 {
                    doc.cost = Some(CostMechanism::Constant(0.5));
                    doc.validators = Some(ValidatorProtocol::ReputationTopN(honest.len()));
                }
            }
            _ => {}
        }
        doc
    }

    /// Enforces the attacker-count and protocol assumptions of the regime.
    pub fn check_regime(&self, cfg: &ScenarioConfig) -> Result<(), ConfigError> {
        let m = cfg.num_participants as f64;
        let h = cfg.honest_count();
        let a = cfg.malicious.len();
        let a1 = cfg.estimator_only_attackers();
        let a2 = cfg.consensus_attackers();
        let fail = |reason: String| {
            Err(ConfigError::Regime {
                preset: self.name().to_string(),
                reason,
            })
        };
        if cfg.f_known < a {
            return fail(format!("f_known = {} is below the {a} malicious participants", cfg.f_known));
        }
        match self {
            Preset::NoAttack => {
                if a != 0 {
                    return fail(format!("{a} malicious participants configured"));
                }
            }
            Preset::Theorem1 => {
                if a > cfg.num_participants / 3 {
                    return fail(format!("{a} malicious exceeds floor(M/3) = {}", cfg.num_participants / 3));
                }
            }
            Preset::Theorem2 => {
                if (h as f64) < m / 2.0 {
                    return fail(format!("{h} honest is below M/2"));
                }
                if a2 > 0 {
                    return fail("consensus attackers are not part of this regime".into());
                }
            }
            Preset::Theorem3 => {
                if (h as f64) < m / 4.0 {
                    return fail(format!("{h} honest is below M/4"));
                }
                if a1 + 1 >= h {
                    return fail(format!("estimator attackers {a1} must be below M_H - 1 = {}", h as i64 - 1));
                }
                if a2 as f64 >= m / 2.0 - 1.0 {
                    return fail(format!("consensus attackers {a2} must be below M/2 - 1"));
                }
            }
            Preset::Theorem4 | Preset::Theorem5 | Preset::Theorem6 | Preset::Theorem7 => {
                if a1 as f64 >= m / 2.0 - 1.0 {
                    return fail(format!("estimator attackers {a1} must be below M/2 - 1"));
                }
                if a2 as f64 >= m / 2.0 - 1.0 {
                    return fail(format!("consensus attackers {a2} must be below M/2 - 1"));
                }
                if cfg.malicious.iter().any(|s| s.attacks_consensus() && s.attacks_estimator()) {
                    return fail("consensus attackers must not also attack estimators".into());
                }
            }
        }
        let expect_option = match self {
            Preset::NoAttack | Preset::Theorem1 => AggregationOption::Option1,
            Preset::Theorem2 => AggregationOption::Option2,
            _ => AggregationOption::Option3,
        };
        if cfg.aggregation != expect_option {
            return fail(format!("aggregation must be {expect_option:?}"));
        }
        let beta_ok = match self {
            Preset::NoAttack | Preset::Theorem1 => (cfg.ucb_beta - BETA_HALF).abs() < 1e-12,
            _ => (cfg.ucb_beta - BETA_SIXTH).abs() < 1e-12,
        };
        if !beta_ok {
            return fail("exploration exponent does not match the regime".into());
        }
        let cost_ok = match self {
            Preset::NoAttack | Preset::Theorem1 | Preset::Theorem7 => matches!(cfg.cost, CostMechanism::Constant(_)),
            _ => cfg.cost == CostMechanism::DistanceBased,
        };
        if !cost_ok {
            return fail("cost mechanism does not match the regime".into());
        }
        Ok(())
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError::UnknownPreset(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_scenario;

    #[test]
    fn every_preset_resolves_and_round_trips() {
        for p in Preset::ALL {
            let cfg = load_scenario(&format!("preset = \"{p}\"")).unwrap().config;
            assert_eq!(cfg.preset, Some(p));
            let again = load_scenario(&cfg.to_toml()).unwrap().config;
            assert_eq!(again, cfg, "{p}");
        }
    }

    #[test]
    fn theorem1_accepts_four_malicious_of_twelve() {
        let doc = r#"
preset = "theorem1"
f = 4
[[malicious]]
id = 0
[[malicious]]
id = 1
[[malicious]]
id = 2
[[malicious]]
id = 3
"#;
        let honest: Vec<String> = (4..12).map(|i| i.to_string()).collect();
        let doc = format!("honest = [{}]\n{doc}", honest.join(", "));
        let cfg = load_scenario(&doc).unwrap().config;
        assert_eq!(cfg.malicious.len(), 4);
    }

    #[test]
    fn theorem1_rejects_five_malicious_of_twelve() {
        let mut doc = String::from("preset = \"theorem1\"\nf = 5\nhonest = [5, 6, 7, 8, 9, 10, 11]\n");
        for id in 0..5 {
            doc.push_str(&format!("[[malicious]]\nid = {id}\n"));
        }
        let err = load_scenario(&doc).unwrap_err();
        assert!(matches!(err, ConfigError::Regime { .. }), "{err}");
    }

    #[test]
    fn theorem3_enforces_estimator_attacker_bound() {
        // 5 estimator attackers against 5 honest breaks M_A^1 < M_H - 1.
        let mut doc = String::from("preset = \"theorem3\"\nhonest = [0, 1, 2, 3, 4]\nf = 7\n");
        for id in 5..10 {
            doc.push_str(&format!("[[malicious]]\nid = {id}\nestimator = {{ constant_shift = 1.0 }}\n"));
        }
        for id in 10..12 {
            doc.push_str(&format!("[[malicious]]\nid = {id}\nconsensus = \"equivocate\"\n"));
        }
        let err = load_scenario(&doc).unwrap_err();
        assert!(matches!(err, ConfigError::Regime { .. }), "{err}");
    }

    #[test]
    fn unknown_preset() {
        assert_eq!(
            load_scenario("preset = \"theorem9\"").unwrap_err(),
            ConfigError::UnknownPreset("theorem9".into())
        );
    }

    #[test]
    fn preset_horizon_override_moves_burn_in() {
        let short = load_scenario("preset = \"theorem2\"\nT = 2000").unwrap().config;
        let long = load_scenario("preset = \"theorem2\"\nT = 16000").unwrap().config;
        assert!(long.burn_in > short.burn_in);
    }
}
