//! Scenario configuration.
//!
//! A scenario is written as a TOML document whose keys are all optional
//! except the ones [`load_scenario`] reports as missing. Resolution fills
//! defaults, records each default in an audit list and validates the
//! result. A resolved [`ScenarioConfig`] serializes back to a document that
//! reparses to an equal config.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::preset::Preset;
use crate::rng::{RngStream, StreamId};
use crate::ParticipantId;

pub const BETA_HALF: f64 = 0.5;
pub const BETA_SIXTH: f64 = 1.0 / 6.0;
const BETA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmFamily {
    Bernoulli,
    /// Sub-Gaussian parameter σ². See [`crate::env::ArmDistribution`].
    TruncatedGaussian(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationOption {
    Option1,
    Option2,
    Option3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    Halving,
    Contraction,
    SafeZone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMechanism {
    Constant(f64),
    DistanceBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorProtocol {
    All,
    /// Sortition with a common inclusion probability.
    Vrf(f64),
    ReputationTopN(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommanderProtocol {
    AllSorted,
    FixedCount(usize),
    /// Trust-weighted sortition; the payload is the failure budget η.
    WeightedVrf(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationLaw {
    Constant(f64),
    Uniform,
    Bernoulli(f64),
}

impl ContaminationLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            ContaminationLaw::Constant(v) => v,
            ContaminationLaw::Uniform => 0.5,
            ContaminationLaw::Bernoulli(p) => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorAttack {
    #[default]
    None,
    EpsilonContamination {
        epsilon: f64,
        q: ContaminationLaw,
    },
    ConstantShift(f64),
    RandomNoise(f64),
    WorstArmBoost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusAttack {
    #[default]
    None,
    Equivocate,
    WrongForward,
    Silent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmAttack {
    #[default]
    None,
    FixedArm(usize),
    UniformRandom,
}

/// What a malicious participant submits to the comparison oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountReport {
    #[default]
    Truthful,
    /// Adds the payload to every true count.
    Inflate(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteBehavior {
    /// Vote exactly like an honest validator would.
    Protocol,
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReputationMap {
    Identity,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityForm {
    /// `−ε²·((Δμ − μ̃)²)²` penalty.
    Quartic,
    /// `−ε²·exp((Δμ − μ̃)²)` penalty.
    Exponential,
}

/// Denominator of the malicious commander weight `ln(|M_A|/η)/·`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustDenominator {
    BurnIn,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HonestPolicy {
    Ucb,
    /// Keeps pulling `t mod K` forever. Only useful as a negative control.
    RoundRobin,
}

/// Behaviour of one malicious participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaliciousSpec {
    pub id: ParticipantId,
    #[serde(default)]
    pub estimator: EstimatorAttack,
    #[serde(default)]
    pub consensus: ConsensusAttack,
    #[serde(default)]
    pub arm: ArmAttack,
    #[serde(default)]
    pub counts: CountReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote: Option<VoteBehavior>,
}

impl MaliciousSpec {
    pub fn new(id: u32) -> Self {
        Self {
            id: ParticipantId(id),
            estimator: EstimatorAttack::None,
            consensus: ConsensusAttack::None,
            arm: ArmAttack::None,
            counts: CountReport::Truthful,
            vote: None,
        }
    }

    pub fn with_estimator(mut self, attack: EstimatorAttack) -> Self {
        self.estimator = attack;
        self
    }

    pub fn with_consensus(mut self, attack: ConsensusAttack) -> Self {
        self.consensus = attack;
        self
    }

    /// Attacks the consensus protocol (M_A^2, including M_A^{2,1}).
    pub fn attacks_consensus(&self) -> bool {
        self.consensus != ConsensusAttack::None
    }

    pub fn attacks_estimator(&self) -> bool {
        self.estimator != EstimatorAttack::None
    }

    /// Consensus attackers vote 0 unless told otherwise; estimator-only
    /// attackers follow the voting rule.
    pub fn effective_vote(&self) -> VoteBehavior {
        self.vote.unwrap_or(if self.attacks_consensus() {
            VoteBehavior::Zero
        } else {
            VoteBehavior::Protocol
        })
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub preset: Option<Preset>,
    pub num_arms: usize,
    pub horizon: u64,
    pub num_participants: usize,
    pub honest: Vec<ParticipantId>,
    pub malicious: Vec<MaliciousSpec>,
    pub f_known: usize,
    pub burn_in_constant: f64,
    pub burn_in: u64,
    pub ucb_c1: f64,
    pub ucb_beta: f64,
    pub aggregation: AggregationOption,
    pub update_rule: UpdateRule,
    pub cost: CostMechanism,
    pub validators: ValidatorProtocol,
    pub commanders: CommanderProtocol,
    pub epsilon: f64,
    pub sig_len: u32,
    pub forge_prob: f64,
    pub arm_means: Vec<f64>,
    pub arm_family: ArmFamily,
    pub master_seed: u64,
    pub tamper_shift: f64,
    pub full_commander_iteration: bool,
    pub relay_depth: Option<usize>,
    pub reputation_map: ReputationMap,
    pub utility_form: UtilityForm,
    pub trust_denominator: TrustDenominator,
    pub honest_policy: HonestPolicy,
}

/// One default filled in during resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppliedDefault {
    pub key: &'static str,
    pub value: String,
}

impl fmt::Display for AppliedDefault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} (default)", self.key, self.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub defaults: Vec<AppliedDefault>,
}

/// The on-disk form. Every key is optional here; [`ScenarioDoc::resolve`]
/// decides which absences are errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, alias = "K", skip_serializing_if = "Option::is_none")]
    pub num_arms: Option<usize>,
    #[serde(default, alias = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, alias = "M", skip_serializing_if = "Option::is_none")]
    pub num_participants: Option<usize>,
    #[serde(default, alias = "honest_ids", skip_serializing_if = "Option::is_none")]
    pub honest: Option<Vec<ParticipantId>>,
    #[serde(default, alias = "f", skip_serializing_if = "Option::is_none")]
    pub f_known: Option<usize>,
    #[serde(default, alias = "C_L", skip_serializing_if = "Option::is_none")]
    pub burn_in_constant: Option<f64>,
    #[serde(default, alias = "L", skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default, alias = "C1", skip_serializing_if = "Option::is_none")]
    pub ucb_c1: Option<f64>,
    #[serde(default, alias = "beta", skip_serializing_if = "Option::is_none")]
    pub ucb_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_rule: Option<UpdateRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostMechanism>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validators: Option<ValidatorProtocol>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commanders: Option<CommanderProtocol>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, alias = "l", skip_serializing_if = "Option::is_none")]
    pub sig_len: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forge_prob: Option<f64>,
    #[serde(default, alias = "means", skip_serializing_if = "Option::is_none")]
    pub arm_means: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_family: Option<ArmFamily>,
    #[serde(default, alias = "seed", skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tamper_shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_commander_iteration: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reputation_map: Option<ReputationMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility_form: Option<UtilityForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust_denominator: Option<TrustDenominator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub honest_policy: Option<HonestPolicy>,
    // Arrays of tables go last so the serialized document stays valid TOML.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malicious: Option<Vec<MaliciousSpec>>,
}

macro_rules! overlay_fields {
    ($top:ident, $base:ident; $($field:ident),* $(,)?) => {
        ScenarioDoc { $($field: $top.$field.or($base.$field)),* }
    };
}

impl ScenarioDoc {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Keys set in `self` win over keys set in `base`.
    pub fn overlay(self, base: ScenarioDoc) -> ScenarioDoc {
        let top = self;
        overlay_fields!(top, base;
            preset, num_arms, horizon, num_participants, honest, f_known,
            burn_in_constant, burn_in, ucb_c1, ucb_beta, aggregation, update_rule,
            cost, validators, commanders, epsilon, sig_len, forge_prob, arm_means,
            arm_family, master_seed, tamper_shift, full_commander_iteration,
            relay_depth, reputation_map, utility_form, trust_denominator,
            honest_policy, malicious,
        )
    }

    /// Expands a `preset` key, then fills defaults and validates.
    pub fn resolve(self) -> Result<LoadedScenario, ConfigError> {
        let preset = match &self.preset {
            Some(name) => Some(name.parse::<Preset>()?),
            None => None,
        };
        let doc = match preset {
            Some(p) => self.overlay(p.document()),
            None => self,
        };
        let mut defaults = Vec::new();
        let mut note = |key: &'static str, value: String| defaults.push(AppliedDefault { key, value });

        let num_arms = doc.num_arms.ok_or(ConfigError::Missing("num_arms"))?;
        let horizon = doc.horizon.ok_or(ConfigError::Missing("horizon"))?;
        let num_participants = doc.num_participants.ok_or(ConfigError::Missing("num_participants"))?;
        let arm_means = doc.arm_means.ok_or(ConfigError::Missing("arm_means"))?;
        let master_seed = doc.master_seed.ok_or(ConfigError::Missing("master_seed"))?;

        if num_arms < 2 {
            return Err(ConfigError::invalid("num_arms", "need at least 2 arms"));
        }
        if horizon < 1 {
            return Err(ConfigError::invalid("horizon", "must be at least 1"));
        }
        if num_participants < 2 {
            return Err(ConfigError::invalid("num_participants", "need at least 2 participants"));
        }

        let mut malicious = doc.malicious.unwrap_or_default();
        malicious.sort_by_key(|m| m.id);
        let honest = match doc.honest {
            Some(mut h) => {
                h.sort();
                h
            }
            None => {
                let h: Vec<ParticipantId> = (0..num_participants as u32)
                    .map(ParticipantId)
                    .filter(|id| !malicious.iter().any(|m| m.id == *id))
                    .collect();
                note("honest", format!("{:?}", h.iter().map(|p| p.0).collect::<Vec<_>>()));
                h
            }
        };
        let f_known = doc.f_known.unwrap_or_else(|| {
            note("f_known", malicious.len().to_string());
            malicious.len()
        });
        let burn_in_constant = doc.burn_in_constant.unwrap_or_else(|| {
            note("burn_in_constant", "2".into());
            2.0
        });
        if !(burn_in_constant.is_finite() && burn_in_constant > 0.0) {
            return Err(ConfigError::invalid("burn_in_constant", "must be positive"));
        }
        let burn_in = doc.burn_in.unwrap_or_else(|| {
            let l = default_burn_in(num_arms, horizon, burn_in_constant);
            note("burn_in", l.to_string());
            l
        });
        let ucb_c1 = doc.ucb_c1.unwrap_or_else(|| {
            note("ucb_c1", "1".into());
            1.0
        });
        let ucb_beta = doc.ucb_beta.unwrap_or_else(|| {
            note("ucb_beta", "0.5".into());
            BETA_HALF
        });
        let aggregation = doc.aggregation.unwrap_or_else(|| {
            note("aggregation", "option1".into());
            AggregationOption::Option1
        });
        let update_rule = doc.update_rule.unwrap_or_else(|| {
            note("update_rule", "halving".into());
            UpdateRule::Halving
        });
        let cost = match doc.cost {
            Some(c) => c,
            None => {
                let c = RngStream::new(master_seed, StreamId::Environment).unit();
                note("cost", format!("constant({c})"));
                CostMechanism::Constant(c)
            }
        };
        let validators = doc.validators.unwrap_or_else(|| {
            note("validators", "all".into());
            ValidatorProtocol::All
        });
        let commanders = doc.commanders.unwrap_or_else(|| {
            note("commanders", "all_sorted".into());
            CommanderProtocol::AllSorted
        });
        let epsilon = doc.epsilon.unwrap_or_else(|| {
            note("epsilon", "0.2".into());
            0.2
        });
        let sig_len = doc.sig_len.unwrap_or_else(|| {
            note("sig_len", "64".into());
            64
        });
        let forge_prob = doc.forge_prob.unwrap_or_else(|| {
            note("forge_prob", "0".into());
            0.0
        });
        let arm_family = doc.arm_family.unwrap_or_else(|| {
            note("arm_family", "bernoulli".into());
            ArmFamily::Bernoulli
        });
        let tamper_shift = doc.tamper_shift.unwrap_or_else(|| {
            note("tamper_shift", "1".into());
            1.0
        });
        let full_commander_iteration = doc.full_commander_iteration.unwrap_or_else(|| {
            note("full_commander_iteration", "false".into());
            false
        });
        let reputation_map = doc.reputation_map.unwrap_or_else(|| {
            note("reputation_map", "identity".into());
            ReputationMap::Identity
        });
        let utility_form = doc.utility_form.unwrap_or_else(|| {
            note("utility_form", "quartic".into());
            UtilityForm::Quartic
        });
        let trust_denominator = doc.trust_denominator.unwrap_or_else(|| {
            note("trust_denominator", "burn_in".into());
            TrustDenominator::BurnIn
        });
        let honest_policy = doc.honest_policy.unwrap_or_else(|| {
            note("honest_policy", "ucb".into());
            HonestPolicy::Ucb
        });

        let config = ScenarioConfig {
            preset,
            num_arms,
            horizon,
            num_participants,
            honest,
            malicious,
            f_known,
            burn_in_constant,
            burn_in,
            ucb_c1,
            ucb_beta,
            aggregation,
            update_rule,
            cost,
            validators,
            commanders,
            epsilon,
            sig_len,
            forge_prob,
            arm_means,
            arm_family,
            master_seed,
            tamper_shift,
            full_commander_iteration,
            relay_depth: doc.relay_depth,
            reputation_map,
            utility_form,
            trust_denominator,
            honest_policy,
        };
        config.validate()?;
        if let Some(p) = preset {
            p.check_regime(&config)?;
        }
        Ok(LoadedScenario { config, defaults })
    }
}

/// `max(3K, ⌈C_L·K·ln T⌉)`.
pub fn default_burn_in(num_arms: usize, horizon: u64, c_l: f64) -> u64 {
    let k = num_arms as f64;
    let scaled = (c_l * k * (horizon as f64).ln()).ceil().max(0.0) as u64;
    scaled.max(3 * num_arms as u64)
}

/// Parses and resolves a scenario document.
pub fn load_scenario(text: &str) -> Result<LoadedScenario, ConfigError> {
    ScenarioDoc::parse(text)?.resolve()
}

fn check_prob(key: &'static str, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("{p} is not a probability")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let k = self.num_arms;
        let m = self.num_participants;
        if self.arm_means.len() != k {
            return Err(ConfigError::invalid(
                "arm_means",
                format!("expected {k} means, found {}", self.arm_means.len()),
            ));
        }
        if let Some(mu) = self.arm_means.iter().find(|mu| !(0.0..=1.0).contains(*mu)) {
            return Err(ConfigError::invalid("arm_means", format!("{mu} is outside [0, 1]")));
        }

        let mut ids: Vec<u32> = self.honest.iter().map(|p| p.0).collect();
        let mal: Vec<u32> = self.malicious.iter().map(|s| s.id.0).collect();
        if self.honest.iter().any(|h| self.malicious.iter().any(|s| s.id == *h)) {
            return Err(ConfigError::invalid("malicious", "overlapping roles"));
        }
        ids.extend(&mal);
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        if ids.len() != before {
            return Err(ConfigError::invalid("malicious", "duplicate participant id"));
        }
        if ids.len() != m || ids.iter().enumerate().any(|(i, &id)| i as u32 != id) {
            return Err(ConfigError::invalid(
                "honest",
                format!("honest and malicious ids must partition 0..{m}"),
            ));
        }
        if self.honest.is_empty() {
            return Err(ConfigError::invalid("honest", "need at least one honest participant"));
        }
        if self.f_known >= m {
            return Err(ConfigError::invalid("f_known", "must be below num_participants"));
        }
        if self.burn_in < 3 * k as u64 {
            return Err(ConfigError::invalid("burn_in", format!("must be at least 3K = {}", 3 * k)));
        }
        if !(self.ucb_c1.is_finite() && self.ucb_c1 > 0.0) {
            return Err(ConfigError::invalid("ucb_c1", "must be positive"));
        }
        if (self.ucb_beta - BETA_HALF).abs() > BETA_TOL && (self.ucb_beta - BETA_SIXTH).abs() > BETA_TOL {
            return Err(ConfigError::invalid("ucb_beta", "must be 1/2 or 1/6"));
        }
        if let CostMechanism::Constant(c) = self.cost {
            if !(0.0..=1.0).contains(&c) {
                return Err(ConfigError::invalid("cost", format!("constant {c} is outside [0, 1]")));
            }
        }
        match self.validators {
            ValidatorProtocol::All => {}
            ValidatorProtocol::Vrf(p) => check_prob("validators", p)?,
            ValidatorProtocol::ReputationTopN(n) => {
                let h = self.honest.len();
                if n < h || n > 2 * h - 1 {
                    return Err(ConfigError::invalid(
                        "validators",
                        format!("reputation_top_n needs {h} <= N <= {}", 2 * h - 1),
                    ));
                }
            }
        }
        match self.commanders {
            CommanderProtocol::AllSorted => {}
            CommanderProtocol::FixedCount(c) => {
                if c == 0 {
                    return Err(ConfigError::invalid("commanders", "fixed_count must be positive"));
                }
            }
            CommanderProtocol::WeightedVrf(eta) => {
                if !(eta > 0.0 && eta < 1.0) {
                    return Err(ConfigError::invalid("commanders", "eta must lie in (0, 1)"));
                }
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(ConfigError::invalid("epsilon", "must be non-negative"));
        }
        if self.sig_len < 2 {
            return Err(ConfigError::invalid("sig_len", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.forge_prob) {
            return Err(ConfigError::invalid("forge_prob", "must lie in [0, 1)"));
        }
        if let ArmFamily::TruncatedGaussian(var) = self.arm_family {
            if !(var.is_finite() && var > 0.0) {
                return Err(ConfigError::invalid("arm_family", "variance must be positive"));
            }
        }
        if !(self.tamper_shift.is_finite() && self.tamper_shift > 0.0) {
            return Err(ConfigError::invalid("tamper_shift", "must be positive"));
        }
        if self.relay_depth == Some(0) {
            return Err(ConfigError::invalid("relay_depth", "must be positive"));
        }
        for spec in &self.malicious {
            match spec.estimator {
                EstimatorAttack::EpsilonContamination { epsilon, q } => {
                    check_prob("malicious.estimator", epsilon)?;
                    match q {
                        ContaminationLaw::Constant(v) | ContaminationLaw::Bernoulli(v) => {
                            check_prob("malicious.estimator", v)?
                        }
                        ContaminationLaw::Uniform => {}
                    }
                }
                EstimatorAttack::ConstantShift(d) if !d.is_finite() => {
                    return Err(ConfigError::invalid("malicious.estimator", "shift must be finite"));
                }
                EstimatorAttack::RandomNoise(r) if !(r.is_finite() && r >= 0.0) => {
                    return Err(ConfigError::invalid("malicious.estimator", "noise range must be non-negative"));
                }
                _ => {}
            }
            if let ArmAttack::FixedArm(a) = spec.arm {
                if a >= k {
                    return Err(ConfigError::invalid("malicious.arm", format!("arm {a} out of range")));
                }
            }
        }
        Ok(())
    }

    pub fn honest_count(&self) -> usize {
        self.honest.len()
    }

    pub fn malicious_spec(&self, id: ParticipantId) -> Option<&MaliciousSpec> {
        self.malicious.iter().find(|s| s.id == id)
    }

    pub fn is_honest(&self, id: ParticipantId) -> bool {
        self.malicious_spec(id).is_none()
    }

    /// Participants attacking estimators only.
    pub fn estimator_only_attackers(&self) -> usize {
        self.malicious.iter().filter(|s| !s.attacks_consensus()).count()
    }

    pub fn consensus_attackers(&self) -> usize {
        self.malicious.iter().filter(|s| s.attacks_consensus()).count()
    }

    pub fn best_mean(&self) -> f64 {
        self.arm_means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The equivalent fully-specified document.
    pub fn to_doc(&self) -> ScenarioDoc {
        ScenarioDoc {
            preset: self.preset.map(|p| p.name().to_string()),
            num_arms: Some(self.num_arms),
            horizon: Some(self.horizon),
            num_participants: Some(self.num_participants),
            honest: Some(self.honest.clone()),
            f_known: Some(self.f_known),
            burn_in_constant: Some(self.burn_in_constant),
            burn_in: Some(self.burn_in),
            ucb_c1: Some(self.ucb_c1),
            ucb_beta: Some(self.ucb_beta),
            aggregation: Some(self.aggregation),
            update_rule: Some(self.update_rule),
            cost: Some(self.cost),
            validators: Some(self.validators),
            commanders: Some(self.commanders),
            epsilon: Some(self.epsilon),
            sig_len: Some(self.sig_len),
            forge_prob: Some(self.forge_prob),
            arm_means: Some(self.arm_means.clone()),
            arm_family: Some(self.arm_family),
            master_seed: Some(self.master_seed),
            tamper_shift: Some(self.tamper_shift),
            full_commander_iteration: Some(self.full_commander_iteration),
            relay_depth: self.relay_depth,
            reputation_map: Some(self.reputation_map),
            utility_form: Some(self.utility_form),
            trust_denominator: Some(self.trust_denominator),
            honest_policy: Some(self.honest_policy),
            malicious: Some(self.malicious.clone()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_doc()).expect("scenario documents always serialize")
    }
}

impl FromStr for ScenarioConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        load_scenario(s).map(|l| l.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
K = 2
T = 100
M = 3
honest = [0, 1, 2]
means = [0.9, 0.5]
seed = 7
"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let loaded = load_scenario(MINIMAL).unwrap();
        let cfg = &loaded.config;
        let expected_l = (2.0 * 2.0 * 100f64.ln()).ceil() as u64;
        assert_eq!(cfg.burn_in, expected_l.max(6));
        match cfg.cost {
            CostMechanism::Constant(c) => {
                let drawn = RngStream::new(7, StreamId::Environment).unit();
                assert_eq!(c, drawn);
                assert!((0.0..=1.0).contains(&c));
            }
            other => panic!("unexpected cost {other:?}"),
        }
        assert!(loaded.defaults.iter().any(|d| d.key == "burn_in"));
        assert!(loaded.defaults.iter().any(|d| d.key == "cost"));
        assert!(!loaded.defaults.iter().any(|d| d.key == "honest"));
    }

    #[test]
    fn overlapping_roles_are_rejected() {
        let doc = r#"
K = 2
T = 100
M = 3
honest = [0, 1, 2]
means = [0.9, 0.5]
seed = 7
[[malicious]]
id = 2
"#;
        let err = load_scenario(doc).unwrap_err();
        assert!(err.to_string().contains("overlapping roles"), "{err}");
    }

    #[test]
    fn unknown_key_names_the_key() {
        let err = load_scenario(&format!("{MINIMAL}\nbogus_knob = 3\n")).unwrap_err();
        assert!(err.to_string().contains("bogus_knob"), "{err}");
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let err = load_scenario(&MINIMAL.replace("T = 100", "T = \"long\"")).unwrap_err();
        assert!(err.to_string().contains('T'), "{err}");
    }

    #[test]
    fn bad_beta_is_rejected() {
        let err = load_scenario(&format!("{MINIMAL}\nbeta = 0.3\n")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { key: "ucb_beta", .. }));
    }

    #[test]
    fn short_burn_in_is_rejected() {
        let err = load_scenario(&format!("{MINIMAL}\nL = 5\n")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { key: "burn_in", .. }));
    }

    #[test]
    fn missing_required_key() {
        let err = load_scenario(&MINIMAL.replace("seed = 7", "")).unwrap_err();
        assert_eq!(err, ConfigError::Missing("master_seed"));
    }

    #[test]
    fn round_trip_minimal() {
        let cfg = load_scenario(MINIMAL).unwrap().config;
        let again = load_scenario(&cfg.to_toml()).unwrap();
        assert_eq!(again.config, cfg);
        assert!(again.defaults.is_empty(), "{:?}", again.defaults);
    }

    #[test]
    fn malicious_table_parses() {
        let doc = r#"
K = 3
T = 500
M = 4
honest = [0, 1, 2]
means = [0.9, 0.5, 0.1]
seed = 1
cost = { constant = 0.25 }
commanders = { fixed_count = 2 }
arm_family = { truncated_gaussian = 0.01 }

[[malicious]]
id = 3
estimator = { epsilon_contamination = { epsilon = 0.5, q = { constant = 1.0 } } }
consensus = "equivocate"
arm = { fixed_arm = 2 }
"#;
        let cfg = load_scenario(doc).unwrap().config;
        assert_eq!(cfg.cost, CostMechanism::Constant(0.25));
        let spec = cfg.malicious[0];
        assert!(spec.attacks_consensus() && spec.attacks_estimator());
        assert_eq!(spec.effective_vote(), VoteBehavior::Zero);
        assert_eq!(spec.arm, ArmAttack::FixedArm(2));
        assert_eq!(cfg.f_known, 1);
        assert_eq!(load_scenario(&cfg.to_toml()).unwrap().config, cfg);
    }
}
