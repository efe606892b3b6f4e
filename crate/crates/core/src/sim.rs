//! The per-step round driver tying selection, aggregation, consensus,
//! contracts, the environment and the ledger together.

use std::collections::HashMap;

use crate::aggregate::{build_safe_zone_set, build_trusted_set, Blocklist, Proposal, TrimParams};
use crate::config::{CommanderProtocol, CountReport, ScenarioConfig, UpdateRule};
use crate::consensus::{run_consensus, ConsensusParams, ConsensusTranscript, NodeBehavior, Outcome, SmContext};
use crate::contract::{
    global_update, replay_counts, sc_block_verify, sc_sort, Block, Chain, ChainMode, HonestRewards,
    SignedEstimate, UpdateState,
};
use crate::crypto::{count_bytes, keygen, Commitment, ForgeryOracle, Hash32, KeyPair, PublicKeyRing};
use crate::env::{compute_cost, operate, Environment};
use crate::error::{Error, InvariantBreach};
use crate::metrics::{RegretLedger, StepInput, Summary};
use crate::mpc::ComparisonOracle;
use crate::policy::{apply_delivery, broadcast_estimators, select_arm, ParticipantState, Role, UcbParams};
use crate::rng::{commander_seed, key_seed, round_seed, RngStream, StreamId};
use crate::select::{select_commanders, select_validators, ReputationState, TrustCoefficients};
use crate::ParticipantId;

/// Per-step protocol artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t: u64,
    pub validators: Vec<ParticipantId>,
    pub commanders: Vec<ParticipantId>,
    /// Commanders that ran a broadcast this step, in order.
    pub served: Vec<ParticipantId>,
    /// `B_t` flattened over arms (empty for placeholders and failures).
    pub trusted: Vec<ParticipantId>,
    /// `C_t` under the SafeZone rule.
    pub safe_zone: Option<Vec<ParticipantId>>,
    pub placeholder: bool,
    /// `ĥμ(t)`, the per-arm mean of `B_t` (infinite when there is none).
    pub trimmed_mean: Vec<f64>,
    pub global: Vec<f64>,
    pub approved: bool,
    pub cost: f64,
    pub contributors_malicious: bool,
    pub commander_index: Option<usize>,
    pub blocklist_size: usize,
    pub messages: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub chain: ChainMode,
    /// Keep every per-step CSV record.
    pub keep_records: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            chain: ChainMode::HeadOnly,
            keep_records: true,
        }
    }
}

pub struct Simulation {
    cfg: ScenarioConfig,
    params: UcbParams,
    env: Environment,
    participants: Vec<ParticipantState>,
    keys: Vec<KeyPair>,
    ring: PublicKeyRing,
    forgery: ForgeryOracle,
    behaviors: Vec<NodeBehavior>,
    honest: Vec<bool>,
    streams: Vec<RngStream>,
    reward_streams: Vec<RngStream>,
    adversary: RngStream,
    reputation: ReputationState,
    trust: TrustCoefficients,
    blocklist: Blocklist,
    update: UpdateState,
    chain: Option<Chain>,
    ledger: RegretLedger,
    t: u64,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, options: RunOptions) -> Self {
        let m = cfg.num_participants;
        let seed = cfg.master_seed;
        let keys: Vec<KeyPair> = (0..m as u32).map(|i| keygen(key_seed(seed, ParticipantId(i)))).collect();
        let ring = PublicKeyRing::new(keys.iter().map(|k| k.public).collect());
        let participants: Vec<ParticipantState> = (0..m as u32)
            .map(|i| {
                let id = ParticipantId(i);
                let role = match cfg.malicious_spec(id) {
                    Some(spec) => Role::Malicious(*spec),
                    None => Role::Honest,
                };
                ParticipantState::new(id, role, keys[i as usize].clone(), cfg.num_arms)
            })
            .collect();
        let behaviors = participants
            .iter()
            .map(|p| match p.role.spec() {
                Some(s) => NodeBehavior {
                    attack: s.consensus,
                    vote: s.effective_vote(),
                },
                None => NodeBehavior::HONEST,
            })
            .collect();
        let honest: Vec<bool> = participants.iter().map(|p| p.is_honest()).collect();
        let trust = match cfg.commanders {
            CommanderProtocol::WeightedVrf(eta) => TrustCoefficients::weighted(&cfg, eta),
            _ => TrustCoefficients::uniform(m),
        };
        let chain = match options.chain {
            ChainMode::Full => Some(Chain::new(true)),
            ChainMode::HeadOnly => Some(Chain::new(false)),
            ChainMode::Off => None,
        };
        Self {
            params: UcbParams::from_config(&cfg),
            env: Environment::new(&cfg.arm_means, cfg.arm_family),
            forgery: ForgeryOracle::new(keys.clone(), cfg.forge_prob),
            streams: (0..m as u32)
                .map(|i| RngStream::new(seed, StreamId::Participant(ParticipantId(i))))
                .collect(),
            reward_streams: (0..m as u32)
                .map(|i| RngStream::new(seed, StreamId::Rewards(ParticipantId(i))))
                .collect(),
            adversary: RngStream::new(seed, StreamId::Adversary),
            reputation: ReputationState::new(m, cfg.reputation_map, cfg.utility_form),
            blocklist: Blocklist::default(),
            update: UpdateState::genesis(cfg.num_arms),
            ledger: RegretLedger::new(cfg.num_arms, honest.iter().filter(|h| **h).count(), options.keep_records),
            participants,
            keys,
            ring,
            behaviors,
            honest,
            trust,
            chain,
            t: 0,
            cfg,
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.horizon
    }

    pub fn participants(&self) -> &[ParticipantState] {
        &self.participants
    }

    pub fn reputation(&self) -> &ReputationState {
        &self.reputation
    }

    pub fn blocklist(&self) -> &Blocklist {
        &self.blocklist
    }

    pub fn ledger(&self) -> &RegretLedger {
        &self.ledger
    }

    pub fn chain(&self) -> Option<&Chain> {
        self.chain.as_ref()
    }

    pub fn ring(&self) -> &PublicKeyRing {
        &self.ring
    }

    pub fn trust(&self) -> &TrustCoefficients {
        &self.trust
    }

    fn reported_counts(&self) -> Vec<Vec<u64>> {
        self.participants
            .iter()
            .map(|p| match p.role.spec().map(|s| s.counts) {
                Some(CountReport::Inflate(k)) => p.counts.iter().map(|c| c + k).collect(),
                _ => p.counts.clone(),
            })
            .collect()
    }

    /// Runs step `t + 1`.
    pub fn step(&mut self) -> Result<StepReport, Error> {
        let t = self.t + 1;
        let cfg = &self.cfg;
        let m = cfg.num_participants;
        let k = cfg.num_arms;
        let burn = t <= cfg.burn_in;

        let validators = select_validators(
            cfg.validators,
            &self.keys,
            &self.reputation,
            round_seed(cfg.master_seed, t),
            t,
            cfg.burn_in,
        );
        let validators = sc_sort(&validators, &self.ring).expect("every participant has a key");
        let commanders = select_commanders(
            cfg.commanders,
            &validators,
            &self.keys,
            &self.trust,
            commander_seed(cfg.master_seed, t),
        );

        let arms: Vec<usize> = (0..m)
            .map(|i| select_arm(&self.participants[i], t, &self.params, &mut self.streams[i]))
            .collect();
        let mut draws = vec![Vec::with_capacity(k); m];
        for (i, d) in draws.iter_mut().enumerate() {
            self.env.draw_all(&mut self.reward_streams[i], d);
        }
        let rewards: Vec<f64> = arms.iter().zip(&draws).map(|(&a, d)| d[a]).collect();
        let broadcasts: Vec<Vec<f64>> = (0..m)
            .map(|i| broadcast_estimators(&self.participants[i], &mut self.streams[i]))
            .collect();

        let trim = TrimParams {
            option: cfg.aggregation,
            f: cfg.f_known,
            t,
            burn_in: cfg.burn_in,
            num_arms: k,
        };
        let mut proposals = vec![Proposal::Empty; m];
        if burn {
            for v in &validators {
                proposals[v.0 as usize] = build_trusted_set(trim, &[], &broadcasts, &self.blocklist);
            }
        } else {
            let oracle = ComparisonOracle::seal(self.reported_counts(), k, cfg.burn_in);
            let mut cache: HashMap<Vec<ParticipantId>, Proposal> = HashMap::new();
            for v in &validators {
                let filter = oracle.filter_set(*v, t);
                let p = cache
                    .entry(filter)
                    .or_insert_with_key(|f| build_trusted_set(trim, f, &broadcasts, &self.blocklist));
                proposals[v.0 as usize] = p.clone();
            }
        }

        let transcript = if validators.is_empty() || commanders.is_empty() {
            ConsensusTranscript {
                validators: validators.clone(),
                commanders: commanders.clone(),
                rounds: Vec::new(),
                outcome: Outcome::Failed,
                evidence: Vec::new(),
            }
        } else {
            let ctx = SmContext {
                validators: &validators,
                behaviors: &self.behaviors,
                keys: &self.keys,
                ring: &self.ring,
                relay_depth: cfg.relay_depth.unwrap_or(validators.len().saturating_sub(1)),
                forgery: &self.forgery,
            };
            let params = ConsensusParams {
                full_iteration: cfg.full_commander_iteration,
                tamper_shift: cfg.tamper_shift,
                num_arms: k,
            };
            run_consensus(&ctx, &commanders, &proposals, &params, &mut self.adversary)
        };
        let commander_index = match &transcript.outcome {
            Outcome::Agreed { commander_index, .. } => Some(*commander_index),
            Outcome::Failed => None,
        };

        let infinite = vec![f64::INFINITY; k];
        let mut safe_zone = None;
        let mut trusted = Vec::new();
        let mut contributors = Vec::new();
        let mut placeholder_arm = None;
        let mut trimmed_mean = infinite.clone();
        let mut trusted_lists = vec![Vec::new(); k];
        let global = match transcript.agreed() {
            Some(Proposal::Placeholder { arm }) => {
                placeholder_arm = Some(*arm);
                self.update.prior.clone()
            }
            Some(Proposal::Trusted(set)) => {
                trusted = set.members();
                trusted_lists = set.per_arm.iter().map(|a| a.iter().map(|(id, _)| *id).collect()).collect();
                let hat = set.means();
                trimmed_mean.clone_from(&hat);
                let input = if cfg.update_rule == UpdateRule::SafeZone {
                    let candidates: Vec<ParticipantId> = (0..m as u32)
                        .map(ParticipantId)
                        .filter(|id| !self.blocklist.contains(*id))
                        .collect();
                    let zone = if hat.iter().all(|h| h.is_finite()) {
                        build_safe_zone_set(&hat, &broadcasts, &candidates, cfg.epsilon)
                    } else {
                        Vec::new()
                    };
                    let hh = if zone.is_empty() {
                        infinite.clone()
                    } else {
                        (0..k)
                            .map(|i| zone.iter().map(|id| broadcasts[id.0 as usize][i]).sum::<f64>() / zone.len() as f64)
                            .collect()
                    };
                    contributors = zone.clone();
                    safe_zone = Some(zone);
                    hh
                } else {
                    contributors = trusted.clone();
                    hat
                };
                global_update(cfg.update_rule, &input, &self.update, t)
            }
            Some(Proposal::Empty) | None => infinite.clone(),
        };
        let approved = sc_block_verify(&global);
        let contributors_malicious = contributors.iter().any(|id| !self.honest[id.0 as usize]);
        let cost = if approved && !contributors.is_empty() {
            compute_cost(cfg.cost, &global, &cfg.arm_means, contributors_malicious)
                .map_err(|_| InvariantBreach::InfiniteEstimate { t })?
        } else {
            0.0
        };
        if cost < 0.0 || cost.is_nan() {
            return Err(InvariantBreach::NegativeCost { t, cost }.into());
        }

        let deliveries = operate(&global, &rewards, &self.honest, approved, cost, contributors_malicious);
        for (i, d) in deliveries.iter().enumerate() {
            apply_delivery(&mut self.participants[i], d, arms[i], t, cfg.burn_in, &mut self.streams[i]);
        }
        if approved {
            self.update.commit(t, &global);
        }
        if approved && !burn && global.iter().all(|g| g.is_finite()) {
            let delta: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    let shift = if self.behaviors[i].attack != crate::config::ConsensusAttack::None {
                        cfg.tamper_shift
                    } else {
                        0.0
                    };
                    global.iter().map(|g| g + shift).collect()
                })
                .collect();
            self.reputation.update(&broadcasts, &global, &delta, cfg.epsilon);
        }
        self.blocklist.update(&transcript.evidence, &self.ring);

        for p in self.participants.iter().filter(|p| p.is_honest()) {
            for (i, &v) in p.local_means.iter().enumerate() {
                if p.counts[i] > 0 && !(0.0..=1.0).contains(&v) {
                    return Err(InvariantBreach::EstimateOutOfRange {
                        t,
                        participant: p.id.0,
                        value: v,
                    }
                    .into());
                }
            }
        }

        let honest_ids: Vec<usize> = (0..m).filter(|&i| self.honest[i]).collect();
        let honest_arms: Vec<usize> = honest_ids.iter().map(|&i| arms[i]).collect();
        let honest_draws: Vec<Vec<f64>> = honest_ids.iter().map(|&i| draws[i].clone()).collect();
        self.ledger
            .record_step(StepInput {
                t,
                approved,
                cost,
                honest_arms: &honest_arms,
                honest_rewards: &honest_draws,
                trusted_size: trusted.len(),
                blocklist_size: self.blocklist.len(),
                commander_index,
            })
            .expect("steps are recorded in order");

        let nonces: Vec<u64> = (0..m).map(|i| rand::RngCore::next_u64(&mut self.streams[i])).collect();
        if let Some(chain) = &mut self.chain {
            let block = Block {
                index: t,
                prev: chain.head(),
                approved,
                global: global.iter().map(|g| g.is_finite().then_some(*g)).collect(),
                broadcasts: broadcasts
                    .iter()
                    .enumerate()
                    .map(|(i, values)| {
                        let id = ParticipantId(i as u32);
                        SignedEstimate {
                            participant: id,
                            signature: self.keys[i].sign(&SignedEstimate::message(t, id, values)),
                            values: values.clone(),
                        }
                    })
                    .collect(),
                count_commitments: self
                    .participants
                    .iter()
                    .zip(&nonces)
                    .map(|(p, &n)| Commitment::commit(&count_bytes(&p.counts), n))
                    .collect(),
                trusted: trusted_lists,
                placeholder_arm,
                arms: arms.clone(),
                honest_rewards: honest_ids
                    .iter()
                    .map(|&i| HonestRewards {
                        participant: ParticipantId(i as u32),
                        rewards: draws[i].clone(),
                    })
                    .collect(),
                transcript: transcript.digest(),
                cost,
            };
            chain
                .append(block)
                .map_err(|_| InvariantBreach::BrokenLink { index: t })?;
        }

        self.t = t;
        Ok(StepReport {
            t,
            validators,
            commanders,
            served: transcript.rounds.iter().map(|r| r.commander).collect(),
            trusted,
            safe_zone,
            placeholder: placeholder_arm.is_some(),
            trimmed_mean,
            global,
            approved,
            cost,
            contributors_malicious,
            commander_index,
            blocklist_size: self.blocklist.len(),
            messages: transcript.total_messages(),
        })
    }

    /// Checks the chain replay against live pull counts (full chains only).
    pub fn verify_replay(&self) -> Result<(), InvariantBreach> {
        if let Some(chain) = self.chain.as_ref().filter(|c| !c.blocks().is_empty()) {
            let counts = replay_counts(chain.blocks(), self.cfg.num_participants, self.cfg.num_arms);
            for p in &self.participants {
                if counts[p.id.0 as usize] != p.counts {
                    return Err(InvariantBreach::ReplayMismatch { t: self.t });
                }
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> Summary {
        self.ledger.finalize(&self.cfg.arm_means)
    }

    pub fn into_parts(self) -> (RegretLedger, Option<Chain>) {
        (self.ledger, self.chain)
    }
}

/// Result of one complete replica.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub ledger: RegretLedger,
    pub chain: Option<Chain>,
    pub head: Option<Hash32>,
}

/// Runs a scenario to its horizon.
pub fn run_scenario(cfg: &ScenarioConfig, options: RunOptions) -> Result<RunOutput, Error> {
    let mut sim = Simulation::new(cfg.clone(), options);
    while !sim.is_done() {
        sim.step()?;
    }
    sim.verify_replay()?;
    let summary = sim.summary();
    let (ledger, chain) = sim.into_parts();
    let head = chain.as_ref().map(|c| c.head());
    Ok(RunOutput {
        summary,
        ledger,
        chain,
        head,
    })
}
