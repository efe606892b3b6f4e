//! Signed-message Byzantine broadcast and the per-commander voting loop.
//!
//! [`run_sm`] is a synchronous signed-message broadcast in the style of
//! Lamport's SM(m) with the Dolev–Strong acceptance rule: in round `r` a
//! lieutenant accepts a value only from a chain that starts with the
//! commander and carries at least `r` distinct valid signatures. Honest
//! lieutenants relay each of the first two values they accept. After
//! `m + 1` rounds a lieutenant outputs its value if it accepted exactly one
//! and the default otherwise.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::aggregate::{Evidence, Proposal, TrustedSet};
use crate::config::{ConsensusAttack, VoteBehavior};
use crate::crypto::{ForgeryOracle, Hash32, KeyPair, PublicKeyRing, SignedMessage};
use crate::rng::RngStream;
use crate::ParticipantId;

/// How a participant behaves inside consensus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeBehavior {
    pub attack: ConsensusAttack,
    pub vote: VoteBehavior,
}

impl NodeBehavior {
    pub const HONEST: NodeBehavior = NodeBehavior {
        attack: ConsensusAttack::None,
        vote: VoteBehavior::Protocol,
    };
}

/// What the commander of one broadcast sends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommanderAction {
    Propose(Hash32),
    /// First payload to the first half of the lieutenants, second to the rest.
    Equivocate(Hash32, Hash32),
    Silent,
}

/// Everything a broadcast needs besides the commander's action.
pub struct SmContext<'a> {
    pub validators: &'a [ParticipantId],
    pub behaviors: &'a [NodeBehavior],
    /// Each participant's own key pair; a node signs only with its own.
    pub keys: &'a [KeyPair],
    pub ring: &'a PublicKeyRing,
    pub relay_depth: usize,
    pub forgery: &'a ForgeryOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmOutcome {
    /// Output per validator, aligned with the validator list. `None` is the
    /// default value. Entries of adversarial nodes are meaningless.
    pub derived: Vec<Option<Hash32>>,
    pub evidence: Option<Evidence>,
    pub messages: usize,
}

struct Chain {
    msg: SignedMessage,
    parent: Option<usize>,
    valid: Option<bool>,
}

struct Arena<'a> {
    chains: Vec<Chain>,
    ring: &'a PublicKeyRing,
}

impl Arena<'_> {
    fn push(&mut self, msg: SignedMessage, parent: Option<usize>) -> usize {
        self.chains.push(Chain { msg, parent, valid: None });
        self.chains.len() - 1
    }

    /// Verifies a chain, reusing the verdict on its parent prefix.
    fn valid(&mut self, idx: usize) -> bool {
        if let Some(v) = self.chains[idx].valid {
            return v;
        }
        let v = match self.chains[idx].parent {
            Some(p) => {
                self.valid(p) && {
                    let msg = &self.chains[idx].msg;
                    let (id, sig) = *msg.links.last().expect("relayed chains have links");
                    let prefix = SignedMessage {
                        payload: msg.payload,
                        links: msg.links[..msg.links.len() - 1].to_vec(),
                    };
                    self.ring
                        .get(id)
                        .is_some_and(|pk| crate::crypto::verify(pk, &prefix.next_link_message(), &sig))
                }
            }
            None => self.chains[idx].msg.verify(self.ring),
        };
        self.chains[idx].valid = Some(v);
        v
    }

    fn relay(&mut self, idx: usize, signer: ParticipantId, keys: &KeyPair) -> usize {
        let msg = self.chains[idx].msg.countersign(signer, keys);
        self.push(msg, Some(idx))
    }
}

fn distinct_signers(msg: &SignedMessage) -> bool {
    let ids: Vec<ParticipantId> = msg.signers().collect();
    ids.iter().enumerate().all(|(k, id)| !ids[..k].contains(id))
}

/// Runs one signed-message broadcast from `commander`.
pub fn run_sm(
    ctx: &SmContext<'_>,
    commander: ParticipantId,
    action: CommanderAction,
    adversary: &mut RngStream,
) -> SmOutcome {
    let n = ctx.validators.len();
    let depth = ctx.relay_depth.max(1);
    let behavior = |id: ParticipantId| ctx.behaviors[id.0 as usize];
    let follows_protocol = |id: ParticipantId| behavior(id).attack == ConsensusAttack::None;
    let colluding = |id: ParticipantId| {
        matches!(
            behavior(id).attack,
            ConsensusAttack::Equivocate | ConsensusAttack::WrongForward
        )
    };
    let lieutenants: Vec<usize> = (0..n).filter(|&i| ctx.validators[i] != commander).collect();

    let mut arena = Arena {
        chains: Vec::new(),
        ring: ctx.ring,
    };
    let mut inbox: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut messages = 0usize;
    let commander_keys = &ctx.keys[commander.0 as usize];
    let mut commander_payloads: Vec<Hash32> = Vec::new();
    match action {
        CommanderAction::Silent => {}
        CommanderAction::Propose(p) => {
            let c = arena.push(SignedMessage::originate(p, commander, commander_keys), None);
            commander_payloads.push(p);
            for &i in &lieutenants {
                inbox[i].push(c);
                messages += 1;
            }
        }
        CommanderAction::Equivocate(p, q) => {
            let cp = arena.push(SignedMessage::originate(p, commander, commander_keys), None);
            let cq = arena.push(SignedMessage::originate(q, commander, commander_keys), None);
            commander_payloads.extend([p, q]);
            let half = lieutenants.len() / 2;
            for (k, &i) in lieutenants.iter().enumerate() {
                let id = ctx.validators[i];
                if colluding(id) {
                    inbox[i].extend([cp, cq]);
                    messages += 2;
                } else {
                    inbox[i].push(if k < half { cp } else { cq });
                    messages += 1;
                }
            }
        }
    }

    // Accepted values per validator: payload -> witnessing chain.
    let mut accepted: Vec<Vec<(Hash32, usize)>> = vec![Vec::new(); n];
    // Chains the coalition has seen.
    let mut coalition_view: Vec<usize> = Vec::new();
    let coalition: Vec<usize> = lieutenants
        .iter()
        .copied()
        .filter(|&i| colluding(ctx.validators[i]))
        .collect();

    for round in 1..=depth + 1 {
        let mut outbox: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &i in &lieutenants {
            let me = ctx.validators[i];
            let incoming = std::mem::take(&mut inbox[i]);
            if !follows_protocol(me) {
                if colluding(me) {
                    coalition_view.extend(incoming);
                }
                continue;
            }
            for c in incoming {
                let msg = &arena.chains[c].msg;
                if msg.originator() != Some(commander)
                    || msg.links.len() < round
                    || msg.signers().any(|s| s == me)
                    || !distinct_signers(msg)
                    || accepted[i].iter().any(|(p, _)| *p == msg.payload)
                {
                    continue;
                }
                if !arena.valid(c) {
                    continue;
                }
                let payload = arena.chains[c].msg.payload;
                accepted[i].push((payload, c));
                if accepted[i].len() <= 2 && round <= depth {
                    let relayed = arena.relay(c, me, &ctx.keys[me.0 as usize]);
                    for (j, &target) in ctx.validators.iter().enumerate() {
                        if j != i && !arena.chains[relayed].msg.signers().any(|s| s == target) {
                            outbox[j].push(relayed);
                            messages += 1;
                        }
                    }
                }
            }
        }

        if !coalition.is_empty() && round <= depth {
            messages += adversary_round(ctx, &mut arena, &coalition, &coalition_view, commander, round, &mut outbox, adversary);
        }
        inbox = outbox;
    }

    let derived = (0..n)
        .map(|i| {
            if ctx.validators[i] == commander {
                return match action {
                    CommanderAction::Propose(p) => Some(p),
                    _ => None,
                };
            }
            match accepted[i].as_slice() {
                [(p, _)] => Some(*p),
                _ => None,
            }
        })
        .collect();

    let evidence = accepted.iter().find(|a| a.len() >= 2).map(|a| Evidence {
        first: arena.chains[a[0].1].msg.clone(),
        second: arena.chains[a[1].1].msg.clone(),
    });
    SmOutcome {
        derived,
        evidence,
        messages,
    }
}

/// One round of coalition behaviour: extend known chains with coalition
/// signatures so they are still acceptable next round and hand them to a
/// random subset of honest validators. `WrongForward` members also try to
/// pass off a tampered payload under the commander's name.
#[allow(clippy::too_many_arguments)]
fn adversary_round(
    ctx: &SmContext<'_>,
    arena: &mut Arena<'_>,
    coalition: &[usize],
    view: &[usize],
    commander: ParticipantId,
    round: usize,
    outbox: &mut [Vec<usize>],
    rng: &mut RngStream,
) -> usize {
    let mut sent = 0;
    let mut seen_payloads: Vec<Hash32> = Vec::new();
    let mut candidates: Vec<usize> = Vec::new();
    for &c in view {
        let p = arena.chains[c].msg.payload;
        if arena.chains[c].msg.originator() == Some(commander) && !seen_payloads.contains(&p) && arena.valid(c) {
            seen_payloads.push(p);
            candidates.push(c);
        }
    }
    let honest_targets: Vec<usize> = (0..ctx.validators.len())
        .filter(|&j| {
            let id = ctx.validators[j];
            id != commander && ctx.behaviors[id.0 as usize].attack == ConsensusAttack::None
        })
        .collect();

    for c in candidates {
        if rng.unit() < 0.5 {
            continue;
        }
        // Delay: pad the chain with fresh coalition signatures up to round + 1.
        let mut idx = c;
        let mut ok = true;
        while arena.chains[idx].msg.links.len() < round + 1 {
            let unused = coalition.iter().map(|&i| ctx.validators[i]).find(|id| {
                !arena.chains[idx].msg.signers().any(|s| s == *id)
            });
            match unused {
                Some(id) => idx = arena.relay(idx, id, &ctx.keys[id.0 as usize]),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || idx == c {
            continue;
        }
        for &j in &honest_targets {
            let target = ctx.validators[j];
            if rng.unit() < 0.5 && !arena.chains[idx].msg.signers().any(|s| s == target) {
                outbox[j].push(idx);
                sent += 1;
            }
        }
    }

    for &i in coalition {
        let me = ctx.validators[i];
        if ctx.behaviors[me.0 as usize].attack != ConsensusAttack::WrongForward || round != 1 {
            continue;
        }
        let Some(&base) = view.first() else { continue };
        let mut bytes = arena.chains[base].msg.payload.0;
        bytes[0] ^= 0xff;
        let fake = Hash32(bytes);
        let first = SignedMessage {
            payload: fake,
            links: Vec::new(),
        };
        let target_pk = ctx.ring.get(commander).expect("commander has a key");
        let sig = ctx
            .forgery
            .attempt(target_pk, &first.next_link_message(), rng)
            .unwrap_or(arena.chains[base].msg.links[0].1);
        let forged = first.with_link(commander, sig).countersign(me, &ctx.keys[me.0 as usize]);
        let idx = arena.push(forged, None);
        for &j in &honest_targets {
            if rng.unit() < 0.5 {
                outbox[j].push(idx);
                sent += 1;
            }
        }
    }
    sent
}

/// A proposal altered so that it differs from the original.
pub fn tamper(proposal: &Proposal, shift: f64, num_arms: usize) -> Proposal {
    match proposal {
        Proposal::Empty => Proposal::Placeholder { arm: 0 },
        Proposal::Placeholder { arm } => Proposal::Placeholder {
            arm: (arm + 1) % num_arms,
        },
        Proposal::Trusted(set) => Proposal::Trusted(TrustedSet {
            per_arm: set
                .per_arm
                .iter()
                .map(|arm| arm.iter().map(|&(id, v)| (id, v + shift)).collect())
                .collect(),
        }),
    }
}

/// Highest-count element; ties go to the smallest byte string.
pub fn majority<'a>(items: &[&'a [u8]]) -> Option<&'a [u8]> {
    let mut counts: HashMap<&[u8], usize> = HashMap::new();
    for &it in items {
        *counts.entry(it).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(k, _)| k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommanderRound {
    pub commander: ParticipantId,
    pub derived: Vec<Option<Hash32>>,
    pub votes: Vec<bool>,
    pub messages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Agreed {
        /// Position of the successful commander in the commander list.
        commander_index: usize,
        proposal: Proposal,
    },
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusTranscript {
    pub validators: Vec<ParticipantId>,
    pub commanders: Vec<ParticipantId>,
    pub rounds: Vec<CommanderRound>,
    pub outcome: Outcome,
    pub evidence: Vec<Evidence>,
}

impl ConsensusTranscript {
    pub fn digest(&self) -> Hash32 {
        Hash32::of(&serde_json::to_vec(self).expect("transcripts serialize"))
    }

    pub fn agreed(&self) -> Option<&Proposal> {
        match &self.outcome {
            Outcome::Agreed { proposal, .. } => Some(proposal),
            Outcome::Failed => None,
        }
    }

    pub fn total_messages(&self) -> usize {
        self.rounds.iter().map(|r| r.messages).sum()
    }
}

/// Per-step consensus settings.
pub struct ConsensusParams {
    pub full_iteration: bool,
    pub tamper_shift: f64,
    pub num_arms: usize,
}

/// Iterates commanders in order until a strict majority of validators
/// votes for a commander's broadcast. `proposals[id]` is participant `id`'s
/// own `B_t^m`.
pub fn run_consensus(
    ctx: &SmContext<'_>,
    commanders: &[ParticipantId],
    proposals: &[Proposal],
    params: &ConsensusParams,
    adversary: &mut RngStream,
) -> ConsensusTranscript {
    let n = ctx.validators.len();
    let mut rounds = Vec::with_capacity(commanders.len());
    let mut outcome = Outcome::Failed;
    let mut evidence = Vec::new();
    let own: Vec<Hash32> = ctx
        .validators
        .iter()
        .map(|id| proposals[id.0 as usize].digest())
        .collect();

    for (ci, &commander) in commanders.iter().enumerate() {
        let mine = &proposals[commander.0 as usize];
        let mut table: Vec<(Hash32, &Proposal)> = vec![(mine.digest(), mine)];
        let alt;
        let action = match ctx.behaviors[commander.0 as usize].attack {
            ConsensusAttack::Silent => CommanderAction::Silent,
            ConsensusAttack::Equivocate => {
                alt = tamper(mine, params.tamper_shift, params.num_arms);
                table.push((alt.digest(), &alt));
                CommanderAction::Equivocate(table[0].0, table[1].0)
            }
            _ => CommanderAction::Propose(table[0].0),
        };
        let sm = run_sm(ctx, commander, action, adversary);
        let votes: Vec<bool> = (0..n)
            .map(|i| {
                let b = ctx.behaviors[ctx.validators[i].0 as usize];
                match b.vote {
                    VoteBehavior::Protocol => sm.derived[i] == Some(own[i]),
                    VoteBehavior::Zero => false,
                    VoteBehavior::One => true,
                }
            })
            .collect();
        let yes = votes.iter().filter(|v| **v).count();
        if let Some(ev) = &sm.evidence {
            evidence.push(ev.clone());
        }
        let success = 2 * yes > n && matches!(outcome, Outcome::Failed);
        if success {
            let supported: Vec<&[u8]> = (0..n)
                .filter(|&i| votes[i])
                .filter_map(|i| sm.derived[i].as_ref().map(|h| &h.0[..]))
                .collect();
            let winner = majority(&supported);
            let proposal = winner
                .and_then(|w| table.iter().find(|(h, _)| h.0[..] == *w))
                .map(|(_, p)| (*p).clone())
                .unwrap_or(Proposal::Empty);
            outcome = Outcome::Agreed {
                commander_index: ci,
                proposal,
            };
        }
        rounds.push(CommanderRound {
            commander,
            derived: sm.derived,
            votes,
            messages: sm.messages,
        });
        if success && !params.full_iteration {
            break;
        }
    }
    ConsensusTranscript {
        validators: ctx.validators.to_vec(),
        commanders: commanders.to_vec(),
        rounds,
        outcome,
        evidence,
    }
}

/// Picks a random subset of `pool` of size `k` (used by tests and the
/// randomized harness).
pub fn random_subset<T: Copy>(pool: &[T], k: usize, rng: &mut RngStream) -> Vec<T> {
    pool.choose_multiple(rng, k).copied().collect()
}
