//! Smart contracts (`sc_sort`, global update, `sc_block`) and the chain.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::config::UpdateRule;
use crate::crypto::{Commitment, Hash32, PublicKeyRing, Signature};
use crate::ParticipantId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error("no public key for participant {0}")]
    MissingKey(ParticipantId),
    #[error("block index {got} does not extend a chain of length {len}")]
    BadIndex { got: u64, len: u64 },
    #[error("block {index} does not link to the chain head")]
    BadLink { index: u64 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("block at position {position} failed validation: {reason}")]
    Tampered { position: u64, reason: String },
    #[error("i/o error while reading chain: {0}")]
    Io(String),
}

impl ChainError {
    pub fn position(&self) -> Option<u64> {
        match self {
            ChainError::Tampered { position, .. } => Some(*position),
            ChainError::Io(_) => None,
        }
    }
}

/// Orders validators by public-key bytes.
pub fn sc_sort(ids: &[ParticipantId], ring: &PublicKeyRing) -> Result<Vec<ParticipantId>, ContractError> {
    let mut keyed = Vec::with_capacity(ids.len());
    for &id in ids {
        let pk = ring.get(id).ok_or(ContractError::MissingKey(id))?;
        keyed.push((pk.to_bytes(), id));
    }
    keyed.sort_unstable();
    Ok(keyed.into_iter().map(|(_, id)| id).collect())
}

/// Contract-side memory of the last approved estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateState {
    /// Last finite `μ̃` per arm (genesis zeros).
    pub prior: Vec<f64>,
    /// Last step whose block was approved.
    pub tau: u64,
}

impl UpdateState {
    pub fn genesis(num_arms: usize) -> Self {
        Self {
            prior: vec![0.0; num_arms],
            tau: 0,
        }
    }

    /// Records an approved estimate.
    pub fn commit(&mut self, t: u64, global: &[f64]) {
        for (p, &g) in self.prior.iter_mut().zip(global) {
            if g.is_finite() {
                *p = g;
            }
        }
        self.tau = t;
    }
}

/// `μ̃(t)` from the step's aggregate `input` (the trimmed mean for Halving
/// and Contraction, the safe-zone mean for SafeZone). Infinite inputs stay
/// infinite.
pub fn global_update(rule: UpdateRule, input: &[f64], state: &UpdateState, t: u64) -> Vec<f64> {
    input
        .iter()
        .zip(&state.prior)
        .map(|(&x, &prior)| {
            if !x.is_finite() {
                return f64::INFINITY;
            }
            match rule {
                UpdateRule::Halving => 0.5 * (x + prior),
                UpdateRule::Contraction | UpdateRule::SafeZone => {
                    let p = 1.0 - 1.0 / t as f64;
                    p * prior + (1.0 - p) * x
                }
            }
        })
        .collect()
}

/// `b_t`: some entry is finite and every finite entry is at most 2.
pub fn sc_block_verify(global: &[f64]) -> bool {
    global.iter().any(|g| g.is_finite()) && global.iter().filter(|g| g.is_finite()).all(|&g| g <= 2.0)
}

/// A participant's signed broadcast for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedEstimate {
    pub participant: ParticipantId,
    pub values: Vec<f64>,
    pub signature: Signature,
}

impl SignedEstimate {
    pub fn message(t: u64, participant: ParticipantId, values: &[f64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + values.len() * 8);
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&participant.0.to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonestRewards {
    pub participant: ParticipantId,
    /// One draw per arm; only the pulled entry was delivered.
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub prev: Hash32,
    pub approved: bool,
    /// `μ̃(t)`; `None` marks an infinite entry.
    pub global: Vec<Option<f64>>,
    pub broadcasts: Vec<SignedEstimate>,
    pub count_commitments: Vec<Commitment>,
    pub trusted: Vec<Vec<ParticipantId>>,
    pub placeholder_arm: Option<usize>,
    pub arms: Vec<usize>,
    pub honest_rewards: Vec<HonestRewards>,
    pub transcript: Hash32,
    pub cost: f64,
}

impl Block {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("blocks always serialize")
    }

    pub fn digest(&self) -> Hash32 {
        Hash32::of(&self.canonical_bytes())
    }

    pub fn signatures_verify(&self, ring: &PublicKeyRing) -> bool {
        self.broadcasts.iter().all(|b| {
            ring.get(b.participant).is_some_and(|pk| {
                crate::crypto::verify(pk, &SignedEstimate::message(self.index, b.participant, &b.values), &b.signature)
            })
        })
    }
}

/// How much of the chain a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// Keep every block.
    #[default]
    Full,
    /// Keep only the running head digest.
    HeadOnly,
    /// Build no blocks at all.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    blocks: Vec<Block>,
    digests: Vec<Hash32>,
    head: Hash32,
    len: u64,
    keep: bool,
}

impl Chain {
    pub fn new(keep_blocks: bool) -> Self {
        Self {
            blocks: Vec::new(),
            digests: Vec::new(),
            head: Hash32::default(),
            len: 0,
            keep: keep_blocks,
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn head(&self) -> Hash32 {
        self.head
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn append(&mut self, block: Block) -> Result<Hash32, ContractError> {
        if block.index != self.len + 1 {
            return Err(ContractError::BadIndex {
                got: block.index,
                len: self.len,
            });
        }
        if block.prev != self.head {
            return Err(ContractError::BadLink { index: block.index });
        }
        let digest = block.digest();
        self.head = digest;
        self.len += 1;
        if self.keep {
            self.blocks.push(block);
            self.digests.push(digest);
        }
        Ok(digest)
    }

    /// Writes one `{"digest":..,"block":..}` record per line.
    pub fn export_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (block, digest) in self.blocks.iter().zip(&self.digests) {
            let body = String::from_utf8(block.canonical_bytes()).expect("json is utf-8");
            writeln!(out, "{{\"digest\":\"{}\",\"block\":{}}}", digest.to_hex(), body)?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct Record<'a> {
    digest: Hash32,
    #[serde(borrow)]
    block: &'a RawValue,
}

/// Re-validates an exported chain and returns its blocks. Positions are
/// 1-based and equal block indices on an untampered chain.
pub fn validate_jsonl<R: BufRead>(input: R, ring: Option<&PublicKeyRing>) -> Result<Vec<Block>, ChainError> {
    let mut blocks = Vec::new();
    let mut head = Hash32::default();
    for (i, line) in input.lines().enumerate() {
        let position = i as u64 + 1;
        let line = line.map_err(|e| ChainError::Io(e.to_string()))?;
        let fail = |reason: String| ChainError::Tampered { position, reason };
        let record: Record<'_> = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        let raw = record.block.get();
        if Hash32::of(raw.as_bytes()) != record.digest {
            return Err(fail("digest mismatch".into()));
        }
        let block: Block = serde_json::from_str(raw).map_err(|e| fail(e.to_string()))?;
        if block.index != position {
            return Err(fail(format!("index {} out of sequence", block.index)));
        }
        if block.prev != head {
            return Err(fail("broken link".into()));
        }
        if let Some(ring) = ring {
            if !block.signatures_verify(ring) {
                return Err(fail("broadcast signature does not verify".into()));
            }
        }
        head = record.digest;
        blocks.push(block);
    }
    Ok(blocks)
}

/// Rebuilds every participant's pull counts from the recorded arms of
/// approved blocks.
pub fn replay_counts(blocks: &[Block], num_participants: usize, num_arms: usize) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; num_arms]; num_participants];
    for b in blocks.iter().filter(|b| b.approved) {
        for (m, &a) in b.arms.iter().enumerate() {
            counts[m][a] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;

    #[test]
    fn halving_and_contraction_examples() {
        let st = UpdateState {
            prior: vec![0.4],
            tau: 3,
        };
        assert!((global_update(UpdateRule::Halving, &[0.6], &st, 5)[0] - 0.5).abs() < 1e-12);
        let st = UpdateState {
            prior: vec![0.5],
            tau: 9,
        };
        assert!((global_update(UpdateRule::Contraction, &[0.9], &st, 10)[0] - 0.54).abs() < 1e-12);
        assert!(global_update(UpdateRule::Halving, &[f64::INFINITY], &st, 10)[0].is_infinite());
    }

    #[test]
    fn block_verify_examples() {
        assert!(!sc_block_verify(&[f64::INFINITY, f64::INFINITY]));
        assert!(sc_block_verify(&[0.5, 0.7]));
        assert!(!sc_block_verify(&[2.5, 0.7]));
    }

    #[test]
    fn sort_by_key_bytes() {
        let keys: Vec<_> = (0..6).map(keygen).collect();
        let ring = PublicKeyRing::new(keys.iter().map(|k| k.public).collect());
        let ids: Vec<ParticipantId> = (0..6).map(ParticipantId).collect();
        let sorted = sc_sort(&ids, &ring).unwrap();
        let mut rev = ids.clone();
        rev.reverse();
        assert_eq!(sc_sort(&rev, &ring).unwrap(), sorted);
        for w in sorted.windows(2) {
            assert!(ring.get(w[0]).unwrap().to_bytes() < ring.get(w[1]).unwrap().to_bytes());
        }
        assert_eq!(sc_sort(&[ParticipantId(3)], &ring).unwrap(), vec![ParticipantId(3)]);
        assert!(sc_sort(&[ParticipantId(9)], &ring).is_err());
    }

    fn block(index: u64, prev: Hash32) -> Block {
        Block {
            index,
            prev,
            approved: true,
            global: vec![Some(0.5), None],
            broadcasts: vec![],
            count_commitments: vec![],
            trusted: vec![vec![ParticipantId(0)], vec![]],
            placeholder_arm: None,
            arms: vec![0, 1],
            honest_rewards: vec![],
            transcript: Hash32::default(),
            cost: 0.0,
        }
    }

    #[test]
    fn append_checks_index_and_link() {
        let mut c = Chain::new(true);
        let h1 = c.append(block(1, Hash32::default())).unwrap();
        assert_eq!(c.len(), 1);
        assert!(matches!(c.append(block(3, h1)), Err(ContractError::BadIndex { .. })));
        assert!(matches!(c.append(block(2, Hash32::default())), Err(ContractError::BadLink { .. })));
        c.append(block(2, h1)).unwrap();
        let mut buf = Vec::new();
        c.export_jsonl(&mut buf).unwrap();
        let blocks = validate_jsonl(&buf[..], None).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(replay_counts(&blocks, 2, 2), vec![vec![2, 0], vec![0, 2]]);
    }
}
