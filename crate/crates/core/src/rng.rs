//! Deterministic randomness.
//!
//! Every consumer of randomness owns a [`RngStream`] derived from the
//! scenario's master seed and a [`StreamId`]. Streams are seeded through
//! SHA-256 so that distinct ids yield unrelated ChaCha8 states and no stream
//! can observe or perturb another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ParticipantId;

/// Identifies an independent random stream inside one scenario replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StreamId {
    /// Private randomness of a participant (attack choices, commitment nonces).
    Participant(ParticipantId),
    /// Reward draws the environment makes on behalf of a participant.
    Rewards(ParticipantId),
    /// The environment itself (cost value).
    Environment,
    /// Public selection randomness.
    Selection,
    /// The adversary's scheduling choices inside consensus.
    Adversary,
}

impl StreamId {
    fn label(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12);
        match self {
            StreamId::Participant(id) => {
                out.push(1);
                out.extend_from_slice(&id.0.to_le_bytes());
            }
            StreamId::Rewards(id) => {
                out.push(2);
                out.extend_from_slice(&id.0.to_le_bytes());
            }
            StreamId::Environment => out.push(3),
            StreamId::Selection => out.push(4),
            StreamId::Adversary => out.push(5),
        }
        out
    }
}

/// A seeded random stream with a draw counter.
#[derive(Debug, Clone)]
pub struct RngStream {
    id: StreamId,
    counter: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, id: StreamId) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"bcucb/stream/v1");
        hasher.update(master_seed.to_le_bytes());
        hasher.update(id.label());
        let seed: [u8; 32] = hasher.finalize().into();
        Self {
            id,
            counter: 0,
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Number of 32/64-bit words drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.counter += 1;
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.counter += dst.len().div_ceil(4) as u64;
        self.rng.fill_bytes(dst)
    }
}

/// Derives one stream per id. Output order follows `ids`.
pub fn derive_streams(master_seed: u64, ids: &[StreamId]) -> Vec<RngStream> {
    ids.iter().map(|&id| RngStream::new(master_seed, id)).collect()
}

fn labelled_u64(master_seed: u64, tag: &[u8], index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(tag);
    hasher.update(master_seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// The public per-round seed shared by every participant.
pub fn round_seed(master_seed: u64, t: u64) -> u64 {
    labelled_u64(master_seed, b"bcucb/round-seed/v1", t)
}

/// Public seed for commander sortition, independent of [`round_seed`].
pub fn commander_seed(master_seed: u64, t: u64) -> u64 {
    labelled_u64(master_seed, b"bcucb/commander-seed/v1", t)
}

/// The publicly known key-generation seed of a participant.
pub fn key_seed(master_seed: u64, id: ParticipantId) -> u64 {
    labelled_u64(master_seed, b"bcucb/key-seed/v1", id.0 as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: u32) -> StreamId {
        StreamId::Participant(ParticipantId(i))
    }

    #[test]
    fn repeated_derivation_is_identical() {
        let mut a = derive_streams(7, &[p(0), p(1)]);
        let mut b = derive_streams(7, &[p(0), p(1)]);
        for (x, y) in a.iter_mut().zip(b.iter_mut()) {
            for _ in 0..32 {
                assert_eq!(x.next_u64(), y.next_u64());
            }
        }
    }

    #[test]
    fn master_seed_changes_first_draw() {
        for seed in 0..100u64 {
            let mut a = RngStream::new(seed, p(0));
            let mut b = RngStream::new(seed + 1, p(0));
            assert_ne!(a.next_u64(), b.next_u64(), "seed {seed}");
        }
    }

    #[test]
    fn streams_do_not_interfere() {
        let mut fresh = derive_streams(7, &[p(0), p(1)]);
        let expected = fresh[1].next_u64();
        let mut streams = derive_streams(7, &[p(0), p(1)]);
        for _ in 0..10_000 {
            streams[0].next_u64();
        }
        assert_eq!(streams[1].next_u64(), expected);
        assert_eq!(streams[0].counter(), 10_000);
    }

    #[test]
    fn distinct_ids_are_distinct_streams() {
        let ids = [
            p(0),
            p(1),
            StreamId::Rewards(ParticipantId(0)),
            StreamId::Environment,
            StreamId::Selection,
            StreamId::Adversary,
        ];
        let firsts: Vec<u64> = derive_streams(3, &ids).iter_mut().map(|s| s.next_u64()).collect();
        let mut dedup = firsts.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), firsts.len());
    }

    #[test]
    fn unit_draws_lie_in_half_open_interval() {
        let mut s = RngStream::new(11, StreamId::Environment);
        for _ in 0..10_000 {
            let u = s.unit();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
