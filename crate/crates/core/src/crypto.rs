//! Simulation-grade signatures, VRF and commitments.
//!
//! Signatures are Schnorr signatures and the VRF is a DLEQ-proof VRF, both
//! over the multiplicative group of the Mersenne prime `2^61 − 1`. The group
//! is far too small to be secure; it gives real sign/verify semantics
//! (wrong key or altered bytes fail) at a cost of a few hundred nanoseconds.
//! Forgery is modeled separately by [`ForgeryOracle`] with an explicit
//! success probability.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::rng::RngStream;
use crate::ParticipantId;

const P: u64 = (1 << 61) - 1;
const ORDER: u64 = P - 1;
/// Smallest primitive root of `2^61 − 1`.
const G: u64 = 37;

/// VRF output width in bits.
pub const VRF_BITS: u32 = 64;

/// A SHA-256 digest, serialized as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub fn of(bytes: &[u8]) -> Self {
        Hash32(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({})", &self.to_hex()[..12])
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        if !text.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(serde::de::Error::custom("digest must be lowercase hex"));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(&text, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Hash32(out))
    }
}

#[inline]
fn reduce(x: u128) -> u64 {
    let mut r = (x as u64 & P) + (x >> 61) as u64;
    // x < 2^122 so r < 2^62 and two conditional subtractions suffice.
    if r >= P {
        r -= P;
    }
    if r >= P {
        r -= P;
    }
    r
}

#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    reduce(a as u128 * b as u128)
}

fn pow_mod(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    base %= P;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base);
        }
        base = mul_mod(base, base);
        exp >>= 1;
    }
    acc
}

#[inline]
fn mul_exp(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % ORDER as u128) as u64
}

fn hash_to_exp(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u32).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap()) % ORDER
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PublicKey(pub u64);

impl PublicKey {
    /// Canonical byte form; key ordering is lexicographic on these bytes.
    pub fn to_bytes(&self) -> [u8; 8] {
        self.0.to_be_bytes()
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey(u64);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    secret: SecretKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub r: u64,
    pub s: u64,
}

/// Deterministic key generation from a seed.
pub fn keygen(seed: u64) -> KeyPair {
    let mut ctr = 0u64;
    loop {
        let sk = hash_to_exp(&[b"bcucb/sk", &seed.to_le_bytes(), &ctr.to_le_bytes()]);
        if sk > 1 {
            return KeyPair {
                public: PublicKey(pow_mod(G, sk)),
                secret: SecretKey(sk),
            };
        }
        ctr += 1;
    }
}

fn challenge(r: u64, pk: PublicKey, msg: &[u8]) -> u64 {
    hash_to_exp(&[b"bcucb/sig", &r.to_le_bytes(), &pk.to_bytes(), msg])
}

fn schnorr(sk: u64, pk: PublicKey, msg: &[u8]) -> Signature {
    let k = hash_to_exp(&[b"bcucb/nonce", &sk.to_le_bytes(), msg]).max(1);
    let r = pow_mod(G, k);
    let e = challenge(r, pk, msg);
    let s = (k as u128 + mul_exp(e, sk) as u128) % ORDER as u128;
    Signature { r, s: s as u64 }
}

impl KeyPair {
    pub fn sign(&self, msg: &[u8]) -> Signature {
        schnorr(self.secret.0, self.public, msg)
    }

    pub fn vrf_eval(&self, seed: u64) -> VrfOutput {
        let sk = self.secret.0;
        let h = hash_to_point(self.public, seed);
        let gamma = pow_mod(h, sk);
        let k = hash_to_exp(&[b"bcucb/vrf-nonce", &sk.to_le_bytes(), &h.to_le_bytes()]).max(1);
        let a = pow_mod(G, k);
        let b = pow_mod(h, k);
        let c = dleq_challenge(h, self.public, gamma, a, b);
        let s = (k as u128 + ORDER as u128 - mul_exp(c, sk) as u128) % ORDER as u128;
        VrfOutput {
            hash: vrf_hash(gamma),
            gamma,
            c,
            s: s as u64,
        }
    }
}

pub fn sign(keys: &KeyPair, msg: &[u8]) -> Signature {
    keys.sign(msg)
}

pub fn verify(pk: PublicKey, msg: &[u8], sig: &Signature) -> bool {
    if pk.0 == 0 || pk.0 >= P || sig.r == 0 || sig.r >= P || sig.s >= ORDER {
        return false;
    }
    let e = challenge(sig.r, pk, msg);
    pow_mod(G, sig.s) == mul_mod(sig.r, pow_mod(pk.0, e))
}

/// Output of the verifiable random function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrfOutput {
    /// `VRF_BITS`-bit pseudorandom value.
    pub hash: u64,
    pub gamma: u64,
    pub c: u64,
    pub s: u64,
}

impl VrfOutput {
    /// `hash / 2^64`, uniform on `[0, 1)`.
    pub fn unit(&self) -> f64 {
        self.hash as f64 / 2f64.powi(VRF_BITS as i32)
    }
}

fn hash_to_point(pk: PublicKey, seed: u64) -> u64 {
    hash_to_exp(&[b"bcucb/vrf-point", &pk.to_bytes(), &seed.to_le_bytes()]) + 1
}

fn dleq_challenge(h: u64, pk: PublicKey, gamma: u64, a: u64, b: u64) -> u64 {
    hash_to_exp(&[
        b"bcucb/dleq",
        &h.to_le_bytes(),
        &pk.to_bytes(),
        &gamma.to_le_bytes(),
        &a.to_le_bytes(),
        &b.to_le_bytes(),
    ])
}

fn vrf_hash(gamma: u64) -> u64 {
    let d = Sha256::new().chain_update(b"bcucb/vrf-out").chain_update(gamma.to_le_bytes()).finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub fn vrf_eval(keys: &KeyPair, seed: u64) -> VrfOutput {
    keys.vrf_eval(seed)
}

pub fn vrf_verify(pk: PublicKey, seed: u64, out: &VrfOutput) -> bool {
    if out.gamma == 0 || out.gamma >= P || out.c >= ORDER || out.s >= ORDER {
        return false;
    }
    if vrf_hash(out.gamma) != out.hash {
        return false;
    }
    let h = hash_to_point(pk, seed);
    let a = mul_mod(pow_mod(G, out.s), pow_mod(pk.0, out.c));
    let b = mul_mod(pow_mod(h, out.s), pow_mod(out.gamma, out.c));
    dleq_challenge(h, pk, out.gamma, a, b) == out.c
}

/// Hiding and binding commitment `SHA-256(tag ‖ value ‖ nonce)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Commitment(pub Hash32);

impl Commitment {
    pub fn commit(value: &[u8], nonce: u64) -> Self {
        let d = Sha256::new()
            .chain_update(b"bcucb/commit")
            .chain_update((value.len() as u64).to_le_bytes())
            .chain_update(value)
            .chain_update(nonce.to_le_bytes())
            .finalize();
        Commitment(Hash32(d.into()))
    }

    pub fn opens_to(&self, value: &[u8], nonce: u64) -> bool {
        Commitment::commit(value, nonce) == *self
    }
}

/// Encodes a pull-count vector for commitment.
pub fn count_bytes(counts: &[u64]) -> Vec<u8> {
    counts.iter().flat_map(|c| c.to_le_bytes()).collect()
}

/// Public keys indexed by participant id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKeyRing {
    keys: Vec<PublicKey>,
}

impl PublicKeyRing {
    pub fn new(keys: Vec<PublicKey>) -> Self {
        Self { keys }
    }

    pub fn get(&self, id: ParticipantId) -> Option<PublicKey> {
        self.keys.get(id.0 as usize).copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParticipantId, PublicKey)> + '_ {
        self.keys.iter().enumerate().map(|(i, &k)| (ParticipantId(i as u32), k))
    }
}

/// A payload (by digest) with an ordered chain of signatures. Link `k`
/// signs the payload digest followed by links `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedMessage {
    pub payload: Hash32,
    pub links: Vec<(ParticipantId, Signature)>,
}

impl SignedMessage {
    fn link_message(payload: &Hash32, prior: &[(ParticipantId, Signature)]) -> Vec<u8> {
        let mut buf = Vec::with_capacity(32 + prior.len() * 20);
        buf.extend_from_slice(&payload.0);
        for (id, sig) in prior {
            buf.extend_from_slice(&id.0.to_le_bytes());
            buf.extend_from_slice(&sig.r.to_le_bytes());
            buf.extend_from_slice(&sig.s.to_le_bytes());
        }
        buf
    }

    pub fn originate(payload: Hash32, signer: ParticipantId, keys: &KeyPair) -> Self {
        let sig = keys.sign(&Self::link_message(&payload, &[]));
        SignedMessage {
            payload,
            links: vec![(signer, sig)],
        }
    }

    /// Appends the relayer's signature.
    pub fn countersign(&self, signer: ParticipantId, keys: &KeyPair) -> Self {
        let sig = keys.sign(&Self::link_message(&self.payload, &self.links));
        let mut links = self.links.clone();
        links.push((signer, sig));
        SignedMessage {
            payload: self.payload,
            links,
        }
    }

    /// Appends an externally obtained signature (possibly forged).
    pub fn with_link(&self, signer: ParticipantId, sig: Signature) -> Self {
        let mut links = self.links.clone();
        links.push((signer, sig));
        SignedMessage {
            payload: self.payload,
            links,
        }
    }

    /// The bytes the next link must sign.
    pub fn next_link_message(&self) -> Vec<u8> {
        Self::link_message(&self.payload, &self.links)
    }

    pub fn originator(&self) -> Option<ParticipantId> {
        self.links.first().map(|(id, _)| *id)
    }

    pub fn signers(&self) -> impl Iterator<Item = ParticipantId> + '_ {
        self.links.iter().map(|(id, _)| *id)
    }

    pub fn verify(&self, ring: &PublicKeyRing) -> bool {
        !self.links.is_empty()
            && (0..self.links.len()).all(|k| {
                let (id, sig) = self.links[k];
                match ring.get(id) {
                    Some(pk) => verify(pk, &Self::link_message(&self.payload, &self.links[..k]), &sig),
                    None => false,
                }
            })
    }
}

/// Memoizes per-link verification results within one consensus run.
#[derive(Debug, Default)]
pub struct VerifyCache {
    seen: HashMap<(ParticipantId, Signature, Hash32), bool>,
}

impl VerifyCache {
    pub fn verify(&mut self, msg: &SignedMessage, ring: &PublicKeyRing) -> bool {
        if msg.links.is_empty() {
            return false;
        }
        for k in 0..msg.links.len() {
            let (id, sig) = msg.links[k];
            let bytes = SignedMessage::link_message(&msg.payload, &msg.links[..k]);
            let key = (id, sig, Hash32::of(&bytes));
            let ok = match self.seen.get(&key) {
                Some(&ok) => ok,
                None => {
                    let ok = ring.get(id).is_some_and(|pk| verify(pk, &bytes, &sig));
                    self.seen.insert(key, ok);
                    ok
                }
            };
            if !ok {
                return false;
            }
        }
        true
    }
}

/// The adversary's forging capability. It holds every secret key, which is
/// how a successful existential forgery is realized: with probability
/// `forge_prob` it returns a valid signature for the target.
#[derive(Debug, Clone)]
pub struct ForgeryOracle {
    keys: Vec<KeyPair>,
    forge_prob: f64,
}

impl ForgeryOracle {
    pub fn new(keys: Vec<KeyPair>, forge_prob: f64) -> Self {
        Self { keys, forge_prob }
    }

    pub fn forge_prob(&self) -> f64 {
        self.forge_prob
    }

    pub fn attempt(&self, target: PublicKey, msg: &[u8], stream: &mut RngStream) -> Option<Signature> {
        forge_attempt(&self.keys, target, msg, self.forge_prob, stream)
    }
}

/// One forgery attempt against `target`.
pub fn forge_attempt(
    keyring: &[KeyPair],
    target: PublicKey,
    msg: &[u8],
    forge_prob: f64,
    stream: &mut RngStream,
) -> Option<Signature> {
    if forge_prob <= 0.0 || stream.unit() >= forge_prob {
        return None;
    }
    keyring.iter().find(|k| k.public == target).map(|k| k.sign(msg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    #[test]
    fn generator_is_primitive() {
        let factors = [2u64, 3, 5, 7, 11, 13, 31, 41, 61, 151, 331, 1321];
        let mut n = ORDER;
        for q in factors {
            while n.is_multiple_of(q) {
                n /= q;
            }
            assert_ne!(pow_mod(G, ORDER / q), 1, "order divides (p-1)/{q}");
        }
        assert_eq!(n, 1, "factor list must cover p - 1");
    }

    #[test]
    fn reduction_matches_naive_modulus() {
        let cases = [(P - 1, P - 1), (P - 1, 2), (1 << 60, 1 << 60), (12345, 67890), (0, P - 1)];
        for (a, b) in cases {
            assert_eq!(mul_mod(a, b) as u128, (a as u128 * b as u128) % P as u128);
        }
    }

    #[test]
    fn keygen_is_deterministic_and_seed_sensitive() {
        assert_eq!(keygen(7), keygen(7));
        assert_ne!(keygen(7).public, keygen(8).public);
    }

    #[test]
    fn sign_verify_round_trip() {
        let k = keygen(7);
        let sig = k.sign(b"x");
        assert!(verify(k.public, b"x", &sig));
        assert!(!verify(k.public, b"y", &sig));
        assert!(!verify(keygen(8).public, b"x", &sig));
    }

    #[test]
    fn zero_forge_probability_never_forges() {
        let keys: Vec<KeyPair> = (0..3).map(keygen).collect();
        let mut s = RngStream::new(1, StreamId::Adversary);
        for _ in 0..1000 {
            assert!(forge_attempt(&keys, keys[0].public, b"m", 0.0, &mut s).is_none());
        }
    }

    #[test]
    fn forged_signature_verifies() {
        let keys: Vec<KeyPair> = (0..3).map(keygen).collect();
        let mut s = RngStream::new(1, StreamId::Adversary);
        let forged = (0..100)
            .find_map(|_| forge_attempt(&keys, keys[1].public, b"m", 0.5, &mut s))
            .unwrap();
        assert!(verify(keys[1].public, b"m", &forged));
    }

    #[test]
    fn vrf_round_trip_and_tamper() {
        let k = keygen(3);
        let out = k.vrf_eval(99);
        assert_eq!(out, k.vrf_eval(99));
        assert!(vrf_verify(k.public, 99, &out));
        assert!(!vrf_verify(k.public, 100, &out));
        assert!(!vrf_verify(keygen(4).public, 99, &out));
        let tampered = VrfOutput {
            hash: out.hash ^ 1,
            ..out
        };
        assert!(!vrf_verify(k.public, 99, &tampered));
    }

    #[test]
    fn signature_chain_verifies_and_detects_reordering() {
        let keys: Vec<KeyPair> = (0..3).map(keygen).collect();
        let ring = PublicKeyRing::new(keys.iter().map(|k| k.public).collect());
        let payload = Hash32::of(b"proposal");
        let m = SignedMessage::originate(payload, ParticipantId(0), &keys[0])
            .countersign(ParticipantId(1), &keys[1])
            .countersign(ParticipantId(2), &keys[2]);
        assert!(m.verify(&ring));
        let mut cache = VerifyCache::default();
        assert!(cache.verify(&m, &ring));
        let mut swapped = m.clone();
        swapped.links.swap(1, 2);
        assert!(!swapped.verify(&ring));
        assert!(!cache.verify(&swapped, &ring));
        let mut other = m.clone();
        other.payload = Hash32::of(b"other");
        assert!(!other.verify(&ring));
    }

    #[test]
    fn commitment_opens_only_to_committed_value() {
        let c = Commitment::commit(&count_bytes(&[3, 4]), 11);
        assert!(c.opens_to(&count_bytes(&[3, 4]), 11));
        assert!(!c.opens_to(&count_bytes(&[3, 5]), 11));
        assert!(!c.opens_to(&count_bytes(&[3, 4]), 12));
    }

    #[test]
    fn hash32_hex_round_trip() {
        let h = Hash32::of(b"abc");
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(serde_json::from_str::<Hash32>(&json).unwrap(), h);
    }
}
