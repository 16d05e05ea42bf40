//! Integrated-key generation, key evolution and chained XOR packet cipher.
//!
//! A key is the 256-bit concatenation `k1 ‖ k2 ‖ k3` of a 96-bit word seeded
//! by location information, the 64-bit node identity, and a 96-bit word seeded
//! by the round-trip time and bound to the first plaintext segment. Bit 0 is
//! the most significant bit of the first byte of the serialized key, so
//! bits `[0,96)` are bytes `0..12`, `[96,160)` are bytes `12..20` and
//! `[160,256)` are bytes `20..32`.
//!
//! The two seeded generators are truncated SplitMix64 expansions with
//! distinct domain constants. This is a simulation-fidelity cipher, not a
//! security primitive.

use std::fmt;
use std::ops::BitXor;

use thiserror::Error;

pub const K1_BITS: u32 = 96;
pub const K2_BITS: u32 = 64;
pub const K3_BITS: u32 = 96;
pub const KEY_BITS: u32 = K1_BITS + K2_BITS + K3_BITS;
pub const KEY_BYTES: usize = (KEY_BITS / 8) as usize;
pub const BLOCK_BYTES: usize = KEY_BYTES;

const K1_RANGE: std::ops::Range<usize> = 0..12;
const K2_RANGE: std::ops::Range<usize> = 12..20;
const K3_RANGE: std::ops::Range<usize> = 20..32;

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const RNG1_DOMAIN: u64 = 0x01;
const RNG2_DOMAIN: u64 = 0x02;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed packet: {len} bytes is not a positive multiple of {BLOCK_BYTES}")]
    MalformedPacket { len: usize },
    #[error("packet padding is missing or corrupt")]
    BadPadding,
}

/// A 96-bit word held in the low bits of a `u128`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Word96(u128);

impl Word96 {
    pub const MASK: u128 = (1u128 << 96) - 1;

    pub const fn new(value: u128) -> Self {
        Word96(value & Self::MASK)
    }

    pub const fn value(self) -> u128 {
        self.0
    }

    pub fn to_be_bytes(self) -> [u8; 12] {
        let mut out = [0u8; 12];
        out.copy_from_slice(&self.0.to_be_bytes()[4..]);
        out
    }

    pub fn from_be_bytes(bytes: &[u8]) -> Self {
        assert_eq!(bytes.len(), 12, "a 96-bit word is 12 bytes");
        let mut wide = [0u8; 16];
        wide[4..].copy_from_slice(bytes);
        Word96(u128::from_be_bytes(wide))
    }
}

impl BitXor for Word96 {
    type Output = Word96;

    fn bitxor(self, rhs: Word96) -> Word96 {
        Word96(self.0 ^ rhs.0)
    }
}

impl fmt::Debug for Word96 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word96({:024x})", self.0)
    }
}

impl fmt::LowerHex for Word96 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:024x}", self.0)
    }
}

/// One step of SplitMix64: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit stream seed from a master seed and a tag.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut tag_state = tag;
    let mut state = master ^ splitmix64(&mut tag_state);
    splitmix64(&mut state)
}

fn expand(seed: u128, domain: u64) -> Word96 {
    let folded = ((seed >> 64) as u64) ^ (seed as u64);
    let mut state = folded ^ domain;
    let hi = splitmix64(&mut state);
    let lo = splitmix64(&mut state);
    Word96::new(((hi as u128) << 32) | (lo >> 32) as u128)
}

/// Location-seeded generator. 64-bit seeds are zero-extended.
pub fn rng1(seed: u128) -> Word96 {
    expand(seed, RNG1_DOMAIN)
}

/// RTT-seeded generator. 64-bit seeds are zero-extended.
pub fn rng2(seed: u128) -> Word96 {
    expand(seed, RNG2_DOMAIN)
}

/// The two seeds both endpoints derive independently before a handshake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SeedPair {
    /// Whole meters in bits `[0,32)`, whole degrees in bits `[32,64)`.
    pub loc_seed: u64,
    /// Round-trip time in whole buckets.
    pub rtt_seed: u64,
}

impl SeedPair {
    pub fn new(loc_seed: u64, rtt_seed: u64) -> Self {
        SeedPair { loc_seed, rtt_seed }
    }

    /// Quantizes a measured geometry and round-trip time. Each quantity is
    /// rounded to the nearest unit; the bearing wraps into `[0,360)`.
    pub fn quantize(distance_m: f64, bearing_deg: f64, rtt_s: f64, rtt_bucket_s: f64) -> Self {
        let meters = distance_m.max(0.0).round().min(u32::MAX as f64) as u64;
        let degrees = (bearing_deg.round() as i64).rem_euclid(360) as u64;
        let buckets = (rtt_s.max(0.0) / rtt_bucket_s).round() as u64;
        SeedPair {
            loc_seed: (degrees << 32) | meters,
            rtt_seed: buckets,
        }
    }

    pub fn distance_m(&self) -> u32 {
        self.loc_seed as u32
    }

    pub fn bearing_deg(&self) -> u32 {
        (self.loc_seed >> 32) as u32
    }
}

/// The 256-bit integrated key `k1 ‖ k2 ‖ k3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntegratedKey {
    pub k1: Word96,
    pub k2: u64,
    pub k3: Word96,
}

impl IntegratedKey {
    pub fn to_bytes(&self) -> [u8; KEY_BYTES] {
        let mut out = [0u8; KEY_BYTES];
        out[K1_RANGE].copy_from_slice(&self.k1.to_be_bytes());
        out[K2_RANGE].copy_from_slice(&self.k2.to_be_bytes());
        out[K3_RANGE].copy_from_slice(&self.k3.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; KEY_BYTES]) -> Self {
        let mut k2 = [0u8; 8];
        k2.copy_from_slice(&bytes[K2_RANGE]);
        IntegratedKey {
            k1: Word96::from_be_bytes(&bytes[K1_RANGE]),
            k2: u64::from_be_bytes(k2),
            k3: Word96::from_be_bytes(&bytes[K3_RANGE]),
        }
    }

    /// Bits `[0,128)` as a big-endian integer.
    pub fn first_half(&self) -> u128 {
        let bytes = self.to_bytes();
        let mut half = [0u8; 16];
        half.copy_from_slice(&bytes[..16]);
        u128::from_be_bytes(half)
    }

    /// Bits `[128,256)` as a big-endian integer.
    pub fn second_half(&self) -> u128 {
        let bytes = self.to_bytes();
        let mut half = [0u8; 16];
        half.copy_from_slice(&bytes[16..]);
        u128::from_be_bytes(half)
    }

    pub const fn bit_width(&self) -> u32 {
        KEY_BITS
    }
}

impl fmt::LowerHex for IntegratedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.to_bytes() {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// log2 of the key space and of the mean brute-force cost.
pub const fn keyspace_log2() -> u32 {
    KEY_BITS
}

pub const fn brute_force_mean_trials_log2() -> u32 {
    KEY_BITS - 1
}

/// A plaintext packet; the payload is a whole number of 256-bit blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsemblePacket {
    pub payload: Vec<u8>,
    /// Ordinal within the chain, starting at 1.
    pub index: u32,
}

impl EnsemblePacket {
    /// Pads `data` with a single set bit followed by zeros up to the next
    /// block boundary. Always adds at least one byte.
    pub fn padded(data: &[u8], index: u32) -> Self {
        let mut payload = Vec::with_capacity(data.len() + BLOCK_BYTES);
        payload.extend_from_slice(data);
        payload.push(0x80);
        while payload.len() % BLOCK_BYTES != 0 {
            payload.push(0);
        }
        EnsemblePacket { payload, index }
    }

    pub fn unpadded(&self) -> Result<&[u8], CryptoError> {
        let last = self.payload.iter().rposition(|&b| b != 0).ok_or(CryptoError::BadPadding)?;
        if self.payload[last] != 0x80 {
            return Err(CryptoError::BadPadding);
        }
        Ok(&self.payload[..last])
    }

    /// Bits `[0,96)` of the first block.
    pub fn first_segment(&self) -> Result<Word96, CryptoError> {
        check_len(self.payload.len())?;
        Ok(Word96::from_be_bytes(&self.payload[K1_RANGE]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherPacket {
    pub payload: Vec<u8>,
    pub index: u32,
}

fn check_len(len: usize) -> Result<(), CryptoError> {
    if len == 0 || !len.is_multiple_of(BLOCK_BYTES) {
        return Err(CryptoError::MalformedPacket { len });
    }
    Ok(())
}

fn xor_blocks(data: &[u8], key: &IntegratedKey) -> Vec<u8> {
    let stream = key.to_bytes();
    data.chunks_exact(BLOCK_BYTES)
        .flat_map(|block| block.iter().zip(stream.iter()).map(|(b, k)| b ^ k))
        .collect()
}

pub fn derive_initial_key(seeds: SeedPair, id: u64, first_plain_seg: Word96) -> IntegratedKey {
    IntegratedKey {
        k1: rng1(seeds.loc_seed as u128),
        k2: id,
        k3: rng2(seeds.rtt_seed as u128) ^ first_plain_seg,
    }
}

/// Next key in a chain: each half of `prev` seeds one generator.
pub fn evolve_key(prev: &IntegratedKey, id: u64) -> IntegratedKey {
    IntegratedKey {
        k1: rng1(prev.first_half()),
        k2: id,
        k3: rng2(prev.second_half()),
    }
}

pub fn encrypt_packet(plain: &EnsemblePacket, key: &IntegratedKey) -> Result<CipherPacket, CryptoError> {
    check_len(plain.payload.len())?;
    Ok(CipherPacket {
        payload: xor_blocks(&plain.payload, key),
        index: plain.index,
    })
}

pub fn decrypt_packet(cipher: &CipherPacket, key: &IntegratedKey) -> Result<EnsemblePacket, CryptoError> {
    check_len(cipher.payload.len())?;
    Ok(EnsemblePacket {
        payload: xor_blocks(&cipher.payload, key),
        index: cipher.index,
    })
}

/// Receiver-side initial key. `k1` is computed locally, which exposes the
/// first plaintext segment under the first cipher segment; `k3` follows.
pub fn reconstruct_initial_key(
    cipher_first: &CipherPacket,
    seeds: SeedPair,
    id: u64,
) -> Result<IntegratedKey, CryptoError> {
    check_len(cipher_first.payload.len())?;
    let k1 = rng1(seeds.loc_seed as u128);
    let plain_seg = Word96::from_be_bytes(&cipher_first.payload[K1_RANGE]) ^ k1;
    Ok(IntegratedKey {
        k1,
        k2: id,
        k3: rng2(seeds.rtt_seed as u128) ^ plain_seg,
    })
}

/// Infinite key sequence starting at an initial key.
#[derive(Debug, Clone)]
pub struct KeyChain {
    next: IntegratedKey,
    id: u64,
}

impl KeyChain {
    pub fn new(initial: IntegratedKey) -> Self {
        KeyChain { id: initial.k2, next: initial }
    }
}

impl Iterator for KeyChain {
    type Item = IntegratedKey;

    fn next(&mut self) -> Option<IntegratedKey> {
        let current = self.next;
        self.next = evolve_key(&current, self.id);
        Some(current)
    }
}

/// Encrypts a chain of packets, one evolved key per packet.
pub fn encrypt_chain(
    packets: &[EnsemblePacket],
    seeds: SeedPair,
    id: u64,
) -> Result<Vec<CipherPacket>, CryptoError> {
    let first = packets.first().ok_or(CryptoError::MalformedPacket { len: 0 })?;
    let chain = KeyChain::new(derive_initial_key(seeds, id, first.first_segment()?));
    packets.iter().zip(chain).map(|(p, k)| encrypt_packet(p, &k)).collect()
}

pub fn decrypt_chain(
    ciphers: &[CipherPacket],
    seeds: SeedPair,
    id: u64,
) -> Result<Vec<EnsemblePacket>, CryptoError> {
    let first = ciphers.first().ok_or(CryptoError::MalformedPacket { len: 0 })?;
    let chain = KeyChain::new(reconstruct_initial_key(first, seeds, id)?);
    ciphers.iter().zip(chain).map(|(c, k)| decrypt_packet(c, &k)).collect()
}

/// 64-bit XOR fold of a payload, used as the validation digest.
pub fn xor_fold(payload: &[u8]) -> u64 {
    payload.chunks(8).fold(0u64, |acc, chunk| {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        acc ^ u64::from_be_bytes(word)
    })
}
