//! Keyed MAC backends and element hashing.
//!
//! Every integrity check in the crate funnels through [`Authenticator`]. Three
//! software backends stand in for the hardware MACs the design targets:
//!
//! * `cmac128` - AES-128-CMAC (RFC 4493), full 128-bit tags.
//! * `pac32` - a 64-bit-at-a-time keyed PRF with 32-bit output, modelling the
//!   AArch64 `pacga` instruction. Multi-word inputs are chained by feeding the
//!   previous 32-bit result back in as the modifier.
//! * `trunc:<b>` - `cmac128` truncated to its low `b` bits, for collision
//!   experiments at small widths.
//!
//! A fourth backend, `ro:<b>`, is a lazily-sampled random oracle used by the
//! security games.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use cmac::{Cmac, Mac as _};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};
use subtle::ConstantTimeEq;

use crate::error::{Error, Result};

pub const KEY_LEN: usize = 16;
pub const MAX_TAG_WIDTH: u32 = 128;

/// Domain-separation byte placed first in every serialized [`MacInput`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Domain {
    /// Uncategorised inputs (collision experiments).
    Raw = 0,
    StackData = 1,
    QueueData = 2,
    QueueState = 3,
    MerkleLeaf = 4,
    MerkleNode = 5,
    RbNode = 6,
    RbHeader = 7,
}

impl Domain {
    pub const ALL: [Domain; 8] = [
        Domain::Raw,
        Domain::StackData,
        Domain::QueueData,
        Domain::QueueState,
        Domain::MerkleLeaf,
        Domain::MerkleNode,
        Domain::RbNode,
        Domain::RbHeader,
    ];
}

/// Secret MAC key. Lives only in [`Authenticator`] state, never in a
/// `TamperRegion`.
#[derive(Clone, PartialEq, Eq)]
pub struct MacKey([u8; KEY_LEN]);

impl MacKey {
    /// Deterministic when `seed` is given, otherwise drawn from OS entropy.
    pub fn generate(seed: Option<u64>) -> Self {
        let mut bytes = [0u8; KEY_LEN];
        match seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed).fill_bytes(&mut bytes),
            None => rand::rngs::OsRng.fill_bytes(&mut bytes),
        }
        MacKey(bytes)
    }

    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        MacKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for MacKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MacKey(..)")
    }
}

/// Shorthand for [`MacKey::generate`].
pub fn key_generate(seed: Option<u64>) -> MacKey {
    MacKey::generate(seed)
}

fn width_mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

/// A `width`-bit authentication tag. Equality is constant-time.
#[derive(Clone, Copy)]
pub struct MacTag {
    bits: u128,
    width: u8,
}

impl MacTag {
    pub fn new(bits: u128, width: u32) -> Result<Self> {
        if width == 0 || width > MAX_TAG_WIDTH {
            return Err(Error::UnsupportedWidth(width));
        }
        if bits & !width_mask(width) != 0 {
            return Err(Error::Config(format!(
                "tag value does not fit in {width} bits"
            )));
        }
        Ok(MacTag {
            bits,
            width: width as u8,
        })
    }

    pub fn zero(width: u32) -> Self {
        debug_assert!((1..=MAX_TAG_WIDTH).contains(&width));
        MacTag {
            bits: 0,
            width: width as u8,
        }
    }

    pub(crate) fn truncated(bits: u128, width: u32) -> Self {
        MacTag {
            bits: bits & width_mask(width),
            width: width as u8,
        }
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn width(&self) -> u32 {
        self.width as u32
    }

    /// Bytes a tag of this width occupies in memory.
    pub fn byte_len(&self) -> usize {
        tag_byte_len(self.width())
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.bits.to_le_bytes()[..self.byte_len()].to_vec()
    }

    pub fn write_le(&self, out: &mut [u8]) {
        out.copy_from_slice(&self.bits.to_le_bytes()[..self.byte_len()]);
    }

    /// Decodes a stored tag. `None` when the bytes hold bits above `width`,
    /// which an untampered store never produces.
    pub fn from_le_slice(bytes: &[u8], width: u32) -> Option<Self> {
        if bytes.len() != tag_byte_len(width) {
            return None;
        }
        let mut buf = [0u8; 16];
        buf[..bytes.len()].copy_from_slice(bytes);
        MacTag::new(u128::from_le_bytes(buf), width).ok()
    }

    pub fn ct_eq(&self, other: &MacTag) -> bool {
        let same = self.bits.to_le_bytes().ct_eq(&other.bits.to_le_bytes());
        bool::from(same & self.width.ct_eq(&other.width))
    }
}

impl PartialEq for MacTag {
    fn eq(&self, other: &Self) -> bool {
        self.ct_eq(other)
    }
}

impl Eq for MacTag {}

impl std::hash::Hash for MacTag {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.bits.hash(state);
        self.width.hash(state);
    }
}

impl fmt::Debug for MacTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = (self.width() as usize).div_ceil(4);
        write!(f, "MacTag<{}>({:0digits$x})", self.width, self.bits)
    }
}

pub fn tag_byte_len(width: u32) -> usize {
    (width as usize).div_ceil(8)
}

/// 32-byte element digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest(")?;
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

/// SHA-256 over the flat byte representation of an element.
pub fn element_hash(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

/// Element hash function used by the containers; callers may substitute
/// their own (e.g. to hash structured values canonically).
pub type ElementHasher = fn(&[u8]) -> Digest;

/// Structured MAC input.
///
/// Serialized as `domain || count:u32 || (len:u32 || bytes)*`, all integers
/// little-endian, so distinct `(domain, fields)` never share an encoding.
#[derive(Clone, PartialEq, Eq)]
pub struct MacInput {
    domain: Domain,
    count: u32,
    body: Vec<u8>,
}

impl MacInput {
    pub fn new(domain: Domain) -> Self {
        MacInput {
            domain,
            count: 0,
            body: Vec::with_capacity(96),
        }
    }

    /// Appends an arbitrary byte field.
    pub fn bytes(mut self, field: &[u8]) -> Self {
        self.count += 1;
        self.body
            .extend_from_slice(&(field.len() as u32).to_le_bytes());
        self.body.extend_from_slice(field);
        self
    }

    pub fn word(self, value: u64) -> Self {
        self.bytes(&value.to_le_bytes())
    }

    pub fn digest(self, digest: &Digest) -> Self {
        self.bytes(&digest.0)
    }

    pub fn tag(self, tag: &MacTag) -> Self {
        let raw = tag.bits.to_le_bytes();
        self.bytes(&raw[..tag.byte_len()])
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn field_count(&self) -> u32 {
        self.count
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.body.len());
        out.push(self.domain as u8);
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.body);
        out
    }
}

impl fmt::Debug for MacInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MacInput")
            .field("domain", &self.domain)
            .field("fields", &self.count)
            .field("body_len", &self.body.len())
            .finish()
    }
}

/// MAC backend selector, parsed from `cmac128`, `pac32`, `trunc:<b>` or
/// `ro:<b>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Cmac128,
    Pac32,
    Trunc(u32),
    RandomOracle(u32),
}

impl Backend {
    pub fn width(&self) -> u32 {
        match *self {
            Backend::Cmac128 => 128,
            Backend::Pac32 => 32,
            Backend::Trunc(b) | Backend::RandomOracle(b) => b,
        }
    }

    fn validate(self) -> Result<Self> {
        match self {
            Backend::Trunc(b) | Backend::RandomOracle(b) if b == 0 || b > MAX_TAG_WIDTH => {
                Err(Error::UnsupportedWidth(b))
            }
            other => Ok(other),
        }
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_width = |w: &str| {
            w.parse::<u32>()
                .map_err(|_| Error::Config(format!("bad tag width in backend {s:?}")))
        };
        let backend = match s {
            "cmac128" => Backend::Cmac128,
            "pac32" => Backend::Pac32,
            _ => match s.split_once(':') {
                Some(("trunc", w)) => Backend::Trunc(parse_width(w)?),
                Some(("ro", w)) => Backend::RandomOracle(parse_width(w)?),
                _ => return Err(Error::Config(format!("unknown backend {s:?}"))),
            },
        };
        backend.validate()
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Cmac128 => f.write_str("cmac128"),
            Backend::Pac32 => f.write_str("pac32"),
            Backend::Trunc(b) => write!(f, "trunc:{b}"),
            Backend::RandomOracle(b) => write!(f, "ro:{b}"),
        }
    }
}

struct Oracle {
    table: HashMap<Vec<u8>, u128>,
    rng: ChaCha20Rng,
}

enum Engine {
    Cmac(Cmac<Aes128>),
    Pac(Aes128),
    Oracle(Mutex<Oracle>),
}

/// A keyed MAC with a fixed backend and tag width.
///
/// Counts invocations per [`Domain`] so callers can check the cost of an
/// operation exactly.
pub struct Authenticator {
    backend: Backend,
    engine: Engine,
    counters: [AtomicU64; Domain::ALL.len()],
}

impl Authenticator {
    pub fn new(key: &MacKey, backend: Backend) -> Result<Self> {
        let backend = backend.validate()?;
        let engine = match backend {
            Backend::Cmac128 | Backend::Trunc(_) => Engine::Cmac(
                <Cmac<Aes128> as KeyInit>::new_from_slice(key.as_bytes())
                    .expect("AES-128 key length"),
            ),
            Backend::Pac32 => Engine::Pac(Aes128::new(GenericArray::from_slice(key.as_bytes()))),
            Backend::RandomOracle(_) => {
                let mut seed = [0u8; 32];
                seed[..KEY_LEN].copy_from_slice(key.as_bytes());
                Engine::Oracle(Mutex::new(Oracle {
                    table: HashMap::new(),
                    rng: ChaCha20Rng::from_seed(seed),
                }))
            }
        };
        Ok(Authenticator {
            backend,
            engine,
            counters: Default::default(),
        })
    }

    /// Convenience constructor: seeded key, backend parsed from a string such as `trunc:8`.
    pub fn from_config(backend: &str, seed: Option<u64>) -> Result<Self> {
        Authenticator::new(&MacKey::generate(seed), backend.parse()?)
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn width(&self) -> u32 {
        self.backend.width()
    }

    pub fn tag_len(&self) -> usize {
        tag_byte_len(self.width())
    }

    pub fn compute(&self, input: &MacInput) -> MacTag {
        self.counters[input.domain as usize].fetch_add(1, Ordering::Relaxed);
        let width = self.width();
        let bits = match &self.engine {
            Engine::Cmac(base) => {
                let mut mac = base.clone();
                mac.update(&[input.domain as u8]);
                mac.update(&input.count.to_le_bytes());
                mac.update(&input.body);
                u128::from_be_bytes(mac.finalize().into_bytes().into())
            }
            Engine::Pac(cipher) => pac_chain(cipher, &input.serialize()) as u128,
            Engine::Oracle(oracle) => {
                let mut oracle = oracle.lock().unwrap_or_else(|e| e.into_inner());
                let Oracle { table, rng } = &mut *oracle;
                *table.entry(input.serialize()).or_insert_with(|| {
                    let mut buf = [0u8; 16];
                    rng.fill_bytes(&mut buf);
                    u128::from_le_bytes(buf)
                })
            }
        };
        MacTag::truncated(bits, width)
    }

    /// Constant-time comparison of `expected` against a fresh computation.
    pub fn verify(&self, input: &MacInput, expected: &MacTag) -> bool {
        expected.width() == self.width() && self.compute(input).ct_eq(expected)
    }

    pub fn invocations(&self) -> u64 {
        self.counters
            .iter()
            .map(|c| c.load(Ordering::Relaxed))
            .sum()
    }

    pub fn invocations_for(&self, domain: Domain) -> u64 {
        self.counters[domain as usize].load(Ordering::Relaxed)
    }
}

impl fmt::Debug for Authenticator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Authenticator")
            .field("backend", &self.backend)
            .field("invocations", &self.invocations())
            .finish()
    }
}

/// One `pacga`: 64-bit value and 64-bit modifier in, 32 bits out.
fn pacga(cipher: &Aes128, value: u64, modifier: u64) -> u32 {
    let mut block = [0u8; 16];
    block[..8].copy_from_slice(&value.to_le_bytes());
    block[8..].copy_from_slice(&modifier.to_le_bytes());
    let mut block = GenericArray::from(block);
    cipher.encrypt_block(&mut block);
    u32::from_be_bytes([block[0], block[1], block[2], block[3]])
}

fn pac_chain(cipher: &Aes128, message: &[u8]) -> u32 {
    // The serialization is prefix-free, so zero padding the final word
    // cannot merge two inputs; the trailing length word is belt and braces.
    let mut modifier = 0u64;
    for chunk in message.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        modifier = pacga(cipher, u64::from_le_bytes(word), modifier) as u64;
    }
    pacga(cipher, message.len() as u64, modifier)
}

/// Plain AES-128-CMAC over `message`, without the structured input framing.
pub fn cmac128_raw(key: &MacKey, message: &[u8]) -> [u8; 16] {
    let mut mac = <Cmac<Aes128> as KeyInit>::new_from_slice(key.as_bytes())
        .expect("AES-128 key length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

/// Free-function form: builds a one-shot authenticator and computes the tag.
pub fn mac_compute(key: &MacKey, backend: Backend, input: &MacInput) -> Result<MacTag> {
    Ok(Authenticator::new(key, backend)?.compute(input))
}

pub fn mac_verify(key: &MacKey, backend: Backend, input: &MacInput, expected: &MacTag) -> Result<bool> {
    Ok(Authenticator::new(key, backend)?.verify(input, expected))
}
