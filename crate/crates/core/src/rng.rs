//! Counter-based random streams built on Philox4x32-10.
//!
//! Every value is a pure function of `(key, counter_offset + index)`, so any
//! entry of a sketching operator can be regenerated in isolation and bulk
//! generation may be split across threads in any order.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;
const PHILOX_ROUNDS: usize = 10;

/// Raw Philox4x32-10 block function.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..PHILOX_ROUNDS {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let p0 = u64::from(PHILOX_M0) * u64::from(c[0]);
        let p1 = u64::from(PHILOX_M1) * u64::from(c[2]);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeedParseError {
    #[error("invalid seed literal {0:?}: expected decimal or 0x-prefixed hex")]
    Invalid(String),
}

/// Parses a 64-bit value written either in decimal or as `0x`-prefixed hex.
pub fn parse_u64_literal(text: &str) -> Result<u64, SeedParseError> {
    let t = text.trim();
    let parsed = if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(&hex.replace('_', ""), 16)
    } else {
        t.replace('_', "").parse::<u64>()
    };
    parsed.map_err(|_| SeedParseError::Invalid(text.to_string()))
}

/// Key plus starting position of a counter-based stream.
///
/// Serializes as the string form (`"0x2a"` or `"0x2a+16"`); deserializes
/// from that string, a bare integer, or `{"key": .., "counter_offset": ..}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct RngKey {
    pub key: u64,
    pub counter_offset: u64,
}

impl Serialize for RngKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KeyRepr {
    Int(u64),
    Text(String),
    Parts {
        key: u64,
        #[serde(default)]
        counter_offset: u64,
    },
}

impl<'de> Deserialize<'de> for RngKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match KeyRepr::deserialize(d)? {
            KeyRepr::Int(k) => Ok(RngKey::new(k)),
            KeyRepr::Text(t) => t.parse().map_err(serde::de::Error::custom),
            KeyRepr::Parts { key, counter_offset } => Ok(RngKey::with_offset(key, counter_offset)),
        }
    }
}

impl RngKey {
    pub fn new(key: u64) -> Self {
        Self { key, counter_offset: 0 }
    }

    pub fn with_offset(key: u64, counter_offset: u64) -> Self {
        Self { key, counter_offset }
    }

    /// Same key, counter moved forward by `n`.
    pub fn shifted(self, n: u64) -> Self {
        Self { key: self.key, counter_offset: self.counter_offset.wrapping_add(n) }
    }

    /// A fresh key for an independent sub-stream, e.g. one per probe or replicate.
    ///
    /// Mixes the parent key, offset and tag through a Philox block so that
    /// neighbouring tags produce unrelated keys.
    pub fn derive(self, tag: u64) -> Self {
        let k = split(self.key);
        let o = split(self.counter_offset);
        let t = split(tag);
        let out = philox4x32([t[0], t[1], o[0], o[1]], [k[0] ^ 0x5851_F42D, k[1] ^ 0x4C95_7F2D]);
        Self::new(u64::from(out[0]) | (u64::from(out[1]) << 32))
    }

    /// Uniform value at absolute stream position `counter_offset + index`.
    pub fn uniform_at(self, index: u64) -> f64 {
        uniform_at_position(self.key, self.counter_offset.wrapping_add(index))
    }

    /// Standard normal value at position `counter_offset + index`.
    pub fn gaussian_at(self, index: u64) -> f64 {
        gaussian_at_position(self.key, self.counter_offset.wrapping_add(index))
    }

    pub fn rademacher_at(self, index: u64) -> f64 {
        if self.uniform_at(index) < 0.5 {
            -1.0
        } else {
            1.0
        }
    }

    /// Sequential reader starting at this key's offset.
    pub fn stream(self) -> Stream {
        Stream { key: self, pos: 0 }
    }
}

impl fmt::Display for RngKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.counter_offset == 0 {
            write!(f, "{:#x}", self.key)
        } else {
            write!(f, "{:#x}+{}", self.key, self.counter_offset)
        }
    }
}

impl FromStr for RngKey {
    type Err = SeedParseError;

    /// Accepts `KEY` or `KEY+OFFSET`, each decimal or hex.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('+') {
            Some((k, o)) => Ok(Self::with_offset(parse_u64_literal(k)?, parse_u64_literal(o)?)),
            None => Ok(Self::new(parse_u64_literal(s)?)),
        }
    }
}

fn split(x: u64) -> [u32; 2] {
    [x as u32, (x >> 32) as u32]
}

// Each Philox block yields two doubles (two 32-bit words each), so position p
// lives in block p / 2, lane p % 2.
fn uniform_at_position(key: u64, pos: u64) -> f64 {
    let block = pos >> 1;
    let lane = (pos & 1) as usize;
    let b = split(block);
    let out = philox4x32([b[0], b[1], 0, 0], split(key));
    let bits = (u64::from(out[2 * lane + 1]) << 32) | u64::from(out[2 * lane]);
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Box–Muller on the uniform pair at positions (2j, 2j+1); even positions
/// take the cosine branch and odd positions the sine branch.
fn gaussian_at_position(key: u64, pos: u64) -> f64 {
    let base = pos & !1;
    let u1 = uniform_at_position(key, base);
    let u2 = uniform_at_position(key, base.wrapping_add(1));
    let (c, s) = box_muller(u1, u2);
    if pos & 1 == 0 {
        c
    } else {
        s
    }
}

/// Box–Muller transform of a uniform pair; `u1 = 0` is clamped to the
/// smallest positive double.
pub fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let u1 = if u1 <= 0.0 { f64::MIN_POSITIVE } else { u1 };
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * PI * u2;
    (r * theta.cos(), r * theta.sin())
}

pub fn uniform_stream(k: RngKey, n: usize) -> Vec<f64> {
    (0..n as u64).map(|i| k.uniform_at(i)).collect()
}

/// Standard normals. A trailing unpaired element (odd stream position)
/// still uses the cosine branch of its own pair when it starts the pair.
pub fn gaussian_stream(k: RngKey, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut i = 0u64;
    let n64 = n as u64;
    while i < n64 {
        let pos = k.counter_offset.wrapping_add(i);
        if pos & 1 == 0 && i + 1 < n64 {
            let u1 = uniform_at_position(k.key, pos);
            let u2 = uniform_at_position(k.key, pos.wrapping_add(1));
            let (c, s) = box_muller(u1, u2);
            out.push(c);
            out.push(s);
            i += 2;
        } else {
            out.push(gaussian_at_position(k.key, pos));
            i += 1;
        }
    }
    out
}

pub fn rademacher_stream(k: RngKey, n: usize) -> Vec<f64> {
    (0..n as u64).map(|i| k.rademacher_at(i)).collect()
}

/// Sequential cursor over a stream, for algorithms that consume a
/// data-dependent number of draws (shuffles, resampling).
#[derive(Clone, Debug)]
pub struct Stream {
    key: RngKey,
    pos: u64,
}

impl Stream {
    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn next_uniform(&mut self) -> f64 {
        let u = self.key.uniform_at(self.pos);
        self.pos += 1;
        u
    }

    pub fn next_gaussian(&mut self) -> f64 {
        let g = self.key.gaussian_at(self.pos);
        self.pos += 1;
        g
    }

    pub fn next_sign(&mut self) -> f64 {
        if self.next_uniform() < 0.5 {
            -1.0
        } else {
            1.0
        }
    }

    /// Uniform integer in `0..n` (n > 0).
    pub fn next_index(&mut self, n: usize) -> usize {
        let i = (self.next_uniform() * n as f64) as usize;
        i.min(n - 1)
    }
}
