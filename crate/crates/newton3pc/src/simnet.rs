//! Single-process network simulation: splittable deterministic RNG streams,
//! byte metering, and uniform device sampling.
//!
//! Determinism contract: every random decision in a run is drawn from a stream
//! reached by a named split path from one master seed, and every transmitted
//! byte passes through the wire codec. Traces are therefore reproducible
//! bit-for-bit from `(config, seed)` alone, independent of scheduling.

use std::collections::BTreeMap;

use rand::RngCore;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;

use crate::compress::{DecodeError, Message};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Counter-derived random stream, splittable by `(scope, index)` labels.
///
/// A child stream's key depends only on the master seed and the split path, so
/// sibling streams are statistically independent and a stream's draws do not
/// depend on how much any other stream has been consumed. The generator behind
/// each leaf is ChaCha12.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    path: Vec<(String, u64)>,
    key_state: u64,
    inner: ChaCha12Rng,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        let mut s = master_seed;
        let key_state = splitmix64(&mut s);
        Self { master_seed, path: Vec::new(), key_state, inner: Self::leaf(key_state) }
    }

    fn leaf(key_state: u64) -> ChaCha12Rng {
        let mut s = key_state;
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        ChaCha12Rng::from_seed(key)
    }

    /// Derives the child stream for `(scope, index)`. Splitting reads only the
    /// stream's identity, never its consumption position, so the same path
    /// always yields the same child.
    pub fn split(&self, scope: &str, index: u64) -> RngStream {
        let mut s = self.key_state ^ fnv1a64(scope.as_bytes());
        let mut state = splitmix64(&mut s);
        state ^= index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let key_state = splitmix64(&mut state);
        let mut path = self.path.clone();
        path.push((scope.to_string(), index));
        Self { master_seed: self.master_seed, path, key_state, inner: Self::leaf(key_state) }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[(String, u64)] {
        &self.path
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.inner)
    }

    /// Bernoulli draw; `p` must lie in `[0, 1]`. Always consumes exactly one
    /// draw, including at `p = 0` and `p = 1`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        assert!((0.0..=1.0).contains(&p), "bernoulli probability {p} outside [0, 1]");
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut self.inner)
    }

    /// Uniform integer in `[0, bound)`.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        rand::Rng::random_range(&mut self.inner, 0..bound)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// Uniform `tau`-subset of `{0, ..., n−1}` without replacement, returned in
/// ascending order. Every index is included with probability `tau / n`.
pub fn sample_subset(n: usize, tau: usize, rng: &mut RngStream) -> Vec<usize> {
    assert!(tau <= n, "subset size {tau} exceeds population {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..tau {
        let j = i + rng.below(n - i);
        pool.swap(i, j);
    }
    let mut out = pool[..tau].to_vec();
    out.sort_unstable();
    out
}

/// Cumulative traffic accounting. Totals, per-device splits, and a per-kind
/// breakdown; the invariant `total == Σ per-device` holds by construction.
#[derive(Debug, Clone)]
pub struct ByteMeter {
    up_by_device: Vec<u64>,
    down_by_device: Vec<u64>,
    by_kind: BTreeMap<&'static str, u64>,
}

impl ByteMeter {
    pub fn new(n_devices: usize) -> Self {
        Self {
            up_by_device: vec![0; n_devices],
            down_by_device: vec![0; n_devices],
            by_kind: BTreeMap::new(),
        }
    }

    pub fn n_devices(&self) -> usize {
        self.up_by_device.len()
    }

    fn add(&mut self, up: bool, device: usize, kind: &'static str, bytes: u64) {
        if up {
            self.up_by_device[device] += bytes;
        } else {
            self.down_by_device[device] += bytes;
        }
        *self.by_kind.entry(kind).or_insert(0) += bytes;
    }

    pub fn uplink_total(&self) -> u64 {
        self.up_by_device.iter().sum()
    }

    pub fn downlink_total(&self) -> u64 {
        self.down_by_device.iter().sum()
    }

    pub fn uplink_of(&self, device: usize) -> u64 {
        self.up_by_device[device]
    }

    pub fn downlink_of(&self, device: usize) -> u64 {
        self.down_by_device[device]
    }

    pub fn by_kind(&self) -> &BTreeMap<&'static str, u64> {
        &self.by_kind
    }
}

/// In-process message fabric between the server and devices.
///
/// All payloads are encoded to wire bytes, counted, and decoded back before
/// the receiving side may use them, so byte totals always describe messages a
/// receiver actually parsed. Broadcast traffic is charged once per recipient.
#[derive(Debug, Clone)]
pub struct Network {
    meter: ByteMeter,
}

impl Network {
    pub fn new(n_devices: usize) -> Self {
        Self { meter: ByteMeter::new(n_devices) }
    }

    pub fn meter(&self) -> &ByteMeter {
        &self.meter
    }

    /// Device → server transfer; returns what the server decodes.
    pub fn send_up(&mut self, device: usize, msg: &Message) -> Result<Message, DecodeError> {
        let bytes = msg.encode();
        self.meter.add(true, device, msg.kind_name(), bytes.len() as u64);
        Message::decode(&bytes)
    }

    /// Server → devices transfer, charged per recipient; returns what each
    /// recipient decodes (identical bytes for all of them).
    pub fn send_down(&mut self, recipients: &[usize], msg: &Message) -> Result<Message, DecodeError> {
        let bytes = msg.encode();
        for &r in recipients {
            self.meter.add(false, r, msg.kind_name(), bytes.len() as u64);
        }
        Message::decode(&bytes)
    }

    /// One-byte coin flag, device → server.
    pub fn send_up_flag(&mut self, device: usize, bit: bool) -> bool {
        self.meter.add(true, device, "flag", 1);
        bit
    }

    /// One-byte coin flag, server → devices, charged per recipient.
    pub fn send_down_flag(&mut self, recipients: &[usize], bit: bool) -> bool {
        for &r in recipients {
            self.meter.add(false, r, "flag", 1);
        }
        bit
    }
}
