//! Deterministic randomness for a run.
//!
//! A run is driven by a single 64-bit seed. Each pipeline stage draws from
//! its own ChaCha20 stream keyed by `SHA-256(domain || seed || label)`, so
//! stages never share a stream and adding draws to one stage cannot shift
//! the output of another.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"decoyqkd/stream/v1";

/// Factory for per-stage random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunRng {
    seed: u64,
}

impl RunRng {
    pub fn new(seed: u64) -> Self {
        RunRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, label: &str) -> StageRng {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update(self.seed.to_le_bytes());
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        StageRng {
            inner: ChaCha20Rng::from_seed(key),
            label: label.to_owned(),
            bits: 0,
        }
    }
}

/// A labelled stream that counts the random bits handed out.
#[derive(Debug, Clone)]
pub struct StageRng {
    inner: ChaCha20Rng,
    label: String,
    bits: u64,
}

impl StageRng {
    /// Standalone stream, mostly for tests.
    pub fn from_seed_u64(seed: u64) -> Self {
        RunRng::new(seed).stream("default")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn bits_consumed(&self) -> u64 {
        self.bits
    }
}

impl RngCore for StageRng {
    fn next_u32(&mut self) -> u32 {
        self.bits += 32;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.bits += 64;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.bits += 8 * dst.len() as u64;
        self.inner.fill_bytes(dst)
    }
}

/// Hands out individual random bits from an underlying generator and keeps
/// an exact count of the bits used.
pub struct BitSource<'a, R: RngCore + ?Sized> {
    rng: &'a mut R,
    buf: u64,
    avail: u32,
    consumed: u64,
}

impl<'a, R: RngCore + ?Sized> BitSource<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        BitSource {
            rng,
            buf: 0,
            avail: 0,
            consumed: 0,
        }
    }

    /// `count` (at most 64) fresh bits as the low bits of the result.
    pub fn bits(&mut self, count: u32) -> u64 {
        debug_assert!(count <= 64);
        if count == 0 {
            return 0;
        }
        self.consumed += u64::from(count);
        if count <= self.avail {
            let out = self.buf & low_mask(count);
            self.buf = if count == 64 { 0 } else { self.buf >> count };
            self.avail -= count;
            return out;
        }
        let have = self.avail;
        let mut out = self.buf & low_mask(have);
        let fresh = self.rng.next_u64();
        let need = count - have;
        out |= (fresh & low_mask(need)) << have;
        self.buf = if need == 64 { 0 } else { fresh >> need };
        self.avail = 64 - need;
        out
    }

    /// Uniform integer in `0..bound`, one bit at a time (Lumbroso's fast
    /// dice roller). Uses at most `log2(bound) + 2` bits on average, where
    /// plain rejection on `ceil(log2 bound)` bits can waste nearly half.
    pub fn uniform_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        if bound == 1 {
            return 0;
        }
        let (mut v, mut c) = (1u64, 0u64);
        loop {
            v <<= 1;
            c = (c << 1) | self.bits(1);
            if v >= bound {
                if c < bound {
                    return c;
                }
                v -= bound;
                c -= bound;
            }
        }
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }
}

fn low_mask(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Uniform `f64` in `[0, 1)`; thin wrapper so callers need not import `Rng`.
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
