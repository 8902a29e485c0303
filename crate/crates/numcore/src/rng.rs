//! Labelled random streams.
//!
//! A stream is a ChaCha20 generator keyed by the run seed, with the ChaCha
//! stream id derived from a text label. The same `(seed, label)` always
//! yields the same sequence, and different labels give independent
//! sequences, so each pipeline role (data, latent draws, interpolation
//! weights, minibatch shuffles) can be replayed on its own.

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{NumError, Result};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha20Rng,
}

/// FNV-1a, stable across platforms and releases.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(label_hash(label));
        Self {
            seed,
            label: label.to_string(),
            rng,
        }
    }

    /// Independent stream for a sub-role, e.g. `"gan"` → `"gan/xi"`.
    pub fn child(&self, label: &str) -> Self {
        Self::new(self.seed, &format!("{}/{}", self.label, label))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.random_range(0..=i);
            items.swap(i, j);
        }
    }
}

pub fn draw_normal(stream: &mut RngStream, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || stream.normal())
}

pub fn draw_uniform(
    stream: &mut RngStream,
    shape: (usize, usize),
    lo: f64,
    hi: f64,
) -> Result<Array2<f64>> {
    if !(lo < hi) {
        return Err(NumError::Invalid(format!("uniform bounds {lo} >= {hi}")));
    }
    Ok(Array2::from_shape_simple_fn(shape, || stream.uniform(lo, hi)))
}
