use rand::{Rng as _, RngExt as _};
use rand_distr::{Distribution, Gamma, StandardNormal};
use rand_pcg::Pcg32;

/// Seedable PCG32 generator; equal `(seed, stream)` pairs give equal sequences.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: Pcg32,
    seed: u64,
    stream: u64,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            inner: Pcg32::new(seed, stream),
            seed,
            stream,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent generator on another stream of the same seed.
    pub fn derive(&self, stream: u64) -> Rng {
        Rng::new(self.seed, stream)
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0)
            .expect("gamma shape must be positive")
            .sample(&mut self.inner)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Index drawn from unnormalised nonnegative weights.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut target = self.unit() * total;
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                return i;
            }
            target -= w;
        }
        weights.len() - 1
    }
}
