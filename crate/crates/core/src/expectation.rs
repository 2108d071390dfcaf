//! Exact-vs-sampled expectation settings, running moment accumulators and
//! reproducible per-task random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpectationMode {
    Exact,
    #[serde(alias = "mc", alias = "montecarlo")]
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationConfig {
    pub mode: ExpectationMode,
    pub sample_count: usize,
    pub rng_seed: u64,
    /// Largest number of uncertain users (or free membership choices) that
    /// exact enumeration will accept.
    pub exact_population_limit: usize,
}

impl Default for ExpectationConfig {
    fn default() -> Self {
        Self {
            mode: ExpectationMode::Exact,
            sample_count: 100_000,
            rng_seed: 0,
            exact_population_limit: 12,
        }
    }
}

impl ExpectationConfig {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn monte_carlo(sample_count: usize, rng_seed: u64) -> Self {
        Self { mode: ExpectationMode::MonteCarlo, sample_count, rng_seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sample_count == 0 {
            return Err("sample_count must be >= 1".into());
        }
        Ok(())
    }
}

/// An expectation together with its Monte-Carlo standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    /// Number of draws, zero for exact evaluation.
    pub samples: usize,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, std_err: 0.0, samples: 0 }
    }

    pub fn is_exact(&self) -> bool {
        self.samples == 0
    }
}

/// Welford accumulator that merges with Chan's formula.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample_variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean,
            std_err: (self.sample_variance() / self.n.max(1) as f64).sqrt(),
            samples: self.n as usize,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 stream derived from a base seed and a task path.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t));
    }
    ChaCha8Rng::seed_from_u64(h)
}

const CHUNK: usize = 2048;

/// Runs `samples` draws split in fixed chunks, one random stream per chunk,
/// and merges the per-chunk accumulators in chunk order so totals do not
/// depend on scheduling.
pub(crate) fn sample_parallel<const N: usize, E, F>(
    samples: usize,
    seed: u64,
    tags: &[u64],
    draw: F,
) -> Result<[Accumulator; N], E>
where
    E: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<[f64; N], E> + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Result<[Accumulator; N], E>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut path = tags.to_vec();
            path.push(c as u64);
            let mut rng = stream(seed, &path);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut acc = [Accumulator::default(); N];
            for _ in 0..n {
                let values = draw(&mut rng)?;
                for (a, v) in acc.iter_mut().zip(values) {
                    a.push(v);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = [Accumulator::default(); N];
    for part in partial {
        let part = part?;
        for (t, p) in total.iter_mut().zip(part.iter()) {
            t.merge(p);
        }
    }
    Ok(total)
}
