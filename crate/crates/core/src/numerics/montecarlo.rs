//! Chunked Monte Carlo with thread-count independent results.
//!
//! Trials are split into fixed-size chunks. Chunk `c` draws from
//! `rng.split_index(c)`, and chunk partial sums are combined in chunk order,
//! so the estimate depends only on the seed, path and trial count.

use rayon::prelude::*;
use serde::Serialize;

use super::rng::RngStream;

pub const CHUNK_TRIALS: usize = 1024;

/// Running first and second moments of one or more scalar statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl Moments {
    pub fn new(width: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; width],
            sum_sq: vec![0.0; width],
        }
    }

    #[inline]
    pub fn push(&mut self, values: &[f64]) {
        self.count += 1;
        for (k, v) in values.iter().enumerate() {
            self.sum[k] += v;
            self.sum_sq[k] += v * v;
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        for k in 0..self.sum.len() {
            self.sum[k] += other.sum[k];
            self.sum_sq[k] += other.sum_sq[k];
        }
    }

    pub fn estimate(&self, k: usize) -> MeanEstimate {
        let n = self.count as f64;
        let mean = self.sum[k] / n;
        let var = if self.count > 1 {
            ((self.sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        MeanEstimate {
            mean,
            stderr: (var / n).sqrt(),
            samples: self.count,
        }
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl MeanEstimate {
    /// `|mean − target| ≤ k·stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }

    pub fn z_score(&self, target: f64) -> f64 {
        if self.stderr == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - target) / self.stderr
        }
    }
}

/// Run `trials` trials of `trial`, which pushes `width` statistics per call.
pub fn run<F>(rng: &RngStream, trials: usize, width: usize, trial: F) -> Moments
where
    F: Fn(&mut RngStream, &mut Vec<f64>) + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let partials: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng.split_index(c as u64);
            let lo = c * CHUNK_TRIALS;
            let hi = (lo + CHUNK_TRIALS).min(trials);
            let mut m = Moments::new(width);
            let mut buf = Vec::with_capacity(width);
            for _ in lo..hi {
                buf.clear();
                trial(&mut stream, &mut buf);
                m.push(&buf);
            }
            m
        })
        .collect();
    let mut total = Moments::new(width);
    for p in &partials {
        total.merge(p);
    }
    total
}

/// Run trials that each return a value, preserving trial order.
pub fn collect<T, F>(rng: &RngStream, trials: usize, trial: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng.split_index(c as u64);
            let lo = c * CHUNK_TRIALS;
            let hi = (lo + CHUNK_TRIALS).min(trials);
            (lo..hi).map(|_| trial(&mut stream)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}
