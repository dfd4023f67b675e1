//! Progressive sampling: minimal samples are first drawn from the few
//! highest-ranked correspondences, and the pool grows until sampling is
//! uniform over all of them after roughly `max_samples` draws.
//!
//! Correspondences with equal confidence are indistinguishable by rank, so the
//! pool is always widened to the end of the tie block it reaches into.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const SAMPLE_SIZE: usize = 3;

#[derive(Debug, Clone)]
pub struct ProsacSampler {
    total: usize,
    /// Exclusive end of the tie block containing each rank.
    tie_end: Vec<usize>,
    /// Exclusive start of the tie block containing each rank.
    tie_start: Vec<usize>,
    t: usize,
    n: usize,
    t_n: f64,
    t_n_prime: usize,
}

impl ProsacSampler {
    /// `confidences` must be sorted in non-increasing order.
    pub fn new(confidences: &[f64], max_samples: usize) -> Result<Self> {
        let total = confidences.len();
        if total < SAMPLE_SIZE {
            return Err(Error::TooFewPoints { required: SAMPLE_SIZE, available: total });
        }
        let mut tie_start = vec![0; total];
        for i in 1..total {
            tie_start[i] = if confidences[i] == confidences[i - 1] { tie_start[i - 1] } else { i };
        }
        let mut tie_end = vec![total; total];
        for i in (0..total - 1).rev() {
            tie_end[i] = if confidences[i] == confidences[i + 1] { tie_end[i + 1] } else { i + 1 };
        }
        let mut t_n = max_samples.max(1) as f64;
        for i in 0..SAMPLE_SIZE {
            t_n *= (SAMPLE_SIZE - i) as f64 / (total - i) as f64;
        }
        Ok(Self { total, tie_end, tie_start, t: 0, n: SAMPLE_SIZE, t_n, t_n_prime: 1 })
    }

    /// Current size of the ranked prefix the sampler draws from.
    pub fn pool_size(&self) -> usize {
        self.n
    }

    /// Next minimal sample as ranks into the sorted correspondence list.
    pub fn sample(&mut self, rng: &mut impl Rng) -> [usize; 3] {
        self.t += 1;
        if self.t > self.t_n_prime && self.n < self.total {
            let next = self.t_n * (self.n + 1) as f64 / (self.n + 1 - SAMPLE_SIZE) as f64;
            self.t_n_prime += (next - self.t_n).ceil() as usize;
            self.t_n = next;
            self.n += 1;
        }
        let last = self.n - 1;
        let tied = self.tie_end[last] > self.n || self.tie_start[last] < last;
        let picks: Vec<usize> = if self.t_n_prime < self.t || tied {
            let pool = self.tie_end[last];
            sample(rng, pool, SAMPLE_SIZE).into_vec()
        } else {
            let mut v = sample(rng, last, SAMPLE_SIZE - 1).into_vec();
            v.push(last);
            v
        };
        [picks[0], picks[1], picks[2]]
    }
}

/// Sample drawn at `iteration` (0-based) by a sampler seeded with `seed`.
pub fn prosac_sample(confidences: &[f64], seed: u64, iteration: usize, max_samples: usize) -> Result<[usize; 3]> {
    let mut sampler = ProsacSampler::new(confidences, max_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = sampler.sample(&mut rng);
    for _ in 0..iteration {
        s = sampler.sample(&mut rng);
    }
    Ok(s)
}
