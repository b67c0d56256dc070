//! Reproducible chunked Monte Carlo.
//!
//! Draw `i` always comes from chunk `i / CHUNK_SIZE`, whose generator is a
//! ChaCha8 stream keyed by `(seed, chunk)`. Results therefore do not depend
//! on the number of worker threads, and the first `n` draws of a longer run
//! are exactly the draws of a run of length `n`.

use std::ops::Range;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::scalar::Scalar;

pub const CHUNK_SIZE: usize = 4096;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "EVGLM_THREADS";

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw strictly inside (0, 1).
#[inline]
pub fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn open_uniform_s<S: Scalar>(rng: &mut impl RngCore) -> S {
    let u = S::lit(open_uniform(rng));
    // f32 rounding can land on 1
    if u >= S::one() {
        S::one() - S::epsilon()
    } else {
        u
    }
}

/// Runs `f` on every chunk of `0..n` in parallel, each with its own stream,
/// and returns the per-chunk results in chunk order.
pub fn map_chunks<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, Range<usize>) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK_SIZE);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let start = c * CHUNK_SIZE;
            f(&mut rng, start..(start + CHUNK_SIZE).min(n))
        })
        .collect()
}

/// Generates `n` values, one per draw index, in draw order.
pub fn draws<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    map_chunks(n, seed, |rng, range| range.map(|_| f(rng)).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}

/// Fallible variant of [`draws`]; the first error in draw order wins.
pub fn try_draws<T, E, F>(n: usize, seed: u64, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T, E> + Sync,
{
    let chunks = map_chunks(n, seed, |rng, range| range.map(|_| f(rng)).collect::<Result<Vec<_>, E>>());
    let mut out = Vec::with_capacity(n);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Configures the global rayon pool from `EVGLM_THREADS` if set. Returns the
/// cap that was applied. Calling it more than once is harmless.
pub fn init_threads_from_env() -> Option<usize> {
    let n = std::env::var(THREADS_ENV).ok()?.trim().parse::<usize>().ok().filter(|&n| n > 0)?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Some(n)
}

/// Running mean and standard error of a stream of values.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanSe {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    if n == 0 {
        return MeanSe::default();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    MeanSe { n, mean, se: (var / n as f64).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_property_and_determinism() {
        let long = draws(3 * CHUNK_SIZE + 17, 9, open_uniform);
        let short = draws(CHUNK_SIZE + 5, 9, open_uniform);
        assert_eq!(&long[..short.len()], &short[..]);
        assert_eq!(long, draws(3 * CHUNK_SIZE + 17, 9, open_uniform));
        assert_ne!(long, draws(3 * CHUNK_SIZE + 17, 10, open_uniform));
        assert!(long.iter().all(|&u| u > 0.0 && u < 1.0));
    }

    #[test]
    fn independent_of_thread_count() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let one = pool.install(|| draws(5 * CHUNK_SIZE, 3, open_uniform));
        let many = draws(5 * CHUNK_SIZE, 3, open_uniform);
        assert_eq!(one, many);
    }

    #[test]
    fn uniform_mean_is_half() {
        let u = draws(200_000, 1, open_uniform);
        let m = mean_se(&u);
        assert!((m.mean - 0.5).abs() < 3.0 * m.se + 1e-12);
    }
}
