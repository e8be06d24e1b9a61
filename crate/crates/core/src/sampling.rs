//! Seeded sampling helpers shared by the probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::InputSignal;

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for sample `index` of a batch, so that batches can be
/// evaluated in any order and still reproduce.
pub fn stream(seed: u64, index: u64) -> SampleRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// Uniformly distributed unit vector.
pub fn direction<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn on_sphere<R: Rng>(rng: &mut R, n: usize, r: f64) -> Vec<f64> {
    direction(rng, n).into_iter().map(|x| x * r).collect()
}

/// Uniform sample from the closed Euclidean ball of radius `r`.
pub fn in_ball<R: Rng>(rng: &mut R, n: usize, r: f64) -> Vec<f64> {
    let rad = r * rng.random::<f64>().powf(1.0 / n as f64);
    on_sphere(rng, n, rad)
}

/// Random piecewise-constant input on `[0, span)` with between 1 and
/// `max_pieces` pieces and sup-norm exactly `magnitude` (the first piece
/// attaining it is chosen at random). The final value persists after
/// `span`.
pub fn piecewise_constant_input<R: Rng>(
    rng: &mut R,
    dim: usize,
    magnitude: f64,
    span: f64,
    max_pieces: usize,
) -> InputSignal {
    let k = rng.random_range(1..=max_pieces.max(1));
    let mut starts: Vec<f64> = (1..k).map(|_| rng.random::<f64>() * span).collect();
    starts.sort_by(f64::total_cmp);
    starts.dedup();
    starts.insert(0, 0.0);
    starts.retain(|s| *s >= 0.0);
    starts.dedup();
    let peak = rng.random_range(0..starts.len());
    let values = (0..starts.len())
        .map(|j| {
            let m = if j == peak {
                magnitude
            } else {
                magnitude * rng.random::<f64>()
            };
            on_sphere(rng, dim, m)
        })
        .collect();
    InputSignal::piecewise_constant(&starts, values).expect("sorted breakpoints")
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_attain_their_magnitude() {
        let mut r = rng(3);
        for _ in 0..50 {
            let u = piecewise_constant_input(&mut r, 2, 1.5, 10.0, 8);
            assert!((u.bound() - 1.5).abs() < 1e-12);
            assert!(u.pieces().len() <= 8);
        }
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut r = rng(4);
        for _ in 0..200 {
            let x = in_ball(&mut r, 3, 2.0);
            assert!(x.iter().map(|v| v * v).sum::<f64>().sqrt() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let a: f64 = stream(7, 3).random();
        let b: f64 = stream(7, 3).random();
        let c: f64 = stream(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-6, 1e6, 200);
        assert_eq!(g.len(), 200);
        assert!((g[0] - 1e-6).abs() < 1e-18);
        assert!((g[199] - 1e6).abs() < 1e-6);
    }
}
