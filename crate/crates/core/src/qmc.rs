//! Randomised quasi-Monte Carlo over the unit cube.
//!
//! Halton points under independent uniform shifts (Cranley–Patterson
//! rotation); the spread of the per-shift means gives a standard error.
//! Above [`MAX_QMC_DIM`] dimensions plain Monte Carlo replicates are used.

use rand::Rng as _;

use crate::seeding::rng_from_seed;
use crate::stats::MeanSe;

pub const MAX_QMC_DIM: usize = 3;

const PRIMES: [u64; 3] = [2, 3, 5];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Estimates `E[f(U)]` for `U ~ Uniform[0,1)^dim`, for a vector-valued `f`
/// of length `width`, with `replicates` independent shifts of `points` each.
pub fn cube_means(
    dim: usize,
    width: usize,
    points: usize,
    replicates: usize,
    seed: u64,
    mut f: impl FnMut(&[f64], &mut [f64]),
) -> Vec<MeanSe> {
    assert!(dim >= 1 && replicates >= 2 && points >= 1);
    let mut rng = rng_from_seed(seed);
    let mut per_rep = vec![Vec::with_capacity(replicates); width];
    let mut u = vec![0.0; dim];
    let mut out = vec![0.0; width];
    let mut acc = vec![0.0; width];
    for _ in 0..replicates {
        let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        acc.iter_mut().for_each(|a| *a = 0.0);
        for i in 0..points {
            for j in 0..dim {
                u[j] = if dim <= MAX_QMC_DIM {
                    let v = radical_inverse(i as u64 + 1, PRIMES[j]) + shift[j];
                    v - v.floor()
                } else {
                    rng.random::<f64>()
                };
            }
            f(&u, &mut out);
            for (a, o) in acc.iter_mut().zip(&out) {
                *a += o;
            }
        }
        for (col, a) in per_rep.iter_mut().zip(&acc) {
            col.push(a / points as f64);
        }
    }
    per_rep.iter().map(|c| MeanSe::of(c)).collect()
}

/// [`cube_means`] for `X ~ Uniform(−1, 1)^dim`.
pub fn uniform_box_means(
    dim: usize,
    width: usize,
    points: usize,
    replicates: usize,
    seed: u64,
    mut f: impl FnMut(&[f64], &mut [f64]),
) -> Vec<MeanSe> {
    let mut x = vec![0.0; dim];
    cube_means(dim, width, points, replicates, seed, |u, out| {
        for (xj, &uj) in x.iter_mut().zip(u) {
            *xj = 2.0 * uj - 1.0;
        }
        f(&x, out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(1, 3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn integrates_polynomials() {
        let r = uniform_box_means(2, 2, 4096, 16, 5, |x, out| {
            out[0] = x[0] * x[0];
            out[1] = x[0] * x[1] + x[1];
        });
        assert!((r[0].mean - 1.0 / 3.0).abs() < 1e-4);
        assert!(r[0].se < 1e-4);
        assert!(r[1].mean.abs() < 1e-4);
    }

    #[test]
    fn falls_back_to_monte_carlo_in_high_dimension() {
        let r = uniform_box_means(5, 1, 2000, 8, 1, |x, out| out[0] = x.iter().map(|v| v * v).sum());
        assert!((r[0].mean - 5.0 / 3.0).abs() < 5.0 * r[0].se + 1e-3);
    }
}
