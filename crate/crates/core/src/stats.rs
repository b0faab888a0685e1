//! Summation, moments and normal-distribution helpers.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// slice length, so results are reproducible regardless of thread count.
pub fn pairwise_sum<F: Scalar>(values: &[F]) -> F {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut acc = F::zero();
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Arithmetic mean; `NaN` for an empty slice.
pub fn mean<F: Scalar>(values: &[F]) -> F {
    if values.is_empty() {
        return F::nan();
    }
    pairwise_sum(values) / F::from_count(values.len())
}

/// Mean of squares.
pub fn mean_square<F: Scalar>(values: &[F]) -> F {
    let sq: Vec<F> = values.iter().map(|&v| v * v).collect();
    mean(&sq)
}

/// Unbiased sample variance (denominator `n - 1`).
pub fn sample_variance<F: Scalar>(values: &[F]) -> F {
    let n = values.len();
    if n < 2 {
        return F::nan();
    }
    let m = mean(values);
    let dev: Vec<F> = values.iter().map(|&v| (v - m) * (v - m)).collect();
    pairwise_sum(&dev) / F::from_count(n - 1)
}

/// Unbiased sample covariance of paired values.
pub fn sample_covariance<F: Scalar>(a: &[F], b: &[F]) -> F {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let n = a.len();
    if n < 2 {
        return F::nan();
    }
    let (ma, mb) = (mean(a), mean(b));
    let prod: Vec<F> = a.iter().zip(b).map(|(&x, &y)| (x - ma) * (y - mb)).collect();
    pairwise_sum(&prod) / F::from_count(n - 1)
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = mean(values);
        let se = if n > 1 {
            (sample_variance(values) / n as f64).sqrt()
        } else {
            f64::NAN
        };
        MeanSe { mean, se }
    }
}

/// Streaming mean and variance (Welford), mergeable across shards.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    pub n: usize,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = (self.n + other.n) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n;
        self.n += other.n;
    }

    pub fn mean_se(&self) -> MeanSe {
        let se = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            f64::NAN
        };
        MeanSe {
            mean: if self.n > 0 { self.mean } else { f64::NAN },
            se,
        }
    }
}

// Acklam's rational approximation to the standard normal quantile
// (relative error below 1.2e-9 over the open unit interval).
const QA: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const QB: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const QC: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const QD: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn horner<F: Scalar>(coef: &[f64], x: F) -> F {
    coef.iter().fold(F::zero(), |acc, &c| acc * x + F::lit(c))
}

/// Standard normal quantile `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn normal_quantile<F: Scalar>(p: F) -> Result<F> {
    if !(p > F::zero() && p < F::one()) {
        return Err(Error::InvalidInput(format!(
            "normal quantile requires p in (0,1), got {p}"
        )));
    }
    let p_low = F::lit(0.02425);
    let two = F::lit(2.0);
    let tail = |q: F| {
        let q = (-two * q.ln()).sqrt();
        horner(&QC, q) / (horner(&QD, q) * q + F::one())
    };
    let z = if p < p_low {
        tail(p)
    } else if p <= F::one() - p_low {
        let q = p - F::lit(0.5);
        let r = q * q;
        horner(&QA, r) * q / (horner(&QB, r) * r + F::one())
    } else {
        -tail(F::one() - p)
    };
    Ok(z)
}

/// Two-sided critical value `z_{1-α/2}`.
pub fn two_sided_z(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    normal_quantile(1.0 - alpha / 2.0)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// One-sample Kolmogorov–Smirnov test against the standard normal.
/// Returns `(D, p-value)`; the p-value uses Stephens' small-sample correction.
pub fn ks_standard_normal(sample: &[f64]) -> (f64, f64) {
    let n = sample.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let c = normal_cdf(z);
            let above = (i as f64 + 1.0) / nf - c;
            let below = c - i as f64 / nf;
            above.max(below)
        })
        .fold(0.0_f64, f64::max);
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_survival(lambda))
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Exact binomial acceptance band for the success *fraction* of `trials`
/// Bernoulli(`p`) draws: the shortest central region `[lo, hi]` such that each
/// tail outside it has probability at most `(1 - level) / 2`.
pub fn binomial_acceptance_band(trials: usize, p: f64, level: f64) -> (f64, f64) {
    assert!(trials > 0 && (0.0..=1.0).contains(&p) && level > 0.0 && level < 1.0);
    let tail = (1.0 - level) / 2.0;
    let pmf = binomial_pmf(trials, p);
    let mut lo = 0;
    let mut acc = 0.0;
    for (k, &m) in pmf.iter().enumerate() {
        if acc + m > tail {
            lo = k;
            break;
        }
        acc += m;
    }
    let mut hi = trials;
    acc = 0.0;
    for k in (0..=trials).rev() {
        if acc + pmf[k] > tail {
            hi = k;
            break;
        }
        acc += pmf[k];
    }
    let t = trials as f64;
    (lo as f64 / t, hi as f64 / t)
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    use statrs::function::gamma::ln_gamma;
    let nf = n as f64;
    (0..=n)
        .map(|k| {
            let kf = k as f64;
            if p == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            if p == 1.0 {
                return if k == n { 1.0 } else { 0.0 };
            }
            let ln = ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0)
                + kf * p.ln()
                + (nf - kf) * (1.0 - p).ln();
            ln.exp()
        })
        .collect()
}

/// Expectation of `f(Z)` for `Z ~ N(mean, sd²)` by a dense trapezoid rule on
/// ±12 standard deviations (spectrally accurate for smooth integrands).
pub fn gaussian_expectation(mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
    if sd == 0.0 {
        return f(mean);
    }
    const HALF_WIDTH: f64 = 12.0;
    const STEPS: usize = 1200;
    let h = 2.0 * HALF_WIDTH / STEPS as f64;
    let norm = h / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for i in 0..=STEPS {
        let z = -HALF_WIDTH + i as f64 * h;
        let w = if i == 0 || i == STEPS { 0.5 } else { 1.0 };
        acc += w * (-0.5 * z * z).exp() * f(mean + sd * z);
    }
    acc * norm
}
