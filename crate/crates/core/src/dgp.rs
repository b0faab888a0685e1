//! Linear-Gaussian synthetic designs with known truth.
//!
//! ```text
//! X ~ Uniform(−1, 1)^{d_x}
//! T | X ~ Bernoulli(e*(X)),             e*(x) = sigmoid(e₀ + e_xᵀx)
//! S = αT + φX + σ_ν ν,                  ν ~ N(0, I)
//! Y = τT + βᵀX + γᵀS + T·τ_xᵀX + σ_ε ε,  ε ~ N(0, 1)
//! R | T, X, S ~ Bernoulli(r*)            (family dependent)
//! ```
//!
//! `τ_x` (zero by default) adds effect heterogeneity in `X` without moving the
//! average effect because `E[X] = 0`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::sigmoid;
use crate::seeding::rng_from_seed;
use crate::stats::gaussian_expectation;

/// Smallest admissible overlap constant.
pub const MIN_OVERLAP: f64 = 1e-3;

/// Labelling mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `r*(t, x) = sigmoid(c₀ + c_t t + c_xᵀx)`; `r_coef = [c₀, c_t, c_x…]`.
    LinearGaussianMar2 { r_coef: Vec<f64> },
    /// `r*(t, x, s) = floor + (1 − floor)·sigmoid(c₀ + c_t t + c_xᵀx + c_sᵀs)`;
    /// `r_coef = [c₀, c_t, c_x…, c_s…]`. The floor keeps overlap with Gaussian `S`.
    LinearGaussianSurrogateDependentR { r_coef: Vec<f64>, r_floor: f64 },
    /// `r* ≡ rate`.
    Mcar { rate: f64 },
    /// `r* ≡ r_N = scale · N^{−exponent}` with `exponent ∈ [0, 1/2)`.
    VanishingLabelRegime { scale: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XLaw {
    #[default]
    UniformCube,
}

/// A parameterised data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub family: Family,
    pub d_x: usize,
    pub d_s: usize,
    pub tau: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `d_s` rows of length `d_x`.
    pub phi: Vec<Vec<f64>>,
    pub sigma_nu: f64,
    pub sigma_eps: f64,
    /// `[e₀, e_x…]`.
    pub e_coef: Vec<f64>,
    /// Treatment-by-covariate interaction in `Y`; empty means zero.
    #[serde(default)]
    pub tau_x: Vec<f64>,
    #[serde(default)]
    pub x_law: XLaw,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

impl DgpSpec {
    /// The reference design: one covariate, one surrogate, `δ* = 2`,
    /// `r*(t, x) = sigmoid(1 + 0.5t + 0.5x)`.
    pub fn lg1() -> Self {
        DgpSpec {
            family: Family::LinearGaussianMar2 {
                r_coef: vec![1.0, 0.5, 0.5],
            },
            d_x: 1,
            d_s: 1,
            tau: 1.0,
            beta: vec![1.0],
            gamma: vec![0.5],
            alpha: vec![2.0],
            phi: vec![vec![0.5]],
            sigma_nu: 1.0,
            sigma_eps: 1.0,
            e_coef: vec![0.0, 0.5],
            tau_x: Vec::new(),
            x_law: XLaw::UniformCube,
        }
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn with_tau_x(mut self, tau_x: Vec<f64>) -> Self {
        self.tau_x = tau_x;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DgpSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    fn tau_x_at(&self, x: &[f64]) -> f64 {
        if self.tau_x.is_empty() {
            0.0
        } else {
            dot(&self.tau_x, x)
        }
    }

    /// Checks every structural invariant and returns the overlap constant ε.
    pub fn validate(&self) -> Result<f64> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.d_x == 0 || self.d_s == 0 {
            return bad("d_x and d_s must be at least 1".into());
        }
        let check_len = |name: &str, v: &[f64], n: usize| -> Result<()> {
            if v.len() != n {
                return Err(Error::InvalidSpec(format!(
                    "{name} must have length {n}, got {}",
                    v.len()
                )));
            }
            Ok(())
        };
        check_len("beta", &self.beta, self.d_x)?;
        check_len("gamma", &self.gamma, self.d_s)?;
        check_len("alpha", &self.alpha, self.d_s)?;
        check_len("e_coef", &self.e_coef, self.d_x + 1)?;
        if !self.tau_x.is_empty() {
            check_len("tau_x", &self.tau_x, self.d_x)?;
        }
        if self.phi.len() != self.d_s || self.phi.iter().any(|row| row.len() != self.d_x) {
            return bad(format!("phi must be {} × {}", self.d_s, self.d_x));
        }
        let all = [self.tau, self.sigma_nu, self.sigma_eps]
            .into_iter()
            .chain(self.beta.iter().copied())
            .chain(self.gamma.iter().copied())
            .chain(self.alpha.iter().copied())
            .chain(self.phi.iter().flatten().copied())
            .chain(self.e_coef.iter().copied())
            .chain(self.tau_x.iter().copied());
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("all coefficients must be finite".into());
        }
        if self.sigma_nu < 0.0 || self.sigma_eps < 0.0 {
            return bad("noise standard deviations must be non-negative".into());
        }

        let spread = |c: &[f64]| c.iter().map(|v| v.abs()).sum::<f64>();
        let e_lo = sigmoid(self.e_coef[0] - spread(&self.e_coef[1..]));
        let e_hi = sigmoid(self.e_coef[0] + spread(&self.e_coef[1..]));
        let eps_e = e_lo.min(1.0 - e_hi);

        let eps_r = match &self.family {
            Family::LinearGaussianMar2 { r_coef } => {
                check_len("r_coef", r_coef, 2 + self.d_x)?;
                if r_coef.iter().any(|v| !v.is_finite()) {
                    return bad("r_coef must be finite".into());
                }
                let sx = spread(&r_coef[2..]);
                sigmoid(r_coef[0] - sx).min(sigmoid(r_coef[0] + r_coef[1] - sx))
            }
            Family::LinearGaussianSurrogateDependentR { r_coef, r_floor } => {
                check_len("r_coef", r_coef, 2 + self.d_x + self.d_s)?;
                if r_coef.iter().any(|v| !v.is_finite()) {
                    return bad("r_coef must be finite".into());
                }
                if !(*r_floor > 0.0 && *r_floor < 1.0) {
                    return bad("r_floor must lie in (0, 1)".into());
                }
                *r_floor
            }
            Family::Mcar { rate } => {
                if !(*rate > 0.0 && *rate <= 1.0) {
                    return bad(format!("MCAR rate must lie in (0, 1], got {rate}"));
                }
                *rate
            }
            Family::VanishingLabelRegime { scale, exponent } => {
                if !(*scale > 0.0 && *scale <= 1.0) {
                    return bad(format!("label-rate scale must lie in (0, 1], got {scale}"));
                }
                if !(*exponent >= 0.0 && *exponent < 0.5) {
                    return bad(format!(
                        "label-rate exponent must lie in [0, 0.5) so that r_N²·N → ∞, got {exponent}"
                    ));
                }
                // r_N → 0 by design; only treatment overlap is required
                1.0
            }
        };
        let eps = eps_e.min(eps_r);
        if eps < MIN_OVERLAP {
            return bad(format!(
                "overlap constant {eps:.3e} is below {MIN_OVERLAP:e} (strict overlap violated)"
            ));
        }
        Ok(eps)
    }

    /// `Y ⊥ T | X, S, R = 1` holds exactly when the outcome has no direct
    /// treatment effect.
    pub fn statistical_surrogate_holds(&self) -> bool {
        self.tau == 0.0 && self.tau_x.iter().all(|&v| v == 0.0)
    }

    /// Labelling probability when it does not depend on `(t, x, s)`.
    pub fn constant_label_rate(&self, n: usize) -> Option<f64> {
        match &self.family {
            Family::Mcar { rate } => Some(*rate),
            Family::VanishingLabelRegime { scale, exponent } => {
                Some((scale * (n.max(1) as f64).powf(-exponent)).min(1.0))
            }
            _ => None,
        }
    }

    /// True when `R ⊥ (T, S) | X`, i.e. the density ratio depends on `X` only.
    pub fn label_depends_on_x_only(&self) -> bool {
        match &self.family {
            Family::LinearGaussianMar2 { r_coef } => r_coef[1] == 0.0,
            Family::LinearGaussianSurrogateDependentR { .. } => false,
            Family::Mcar { .. } | Family::VanishingLabelRegime { .. } => true,
        }
    }
}

/// Closed-form oracle for a validated spec. Every nuisance function is
/// available pointwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: DgpSpec,
    pub epsilon_overlap: f64,
    /// Constant labelling rate (MCAR, or the vanishing regime at a given N).
    pub label_rate: Option<f64>,
    /// `P(R = 1)`.
    pub p_label: f64,
}

impl Truth {
    /// Oracle for `spec`. For the vanishing-label regime use
    /// [`Truth::at_sample_size`] so that `r*` is defined.
    pub fn new(spec: &DgpSpec) -> Result<Self> {
        let epsilon_overlap = spec.validate()?;
        let mut t = Truth {
            spec: spec.clone(),
            epsilon_overlap,
            label_rate: match spec.family {
                Family::Mcar { rate } => Some(rate),
                _ => None,
            },
            p_label: f64::NAN,
        };
        t.p_label = t.compute_p_label();
        Ok(t)
    }

    pub fn at_sample_size(spec: &DgpSpec, n: usize) -> Result<Self> {
        let mut t = Truth::new(spec)?;
        if let Some(rate) = spec.constant_label_rate(n) {
            t.label_rate = Some(rate);
            t.p_label = rate;
        }
        Ok(t)
    }

    fn compute_p_label(&self) -> f64 {
        match (&self.spec.family, self.label_rate) {
            (_, Some(rate)) => rate,
            (Family::VanishingLabelRegime { .. }, None) => f64::NAN,
            _ => {
                let d = self.spec.d_x;
                let r = crate::qmc::uniform_box_means(d, 1, 1 << 13, 8, 0x5eed, |x, out| {
                    out[0] = self.p_label_given_x(x);
                });
                r[0].mean
            }
        }
    }

    pub fn delta_star(&self) -> f64 {
        self.xi1_star() - self.xi0_star()
    }

    /// `E[Y(1)]`.
    pub fn xi1_star(&self) -> f64 {
        self.spec.tau + dot(&self.spec.gamma, &self.spec.alpha)
    }

    /// `E[Y(0)]`.
    pub fn xi0_star(&self) -> f64 {
        0.0
    }

    pub fn e(&self, x: &[f64]) -> f64 {
        sigmoid(self.spec.e_coef[0] + dot(&self.spec.e_coef[1..], x))
    }

    /// `E[S | T = t, X = x]`.
    pub fn surrogate_mean(&self, t: bool, x: &[f64]) -> Vec<f64> {
        let tf = t as u8 as f64;
        self.spec
            .phi
            .iter()
            .zip(&self.spec.alpha)
            .map(|(row, a)| a * tf + dot(row, x))
            .collect()
    }

    fn r_linear(&self, t: bool, x: &[f64], s: &[f64]) -> f64 {
        let tf = t as u8 as f64;
        match &self.spec.family {
            Family::LinearGaussianMar2 { r_coef } => r_coef[0] + r_coef[1] * tf + dot(&r_coef[2..], x),
            Family::LinearGaussianSurrogateDependentR { r_coef, .. } => {
                let d = self.spec.d_x;
                r_coef[0] + r_coef[1] * tf + dot(&r_coef[2..2 + d], x) + dot(&r_coef[2 + d..], s)
            }
            _ => unreachable!("constant-rate families have no linear index"),
        }
    }

    /// `r*(t, x, s)`.
    ///
    /// # Panics
    /// For the vanishing-label regime when no sample size was supplied.
    pub fn r(&self, t: bool, x: &[f64], s: &[f64]) -> f64 {
        match &self.spec.family {
            Family::LinearGaussianMar2 { .. } => sigmoid(self.r_linear(t, x, s)),
            Family::LinearGaussianSurrogateDependentR { r_floor, .. } => {
                r_floor + (1.0 - r_floor) * sigmoid(self.r_linear(t, x, s))
            }
            Family::Mcar { .. } | Family::VanishingLabelRegime { .. } => self
                .label_rate
                .expect("vanishing-label oracle needs a sample size (Truth::at_sample_size)"),
        }
    }

    /// Mean and standard deviation of the surrogate index `c_sᵀS` given `(t, x)`,
    /// plus the non-surrogate part of the labelling index.
    fn sdr_index(&self, t: bool, x: &[f64]) -> (f64, f64, Vec<f64>) {
        let Family::LinearGaussianSurrogateDependentR { r_coef, .. } = &self.spec.family else {
            unreachable!()
        };
        let d = self.spec.d_x;
        let cs = r_coef[2 + d..].to_vec();
        let m = self.surrogate_mean(t, x);
        let mean = self.r_linear(t, x, &m);
        let sd = self.spec.sigma_nu * cs.iter().map(|c| c * c).sum::<f64>().sqrt();
        (mean, sd, cs)
    }

    /// `P(R = 1 | T = t, X = x)`.
    pub fn r_bar(&self, t: bool, x: &[f64]) -> f64 {
        match &self.spec.family {
            Family::LinearGaussianSurrogateDependentR { r_floor, .. } => {
                let (mean, sd, _) = self.sdr_index(t, x);
                r_floor + (1.0 - r_floor) * gaussian_expectation(mean, sd, sigmoid)
            }
            _ => self.r(t, x, &vec![0.0; self.spec.d_s]),
        }
    }

    /// `E[1 / r*(t, X, S) | T = t, X = x]`.
    pub fn inv_r_mean(&self, t: bool, x: &[f64]) -> f64 {
        match &self.spec.family {
            Family::LinearGaussianSurrogateDependentR { r_floor, .. } => {
                let (mean, sd, _) = self.sdr_index(t, x);
                gaussian_expectation(mean, sd, |z| 1.0 / (r_floor + (1.0 - r_floor) * sigmoid(z)))
            }
            _ => 1.0 / self.r(t, x, &vec![0.0; self.spec.d_s]),
        }
    }

    /// `P(R = 1 | X = x)`.
    pub fn p_label_given_x(&self, x: &[f64]) -> f64 {
        let e = self.e(x);
        e * self.r_bar(true, x) + (1.0 - e) * self.r_bar(false, x)
    }

    /// `λ*(x) = f(x) / f(x | R = 1) = P(R = 1) / P(R = 1 | X = x)`.
    pub fn lambda(&self, x: &[f64]) -> f64 {
        if matches!(self.spec.family, Family::Mcar { .. } | Family::VanishingLabelRegime { .. }) {
            return 1.0;
        }
        self.p_label / self.p_label_given_x(x)
    }

    /// `λ_t(s, x) = f(s | x, T = t) / f(s | x, T = t, R = 1)`.
    pub fn lambda_t(&self, t: bool, x: &[f64], s: &[f64]) -> f64 {
        self.r_bar(t, x) / self.r(t, x, s)
    }

    /// `P(T = 1 | R = 1, X = x)`.
    pub fn e_labelled(&self, x: &[f64]) -> f64 {
        let e = self.e(x);
        let a = e * self.r_bar(true, x);
        a / (a + (1.0 - e) * self.r_bar(false, x))
    }

    /// `μ̃*(t, x, s) = E[Y | T = t, R = 1, X = x, S = s]`.
    pub fn mu_tilde(&self, t: bool, x: &[f64], s: &[f64]) -> f64 {
        let sp = &self.spec;
        let tf = t as u8 as f64;
        sp.tau * tf + dot(&sp.beta, x) + dot(&sp.gamma, s) + tf * sp.tau_x_at(x)
    }

    /// `E[μ̃*(t, X, S) | T = t, X = x]`, the outcome regression entering the
    /// efficient influence function. Equals `E[Y | T = t, R = 1, X = x]`
    /// whenever `R ⊥ S | T, X`.
    pub fn mu(&self, t: bool, x: &[f64]) -> f64 {
        let m = self.surrogate_mean(t, x);
        self.mu_tilde(t, x, &m)
    }

    /// `E[Y | T = t, R = 1, X = x]`. Differs from [`Truth::mu`] only when
    /// labelling depends on the surrogate; computed there with Stein's
    /// identity and one-dimensional Gaussian quadrature.
    pub fn mu_labelled(&self, t: bool, x: &[f64]) -> f64 {
        match &self.spec.family {
            Family::LinearGaussianSurrogateDependentR { r_floor, .. } => {
                let (mean, sd, cs) = self.sdr_index(t, x);
                let f = *r_floor;
                let g = gaussian_expectation(mean, sd, |z| f + (1.0 - f) * sigmoid(z));
                let dg = gaussian_expectation(mean, sd, |z| {
                    let p = sigmoid(z);
                    (1.0 - f) * p * (1.0 - p)
                });
                // E[γᵀS g(c_sᵀS)] = γᵀm E[g] + σ_ν² γᵀc_s E[g′]
                let shift = self.spec.sigma_nu.powi(2) * dot(&self.spec.gamma, &cs) * dg / g;
                self.mu(t, x) + shift
            }
            _ => self.mu(t, x),
        }
    }

    /// `E[Y | R = 1, X = x, S = s]`, the outcome regression that ignores the arm.
    pub fn mu_tilde_pooled(&self, x: &[f64], s: &[f64]) -> f64 {
        let w1 = self.e(x) * self.r(true, x, s) * self.surrogate_density(true, x, s);
        let w0 = (1.0 - self.e(x)) * self.r(false, x, s) * self.surrogate_density(false, x, s);
        let p1 = if w1 + w0 > 0.0 { w1 / (w1 + w0) } else { 0.5 };
        p1 * self.mu_tilde(true, x, s) + (1.0 - p1) * self.mu_tilde(false, x, s)
    }

    /// Gaussian density of `S` given `(t, x)` up to a factor common to both arms.
    fn surrogate_density(&self, t: bool, x: &[f64], s: &[f64]) -> f64 {
        let m = self.surrogate_mean(t, x);
        let v = self.spec.sigma_nu.powi(2);
        if v == 0.0 {
            return if m.iter().zip(s).all(|(a, b)| a == b) { 1.0 } else { 0.0 };
        }
        let q: f64 = m.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
        (-0.5 * q / v).exp()
    }

    /// `Var{μ̃*(t, X, S(t)) | X}`.
    pub fn var_surrogate_signal(&self) -> f64 {
        self.spec.sigma_nu.powi(2) * dot(&self.spec.gamma, &self.spec.gamma)
    }

    /// `Var{Y(t) | X, S(t)}`.
    pub fn var_outcome_noise(&self) -> f64 {
        self.spec.sigma_eps.powi(2)
    }

    /// `μ*(1, x) − μ*(0, x)`.
    pub fn cate(&self, x: &[f64]) -> f64 {
        // the φ·x terms of the two arms cancel
        self.delta_star() + self.spec.tau_x_at(x)
    }
}

/// Ground truth for a spec: effect, nuisance oracle and efficiency bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthReport {
    pub delta_star: f64,
    pub xi1_star: f64,
    pub xi0_star: f64,
    pub epsilon_overlap: f64,
    pub statistical_surrogate_holds: bool,
    pub bounds: crate::bounds::BoundSet,
    pub oracle: Truth,
}

/// Computes the truth report, including every bound defined for the family.
pub fn truth(spec: &DgpSpec, mc_budget: usize, seed: u64) -> Result<TruthReport> {
    let req = crate::bounds::BoundRequest {
        spec: spec.clone(),
        which: crate::bounds::BoundId::all(),
        mc_budget,
        seed,
        sample_size: None,
    };
    let bounds = crate::bounds::compute_bounds(&req)?;
    let oracle = Truth::new(spec)?;
    Ok(TruthReport {
        delta_star: oracle.delta_star(),
        xi1_star: oracle.xi1_star(),
        xi0_star: oracle.xi0_star(),
        epsilon_overlap: oracle.epsilon_overlap,
        statistical_surrogate_holds: spec.statistical_surrogate_holds(),
        bounds,
        oracle,
    })
}

/// A single draw including potential outcomes, used by Monte Carlo oracles.
#[derive(Debug, Clone)]
pub struct FullDraw {
    pub x: Vec<f64>,
    pub t: bool,
    /// `S(0), S(1)`.
    pub s_pot: [Vec<f64>; 2],
    /// `Y(0), Y(1)`.
    pub y_pot: [f64; 2],
    pub r: bool,
}

impl FullDraw {
    pub fn s(&self) -> &[f64] {
        &self.s_pot[self.t as usize]
    }

    pub fn y(&self) -> f64 {
        self.y_pot[self.t as usize]
    }
}

/// Draws one unit with both potential surrogates and outcomes (shared noise
/// across arms). `label_rate` overrides `r*` for the constant-rate families.
pub fn draw_full(truth: &Truth, rng: &mut crate::seeding::Rng) -> FullDraw {
    let sp = &truth.spec;
    let x: Vec<f64> = (0..sp.d_x).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = rng.random::<f64>() < truth.e(&x);
    let nu: Vec<f64> = (0..sp.d_s).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let eps: f64 = rng.sample(StandardNormal);
    let make = |arm: bool| -> (Vec<f64>, f64) {
        let mut s = truth.surrogate_mean(arm, &x);
        for (sj, nj) in s.iter_mut().zip(&nu) {
            *sj += sp.sigma_nu * nj;
        }
        let y = truth.mu_tilde(arm, &x, &s) + sp.sigma_eps * eps;
        (s, y)
    };
    let (s0, y0) = make(false);
    let (s1, y1) = make(true);
    let s_obs = if t { &s1 } else { &s0 };
    let r = rng.random::<f64>() < truth.r(t, &x, s_obs);
    FullDraw {
        x,
        t,
        s_pot: [s0, s1],
        y_pot: [y0, y1],
        r,
    }
}

/// Draws `n` i.i.d. units. Deterministic given `(spec, n, seed)`.
pub fn generate(spec: &DgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let truth = Truth::at_sample_size(spec, n)?;
    let mut rng = rng_from_seed(seed);
    let mut ds = Dataset::with_capacity(spec.d_x, spec.d_s, n)?;
    for _ in 0..n {
        let d = draw_full(&truth, &mut rng);
        let y = d.r.then(|| d.y());
        ds.push(&d.x, d.t, d.s(), y)?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::MeanSe;

    #[test]
    fn lg1_effect_is_two() {
        let t = Truth::new(&DgpSpec::lg1()).unwrap();
        assert_eq!(t.delta_star(), 2.0);
        assert_eq!(t.xi1_star() - t.xi0_star(), t.delta_star());
        assert!((t.epsilon_overlap - sigmoid(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn balanced_treatment_when_propensity_is_flat() {
        let mut spec = DgpSpec::lg1();
        spec.e_coef = vec![0.0, 0.0];
        let n = 20_000;
        let ds = generate(&spec, n, 3).unwrap();
        let mean_t = (0..n).filter(|&i| ds.t(i)).count() as f64 / n as f64;
        assert!((mean_t - 0.5).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn full_labelling_under_unit_rate() {
        let spec = DgpSpec::lg1().with_family(Family::Mcar { rate: 1.0 });
        let ds = generate(&spec, 500, 1).unwrap();
        assert!(ds.units().all(|u| u.r() && u.y.is_some()));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DgpSpec::lg1();
        assert_eq!(generate(&spec, 50, 9).unwrap(), generate(&spec, 50, 9).unwrap());
        assert_ne!(generate(&spec, 50, 9).unwrap(), generate(&spec, 50, 10).unwrap());
    }

    #[test]
    fn rejects_poor_overlap_and_bad_shapes() {
        let mut spec = DgpSpec::lg1();
        spec.e_coef = vec![0.0, 9.0];
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("overlap"), "{err}");
        let mut spec = DgpSpec::lg1();
        spec.beta = vec![1.0, 2.0];
        assert!(spec.validate().unwrap_err().to_string().contains("beta"));
        let spec = DgpSpec::lg1().with_family(Family::VanishingLabelRegime {
            scale: 1.0,
            exponent: 0.5,
        });
        assert!(spec.validate().is_err());
        let spec = DgpSpec::lg1().with_family(Family::Mcar { rate: 0.0 });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn potential_outcome_contrast_matches_effect() {
        let truth = Truth::new(&DgpSpec::lg1()).unwrap();
        let mut rng = rng_from_seed(4);
        let diffs: Vec<f64> = (0..200_000)
            .map(|_| {
                let d = draw_full(&truth, &mut rng);
                d.y_pot[1] - d.y_pot[0]
            })
            .collect();
        let m = MeanSe::of(&diffs);
        assert!((m.mean - 2.0).abs() < 3.0 * m.se, "{m:?}");
    }

    #[test]
    fn vanishing_rate_follows_power_law() {
        let spec = DgpSpec::lg1().with_family(Family::VanishingLabelRegime {
            scale: 0.8,
            exponent: 0.3,
        });
        let r = spec.constant_label_rate(10_000).unwrap();
        assert!((r - 0.8 * 10_000f64.powf(-0.3)).abs() < 1e-15);
        let t = Truth::at_sample_size(&spec, 10_000).unwrap();
        assert_eq!(t.r(true, &[0.3], &[1.0]), r);
        assert_eq!(t.lambda(&[0.3]), 1.0);
    }

    fn sdr() -> DgpSpec {
        DgpSpec::lg1().with_family(Family::LinearGaussianSurrogateDependentR {
            r_coef: vec![0.0, 0.3, 0.5, 0.8],
            r_floor: 0.05,
        })
    }

    #[test]
    fn labelled_regression_under_surrogate_dependent_labelling() {
        // E[Y | T, X, R = 1] by rejection sampling against the quadrature form.
        let truth = Truth::new(&sdr()).unwrap();
        let x = [0.4];
        let mut rng = rng_from_seed(12);
        for t in [false, true] {
            let mut ys = Vec::new();
            let mut n_all = 0usize;
            while ys.len() < 100_000 {
                let mut s = truth.surrogate_mean(t, &x);
                s[0] += truth.spec.sigma_nu * rng.sample::<f64, _>(StandardNormal);
                let y = truth.mu_tilde(t, &x, &s)
                    + truth.spec.sigma_eps * rng.sample::<f64, _>(StandardNormal);
                n_all += 1;
                if rng.random::<f64>() < truth.r(t, &x, &s) {
                    ys.push(y);
                }
            }
            let m = MeanSe::of(&ys);
            assert!((m.mean - truth.mu_labelled(t, &x)).abs() < 4.0 * m.se);
            let rbar = ys.len() as f64 / n_all as f64;
            assert!((rbar - truth.r_bar(t, &x)).abs() < 0.01);
            // selection on S shifts the labelled mean away from E[μ̃ | T, X]
            assert!((truth.mu_labelled(t, &x) - truth.mu(t, &x)).abs() > 0.02);
        }
    }

    #[test]
    fn density_ratio_reweights_labelled_to_population() {
        // E[λ*(X) g(X) | R = 1] = E[g(X)] for polynomial test functions.
        let truth = Truth::new(&DgpSpec::lg1()).unwrap();
        let ds = generate(&truth.spec, 200_000, 21).unwrap();
        let tests: [fn(f64) -> f64; 3] = [|x| x, |x| x * x, |x| x * x * x - x];
        let exact = [0.0, 1.0 / 3.0, 0.0];
        for (g, want) in tests.iter().zip(exact) {
            let vals: Vec<f64> = ds
                .units()
                .filter(|u| u.r())
                .map(|u| truth.lambda(u.x) * g(u.x[0]))
                .collect();
            let m = MeanSe::of(&vals);
            assert!((m.mean - want).abs() < 4.0 * m.se, "{m:?} vs {want}");
        }
    }

    #[test]
    fn identification_formulas_agree() {
        // identif-0: mean of μ(1,X) − μ(0,X); identif-1: IPW with e·r;
        // identif-2: imputation of μ̃ weighted by T / e.
        let truth = Truth::new(&DgpSpec::lg1()).unwrap();
        let ds = generate(&truth.spec, 400_000, 5).unwrap();
        let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
        for u in ds.units() {
            let e = truth.e(u.x);
            a.push(truth.cate(u.x));
            let ipw = match u.y {
                Some(y) if u.t => y / (e * truth.r(true, u.x, u.s)),
                Some(y) => -y / ((1.0 - e) * truth.r(false, u.x, u.s)),
                None => 0.0,
            };
            b.push(ipw);
            c.push(if u.t {
                truth.mu_tilde(true, u.x, u.s) / e
            } else {
                -truth.mu_tilde(false, u.x, u.s) / (1.0 - e)
            });
        }
        for v in [a, b, c] {
            let m = MeanSe::of(&v);
            // the effect is homogeneous, so the first formula has zero spread
            assert!((m.mean - 2.0).abs() <= 4.0 * m.se + 1e-12, "{m:?}");
        }
    }

    #[test]
    fn surrogate_regression_averages_to_outcome_regression() {
        let truth = Truth::new(&DgpSpec::lg1()).unwrap();
        let mut rng = rng_from_seed(8);
        for &x in &[-0.9, 0.0, 0.7] {
            for t in [false, true] {
                let vals: Vec<f64> = (0..50_000)
                    .map(|_| {
                        let mut s = truth.surrogate_mean(t, &[x]);
                        s[0] += rng.sample::<f64, _>(StandardNormal);
                        truth.mu_tilde(t, &[x], &s)
                    })
                    .collect();
                let m = MeanSe::of(&vals);
                assert!((m.mean - truth.mu(t, &[x])).abs() < 4.0 * m.se);
            }
        }
    }

    #[test]
    fn pooled_regression_matches_arm_regression_without_direct_effect() {
        let mut spec = DgpSpec::lg1();
        spec.tau = 0.0;
        let truth = Truth::new(&spec).unwrap();
        for (x, s) in [(0.2, 1.0), (-0.5, 3.0)] {
            assert!((truth.mu_tilde_pooled(&[x], &[s]) - truth.mu_tilde(true, &[x], &[s])).abs() < 1e-12);
        }
        assert!(spec.statistical_surrogate_holds());
        assert!(!DgpSpec::lg1().statistical_surrogate_holds());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = sdr();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(DgpSpec::from_json(&text).unwrap(), spec);
    }
}
