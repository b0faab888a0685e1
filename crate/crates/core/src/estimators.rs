//! Point estimators, plug-in variances and Wald intervals.
//!
//! Every estimator is the sample mean of a δ-free score `φ_i`; the reported
//! influence values are `ψ_i = φ_i − δ̂` and the variance estimate is their
//! mean square, evaluated with the same out-of-fold fits.

use serde::{Deserialize, Serialize};

use crate::crossfit::{cross_fit, CrossFitPlan, NuisanceFits, Required};
use crate::data::{dataset_split_counts, make_folds, Dataset, EstimateReport, Scale};
use crate::dgp::Truth;
use crate::error::{Error, Result};
use crate::influence::{score_parts, setting_parts, InfluenceKind, NuisanceValues, ScoreParts, Unit};
use crate::nuisance::LabelFeatures;
use crate::stats::{mean, two_sided_z};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Cross-fitted efficient estimator with labelling propensity `r̂(t, x, s)`.
    DmlGeneral,
    /// Density-ratio form: weights `R λ̂(X) / r̂_N`, scaled by `√N_l`.
    DmlDensityRatio,
    /// Completely-at-random form: weights `R / r̂_N`, scaled by `√N_l`.
    DmlMcar,
    /// Ignores the surrogates: labels-only efficient score with `r̂(t, x)`.
    NoSurrogateBaseline,
    /// Augmented IPW on fully labelled data.
    FullDataAipw,
    /// Imputation averaged over the unlabelled units plus a labelled-only
    /// residual correction.
    ZhangBradic,
    /// Mean of the efficient score under the true nuisances (no fitting).
    OraclePlugin,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::DmlGeneral,
        EstimatorKind::DmlDensityRatio,
        EstimatorKind::DmlMcar,
        EstimatorKind::NoSurrogateBaseline,
        EstimatorKind::FullDataAipw,
        EstimatorKind::ZhangBradic,
        EstimatorKind::OraclePlugin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::DmlGeneral => "dml_general",
            EstimatorKind::DmlDensityRatio => "dml_density_ratio",
            EstimatorKind::DmlMcar => "dml_mcar",
            EstimatorKind::NoSurrogateBaseline => "no_surrogate_baseline",
            EstimatorKind::FullDataAipw => "full_data_aipw",
            EstimatorKind::ZhangBradic => "zhang_bradic",
            EstimatorKind::OraclePlugin => "oracle_plugin",
        }
    }

    pub fn scale(self) -> Scale {
        match self {
            EstimatorKind::DmlDensityRatio | EstimatorKind::DmlMcar => Scale::SqrtNl,
            _ => Scale::SqrtN,
        }
    }

    /// Nuisances that must be cross-fitted.
    pub fn required(self) -> Required {
        let (e, r, mu_tilde, mu, lambda) = match self {
            EstimatorKind::DmlGeneral => (true, true, true, true, false),
            EstimatorKind::DmlDensityRatio => (true, false, true, true, true),
            EstimatorKind::DmlMcar => (true, false, true, true, false),
            EstimatorKind::NoSurrogateBaseline => (true, true, false, true, false),
            EstimatorKind::FullDataAipw | EstimatorKind::ZhangBradic => (true, false, false, true, false),
            EstimatorKind::OraclePlugin => (false, false, false, false, false),
        };
        Required { e, r, mu_tilde, mu, lambda }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    #[serde(default)]
    pub plan: CrossFitPlan,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Fit one arm-free surrogate regression `μ̃(x, s)`.
    #[serde(default)]
    pub pooled_outcome_regression: bool,
    /// Name used in reports; defaults to the estimator name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn default_alpha() -> f64 {
    0.05
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        EstimatorConfig {
            kind,
            plan: CrossFitPlan::default(),
            alpha: default_alpha(),
            pooled_outcome_regression: false,
            label: None,
        }
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn display_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn with_plan(mut self, plan: CrossFitPlan) -> Self {
        self.plan = plan;
        self
    }

    /// The plan with the nuisances and feature layouts this estimator needs.
    pub fn effective_plan(&self) -> CrossFitPlan {
        let mut plan = self.plan.clone();
        plan.required = self.kind.required();
        plan.pooled_mu_tilde = self.pooled_outcome_regression;
        if self.kind == EstimatorKind::NoSurrogateBaseline {
            plan.label_features = LabelFeatures::TreatmentCovariates;
        }
        plan
    }
}

/// Cross-fits (with folds drawn from `seed`) and estimates.
pub fn estimate(ds: &Dataset, config: &EstimatorConfig, seed: u64) -> Result<EstimateReport> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {}", config.alpha)));
    }
    let counts = dataset_split_counts(ds)?;
    if counts.n_labelled == 0 {
        return Err(Error::NoLabelled);
    }
    check_requirements(config.kind, ds)?;
    if config.kind == EstimatorKind::OraclePlugin {
        let truth = config.plan.truth.as_ref().ok_or_else(|| {
            Error::Requirement("the oracle estimator needs a truth attached to the plan".into())
        })?;
        return estimate_oracle(ds, truth, config.alpha);
    }
    let plan = config.effective_plan();
    let folds = make_folds(ds, plan.k, seed)?;
    let fits = cross_fit(ds, &plan, &folds)?;
    estimate_with_fits(ds, config, &fits)
}

fn check_requirements(kind: EstimatorKind, ds: &Dataset) -> Result<()> {
    let counts = dataset_split_counts(ds)?;
    match kind {
        EstimatorKind::FullDataAipw if counts.n_unlabelled > 0 => Err(Error::Requirement(format!(
            "full-data AIPW needs every outcome, {} are missing",
            counts.n_unlabelled
        ))),
        EstimatorKind::ZhangBradic if counts.n_unlabelled == 0 => Err(Error::Requirement(
            "the unlabelled-imputation estimator needs at least one unlabelled unit".into(),
        )),
        _ => Ok(()),
    }
}

fn require_finite(nu: &NuisanceValues<f64>, req: Required, i: usize) -> Result<()> {
    for (needed, v, name) in [
        (req.e, nu.e, "e"),
        (req.r, nu.r1, "r"),
        (req.r, nu.r0, "r"),
        (req.mu_tilde, nu.mu_tilde1, "mu_tilde"),
        (req.mu_tilde, nu.mu_tilde0, "mu_tilde"),
        (req.mu, nu.mu1, "mu"),
        (req.mu, nu.mu0, "mu"),
        (req.lambda, nu.lambda, "lambda"),
    ] {
        if needed && !v.is_finite() {
            return Err(Error::NonFinite { index: i, term: name });
        }
    }
    Ok(())
}

fn checked(parts: ScoreParts<f64>, i: usize) -> Result<f64> {
    match parts.non_finite() {
        Some(term) => Err(Error::NonFinite { index: i, term }),
        None => Ok(parts.total()),
    }
}

/// δ-free scores `φ_i` of a cross-fitted estimator.
pub fn delta_free_scores(ds: &Dataset, kind: EstimatorKind, fits: &NuisanceFits) -> Result<Vec<f64>> {
    let counts = dataset_split_counts(ds)?;
    let r_hat = counts.r_hat;
    let req = kind.required();
    let mut phi = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let nu = fits.eval(ds, i);
        require_finite(&nu, req, i)?;
        let unit = Unit { t: ds.t(i), y: ds.y(i) };
        let parts = match kind {
            EstimatorKind::DmlGeneral => setting_parts(InfluenceKind::PsiGeneral, unit, &nu)?,
            EstimatorKind::NoSurrogateBaseline => setting_parts(InfluenceKind::PsiSettingI, unit, &nu)?,
            EstimatorKind::FullDataAipw => setting_parts(InfluenceKind::PsiSettingIV, unit, &nu)?,
            EstimatorKind::DmlDensityRatio => score_parts(unit, &NuisanceValues { r1: r_hat, r0: r_hat, ..nu }),
            EstimatorKind::DmlMcar => score_parts(
                unit,
                &NuisanceValues {
                    r1: r_hat,
                    r0: r_hat,
                    lambda: 1.0,
                    ..nu
                },
            ),
            EstimatorKind::ZhangBradic | EstimatorKind::OraclePlugin => {
                return Err(Error::Requirement(format!("{kind} has no single δ-free score")))
            }
        };
        phi.push(checked(parts, i)?);
    }
    Ok(phi)
}

/// Estimates from existing fits (so several estimators can share them).
pub fn estimate_with_fits(ds: &Dataset, config: &EstimatorConfig, fits: &NuisanceFits) -> Result<EstimateReport> {
    let kind = config.kind;
    check_requirements(kind, ds)?;
    let counts = dataset_split_counts(ds)?;
    if counts.n_labelled == 0 {
        return Err(Error::NoLabelled);
    }
    let (delta_hat, influence) = match kind {
        EstimatorKind::ZhangBradic => zhang_bradic(ds, fits)?,
        EstimatorKind::OraclePlugin => {
            return Err(Error::Requirement("the oracle estimator does not use fitted nuisances".into()))
        }
        _ => {
            let phi = delta_free_scores(ds, kind, fits)?;
            let d = mean(&phi);
            (d, phi.iter().map(|p| p - d).collect())
        }
    };
    report(kind, delta_hat, influence, counts.n, counts.n_labelled, config.alpha)
}

fn zhang_bradic(ds: &Dataset, fits: &NuisanceFits) -> Result<(f64, Vec<f64>)> {
    let req = EstimatorKind::ZhangBradic.required();
    let mut imput = Vec::new();
    let mut resid = Vec::new();
    let mut per_unit = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let nu = fits.eval(ds, i);
        require_finite(&nu, req, i)?;
        match ds.y(i) {
            None => {
                let m = nu.mu1 - nu.mu0;
                if !m.is_finite() {
                    return Err(Error::NonFinite { index: i, term: "cate" });
                }
                imput.push(m);
                per_unit.push(m);
            }
            Some(y) => {
                let a = if ds.t(i) {
                    (y - nu.mu1) / nu.e
                } else {
                    -((y - nu.mu0) / (1.0 - nu.e))
                };
                if !a.is_finite() {
                    return Err(Error::NonFinite { index: i, term: "residual" });
                }
                resid.push(a);
                per_unit.push(a);
            }
        }
    }
    let n = ds.len() as f64;
    let (m_u, m_l) = (mean(&imput), mean(&resid));
    let (w_u, w_l) = (n / imput.len() as f64, n / resid.len() as f64);
    let influence = per_unit
        .iter()
        .enumerate()
        .map(|(i, &v)| if ds.r(i) { w_l * (v - m_l) } else { w_u * (v - m_u) })
        .collect();
    Ok((m_u + m_l, influence))
}

fn estimate_oracle(ds: &Dataset, truth: &Truth, alpha: f64) -> Result<EstimateReport> {
    let counts = dataset_split_counts(ds)?;
    let mut phi = Vec::with_capacity(ds.len());
    for (i, u) in ds.units().enumerate() {
        let nu = NuisanceValues::new(
            truth.e(u.x),
            truth.r(true, u.x, u.s),
            truth.r(false, u.x, u.s),
            truth.mu_tilde(true, u.x, u.s),
            truth.mu_tilde(false, u.x, u.s),
            truth.mu(true, u.x),
            truth.mu(false, u.x),
        );
        phi.push(checked(score_parts(Unit { t: u.t, y: u.y }, &nu), i)?);
    }
    let d = mean(&phi);
    let influence = phi.iter().map(|p| p - d).collect();
    report(EstimatorKind::OraclePlugin, d, influence, counts.n, counts.n_labelled, alpha)
}

/// `δ̂ ∓ z_{1−α/2} √(V̂ / N_eff)`.
pub fn wald_interval(delta_hat: f64, variance_hat: f64, n_eff: usize, alpha: f64) -> Result<[f64; 2]> {
    let z = two_sided_z(alpha)?;
    let half = z * (variance_hat / n_eff as f64).sqrt();
    Ok([delta_hat - half, delta_hat + half])
}

fn report(
    kind: EstimatorKind,
    delta_hat: f64,
    influence: Vec<f64>,
    n: usize,
    n_l: usize,
    alpha: f64,
) -> Result<EstimateReport> {
    let scale = kind.scale();
    let ms = crate::stats::mean_square(&influence);
    let variance_hat = match scale {
        Scale::SqrtN => ms,
        Scale::SqrtNl => ms * n_l as f64 / n as f64,
    };
    let n_eff = match scale {
        Scale::SqrtN => n,
        Scale::SqrtNl => n_l,
    };
    if !delta_hat.is_finite() || !variance_hat.is_finite() {
        return Err(Error::NonFinite { index: 0, term: "estimate" });
    }
    let ci = wald_interval(delta_hat, variance_hat, n_eff, alpha)?;
    Ok(EstimateReport {
        estimator: kind,
        delta_hat,
        variance_hat,
        scale,
        ci,
        alpha,
        n,
        n_l,
        influence_values: influence,
    })
}

/// Plug-in variance `mean ψ²(W; δ̂, η̂_{k(i)})` for one of the δ-free scores and
/// its Wald interval (`√N` scaling).
pub fn variance_and_ci(
    ds: &Dataset,
    delta_hat: f64,
    fits: &NuisanceFits,
    kind: InfluenceKind,
    alpha: f64,
) -> Result<(f64, [f64; 2])> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let mut sq = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let nu = fits.eval(ds, i);
        let parts = setting_parts(kind, Unit { t: ds.t(i), y: ds.y(i) }, &nu)?;
        let psi = checked(parts, i)? - delta_hat;
        sq.push(psi * psi);
    }
    let v = mean(&sq);
    Ok((v, wald_interval(delta_hat, v, ds.len(), alpha)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossfit::LearnerSet;
    use crate::dgp::{generate, DgpSpec, Family};
    use crate::nuisance::LearnerSpec;
    use std::sync::Arc;

    #[test]
    fn z_value() {
        let z = two_sided_z(0.05).unwrap();
        let reference = statrs::distribution::ContinuousCDF::inverse_cdf(
            &statrs::distribution::Normal::standard(),
            0.975,
        );
        assert!((z - 1.959964).abs() < 1e-6);
        assert!((z - reference).abs() < 1e-6);
    }

    #[test]
    fn constant_influence_gives_square() {
        let r = report(EstimatorKind::DmlGeneral, 1.0, vec![0.5; 10], 10, 10, 0.05).unwrap();
        assert_eq!(r.variance_hat, 0.25);
        let half = 1.959964 * (0.25f64 / 10.0).sqrt();
        assert!((r.ci[1] - 1.0 - half).abs() < 1e-6);
        assert!(r.ci_low() <= r.delta_hat && r.delta_hat <= r.ci_high());
    }

    #[test]
    fn alpha_out_of_range() {
        assert!(wald_interval(0.0, 1.0, 10, 1.5).is_err());
        let ds = generate(&DgpSpec::lg1(), 100, 1).unwrap();
        let mut cfg = EstimatorConfig::new(EstimatorKind::DmlGeneral);
        cfg.alpha = 0.0;
        assert!(estimate(&ds, &cfg, 1).is_err());
    }

    #[test]
    fn influence_values_are_centred() {
        let ds = generate(&DgpSpec::lg1(), 2000, 2).unwrap();
        for kind in [EstimatorKind::DmlGeneral, EstimatorKind::DmlMcar, EstimatorKind::ZhangBradic] {
            let r = estimate(&ds, &EstimatorConfig::new(kind), 3).unwrap();
            assert!(mean(&r.influence_values).abs() < 1e-10, "{kind}");
            assert_eq!(r.influence_values.len(), ds.len());
        }
    }

    #[test]
    fn full_labelling_collapses_to_aipw() {
        let spec = DgpSpec::lg1().with_family(Family::Mcar { rate: 1.0 });
        let ds = generate(&spec, 3000, 4).unwrap();
        let mut plan = CrossFitPlan::default();
        plan.required = Required { e: true, r: true, mu_tilde: true, mu: true, lambda: false };
        let folds = make_folds(&ds, 5, 5).unwrap();
        let fits = cross_fit(&ds, &plan, &folds).unwrap();
        let a = estimate_with_fits(&ds, &EstimatorConfig::new(EstimatorKind::DmlGeneral), &fits).unwrap();
        let b = estimate_with_fits(&ds, &EstimatorConfig::new(EstimatorKind::FullDataAipw), &fits).unwrap();
        assert!((a.delta_hat - b.delta_hat).abs() < 1e-12);
        for (p, q) in a.influence_values.iter().zip(&b.influence_values) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn requirements_are_enforced() {
        let ds = generate(&DgpSpec::lg1(), 500, 6).unwrap();
        let err = estimate(&ds, &EstimatorConfig::new(EstimatorKind::FullDataAipw), 1).unwrap_err();
        assert!(matches!(err, Error::Requirement(_)));
        let full = generate(&DgpSpec::lg1().with_family(Family::Mcar { rate: 1.0 }), 500, 6).unwrap();
        let err = estimate(&full, &EstimatorConfig::new(EstimatorKind::ZhangBradic), 1).unwrap_err();
        assert!(matches!(err, Error::Requirement(_)));
        let err = estimate(&ds, &EstimatorConfig::new(EstimatorKind::OraclePlugin), 1).unwrap_err();
        assert!(matches!(err, Error::Requirement(_)));
    }

    #[test]
    fn weighting_identity() {
        let ds = generate(&DgpSpec::lg1(), 1000, 7).unwrap();
        let c = dataset_split_counts(&ds).unwrap();
        let f = |i: usize| ds.x(i)[0].sin() + ds.s(i)[0];
        let lab: Vec<f64> = ds.labelled_indices().iter().map(|&i| f(i)).collect();
        let all: Vec<f64> = (0..ds.len()).map(|i| if ds.r(i) { f(i) / c.r_hat } else { 0.0 }).collect();
        assert!((mean(&lab) - mean(&all)).abs() < 1e-12);
    }

    #[test]
    fn oracle_estimator_is_close() {
        let spec = DgpSpec::lg1();
        let truth = Arc::new(Truth::new(&spec).unwrap());
        let ds = generate(&spec, 20_000, 8).unwrap();
        let mut cfg = EstimatorConfig::new(EstimatorKind::OraclePlugin);
        cfg.plan.truth = Some(truth);
        let r = estimate(&ds, &cfg, 0).unwrap();
        assert!((r.delta_hat - 2.0).abs() < 4.0 * (r.variance_hat / 20_000.0).sqrt());
    }

    #[test]
    fn report_json_has_contract_fields() {
        let ds = generate(&DgpSpec::lg1(), 500, 9).unwrap();
        let r = estimate(&ds, &EstimatorConfig::new(EstimatorKind::DmlGeneral), 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        for key in ["estimator", "delta_hat", "variance_hat", "scale", "ci", "alpha", "n", "n_l"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["estimator"], "dml_general");
    }

    #[test]
    fn boosted_learners_run_end_to_end() {
        let ds = generate(&DgpSpec::lg1(), 1500, 10).unwrap();
        let mut cfg = EstimatorConfig::new(EstimatorKind::DmlDensityRatio);
        cfg.plan.learners = LearnerSet::boosted();
        cfg.plan.learners.mu_tilde = LearnerSpec::ols();
        let r = estimate(&ds, &cfg, 2).unwrap();
        assert!(r.delta_hat.is_finite() && r.variance_hat > 0.0);
        assert_eq!(r.scale, Scale::SqrtNl);
    }
}
