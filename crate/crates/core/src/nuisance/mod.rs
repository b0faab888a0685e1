//! Nuisance learners: a uniform fit/predict interface over logistic IRLS,
//! ridge regression, boosted stumps, constants, feature-omission wrappers and
//! oracle adapters.
//!
//! Feature layouts by role (columns in this order):
//!
//! | role | features |
//! |---|---|
//! | `e`, `λ` | `x` |
//! | `r` | `t, x, s` (or `t, x` without surrogates) |
//! | `μ̃` per arm, pooled `μ̃` | `x, s` |
//! | `μ` per arm | `x` |

mod boost;
mod logistic;
mod oracle;
mod ridge;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub use boost::{fit_boosted_classifier, fit_boosted_regression, StumpEnsemble};
pub use logistic::{fit_logistic, LogisticFit};
pub use oracle::{OraclePredictor, OracleRole};
pub use ridge::{fit_ridge, LinearFit};

/// Learner configuration. Serialises as a tagged JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    /// Logistic regression by iteratively reweighted least squares
    /// (binary targets only). `ridge` penalises all slopes, not the intercept.
    LogisticIrls {
        #[serde(default)]
        ridge: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Least squares with an optional ridge penalty (real targets only).
    RidgeOls {
        #[serde(default)]
        ridge: f64,
    },
    /// Gradient boosting on depth-one trees: L2 loss for regression,
    /// logistic loss for classification.
    BoostedStumps {
        #[serde(default = "default_rounds")]
        rounds: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_stumps")]
        stumps_per_round: usize,
        #[serde(default = "default_thresholds")]
        thresholds: usize,
    },
    /// The true nuisance function; needs a truth oracle attached to the plan.
    Oracle,
    /// A fixed value, whatever the data.
    Constant { value: f64 },
    /// Fits `inner` after dropping the listed feature columns.
    DeliberatelyMisspecified {
        inner: Box<LearnerSpec>,
        omit_features: Vec<usize>,
    },
}

fn default_max_iter() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-8
}
fn default_rounds() -> usize {
    300
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_stumps() -> usize {
    1
}
fn default_thresholds() -> usize {
    32
}

impl LearnerSpec {
    pub fn logistic() -> Self {
        LearnerSpec::LogisticIrls {
            ridge: 0.0,
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }

    pub fn ridge(penalty: f64) -> Self {
        LearnerSpec::RidgeOls { ridge: penalty }
    }

    pub fn ols() -> Self {
        LearnerSpec::RidgeOls { ridge: 0.0 }
    }

    pub fn boosted() -> Self {
        LearnerSpec::BoostedStumps {
            rounds: default_rounds(),
            learning_rate: default_learning_rate(),
            stumps_per_round: default_stumps(),
            thresholds: default_thresholds(),
        }
    }

    pub fn omitting(self, omit_features: Vec<usize>) -> Self {
        LearnerSpec::DeliberatelyMisspecified {
            inner: Box::new(self),
            omit_features,
        }
    }

    /// True if the learner (or a wrapped learner) is [`LearnerSpec::Oracle`].
    pub fn is_oracle(&self) -> bool {
        match self {
            LearnerSpec::Oracle => true,
            LearnerSpec::DeliberatelyMisspecified { inner, .. } => inner.is_oracle(),
            _ => false,
        }
    }

    /// Checks hyper-parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("learner: {m}")));
        match self {
            LearnerSpec::LogisticIrls { ridge, max_iter, tol } => {
                if !(*ridge >= 0.0 && ridge.is_finite()) {
                    return bad("ridge penalty must be finite and non-negative");
                }
                if *max_iter == 0 || !(*tol > 0.0) {
                    return bad("IRLS needs max_iter ≥ 1 and tol > 0");
                }
            }
            LearnerSpec::RidgeOls { ridge } => {
                if !(*ridge >= 0.0 && ridge.is_finite()) {
                    return bad("ridge penalty must be finite and non-negative");
                }
            }
            LearnerSpec::BoostedStumps {
                rounds,
                learning_rate,
                stumps_per_round,
                thresholds,
            } => {
                if *rounds == 0 || *stumps_per_round == 0 || *thresholds == 0 {
                    return bad("boosting needs rounds, stumps_per_round and thresholds ≥ 1");
                }
                if !(*learning_rate > 0.0 && *learning_rate <= 1.0) {
                    return bad("learning rate must lie in (0, 1]");
                }
            }
            LearnerSpec::Oracle => {}
            LearnerSpec::Constant { value } => {
                if !value.is_finite() {
                    return bad("constant must be finite");
                }
            }
            LearnerSpec::DeliberatelyMisspecified { inner, .. } => inner.validate()?,
        }
        Ok(())
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "feature buffer size mismatch");
        Features { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Features::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature at row {}",
                pos / self.cols.max(1)
            )));
        }
        Ok(())
    }

    fn without(&self, omit: &[usize]) -> Features {
        let keep: Vec<usize> = (0..self.cols).filter(|j| !omit.contains(j)).collect();
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(keep.iter().map(|&j| r[j]));
        }
        Features::new(self.rows, keep.len(), data)
    }
}

/// A fitted, immutable nuisance function evaluated on one feature row.
pub trait Predictor: Send + Sync + Debug {
    fn predict(&self, z: &[f64]) -> f64;

    /// Fitted parameters for inspection.
    fn params(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

#[derive(Debug, Clone)]
pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn predict(&self, _z: &[f64]) -> f64 {
        self.0
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "constant": self.0 })
    }
}

/// Output clamped to `[lo, hi]`.
#[derive(Debug)]
pub struct Clipped {
    pub inner: Box<dyn Predictor>,
    pub lo: f64,
    pub hi: f64,
}

impl Predictor for Clipped {
    fn predict(&self, z: &[f64]) -> f64 {
        self.inner.predict(z).clamp(self.lo, self.hi)
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "clip": [self.lo, self.hi], "inner": self.inner.params() })
    }
}

/// Drops columns before delegating.
#[derive(Debug)]
pub struct Omitting {
    pub inner: Box<dyn Predictor>,
    pub keep: Vec<usize>,
}

impl Predictor for Omitting {
    fn predict(&self, z: &[f64]) -> f64 {
        let sub: Vec<f64> = self.keep.iter().map(|&j| z[j]).collect();
        self.inner.predict(&sub)
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "kept_features": self.keep, "inner": self.inner.params() })
    }
}

fn oracle_error() -> Error {
    Error::InvalidInput("oracle learners are resolved by the cross-fitting plan, which needs an attached truth".into())
}

/// Fits a probability model for binary `labels`, returning raw (unclipped)
/// probabilities. With a single class present, returns the empirical rate.
pub fn fit_binary_raw(
    features: &Features,
    labels: &[bool],
    spec: &LearnerSpec,
) -> Result<Box<dyn Predictor>> {
    spec.validate()?;
    if labels.is_empty() || labels.len() != features.rows {
        return Err(Error::InvalidInput("labels must be non-empty and match the feature rows".into()));
    }
    features.check_finite()?;
    if let LearnerSpec::Constant { value } = spec {
        return Ok(Box::new(ConstantPredictor(*value)));
    }
    if let LearnerSpec::DeliberatelyMisspecified { inner, omit_features } = spec {
        let keep: Vec<usize> = (0..features.cols).filter(|j| !omit_features.contains(j)).collect();
        let fit = fit_binary_raw(&features.without(omit_features), labels, inner)?;
        return Ok(Box::new(Omitting { inner: fit, keep }));
    }
    let ones = labels.iter().filter(|&&l| l).count();
    if ones == 0 || ones == labels.len() {
        return Ok(Box::new(ConstantPredictor(ones as f64 / labels.len() as f64)));
    }
    match spec {
        LearnerSpec::LogisticIrls { ridge, max_iter, tol } => {
            Ok(Box::new(fit_logistic(features, labels, *ridge, *max_iter, *tol)?))
        }
        LearnerSpec::BoostedStumps {
            rounds,
            learning_rate,
            stumps_per_round,
            thresholds,
        } => Ok(Box::new(fit_boosted_classifier(
            features,
            labels,
            *rounds,
            *learning_rate,
            *stumps_per_round,
            *thresholds,
        ))),
        LearnerSpec::RidgeOls { .. } => Err(Error::InvalidInput(
            "ridge regression is not a classifier".into(),
        )),
        LearnerSpec::Oracle => Err(oracle_error()),
        LearnerSpec::Constant { .. } | LearnerSpec::DeliberatelyMisspecified { .. } => unreachable!(),
    }
}

/// Propensity model clipped to `[lo, hi]`.
pub fn fit_binary_propensity(
    features: &Features,
    labels: &[bool],
    spec: &LearnerSpec,
    lo: f64,
    hi: f64,
) -> Result<Box<dyn Predictor>> {
    let inner = fit_binary_raw(features, labels, spec)?;
    Ok(Box::new(Clipped { inner, lo, hi }))
}

/// Fits a regression of `targets` on `features`.
pub fn fit_regression(
    features: &Features,
    targets: &[f64],
    spec: &LearnerSpec,
) -> Result<Box<dyn Predictor>> {
    spec.validate()?;
    if targets.is_empty() || targets.len() != features.rows {
        return Err(Error::InvalidInput("targets must be non-empty and match the feature rows".into()));
    }
    features.check_finite()?;
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite regression target".into()));
    }
    match spec {
        LearnerSpec::RidgeOls { ridge } => Ok(Box::new(fit_ridge(features, targets, *ridge)?)),
        LearnerSpec::BoostedStumps {
            rounds,
            learning_rate,
            stumps_per_round,
            thresholds,
        } => Ok(Box::new(fit_boosted_regression(
            features,
            targets,
            *rounds,
            *learning_rate,
            *stumps_per_round,
            *thresholds,
        ))),
        LearnerSpec::Constant { value } => Ok(Box::new(ConstantPredictor(*value))),
        LearnerSpec::DeliberatelyMisspecified { inner, omit_features } => {
            let keep: Vec<usize> = (0..features.cols).filter(|j| !omit_features.contains(j)).collect();
            let fit = fit_regression(&features.without(omit_features), targets, inner)?;
            Ok(Box::new(Omitting { inner: fit, keep }))
        }
        LearnerSpec::LogisticIrls { .. } => Err(Error::InvalidInput(
            "logistic regression needs binary targets".into(),
        )),
        LearnerSpec::Oracle => Err(oracle_error()),
    }
}

// ---------------------------------------------------------------------------
// Role-specific feature builders

/// Which columns the labelling model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFeatures {
    /// `(t, x, s)`.
    TreatmentCovariatesSurrogates,
    /// `(t, x)`.
    TreatmentCovariates,
}

pub fn x_row(ds: &Dataset, i: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(ds.x(i));
}

pub fn xs_row(ds: &Dataset, i: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(ds.x(i));
    out.extend_from_slice(ds.s(i));
}

pub fn label_row(ds: &Dataset, i: usize, t: bool, layout: LabelFeatures, out: &mut Vec<f64>) {
    out.clear();
    out.push(t as u8 as f64);
    out.extend_from_slice(ds.x(i));
    if layout == LabelFeatures::TreatmentCovariatesSurrogates {
        out.extend_from_slice(ds.s(i));
    }
}

fn collect(ds: &Dataset, idx: &[usize], row: impl Fn(&Dataset, usize, &mut Vec<f64>)) -> Features {
    let mut buf = Vec::new();
    let mut data = Vec::new();
    let mut cols = 0;
    for &i in idx {
        row(ds, i, &mut buf);
        cols = buf.len();
        data.extend_from_slice(&buf);
    }
    Features::new(idx.len(), cols, data)
}

pub fn x_features(ds: &Dataset, idx: &[usize]) -> Features {
    collect(ds, idx, x_row)
}

pub fn xs_features(ds: &Dataset, idx: &[usize]) -> Features {
    collect(ds, idx, xs_row)
}

pub fn label_features(ds: &Dataset, idx: &[usize], layout: LabelFeatures) -> Features {
    collect(ds, idx, |d, i, out| label_row(d, i, d.t(i), layout, out))
}

/// Outcome regressions fitted on labelled training units.
#[derive(Debug)]
pub struct MuPair {
    /// `μ̃(t, ·)` on `(x, s)`, indexed by arm; both entries share one model when pooled.
    pub mu_tilde: [std::sync::Arc<dyn Predictor>; 2],
    /// `μ(t, ·)` on `x`, indexed by arm.
    pub mu: [std::sync::Arc<dyn Predictor>; 2],
    pub pooled: bool,
}

/// Fits `(μ̃, μ)` on the labelled units among `train`: per arm by default, or
/// one arm-free `μ̃(x, s)` when `pooled`.
pub fn fit_mu_pair(
    ds: &Dataset,
    train: &[usize],
    mu_tilde_spec: &LearnerSpec,
    mu_spec: &LearnerSpec,
    pooled: bool,
) -> Result<MuPair> {
    let mut arms: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for &i in train {
        if ds.r(i) {
            arms[ds.t(i) as usize].push(i);
        }
    }
    for (arm, idx) in arms.iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::MissingArm { arm: arm as u8 });
        }
    }
    let targets = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| ds.y(i).expect("labelled")).collect() };
    let mut mu_fit = Vec::with_capacity(2);
    for idx in &arms {
        let f = fit_regression(&x_features(ds, idx), &targets(idx), mu_spec)?;
        mu_fit.push(std::sync::Arc::<dyn Predictor>::from(f));
    }
    let mu_tilde: [std::sync::Arc<dyn Predictor>; 2] = if pooled {
        let all: Vec<usize> = arms.concat();
        let f: std::sync::Arc<dyn Predictor> =
            fit_regression(&xs_features(ds, &all), &targets(&all), mu_tilde_spec)?.into();
        [f.clone(), f]
    } else {
        let f0 = fit_regression(&xs_features(ds, &arms[0]), &targets(&arms[0]), mu_tilde_spec)?;
        let f1 = fit_regression(&xs_features(ds, &arms[1]), &targets(&arms[1]), mu_tilde_spec)?;
        [f0.into(), f1.into()]
    };
    let mu1 = mu_fit.pop().unwrap();
    let mu0 = mu_fit.pop().unwrap();
    Ok(MuPair {
        mu_tilde,
        mu: [mu0, mu1],
        pooled,
    })
}

/// Density ratio `λ̂(x) = clip(r̂_train / q̂(x), 0, c_λ)` where `q̂(x)` estimates
/// `P(R = 1 | X = x)` on all training units.
#[derive(Debug)]
pub struct DensityRatio {
    pub classifier: Box<dyn Predictor>,
    pub label_fraction: f64,
    pub c_lambda: f64,
}

impl Predictor for DensityRatio {
    fn predict(&self, z: &[f64]) -> f64 {
        let q = self.classifier.predict(z);
        let v = self.label_fraction / q;
        if v.is_nan() {
            self.c_lambda
        } else {
            v.clamp(0.0, self.c_lambda)
        }
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({
            "label_fraction": self.label_fraction,
            "c_lambda": self.c_lambda,
            "classifier": self.classifier.params(),
        })
    }
}

pub fn fit_density_ratio(
    ds: &Dataset,
    train: &[usize],
    spec: &LearnerSpec,
    c_lambda: f64,
) -> Result<DensityRatio> {
    let labels: Vec<bool> = train.iter().map(|&i| ds.r(i)).collect();
    let n_l = labels.iter().filter(|&&r| r).count();
    if n_l == 0 {
        return Err(Error::NoLabelled);
    }
    if !(c_lambda > 0.0) {
        return Err(Error::InvalidInput("c_lambda must be positive".into()));
    }
    let classifier = fit_binary_raw(&x_features(ds, train), &labels, spec)?;
    Ok(DensityRatio {
        classifier,
        label_fraction: n_l as f64 / train.len() as f64,
        c_lambda,
    })
}
