//! Influence functions.
//!
//! Every score is evaluated in its δ-free form `φ = ψ + δ` split into three
//! parts, so estimators never need the target parameter:
//!
//! * `cate`: `μ(1,X) − μ(0,X)`
//! * `imputation`: `T/e (μ̃(1) − μ(1)) − (1−T)/(1−e) (μ̃(0) − μ(0))`
//! * `residual`: `R·T/e · w₁ (Y − μ̃(1)) − R·(1−T)/(1−e) · w₀ (Y − μ̃(0))`
//!
//! with weights `w_t = λ / r_t`. Terms carrying `R` are skipped for unlabelled
//! units, so a missing outcome is never read.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nuisance values at one unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuisanceValues<F> {
    pub e: F,
    /// `r(1, X, S)` (or `r(1, X)`, or `r̂_N`, depending on the score).
    pub r1: F,
    pub r0: F,
    pub mu_tilde1: F,
    pub mu_tilde0: F,
    pub mu1: F,
    pub mu0: F,
    /// Density ratio `λ(X)`; 1 for the inverse-propensity scores.
    pub lambda: F,
    /// Arm-free surrogate regression `μ̃(X, S)` when available.
    pub mu_tilde_pooled: Option<F>,
}

impl<F: Scalar> NuisanceValues<F> {
    /// Values with `λ = 1` and no pooled regression.
    pub fn new(e: F, r1: F, r0: F, mu_tilde1: F, mu_tilde0: F, mu1: F, mu0: F) -> Self {
        NuisanceValues {
            e,
            r1,
            r0,
            mu_tilde1,
            mu_tilde0,
            mu1,
            mu0,
            lambda: F::one(),
            mu_tilde_pooled: None,
        }
    }
}

/// Treatment and (possibly missing) outcome of one unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit<F> {
    pub t: bool,
    pub y: Option<F>,
}

/// The three additive parts of a δ-free score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParts<F> {
    pub cate: F,
    pub imputation: F,
    pub residual: F,
}

impl<F: Scalar> ScoreParts<F> {
    #[inline]
    pub fn total(&self) -> F {
        self.cate + self.imputation + self.residual
    }

    /// First non-finite part, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        if !self.cate.is_finite() {
            Some("cate")
        } else if !self.imputation.is_finite() {
            Some("imputation")
        } else if !self.residual.is_finite() {
            Some("residual")
        } else {
            None
        }
    }
}

/// The shared kernel: all estimators and bound oracles go through here.
#[inline]
pub fn score_parts<F: Scalar>(unit: Unit<F>, nu: &NuisanceValues<F>) -> ScoreParts<F> {
    let cate = nu.mu1 - nu.mu0;
    let (imputation, residual) = if unit.t {
        let inv = F::one() / nu.e;
        let imp = inv * (nu.mu_tilde1 - nu.mu1);
        let res = match unit.y {
            Some(y) => inv * ((nu.lambda / nu.r1) * (y - nu.mu_tilde1)),
            None => F::zero(),
        };
        (imp, res)
    } else {
        let inv = F::one() / (F::one() - nu.e);
        let imp = -(inv * (nu.mu_tilde0 - nu.mu0));
        let res = match unit.y {
            Some(y) => -(inv * ((nu.lambda / nu.r0) * (y - nu.mu_tilde0))),
            None => F::zero(),
        };
        (imp, res)
    };
    ScoreParts {
        cate,
        imputation,
        residual,
    }
}

/// Which influence function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceKind {
    /// Efficient influence function with `r(t, X, S)`.
    PsiGeneral,
    /// Labels only, no surrogates: `μ̃` replaced by `μ`, `r(t, X)`.
    PsiSettingI,
    /// Surrogates observed but not used; identical to setting I.
    PsiSettingII,
    /// Surrogates used, labelling depends on `(t, X)` only.
    PsiSettingIII,
    /// Fully labelled data (AIPW).
    PsiSettingIV,
    /// Labelled-data score with density ratio; requires `R = 1`.
    PsiTildeLabelled,
    /// Efficient score with the arm-free regression `μ̃(X, S)`.
    PsiPooledSurrogate,
}

impl InfluenceKind {
    /// Nuisances consumed, as labels from `{e, r, mu_tilde, mu, lambda, mu_tilde_pooled}`.
    pub fn consumes(self) -> &'static [&'static str] {
        match self {
            InfluenceKind::PsiGeneral | InfluenceKind::PsiSettingIII => &["e", "r", "mu_tilde", "mu"],
            InfluenceKind::PsiSettingI | InfluenceKind::PsiSettingII => &["e", "r", "mu"],
            InfluenceKind::PsiSettingIV => &["e", "mu"],
            InfluenceKind::PsiTildeLabelled => &["e", "lambda", "mu_tilde"],
            InfluenceKind::PsiPooledSurrogate => &["e", "r", "mu_tilde_pooled", "mu"],
        }
    }
}

/// Efficient influence function `ψ(W; δ, η)`; `λ` is ignored (taken as 1).
pub fn eval_psi_general<F: Scalar>(unit: Unit<F>, delta: F, nu: &NuisanceValues<F>) -> F {
    let nu = NuisanceValues {
        lambda: F::one(),
        ..*nu
    };
    score_parts(unit, &nu).total() - delta
}

/// δ-free parts of the requested score (not defined for [`InfluenceKind::PsiTildeLabelled`]).
pub fn setting_parts<F: Scalar>(
    kind: InfluenceKind,
    unit: Unit<F>,
    nu: &NuisanceValues<F>,
) -> Result<ScoreParts<F>> {
    let base = NuisanceValues {
        lambda: F::one(),
        ..*nu
    };
    let nu = match kind {
        InfluenceKind::PsiGeneral | InfluenceKind::PsiSettingIII => base,
        InfluenceKind::PsiSettingI | InfluenceKind::PsiSettingII => NuisanceValues {
            mu_tilde1: nu.mu1,
            mu_tilde0: nu.mu0,
            ..base
        },
        InfluenceKind::PsiSettingIV => {
            if unit.y.is_none() {
                return Err(Error::Requirement(
                    "the full-data score needs every outcome".into(),
                ));
            }
            NuisanceValues {
                mu_tilde1: nu.mu1,
                mu_tilde0: nu.mu0,
                r1: F::one(),
                r0: F::one(),
                ..base
            }
        }
        InfluenceKind::PsiPooledSurrogate => {
            let pooled = nu.mu_tilde_pooled.ok_or_else(|| {
                Error::Requirement("pooled score needs the arm-free surrogate regression".into())
            })?;
            NuisanceValues {
                mu_tilde1: pooled,
                mu_tilde0: pooled,
                ..base
            }
        }
        InfluenceKind::PsiTildeLabelled => {
            return Err(Error::Requirement(
                "the labelled-data score has no δ-free decomposition; use eval_psi_tilde".into(),
            ))
        }
    };
    Ok(score_parts(unit, &nu))
}

/// `ψ_kind(W; δ, η)` for the scores of the four information settings and
/// the pooled score. [`InfluenceKind::PsiTildeLabelled`] dispatches to
/// [`eval_psi_tilde`].
pub fn eval_psi_setting<F: Scalar>(
    kind: InfluenceKind,
    unit: Unit<F>,
    delta: F,
    nu: &NuisanceValues<F>,
) -> Result<F> {
    if kind == InfluenceKind::PsiTildeLabelled {
        return eval_psi_tilde(unit, nu);
    }
    Ok(setting_parts(kind, unit, nu)?.total() - delta)
}

/// `ψ̃ = Tλ/e (Y − μ̃(1)) − (1−T)λ/(1−e) (Y − μ̃(0))`, defined on labelled units.
pub fn eval_psi_tilde<F: Scalar>(unit: Unit<F>, nu: &NuisanceValues<F>) -> Result<F> {
    let y = unit.y.ok_or(Error::UnlabelledTilde)?;
    Ok(if unit.t {
        nu.lambda / nu.e * (y - nu.mu_tilde1)
    } else {
        -(nu.lambda / (F::one() - nu.e) * (y - nu.mu_tilde0))
    })
}
