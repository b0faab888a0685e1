//! K-fold cross-fitting.
//!
//! For fold `k`, treatment and labelling models (and the density ratio) are
//! trained on every unit outside the fold; outcome regressions on the
//! labelled units outside the fold. A unit is only ever evaluated under the
//! fits of its own fold.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FoldAssignment};
use crate::dgp::Truth;
use crate::error::{Error, Result};
use crate::influence::NuisanceValues;
use crate::nuisance::{
    fit_binary_propensity, fit_density_ratio, fit_regression, label_features, label_row,
    x_features, x_row, xs_features, xs_row, Clipped, LabelFeatures, LearnerSpec,
    OraclePredictor, OracleRole, Predictor,
};

/// Which nuisances a plan must fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Required {
    pub e: bool,
    pub r: bool,
    pub mu_tilde: bool,
    pub mu: bool,
    pub lambda: bool,
}

/// Learner per nuisance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSet {
    pub e: LearnerSpec,
    pub r: LearnerSpec,
    pub mu_tilde: LearnerSpec,
    pub mu: LearnerSpec,
    pub lambda: LearnerSpec,
}

impl LearnerSet {
    /// Logistic IRLS for the propensities and density ratio, OLS for regressions.
    pub fn parametric() -> Self {
        LearnerSet {
            e: LearnerSpec::logistic(),
            r: LearnerSpec::logistic(),
            mu_tilde: LearnerSpec::ols(),
            mu: LearnerSpec::ols(),
            lambda: LearnerSpec::logistic(),
        }
    }

    pub fn boosted() -> Self {
        LearnerSet {
            e: LearnerSpec::boosted(),
            r: LearnerSpec::boosted(),
            mu_tilde: LearnerSpec::boosted(),
            mu: LearnerSpec::boosted(),
            lambda: LearnerSpec::boosted(),
        }
    }

    pub fn oracle() -> Self {
        LearnerSet {
            e: LearnerSpec::Oracle,
            r: LearnerSpec::Oracle,
            mu_tilde: LearnerSpec::Oracle,
            mu: LearnerSpec::Oracle,
            lambda: LearnerSpec::Oracle,
        }
    }
}

impl Default for LearnerSet {
    fn default() -> Self {
        Self::parametric()
    }
}

/// Everything needed to cross-fit one estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossFitPlan {
    pub k: usize,
    pub learners: LearnerSet,
    pub required: Required,
    pub clip_eps: f64,
    pub c_lambda: f64,
    pub label_features: LabelFeatures,
    /// Fit one arm-free `μ̃(x, s)` instead of one model per arm.
    pub pooled_mu_tilde: bool,
    /// Truth used by [`LearnerSpec::Oracle`] learners.
    #[serde(skip)]
    pub truth: Option<Arc<Truth>>,
}

impl Default for CrossFitPlan {
    fn default() -> Self {
        CrossFitPlan {
            k: 5,
            learners: LearnerSet::default(),
            required: Required {
                e: true,
                r: true,
                mu_tilde: true,
                mu: true,
                lambda: false,
            },
            clip_eps: 0.01,
            c_lambda: 50.0,
            label_features: LabelFeatures::TreatmentCovariatesSurrogates,
            pooled_mu_tilde: false,
            truth: None,
        }
    }
}

impl CrossFitPlan {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidInput(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(Error::InvalidInput("clip_eps must lie in (0, 0.5)".into()));
        }
        if !(self.c_lambda > 0.0 && self.c_lambda.is_finite()) {
            return Err(Error::InvalidInput("c_lambda must be positive and finite".into()));
        }
        let req = self.required;
        let l = &self.learners;
        for (needed, spec) in [
            (req.e, &l.e),
            (req.r, &l.r),
            (req.mu_tilde, &l.mu_tilde),
            (req.mu, &l.mu),
            (req.lambda, &l.lambda),
        ] {
            if needed {
                spec.validate()?;
                if spec.is_oracle() && self.truth.is_none() {
                    return Err(Error::InvalidInput(
                        "oracle learner requested but no truth is attached to the plan".into(),
                    ));
                }
                if spec.is_oracle() && !matches!(spec, LearnerSpec::Oracle) {
                    return Err(Error::InvalidInput(
                        "oracle learners cannot be wrapped".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

type Model = Arc<dyn Predictor>;

/// Fits of one fold.
#[derive(Debug, Clone)]
pub struct FoldFit {
    pub fold: usize,
    /// All units outside the fold (propensity / density-ratio training set).
    pub train: Vec<usize>,
    /// Labelled units outside the fold (outcome-regression training set).
    pub train_labelled: Vec<usize>,
    pub e: Option<Model>,
    pub r: Option<Model>,
    /// Indexed by arm.
    pub mu_tilde: Option<[Model; 2]>,
    pub mu: Option<[Model; 2]>,
    pub lambda: Option<Model>,
}

/// Per-fold nuisance fits for one dataset.
#[derive(Debug, Clone)]
pub struct NuisanceFits {
    pub folds: FoldAssignment,
    pub per_fold: Vec<FoldFit>,
    pub clip_eps: f64,
    pub c_lambda: f64,
    pub label_features: LabelFeatures,
    pub pooled_mu_tilde: bool,
}

fn oracle(truth: &Option<Arc<Truth>>, role: OracleRole) -> Model {
    Arc::new(OraclePredictor {
        truth: truth.clone().expect("validated plan has a truth"),
        role,
    })
}

fn fit_fold(ds: &Dataset, plan: &CrossFitPlan, folds: &FoldAssignment, fold: usize) -> Result<FoldFit> {
    let train = folds.complement(fold);
    let train_labelled: Vec<usize> = train.iter().copied().filter(|&i| ds.r(i)).collect();
    let l = &plan.learners;
    let req = plan.required;
    let eps = plan.clip_eps;

    let e = if req.e {
        Some(match &l.e {
            LearnerSpec::Oracle => Arc::new(Clipped {
                inner: Box::new(OraclePredictor {
                    truth: plan.truth.clone().unwrap(),
                    role: OracleRole::Treatment,
                }),
                lo: eps,
                hi: 1.0 - eps,
            }) as Model,
            spec => {
                let labels: Vec<bool> = train.iter().map(|&i| ds.t(i)).collect();
                fit_binary_propensity(&x_features(ds, &train), &labels, spec, eps, 1.0 - eps)?.into()
            }
        })
    } else {
        None
    };

    let r = if req.r {
        Some(match &l.r {
            LearnerSpec::Oracle => {
                let role = match plan.label_features {
                    LabelFeatures::TreatmentCovariatesSurrogates => OracleRole::Label,
                    LabelFeatures::TreatmentCovariates => OracleRole::LabelWithoutSurrogate,
                };
                Arc::new(Clipped {
                    inner: Box::new(OraclePredictor {
                        truth: plan.truth.clone().unwrap(),
                        role,
                    }),
                    lo: eps,
                    hi: 1.0,
                }) as Model
            }
            spec => {
                let labels: Vec<bool> = train.iter().map(|&i| ds.r(i)).collect();
                let f = label_features(ds, &train, plan.label_features);
                fit_binary_propensity(&f, &labels, spec, eps, 1.0)?.into()
            }
        })
    } else {
        None
    };

    let mut arms: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for &i in &train_labelled {
        arms[ds.t(i) as usize].push(i);
    }
    if (req.mu || req.mu_tilde) && train_labelled.is_empty() {
        return Err(Error::NoLabelled);
    }
    let check_arms = || -> Result<()> {
        for (arm, idx) in arms.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::MissingArm { arm: arm as u8 });
            }
        }
        Ok(())
    };
    let targets = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| ds.y(i).expect("labelled")).collect() };

    let mu_tilde = if req.mu_tilde {
        Some(match (&l.mu_tilde, plan.pooled_mu_tilde) {
            (LearnerSpec::Oracle, false) => [
                oracle(&plan.truth, OracleRole::MuTilde(false)),
                oracle(&plan.truth, OracleRole::MuTilde(true)),
            ],
            (LearnerSpec::Oracle, true) => {
                let m = oracle(&plan.truth, OracleRole::MuTildePooled);
                [m.clone(), m]
            }
            (spec, true) => {
                let m: Model = fit_regression(&xs_features(ds, &train_labelled), &targets(&train_labelled), spec)?.into();
                [m.clone(), m]
            }
            (spec, false) => {
                check_arms()?;
                let m0: Model = fit_regression(&xs_features(ds, &arms[0]), &targets(&arms[0]), spec)?.into();
                let m1: Model = fit_regression(&xs_features(ds, &arms[1]), &targets(&arms[1]), spec)?.into();
                [m0, m1]
            }
        })
    } else {
        None
    };

    let mu = if req.mu {
        Some(match &l.mu {
            LearnerSpec::Oracle => [
                oracle(&plan.truth, OracleRole::Mu(false)),
                oracle(&plan.truth, OracleRole::Mu(true)),
            ],
            spec => {
                check_arms()?;
                let m0: Model = fit_regression(&x_features(ds, &arms[0]), &targets(&arms[0]), spec)?.into();
                let m1: Model = fit_regression(&x_features(ds, &arms[1]), &targets(&arms[1]), spec)?.into();
                [m0, m1]
            }
        })
    } else {
        None
    };

    let lambda = if req.lambda {
        Some(match &l.lambda {
            LearnerSpec::Oracle => Arc::new(Clipped {
                inner: Box::new(OraclePredictor {
                    truth: plan.truth.clone().unwrap(),
                    role: OracleRole::Lambda,
                }),
                lo: 0.0,
                hi: plan.c_lambda,
            }) as Model,
            spec => Arc::new(fit_density_ratio(ds, &train, spec, plan.c_lambda)?) as Model,
        })
    } else {
        None
    };

    Ok(FoldFit {
        fold,
        train,
        train_labelled,
        e,
        r,
        mu_tilde,
        mu,
        lambda,
    })
}

/// Fits every required nuisance on each fold's complement.
pub fn cross_fit(ds: &Dataset, plan: &CrossFitPlan, folds: &FoldAssignment) -> Result<NuisanceFits> {
    plan.validate()?;
    if folds.k != plan.k {
        return Err(Error::InvalidInput(format!(
            "fold assignment has k = {} but the plan asks for {}",
            folds.k, plan.k
        )));
    }
    if folds.len() != ds.len() {
        return Err(Error::InvalidInput("fold assignment does not match the dataset".into()));
    }
    let per_fold: Vec<FoldFit> = (0..plan.k)
        .into_par_iter()
        .map(|k| fit_fold(ds, plan, folds, k).map_err(|e| e.in_fold(k)))
        .collect::<Result<_>>()?;
    Ok(NuisanceFits {
        folds: folds.clone(),
        per_fold,
        clip_eps: plan.clip_eps,
        c_lambda: plan.c_lambda,
        label_features: plan.label_features,
        pooled_mu_tilde: plan.pooled_mu_tilde,
    })
}

impl NuisanceFits {
    pub fn fold_of(&self, i: usize) -> usize {
        self.folds.fold_of[i]
    }

    /// The fits that may be used for unit `i`.
    pub fn fit_for(&self, i: usize) -> &FoldFit {
        &self.per_fold[self.fold_of(i)]
    }

    /// Out-of-fold nuisance values at unit `i`. Nuisances that were not fitted
    /// are reported as `NaN`; `λ` defaults to 1.
    pub fn eval(&self, ds: &Dataset, i: usize) -> NuisanceValues<f64> {
        let fit = self.fit_for(i);
        let mut buf = Vec::with_capacity(1 + ds.d_x() + ds.d_s());
        let nan = f64::NAN;
        x_row(ds, i, &mut buf);
        let e = fit.e.as_ref().map_or(nan, |m| m.predict(&buf));
        let lambda = fit.lambda.as_ref().map_or(1.0, |m| m.predict(&buf));
        let (mu0, mu1) = fit
            .mu
            .as_ref()
            .map_or((nan, nan), |m| (m[0].predict(&buf), m[1].predict(&buf)));
        let (r0, r1) = match &fit.r {
            Some(m) => {
                label_row(ds, i, false, self.label_features, &mut buf);
                let r0 = m.predict(&buf);
                label_row(ds, i, true, self.label_features, &mut buf);
                (r0, m.predict(&buf))
            }
            None => (nan, nan),
        };
        xs_row(ds, i, &mut buf);
        let (mt0, mt1) = fit
            .mu_tilde
            .as_ref()
            .map_or((nan, nan), |m| (m[0].predict(&buf), m[1].predict(&buf)));
        NuisanceValues {
            e,
            r1,
            r0,
            mu_tilde1: mt1,
            mu_tilde0: mt0,
            mu1,
            mu0,
            lambda,
            mu_tilde_pooled: self.pooled_mu_tilde.then_some(mt1),
        }
    }

    /// Checks that no fold's training set touches its own evaluation set.
    pub fn assert_no_leakage(&self) -> Result<()> {
        for fit in &self.per_fold {
            if fit.train.iter().any(|&i| self.folds.fold_of[i] == fit.fold)
                || fit.train_labelled.iter().any(|&i| self.folds.fold_of[i] == fit.fold)
            {
                return Err(Error::InvalidInput(format!("fold {} trained on its own units", fit.fold)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_folds;
    use crate::dgp::{generate, DgpSpec};

    #[test]
    fn oracle_fits_reproduce_truth() {
        let spec = DgpSpec::lg1();
        let truth = Arc::new(Truth::new(&spec).unwrap());
        let ds = generate(&spec, 400, 1).unwrap();
        let folds = make_folds(&ds, 2, 3).unwrap();
        let plan = CrossFitPlan {
            k: 2,
            learners: LearnerSet::oracle(),
            truth: Some(truth.clone()),
            required: Required { e: true, r: true, mu_tilde: true, mu: true, lambda: true },
            ..CrossFitPlan::default()
        };
        let fits = cross_fit(&ds, &plan, &folds).unwrap();
        for i in 0..ds.len() {
            let u = ds.unit(i);
            let v = fits.eval(&ds, i);
            assert_eq!(v.e, truth.e(u.x));
            assert_eq!(v.r1, truth.r(true, u.x, u.s));
            assert_eq!(v.r0, truth.r(false, u.x, u.s));
            assert_eq!(v.mu_tilde1, truth.mu_tilde(true, u.x, u.s));
            assert_eq!(v.mu0, truth.mu(false, u.x));
            assert_eq!(v.lambda, truth.lambda(u.x));
        }
    }

    #[test]
    fn oracle_without_truth_is_rejected() {
        let plan = CrossFitPlan {
            learners: LearnerSet::oracle(),
            ..CrossFitPlan::default()
        };
        assert!(plan.validate().is_err());
    }

    #[test]
    fn training_sets_exclude_own_fold() {
        let spec = DgpSpec::lg1();
        let ds = generate(&spec, 600, 2).unwrap();
        let folds = make_folds(&ds, 5, 4).unwrap();
        let fits = cross_fit(&ds, &CrossFitPlan::default(), &folds).unwrap();
        fits.assert_no_leakage().unwrap();
        for i in [0, 17, 301] {
            let fit = fits.fit_for(i);
            assert!(!fit.train.contains(&i));
            assert_eq!(fit.fold, folds.fold_of[i]);
            assert!(fit.train_labelled.iter().all(|&j| ds.r(j)));
        }
    }

    #[test]
    fn per_fold_regressions_are_stable() {
        let spec = DgpSpec::lg1();
        let ds = generate(&spec, 10_000, 5).unwrap();
        let folds = make_folds(&ds, 5, 6).unwrap();
        let fits = cross_fit(&ds, &CrossFitPlan::default(), &folds).unwrap();
        let grid = [[-0.5, 0.0], [0.0, 1.0], [0.5, 2.5]];
        for z in grid {
            let vals: Vec<f64> = fits
                .per_fold
                .iter()
                .map(|f| f.mu_tilde.as_ref().unwrap()[1].predict(&z))
                .collect();
            let spread = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 0.2, "{vals:?}");
        }
        for fit in &fits.per_fold {
            let p = fit.mu_tilde.as_ref().unwrap()[1].params();
            let coef: Vec<f64> = serde_json::from_value(p["coef"].clone()).unwrap();
            for (got, want) in coef.iter().zip([1.0, 1.0, 0.5]) {
                assert!((got - want).abs() < 0.2, "{coef:?}");
            }
        }
    }

    #[test]
    fn errors_carry_fold_id() {
        let mut ds = Dataset::with_dims(1, 1).unwrap();
        for i in 0..20 {
            ds.push(&[i as f64 / 20.0], true, &[0.0], Some(1.0)).unwrap();
        }
        let folds = make_folds(&ds, 2, 0).unwrap();
        let err = cross_fit(&ds, &CrossFitPlan { k: 2, ..CrossFitPlan::default() }, &folds).unwrap_err();
        assert!(matches!(err, Error::Fold { .. }), "{err}");
    }
}
