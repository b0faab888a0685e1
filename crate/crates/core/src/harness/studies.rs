//! Studies built on [`run_scenario`]: misspecification grids, label-rate
//! sweeps and the comparison with the unlabelled-imputation estimator.

use serde::{Deserialize, Serialize};

use super::{run_scenario, EstimatorMetrics, MetricsReport, ScenarioConfig};
use crate::crossfit::CrossFitPlan;
use crate::dgp::{Family, Truth};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind};
use crate::nuisance::LearnerSpec;
use crate::stats::{mean, sample_variance};

/// One cell of the misspecification grid; `true` means the nuisance is fitted
/// without the covariates `X`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisspecCell {
    pub name: String,
    pub mu_tilde: bool,
    pub r: bool,
    pub mu: bool,
    pub e: bool,
}

impl MisspecCell {
    pub fn new(name: &str, mu_tilde: bool, r: bool, mu: bool, e: bool) -> Self {
        MisspecCell {
            name: name.into(),
            mu_tilde,
            r,
            mu,
            e,
        }
    }

    /// Consistency is guaranteed when at most one of `(μ̃, r)` and at most one
    /// of `(μ, e)` is misspecified.
    pub fn guaranteed(&self) -> bool {
        !(self.mu_tilde && self.r) && !(self.mu && self.e)
    }

    pub fn all_correct() -> Self {
        Self::new("all_correct", false, false, false, false)
    }

    /// The four cells with one wrong nuisance in each pair.
    pub fn single_misspecified() -> Vec<Self> {
        vec![
            Self::new("mu_tilde_and_mu_wrong", true, false, true, false),
            Self::new("mu_tilde_and_e_wrong", true, false, false, true),
            Self::new("r_and_mu_wrong", false, true, true, false),
            Self::new("r_and_e_wrong", false, true, false, true),
        ]
    }

    pub fn both_mu_and_e_wrong() -> Self {
        Self::new("mu_and_e_wrong", false, false, true, true)
    }

    pub fn both_mu_tilde_and_r_wrong() -> Self {
        Self::new("mu_tilde_and_r_wrong", true, true, false, false)
    }

    pub fn standard_grid() -> Vec<Self> {
        let mut v = vec![Self::all_correct()];
        v.extend(Self::single_misspecified());
        v.push(Self::both_mu_tilde_and_r_wrong());
        v.push(Self::both_mu_and_e_wrong());
        v
    }

    fn apply(&self, plan: &mut CrossFitPlan, d_x: usize) {
        let l = &mut plan.learners;
        let xs: Vec<usize> = (0..d_x).collect();
        if self.e {
            l.e = l.e.clone().omitting(xs.clone());
        }
        if self.mu {
            l.mu = l.mu.clone().omitting(xs.clone());
        }
        if self.mu_tilde {
            // features are (x, s)
            l.mu_tilde = l.mu_tilde.clone().omitting(xs.clone());
        }
        if self.r {
            // features are (t, x, s)
            l.r = l.r.clone().omitting((1..1 + d_x).collect());
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRow {
    pub cell: MisspecCell,
    pub guaranteed: bool,
    pub metrics: EstimatorMetrics,
}

/// Runs the cross-fitted efficient estimator once per cell on shared data.
/// The first configured estimator supplies the learners.
pub fn misspecification_matrix(base: &ScenarioConfig, cells: &[MisspecCell]) -> Result<(Vec<MatrixRow>, MetricsReport)> {
    let template = base
        .estimators
        .first()
        .cloned()
        .unwrap_or_else(|| EstimatorConfig::new(EstimatorKind::DmlGeneral));
    if template.kind != EstimatorKind::DmlGeneral {
        return Err(Error::InvalidInput(
            "the misspecification grid runs the cross-fitted efficient estimator".into(),
        ));
    }
    if template.plan.learners.e.is_oracle() {
        return Err(Error::InvalidInput("the misspecification grid needs fitted learners".into()));
    }
    let mut cfg = base.clone();
    cfg.shared_fits = false;
    cfg.estimators = cells
        .iter()
        .map(|cell| {
            let mut c = template.clone().labelled(cell.name.clone());
            cell.apply(&mut c.plan, base.spec.d_x);
            c
        })
        .collect();
    let report = run_scenario(&cfg)?;
    let rows = cells
        .iter()
        .map(|cell| MatrixRow {
            cell: cell.clone(),
            guaranteed: cell.guaranteed(),
            metrics: report.metrics(&cell.name).cloned().expect("every cell ran"),
        })
        .collect();
    Ok((rows, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub label_rate: f64,
    pub v_tilde: f64,
    pub v_tilde_star: f64,
    pub density_ratio: EstimatorMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub general: Option<EstimatorMetrics>,
    /// `N̄_l · Var(δ̃) / Ṽ`.
    pub ratio_to_v_tilde: f64,
    /// `N̄_l · Var(δ̃) / Ṽ*`.
    pub ratio_to_v_tilde_star: f64,
    /// Median over replications of `√N_l |δ̂ − δ̃|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equivalence_median: Option<f64>,
}

/// Runs the density-ratio estimator (and the efficient estimator when the
/// labelling rate is fixed) at each sample size, on shared fits.
pub fn regime_sweep(base: &ScenarioConfig, n_grid: &[usize]) -> Result<Vec<SweepRow>> {
    let fixed_rate = match base.spec.family {
        Family::Mcar { .. } => true,
        Family::VanishingLabelRegime { .. } => false,
        _ => {
            return Err(Error::InvalidInput(
                "the sweep needs the completely-at-random or vanishing-label design".into(),
            ))
        }
    };
    let plan = base.estimators.first().map(|c| c.plan.clone()).unwrap_or_default();
    let dr = EstimatorConfig::new(EstimatorKind::DmlDensityRatio).with_plan(plan.clone());
    let mut estimators = vec![dr];
    if fixed_rate {
        estimators.push(EstimatorConfig::new(EstimatorKind::DmlGeneral).with_plan(plan));
    }
    let dr_label = EstimatorKind::DmlDensityRatio.name();
    let gen_label = EstimatorKind::DmlGeneral.name();
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let mut cfg = base.clone();
        cfg.n = n;
        cfg.estimators = estimators.clone();
        cfg.shared_fits = true;
        cfg.scenario_id = format!("{}_n{}", base.scenario_id, n);
        if cfg.bound_mc_budget == 0 {
            cfg.bound_mc_budget = crate::bounds::MIN_MC_BUDGET * 10;
        }
        let report = run_scenario(&cfg)?;
        let bounds = report.bounds.as_ref().expect("bounds requested");
        let v_tilde = bounds.v_tilde.map(|b| b.value).unwrap_or(f64::NAN);
        let v_tilde_star = bounds.v_tilde_star.map(|b| b.value).unwrap_or(f64::NAN);
        let density_ratio = report.metrics(dr_label).cloned().expect("ran");
        let general = report.metrics(gen_label).cloned();
        let equivalence_median = general.as_ref().map(|_| {
            let a = report.rows_for(dr_label);
            let b = report.rows_for(gen_label);
            let mut gaps: Vec<f64> = a
                .iter()
                .filter_map(|ra| {
                    b.iter()
                        .find(|rb| rb.rep == ra.rep)
                        .map(|rb| (ra.n_l as f64).sqrt() * (ra.delta_hat - rb.delta_hat).abs())
                })
                .collect();
            median(&mut gaps)
        });
        let label_rate = Truth::at_sample_size(&base.spec, n)?.p_label;
        rows.push(SweepRow {
            n,
            label_rate,
            v_tilde,
            v_tilde_star,
            ratio_to_v_tilde: density_ratio.empirical_variance_scaled / v_tilde,
            ratio_to_v_tilde_star: density_ratio.empirical_variance_scaled / v_tilde_star,
            density_ratio,
            general,
            equivalence_median,
        });
    }
    Ok(rows)
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZbReport {
    pub n: usize,
    pub label_rate: f64,
    pub replications: usize,
    /// `N · Var(δ̂_our)` across replications.
    pub var_our_scaled: f64,
    /// `N · Var(δ̂_ZB)` across replications.
    pub var_zb_scaled: f64,
    /// `N · (Var(δ̂_ZB) − Var(δ̂_our))` from paired replications.
    pub empirical_gap: f64,
    pub empirical_gap_se: f64,
    /// `p/(1−p) · E[(μ(1,X) − μ(0,X) − δ)²]`.
    pub closed_gap: f64,
    pub closed_gap_se: f64,
    /// Direct Monte Carlo of `V_ZB − V_our` with the true nuisances.
    pub oracle_mc_gap: f64,
    pub oracle_mc_gap_se: f64,
    /// `(empirical − closed) / √(se_emp² + se_closed²)`.
    pub z_empirical: f64,
}

/// Paired replications of the surrogate-free completely-at-random estimator
/// and the unlabelled-imputation estimator on identical data and folds.
pub fn zb_comparison(base: &ScenarioConfig) -> Result<(ZbReport, MetricsReport)> {
    let Family::Mcar { rate } = base.spec.family else {
        return Err(Error::InvalidInput("the comparison needs the completely-at-random design".into()));
    };
    let mut plan = base.estimators.first().map(|c| c.plan.clone()).unwrap_or_default();
    let d_x = base.spec.d_x;
    let d_s = base.spec.d_s;
    // μ̃ on (x, s) without the surrogate columns is the regression on x alone
    plan.learners.mu_tilde = match plan.learners.mu.clone() {
        LearnerSpec::Oracle => LearnerSpec::Oracle,
        mu => mu.omitting((d_x..d_x + d_s).collect()),
    };
    if plan.learners.mu.is_oracle() {
        return Err(Error::InvalidInput("the comparison needs fitted outcome regressions".into()));
    }
    let mut cfg = base.clone();
    cfg.shared_fits = false;
    cfg.estimators = vec![
        EstimatorConfig::new(EstimatorKind::DmlMcar).with_plan(plan.clone()).labelled("our"),
        EstimatorConfig::new(EstimatorKind::ZhangBradic).with_plan(plan).labelled("zb"),
    ];
    if cfg.bound_mc_budget == 0 {
        cfg.bound_mc_budget = crate::bounds::MIN_MC_BUDGET * 10;
    }
    let report = run_scenario(&cfg)?;
    let our = report.rows_for("our");
    let zb = report.rows_for("zb");
    let pairs: Vec<(f64, f64)> = our
        .iter()
        .filter_map(|a| zb.iter().find(|b| b.rep == a.rep).map(|b| (a.delta_hat, b.delta_hat)))
        .collect();
    let k = pairs.len();
    if k < 2 {
        return Err(Error::InvalidInput("the comparison needs at least two paired replications".into()));
    }
    let n = cfg.n as f64;
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (ma, mb) = (mean(&a), mean(&b));
    let kf = k as f64;
    let d: Vec<f64> = pairs
        .iter()
        .map(|(x, y)| ((y - mb).powi(2) - (x - ma).powi(2)) * kf / (kf - 1.0))
        .collect();
    let empirical_gap = n * mean(&d);
    let empirical_gap_se = n * (sample_variance(&d) / kf).sqrt();
    let bounds = report.bounds.as_ref().expect("bounds requested");
    let gap = bounds.v_zb_gap.expect("defined for the completely-at-random design");
    let closed = gap.closed_form.expect("closed form");
    let mc = gap.monte_carlo.expect("monte carlo");
    let out = ZbReport {
        n: cfg.n,
        label_rate: rate,
        replications: k,
        var_our_scaled: n * sample_variance(&a),
        var_zb_scaled: n * sample_variance(&b),
        empirical_gap,
        empirical_gap_se,
        closed_gap: closed.mean,
        closed_gap_se: closed.se,
        oracle_mc_gap: mc.value,
        oracle_mc_gap_se: mc.se,
        z_empirical: (empirical_gap - closed.mean) / (empirical_gap_se.powi(2) + closed.se.powi(2)).sqrt(),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::DgpSpec;

    #[test]
    fn guarantee_pattern() {
        assert!(MisspecCell::all_correct().guaranteed());
        assert!(MisspecCell::single_misspecified().iter().all(|c| c.guaranteed()));
        assert!(!MisspecCell::both_mu_and_e_wrong().guaranteed());
        assert!(!MisspecCell::both_mu_tilde_and_r_wrong().guaranteed());
    }

    #[test]
    fn cells_wrap_the_right_learners() {
        let mut plan = CrossFitPlan::default();
        MisspecCell::new("x", false, true, true, false).apply(&mut plan, 1);
        assert!(matches!(plan.learners.e, LearnerSpec::LogisticIrls { .. }));
        assert_eq!(plan.learners.r, LearnerSpec::logistic().omitting(vec![1]));
        assert_eq!(plan.learners.mu, LearnerSpec::ols().omitting(vec![0]));
    }

    #[test]
    fn small_grid_runs() {
        let mut base = ScenarioConfig::new(DgpSpec::lg1(), 500, 3, vec![], 1);
        base.bound_mc_budget = 0;
        let (rows, _) = misspecification_matrix(&base, &MisspecCell::standard_grid()).unwrap();
        assert_eq!(rows.len(), 7);
    }

    #[test]
    fn sweep_and_comparison_run() {
        let spec = DgpSpec::lg1().with_family(Family::Mcar { rate: 0.5 });
        let mut base = ScenarioConfig::new(spec, 400, 4, vec![], 2);
        base.bound_mc_budget = 20_000;
        let rows = regime_sweep(&base, &[400, 800]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].equivalence_median.is_some());
        let (zb, _) = zb_comparison(&base).unwrap();
        assert_eq!(zb.replications, 4);
        // homogeneous effects: the closed-form gap vanishes
        assert_eq!(zb.closed_gap, 0.0);
    }

    #[test]
    fn sweep_rejects_mar_designs() {
        let base = ScenarioConfig::new(DgpSpec::lg1(), 400, 2, vec![], 2);
        assert!(regime_sweep(&base, &[400]).is_err());
    }
}
