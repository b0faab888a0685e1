//! Replicated simulation studies.
//!
//! A scenario draws `replications` datasets from a design, runs every
//! configured estimator on each and aggregates bias, scaled variance,
//! interval coverage and normality diagnostics next to the oracle bound the
//! estimator should attain. Replication `b` draws its data from
//! `child_seed(seed, b, DATA)` and its folds from `child_seed(seed, b, FOLDS)`,
//! shared by all estimators so that comparisons are paired.

mod studies;

pub use studies::{
    misspecification_matrix, regime_sweep, zb_comparison, MatrixRow, MisspecCell, SweepRow,
    ZbReport,
};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{compute_bounds, BoundId, BoundRequest, BoundSet};
use crate::crossfit::cross_fit;
use crate::data::{make_folds, EstimateReport, Scale};
use crate::dgp::{generate, DgpSpec, Truth};
use crate::error::{Error, Result};
use crate::estimators::{estimate, estimate_with_fits, EstimatorConfig, EstimatorKind};
use crate::seeding::{child_seed, stream};
use crate::stats::{binomial_acceptance_band, ks_standard_normal, mean, sample_variance};

/// Share of failed replications above which a scenario aborts.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

fn default_bound_budget() -> usize {
    100_000
}

fn default_id() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_id")]
    pub scenario_id: String,
    pub spec: DgpSpec,
    pub n: usize,
    pub replications: usize,
    pub estimators: Vec<EstimatorConfig>,
    pub seed: u64,
    /// Fit the union of all required nuisances once per replication and let
    /// every estimator read from the same fits.
    #[serde(default)]
    pub shared_fits: bool,
    /// Monte Carlo budget for the reference bounds; 0 skips them.
    #[serde(default = "default_bound_budget")]
    pub bound_mc_budget: usize,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ScenarioConfig {
    pub fn new(spec: DgpSpec, n: usize, replications: usize, estimators: Vec<EstimatorConfig>, seed: u64) -> Self {
        ScenarioConfig {
            scenario_id: default_id(),
            spec,
            n,
            replications,
            estimators,
            seed,
            shared_fits: false,
            bound_mc_budget: default_bound_budget(),
            output: OutputPaths::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<Truth> {
        if self.replications == 0 {
            return Err(Error::InvalidInput("replications must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidInput("no estimators configured".into()));
        }
        let truth = Truth::at_sample_size(&self.spec, self.n)?;
        for est in &self.estimators {
            if !(est.alpha > 0.0 && est.alpha < 1.0) {
                return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {}", est.alpha)));
            }
            match est.kind {
                EstimatorKind::FullDataAipw if truth.p_label < 1.0 => {
                    return Err(Error::Requirement(
                        "full-data AIPW needs a design that labels every unit".into(),
                    ))
                }
                EstimatorKind::ZhangBradic if truth.p_label >= 1.0 => {
                    return Err(Error::Requirement(
                        "the unlabelled-imputation estimator needs unlabelled units".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(truth)
    }
}

/// One replication of one estimator, as written to `mc.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub scenario_id: String,
    pub estimator: String,
    pub rep: usize,
    pub delta_hat: f64,
    pub variance_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub covered: bool,
    pub n: usize,
    pub n_l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub estimator: String,
    pub rep: usize,
    pub error: String,
}

/// Aggregates for one estimator over its successful replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMetrics {
    pub estimator: String,
    pub kind: EstimatorKind,
    pub scale: Scale,
    pub successes: usize,
    pub failures: usize,
    pub mean_bias: f64,
    /// Standard error of `mean_bias` across replications.
    pub se_bias: f64,
    /// Mean effective sample size (`N`, or `N_l` for the `√N_l` estimators).
    pub mean_n_eff: f64,
    /// `N̄_eff · Var(δ̂)` across replications.
    pub empirical_variance_scaled: f64,
    pub mean_variance_hat: f64,
    pub coverage: f64,
    /// Exact binomial 99% acceptance band around the nominal coverage.
    pub coverage_band: [f64; 2],
    pub mean_ci_length: f64,
    /// Kolmogorov–Smirnov p-value of `(δ̂ − δ*) / √(V̂ / N_eff)`.
    pub ks_p_studentized: f64,
    /// Kolmogorov–Smirnov p-value of `(δ̂ − δ*) / √(V_ref / N_eff)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_p_reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_bound: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_value: Option<f64>,
    /// `empirical_variance_scaled / reference_value`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: String,
    pub scenario_id: String,
    pub delta_star: f64,
    pub n: usize,
    pub replications: usize,
    pub estimators: Vec<EstimatorMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundSet>,
    pub failures: Vec<FailureRecord>,
    pub config: ScenarioConfig,
    #[serde(skip)]
    pub rows: Vec<ReplicationRow>,
}

impl MetricsReport {
    pub fn metrics(&self, label: &str) -> Option<&EstimatorMetrics> {
        self.estimators.iter().find(|m| m.estimator == label)
    }

    /// Successful rows of one estimator, in replication order.
    pub fn rows_for(&self, label: &str) -> Vec<&ReplicationRow> {
        self.rows.iter().filter(|r| r.estimator == label).collect()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub fn version_string() -> String {
    match option_env!("SURROGATE_ATE_GIT_DESCRIBE") {
        Some(v) => v.to_string(),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

/// Writes rows with the header
/// `scenario_id,estimator,rep,delta_hat,variance_hat,ci_lo,ci_hi,covered,n,n_l`.
pub fn write_mc_csv(path: &Path, rows: &[ReplicationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mc_csv(path: &Path) -> Result<Vec<ReplicationRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// The oracle bound an estimator's scaled variance should approach.
pub fn reference_bound(kind: EstimatorKind, bounds: &BoundSet) -> Option<(&'static str, f64)> {
    let pick = |name, b: Option<crate::bounds::BoundValue>| b.map(|b| (name, b.value));
    match kind {
        EstimatorKind::DmlGeneral | EstimatorKind::OraclePlugin => pick("v_star", bounds.v_star),
        EstimatorKind::DmlDensityRatio | EstimatorKind::DmlMcar => pick("v_tilde", bounds.v_tilde),
        EstimatorKind::NoSurrogateBaseline => pick("v_i", bounds.v_i),
        EstimatorKind::FullDataAipw => pick("v_iv", bounds.v_iv),
        EstimatorKind::ZhangBradic => pick("v_zb", bounds.v_zb),
    }
}

type RepOutcome = Vec<std::result::Result<EstimateReport, String>>;

fn run_replication(cfg: &ScenarioConfig, configs: &[EstimatorConfig], rep: usize) -> RepOutcome {
    let fail_all = |e: Error| configs.iter().map(|_| Err(e.to_string())).collect();
    let ds = match generate(&cfg.spec, cfg.n, child_seed(cfg.seed, rep as u64, stream::DATA)) {
        Ok(ds) => ds,
        Err(e) => return fail_all(e),
    };
    let fold_seed = child_seed(cfg.seed, rep as u64, stream::FOLDS);
    if cfg.shared_fits {
        let Some(first) = configs.iter().find(|c| c.kind != EstimatorKind::OraclePlugin) else {
            return configs.iter().map(|c| estimate(&ds, c, fold_seed).map_err(|e| e.to_string())).collect();
        };
        let mut plan = first.effective_plan();
        for c in configs.iter().filter(|c| c.kind != EstimatorKind::OraclePlugin) {
            let r = c.effective_plan().required;
            plan.required.e |= r.e;
            plan.required.r |= r.r;
            plan.required.mu_tilde |= r.mu_tilde;
            plan.required.mu |= r.mu;
            plan.required.lambda |= r.lambda;
        }
        let fits = make_folds(&ds, plan.k, fold_seed).and_then(|f| cross_fit(&ds, &plan, &f));
        let fits = match fits {
            Ok(f) => f,
            Err(e) => return fail_all(e),
        };
        configs
            .iter()
            .map(|c| {
                if c.kind == EstimatorKind::OraclePlugin {
                    estimate(&ds, c, fold_seed)
                } else {
                    estimate_with_fits(&ds, c, &fits)
                }
                .map_err(|e| e.to_string())
            })
            .collect()
    } else {
        configs
            .iter()
            .map(|c| estimate(&ds, c, fold_seed).map_err(|e| e.to_string()))
            .collect()
    }
}

fn check_shared_plans(configs: &[EstimatorConfig]) -> Result<()> {
    let plans: Vec<_> = configs
        .iter()
        .filter(|c| c.kind != EstimatorKind::OraclePlugin)
        .map(|c| c.effective_plan())
        .collect();
    for p in plans.iter().skip(1) {
        let q = &plans[0];
        if p.k != q.k
            || p.learners != q.learners
            || p.clip_eps != q.clip_eps
            || p.c_lambda != q.c_lambda
            || p.label_features != q.label_features
            || p.pooled_mu_tilde != q.pooled_mu_tilde
        {
            return Err(Error::InvalidInput(
                "shared fits need identical learners, folds, clipping and feature layouts".into(),
            ));
        }
    }
    Ok(())
}

/// Runs every replication and aggregates. Deterministic given the config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    let truth = Arc::new(cfg.validate()?);
    let configs: Vec<EstimatorConfig> = cfg
        .estimators
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.plan.truth = Some(truth.clone());
            c
        })
        .collect();
    for c in &configs {
        c.effective_plan().validate()?;
    }
    if cfg.shared_fits {
        check_shared_plans(&configs)?;
    }
    let labels: Vec<String> = configs.iter().map(|c| c.display_label()).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::InvalidInput(format!("estimator label `{l}` is used twice")));
        }
    }

    let outcomes: Vec<RepOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, &configs, rep))
        .collect();

    let bounds = if cfg.bound_mc_budget > 0 {
        Some(compute_bounds(&BoundRequest {
            spec: cfg.spec.clone(),
            which: BoundId::all(),
            mc_budget: cfg.bound_mc_budget,
            seed: child_seed(cfg.seed, u64::MAX, stream::TRUTH),
            sample_size: Some(cfg.n),
        })?)
    } else {
        None
    };

    let delta_star = truth.delta_star();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut metrics = Vec::new();
    for (j, c) in configs.iter().enumerate() {
        let mut reports = Vec::new();
        for (rep, out) in outcomes.iter().enumerate() {
            match &out[j] {
                Ok(r) => {
                    rows.push(ReplicationRow {
                        scenario_id: cfg.scenario_id.clone(),
                        estimator: labels[j].clone(),
                        rep,
                        delta_hat: r.delta_hat,
                        variance_hat: r.variance_hat,
                        ci_lo: r.ci[0],
                        ci_hi: r.ci[1],
                        covered: r.ci[0] <= delta_star && delta_star <= r.ci[1],
                        n: r.n,
                        n_l: r.n_l,
                    });
                    reports.push(r);
                }
                Err(e) => failures.push(FailureRecord {
                    estimator: labels[j].clone(),
                    rep,
                    error: e.clone(),
                }),
            }
        }
        let failed = cfg.replications - reports.len();
        if failed as f64 > MAX_FAILURE_SHARE * cfg.replications as f64 {
            let first_error = failures
                .iter()
                .find(|f| f.estimator == labels[j])
                .map(|f| f.error.clone())
                .unwrap_or_default();
            return Err(Error::TooManyFailures {
                estimator: labels[j].clone(),
                failed,
                total: cfg.replications,
                first_error,
            });
        }
        let reference = bounds.as_ref().and_then(|b| reference_bound(c.kind, b));
        metrics.push(aggregate(&labels[j], c, &reports, failed, delta_star, reference));
    }

    let report = MetricsReport {
        version: version_string(),
        scenario_id: cfg.scenario_id.clone(),
        delta_star,
        n: cfg.n,
        replications: cfg.replications,
        estimators: metrics,
        bounds,
        failures,
        config: cfg.clone(),
        rows,
    };
    if let Some(p) = &cfg.output.report_json {
        report.write_json(p)?;
    }
    if let Some(p) = &cfg.output.mc_csv {
        write_mc_csv(p, &report.rows)?;
    }
    Ok(report)
}

fn n_eff(r: &EstimateReport) -> f64 {
    match r.scale {
        Scale::SqrtN => r.n as f64,
        Scale::SqrtNl => r.n_l as f64,
    }
}

fn aggregate(
    label: &str,
    cfg: &EstimatorConfig,
    reports: &[&EstimateReport],
    failures: usize,
    delta_star: f64,
    reference: Option<(&'static str, f64)>,
) -> EstimatorMetrics {
    let k = reports.len();
    let deltas: Vec<f64> = reports.iter().map(|r| r.delta_hat).collect();
    let bias: Vec<f64> = deltas.iter().map(|d| d - delta_star).collect();
    let n_effs: Vec<f64> = reports.iter().map(|r| n_eff(r)).collect();
    let mean_n_eff = mean(&n_effs);
    let var = if k > 1 { sample_variance(&deltas) } else { f64::NAN };
    let covered: Vec<f64> = reports
        .iter()
        .map(|r| (r.ci[0] <= delta_star && delta_star <= r.ci[1]) as u8 as f64)
        .collect();
    let studentized: Vec<f64> = reports
        .iter()
        .zip(&n_effs)
        .map(|(r, ne)| (r.delta_hat - delta_star) / (r.variance_hat / ne).sqrt())
        .collect();
    let ks = |z: &[f64]| if z.is_empty() { f64::NAN } else { ks_standard_normal(z).1 };
    let ks_ref = reference.map(|(_, v)| {
        let z: Vec<f64> = bias.iter().zip(&n_effs).map(|(b, ne)| b / (v / ne).sqrt()).collect();
        ks(&z)
    });
    let empirical_variance_scaled = mean_n_eff * var;
    let band = if k > 0 {
        let (lo, hi) = binomial_acceptance_band(k, 1.0 - cfg.alpha, 0.99);
        [lo, hi]
    } else {
        [f64::NAN, f64::NAN]
    };
    EstimatorMetrics {
        estimator: label.to_string(),
        kind: cfg.kind,
        scale: cfg.kind.scale(),
        successes: k,
        failures,
        mean_bias: mean(&bias),
        se_bias: if k > 1 { (sample_variance(&bias) / k as f64).sqrt() } else { f64::NAN },
        mean_n_eff,
        empirical_variance_scaled,
        mean_variance_hat: mean(&reports.iter().map(|r| r.variance_hat).collect::<Vec<_>>()),
        coverage: mean(&covered),
        coverage_band: band,
        mean_ci_length: mean(&reports.iter().map(|r| r.ci[1] - r.ci[0]).collect::<Vec<_>>()),
        ks_p_studentized: ks(&studentized),
        ks_p_reference: ks_ref,
        reference_bound: reference.map(|(n, _)| n.to_string()),
        reference_value: reference.map(|(_, v)| v),
        variance_ratio: reference.map(|(_, v)| empirical_variance_scaled / v),
    }
}
