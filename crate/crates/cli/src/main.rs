use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use surrogate_ate::bounds::{compute_bounds, BoundId, BoundRequest};
use surrogate_ate::data::{load_dataset, save_dataset};
use surrogate_ate::dgp::{generate, DgpSpec, Truth};
use surrogate_ate::estimators::{estimate, EstimatorConfig};
use surrogate_ate::harness::{
    misspecification_matrix, regime_sweep, run_scenario, write_mc_csv, zb_comparison, MisspecCell,
    ScenarioConfig,
};
use surrogate_ate::Error;

#[derive(Parser)]
#[command(name = "surrogate-ate", version, about = "Surrogate-assisted ATE estimation and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a design (config: design JSON).
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        /// Output path, `.csv` or `.jsonl`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the effect on a dataset (config: estimator JSON).
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Design JSON, needed by oracle learners and the oracle estimator.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Efficiency bounds of a design (config: design JSON).
    Bounds {
        #[command(flatten)]
        common: Common,
        /// `all` or a comma-separated list of bound names.
        #[arg(long, default_value = "all")]
        which: String,
        #[arg(long, default_value_t = 1_000_000)]
        mc: usize,
        /// Sample size fixing the vanishing labelling rate.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated simulation (config: scenario JSON).
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Misspecification grid for the efficient estimator (config: scenario JSON).
    DrMatrix {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Sample-size sweep for the density-ratio estimator (config: scenario JSON).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "2000,8000,32000")]
        n_grid: Vec<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Comparison with the unlabelled-imputation estimator (config: scenario JSON).
    Zb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn scenario(common: &Common) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_json(&read(&common.config)?)?;
    cfg.seed = common.seed;
    Ok(cfg)
}

fn prepare_dir(dir: &Option<PathBuf>) -> anyhow::Result<()> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    Ok(())
}

fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MatrixCsvRow<'a> {
    cell: &'a str,
    guaranteed: bool,
    successes: usize,
    failures: usize,
    mean_bias: f64,
    se_bias: f64,
    bias_over_se: f64,
    empirical_variance_scaled: f64,
    coverage: f64,
}

#[derive(Serialize)]
struct SweepCsvRow {
    n: usize,
    label_rate: f64,
    v_tilde: f64,
    v_tilde_star: f64,
    scaled_variance: f64,
    ratio_to_v_tilde: f64,
    ratio_to_v_tilde_star: f64,
    equivalence_median: Option<f64>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen { common, n, out } => {
            let spec = DgpSpec::from_json(&read(&common.config)?)?;
            let ds = generate(&spec, n, common.seed)?;
            save_dataset(&ds, &out)?;
        }
        Command::Estimate { common, data, spec, out } => {
            let mut cfg: EstimatorConfig = serde_json::from_str(&read(&common.config)?)?;
            let ds = load_dataset(&data)?;
            if let Some(p) = spec {
                let spec = DgpSpec::from_json(&read(&p)?)?;
                cfg.plan.truth = Some(Arc::new(Truth::at_sample_size(&spec, ds.len())?));
            }
            let report = estimate(&ds, &cfg, common.seed)?;
            emit(&report, out.as_deref())?;
        }
        Command::Bounds { common, which, mc, n, out } => {
            let spec = DgpSpec::from_json(&read(&common.config)?)?;
            let req = BoundRequest {
                spec,
                which: BoundId::parse_list(&which)?,
                mc_budget: mc,
                seed: common.seed,
                sample_size: n,
            };
            let set = compute_bounds(&req)?;
            let entries: serde_json::Map<String, serde_json::Value> = set
                .entries()
                .into_iter()
                .map(|(k, v)| Ok((k.to_string(), serde_json::to_value(v)?)))
                .collect::<anyhow::Result<_>>()?;
            let body = serde_json::json!({
                "label_rate": set.label_rate,
                "mc_budget": mc,
                "seed": common.seed,
                "bounds": entries,
            });
            emit(&body, out.as_deref())?;
        }
        Command::Mc { common, out_dir } => {
            let mut cfg = scenario(&common)?;
            prepare_dir(&out_dir)?;
            if let Some(d) = &out_dir {
                cfg.output.report_json = Some(d.join("report.json"));
                cfg.output.mc_csv = Some(d.join("mc.csv"));
            }
            let report = run_scenario(&cfg)?;
            if out_dir.is_none() {
                emit(&report, None)?;
            }
        }
        Command::DrMatrix { common, out_dir } => {
            let cfg = scenario(&common)?;
            prepare_dir(&out_dir)?;
            let (rows, report) = misspecification_matrix(&cfg, &MisspecCell::standard_grid())?;
            match &out_dir {
                Some(d) => {
                    emit(&rows, Some(&d.join("matrix.json")))?;
                    write_mc_csv(&d.join("mc.csv"), &report.rows)?;
                    let table: Vec<MatrixCsvRow> = rows
                        .iter()
                        .map(|r| MatrixCsvRow {
                            cell: &r.cell.name,
                            guaranteed: r.guaranteed,
                            successes: r.metrics.successes,
                            failures: r.metrics.failures,
                            mean_bias: r.metrics.mean_bias,
                            se_bias: r.metrics.se_bias,
                            bias_over_se: r.metrics.mean_bias / r.metrics.se_bias,
                            empirical_variance_scaled: r.metrics.empirical_variance_scaled,
                            coverage: r.metrics.coverage,
                        })
                        .collect();
                    write_table(&d.join("matrix.csv"), &table)?;
                }
                None => emit(&rows, None)?,
            }
        }
        Command::Sweep { common, n_grid, out_dir } => {
            let cfg = scenario(&common)?;
            prepare_dir(&out_dir)?;
            let rows = regime_sweep(&cfg, &n_grid)?;
            match &out_dir {
                Some(d) => {
                    emit(&rows, Some(&d.join("sweep.json")))?;
                    let table: Vec<SweepCsvRow> = rows
                        .iter()
                        .map(|r| SweepCsvRow {
                            n: r.n,
                            label_rate: r.label_rate,
                            v_tilde: r.v_tilde,
                            v_tilde_star: r.v_tilde_star,
                            scaled_variance: r.density_ratio.empirical_variance_scaled,
                            ratio_to_v_tilde: r.ratio_to_v_tilde,
                            ratio_to_v_tilde_star: r.ratio_to_v_tilde_star,
                            equivalence_median: r.equivalence_median,
                        })
                        .collect();
                    write_table(&d.join("sweep.csv"), &table)?;
                }
                None => emit(&rows, None)?,
            }
        }
        Command::Zb { common, out_dir } => {
            let cfg = scenario(&common)?;
            prepare_dir(&out_dir)?;
            let (zb, report) = zb_comparison(&cfg)?;
            match &out_dir {
                Some(d) => {
                    emit(&zb, Some(&d.join("zb.json")))?;
                    write_mc_csv(&d.join("mc.csv"), &report.rows)?;
                }
                None => emit(&zb, None)?,
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::TooManyFailures { .. }) => 3,
        Some(
            Error::InvalidInput(_)
            | Error::InvalidSpec(_)
            | Error::Requirement(_)
            | Error::InsufficientBudget { .. }
            | Error::Parse { .. }
            | Error::Json(_),
        ) => 2,
        Some(_) => 1,
        None if err.downcast_ref::<serde_json::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
