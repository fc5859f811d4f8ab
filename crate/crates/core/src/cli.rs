//! The `memsgd` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::compress::memory_norm_bound;
use crate::config::{parse_config, ExperimentConfig};
use crate::engine::{run, RunOutput};
use crate::error::{Error, Result};
use crate::metrics::{
    format_float, read_metrics_file, write_metrics_file, write_vector, MetricsRow,
};
use crate::stagewise::{stagewise_run, StagewiseOutput};

#[derive(Parser, Debug)]
#[command(
    name = "memsgd",
    version,
    about = "Memory-based distributed SGD simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; never changes results.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one experiment; writes metrics.csv and final_w.csv.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the stagewise driver; writes stages.csv and final_w.csv.
    Stagewise {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run several configs and summarize them side by side in compare.csv.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the log-log slope of a rate metric against T across metrics files.
    Ratefit {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Quantity regressed against T.
        #[arg(long, value_enum, default_value_t = RateMetric::Suboptimality)]
        metric: RateMetric,
        /// Optimal value F*, required for the suboptimality metric.
        #[arg(long)]
        f_star: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RateMetric {
    /// Mean of `F − F*` over the rows in the last half of the run.
    Suboptimality,
    /// Minimum of `‖∇F‖²` over the rows.
    GradSq,
}

/// Exit status for an error: 1 configuration or I/O, 2 non-finite values,
/// 3 invariant violation.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. } => 2,
        Error::Invariant(_) => 3,
        _ => 1,
    }
}

/// Parses arguments, executes, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Run { config, common } => {
            let (cfg, out) = load(config, common)?;
            let output = cmd_run(&cfg, &out)?;
            let s = &output.summary;
            println!(
                "T={} F={} grad_norm={} max_transform_rel={:.3e} max_memory_rel={:.3e} -> {}",
                s.iterations,
                output.rows.last().map_or(f64::NAN, |r| r.objective),
                output.rows.last().map_or(f64::NAN, |r| r.grad_norm),
                s.max_relative_transform_residual,
                s.max_relative_memory_residual,
                out.display()
            );
            Ok(())
        }
        Command::Stagewise { config, common } => {
            let (cfg, out) = load(config, common)?;
            let output = cmd_stagewise(&cfg, &out)?;
            println!(
                "S={} gamma={} final moreau_grad_sq={} -> {}",
                output.reports.len(),
                output.gamma,
                output.final_moreau_grad_sq,
                out.display()
            );
            Ok(())
        }
        Command::Compare { configs, common } => {
            let mut loaded = Vec::with_capacity(configs.len());
            for path in configs {
                loaded.push((path.clone(), load(path, common)?.0));
            }
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let rows = cmd_compare(&loaded, &out)?;
            for r in &rows {
                println!(
                    "{}: F={} identical={}",
                    r.label, r.final_objective, r.identical
                );
            }
            Ok(())
        }
        Command::Ratefit {
            files,
            metric,
            f_star,
            common,
        } => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let fit = cmd_ratefit(files, *metric, *f_star, &out)?;
            println!("slope = {} +/- {}", fit.slope, fit.std_error);
            Ok(())
        }
    }
}

fn load(path: &Path, common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    if let Some(threads) = common.threads {
        if threads < 1 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        cfg.override_threads(threads);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, out))
}

fn check_invariants(cfg: &ExperimentConfig, output: &RunOutput) -> Result<()> {
    let s = &output.summary;
    if cfg.check && (s.transform_violations > 0 || s.memory_violations > 0) {
        return Err(Error::Invariant(format!(
            "{} transform and {} memory-identity violations (max relative residuals {:.3e}, {:.3e})",
            s.transform_violations,
            s.memory_violations,
            s.max_relative_transform_residual,
            s.max_relative_memory_residual
        )));
    }
    Ok(())
}

/// Runs one experiment and writes `metrics.csv` and `final_w.csv` into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput> {
    let output = run(&cfg.run)?;
    fs::create_dir_all(out)?;
    write_metrics_file(&out.join("metrics.csv"), &output.rows)?;
    write_vector(
        &output.final_state.w,
        fs::File::create(out.join("final_w.csv"))?,
    )?;
    check_invariants(cfg, &output)?;
    Ok(output)
}

/// Runs the stagewise driver and writes `stages.csv` and `final_w.csv`.
pub fn cmd_stagewise(cfg: &ExperimentConfig, out: &Path) -> Result<StagewiseOutput> {
    let output = stagewise_run(&cfg.stagewise)?;
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("stages.csv"))?;
    w.write_record([
        "s",
        "T_s",
        "eta_s",
        "F_avg",
        "moreau_grad_sq",
        "weighted_avg",
    ])?;
    for r in &output.reports {
        w.write_record([
            r.s.to_string(),
            r.t_s.to_string(),
            format_float(r.eta_s),
            format_float(r.f_avg),
            format_float(r.moreau_grad_sq),
            format_float(r.weighted_avg),
        ])?;
    }
    w.flush()?;
    write_vector(
        &output.final_point,
        fs::File::create(out.join("final_w.csv"))?,
    )?;
    if cfg.check {
        let bad: u64 = output
            .reports
            .iter()
            .map(|r| r.run.memory_violations + r.run.transform_violations)
            .sum();
        if bad > 0 {
            return Err(Error::Invariant(format!(
                "{bad} identity violations across stages"
            )));
        }
    }
    Ok(output)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub final_objective: f64,
    pub final_grad_norm: f64,
    pub max_transform_residual: f64,
    pub max_mem_norm: f64,
    /// Memory-norm bound `√(2(d−q)(2d+q)G²/((1−β)²q²))`, when it applies.
    pub mem_norm_bound: Option<f64>,
    pub total_sent: u64,
    /// Trajectory and final iterate equal the first config's bit for bit.
    pub identical: bool,
}

/// Runs every config (concurrently) and writes `compare.csv`.
pub fn cmd_compare(configs: &[(PathBuf, ExperimentConfig)], out: &Path) -> Result<Vec<CompareRow>> {
    let first_d = configs.first().map(|(_, c)| c.run.problem.d);
    if let Some((path, _)) = configs
        .iter()
        .find(|(_, c)| Some(c.run.problem.d) != first_d)
    {
        return Err(Error::Config(format!(
            "{}: dimension differs from the first config (d = {})",
            path.display(),
            first_d.unwrap_or(0)
        )));
    }
    let outputs: Vec<RunOutput> = configs
        .par_iter()
        .map(|(_, c)| run(&c.run))
        .collect::<Result<Vec<_>>>()?;
    let reference = outputs.first();
    let mut rows = Vec::with_capacity(outputs.len());
    for ((path, cfg), output) in configs.iter().zip(&outputs) {
        let last: Option<&MetricsRow> = output.rows.last();
        let d = cfg.run.problem.d;
        let q = cfg.run.compressor.cardinality(d);
        let mem_norm_bound = match (output.problem.gradient_bound, cfg.run.variant) {
            (Some(g), crate::engine::Variant::Mdsgd) if g > 0.0 => {
                memory_norm_bound(d, q, g, cfg.run.beta).ok().map(f64::sqrt)
            }
            _ => None,
        };
        let identical = reference
            .is_some_and(|r| r.final_state.w == output.final_state.w && r.rows == output.rows);
        rows.push(CompareRow {
            label: path.display().to_string(),
            final_objective: last.map_or(f64::NAN, |r| r.objective),
            final_grad_norm: last.map_or(f64::NAN, |r| r.grad_norm),
            max_transform_residual: output
                .rows
                .iter()
                .map(|r| r.transform_residual)
                .fold(0.0, f64::max),
            max_mem_norm: output.summary.max_memory_norm_sq.sqrt(),
            mem_norm_bound,
            total_sent: output.summary.total_sent_coords,
            identical,
        });
    }
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("compare.csv"))?;
    w.write_record([
        "config",
        "final_F",
        "final_grad_norm",
        "max_transform_residual",
        "max_mem_norm",
        "mem_norm_bound",
        "total_sent",
        "identical",
    ])?;
    for r in &rows {
        w.write_record([
            r.label.clone(),
            format_float(r.final_objective),
            format_float(r.final_grad_norm),
            format_float(r.max_transform_residual),
            format_float(r.max_mem_norm),
            r.mem_norm_bound.map_or_else(String::new, format_float),
            r.total_sent.to_string(),
            r.identical.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub horizons: Vec<u64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub std_error: f64,
}

/// Ordinary least squares of `log(value)` on `log(T)`.
pub fn fit_log_log(horizons: &[u64], values: &[f64]) -> Result<RateFit> {
    if horizons.len() != values.len() || horizons.len() < 2 {
        return Err(Error::invalid(
            "rate fit needs at least two (T, value) pairs",
        ));
    }
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) || horizons.contains(&0) {
        return Err(Error::invalid(
            "rate fit needs positive T and positive finite values",
        ));
    }
    let x: Vec<f64> = horizons.iter().map(|&t| (t as f64).ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct T"));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let std_error = if x.len() > 2 {
        let sse: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        horizons: horizons.to_vec(),
        values: values.to_vec(),
        slope,
        intercept,
        std_error,
    })
}

/// Extracts the rate metric of one run from its metrics rows.
pub fn rate_metric(
    rows: &[MetricsRow],
    metric: RateMetric,
    f_star: Option<f64>,
) -> Result<(u64, f64)> {
    let horizon = rows
        .last()
        .map(|r| r.t)
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config("metrics file has no rows after t = 0".into()))?;
    let value = match metric {
        RateMetric::GradSq => rows
            .iter()
            .map(|r| r.grad_norm * r.grad_norm)
            .fold(f64::INFINITY, f64::min),
        RateMetric::Suboptimality => {
            let f_star = f_star
                .ok_or_else(|| Error::Config("--f-star is required for suboptimality".into()))?;
            let start = horizon - horizon.div_ceil(2);
            let tail: Vec<f64> = rows
                .iter()
                .filter(|r| r.t >= start)
                .map(|r| r.objective - f_star)
                .collect();
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    };
    Ok((horizon, value))
}

/// Reads each metrics file, fits the slope, and writes `ratefit.csv`.
pub fn cmd_ratefit(
    files: &[PathBuf],
    metric: RateMetric,
    f_star: Option<f64>,
    out: &Path,
) -> Result<RateFit> {
    let mut horizons = Vec::new();
    let mut values = Vec::new();
    for path in files {
        let rows = read_metrics_file(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let (t, v) = rate_metric(&rows, metric, f_star)?;
        horizons.push(t);
        values.push(v);
    }
    let fit = fit_log_log(&horizons, &values).map_err(|e| Error::Config(e.to_string()))?;
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("ratefit.csv"))?;
    w.write_record(["T", "value"])?;
    for (t, v) in fit.horizons.iter().zip(&fit.values) {
        w.write_record([t.to_string(), format_float(*v)])?;
    }
    w.write_record(["slope".to_string(), format_float(fit.slope)])?;
    w.write_record(["std_error".to_string(), format_float(fit.std_error)])?;
    w.flush()?;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_slope() {
        let t = [10u64, 100, 1000, 10_000];
        let v: Vec<f64> = t.iter().map(|&x| 3.0 * (x as f64).powf(-0.5)).collect();
        let fit = fit_log_log(&t, &v).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.std_error < 1e-12);
        assert!(fit_log_log(&[10], &[1.0]).is_err());
        assert!(fit_log_log(&[10, 10], &[1.0, 2.0]).is_err());
        assert!(fit_log_log(&[10, 100], &[1.0, -2.0]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(
            exit_code(&Error::NonFinite {
                t: 3,
                worker: Some(1)
            }),
            2
        );
        assert_eq!(exit_code(&Error::Invariant("x".into())), 3);
    }

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from([
            "memsgd",
            "run",
            "a.ini",
            "--out",
            "o",
            "--seed",
            "3",
            "--threads",
            "8",
        ])
        .unwrap();
        match cli.command {
            Command::Run { config, common } => {
                assert_eq!(config, PathBuf::from("a.ini"));
                assert_eq!(common.seed, Some(3));
                assert_eq!(common.threads, Some(8));
            }
            other => panic!("unexpected {other:?}"),
        }
        let cli =
            Cli::try_parse_from(["memsgd", "ratefit", "a.csv", "b.csv", "--metric", "grad-sq"])
                .unwrap();
        assert!(matches!(
            cli.command,
            Command::Ratefit {
                metric: RateMetric::GradSq,
                ..
            }
        ));
        assert!(Cli::try_parse_from(["memsgd", "compare"]).is_err());
    }
}
