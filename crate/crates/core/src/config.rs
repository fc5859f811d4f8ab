//! Experiment files: `[section]` headers, `key = value` lines, `#` comments.
//!
//! The schema is documented in `docs/config.md`. Unknown sections and keys
//! are rejected, and every error names the offending key.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::compress::{CompressorKind, CompressorSpec};
use crate::diagnose::PROX_TOLERANCE;
use crate::engine::{RunConfig, ScheduleFamily, Variant};
use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::stagewise::StageConfig;

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "problem",
        &[
            "name",
            "d",
            "n",
            "data_seed",
            "noise",
            "mu",
            "smoothness",
            "l2",
            "init_radius",
        ],
    ),
    (
        "engine",
        &[
            "workers",
            "batch",
            "beta",
            "variant",
            "iterations",
            "seed",
            "threads",
        ],
    ),
    ("schedule", &["family", "eta0", "alpha", "mu", "horizon"]),
    ("compressor", &["kind", "q", "shared_mask"]),
    ("diagnostics", &["every", "check", "tail_average"]),
    ("stagewise", &["stages", "gamma", "eta0", "prox_tolerance"]),
    ("output", &["dir"]),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub stagewise: StageConfig,
    /// Fail with an invariant error when an identity check is violated.
    pub check: bool,
    pub output_dir: Option<PathBuf>,
}

type Sections = BTreeMap<String, BTreeMap<String, (String, usize)>>;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn tokenize(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| config_err(format!("line {line_no}: malformed section header")))?
                .trim();
            if !SCHEMA.iter().any(|(s, _)| *s == name) {
                return Err(config_err(format!(
                    "line {line_no}: unknown section [{name}]"
                )));
            }
            if sections.contains_key(name) {
                return Err(config_err(format!(
                    "line {line_no}: duplicate section [{name}]"
                )));
            }
            sections.insert(name.to_string(), BTreeMap::new());
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {line_no}: expected `key = value`")))?;
        let (key, value) = (key.trim(), value.trim());
        let section = current.as_ref().ok_or_else(|| {
            config_err(format!("line {line_no}: key `{key}` outside of a section"))
        })?;
        let allowed = SCHEMA
            .iter()
            .find(|(s, _)| s == section)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(config_err(format!(
                "line {line_no}: unknown key `{section}.{key}`"
            )));
        }
        if value.is_empty() {
            return Err(config_err(format!(
                "line {line_no}: `{section}.{key}` has no value"
            )));
        }
        let entries = sections.get_mut(section).expect("section inserted above");
        if entries
            .insert(key.to_string(), (value.to_string(), line_no))
            .is_some()
        {
            return Err(config_err(format!(
                "line {line_no}: duplicate key `{section}.{key}`"
            )));
        }
    }
    Ok(sections)
}

struct Reader<'a> {
    sections: &'a Sections,
}

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                config_err(format!(
                    "line {line}: `{section}.{key}`: cannot parse `{v}`"
                ))
            }),
        }
    }

    fn or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.get(section, key)?
            .ok_or_else(|| config_err(format!("missing required key `{section}.{key}`")))
    }

    fn flag(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.raw(section, key) {
            None => Ok(default),
            Some((v, line)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(config_err(format!(
                    "line {line}: `{section}.{key}` must be true or false"
                ))),
            },
        }
    }
}

fn range(cond: bool, msg: String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(config_err(msg))
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let sections = tokenize(text)?;
    let r = Reader {
        sections: &sections,
    };
    let defaults = ProblemSpec::default();

    let d: usize = r.required("problem", "d")?;
    let problem = ProblemSpec {
        name: r.required("problem", "name")?,
        d,
        n: r.or("problem", "n", defaults.n)?,
        data_seed: r.or("problem", "data_seed", 0)?,
        noise: r.or("problem", "noise", defaults.noise)?,
        mu: r.or("problem", "mu", defaults.mu)?,
        smoothness: r.or("problem", "smoothness", defaults.smoothness)?,
        l2: r.or("problem", "l2", defaults.l2)?,
        init_radius: r.get("problem", "init_radius")?,
    };
    range(
        matches!(problem.name.as_str(), "quadratic" | "logistic" | "phaseret"),
        format!(
            "problem.name must be quadratic, logistic or phaseret (got `{}`)",
            problem.name
        ),
    )?;
    range(d >= 1, "problem.d must be >= 1".into())?;
    range(problem.n >= 1, "problem.n must be >= 1".into())?;
    range(
        problem.noise >= 0.0 && problem.noise.is_finite(),
        "problem.noise must be >= 0".into(),
    )?;
    if problem.name == "quadratic" {
        range(
            problem.mu > 0.0 && problem.mu <= problem.smoothness && problem.smoothness.is_finite(),
            "quadratic curvatures must satisfy 0 < mu <= smoothness".into(),
        )?;
    }
    if problem.name == "logistic" {
        range(
            problem.l2 >= 0.0 && problem.l2.is_finite(),
            "problem.l2 must be >= 0".into(),
        )?;
    }

    let workers: usize = r.or("engine", "workers", 4)?;
    let batch: usize = r.or("engine", "batch", 8)?;
    let beta: f64 = r.or("engine", "beta", 0.9)?;
    let iterations: u64 = r.required("engine", "iterations")?;
    range(workers >= 1, "engine.workers (p) must be >= 1".into())?;
    range(batch >= 1, "engine.batch (b) must be >= 1".into())?;
    range(
        (0.0..1.0).contains(&beta),
        format!("beta must be in [0,1) (got {beta})"),
    )?;
    range(iterations >= 1, "engine.iterations (T) must be >= 1".into())?;
    let variant: Variant = r
        .or("engine", "variant", "mdsgd".to_string())?
        .parse()
        .map_err(|e: Error| config_err(format!("engine.variant: {e}")))?;
    range(
        variant != Variant::MemoryScaled || beta == 0.0,
        "engine.variant = memory_scaled requires beta = 0".into(),
    )?;

    let eta0: f64 = r.or("schedule", "eta0", 1.0)?;
    range(
        eta0 > 0.0 && eta0.is_finite(),
        format!("schedule.eta0 must be > 0 (got {eta0})"),
    )?;
    let family_name: String = r.or("schedule", "family", "constant".to_string())?;
    let schedule = match family_name.as_str() {
        "constant" => {
            let horizon: u64 = r.or("schedule", "horizon", iterations)?;
            range(horizon >= 1, "schedule.horizon must be >= 1".into())?;
            ScheduleFamily::Constant { eta0, horizon }
        }
        "power" => {
            let alpha: f64 = r.or("schedule", "alpha", 0.75)?;
            range((0.5..=1.0).contains(&alpha), format!("schedule.alpha must be in [0.5, 1] (got {alpha})"))?;
            ScheduleFamily::Power { eta0, alpha }
        }
        "strong_convex" => {
            let mu: f64 = r.or("schedule", "mu", problem.mu)?;
            range(mu > 0.0 && mu.is_finite(), format!("schedule.mu must be > 0 (got {mu})"))?;
            ScheduleFamily::StrongConvex { mu }
        }
        "convex_sqrt" => ScheduleFamily::ConvexSqrt,
        "stage_constant" => ScheduleFamily::StageConstant { eta0 },
        other => {
            return Err(config_err(format!(
                "schedule.family must be constant, power, strong_convex, convex_sqrt or stage_constant (got `{other}`)"
            )))
        }
    };

    let kind: CompressorKind = r
        .or("compressor", "kind", "top_k".to_string())?
        .parse()
        .map_err(|e: Error| config_err(format!("compressor.kind: {e}")))?;
    let q: usize = r.or("compressor", "q", d.div_ceil(20))?;
    if kind != CompressorKind::Dense {
        range(
            (1..=d).contains(&q),
            format!("compressor.q must be in [1, {d}] (got {q})"),
        )?;
    }
    let compressor = CompressorSpec {
        kind,
        q,
        shared_mask: r.flag("compressor", "shared_mask", kind == CompressorKind::RandomK)?,
    };

    let diag_every: u64 = r.or("diagnostics", "every", 10)?;
    range(
        diag_every >= 1,
        "diagnostics.every (N_diag) must be >= 1".into(),
    )?;
    let threads: usize = r.or("engine", "threads", 1)?;
    range(threads >= 1, "engine.threads must be >= 1".into())?;

    let run = RunConfig {
        problem,
        workers,
        batch,
        beta,
        schedule,
        compressor,
        variant,
        iterations,
        run_seed: r.or("engine", "seed", 0)?,
        diag_every,
        threads,
        tail_objective: r.flag("diagnostics", "tail_average", false)?,
    };
    run.validate().map_err(|e| config_err(e.to_string()))?;

    let stages: usize = r.or("stagewise", "stages", 8)?;
    range(stages >= 1, "stagewise.stages (S) must be >= 1".into())?;
    let gamma: Option<f64> = r.get("stagewise", "gamma")?;
    if let Some(g) = gamma {
        range(
            g > 0.0 && g.is_finite(),
            format!("stagewise.gamma must be > 0 (got {g})"),
        )?;
    }
    let stage_eta0: f64 = r.or("stagewise", "eta0", 1e-3)?;
    range(
        stage_eta0 > 0.0 && stage_eta0.is_finite(),
        "stagewise.eta0 must be > 0".into(),
    )?;
    let prox_tolerance: f64 = r.or("stagewise", "prox_tolerance", PROX_TOLERANCE)?;
    range(
        prox_tolerance > 0.0,
        "stagewise.prox_tolerance must be > 0".into(),
    )?;

    Ok(ExperimentConfig {
        stagewise: StageConfig {
            stages,
            gamma,
            eta0: stage_eta0,
            base: run.clone(),
            prox_tolerance,
        },
        run,
        check: r.flag("diagnostics", "check", true)?,
        output_dir: r.get::<String>("output", "dir")?.map(PathBuf::from),
    })
}

impl ExperimentConfig {
    /// Applies command-line overrides to both the single-run and stagewise parts.
    pub fn override_seed(&mut self, seed: u64) {
        self.run.run_seed = seed;
        self.stagewise.base.run_seed = seed;
    }

    pub fn override_threads(&mut self, threads: usize) {
        self.run.threads = threads;
        self.stagewise.base.threads = threads;
    }
}
