//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::process::Command;

use rayon::prelude::*;

use memsgd::compress::{memory_norm_bound, CompressorKind};
use memsgd::diagnose::{moreau_grad_estimate, zw_bound_check};
use memsgd::problems::{Problem, ProblemKind, Quadratic};
use memsgd::stagewise::{stagewise_run, StageConfig};
use memsgd::{
    make_problem, run, CompressorSpec, Oracle, ParamVector, ProblemSpec, RunConfig, RunOutput,
    Schedule, ScheduleFamily, Variant,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const GRID_T: u64 = 2000;

fn grid_families() -> Vec<(&'static str, ScheduleFamily)> {
    vec![
        (
            "constant",
            ScheduleFamily::Constant {
                eta0: 1.0,
                horizon: GRID_T,
            },
        ),
        (
            "power",
            ScheduleFamily::Power {
                eta0: 0.5,
                alpha: 0.75,
            },
        ),
        ("strong_convex", ScheduleFamily::StrongConvex { mu: 1.0 }),
        ("convex_sqrt", ScheduleFamily::ConvexSqrt),
    ]
}

fn grid_compressors() -> Vec<CompressorSpec> {
    vec![
        CompressorSpec::dense(),
        CompressorSpec::top_k(5),
        CompressorSpec::random_k(5),
    ]
}

struct GridCell {
    label: String,
    schedule: Schedule,
    output: RunOutput,
}

fn run_grid() -> Vec<GridCell> {
    let mut cells = Vec::new();
    for (name, family) in grid_families() {
        for compressor in grid_compressors() {
            for beta in [0.0, 0.5, 0.9] {
                cells.push((name, family, compressor, beta));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(name, family, compressor, beta)| {
            let config = RunConfig {
                problem: ProblemSpec {
                    name: "quadratic".into(),
                    d: 50,
                    n: 100,
                    mu: 0.5,
                    smoothness: 1.5,
                    ..ProblemSpec::default()
                },
                workers: 4,
                batch: 8,
                beta,
                schedule: family,
                compressor,
                iterations: GRID_T,
                diag_every: 1,
                run_seed: 11,
                ..RunConfig::default()
            };
            let output = run(&config).expect("grid run");
            GridCell {
                label: format!("{name}/{}/beta={beta}", compressor.kind.as_str()),
                schedule: config.build_schedule().unwrap(),
                output,
            }
        })
        .collect()
}

fn transform_identity(grid: &[GridCell]) -> Outcome {
    let worst = grid
        .iter()
        .max_by(|a, b| {
            a.output
                .summary
                .max_relative_transform_residual
                .total_cmp(&b.output.summary.max_relative_transform_residual)
        })
        .unwrap();
    let violations: u64 = grid
        .iter()
        .map(|c| c.output.summary.transform_violations)
        .sum();
    outcome(
        violations == 0 && grid.len() == 36,
        format!(
            "{} cells, {violations} violations, worst relative residual {:.2e} ({})",
            grid.len(),
            worst.output.summary.max_relative_transform_residual,
            worst.label
        ),
    )
}

fn memory_identity(grid: &[GridCell]) -> Outcome {
    let violations: u64 = grid
        .iter()
        .map(|c| c.output.summary.memory_violations)
        .sum();
    let worst = grid
        .iter()
        .map(|c| c.output.summary.max_relative_memory_residual)
        .fold(0.0, f64::max);
    outcome(
        violations == 0,
        format!("{violations} violations, worst relative residual {worst:.2e}"),
    )
}

fn zw_closeness(grid: &[GridCell]) -> Outcome {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for cell in grid {
        let g = cell.output.problem.gradient_bound.unwrap();
        let u = cell.output.summary.max_memory_norm_sq.sqrt();
        let report = zw_bound_check(&cell.output.rows, &cell.schedule, g, u);
        violations += report.violations.len();
        worst = worst.max(report.max_ratio);
    }
    outcome(
        violations == 0,
        format!("{violations} violations, worst lhs/rhs {worst:.3}"),
    )
}

fn dense_equivalence() -> Outcome {
    let mut failures = Vec::new();
    for name in ["quadratic", "logistic", "phaseret"] {
        for beta in [0.0, 0.9] {
            let base = RunConfig {
                problem: ProblemSpec {
                    name: name.into(),
                    d: 10,
                    n: 100,
                    ..ProblemSpec::default()
                },
                beta,
                schedule: ScheduleFamily::Constant {
                    eta0: 0.5,
                    horizon: 1000,
                },
                iterations: 1000,
                run_seed: 5,
                ..RunConfig::default()
            };
            let dense = run(&RunConfig {
                compressor: CompressorSpec::dense(),
                ..base.clone()
            })
            .unwrap();
            let full_top = run(&RunConfig {
                compressor: CompressorSpec::top_k(10),
                ..base.clone()
            })
            .unwrap();
            let reference = run(&RunConfig {
                variant: Variant::DenseDsgd,
                compressor: CompressorSpec::dense(),
                ..base.clone()
            })
            .unwrap();
            for (label, out) in [("dense", &dense), ("top_k(q=d)", &full_top)] {
                if out.final_state.w != reference.final_state.w || out.rows != reference.rows {
                    failures.push(format!("{name}/beta={beta}/{label}"));
                }
            }
        }
    }
    for name in ["quadratic", "logistic", "phaseret"] {
        for compressor in [CompressorSpec::top_k(2), CompressorSpec::random_k(3)] {
            let base = RunConfig {
                problem: ProblemSpec {
                    name: name.into(),
                    d: 10,
                    n: 100,
                    ..ProblemSpec::default()
                },
                beta: 0.0,
                schedule: ScheduleFamily::Constant {
                    eta0: 0.5,
                    horizon: 1000,
                },
                compressor,
                iterations: 1000,
                run_seed: 6,
                ..RunConfig::default()
            };
            let mdsgd = run(&base).unwrap();
            let scaled = run(&RunConfig {
                variant: Variant::MemoryScaled,
                ..base.clone()
            })
            .unwrap();
            if scaled.final_state.w != mdsgd.final_state.w {
                failures.push(format!("{name}/memory_scaled/{}", compressor.kind.as_str()));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "18 comparisons bitwise identical".to_string()
        } else {
            format!("differences: {}", failures.join(", "))
        },
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.ini");
    fs::write(
        &config,
        "[problem]\nname = logistic\nd = 30\nn = 200\n\n[engine]\nworkers = 8\nbatch = 4\niterations = 500\n\n\
         [compressor]\nkind = top_k\nq = 3\n\n[diagnostics]\nevery = 5\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_memsgd"))
            .args([
                "run",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "3",
            ])
            .args(["--threads", threads])
            .status()
            .unwrap();
        if !status.success() {
            return outcome(
                false,
                format!("run with {threads} threads exited with {status}"),
            );
        }
        outputs.push(fs::read(out.join("metrics.csv")).unwrap());
    }
    outcome(
        outputs[0] == outputs[1],
        format!(
            "metrics.csv {} bytes, identical = {}",
            outputs[0].len(),
            outputs[0] == outputs[1]
        ),
    )
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn strongly_convex_rate() -> Outcome {
    let horizons = [1_000u64, 10_000, 100_000];
    let jobs: Vec<(u64, u64)> = horizons
        .iter()
        .flat_map(|&t| SEEDS.iter().map(move |&s| (t, s)))
        .collect();
    let values: Vec<(u64, f64)> = jobs
        .into_par_iter()
        .map(|(t, seed)| {
            let config = RunConfig {
                problem: ProblemSpec {
                    name: "quadratic".into(),
                    d: 20,
                    n: 100,
                    mu: 1.0,
                    smoothness: 10.0,
                    noise: 1.0,
                    data_seed: 7,
                    ..ProblemSpec::default()
                },
                workers: 4,
                batch: 8,
                beta: 0.9,
                schedule: ScheduleFamily::StrongConvex { mu: 1.0 },
                compressor: CompressorSpec::top_k(2),
                iterations: t,
                run_seed: seed,
                diag_every: t,
                tail_objective: true,
                ..RunConfig::default()
            };
            let out = run(&config).unwrap();
            (t, out.summary.tail_mean_suboptimality.unwrap())
        })
        .collect();
    let means: Vec<f64> = horizons
        .iter()
        .map(|&t| {
            values
                .iter()
                .filter(|(h, _)| *h == t)
                .map(|(_, v)| v)
                .sum::<f64>()
                / SEEDS.len() as f64
        })
        .collect();
    let x: Vec<f64> = horizons.iter().map(|&t| t as f64).collect();
    let s = slope(&x, &means);
    outcome(
        (-1.2..=-0.8).contains(&s),
        format!(
            "slope {s:.3}, tail suboptimality {:.3e} / {:.3e} / {:.3e}",
            means[0], means[1], means[2]
        ),
    )
}

fn nonconvex_rate() -> Outcome {
    let horizons = [1_000u64, 16_000];
    let jobs: Vec<(u64, u64)> = horizons
        .iter()
        .flat_map(|&t| SEEDS.iter().map(move |&s| (t, s)))
        .collect();
    let values: Vec<(u64, f64)> = jobs
        .into_par_iter()
        .map(|(t, seed)| {
            let config = RunConfig {
                problem: ProblemSpec {
                    name: "quadratic".into(),
                    d: 50,
                    n: 100,
                    mu: 1.0,
                    smoothness: 4.0,
                    noise: 1.0,
                    data_seed: 7,
                    ..ProblemSpec::default()
                },
                workers: 4,
                batch: 8,
                beta: 0.5,
                schedule: ScheduleFamily::Constant {
                    eta0: 1.0,
                    horizon: t,
                },
                compressor: CompressorSpec::top_k(5),
                iterations: t,
                run_seed: seed,
                diag_every: 1,
                ..RunConfig::default()
            };
            let out = run(&config).unwrap();
            let min = out
                .rows
                .iter()
                .map(|r| r.grad_norm * r.grad_norm)
                .fold(f64::INFINITY, f64::min);
            (t, min)
        })
        .collect();
    let mean = |t: u64| {
        values
            .iter()
            .filter(|(h, _)| *h == t)
            .map(|(_, v)| v)
            .sum::<f64>()
            / SEEDS.len() as f64
    };
    let ratio = mean(horizons[0]) / mean(horizons[1]);
    outcome(
        (2.0..=8.0).contains(&ratio),
        format!(
            "min grad^2 ratio {ratio:.3} ({:.3e} vs {:.3e})",
            mean(horizons[0]),
            mean(horizons[1])
        ),
    )
}

fn memory_bound() -> Outcome {
    let mut cases = Vec::new();
    for kind in [CompressorKind::TopK, CompressorKind::RandomK] {
        for q in [2usize, 5, 25] {
            for beta in [0.0, 0.9] {
                cases.push((kind, q, beta));
            }
        }
    }
    let results: Vec<(String, bool, f64)> = cases
        .into_par_iter()
        .map(|(kind, q, beta)| {
            let compressor = CompressorSpec {
                kind,
                q,
                shared_mask: kind == CompressorKind::RandomK,
            };
            let mut maxima = Vec::new();
            let mut within = true;
            for (workers, batch) in [(1usize, 32usize), (4, 8), (8, 4)] {
                let config = RunConfig {
                    problem: ProblemSpec {
                        name: "quadratic".into(),
                        d: 50,
                        n: 200,
                        mu: 0.5,
                        smoothness: 1.5,
                        noise: 0.001,
                        ..ProblemSpec::default()
                    },
                    workers,
                    batch,
                    beta,
                    schedule: ScheduleFamily::Constant {
                        eta0: 0.1,
                        horizon: 2000,
                    },
                    compressor,
                    iterations: 2000,
                    diag_every: 2000,
                    ..RunConfig::default()
                };
                let out = run(&config).unwrap();
                let bound =
                    memory_norm_bound(50, q, out.problem.gradient_bound.unwrap(), beta).unwrap();
                within &= out.summary.max_memory_norm_sq <= bound;
                maxima.push(out.summary.max_memory_norm_sq);
            }
            let spread = maxima
                .iter()
                .map(|m| (m / maxima[0] - 1.0).abs())
                .fold(0.0, f64::max);
            (
                format!("{}/q={q}/beta={beta}", kind.as_str()),
                within,
                spread,
            )
        })
        .collect();
    let violations: Vec<&String> = results.iter().filter(|r| !r.1).map(|r| &r.0).collect();
    let worst = results.iter().max_by(|a, b| a.2.total_cmp(&b.2)).unwrap();
    outcome(
        violations.is_empty() && worst.2 <= 0.10,
        format!(
            "{} bound violations, worst p-spread {:.1}% ({})",
            violations.len(),
            100.0 * worst.2,
            worst.0
        ),
    )
}

/// Distance of the phaseret start from the planted vector. Each stage moves
/// the center by roughly one proximal step of length ~0.012 here, so eight
/// stages only reach the sharp basin from starts this close.
const STAGEWISE_START_RADIUS: f64 = 0.05;

fn stagewise() -> Outcome {
    let per_seed: Vec<(Vec<f64>, f64, f64)> = SEEDS
        .par_iter()
        .map(|&seed| {
            let config = StageConfig {
                stages: 8,
                gamma: None,
                eta0: 1e-3,
                base: RunConfig {
                    problem: ProblemSpec {
                        name: "phaseret".into(),
                        d: 10,
                        n: 100,
                        noise: 0.0,
                        data_seed: seed,
                        init_radius: Some(STAGEWISE_START_RADIUS),
                        ..ProblemSpec::default()
                    },
                    workers: 4,
                    batch: 8,
                    beta: 0.9,
                    compressor: CompressorSpec::top_k(2),
                    run_seed: seed,
                    ..RunConfig::default()
                },
                ..StageConfig::default()
            };
            let out = stagewise_run(&config).unwrap();
            let weighted: Vec<f64> = out.reports.iter().map(|r| r.weighted_avg).collect();
            (
                weighted,
                out.reports[0].moreau_grad_sq,
                out.final_moreau_grad_sq,
            )
        })
        .collect();
    let n = SEEDS.len() as f64;
    let first = per_seed.iter().map(|r| r.1).sum::<f64>() / n;
    let last = per_seed.iter().map(|r| r.2).sum::<f64>() / n;
    let weighted: Vec<f64> = (0..8)
        .map(|s| per_seed.iter().map(|r| r.0[s]).sum::<f64>() / n)
        .collect();
    let inversions = weighted.windows(2).filter(|w| w[1] > w[0]).count();
    outcome(
        last <= first / 5.0 && inversions <= 1,
        format!(
            "moreau grad^2 {first:.3e} -> {last:.3e}, weighted-average inversions {inversions}"
        ),
    )
}

fn oracle_checks() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    // Finite differences on the smooth problems.
    let mut worst_fd: f64 = 0.0;
    for name in ["quadratic", "logistic"] {
        let p = make_problem(&ProblemSpec {
            name: name.into(),
            d: 8,
            n: 50,
            ..ProblemSpec::default()
        })
        .unwrap();
        let mut rng = memsgd::rng::data_stream(99, 0);
        use rand::Rng;
        for _ in 0..5 {
            let w: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let batch: Vec<usize> = (0..4).map(|_| rng.random_range(0..50)).collect();
            let w = ParamVector::from_vec(w).unwrap();
            let g = p.stochastic_gradient(&w, &batch).unwrap();
            let h = 1e-6;
            let fd: Vec<f64> = (0..8)
                .map(|j| {
                    let mut a = w.clone();
                    let mut b = w.clone();
                    a.as_mut_slice()[j] += h;
                    b.as_mut_slice()[j] -= h;
                    (p.batch_objective(&a, &batch) - p.batch_objective(&b, &batch)) / (2.0 * h)
                })
                .collect();
            let fd = ParamVector::from_vec(fd).unwrap();
            worst_fd = worst_fd.max(fd.distance(&g) / g.norm());
        }
    }
    pass &= worst_fd <= 1e-5;
    notes.push(format!("finite-difference rel err {worst_fd:.1e}"));

    let q = Quadratic::from_parts(vec![1.0], vec![vec![0.0]]).unwrap();
    let p = Problem::from_kind(ProblemKind::Quadratic(q), ParamVector::zeros(1), 0).unwrap();
    let est =
        moreau_grad_estimate(&p, &ParamVector::from_vec(vec![3.0]).unwrap(), 0.5, 1e-10).unwrap();
    let err = (est.grad[0] - 2.0).abs();
    pass &= err <= 1e-6;
    notes.push(format!("moreau closed-form err {err:.1e}"));

    let mut worst_rec: f64 = 0.0;
    let families = [
        ScheduleFamily::Constant {
            eta0: 1.0,
            horizon: 10_000,
        },
        ScheduleFamily::Power {
            eta0: 0.5,
            alpha: 0.5,
        },
        ScheduleFamily::Power {
            eta0: 0.5,
            alpha: 0.75,
        },
        ScheduleFamily::Power {
            eta0: 0.5,
            alpha: 1.0,
        },
        ScheduleFamily::StrongConvex { mu: 0.3 },
        ScheduleFamily::ConvexSqrt,
    ];
    for family in families {
        for beta in [0.1, 0.5, 0.9] {
            let s = Schedule::new(family, beta).unwrap();
            for t in 1..10_000u64 {
                let lhs = beta * s.eval(t).rho;
                let rhs = beta * s.eval(t).eta + s.eval(t - 1).rho;
                worst_rec = worst_rec.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
            }
        }
    }
    pass &= worst_rec <= 1e-12;
    notes.push(format!("schedule recurrence rel err {worst_rec:.1e}"));
    outcome(pass, notes.join(", "))
}

fn main() {
    let grid = run_grid();
    let results: Vec<(&str, Outcome)> = vec![
        ("transformation identity", transform_identity(&grid)),
        ("memory elimination identity", memory_identity(&grid)),
        ("dense-mask equivalence", dense_equivalence()),
        ("thread-count determinism", determinism()),
        ("strongly convex rate", strongly_convex_rate()),
        ("non-convex rate", nonconvex_rate()),
        ("memory norm bound", memory_bound()),
        ("z-w closeness bound", zw_closeness(&grid)),
        ("stagewise moreau decrease", stagewise()),
        ("oracle checks", oracle_checks()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "criterion {:>2} {}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
