//! The M-DSGD simulator.
//!
//! One iteration: every worker draws its mini-batch from its own counter-based
//! stream, forms its update (possibly on a rayon pool), and the sends are then
//! summed in worker order `0..p` on the calling thread before the iterate is
//! updated. Results are bitwise independent of the thread count.

mod schedule;
mod worker;

pub use schedule::{Schedule, ScheduleFamily, ScheduleValues};
pub use worker::{worker_step, StepContext, Variant, WorkerState, WorkerUpdate};

use rand::Rng;
use rayon::prelude::*;

use crate::compress::{random_k_mask, top_k_mask, CompressorKind, CompressorSpec};
use crate::diagnose::{build_z, memory_residual, transform_residual};
use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::problems::{make_problem, Oracle, ProblemMetadata, ProblemSpec};
use crate::rng::{worker_rng_stream, SHARED_STREAM};
use crate::vector::{ParamVector, SparseMask};

/// Scale-relative tolerance of the z-sequence recursion check.
pub const TRANSFORM_TOLERANCE: f64 = 1e-10;
/// Scale-relative tolerance of the memory elimination identity check.
pub const MEMORY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    /// `p`
    pub workers: usize,
    /// `b`, per-worker batch size.
    pub batch: usize,
    pub beta: f64,
    pub schedule: ScheduleFamily,
    pub compressor: CompressorSpec,
    pub variant: Variant,
    /// `T`
    pub iterations: u64,
    pub run_seed: u64,
    /// Metrics row cadence `N_diag`.
    pub diag_every: u64,
    /// Worker threads; never changes results.
    pub threads: usize,
    /// Record the mean objective over the last `ceil(T/2)` iterates.
    pub tail_objective: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemSpec::default(),
            workers: 4,
            batch: 8,
            beta: 0.9,
            schedule: ScheduleFamily::Constant {
                eta0: 0.1,
                horizon: 1000,
            },
            compressor: CompressorSpec::top_k(1),
            variant: Variant::Mdsgd,
            iterations: 1000,
            run_seed: 0,
            diag_every: 10,
            threads: 1,
            tail_objective: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers < 1 {
            return Err(Error::invalid("worker count p must be >= 1"));
        }
        if self.batch < 1 {
            return Err(Error::invalid("batch size b must be >= 1"));
        }
        if self.diag_every < 1 {
            return Err(Error::invalid("diagnostics cadence must be >= 1"));
        }
        if self.variant == Variant::MemoryScaled && self.beta != 0.0 {
            return Err(Error::invalid("memory_scaled variant requires beta = 0"));
        }
        self.compressor.validate(self.problem.d)?;
        Schedule::new(self.schedule, self.beta)?;
        Ok(())
    }

    pub fn build_schedule(&self) -> Result<Schedule> {
        Schedule::new(self.schedule, self.beta)
    }
}

/// Everything the simulator carries between iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineState {
    pub t: u64,
    pub w: ParamVector,
    pub workers: Vec<WorkerState>,
    /// `g̃_{t-1} = Σ_k g_{t-1,k}` (before any factor masking).
    pub momentum_sum: ParamVector,
    /// `ũ_t = Σ_k u_{t,k}`.
    pub memory_sum: ParamVector,
    /// `z_t`.
    pub z: ParamVector,
}

impl EngineState {
    fn new(w0: ParamVector, p: usize) -> Self {
        let d = w0.len();
        EngineState {
            t: 0,
            z: w0.clone(),
            w: w0,
            workers: (0..p).map(|k| WorkerState::new(k, d)).collect(),
            momentum_sum: ParamVector::zeros(d),
            memory_sum: ParamVector::zeros(d),
        }
    }

    /// Recomputes `Σ_k u_{t,k}` from the worker states.
    pub fn recompute_memory_sum(&self) -> ParamVector {
        sum_in_order(self.workers.iter().map(|s| &s.memory), self.w.len())
    }
}

/// Per-iteration diagnostics returned by [`Engine::step`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub t: u64,
    pub eta: f64,
    pub rho: f64,
    pub eta_next: f64,
    /// Aggregated mini-batch gradient `d_t = Σ_k grad_k / p`.
    pub minibatch_gradient: ParamVector,
    pub transform_residual: f64,
    pub memory_residual: f64,
    /// `‖z_t‖_∞` (scale of the transform check).
    pub z_norm_inf: f64,
    /// `‖w_t‖_∞` (scale of the memory elimination check).
    pub w_norm_inf: f64,
    pub sent_coords: usize,
    pub max_worker_grad_norm: f64,
    /// `‖g̃_t‖`
    pub momentum_norm: f64,
}

impl StepTrace {
    pub fn relative_transform_residual(&self) -> f64 {
        self.transform_residual / (1.0 + self.z_norm_inf)
    }

    pub fn relative_memory_residual(&self) -> f64 {
        self.memory_residual / (1.0 + self.w_norm_inf)
    }
}

/// The simulator bound to an oracle.
pub struct Engine<'a> {
    oracle: &'a dyn Oracle,
    schedule: Schedule,
    workers: usize,
    batch: usize,
    compressor: CompressorSpec,
    variant: Variant,
    run_seed: u64,
    pool: Option<rayon::ThreadPool>,
    state: EngineState,
}

impl<'a> Engine<'a> {
    pub fn new(oracle: &'a dyn Oracle, config: &RunConfig, w0: ParamVector) -> Result<Self> {
        config.validate()?;
        w0.check_dim(oracle.dim())?;
        config.compressor.validate(oracle.dim())?;
        let pool = if config.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| Error::invalid(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Engine {
            oracle,
            schedule: config.build_schedule()?,
            workers: config.workers,
            batch: config.batch,
            compressor: config.compressor,
            variant: config.variant,
            run_seed: config.run_seed,
            pool,
            state: EngineState::new(w0, config.workers),
        })
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn into_state(self) -> EngineState {
        self.state
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn oracle(&self) -> &dyn Oracle {
        self.oracle
    }

    /// Whether the z-sequence identities are exact for this variant.
    pub fn checks_identities(&self) -> bool {
        self.variant != Variant::FactorMasking
    }

    fn mask_for(
        &self,
        state: &WorkerState,
        grad: &ParamVector,
        ctx: &StepContext,
        shared: Option<&SparseMask>,
        rng: &mut crate::rng::RngStream,
    ) -> Result<SparseMask> {
        let d = grad.len();
        if self.variant == Variant::DenseDsgd {
            return Ok(SparseMask::dense(d));
        }
        match (self.compressor.kind, shared) {
            (CompressorKind::Dense, _) => Ok(SparseMask::dense(d)),
            (CompressorKind::TopK, _) => {
                top_k_mask(&state.candidate(grad, ctx)?, self.compressor.q)
            }
            (CompressorKind::RandomK, Some(m)) => Ok(m.clone()),
            (CompressorKind::RandomK, None) => random_k_mask(rng, d, self.compressor.q),
        }
    }

    /// One iteration of the simulator.
    pub fn step(&mut self) -> Result<StepTrace> {
        let t = self.state.t;
        let d = self.oracle.dim();
        let n = self.oracle.num_samples();
        let now = self.schedule.eval(t);
        let next = self.schedule.eval(t + 1);
        let ctx = StepContext {
            variant: self.variant,
            beta: self.schedule.beta(),
            workers: self.workers,
            eta: now.eta,
            eta_next: next.eta,
        };
        let shared = match self.compressor {
            CompressorSpec {
                kind: CompressorKind::RandomK,
                shared_mask: true,
                q,
            } => {
                let mut rng = worker_rng_stream(self.run_seed, SHARED_STREAM, t);
                Some(random_k_mask(&mut rng, d, q)?)
            }
            _ => None,
        };

        let mut workers = std::mem::take(&mut self.state.workers);
        let w = &self.state.w;
        let this = &*self;
        let work = |state: &mut WorkerState| -> Result<(WorkerUpdate, ParamVector)> {
            let k = state.worker_id;
            let mut rng = worker_rng_stream(this.run_seed, k as u64, t);
            let batch: Vec<usize> = (0..this.batch).map(|_| rng.random_range(0..n)).collect();
            let grad = this.oracle.stochastic_gradient(w, &batch)?;
            grad.ensure_finite(t, Some(k))?;
            let mask = this.mask_for(state, &grad, &ctx, shared.as_ref(), &mut rng)?;
            let update = state.step(&grad, &mask, &ctx)?;
            update.send.ensure_finite(t, Some(k))?;
            state.memory.ensure_finite(t, Some(k))?;
            Ok((update, grad))
        };
        let results: Vec<Result<(WorkerUpdate, ParamVector)>> = match &self.pool {
            Some(pool) => pool.install(|| workers.par_iter_mut().map(work).collect()),
            None => workers.iter_mut().map(work).collect(),
        };
        self.state.workers = workers;
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;

        // Serial reduction in worker order.
        let aggregate = sum_in_order(results.iter().map(|(u, _)| &u.send), d);
        let momentum_sum = sum_in_order(results.iter().map(|(u, _)| &u.momentum), d);
        let p = self.workers as f64;
        let mut minibatch = ParamVector::zeros(d);
        for (_, grad) in &results {
            for (m, g) in minibatch.as_mut_slice().iter_mut().zip(grad.iter()) {
                *m += g / p;
            }
        }
        let sent_coords = results.iter().map(|(u, _)| u.sent_coords).sum();
        let max_worker_grad_norm = results.iter().map(|(_, g)| g.norm()).fold(0.0, f64::max);

        let mut w_next = self.state.w.clone();
        w_next.axpy(-now.eta, &aggregate);
        w_next.ensure_finite(t, None)?;
        let memory_next = self.state.recompute_memory_sum();

        // For the scaled-memory variant `z_t = w_t − eta_t v_t` and the
        // recursion has no memory term, so the alpha coefficient is zero.
        let eta_alpha_next = if self.variant == Variant::MemoryScaled {
            now.eta
        } else {
            next.eta
        };
        let eta_memory_next = if self.variant == Variant::MemoryScaled {
            next.eta
        } else {
            now.eta
        };
        let z_next = build_z(&w_next, &momentum_sum, &memory_next, now.rho, next.eta)?;
        let transform = transform_residual(
            &self.state.z,
            &z_next,
            &minibatch,
            &memory_next,
            now.eta,
            eta_alpha_next,
            now.rho,
        )?;
        let memory_res = memory_residual(
            &self.state.w,
            &w_next,
            &momentum_sum,
            &self.state.memory_sum,
            &memory_next,
            now.eta,
            eta_memory_next,
        )?;

        let trace = StepTrace {
            t,
            eta: now.eta,
            rho: now.rho,
            eta_next: next.eta,
            transform_residual: transform,
            memory_residual: memory_res,
            z_norm_inf: self.state.z.norm_inf(),
            w_norm_inf: self.state.w.norm_inf(),
            sent_coords,
            max_worker_grad_norm,
            momentum_norm: momentum_sum.norm(),
            minibatch_gradient: minibatch,
        };
        self.state.t = t + 1;
        self.state.w = w_next;
        self.state.momentum_sum = momentum_sum;
        self.state.memory_sum = memory_next;
        self.state.z = z_next;
        Ok(trace)
    }

    /// Full-batch diagnostics at the current iterate.
    pub fn metrics_row(&self, transform_residual: f64, sent_nnz: u64) -> MetricsRow {
        let t = self.state.t;
        let v = self.schedule.eval(t);
        MetricsRow {
            t,
            objective: self.oracle.full_objective(&self.state.w),
            grad_norm: self.oracle.full_gradient(&self.state.w).norm(),
            mem_norm: self.state.memory_sum.norm(),
            zw_dist: self.state.z.distance(&self.state.w),
            transform_residual,
            eta: v.eta,
            rho: v.rho,
            gamma: v.gamma,
            sent_nnz,
        }
    }
}

fn sum_in_order<'v>(vectors: impl Iterator<Item = &'v ParamVector>, d: usize) -> ParamVector {
    let mut acc = ParamVector::zeros(d);
    for v in vectors {
        acc.add_assign(v);
    }
    acc
}

/// Aggregate statistics over a whole run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub iterations: u64,
    pub max_relative_transform_residual: f64,
    pub max_relative_memory_residual: f64,
    pub transform_violations: u64,
    pub memory_violations: u64,
    /// `max_t ‖ũ_t‖²`
    pub max_memory_norm_sq: f64,
    /// `max_t ‖g̃_t‖`
    pub max_momentum_norm: f64,
    /// Largest raw mini-batch gradient norm seen by any worker.
    pub max_worker_grad_norm: f64,
    pub total_sent_coords: u64,
    /// Mean of `F(w_t)` over the last `ceil(T/2)` iterates, when requested.
    pub tail_mean_objective: Option<f64>,
    /// Mean of `F(w_t) − F*` over the same window, when `F*` is known.
    pub tail_mean_suboptimality: Option<f64>,
    /// `(1/T) Σ_{t<T} w_t`
    pub iterate_average: Option<ParamVector>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub final_state: EngineState,
    pub summary: RunSummary,
    pub problem: ProblemMetadata,
}

/// Generates the configured problem and runs from its initial point.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let problem = make_problem(&config.problem)?;
    let w0 = problem.initial_point().clone();
    run_with_oracle(config, &problem, w0)
}

/// Runs `config.iterations` steps on an explicit oracle and start point.
pub fn run_with_oracle(
    config: &RunConfig,
    oracle: &dyn Oracle,
    w0: ParamVector,
) -> Result<RunOutput> {
    let mut engine = Engine::new(oracle, config, w0)?;
    let total = config.iterations;
    let tail_start = total - total.div_ceil(2);
    let f_star = oracle.metadata().f_star;
    let check = engine.checks_identities();

    let mut summary = RunSummary {
        iterations: total,
        max_relative_transform_residual: 0.0,
        max_relative_memory_residual: 0.0,
        transform_violations: 0,
        memory_violations: 0,
        max_memory_norm_sq: 0.0,
        max_momentum_norm: 0.0,
        max_worker_grad_norm: 0.0,
        total_sent_coords: 0,
        tail_mean_objective: None,
        tail_mean_suboptimality: None,
        iterate_average: None,
    };
    let mut rows = vec![engine.metrics_row(0.0, 0)];
    let mut iterate_sum = ParamVector::zeros(oracle.dim());
    let mut tail_sum = 0.0;
    let mut tail_subopt_sum = 0.0;

    for t in 0..total {
        iterate_sum.add_assign(&engine.state().w);
        if config.tail_objective && t >= tail_start {
            let f = oracle.full_objective(&engine.state().w);
            tail_sum += f;
            if let Some(fs) = f_star {
                tail_subopt_sum += f - fs;
            }
        }
        let trace = engine.step()?;
        let rel_transform = trace.relative_transform_residual();
        let rel_memory = trace.relative_memory_residual();
        if check {
            summary.max_relative_transform_residual =
                summary.max_relative_transform_residual.max(rel_transform);
            summary.max_relative_memory_residual =
                summary.max_relative_memory_residual.max(rel_memory);
            summary.transform_violations += u64::from(rel_transform > TRANSFORM_TOLERANCE);
            summary.memory_violations += u64::from(rel_memory > MEMORY_TOLERANCE);
        }
        summary.max_memory_norm_sq = summary
            .max_memory_norm_sq
            .max(engine.state().memory_sum.norm_sq());
        summary.max_momentum_norm = summary.max_momentum_norm.max(trace.momentum_norm);
        summary.max_worker_grad_norm = summary.max_worker_grad_norm.max(trace.max_worker_grad_norm);
        summary.total_sent_coords += trace.sent_coords as u64;

        let t_next = t + 1;
        if t_next % config.diag_every == 0 || t_next == total {
            rows.push(engine.metrics_row(trace.transform_residual, summary.total_sent_coords));
        }
    }

    if total > 0 {
        iterate_sum.scale(1.0 / total as f64);
        iterate_sum.ensure_finite(total, None)?;
        summary.iterate_average = Some(iterate_sum);
        if config.tail_objective {
            let count = (total - tail_start) as f64;
            summary.tail_mean_objective = Some(tail_sum / count);
            summary.tail_mean_suboptimality = f_star.map(|_| tail_subopt_sum / count);
        }
    }
    Ok(RunOutput {
        rows,
        final_state: engine.into_state(),
        summary,
        problem: oracle.metadata().clone(),
    })
}
