//! Stagewise M-DSGD for weakly convex objectives.
//!
//! Stage `s` runs the simulator with constant step `eta_s = eta0/(s+1)` for
//! `T_s` steps on `F_{s,γ}(w) = F(w) + ‖w − w̃_s‖²/(2γ)`, starting from fresh
//! worker state at `w̃_s`, and takes the uniform average of the stage iterates
//! as the next center. Progress is measured by the Moreau-envelope gradient
//! `‖∇F_γ(w̃_s)‖²`.

use crate::diagnose::{moreau_grad_estimate, PROX_TOLERANCE};
use crate::engine::{run_with_oracle, RunConfig, RunSummary, ScheduleFamily};
use crate::error::{Error, Result};
use crate::problems::{make_problem, Oracle, ProblemMetadata};
use crate::vector::ParamVector;

/// `F(w) + ‖w − center‖²/(2γ)` over the samples of an inner oracle.
pub struct ProxObjective<'a> {
    inner: &'a dyn Oracle,
    center: ParamVector,
    gamma: f64,
    meta: ProblemMetadata,
}

/// Wraps `oracle` with the proximal term centered at `center`.
pub fn prox_objective<'a>(
    oracle: &'a dyn Oracle,
    center: &ParamVector,
    gamma: f64,
) -> Result<ProxObjective<'a>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be > 0 (got {gamma})")));
    }
    center.check_dim(oracle.dim())?;
    let inner = oracle.metadata();
    let meta = ProblemMetadata {
        name: format!("{}+prox", inner.name),
        smoothness: inner.smoothness.map(|l| l + 1.0 / gamma),
        strong_convexity: if inner.weak_convexity > 0.0 {
            1.0 / gamma - inner.weak_convexity
        } else {
            inner.strong_convexity + 1.0 / gamma
        },
        weak_convexity: 0.0,
        gradient_bound: None,
        w_star: None,
        f_star: None,
    };
    Ok(ProxObjective {
        inner: oracle,
        center: center.clone(),
        gamma,
        meta,
    })
}

impl ProxObjective<'_> {
    pub fn center(&self) -> &ParamVector {
        &self.center
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        let d2: f64 = w
            .iter()
            .zip(self.center.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d2 / (2.0 * self.gamma)
    }
}

impl Oracle for ProxObjective<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn num_samples(&self) -> usize {
        self.inner.num_samples()
    }

    fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        self.inner.sample_loss(w, i) + self.penalty(w)
    }

    fn accumulate_sample_gradient(&self, w: &[f64], i: usize, out: &mut [f64]) {
        self.inner.accumulate_sample_gradient(w, i, out);
        for ((o, wj), cj) in out.iter_mut().zip(w).zip(self.center.iter()) {
            *o += (wj - cj) / self.gamma;
        }
    }

    fn metadata(&self) -> &ProblemMetadata {
        &self.meta
    }
}

/// Minimal `T` with `T·eta ≥ 12γ` in floating point.
pub fn stage_length(gamma: f64, eta: f64) -> u64 {
    let target = 12.0 * gamma;
    let mut t = (target / eta).ceil().max(1.0) as u64;
    while (t as f64) * eta < target {
        t += 1;
    }
    while t > 1 && ((t - 1) as f64) * eta >= target {
        t -= 1;
    }
    t
}

/// `γ = 1/(2c)`, or 1 for convex objectives.
pub fn default_gamma(weak_convexity: f64) -> f64 {
    if weak_convexity > 0.0 {
        1.0 / (2.0 * weak_convexity)
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageConfig {
    /// `S`
    pub stages: usize,
    /// Prox parameter; `None` picks [`default_gamma`].
    pub gamma: Option<f64>,
    pub eta0: f64,
    /// Problem, workers, batch, `beta`, compressor, variant and seeds. The
    /// schedule and iteration count are set per stage.
    pub base: RunConfig,
    /// Tolerance of the Moreau-gradient prox solves.
    pub prox_tolerance: f64,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            stages: 8,
            gamma: None,
            eta0: 1e-3,
            base: RunConfig::default(),
            prox_tolerance: PROX_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub s: usize,
    pub t_s: u64,
    pub eta_s: f64,
    /// `w̃_s`
    pub center: ParamVector,
    /// `w̃_{s+1}`, the uniform average of the stage iterates.
    pub next_center: ParamVector,
    /// `F(w̃_{s+1})`
    pub f_avg: f64,
    /// `‖∇F_γ(w̃_s)‖²`
    pub moreau_grad_sq: f64,
    /// `F_{s,γ}(w̃_{s+1}) − min F_{s,γ}`
    pub stage_suboptimality: f64,
    /// `(1+β)γ/(4S(S+1)) Σ_{j<S} (j+1)‖∇F_γ(w̃_j)‖²` with `S = s + 1`.
    pub weighted_avg: f64,
    pub run: RunSummary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StagewiseOutput {
    pub gamma: f64,
    pub reports: Vec<StageReport>,
    /// `w̃_S`
    pub final_point: ParamVector,
    /// `‖∇F_γ(w̃_S)‖²`
    pub final_moreau_grad_sq: f64,
    /// `max_s F(w̃_s)`, the empirical stand-in for the uniform bound `F`.
    pub max_center_objective: f64,
}

/// Generates the configured problem and runs from its initial point.
pub fn stagewise_run(config: &StageConfig) -> Result<StagewiseOutput> {
    let problem = make_problem(&config.base.problem)?;
    let w0 = problem.initial_point().clone();
    stagewise_run_with_oracle(config, &problem, w0)
}

pub fn stagewise_run_with_oracle(
    config: &StageConfig,
    oracle: &dyn Oracle,
    w0: ParamVector,
) -> Result<StagewiseOutput> {
    if config.stages < 1 {
        return Err(Error::invalid("stage count S must be >= 1"));
    }
    if !(config.eta0 > 0.0 && config.eta0.is_finite()) {
        return Err(Error::invalid(format!(
            "stagewise eta0 must be > 0 (got {})",
            config.eta0
        )));
    }
    let c = oracle.metadata().weak_convexity;
    let gamma = config.gamma.unwrap_or_else(|| default_gamma(c));
    if !(gamma > 0.0 && gamma.is_finite()) || (c > 0.0 && gamma * c >= 1.0) {
        return Err(Error::invalid(format!(
            "stagewise gamma must be in (0, 1/c) (got {gamma}, c = {c})"
        )));
    }
    let beta = config.base.beta;
    let tol = config.prox_tolerance;

    let mut center = w0;
    let mut reports = Vec::with_capacity(config.stages);
    let mut weighted_sum = 0.0;
    let mut max_center_objective = f64::NEG_INFINITY;
    let mut moreau = moreau_grad_estimate(oracle, &center, gamma, tol)?;
    for s in 0..config.stages {
        max_center_objective = max_center_objective.max(oracle.full_objective(&center));
        let eta_s = config.eta0 / (s + 1) as f64;
        let t_s = stage_length(gamma, eta_s);
        let phi = prox_objective(oracle, &center, gamma)?;
        let stage_config = RunConfig {
            schedule: ScheduleFamily::StageConstant { eta0: eta_s },
            iterations: t_s,
            run_seed: config.base.run_seed.wrapping_add((s as u64) << 40),
            tail_objective: false,
            ..config.base.clone()
        };
        let out = run_with_oracle(&stage_config, &phi, center.clone())?;
        let next = out
            .summary
            .iterate_average
            .clone()
            .ok_or(Error::NonFinite { t: 0, worker: None })?;
        next.ensure_finite(t_s, None)?;

        let moreau_grad_sq = moreau.norm * moreau.norm;
        weighted_sum += (s + 1) as f64 * moreau_grad_sq;
        let stages = (s + 1) as f64;
        let weighted_avg = (1.0 + beta) * gamma / (4.0 * stages * (stages + 1.0)) * weighted_sum;
        // The prox point at w̃_s is the exact minimizer of F_{s,γ}.
        let stage_suboptimality =
            phi.full_objective(&next) - phi.full_objective(&moreau.prox_point);

        let next_moreau = moreau_grad_estimate(oracle, &next, gamma, tol)?;
        reports.push(StageReport {
            s,
            t_s,
            eta_s,
            center: center.clone(),
            f_avg: oracle.full_objective(&next),
            next_center: next.clone(),
            moreau_grad_sq,
            stage_suboptimality,
            weighted_avg,
            run: out.summary,
        });
        center = next;
        moreau = next_moreau;
    }
    Ok(StagewiseOutput {
        gamma,
        reports,
        final_moreau_grad_sq: moreau.norm * moreau.norm,
        final_point: center,
        max_center_objective,
    })
}

/// `C = G√(2G²β²/(1−β)⁴ + 2U²) + G²/(2−2β)`.
pub fn one_stage_constant(g: f64, u: f64, beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "beta must be in [0,1) (got {beta})"
        )));
    }
    let om = 1.0 - beta;
    Ok(g * (2.0 * g * g * beta * beta / om.powi(4) + 2.0 * u * u).sqrt() + g * g / (2.0 * om))
}

/// `Ĝ = √(2G² + 4B²/γ²)`.
pub fn stage_gradient_bound(g: f64, b: f64, gamma: f64) -> f64 {
    (2.0 * g * g + 4.0 * b * b / (gamma * gamma)).sqrt()
}

/// `Ĉ`: [`one_stage_constant`] evaluated at `Ĝ`.
pub fn stagewise_constant(g: f64, b: f64, u: f64, gamma: f64, beta: f64) -> Result<f64> {
    one_stage_constant(stage_gradient_bound(g, b, gamma), u, beta)
}

/// `(F − F* + 3Ĉ eta0)/(S + 1)`.
pub fn stagewise_bound(f_upper: f64, f_star: f64, c_hat: f64, eta0: f64, stages: usize) -> f64 {
    (f_upper - f_star + 3.0 * c_hat * eta0) / (stages as f64 + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneStageReport {
    /// `φ(w̃⁺) − φ(w*_φ)`
    pub lhs: f64,
    /// `(1−β)/(2ηT)‖w̃ − w*_φ‖² + Cη`
    pub rhs: f64,
    pub constant: f64,
    /// `rhs − lhs`
    pub margin: f64,
}

/// Evaluates both sides of the one-stage bound for an averaged run of
/// `T` steps with constant step `eta` started at `start`.
#[allow(clippy::too_many_arguments)]
pub fn one_stage_check(
    phi: &dyn Oracle,
    start: &ParamVector,
    average: &ParamVector,
    w_star_phi: &ParamVector,
    eta: f64,
    beta: f64,
    horizon: u64,
    u: f64,
    g: f64,
) -> Result<OneStageReport> {
    if horizon == 0 || eta.is_nan() || eta <= 0.0 {
        return Err(Error::invalid("one-stage bound needs T >= 1 and eta > 0"));
    }
    let constant = one_stage_constant(g, u, beta)?;
    let lhs = phi.full_objective(average) - phi.full_objective(w_star_phi);
    let dist_sq = start.distance(w_star_phi).powi(2);
    let rhs = (1.0 - beta) / (2.0 * eta * horizon as f64) * dist_sq + constant * eta;
    Ok(OneStageReport {
        lhs,
        rhs,
        constant,
        margin: rhs - lhs,
    })
}
