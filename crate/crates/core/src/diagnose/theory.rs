//! Theory constants, rate bounds and the learning-rate condition.

use crate::engine::{Schedule, ScheduleFamily};
use crate::error::{Error, Result};
use crate::metrics::MetricsRow;

/// Constants appearing in the convergence bounds. Empirical runs fill them
/// with observed maxima.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TheoryConstants {
    /// `E‖z_t − w_t‖² ≤ A γ_t²`
    pub a: f64,
    /// `E‖z_t − w*‖² ≤ B²`
    pub b: f64,
    /// `E‖ũ_t‖² ≤ U²`
    pub u: f64,
    /// `δ γ_t² ≤ Q`
    pub q: f64,
    /// `E‖d_t‖² ≤ D²`
    pub d: f64,
    /// `E‖e_t‖² ≤ E²`
    pub e: f64,
    /// `|α_t| ≤ δ γ_t²`
    pub delta: f64,
    pub g: f64,
    pub l: f64,
    pub mu: f64,
    pub c: f64,
    /// Uniform bound on `F(w̃_s)` across stages.
    pub f_upper: f64,
    pub beta: f64,
    /// `‖w_0 − w*‖²`, used by the convex-case bound.
    pub initial_dist_sq: f64,
    /// `F(w_0) − F(w*)`, used by the non-convex bound.
    pub initial_gap: f64,
    /// Constant step `eta`, used by the non-convex bound.
    pub eta: f64,
}

impl TheoryConstants {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::invalid(format!(
                "beta must be in [0,1) (got {})",
                self.beta
            )));
        }
        let fields = [
            ("A", self.a),
            ("B", self.b),
            ("U", self.u),
            ("Q", self.q),
            ("D", self.d),
            ("E", self.e),
            ("delta", self.delta),
            ("G", self.g),
            ("L", self.l),
            ("mu", self.mu),
            ("c", self.c),
            ("initial_dist_sq", self.initial_dist_sq),
            ("initial_gap", self.initial_gap),
            ("eta", self.eta),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0 (got {v})"
                )));
            }
        }
        Ok(())
    }

    /// `√(2G²β²/(1−β)² + 2U²)`, shared by the convex-case constants.
    fn momentum_memory_term(&self) -> f64 {
        let om = 1.0 - self.beta;
        (2.0 * self.g * self.g * self.beta * self.beta / (om * om) + 2.0 * self.u * self.u).sqrt()
    }
}

/// `C = L G √A + G E δ + L (D² + E² Q δ)`.
pub fn perturbation_constant(k: &TheoryConstants) -> Result<f64> {
    k.validate()?;
    Ok(
        k.l * k.g * k.a.sqrt()
            + k.g * k.e * k.delta
            + k.l * (k.d * k.d + k.e * k.e * k.q * k.delta),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateRegime {
    /// Strongly convex: tail-averaged suboptimality.
    StronglyConvex,
    /// Convex: `1/√(t+1)`-weighted average suboptimality.
    Convex,
    /// Smooth non-convex: average squared gradient norm.
    NonConvex,
}

/// Evaluates a rate bound after `horizon` iterations. Returns `(C, bound)`.
///
/// - `StronglyConvex`: `(3C + 2G√(2G²β²/(1−β)² + 2U²)) / (μT)` with
///   `C = max{4G², 2LB√(…) + 2μUB + 2G² + 2U²}`.
/// - `Convex`: `(‖w_0 − w*‖² + C Σ 1/(t+1)) / Σ 2/√(t+1)` with
///   `C = 2G√(…) + 2UB + 2G² + 2U²`.
/// - `NonConvex`: `(1−β) ((F(w_0) − F*)/(Tη) + Cη)` with
///   `C = LG²β/(1−β)³ + LGU/(1−β) + LG²/(2(1−β)²)`.
pub fn rate_bound(kind: RateRegime, k: &TheoryConstants, horizon: u64) -> Result<(f64, f64)> {
    k.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("bound horizon T must be >= 1"));
    }
    let t = horizon as f64;
    let (g, u, b, l, mu, beta) = (k.g, k.u, k.b, k.l, k.mu, k.beta);
    let om = 1.0 - beta;
    let root = k.momentum_memory_term();
    Ok(match kind {
        RateRegime::StronglyConvex => {
            if mu <= 0.0 {
                return Err(Error::invalid("strongly convex bound needs mu > 0"));
            }
            let c = (4.0 * g * g)
                .max(2.0 * l * b * root + 2.0 * mu * u * b + 2.0 * g * g + 2.0 * u * u);
            (c, (3.0 * c + 2.0 * g * root) / (mu * t))
        }
        RateRegime::Convex => {
            let c = 2.0 * g * root + 2.0 * u * b + 2.0 * g * g + 2.0 * u * u;
            let (harmonic, weights) = (0..horizon).fold((0.0, 0.0), |(h, w), s| {
                let s1 = (s + 1) as f64;
                (h + 1.0 / s1, w + 2.0 / s1.sqrt())
            });
            (c, (k.initial_dist_sq + c * harmonic) / weights)
        }
        RateRegime::NonConvex => {
            if k.eta <= 0.0 {
                return Err(Error::invalid("non-convex bound needs eta > 0"));
            }
            let c = l * g * g * beta / om.powi(3) + l * g * u / om + l * g * g / (2.0 * om * om);
            (c, om * (k.initial_gap / (t * k.eta) + c * k.eta))
        }
    })
}

/// `G / (1 − β)`: pathwise bound on `‖g̃_t‖` when every sample gradient is
/// bounded by `G`.
pub fn momentum_bound(g: f64, beta: f64) -> f64 {
    g / (1.0 - beta)
}

/// `2G²ρ_{t−1}²/(1−β)² + 2U²η_t²`.
pub fn zw_bound_rhs(g: f64, u: f64, beta: f64, rho_prev: f64, eta: f64) -> f64 {
    let om = 1.0 - beta;
    2.0 * g * g * rho_prev * rho_prev / (om * om) + 2.0 * u * u * eta * eta
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZwBoundReport {
    pub checked: usize,
    /// Iterations at which `‖z_t − w_t‖² > rhs`.
    pub violations: Vec<u64>,
    /// Largest `‖z_t − w_t‖² / rhs` over rows with a positive right side.
    pub max_ratio: f64,
}

/// Checks `‖z_t − w_t‖² ≤ 2G²ρ_{t−1}²/(1−β)² + 2U²η_t²` on every row.
pub fn zw_bound_check(rows: &[MetricsRow], schedule: &Schedule, g: f64, u: f64) -> ZwBoundReport {
    let beta = schedule.beta();
    let mut report = ZwBoundReport {
        checked: 0,
        violations: Vec::new(),
        max_ratio: 0.0,
    };
    for row in rows {
        let lhs = row.zw_dist * row.zw_dist;
        let rhs = zw_bound_rhs(g, u, beta, schedule.rho_prev(row.t), row.eta);
        report.checked += 1;
        if rhs > 0.0 {
            report.max_ratio = report.max_ratio.max(lhs / rhs);
        }
        if lhs > rhs * (1.0 + 1e-12) {
            report.violations.push(row.t);
        }
    }
    report
}

/// `(Σ_{t<T} γ_t, Σ_{t<T} γ_t²)`, summed in order.
pub fn gamma_partial_sums(schedule: &Schedule, horizon: u64) -> (f64, f64) {
    (0..horizon).fold((0.0, 0.0), |(s1, s2), t| {
        let g = schedule.eval(t).gamma;
        (s1 + g, s2 + g * g)
    })
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Closed-form approximation of `Σ_{s=1}^{T} s^{−a}`: the integral plus the
/// first Euler–Maclaurin corrections (absolute error below `a(a+1)(a+2)/720`).
pub fn power_sum_asymptotic(a: f64, horizon: u64) -> f64 {
    let t = horizon as f64;
    if horizon == 0 {
        return 0.0;
    }
    if (a - 1.0).abs() < 1e-15 {
        return t.ln() + EULER_GAMMA + 1.0 / (2.0 * t) - 1.0 / (12.0 * t * t);
    }
    let integral = (t.powf(1.0 - a) - 1.0) / (1.0 - a);
    integral + (1.0 + t.powf(-a)) / 2.0 + a * (1.0 - t.powf(-a - 1.0)) / 12.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRateReport {
    pub horizon: u64,
    pub sum_gamma: f64,
    pub sum_gamma_sq: f64,
    /// `Σγ² / Σγ`
    pub ratio: f64,
    /// Closed-form predictions of the two sums.
    pub predicted_sum_gamma: f64,
    pub predicted_sum_gamma_sq: f64,
    /// Largest relative gap between the computed and predicted sums.
    pub max_relative_gap: f64,
}

/// Partial sums of `γ_t` and `γ_t²` at `horizon` alongside their
/// closed-form asymptotics. Every family has `γ_t = c/s^a` for some `c, a`
/// (`a = 0` for the constant ones).
pub fn learning_rate_condition(schedule: &Schedule, horizon: u64) -> LearningRateReport {
    let (scale, a) = match schedule.family() {
        ScheduleFamily::Power { eta0, alpha } => (eta0, alpha),
        ScheduleFamily::StrongConvex { mu } => (1.0 / mu, 1.0),
        ScheduleFamily::ConvexSqrt => (1.0, 0.5),
        ScheduleFamily::Constant { .. } | ScheduleFamily::StageConstant { .. } => {
            (schedule.eval(0).gamma, 0.0)
        }
    };
    let (sum_gamma, sum_gamma_sq) = gamma_partial_sums(schedule, horizon);
    let predicted_sum_gamma = scale * power_sum_asymptotic(a, horizon);
    let predicted_sum_gamma_sq = scale * scale * power_sum_asymptotic(2.0 * a, horizon);
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE);
    LearningRateReport {
        horizon,
        sum_gamma,
        sum_gamma_sq,
        ratio: sum_gamma_sq / sum_gamma,
        predicted_sum_gamma,
        predicted_sum_gamma_sq,
        max_relative_gap: rel(sum_gamma, predicted_sum_gamma)
            .max(rel(sum_gamma_sq, predicted_sum_gamma_sq)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaFit {
    /// Smallest `δ` with `|α_t| ≤ δ γ_t²` for all `t < T`.
    pub delta: f64,
    /// `max_t δ γ_t²`, the matching `Q`.
    pub q: f64,
}

/// Fits `δ` in `|η_t − η_{t+1}| ≤ δ γ_t²` over `t < horizon`.
pub fn delta_fit(schedule: &Schedule, horizon: u64) -> DeltaFit {
    let mut delta: f64 = 0.0;
    let mut max_gamma_sq: f64 = 0.0;
    for t in 0..horizon {
        let v = schedule.eval(t);
        let alpha = (v.eta - schedule.eval(t + 1).eta).abs();
        let g2 = v.gamma * v.gamma;
        delta = delta.max(alpha / g2);
        max_gamma_sq = max_gamma_sq.max(g2);
    }
    DeltaFit {
        delta,
        q: delta * max_gamma_sq,
    }
}
