//! Moreau-envelope gradient `∇F_γ(w̃) = (w̃ − prox_{γF}(w̃)) / γ`.

use crate::error::{Error, Result};
use crate::problems::{Oracle, PhaseRetrieval};
use crate::vector::{dot, ParamVector};

pub const PROX_TOLERANCE: f64 = 1e-8;
pub const PROX_MAX_ITER: usize = 100_000;

/// Sweep cap for the dual coordinate ascent inside one prox-linear step.
const DUAL_MAX_SWEEPS: usize = 200_000;

#[derive(Clone, Debug, PartialEq)]
pub struct MoreauEstimate {
    /// `ŵ = argmin F(w') + ‖w' − w̃‖²/(2γ)`.
    pub prox_point: ParamVector,
    pub grad: ParamVector,
    pub norm: f64,
    pub iterations: usize,
}

/// Solves the proximal subproblem at `w_tilde` and returns `(w̃ − ŵ)/γ`.
///
/// Smooth objectives use full-gradient descent with step `1/(1/γ + L)`,
/// stopped at `‖∇F(w') + (w' − w̃)/γ‖ ≤ tol`. The phase-retrieval objective
/// uses a prox-linear (majorize-minimize) loop whose convex subproblems are
/// solved by dual coordinate ascent, stopped when `(1/γ + M)‖Δw'‖ ≤ tol`.
pub fn moreau_grad_estimate(
    oracle: &dyn Oracle,
    w_tilde: &ParamVector,
    gamma: f64,
    tol: f64,
) -> Result<MoreauEstimate> {
    w_tilde.check_dim(oracle.dim())?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "prox parameter gamma must be > 0 (got {gamma})"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid("prox tolerance must be > 0"));
    }
    let meta = oracle.metadata();
    if meta.weak_convexity > 0.0 && gamma * meta.weak_convexity >= 1.0 {
        return Err(Error::invalid(format!(
            "gamma must be < 1/c = {} for a strongly convex prox subproblem",
            1.0 / meta.weak_convexity
        )));
    }
    let (prox_point, iterations) = match (meta.smoothness, oracle.phase_retrieval()) {
        (Some(l), _) => prox_gradient_descent(oracle, w_tilde, gamma, l, tol)?,
        (None, Some(pr)) => prox_linear(pr, w_tilde, gamma, tol)?,
        (None, None) => {
            return Err(Error::invalid(
                "prox solve needs a smooth objective or phase retrieval",
            ))
        }
    };
    let mut grad = w_tilde.sub(&prox_point);
    grad.scale(1.0 / gamma);
    grad.ensure_finite(iterations as u64, None)?;
    let norm = grad.norm();
    Ok(MoreauEstimate {
        prox_point,
        grad,
        norm,
        iterations,
    })
}

fn prox_gradient_descent(
    oracle: &dyn Oracle,
    center: &ParamVector,
    gamma: f64,
    smoothness: f64,
    tol: f64,
) -> Result<(ParamVector, usize)> {
    let step = 1.0 / (1.0 / gamma + smoothness);
    let mut x = center.clone();
    let mut norm = f64::INFINITY;
    for it in 0..=PROX_MAX_ITER {
        let mut g = oracle.full_gradient(&x);
        g.axpy(1.0 / gamma, &x.sub(center));
        norm = g.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                t: it as u64,
                worker: None,
            });
        }
        if norm <= tol {
            return Ok((x, it));
        }
        x.axpy(-step, &g);
    }
    Err(Error::NotConverged {
        achieved: norm,
        iterations: PROX_MAX_ITER,
    })
}

/// Each step majorizes `|r_i(x)|` by `|r_i(x_k) + ∇r_i(x_k)ᵀ(x − x_k)| + ‖a_i‖²‖x − x_k‖²`
/// and minimizes the resulting strongly convex model
/// `(1/n)Σ|b_i + v_iᵀx| + (ρ/2)‖x − c‖²` through its box-constrained dual.
fn prox_linear(
    pr: &PhaseRetrieval,
    center: &ParamVector,
    gamma: f64,
    tol: f64,
) -> Result<(ParamVector, usize)> {
    let (n, d) = (pr.num_samples(), pr.dim());
    let row_sq: Vec<f64> = (0..n).map(|i| dot(pr.row(i), pr.row(i))).collect();
    let m = 2.0 * row_sq.iter().sum::<f64>() / n as f64;
    let rho = 1.0 / gamma + m;
    let scale = n as f64 * rho;

    let mut x = center.as_slice().to_vec();
    let mut lambda = vec![0.0; n];
    let mut v = vec![0.0; n * d];
    let mut b = vec![0.0; n];
    let mut v_sq = vec![0.0; n];
    let mut step_norm = f64::INFINITY;
    for it in 0..PROX_MAX_ITER {
        for i in 0..n {
            let a = pr.row(i);
            let ip = dot(a, &x);
            for (vj, aj) in v[i * d..(i + 1) * d].iter_mut().zip(a) {
                *vj = 2.0 * ip * aj;
            }
            b[i] = -ip * ip - pr.target(i);
            v_sq[i] = 4.0 * ip * ip * row_sq[i];
        }
        // Primal point for the warm-started dual.
        let mut y: Vec<f64> = (0..d)
            .map(|j| (center[j] / gamma + m * x[j]) / rho)
            .collect();
        for i in 0..n {
            if lambda[i] != 0.0 {
                let vi = &v[i * d..(i + 1) * d];
                y.iter_mut()
                    .zip(vi)
                    .for_each(|(yj, vj)| *yj -= lambda[i] * vj / scale);
            }
        }
        let inner_tol = 1e-3 * tol / rho;
        for _ in 0..DUAL_MAX_SWEEPS {
            let mut max_move: f64 = 0.0;
            for i in 0..n {
                if v_sq[i] == 0.0 {
                    continue;
                }
                let vi = &v[i * d..(i + 1) * d];
                let r = b[i] + dot(vi, &y);
                let updated = (lambda[i] + r * scale / v_sq[i]).clamp(-1.0, 1.0);
                let delta = updated - lambda[i];
                if delta != 0.0 {
                    y.iter_mut()
                        .zip(vi)
                        .for_each(|(yj, vj)| *yj -= delta * vj / scale);
                    lambda[i] = updated;
                    max_move = max_move.max(delta.abs() * v_sq[i].sqrt() / scale);
                }
            }
            if max_move <= inner_tol {
                break;
            }
        }
        step_norm = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if !step_norm.is_finite() {
            return Err(Error::NonFinite {
                t: it as u64,
                worker: None,
            });
        }
        x = y;
        if rho * step_norm <= tol {
            return Ok((ParamVector::from_vec_unchecked(x), it + 1));
        }
    }
    Err(Error::NotConverged {
        achieved: rho * step_norm,
        iterations: PROX_MAX_ITER,
    })
}
