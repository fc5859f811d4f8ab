//! The auxiliary sequence `z_t`, identity checks on the update rules, theory
//! constants and bounds, Moreau-envelope gradients, and dense reference runs.

mod prox;
mod theory;

pub use prox::{moreau_grad_estimate, MoreauEstimate, PROX_MAX_ITER, PROX_TOLERANCE};
pub use theory::{
    delta_fit, gamma_partial_sums, learning_rate_condition, momentum_bound, perturbation_constant,
    power_sum_asymptotic, rate_bound, zw_bound_check, zw_bound_rhs, DeltaFit, LearningRateReport,
    RateRegime, TheoryConstants, ZwBoundReport,
};

use crate::compress::CompressorSpec;
use crate::engine::{run, RunConfig, RunOutput, Variant};
use crate::error::{Error, Result};
use crate::vector::{norm_inf, ParamVector};

fn same_dims(d: usize, vectors: &[&ParamVector]) -> Result<()> {
    vectors.iter().try_for_each(|v| v.check_dim(d))
}

/// `z_t = w_t + rho_{t-1} g̃_{t-1} − eta_t ũ_t`.
pub fn build_z(
    w: &ParamVector,
    momentum_prev: &ParamVector,
    memory: &ParamVector,
    rho_prev: f64,
    eta: f64,
) -> Result<ParamVector> {
    same_dims(w.len(), &[momentum_prev, memory])?;
    let mut z = w.clone();
    z.axpy(rho_prev, momentum_prev);
    z.axpy(-eta, memory);
    Ok(z)
}

/// `‖z_{t+1} − z_t + (eta_t − rho_t) d_t − (eta_t − eta_{t+1}) ũ_{t+1}‖_∞`.
pub fn transform_residual(
    z: &ParamVector,
    z_next: &ParamVector,
    minibatch_gradient: &ParamVector,
    memory_next: &ParamVector,
    eta: f64,
    eta_next: f64,
    rho: f64,
) -> Result<f64> {
    same_dims(z.len(), &[z_next, minibatch_gradient, memory_next])?;
    let gamma = eta - rho;
    let alpha = eta - eta_next;
    let r: Vec<f64> = (0..z.len())
        .map(|j| z_next[j] - z[j] + gamma * minibatch_gradient[j] - alpha * memory_next[j])
        .collect();
    Ok(norm_inf(&r))
}

/// `‖(w_{t+1} − eta' ũ_{t+1}) − (w_t − eta_t (g̃_t + ũ_t))‖_∞`, where `eta'`
/// is `eta_t` for the plain memory and `eta_{t+1}` for the scaled one.
pub fn memory_residual(
    w: &ParamVector,
    w_next: &ParamVector,
    momentum: &ParamVector,
    memory: &ParamVector,
    memory_next: &ParamVector,
    eta: f64,
    eta_memory_next: f64,
) -> Result<f64> {
    same_dims(w.len(), &[w_next, momentum, memory, memory_next])?;
    let r: Vec<f64> = (0..w.len())
        .map(|j| {
            (w_next[j] - eta_memory_next * memory_next[j])
                - (w[j] - eta * (momentum[j] + memory[j]))
        })
        .collect();
    Ok(norm_inf(&r))
}

/// Runs the uncompressed baseline under the same seeds and schedule.
pub fn reference_run(config: &RunConfig) -> Result<RunOutput> {
    if config.variant == Variant::MemoryScaled {
        return Err(Error::invalid(
            "reference run needs a momentum variant, not memory_scaled",
        ));
    }
    let reference = RunConfig {
        variant: Variant::DenseDsgd,
        compressor: CompressorSpec::dense(),
        ..config.clone()
    };
    run(&reference)
}
