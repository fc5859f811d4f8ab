//! Per-worker update rules.

use crate::error::{Error, Result};
use crate::vector::{ParamVector, SparseMask};

/// Which per-worker update rule the simulator applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Momentum buffer plus memory: send `m ⊙ (g + u)`, keep `(1 − m) ⊙ (g + u)`.
    Mdsgd,
    /// Vanilla SGD whose memory carries the learning rate, stored in the
    /// normalized form `v = u / eta_t`; requires `beta = 0`.
    MemoryScaled,
    /// `Mdsgd`, then the sent coordinates of the momentum buffer are zeroed.
    FactorMasking,
    /// Uncompressed baseline: every coordinate sent, no memory.
    DenseDsgd,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdsgd" => Ok(Variant::Mdsgd),
            "memory_scaled" => Ok(Variant::MemoryScaled),
            "factor_masking" => Ok(Variant::FactorMasking),
            "dense_dsgd" => Ok(Variant::DenseDsgd),
            other => Err(Error::invalid(format!(
                "unknown variant `{other}` (expected mdsgd, memory_scaled, factor_masking or dense_dsgd)"
            ))),
        }
    }
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Mdsgd => "mdsgd",
            Variant::MemoryScaled => "memory_scaled",
            Variant::FactorMasking => "factor_masking",
            Variant::DenseDsgd => "dense_dsgd",
        }
    }
}

/// Scalars shared by all workers within one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepContext {
    pub variant: Variant,
    pub beta: f64,
    /// Worker count `p`; raw gradients are scaled by `1/p`.
    pub workers: usize,
    pub eta: f64,
    /// `eta_{t+1}`, only read by `MemoryScaled`.
    pub eta_next: f64,
}

/// Momentum buffer `g_{t,k}` and memory `u_{t,k}` of one worker.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerState {
    pub worker_id: usize,
    pub momentum: ParamVector,
    pub memory: ParamVector,
}

/// What one worker contributes to an iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerUpdate {
    /// The communicated vector.
    pub send: ParamVector,
    /// Momentum `β g_{t-1,k} + grad/p` before any factor masking.
    pub momentum: ParamVector,
    /// Number of coordinates communicated.
    pub sent_coords: usize,
}

impl WorkerState {
    pub fn new(worker_id: usize, d: usize) -> Self {
        WorkerState {
            worker_id,
            momentum: ParamVector::zeros(d),
            memory: ParamVector::zeros(d),
        }
    }

    fn fresh_momentum(&self, grad: &ParamVector, ctx: &StepContext) -> ParamVector {
        let p = ctx.workers as f64;
        let beta = if ctx.variant == Variant::MemoryScaled {
            0.0
        } else {
            ctx.beta
        };
        let g: Vec<f64> = self
            .momentum
            .iter()
            .zip(grad.iter())
            .map(|(prev, gr)| beta * prev + gr / p)
            .collect();
        ParamVector::from_vec_unchecked(g)
    }

    /// The vector a mask is selected from: `g_{t,k} + u_{t,k}`.
    pub fn candidate(&self, grad: &ParamVector, ctx: &StepContext) -> Result<ParamVector> {
        grad.check_dim(self.momentum.len())?;
        let g = self.fresh_momentum(grad, ctx);
        Ok(match ctx.variant {
            Variant::DenseDsgd => g,
            _ => g.add(&self.memory),
        })
    }

    /// Applies one update with a given mask. `grad` is the worker's raw
    /// mini-batch average gradient.
    pub fn step(
        &mut self,
        grad: &ParamVector,
        mask: &SparseMask,
        ctx: &StepContext,
    ) -> Result<WorkerUpdate> {
        let d = self.momentum.len();
        grad.check_dim(d)?;
        if mask.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: mask.dim(),
            });
        }
        if ctx.variant == Variant::MemoryScaled && ctx.beta != 0.0 {
            return Err(Error::invalid("memory_scaled variant requires beta = 0"));
        }
        let g = self.fresh_momentum(grad, ctx);
        let update = match ctx.variant {
            Variant::DenseDsgd => {
                let update = WorkerUpdate {
                    send: g.clone(),
                    momentum: g.clone(),
                    sent_coords: d,
                };
                self.momentum = g;
                update
            }
            Variant::Mdsgd | Variant::FactorMasking => {
                let v = g.add(&self.memory);
                let send = mask.masked(&v);
                self.memory = mask.complement_masked(&v);
                self.momentum = if ctx.variant == Variant::FactorMasking {
                    mask.complement_masked(&g)
                } else {
                    g.clone()
                };
                WorkerUpdate {
                    send,
                    momentum: g,
                    sent_coords: mask.cardinality(),
                }
            }
            Variant::MemoryScaled => {
                let v = g.add(&self.memory);
                let send = mask.masked(&v);
                let mut memory = mask.complement_masked(&v);
                memory.scale(ctx.eta / ctx.eta_next);
                self.memory = memory;
                self.momentum = g.clone();
                WorkerUpdate {
                    send,
                    momentum: g,
                    sent_coords: mask.cardinality(),
                }
            }
        };
        Ok(update)
    }
}

/// Pure form of [`WorkerState::step`]: returns the update and the new state.
pub fn worker_step(
    state: &WorkerState,
    grad: &ParamVector,
    mask: &SparseMask,
    ctx: &StepContext,
) -> Result<(WorkerUpdate, WorkerState)> {
    let mut next = state.clone();
    let update = next.step(grad, mask, ctx)?;
    Ok((update, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_vec(v.to_vec()).unwrap()
    }

    fn ctx(variant: Variant, beta: f64, workers: usize) -> StepContext {
        StepContext {
            variant,
            beta,
            workers,
            eta: 0.1,
            eta_next: 0.1,
        }
    }

    #[test]
    fn one_over_p_scaling() {
        let c = ctx(Variant::Mdsgd, 0.0, 2);
        let dense = SparseMask::dense(1);
        let (a, _) = worker_step(&WorkerState::new(0, 1), &pv(&[2.0]), &dense, &c).unwrap();
        let (b, _) = worker_step(&WorkerState::new(1, 1), &pv(&[4.0]), &dense, &c).unwrap();
        assert_eq!(a.send.as_slice(), &[1.0]);
        assert_eq!(b.send.as_slice(), &[2.0]);
        assert_eq!(a.send.add(&b.send).as_slice(), &[3.0]);
    }

    #[test]
    fn momentum_recursion() {
        let mut s = WorkerState::new(0, 1);
        s.momentum = pv(&[2.0]);
        // grad/p = [1] with p = 1
        let (u, next) = worker_step(
            &s,
            &pv(&[1.0]),
            &SparseMask::dense(1),
            &ctx(Variant::Mdsgd, 0.5, 1),
        )
        .unwrap();
        assert_eq!(u.send.as_slice(), &[2.0]);
        assert_eq!(next.memory.as_slice(), &[0.0]);
        assert_eq!(next.momentum.as_slice(), &[2.0]);
    }

    #[test]
    fn memory_keeps_unsent_coordinates() {
        let s = WorkerState::new(0, 3);
        let mask = SparseMask::new(vec![1], 3).unwrap();
        let c = ctx(Variant::Mdsgd, 0.9, 1);
        let (u, next) = worker_step(&s, &pv(&[1.0, -3.0, 2.0]), &mask, &c).unwrap();
        assert_eq!(u.send.as_slice(), &[0.0, -3.0, 0.0]);
        assert_eq!(next.memory.as_slice(), &[1.0, 0.0, 2.0]);
        assert_eq!(u.sent_coords, 1);
        // Second step: memory is added back before masking.
        let (u2, next2) = worker_step(&next, &pv(&[0.0, 0.0, 0.0]), &mask, &c).unwrap();
        assert_eq!(u2.send.as_slice(), &[0.0, -2.7, 0.0]);
        assert_eq!(next2.memory.as_slice(), &[1.0 + 0.9, 0.0, 2.0 + 1.8]);
    }

    #[test]
    fn factor_masking_clears_sent_momentum() {
        let mut s = WorkerState::new(0, 2);
        s.momentum = pv(&[1.0, 1.0]);
        let c = ctx(Variant::FactorMasking, 0.5, 1);
        let (_, next) = worker_step(&s, &pv(&[1.0, 1.0]), &SparseMask::dense(2), &c).unwrap();
        assert_eq!(next.momentum, ParamVector::zeros(2));
        let (u, next) = worker_step(
            &s,
            &pv(&[1.0, 1.0]),
            &SparseMask::new(vec![0], 2).unwrap(),
            &c,
        )
        .unwrap();
        assert_eq!(next.momentum.as_slice(), &[0.0, 1.5]);
        assert_eq!(u.momentum.as_slice(), &[1.5, 1.5]);
    }

    #[test]
    fn dense_dsgd_ignores_mask_and_memory() {
        let mut s = WorkerState::new(0, 2);
        s.momentum = pv(&[2.0, 0.0]);
        let c = ctx(Variant::DenseDsgd, 0.5, 2);
        let (u, next) = worker_step(
            &s,
            &pv(&[4.0, 2.0]),
            &SparseMask::new(vec![0], 2).unwrap(),
            &c,
        )
        .unwrap();
        assert_eq!(u.send.as_slice(), &[3.0, 1.0]);
        assert_eq!(next.memory, ParamVector::zeros(2));
    }

    #[test]
    fn memory_scaled_rescales_memory() {
        let s = WorkerState::new(0, 2);
        let c = StepContext {
            variant: Variant::MemoryScaled,
            beta: 0.0,
            workers: 1,
            eta: 0.2,
            eta_next: 0.1,
        };
        let mask = SparseMask::new(vec![0], 2).unwrap();
        let (u, next) = worker_step(&s, &pv(&[1.0, 3.0]), &mask, &c).unwrap();
        assert_eq!(u.send.as_slice(), &[1.0, 0.0]);
        assert_eq!(next.memory.as_slice(), &[0.0, 6.0]);
        let bad = StepContext { beta: 0.5, ..c };
        assert!(worker_step(&s, &pv(&[1.0, 3.0]), &mask, &bad).is_err());
    }

    #[test]
    fn dimension_errors() {
        let s = WorkerState::new(0, 2);
        let c = ctx(Variant::Mdsgd, 0.0, 1);
        assert!(worker_step(&s, &pv(&[1.0]), &SparseMask::dense(2), &c).is_err());
        assert!(worker_step(&s, &pv(&[1.0, 2.0]), &SparseMask::dense(3), &c).is_err());
    }
}
