//! Closed-form `(eta_t, rho_t, gamma_t)` schedules.
//!
//! `rho_t` is the momentum-compensation coefficient satisfying
//! `beta*rho_t = beta*eta_t + rho_{t-1}`; `gamma_t = eta_t - rho_t` is the
//! step the auxiliary sequence `z_t` effectively takes. Decaying families use
//! the shifted index `s = t + 1` so that `t = 0` is well defined.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleFamily {
    /// `eta_t = eta0 / sqrt(horizon)`.
    Constant { eta0: f64, horizon: u64 },
    /// `eta_t = eta0 (1/s^alpha − beta/(s+1)^alpha)`, `gamma_t = eta0/s^alpha`.
    Power { eta0: f64, alpha: f64 },
    /// `eta_t = 1/(mu s) − beta/(mu (s+1))`, `gamma_t = 1/(mu s)`.
    StrongConvex { mu: f64 },
    /// `eta_t = 1/sqrt(s) − beta/sqrt(s+1)`, `gamma_t = 1/sqrt(s)`.
    ConvexSqrt,
    /// `eta_t = eta0` (one stage of the stagewise driver).
    StageConstant { eta0: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleValues {
    pub eta: f64,
    pub rho: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    family: ScheduleFamily,
    beta: f64,
}

impl Schedule {
    pub fn new(family: ScheduleFamily, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid(format!(
                "beta must be in [0,1) (got {beta})"
            )));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be > 0 (got {v})")))
            }
        };
        match family {
            ScheduleFamily::Constant { eta0, horizon } => {
                positive("eta0", eta0)?;
                if horizon == 0 {
                    return Err(Error::invalid("constant schedule horizon must be >= 1"));
                }
            }
            ScheduleFamily::Power { eta0, alpha } => {
                positive("eta0", eta0)?;
                if !(0.5..=1.0).contains(&alpha) {
                    return Err(Error::invalid(format!(
                        "alpha must be in [0.5, 1] (got {alpha})"
                    )));
                }
            }
            ScheduleFamily::StrongConvex { mu } => positive("mu", mu)?,
            ScheduleFamily::ConvexSqrt => {}
            ScheduleFamily::StageConstant { eta0 } => positive("eta0", eta0)?,
        }
        Ok(Schedule { family, beta })
    }

    pub fn family(&self) -> ScheduleFamily {
        self.family
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_constant(&self) -> bool {
        matches!(
            self.family,
            ScheduleFamily::Constant { .. } | ScheduleFamily::StageConstant { .. }
        )
    }

    pub fn eval(&self, t: u64) -> ScheduleValues {
        let beta = self.beta;
        let s = (t + 1) as f64;
        let (eta, rho) = match self.family {
            ScheduleFamily::Constant { eta0, horizon } => {
                let eta = eta0 / (horizon as f64).sqrt();
                (eta, beta * eta / (beta - 1.0))
            }
            ScheduleFamily::StageConstant { eta0 } => (eta0, beta * eta0 / (beta - 1.0)),
            ScheduleFamily::Power { eta0, alpha } => {
                let next = eta0 / (s + 1.0).powf(alpha);
                (eta0 / s.powf(alpha) - beta * next, -beta * next)
            }
            ScheduleFamily::StrongConvex { mu } => {
                let next = 1.0 / (mu * (s + 1.0));
                (1.0 / (mu * s) - beta * next, -beta * next)
            }
            ScheduleFamily::ConvexSqrt => {
                let next = 1.0 / (s + 1.0).sqrt();
                (1.0 / s.sqrt() - beta * next, -beta * next)
            }
        };
        ScheduleValues {
            eta,
            rho,
            gamma: eta - rho,
        }
    }

    /// `rho_{t-1}`, with `rho_{-1} = 0` (it only multiplies `g_{-1} = 0`).
    pub fn rho_prev(&self, t: u64) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.eval(t - 1).rho
        }
    }
}
