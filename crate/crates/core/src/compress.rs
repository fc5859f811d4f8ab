//! Mask strategies for sparse communication and the memory-norm bound.

use std::cmp::Ordering;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::{ParamVector, SparseMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompressorKind {
    Dense,
    TopK,
    RandomK,
}

impl std::str::FromStr for CompressorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(CompressorKind::Dense),
            "top_k" => Ok(CompressorKind::TopK),
            "random_k" => Ok(CompressorKind::RandomK),
            other => Err(Error::invalid(format!(
                "unknown compressor `{other}` (expected dense, top_k or random_k)"
            ))),
        }
    }
}

impl CompressorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CompressorKind::Dense => "dense",
            CompressorKind::TopK => "top_k",
            CompressorKind::RandomK => "random_k",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompressorSpec {
    pub kind: CompressorKind,
    /// Coordinates sent per worker per step; ignored for `Dense`.
    pub q: usize,
    /// For `RandomK`: draw one mask per step from a stream shared by all
    /// workers instead of one mask per worker.
    pub shared_mask: bool,
}

impl CompressorSpec {
    pub fn dense() -> Self {
        CompressorSpec {
            kind: CompressorKind::Dense,
            q: 0,
            shared_mask: false,
        }
    }

    pub fn top_k(q: usize) -> Self {
        CompressorSpec {
            kind: CompressorKind::TopK,
            q,
            shared_mask: false,
        }
    }

    pub fn random_k(q: usize) -> Self {
        CompressorSpec {
            kind: CompressorKind::RandomK,
            q,
            shared_mask: true,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.kind != CompressorKind::Dense {
            check_q(d, self.q)?;
        }
        Ok(())
    }

    /// Effective number of coordinates per mask.
    pub fn cardinality(&self, d: usize) -> usize {
        match self.kind {
            CompressorKind::Dense => d,
            _ => self.q,
        }
    }
}

fn check_q(d: usize, q: usize) -> Result<()> {
    if q < 1 || q > d {
        Err(Error::invalid(format!("q must be in [1, {d}] (got {q})")))
    } else {
        Ok(())
    }
}

/// Selects the `q` coordinates of largest magnitude; ties go to the lower
/// index.
pub fn top_k_mask(v: &ParamVector, q: usize) -> Result<SparseMask> {
    let d = v.len();
    check_q(d, q)?;
    let x = v.as_slice();
    let mut idx: Vec<usize> = (0..d).collect();
    let by_priority = |&a: &usize, &b: &usize| {
        x[b].abs()
            .partial_cmp(&x[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    };
    if q < d {
        idx.select_nth_unstable_by(q - 1, by_priority);
        idx.truncate(q);
    }
    idx.sort_unstable();
    Ok(SparseMask::from_sorted_unchecked(idx, d))
}

/// Uniformly random `q`-subset of `[0, d)` drawn from `stream`.
pub fn random_k_mask(stream: &mut RngStream, d: usize, q: usize) -> Result<SparseMask> {
    check_q(d, q)?;
    let mut idx = sample(stream, d, q).into_vec();
    idx.sort_unstable();
    Ok(SparseMask::from_sorted_unchecked(idx, d))
}

/// Splits `v` into the communicated part `m ⊙ v` and the residual
/// `(1 − m) ⊙ v`; their sum is `v` exactly.
pub fn apply_mask(mask: &SparseMask, v: &ParamVector) -> Result<(ParamVector, ParamVector)> {
    v.check_dim(mask.dim())?;
    Ok((mask.masked(v), mask.complement_masked(v)))
}

/// Bound on `E‖ũ_t‖²` for random or top-k masks of cardinality `q`:
/// `2(d−q)(2d+q)G² / ((1−β)² q²)`. It does not depend on the worker count.
pub fn memory_norm_bound(d: usize, q: usize, gradient_bound: f64, beta: f64) -> Result<f64> {
    check_q(d, q)?;
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "beta must be in [0,1) (got {beta})"
        )));
    }
    if !(gradient_bound > 0.0 && gradient_bound.is_finite()) {
        return Err(Error::invalid(format!(
            "G must be > 0 (got {gradient_bound})"
        )));
    }
    let (d, q) = (d as f64, q as f64);
    let one_minus = 1.0 - beta;
    Ok(
        2.0 * (d - q) * (2.0 * d + q) * gradient_bound * gradient_bound
            / (one_minus * one_minus * q * q),
    )
}
