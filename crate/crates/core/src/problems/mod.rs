//! Synthetic finite-sum objectives `F(w) = (1/n) Σ f(w; ζ_i)` with
//! stochastic-gradient oracles and curvature metadata.

mod logistic;
mod phaseret;
mod quadratic;

pub use logistic::Logistic;
pub use phaseret::PhaseRetrieval;
pub use quadratic::Quadratic;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::data_stream;
use crate::vector::ParamVector;

// Data-stream domains.
const DOMAIN_GRADIENT_BOUND: u64 = 100;
pub(crate) const DOMAIN_INITIAL_POINT: u64 = 101;

/// Number of random points used to measure `G_est`.
pub const GRADIENT_BOUND_SAMPLES: usize = 1000;

/// Tolerance of the deterministic full-gradient solve that locates `w_star`
/// when no closed form exists.
pub const OPTIMUM_TOLERANCE: f64 = 1e-10;

/// Per-sample loss and gradient access plus the derived finite-sum operations.
///
/// Implementations must be immutable after construction; the engine shares one
/// oracle across worker threads.
pub trait Oracle: Send + Sync {
    fn dim(&self) -> usize;

    fn num_samples(&self) -> usize;

    fn sample_loss(&self, w: &[f64], i: usize) -> f64;

    /// `out += ∇f(w; ζ_i)`.
    fn accumulate_sample_gradient(&self, w: &[f64], i: usize, out: &mut [f64]);

    fn metadata(&self) -> &ProblemMetadata;

    /// Structured access for solvers that exploit the phase-retrieval form.
    fn phase_retrieval(&self) -> Option<&PhaseRetrieval> {
        None
    }

    fn full_objective(&self, w: &ParamVector) -> f64 {
        let n = self.num_samples();
        (0..n)
            .map(|i| self.sample_loss(w.as_slice(), i))
            .sum::<f64>()
            / n as f64
    }

    fn full_gradient(&self, w: &ParamVector) -> ParamVector {
        let n = self.num_samples();
        let mut out = vec![0.0; self.dim()];
        for i in 0..n {
            self.accumulate_sample_gradient(w.as_slice(), i, &mut out);
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        ParamVector::from_vec_unchecked(out)
    }

    /// Mini-batch average gradient `(1/|B|) Σ_{i∈B} ∇f(w; ζ_i)`.
    fn stochastic_gradient(&self, w: &ParamVector, batch: &[usize]) -> Result<ParamVector> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        w.check_dim(self.dim())?;
        let n = self.num_samples();
        if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!(
                "batch index {bad} out of range [0, {n})"
            )));
        }
        let mut out = vec![0.0; self.dim()];
        for &i in batch {
            self.accumulate_sample_gradient(w.as_slice(), i, &mut out);
        }
        out.iter_mut().for_each(|v| *v /= batch.len() as f64);
        Ok(ParamVector::from_vec_unchecked(out))
    }

    fn batch_objective(&self, w: &ParamVector, batch: &[usize]) -> f64 {
        batch
            .iter()
            .map(|&i| self.sample_loss(w.as_slice(), i))
            .sum::<f64>()
            / batch.len() as f64
    }

    fn sample_gradient(&self, w: &ParamVector, i: usize) -> ParamVector {
        let mut out = vec![0.0; self.dim()];
        self.accumulate_sample_gradient(w.as_slice(), i, &mut out);
        ParamVector::from_vec_unchecked(out)
    }
}

/// Curvature and optimum information attached to an objective.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemMetadata {
    pub name: String,
    /// Smoothness constant `L`; `None` for non-smooth objectives.
    pub smoothness: Option<f64>,
    /// Strong-convexity modulus `mu` (0 when not strongly convex).
    pub strong_convexity: f64,
    /// Weak-convexity modulus `c` (0 for convex objectives).
    pub weak_convexity: f64,
    /// Measured stochastic-gradient bound `G_est` on the run domain.
    pub gradient_bound: Option<f64>,
    pub w_star: Option<ParamVector>,
    pub f_star: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemName {
    Quadratic,
    Logistic,
    PhaseRetrieval,
}

impl std::str::FromStr for ProblemName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ProblemName::Quadratic),
            "logistic" => Ok(ProblemName::Logistic),
            "phaseret" => Ok(ProblemName::PhaseRetrieval),
            other => Err(Error::UnknownProblem(other.to_string())),
        }
    }
}

impl ProblemName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemName::Quadratic => "quadratic",
            ProblemName::Logistic => "logistic",
            ProblemName::PhaseRetrieval => "phaseret",
        }
    }
}

/// Recipe for a synthetic problem; all data is generated from `data_seed`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub d: usize,
    pub n: usize,
    pub data_seed: u64,
    /// Quadratic: spread of the centers `ζ_i`; logistic: label-flip noise on
    /// the margin; phaseret: additive noise on the measurements.
    pub noise: f64,
    /// Quadratic: smallest curvature of the diagonal `Λ`.
    pub mu: f64,
    /// Quadratic: largest curvature of the diagonal `Λ`.
    pub smoothness: f64,
    /// Logistic: ℓ2 coefficient.
    pub l2: f64,
    /// Phaseret: start at `w♮ + r·u` for a random unit `u` instead of a
    /// random unit vector.
    pub init_radius: Option<f64>,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            name: "quadratic".into(),
            d: 10,
            n: 100,
            data_seed: 0,
            noise: 0.1,
            mu: 1.0,
            smoothness: 1.0,
            l2: 0.1,
            init_radius: None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum ProblemKind {
    Quadratic(Quadratic),
    Logistic(Logistic),
    PhaseRetrieval(PhaseRetrieval),
}

/// A generated problem instance together with its metadata and start point.
#[derive(Clone, Debug)]
pub struct Problem {
    kind: ProblemKind,
    meta: ProblemMetadata,
    initial: ParamVector,
}

pub fn make_problem(spec: &ProblemSpec) -> Result<Problem> {
    let name: ProblemName = spec.name.parse()?;
    if spec.d < 1 || spec.n < 1 {
        return Err(Error::invalid(format!(
            "problem needs d >= 1 and n >= 1 (got d={}, n={})",
            spec.d, spec.n
        )));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::invalid("noise must be finite and >= 0"));
    }
    let kind = match name {
        ProblemName::Quadratic => ProblemKind::Quadratic(Quadratic::generate(spec)?),
        ProblemName::Logistic => ProblemKind::Logistic(Logistic::generate(spec)?),
        ProblemName::PhaseRetrieval => ProblemKind::PhaseRetrieval(PhaseRetrieval::generate(spec)),
    };
    if let Some(r) = spec.init_radius {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::invalid(format!(
                "init_radius must be finite and >= 0 (got {r})"
            )));
        }
        if name != ProblemName::PhaseRetrieval {
            return Err(Error::invalid("init_radius only applies to phaseret"));
        }
    }
    let initial = match &kind {
        ProblemKind::PhaseRetrieval(pr) => {
            let u = random_unit_vector(spec.d, spec.data_seed);
            match (spec.init_radius, pr.planted()) {
                (Some(r), Some(planted)) => ParamVector::from_vec(
                    planted
                        .iter()
                        .zip(u.iter())
                        .map(|(a, b)| a + r * b)
                        .collect(),
                )?,
                _ => u,
            }
        }
        _ => ParamVector::zeros(spec.d),
    };
    Problem::assemble(kind, initial, spec.data_seed)
}

impl Problem {
    /// Builds a problem from explicit data, computing the metadata (including
    /// `G_est` around `initial`).
    pub fn from_kind(kind: ProblemKind, initial: ParamVector, seed: u64) -> Result<Self> {
        initial.check_dim(kind_dim(&kind))?;
        Problem::assemble(kind, initial, seed)
    }

    fn assemble(kind: ProblemKind, initial: ParamVector, seed: u64) -> Result<Self> {
        let mut meta = match &kind {
            ProblemKind::Quadratic(q) => q.metadata(),
            ProblemKind::Logistic(l) => l.metadata()?,
            ProblemKind::PhaseRetrieval(p) => p.metadata(),
        };
        let mut problem = Problem {
            kind,
            meta: meta.clone(),
            initial,
        };
        let center = meta
            .w_star
            .clone()
            .unwrap_or_else(|| problem.initial.clone());
        let mut radius = 2.0 * problem.initial.distance(&center);
        if radius == 0.0 {
            radius = 1.0;
        }
        meta.gradient_bound = Some(estimate_gradient_bound(&problem, &center, radius, seed));
        problem.meta = meta;
        Ok(problem)
    }

    pub fn kind(&self) -> &ProblemKind {
        &self.kind
    }

    pub fn initial_point(&self) -> &ParamVector {
        &self.initial
    }

    pub fn is_smooth(&self) -> bool {
        self.meta.smoothness.is_some()
    }
}

fn kind_dim(kind: &ProblemKind) -> usize {
    match kind {
        ProblemKind::Quadratic(q) => q.dim(),
        ProblemKind::Logistic(l) => l.dim(),
        ProblemKind::PhaseRetrieval(p) => p.dim(),
    }
}

impl Oracle for Problem {
    fn dim(&self) -> usize {
        kind_dim(&self.kind)
    }

    fn num_samples(&self) -> usize {
        match &self.kind {
            ProblemKind::Quadratic(q) => q.num_samples(),
            ProblemKind::Logistic(l) => l.num_samples(),
            ProblemKind::PhaseRetrieval(p) => p.num_samples(),
        }
    }

    fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        match &self.kind {
            ProblemKind::Quadratic(q) => q.sample_loss(w, i),
            ProblemKind::Logistic(l) => l.sample_loss(w, i),
            ProblemKind::PhaseRetrieval(p) => p.sample_loss(w, i),
        }
    }

    fn accumulate_sample_gradient(&self, w: &[f64], i: usize, out: &mut [f64]) {
        match &self.kind {
            ProblemKind::Quadratic(q) => q.accumulate_sample_gradient(w, i, out),
            ProblemKind::Logistic(l) => l.accumulate_sample_gradient(w, i, out),
            ProblemKind::PhaseRetrieval(p) => p.accumulate_sample_gradient(w, i, out),
        }
    }

    fn metadata(&self) -> &ProblemMetadata {
        &self.meta
    }

    fn phase_retrieval(&self) -> Option<&PhaseRetrieval> {
        match &self.kind {
            ProblemKind::PhaseRetrieval(p) => Some(p),
            _ => None,
        }
    }
}

/// `G_est`: the largest single-sample gradient norm over
/// [`GRADIENT_BOUND_SAMPLES`] points drawn uniformly from the ball of the
/// given radius around `center`, each paired with a uniformly drawn sample.
pub fn estimate_gradient_bound(
    oracle: &dyn Oracle,
    center: &ParamVector,
    radius: f64,
    seed: u64,
) -> f64 {
    let d = oracle.dim();
    let n = oracle.num_samples();
    let mut rng = data_stream(seed, DOMAIN_GRADIENT_BOUND);
    let mut best: f64 = 0.0;
    let mut point = vec![0.0; d];
    let mut grad = vec![0.0; d];
    for _ in 0..GRADIENT_BOUND_SAMPLES {
        let mut norm_sq: f64 = 0.0;
        for p in point.iter_mut() {
            *p = rng.sample(StandardNormal);
            norm_sq += *p * *p;
        }
        let u: f64 = rng.random();
        let r = radius * u.powf(1.0 / d as f64) / norm_sq.sqrt().max(f64::MIN_POSITIVE);
        for (p, c) in point.iter_mut().zip(center.iter()) {
            *p = c + r * *p;
        }
        let i = rng.random_range(0..n);
        grad.iter_mut().for_each(|g| *g = 0.0);
        oracle.accumulate_sample_gradient(&point, i, &mut grad);
        best = best.max(grad.iter().map(|g| g * g).sum::<f64>().sqrt());
    }
    best
}

/// Deterministic full-gradient descent with a fixed step, run until
/// `‖∇F‖ <= tol`. Returns the final point and the iteration count.
pub fn gradient_descent(
    oracle: &dyn Oracle,
    start: &ParamVector,
    step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(ParamVector, usize)> {
    let mut w = start.clone();
    let mut norm = f64::INFINITY;
    for it in 0..=max_iter {
        let g = oracle.full_gradient(&w);
        norm = g.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                t: it as u64,
                worker: None,
            });
        }
        if norm <= tol {
            return Ok((w, it));
        }
        w.axpy(-step, &g);
    }
    Err(Error::NotConverged {
        achieved: norm,
        iterations: max_iter,
    })
}

fn random_unit_vector(d: usize, seed: u64) -> ParamVector {
    let mut rng = data_stream(seed, DOMAIN_INITIAL_POINT);
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    ParamVector::from_vec_unchecked(v)
}
