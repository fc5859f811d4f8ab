use rand::Rng;
use rand_distr::StandardNormal;

use super::{ProblemMetadata, ProblemSpec};
use crate::error::{Error, Result};
use crate::rng::data_stream;
use crate::vector::{dot, ParamVector};

const DOMAIN_FEATURES: u64 = 20;
const DOMAIN_PLANTED: u64 = 21;
const DOMAIN_NOISE: u64 = 22;

/// Robust phase retrieval, `f(w; a_i, y_i) = |(a_iᵀw)² − y_i|`.
///
/// Weakly convex with modulus `c = 2 max_i ‖a_i‖²`; not smooth.
#[derive(Clone, Debug)]
pub struct PhaseRetrieval {
    features: Vec<f64>,
    targets: Vec<f64>,
    planted: Option<Vec<f64>>,
    noiseless: bool,
    d: usize,
    n: usize,
}

impl PhaseRetrieval {
    /// Features `a_i ~ N(0, I/d)`, a planted unit vector `w♮`, and
    /// `y_i = (a_iᵀw♮)² + noise·ε_i`.
    pub(super) fn generate(spec: &ProblemSpec) -> Self {
        let d = spec.d;
        let scale = 1.0 / (d as f64).sqrt();
        let mut rng = data_stream(spec.data_seed, DOMAIN_FEATURES);
        let features: Vec<f64> = (0..spec.n * d)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut rng = data_stream(spec.data_seed, DOMAIN_PLANTED);
        let mut planted: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&planted, &planted).sqrt();
        planted.iter_mut().for_each(|x| *x /= norm);
        let mut rng = data_stream(spec.data_seed, DOMAIN_NOISE);
        let targets = (0..spec.n)
            .map(|i| {
                let ip = dot(&features[i * d..(i + 1) * d], &planted);
                let e: f64 = rng.sample(StandardNormal);
                ip * ip + spec.noise * e
            })
            .collect();
        PhaseRetrieval {
            features,
            targets,
            planted: Some(planted),
            noiseless: spec.noise == 0.0,
            d,
            n: spec.n,
        }
    }

    /// Explicit measurements; `planted` is reported as the optimum when given.
    pub fn from_parts(
        features: Vec<Vec<f64>>,
        targets: Vec<f64>,
        planted: Option<Vec<f64>>,
    ) -> Result<Self> {
        let d = features.first().map_or(0, Vec::len);
        let n = targets.len();
        if d == 0 || n == 0 || features.len() != n || features.iter().any(|a| a.len() != d) {
            return Err(Error::invalid("phaseret needs n rows of d >= 1 features"));
        }
        if let Some(p) = &planted {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
        }
        Ok(PhaseRetrieval {
            features: features.concat(),
            targets,
            noiseless: planted.is_some(),
            planted,
            d,
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_samples(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn planted(&self) -> Option<&[f64]> {
        self.planted.as_deref()
    }

    /// `c = 2 max_i ‖a_i‖²`.
    pub fn weak_convexity(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| dot(self.row(i), self.row(i)))
            .fold(0.0, f64::max)
    }

    pub fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        let ip = dot(self.row(i), w);
        (ip * ip - self.targets[i]).abs()
    }

    /// Subgradient `sign((aᵀw)² − y)·2(aᵀw)·a`, with sign(0) = 0.
    pub fn accumulate_sample_gradient(&self, w: &[f64], i: usize, out: &mut [f64]) {
        let a = self.row(i);
        let ip = dot(a, w);
        let r = ip * ip - self.targets[i];
        if r == 0.0 {
            return;
        }
        let coeff = r.signum() * 2.0 * ip;
        for (o, aj) in out.iter_mut().zip(a) {
            *o += coeff * aj;
        }
    }

    pub(super) fn metadata(&self) -> ProblemMetadata {
        let optimum = if self.noiseless {
            self.planted.clone()
        } else {
            None
        };
        ProblemMetadata {
            name: "phaseret".into(),
            smoothness: None,
            strong_convexity: 0.0,
            weak_convexity: self.weak_convexity(),
            gradient_bound: None,
            f_star: optimum.as_ref().map(|_| 0.0),
            w_star: optimum.map(ParamVector::from_vec_unchecked),
        }
    }
}
