use rand::Rng;
use rand_distr::StandardNormal;

use super::{ProblemMetadata, ProblemSpec};
use crate::error::{Error, Result};
use crate::rng::data_stream;
use crate::vector::ParamVector;

const DOMAIN_CENTER: u64 = 0;
const DOMAIN_SAMPLES: u64 = 1;

/// `f(w; ζ_i) = ½ (w − ζ_i)ᵀ Λ (w − ζ_i)` with diagonal `Λ`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    lambda: Vec<f64>,
    /// Row-major `n × d` sample centers.
    centers: Vec<f64>,
    d: usize,
    n: usize,
}

impl Quadratic {
    /// `Λ` has entries spaced linearly over `[mu, smoothness]`; the centers are
    /// a common Gaussian mean plus `noise`-scaled Gaussian perturbations.
    pub(super) fn generate(spec: &ProblemSpec) -> Result<Self> {
        if !(spec.mu > 0.0 && spec.smoothness >= spec.mu && spec.smoothness.is_finite()) {
            return Err(Error::invalid(format!(
                "quadratic needs 0 < mu <= smoothness (got mu={}, smoothness={})",
                spec.mu, spec.smoothness
            )));
        }
        let d = spec.d;
        let lambda = (0..d)
            .map(|j| {
                if d == 1 {
                    spec.mu
                } else {
                    spec.mu + (spec.smoothness - spec.mu) * j as f64 / (d - 1) as f64
                }
            })
            .collect();
        let mut rng = data_stream(spec.data_seed, DOMAIN_CENTER);
        let mean: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut rng = data_stream(spec.data_seed, DOMAIN_SAMPLES);
        let mut centers = Vec::with_capacity(spec.n * d);
        for _ in 0..spec.n {
            for m in &mean {
                let e: f64 = rng.sample(StandardNormal);
                centers.push(m + spec.noise * e);
            }
        }
        Ok(Quadratic {
            lambda,
            centers,
            d,
            n: spec.n,
        })
    }

    /// Explicit curvature diagonal and sample centers.
    pub fn from_parts(lambda: Vec<f64>, centers: Vec<Vec<f64>>) -> Result<Self> {
        let d = lambda.len();
        if d == 0 || centers.is_empty() {
            return Err(Error::invalid("quadratic needs d >= 1 and n >= 1"));
        }
        if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("quadratic curvatures must be positive"));
        }
        for c in &centers {
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.len(),
                });
            }
        }
        let n = centers.len();
        Ok(Quadratic {
            lambda,
            centers: centers.concat(),
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

    pub fn curvatures(&self) -> &[f64] {
        &self.lambda
    }

    fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.d..(i + 1) * self.d]
    }

    /// Mean of the centers, the unique minimizer.
    pub fn minimizer(&self) -> ParamVector {
        let mut mean = vec![0.0; self.d];
        for i in 0..self.n {
            for (m, c) in mean.iter_mut().zip(self.center(i)) {
                *m += c;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        ParamVector::from_vec_unchecked(mean)
    }

    pub fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        0.5 * w
            .iter()
            .zip(self.center(i))
            .zip(&self.lambda)
            .map(|((wj, cj), lj)| lj * (wj - cj) * (wj - cj))
            .sum::<f64>()
    }

    pub fn accumulate_sample_gradient(&self, w: &[f64], i: usize, out: &mut [f64]) {
        for (((o, wj), cj), lj) in out.iter_mut().zip(w).zip(self.center(i)).zip(&self.lambda) {
            *o += lj * (wj - cj);
        }
    }

    pub(super) fn metadata(&self) -> ProblemMetadata {
        let w_star = self.minimizer();
        let f_star = (0..self.n)
            .map(|i| self.sample_loss(w_star.as_slice(), i))
            .sum::<f64>()
            / self.n as f64;
        let max = self.lambda.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.lambda.iter().cloned().fold(f64::MAX, f64::min);
        ProblemMetadata {
            name: "quadratic".into(),
            smoothness: Some(max),
            strong_convexity: min,
            weak_convexity: 0.0,
            gradient_bound: None,
            w_star: Some(w_star),
            f_star: Some(f_star),
        }
    }
}
