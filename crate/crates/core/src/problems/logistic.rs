use rand::Rng;
use rand_distr::StandardNormal;

use super::{ProblemMetadata, ProblemSpec, OPTIMUM_TOLERANCE};
use crate::error::{Error, Result};
use crate::rng::data_stream;
use crate::vector::{dot, ParamVector};

const DOMAIN_FEATURES: u64 = 10;
const DOMAIN_SEPARATOR: u64 = 11;
const DOMAIN_LABELS: u64 = 12;

const SOLVE_MAX_ITER: usize = 1_000_000;

/// ℓ2-regularized binary logistic regression,
/// `f(w; a_i, y_i) = log(1 + exp(−y_i a_iᵀw)) + (λ/2)‖w‖²`.
#[derive(Clone, Debug)]
pub struct Logistic {
    features: Vec<f64>,
    labels: Vec<f64>,
    l2: f64,
    d: usize,
    n: usize,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Logistic {
    /// Gaussian features, labels from the sign of a planted Gaussian separator
    /// with `noise`-scaled Gaussian margin noise.
    pub(super) fn generate(spec: &ProblemSpec) -> Result<Self> {
        let d = spec.d;
        let mut rng = data_stream(spec.data_seed, DOMAIN_FEATURES);
        let features: Vec<f64> = (0..spec.n * d)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mut rng = data_stream(spec.data_seed, DOMAIN_SEPARATOR);
        let separator: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut rng = data_stream(spec.data_seed, DOMAIN_LABELS);
        let labels = (0..spec.n)
            .map(|i| {
                let e: f64 = rng.sample(StandardNormal);
                let margin = dot(&features[i * d..(i + 1) * d], &separator) + spec.noise * e;
                if margin >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Logistic::from_parts_flat(features, labels, spec.l2, d)
    }

    pub fn from_parts(features: Vec<Vec<f64>>, labels: Vec<f64>, l2: f64) -> Result<Self> {
        let d = features.first().map_or(0, Vec::len);
        if features.iter().any(|a| a.len() != d) {
            return Err(Error::invalid("all feature rows must have the same length"));
        }
        Logistic::from_parts_flat(features.concat(), labels, l2, d)
    }

    fn from_parts_flat(features: Vec<f64>, labels: Vec<f64>, l2: f64, d: usize) -> Result<Self> {
        if !(l2 > 0.0 && l2.is_finite()) {
            return Err(Error::invalid(format!(
                "logistic l2 must be > 0 (got {l2})"
            )));
        }
        let n = labels.len();
        if d == 0 || n == 0 || features.len() != n * d {
            return Err(Error::invalid(
                "logistic needs d >= 1, n >= 1 and n*d features",
            ));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid("logistic labels must be +1 or -1"));
        }
        Ok(Logistic {
            features,
            labels,
            l2,
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

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        let margin = self.labels[i] * dot(self.row(i), w);
        softplus(-margin) + 0.5 * self.l2 * dot(w, w)
    }

    pub fn accumulate_sample_gradient(&self, w: &[f64], i: usize, out: &mut [f64]) {
        let a = self.row(i);
        let y = self.labels[i];
        let coeff = -y * sigmoid(-y * dot(a, w));
        for ((o, aj), wj) in out.iter_mut().zip(a).zip(w) {
            *o += coeff * aj + self.l2 * wj;
        }
    }

    fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        for i in 0..self.n {
            self.accumulate_sample_gradient(w, i, &mut g);
        }
        g.iter_mut().for_each(|v| *v /= self.n as f64);
        g
    }

    /// Smoothness bound `λ + max_i ‖a_i‖²/4`, valid per sample.
    pub fn smoothness(&self) -> f64 {
        let max_sq = (0..self.n)
            .map(|i| dot(self.row(i), self.row(i)))
            .fold(0.0, f64::max);
        self.l2 + 0.25 * max_sq
    }

    pub(super) fn metadata(&self) -> Result<ProblemMetadata> {
        let smoothness = self.smoothness();
        let step = 1.0 / smoothness;
        let mut w = vec![0.0; self.d];
        let mut converged = false;
        let mut norm = f64::INFINITY;
        for _ in 0..SOLVE_MAX_ITER {
            let g = self.full_gradient(&w);
            norm = dot(&g, &g).sqrt();
            if norm <= OPTIMUM_TOLERANCE {
                converged = true;
                break;
            }
            w.iter_mut().zip(&g).for_each(|(wj, gj)| *wj -= step * gj);
        }
        if !converged {
            return Err(Error::NotConverged {
                achieved: norm,
                iterations: SOLVE_MAX_ITER,
            });
        }
        let f_star = (0..self.n).map(|i| self.sample_loss(&w, i)).sum::<f64>() / self.n as f64;
        Ok(ProblemMetadata {
            name: "logistic".into(),
            smoothness: Some(smoothness),
            strong_convexity: self.l2,
            weak_convexity: 0.0,
            gradient_bound: None,
            w_star: Some(ParamVector::from_vec_unchecked(w)),
            f_star: Some(f_star),
        })
    }
}
