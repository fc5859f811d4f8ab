//! Dense parameter vectors and coordinate masks.

use crate::error::{Error, Result};

/// Dense real vector of fixed dimension. Carries iterates, gradients,
/// momentum buffers, memory vectors and the auxiliary `z` sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(d: usize) -> Self {
        ParamVector(vec![0.0; d])
    }

    /// Builds a vector, rejecting non-finite entries.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        let v = ParamVector(values);
        v.ensure_finite(0, None)?;
        Ok(v)
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub(crate) fn ensure_finite(&self, t: u64, worker: Option<usize>) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { t, worker })
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.len() == d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: d,
                got: self.len(),
            })
        }
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.0)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ParamVector) {
        axpy(&mut self.0, a, &x.0);
    }

    pub fn scale(&mut self, a: f64) {
        self.0.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| a * v).collect())
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add_assign(&mut self, other: &ParamVector) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a += b);
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Set of selected coordinates out of `d`; the 0/1 vector `m` of the update
/// rules, stored as sorted indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseMask {
    selected: Vec<usize>,
    d: usize,
}

impl SparseMask {
    /// Validates that indices are strictly increasing, below `d`, and that at
    /// least one coordinate is selected.
    pub fn new(selected: Vec<usize>, d: usize) -> Result<Self> {
        if selected.is_empty() || selected.len() > d {
            return Err(Error::invalid(format!(
                "mask cardinality {} outside [1, {d}]",
                selected.len()
            )));
        }
        if selected.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("mask indices must be strictly increasing"));
        }
        if selected.last().is_some_and(|&j| j >= d) {
            return Err(Error::invalid(format!(
                "mask index out of range for dimension {d}"
            )));
        }
        Ok(SparseMask { selected, d })
    }

    pub fn dense(d: usize) -> Self {
        SparseMask {
            selected: (0..d).collect(),
            d,
        }
    }

    pub(crate) fn from_sorted_unchecked(selected: Vec<usize>, d: usize) -> Self {
        SparseMask { selected, d }
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of selected coordinates (`q`).
    pub fn cardinality(&self) -> usize {
        self.selected.len()
    }

    pub fn is_dense(&self) -> bool {
        self.selected.len() == self.d
    }

    pub fn contains(&self, j: usize) -> bool {
        self.selected.binary_search(&j).is_ok()
    }

    /// `m ⊙ v`, exact selection.
    pub fn masked(&self, v: &ParamVector) -> ParamVector {
        let mut out = ParamVector::zeros(v.len());
        for &j in &self.selected {
            out.0[j] = v.0[j];
        }
        out
    }

    /// `(1 - m) ⊙ v`, exact selection.
    pub fn complement_masked(&self, v: &ParamVector) -> ParamVector {
        let mut out = v.clone();
        for &j in &self.selected {
            out.0[j] = 0.0;
        }
        out
    }
}
