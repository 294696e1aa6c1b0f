//! Field containers on the spherical-shell grid.
//!
//! Storage is row-major with colatitude slowest, longitude in the middle and
//! the vertical coordinate fastest, so a column is contiguous and a raw dump
//! of `values` matches the snapshot payload layout.

use crate::error::{Error, Result};

/// Compensated (Neumaier) accumulator.
///
/// All quadratures and inner products in the crate reduce through this, in a
/// fixed traversal order, so integral identities cancel to near round-off and
/// reruns are bit-identical.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Scalar field sampled at cell centres, `(n_theta, n_phi, n_xi)`.
///
/// `n_xi` is the number of vertical levels carried by this particular field;
/// face-centred diagnostics use `grid.n_xi + 1` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_xi: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n_theta: usize, n_phi: usize, n_xi: usize) -> Self {
        Self {
            n_theta,
            n_phi,
            n_xi,
            values: vec![0.0; n_theta * n_phi * n_xi],
        }
    }

    pub fn from_fn(
        n_theta: usize,
        n_phi: usize,
        n_xi: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut out = Self::zeros(n_theta, n_phi, n_xi);
        for i in 0..n_theta {
            for j in 0..n_phi {
                for k in 0..n_xi {
                    let idx = out.idx(i, j, k);
                    out.values[idx] = f(i, j, k);
                }
            }
        }
        out
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_phi + j) * self.n_xi + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.idx(i, j, k);
        self.values[idx] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_theta == other.n_theta && self.n_phi == other.n_phi && self.n_xi == other.n_xi
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `self += a * other`, shapes must match.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (x, y) in self.values.iter_mut().zip(other.values.iter()) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in self.values.iter_mut() {
            *x *= a;
        }
    }

    /// Copy of one vertical level as a horizontal field.
    pub fn level(&self, k: usize) -> LevelField {
        let mut out = LevelField::zeros(self.n_theta, self.n_phi);
        for i in 0..self.n_theta {
            for j in 0..self.n_phi {
                out.values[i * self.n_phi + j] = self.get(i, j, k);
            }
        }
        out
    }
}

/// Scalar field on a single horizontal level of the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelField {
    pub n_theta: usize,
    pub n_phi: usize,
    pub values: Vec<f64>,
}

impl LevelField {
    pub fn zeros(n_theta: usize, n_phi: usize) -> Self {
        Self {
            n_theta,
            n_phi,
            values: vec![0.0; n_theta * n_phi],
        }
    }

    pub fn from_fn(n_theta: usize, n_phi: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(n_theta, n_phi);
        for i in 0..n_theta {
            for j in 0..n_phi {
                out.values[i * n_phi + j] = f(i, j);
            }
        }
        out
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_phi + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.idx(i, j);
        self.values[idx] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_theta == other.n_theta && self.n_phi == other.n_phi
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (x, y) in self.values.iter_mut().zip(other.values.iter()) {
            *x += a * y;
        }
    }
}

/// Horizontal vector field, components collocated at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub comp_theta: ScalarField,
    pub comp_phi: ScalarField,
}

impl VectorField {
    pub fn zeros(n_theta: usize, n_phi: usize, n_xi: usize) -> Self {
        Self {
            comp_theta: ScalarField::zeros(n_theta, n_phi, n_xi),
            comp_phi: ScalarField::zeros(n_theta, n_phi, n_xi),
        }
    }

    pub fn n_theta(&self) -> usize {
        self.comp_theta.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.comp_theta.n_phi
    }

    pub fn n_xi(&self) -> usize {
        self.comp_theta.n_xi
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.comp_theta.same_shape(&other.comp_theta)
    }

    pub fn consistent(&self) -> bool {
        self.comp_theta.same_shape(&self.comp_phi)
    }

    pub fn is_finite(&self) -> bool {
        self.comp_theta.is_finite() && self.comp_phi.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.comp_theta.max_abs().max(self.comp_phi.max_abs())
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.comp_theta.axpy(a, &other.comp_theta);
        self.comp_phi.axpy(a, &other.comp_phi);
    }

    pub fn scale(&mut self, a: f64) {
        self.comp_theta.scale(a);
        self.comp_phi.scale(a);
    }
}

pub(crate) fn check_scalar_shape(name: &str, f: &ScalarField, nt: usize, np: usize, nx: usize) -> Result<()> {
    if f.n_theta != nt || f.n_phi != np || f.n_xi != nx {
        return Err(Error::ShapeMismatch(format!(
            "{name}: got ({}, {}, {}), expected ({nt}, {np}, {nx})",
            f.n_theta, f.n_phi, f.n_xi
        )));
    }
    Ok(())
}

pub(crate) fn check_vector_shape(name: &str, v: &VectorField, nt: usize, np: usize, nx: usize) -> Result<()> {
    if !v.consistent() {
        return Err(Error::ShapeMismatch(format!("{name}: vector components disagree")));
    }
    check_scalar_shape(name, &v.comp_theta, nt, np, nx)
}
