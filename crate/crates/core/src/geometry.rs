//! Discrete spherical-shell domain Ω = S² × (0,1).
//!
//! Cell-centred colatitude grid offset half a cell from both poles, periodic
//! longitude, cell-centred vertical levels ξ_k = (k+½)/n_xi with the linear
//! pressure map p = (P − p₀)ξ + p₀. Horizontal quadrature weights are
//! sin θ · dθ · dφ, normalised so the discrete sphere area is exactly 4π;
//! the summation-by-parts operator pairs are built against these weights.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{CompensatedSum, LevelField, ScalarField, VectorField};

/// Immutable grid description; safe to share between workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_xi: usize,
    pub d_theta: f64,
    pub d_phi: f64,
    pub d_xi: f64,
    /// θ_i = (i + ½)·π/n_theta, never touching the poles.
    pub theta_centers: Vec<f64>,
    /// φ_j = j·2π/n_phi, periodic.
    pub phi_centers: Vec<f64>,
    /// ξ_k = (k + ½)/n_xi.
    pub xi_centers: Vec<f64>,
    /// sin θ at cell centres.
    pub sin_center: Vec<f64>,
    /// cot θ at cell centres (finite by construction).
    pub cot_center: Vec<f64>,
    /// sin θ at the n_theta+1 row faces; exactly zero at both poles.
    pub sin_face: Vec<f64>,
    /// Horizontal quadrature weight per row (constant in longitude),
    /// normalised so the row weights times n_phi sum to 4π.
    pub cell_weights: Vec<f64>,
    /// Rows adjacent to each pole whose explicit tendencies are zonally filtered.
    pub polar_filter_band: usize,
}

impl Grid {
    /// Quadrature weight of the horizontal cell (i, j); independent of j.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.cell_weights[i]
    }

    pub fn xi_face(&self, k: usize) -> f64 {
        k as f64 * self.d_xi
    }
}

/// Physical and model constants. All Reynolds-like numbers are positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub re1: f64,
    pub re2: f64,
    pub rt1: f64,
    pub rt2: f64,
    pub rq1: f64,
    pub rq2: f64,
    /// Rossby number.
    pub r0: f64,
    /// Moisture-buoyancy coupling constant, ~0.618.
    pub a: f64,
    /// Thermodynamic constant in the hydrostatic relation.
    pub b: f64,
    /// Surface pressure scale P.
    pub p_cap: f64,
    /// Upper-atmosphere pressure p₀ (strictly positive).
    pub p0: f64,
    /// Robin coefficient for temperature at ξ = 1.
    pub alpha_s: f64,
    /// Robin coefficient for moisture at ξ = 1.
    pub beta_s: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            re1: 10.0,
            re2: 10.0,
            rt1: 10.0,
            rt2: 10.0,
            rq1: 10.0,
            rq2: 10.0,
            r0: 1.0,
            a: 0.618,
            b: 1.0,
            p_cap: 1000.0,
            p0: 100.0,
            alpha_s: 1.0,
            beta_s: 1.0,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("re1", self.re1),
            ("re2", self.re2),
            ("rt1", self.rt1),
            ("rt2", self.rt2),
            ("rq1", self.rq1),
            ("rq2", self.rq2),
            ("r0", self.r0),
            ("a", self.a),
            ("b", self.b),
            ("p_cap", self.p_cap),
            ("p0", self.p0),
            ("alpha_s", self.alpha_s),
            ("beta_s", self.beta_s),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation {
                    key: format!("params.{name}"),
                    msg: format!("must be strictly positive, got {v}"),
                });
            }
        }
        if self.p0 >= self.p_cap {
            return Err(Error::Validation {
                key: "params.p0".into(),
                msg: format!("requires p0 < p_cap, got {} >= {}", self.p0, self.p_cap),
            });
        }
        Ok(())
    }
}

/// Build a grid with the default polar filter band `max(1, n_theta/8)`.
pub fn build_grid(n_theta: usize, n_phi: usize, n_xi: usize) -> Result<Grid> {
    build_grid_with_band(n_theta, n_phi, n_xi, (n_theta / 8).max(1))
}

pub fn build_grid_with_band(
    n_theta: usize,
    n_phi: usize,
    n_xi: usize,
    polar_filter_band: usize,
) -> Result<Grid> {
    if n_theta < 4 {
        return Err(Error::InvalidResolution(format!("n_theta = {n_theta} < 4")));
    }
    if n_phi < 4 || n_phi % 2 != 0 {
        return Err(Error::InvalidResolution(format!("n_phi = {n_phi} must be even and >= 4")));
    }
    if n_xi < 2 {
        return Err(Error::InvalidResolution(format!("n_xi = {n_xi} < 2")));
    }
    if 2 * polar_filter_band >= n_theta {
        return Err(Error::InvalidResolution(format!(
            "polar_filter_band = {polar_filter_band} too wide for n_theta = {n_theta}"
        )));
    }

    let d_theta = PI / n_theta as f64;
    let d_phi = 2.0 * PI / n_phi as f64;
    let d_xi = 1.0 / n_xi as f64;

    let theta_centers: Vec<f64> = (0..n_theta).map(|i| (i as f64 + 0.5) * d_theta).collect();
    let phi_centers: Vec<f64> = (0..n_phi).map(|j| j as f64 * d_phi).collect();
    let xi_centers: Vec<f64> = (0..n_xi).map(|k| (k as f64 + 0.5) * d_xi).collect();

    let sin_center: Vec<f64> = theta_centers.iter().map(|t| t.sin()).collect();
    let cot_center: Vec<f64> = theta_centers.iter().map(|t| t.cos() / t.sin()).collect();

    // Pole faces carry exactly zero metric so no flux ever crosses them.
    let mut sin_face: Vec<f64> = (0..=n_theta).map(|i| (i as f64 * d_theta).sin()).collect();
    sin_face[0] = 0.0;
    sin_face[n_theta] = 0.0;

    let mut raw = CompensatedSum::new();
    for s in &sin_center {
        raw.add(s * d_theta * d_phi * n_phi as f64);
    }
    let norm = 4.0 * PI / raw.value();
    let cell_weights: Vec<f64> = sin_center.iter().map(|s| s * d_theta * d_phi * norm).collect();

    Ok(Grid {
        n_theta,
        n_phi,
        n_xi,
        d_theta,
        d_phi,
        d_xi,
        theta_centers,
        phi_centers,
        xi_centers,
        sin_center,
        cot_center,
        sin_face,
        cell_weights,
        polar_filter_band,
    })
}

/// Pressure at vertical coordinate ξ: p = (P − p₀)·ξ + p₀.
pub fn pressure_of_xi(xi: f64, params: &Params) -> Result<f64> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::OutOfRange(format!("xi = {xi} outside [0, 1]")));
    }
    Ok((params.p_cap - params.p0) * xi + params.p0)
}

/// Coriolis parameter f = 2 cos θ.
pub fn coriolis(theta: f64) -> f64 {
    2.0 * theta.cos()
}

/// Quadrature of a horizontal field over the sphere.
pub fn integrate_sphere(field: &LevelField, grid: &Grid) -> Result<f64> {
    if field.n_theta != grid.n_theta || field.n_phi != grid.n_phi {
        return Err(Error::ShapeMismatch(format!(
            "integrate_sphere: ({}, {}) vs grid ({}, {})",
            field.n_theta, field.n_phi, grid.n_theta, grid.n_phi
        )));
    }
    let mut acc = CompensatedSum::new();
    for i in 0..grid.n_theta {
        let w = grid.weight(i);
        for j in 0..grid.n_phi {
            acc.add(w * field.get(i, j));
        }
    }
    Ok(acc.value())
}

/// Quadrature over the full shell, vertical weights d_xi per level.
pub fn integrate_omega(field: &ScalarField, grid: &Grid) -> Result<f64> {
    crate::field::check_scalar_shape("integrate_omega", field, grid.n_theta, grid.n_phi, grid.n_xi)?;
    let mut acc = CompensatedSum::new();
    for i in 0..grid.n_theta {
        let w = grid.weight(i) * grid.d_xi;
        for j in 0..grid.n_phi {
            for k in 0..grid.n_xi {
                acc.add(w * field.get(i, j, k));
            }
        }
    }
    Ok(acc.value())
}

/// Weighted L²(S²) inner product of two horizontal fields.
pub fn inner_sphere(a: &LevelField, b: &LevelField, grid: &Grid) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("inner_sphere: operands disagree".into()));
    }
    let mut acc = CompensatedSum::new();
    for i in 0..grid.n_theta {
        let w = grid.weight(i);
        for j in 0..grid.n_phi {
            acc.add(w * a.get(i, j) * b.get(i, j));
        }
    }
    Ok(acc.value())
}

/// Weighted L²(Ω) inner product of two scalar fields.
pub fn inner_omega(a: &ScalarField, b: &ScalarField, grid: &Grid) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("inner_omega: operands disagree".into()));
    }
    let mut acc = CompensatedSum::new();
    for i in 0..a.n_theta.min(grid.n_theta) {
        let w = grid.weight(i) * grid.d_xi;
        for j in 0..a.n_phi {
            for k in 0..a.n_xi {
                acc.add(w * a.get(i, j, k) * b.get(i, j, k));
            }
        }
    }
    Ok(acc.value())
}

/// Weighted L²(Ω) inner product of two vector fields.
pub fn inner_omega_vec(a: &VectorField, b: &VectorField, grid: &Grid) -> Result<f64> {
    Ok(inner_omega(&a.comp_theta, &b.comp_theta, grid)?
        + inner_omega(&a.comp_phi, &b.comp_phi, grid)?)
}
