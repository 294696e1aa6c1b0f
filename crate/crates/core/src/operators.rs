//! Discrete horizontal and vertical operators on the shell.
//!
//! The divergence is a flux form with zero flux through the pole faces,
//!
//!   div v = (1/sin θ) [∂(v_θ sin θ)/∂θ + ∂v_φ/∂φ],
//!
//! and the gradient, scalar Laplacian, vector Laplacian and pressure-gradient
//! force are *defined* as quadrature adjoints of it (summation by parts), so
//! the integral cancellations the energy budget rests on hold to round-off at
//! any resolution:
//!
//!   ∫ s·div u  = −∫ ∇s·u,          ∫ div u = 0,
//!   ∫ (∇_v s + W(v) ∂s/∂ξ)·s = 0   whenever ∫₀¹ div v dξ = 0,
//!   ∫ (−Δu)·u₁ = ∫ (∇_θu·∇_θu₁ + ∇_φu·∇_φu₁ + u·u₁).
//!
//! Advection is carried in skew-symmetric form (mean of advective and flux
//! forms); vertical transport uses face-centred W = ∫_ξ¹ div v dξ′ against
//! centred ∂/∂ξ so the column telescopes exactly.

use crate::error::{Error, Result};
use crate::field::{check_scalar_shape, check_vector_shape, LevelField, ScalarField, VectorField};
use crate::geometry::{Grid, Params};

/// Vertical boundary closure for ghost cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerticalBc {
    /// ∂s/∂ξ = 0 at both faces.
    NeumannBoth,
    /// ∂s/∂ξ = 0 at ξ = 0 and ∂s/∂ξ = −coef·s at ξ = 1.
    RobinTop { coef: f64 },
}

impl VerticalBc {
    /// Ghost multiplier at the ξ = 1 face: ghost = γ · top cell.
    /// Solves (g − s)/dξ = −coef·(g + s)/2; coef = 0 reduces to Neumann.
    pub fn top_ghost_factor(&self, d_xi: f64) -> f64 {
        match self {
            VerticalBc::NeumannBoth => 1.0,
            VerticalBc::RobinTop { coef } => (1.0 - coef * d_xi / 2.0) / (1.0 + coef * d_xi / 2.0),
        }
    }
}

// ---------------------------------------------------------------------------
// First-order building blocks (shared stencils; the adjoint pairs must use
// exactly these).
// ---------------------------------------------------------------------------

/// Flux-form θ-part of the divergence applied to one component array.
fn div_theta_flux(grid: &Grid, x: &ScalarField) -> ScalarField {
    let (nt, np, nx) = (x.n_theta, x.n_phi, x.n_xi);
    let mut out = ScalarField::zeros(nt, np, nx);
    for i in 0..nt {
        let inv = 1.0 / (grid.sin_center[i] * grid.d_theta);
        let sf_lo = grid.sin_face[i];
        let sf_hi = grid.sin_face[i + 1];
        for j in 0..np {
            for k in 0..nx {
                let here = x.get(i, j, k);
                let hi = if i + 1 < nt { sf_hi * 0.5 * (here + x.get(i + 1, j, k)) } else { 0.0 };
                let lo = if i > 0 { sf_lo * 0.5 * (x.get(i - 1, j, k) + here) } else { 0.0 };
                out.set(i, j, k, (hi - lo) * inv);
            }
        }
    }
    out
}

/// Centred φ-derivative divided by sin θ; used for both the φ-part of the
/// divergence and of the gradient (identical formula, skew-adjoint in φ).
fn centered_dphi_over_sin(grid: &Grid, x: &ScalarField) -> ScalarField {
    let (nt, np, nx) = (x.n_theta, x.n_phi, x.n_xi);
    let mut out = ScalarField::zeros(nt, np, nx);
    for i in 0..nt {
        let inv = 1.0 / (2.0 * grid.sin_center[i] * grid.d_phi);
        for j in 0..np {
            let jp = (j + 1) % np;
            let jm = (j + np - 1) % np;
            for k in 0..nx {
                out.set(i, j, k, (x.get(i, jp, k) - x.get(i, jm, k)) * inv);
            }
        }
    }
    out
}

/// θ-part of the gradient: the negative quadrature adjoint of `div_theta_flux`.
fn grad_theta_part(grid: &Grid, s: &ScalarField) -> ScalarField {
    let (nt, np, nx) = (s.n_theta, s.n_phi, s.n_xi);
    let mut out = ScalarField::zeros(nt, np, nx);
    for i in 0..nt {
        let inv = 1.0 / (2.0 * grid.sin_center[i] * grid.d_theta);
        let sf_lo = grid.sin_face[i];
        let sf_hi = grid.sin_face[i + 1];
        for j in 0..np {
            for k in 0..nx {
                let here = s.get(i, j, k);
                let hi = if i + 1 < nt { sf_hi * (s.get(i + 1, j, k) - here) } else { 0.0 };
                let lo = if i > 0 { sf_lo * (here - s.get(i - 1, j, k)) } else { 0.0 };
                out.set(i, j, k, (hi + lo) * inv);
            }
        }
    }
    out
}

/// Horizontal divergence of a collocated vector field.
pub fn h_div(grid: &Grid, u: &VectorField) -> Result<ScalarField> {
    check_vector_levels("h_div", grid, u)?;
    let mut out = div_theta_flux(grid, &u.comp_theta);
    let dphi = centered_dphi_over_sin(grid, &u.comp_phi);
    out.axpy(1.0, &dphi);
    Ok(out)
}

/// Horizontal gradient, defined so that ∫ s·div u = −∫ ∇s·u exactly.
pub fn h_grad(grid: &Grid, s: &ScalarField) -> Result<VectorField> {
    check_scalar_levels("h_grad", grid, s)?;
    Ok(VectorField {
        comp_theta: grad_theta_part(grid, s),
        comp_phi: centered_dphi_over_sin(grid, s),
    })
}

/// Scalar Laplace–Beltrami operator, div ∘ grad.
pub fn laplace_scalar(grid: &Grid, s: &ScalarField) -> Result<ScalarField> {
    h_div(grid, &h_grad(grid, s)?)
}

// ---------------------------------------------------------------------------
// Covariant derivatives of vector fields and the vector Laplacian.
// ---------------------------------------------------------------------------

/// ∇_{e_θ} u, componentwise θ-derivative (no metric terms along θ).
pub fn cov_deriv_theta(grid: &Grid, u: &VectorField) -> Result<VectorField> {
    check_vector_levels("cov_deriv_theta", grid, u)?;
    Ok(VectorField {
        comp_theta: grad_theta_part(grid, &u.comp_theta),
        comp_phi: grad_theta_part(grid, &u.comp_phi),
    })
}

/// ∇_{e_φ} u with the cot θ metric coupling of the sphere.
pub fn cov_deriv_phi(grid: &Grid, u: &VectorField) -> Result<VectorField> {
    check_vector_levels("cov_deriv_phi", grid, u)?;
    let mut t = centered_dphi_over_sin(grid, &u.comp_theta);
    let mut p = centered_dphi_over_sin(grid, &u.comp_phi);
    for i in 0..u.n_theta() {
        let cot = grid.cot_center[i];
        for j in 0..u.n_phi() {
            for k in 0..u.n_xi() {
                let idx = t.idx(i, j, k);
                t.values[idx] -= cot * u.comp_phi.values[idx];
                p.values[idx] += cot * u.comp_theta.values[idx];
            }
        }
    }
    Ok(VectorField { comp_theta: t, comp_phi: p })
}

fn cov_deriv_theta_adjoint(grid: &Grid, x: &VectorField) -> VectorField {
    let mut t = div_theta_flux(grid, &x.comp_theta);
    let mut p = div_theta_flux(grid, &x.comp_phi);
    t.scale(-1.0);
    p.scale(-1.0);
    VectorField { comp_theta: t, comp_phi: p }
}

fn cov_deriv_phi_adjoint(grid: &Grid, x: &VectorField) -> VectorField {
    let mut t = centered_dphi_over_sin(grid, &x.comp_theta);
    let mut p = centered_dphi_over_sin(grid, &x.comp_phi);
    t.scale(-1.0);
    p.scale(-1.0);
    for i in 0..x.n_theta() {
        let cot = grid.cot_center[i];
        for j in 0..x.n_phi() {
            for k in 0..x.n_xi() {
                let idx = t.idx(i, j, k);
                t.values[idx] += cot * x.comp_phi.values[idx];
                p.values[idx] -= cot * x.comp_theta.values[idx];
            }
        }
    }
    VectorField { comp_theta: t, comp_phi: p }
}

/// Vector Laplacian Δu, built as −(∇_θ*∇_θ + ∇_φ*∇_φ + I) so that
/// ∫ (−Δu)·u₁ equals the covariant H¹ pairing exactly.
pub fn laplace_vector(grid: &Grid, u: &VectorField) -> Result<VectorField> {
    check_vector_levels("laplace_vector", grid, u)?;
    let dt = cov_deriv_theta(grid, u)?;
    let dp = cov_deriv_phi(grid, u)?;
    let mut out = cov_deriv_theta_adjoint(grid, &dt);
    let adj_p = cov_deriv_phi_adjoint(grid, &dp);
    out.axpy(1.0, &adj_p);
    out.axpy(1.0, u);
    out.scale(-1.0);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Advection.
// ---------------------------------------------------------------------------

/// Skew-symmetric horizontal advection of a scalar:
/// ∇_v s = ½ [ v·∇s + div(s v) − s·div v ].
pub fn advect_scalar(grid: &Grid, v: &VectorField, s: &ScalarField) -> Result<ScalarField> {
    check_vector_levels("advect_scalar", grid, v)?;
    if !v.comp_theta.same_shape(s) {
        return Err(Error::ShapeMismatch("advect_scalar: velocity and scalar disagree".into()));
    }
    let grad = h_grad(grid, s)?;
    let sv = VectorField {
        comp_theta: pointwise_mul(s, &v.comp_theta),
        comp_phi: pointwise_mul(s, &v.comp_phi),
    };
    let div_sv = h_div(grid, &sv)?;
    let div_v = h_div(grid, v)?;
    let mut out = ScalarField::zeros(s.n_theta, s.n_phi, s.n_xi);
    for idx in 0..out.values.len() {
        let advective = v.comp_theta.values[idx] * grad.comp_theta.values[idx]
            + v.comp_phi.values[idx] * grad.comp_phi.values[idx];
        out.values[idx] = 0.5 * (advective + div_sv.values[idx] - s.values[idx] * div_v.values[idx]);
    }
    Ok(out)
}

/// Skew-symmetric horizontal advection of a vector plus the exact metric
/// terms (−v_φ w_φ cot θ, +v_φ w_θ cot θ).
pub fn advect_vector(grid: &Grid, v: &VectorField, w: &VectorField) -> Result<VectorField> {
    if !v.same_shape(w) {
        return Err(Error::ShapeMismatch("advect_vector: fields disagree".into()));
    }
    let mut t = advect_scalar(grid, v, &w.comp_theta)?;
    let mut p = advect_scalar(grid, v, &w.comp_phi)?;
    for i in 0..v.n_theta() {
        let cot = grid.cot_center[i];
        for j in 0..v.n_phi() {
            for k in 0..v.n_xi() {
                let idx = t.idx(i, j, k);
                let vphi = v.comp_phi.values[idx];
                t.values[idx] -= vphi * w.comp_phi.values[idx] * cot;
                p.values[idx] += vphi * w.comp_theta.values[idx] * cot;
            }
        }
    }
    Ok(VectorField { comp_theta: t, comp_phi: p })
}

/// Diagnostic vertical velocity W(v)(ξ) = ∫_ξ¹ div v dξ′ on the n_xi + 1
/// ξ-faces; exactly zero at ξ = 1, and zero at ξ = 0 when the barotropic
/// constraint holds.
pub fn vertical_velocity(grid: &Grid, v: &VectorField) -> Result<ScalarField> {
    check_vector_shape("vertical_velocity", v, grid.n_theta, grid.n_phi, grid.n_xi)?;
    let div = h_div(grid, v)?;
    Ok(w_faces_from_div(grid, &div))
}

pub(crate) fn w_faces_from_div(grid: &Grid, div: &ScalarField) -> ScalarField {
    let (nt, np, nx) = (div.n_theta, div.n_phi, div.n_xi);
    let mut w = ScalarField::zeros(nt, np, nx + 1);
    for i in 0..nt {
        for j in 0..np {
            let mut acc = 0.0;
            w.set(i, j, nx, 0.0);
            for k in (0..nx).rev() {
                acc += grid.d_xi * div.get(i, j, k);
                w.set(i, j, k, acc);
            }
        }
    }
    w
}

/// Largest column value of |W at ξ = 0|, the barotropic constraint residual.
pub fn constraint_residual(grid: &Grid, v: &VectorField) -> Result<f64> {
    let w = vertical_velocity(grid, v)?;
    let mut r: f64 = 0.0;
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            r = r.max(w.get(i, j, 0).abs());
        }
    }
    Ok(r)
}

/// Skew vertical transport W ∂s/∂ξ evaluated at cells from face W; the
/// boundary-face difference terms are dropped so the column telescopes to
/// −½ s₀² W(0) per column, which vanishes under the constraint.
fn vertical_transport_scalar(grid: &Grid, w_face: &ScalarField, s: &ScalarField) -> ScalarField {
    let (nt, np, nx) = (s.n_theta, s.n_phi, s.n_xi);
    let mut out = ScalarField::zeros(nt, np, nx);
    let inv = 1.0 / (2.0 * grid.d_xi);
    for i in 0..nt {
        for j in 0..np {
            for k in 0..nx {
                let hi = if k + 1 < nx {
                    w_face.get(i, j, k + 1) * (s.get(i, j, k + 1) - s.get(i, j, k))
                } else {
                    0.0
                };
                let lo = if k > 0 {
                    w_face.get(i, j, k) * (s.get(i, j, k) - s.get(i, j, k - 1))
                } else {
                    0.0
                };
                out.set(i, j, k, (hi + lo) * inv);
            }
        }
    }
    out
}

/// Full transport ∇_v s + W(v) ∂s/∂ξ with precomputed face W.
pub fn full_advect_scalar_with_w(
    grid: &Grid,
    v: &VectorField,
    w_face: &ScalarField,
    s: &ScalarField,
) -> Result<ScalarField> {
    let mut out = advect_scalar(grid, v, s)?;
    let vt = vertical_transport_scalar(grid, w_face, s);
    out.axpy(1.0, &vt);
    Ok(out)
}

/// Full transport of a scalar; errors when the barotropic constraint residual
/// exceeds 100 × `constraint_tol` (scaled by the velocity magnitude).
pub fn full_advect(
    grid: &Grid,
    v: &VectorField,
    s: &ScalarField,
    constraint_tol: f64,
) -> Result<ScalarField> {
    let w = vertical_velocity(grid, v)?;
    check_constraint(grid, v, &w, constraint_tol)?;
    full_advect_scalar_with_w(grid, v, &w, s)
}

/// Full transport of a vector field (componentwise skew transport plus the
/// metric terms).
pub fn full_advect_vector(
    grid: &Grid,
    v: &VectorField,
    w: &VectorField,
    constraint_tol: f64,
) -> Result<VectorField> {
    let wf = vertical_velocity(grid, v)?;
    check_constraint(grid, v, &wf, constraint_tol)?;
    full_advect_vector_with_w(grid, v, &wf, w)
}

pub fn full_advect_vector_with_w(
    grid: &Grid,
    v: &VectorField,
    w_face: &ScalarField,
    w: &VectorField,
) -> Result<VectorField> {
    let mut out = advect_vector(grid, v, w)?;
    let vt_t = vertical_transport_scalar(grid, w_face, &w.comp_theta);
    let vt_p = vertical_transport_scalar(grid, w_face, &w.comp_phi);
    out.comp_theta.axpy(1.0, &vt_t);
    out.comp_phi.axpy(1.0, &vt_p);
    Ok(out)
}

fn check_constraint(grid: &Grid, v: &VectorField, w_face: &ScalarField, tol: f64) -> Result<()> {
    let mut residual: f64 = 0.0;
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            residual = residual.max(w_face.get(i, j, 0).abs());
        }
    }
    let limit = 100.0 * tol * v.max_abs().max(1.0);
    if residual > limit {
        return Err(Error::ConstraintViolated { residual, limit });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Hydrostatic column and the pressure-gradient / buoyancy adjoint pair.
// ---------------------------------------------------------------------------

/// Per-cell weights κ_k = ∫_cell (bP/p) dξ, integrated in closed form:
/// κ_k = bP/(P − p₀) · ln(p(face k+1)/p(face k)).
pub fn log_pressure_weights(grid: &Grid, params: &Params) -> Vec<f64> {
    let span = params.p_cap - params.p0;
    let c = params.b * params.p_cap / span;
    (0..grid.n_xi)
        .map(|k| {
            let p_lo = span * grid.xi_face(k) + params.p0;
            let p_hi = span * grid.xi_face(k + 1) + params.p0;
            c * (p_hi / p_lo).ln()
        })
        .collect()
}

/// Geopotential Φ on the n_xi + 1 ξ-faces:
/// Φ(face k) = Φ_s + Σ_{m ≥ k} κ_m (1 + a q_m) T_m, exact per-cell quadrature.
pub fn hydrostatic_phi(
    grid: &Grid,
    temperature: &ScalarField,
    moisture: &ScalarField,
    phi_s: &LevelField,
    params: &Params,
) -> Result<ScalarField> {
    check_scalar_shape("hydrostatic_phi(T)", temperature, grid.n_theta, grid.n_phi, grid.n_xi)?;
    check_scalar_shape("hydrostatic_phi(q)", moisture, grid.n_theta, grid.n_phi, grid.n_xi)?;
    if phi_s.n_theta != grid.n_theta || phi_s.n_phi != grid.n_phi {
        return Err(Error::ShapeMismatch("hydrostatic_phi: phi_s".into()));
    }
    let kappa = log_pressure_weights(grid, params);
    let nx = grid.n_xi;
    let mut phi = ScalarField::zeros(grid.n_theta, grid.n_phi, nx + 1);
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            let surface = phi_s.get(i, j);
            phi.set(i, j, nx, surface);
            let mut acc = surface;
            for k in (0..nx).rev() {
                acc += kappa[k] * (1.0 + params.a * moisture.get(i, j, k)) * temperature.get(i, j, k);
                phi.set(i, j, k, acc);
            }
        }
    }
    Ok(phi)
}

/// Baroclinic pressure-gradient force ∫_ξ¹ (bP/p) ∇[(1 + aq)T] dξ′, realised
/// as the horizontal gradient of the centre-anchored column integral
/// Ψ_k = ½κ_k G_k + Σ_{m>k} κ_m G_m so that ∫ PGF·v = ∫ (bP/p)(1+aq) W(v) T
/// exactly for constrained v.
pub fn pressure_gradient_force(
    grid: &Grid,
    temperature: &ScalarField,
    moisture: &ScalarField,
    params: &Params,
) -> Result<VectorField> {
    check_scalar_shape("pressure_gradient_force(T)", temperature, grid.n_theta, grid.n_phi, grid.n_xi)?;
    check_scalar_shape("pressure_gradient_force(q)", moisture, grid.n_theta, grid.n_phi, grid.n_xi)?;
    let kappa = log_pressure_weights(grid, params);
    let nx = grid.n_xi;
    let mut psi = ScalarField::zeros(grid.n_theta, grid.n_phi, nx);
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            let mut above = 0.0;
            for k in (0..nx).rev() {
                let g = kappa[k] * (1.0 + params.a * moisture.get(i, j, k)) * temperature.get(i, j, k);
                psi.set(i, j, k, above + 0.5 * g);
                above += g;
            }
        }
    }
    h_grad(grid, &psi)
}

/// Adiabatic heating coefficient field (bP/p)(1 + aq) W(v) at cells, the
/// quadrature adjoint of `pressure_gradient_force`: per cell
/// (κ_k/dξ)(1 + a q_k)·½(W_k + W_{k+1}).
pub fn buoyancy_heating(
    grid: &Grid,
    moisture: &ScalarField,
    w_face: &ScalarField,
    params: &Params,
) -> Result<ScalarField> {
    check_scalar_shape("buoyancy_heating(q)", moisture, grid.n_theta, grid.n_phi, grid.n_xi)?;
    check_scalar_shape("buoyancy_heating(W)", w_face, grid.n_theta, grid.n_phi, grid.n_xi + 1)?;
    let kappa = log_pressure_weights(grid, params);
    let mut out = ScalarField::zeros(grid.n_theta, grid.n_phi, grid.n_xi);
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            for k in 0..grid.n_xi {
                let wbar = 0.5 * (w_face.get(i, j, k) + w_face.get(i, j, k + 1));
                let val = kappa[k] / grid.d_xi
                    * (1.0 + params.a * moisture.get(i, j, k))
                    * wbar;
                out.set(i, j, k, val);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Vertical mean / fluctuation split and vertical derivatives.
// ---------------------------------------------------------------------------

/// Exact discrete vertical mean, broadcast back over all levels.
pub fn vertical_average(u: &VectorField) -> VectorField {
    VectorField {
        comp_theta: scalar_vertical_average(&u.comp_theta),
        comp_phi: scalar_vertical_average(&u.comp_phi),
    }
}

pub fn scalar_vertical_average(s: &ScalarField) -> ScalarField {
    let (nt, np, nx) = (s.n_theta, s.n_phi, s.n_xi);
    let mut out = ScalarField::zeros(nt, np, nx);
    for i in 0..nt {
        for j in 0..np {
            let mut acc = crate::field::CompensatedSum::new();
            for k in 0..nx {
                acc.add(s.get(i, j, k));
            }
            let mean = acc.value() / nx as f64;
            for k in 0..nx {
                out.set(i, j, k, mean);
            }
        }
    }
    out
}

/// Fluctuation u − ū; its discrete vertical mean is zero to round-off.
pub fn fluctuation(u: &VectorField) -> VectorField {
    let mut out = u.clone();
    let avg = vertical_average(u);
    out.axpy(-1.0, &avg);
    out
}

/// Centred vertical derivative at cells, ghosts populated from `bc`.
pub fn d_xi(grid: &Grid, s: &ScalarField, bc: VerticalBc) -> Result<ScalarField> {
    check_scalar_shape("d_xi", s, grid.n_theta, grid.n_phi, grid.n_xi)?;
    let (nt, np, nx) = (s.n_theta, s.n_phi, s.n_xi);
    let gamma = bc.top_ghost_factor(grid.d_xi);
    let inv = 1.0 / (2.0 * grid.d_xi);
    let mut out = ScalarField::zeros(nt, np, nx);
    for i in 0..nt {
        for j in 0..np {
            for k in 0..nx {
                let below = if k > 0 { s.get(i, j, k - 1) } else { s.get(i, j, 0) };
                let above = if k + 1 < nx { s.get(i, j, k + 1) } else { gamma * s.get(i, j, nx - 1) };
                out.set(i, j, k, (above - below) * inv);
            }
        }
    }
    Ok(out)
}

fn pointwise_mul(a: &ScalarField, b: &ScalarField) -> ScalarField {
    debug_assert!(a.same_shape(b));
    let mut out = a.clone();
    for (x, y) in out.values.iter_mut().zip(b.values.iter()) {
        *x *= y;
    }
    out
}

fn check_scalar_levels(name: &str, grid: &Grid, s: &ScalarField) -> Result<()> {
    if s.n_theta != grid.n_theta || s.n_phi != grid.n_phi {
        return Err(Error::ShapeMismatch(format!(
            "{name}: horizontal dims ({}, {}) vs grid ({}, {})",
            s.n_theta, s.n_phi, grid.n_theta, grid.n_phi
        )));
    }
    Ok(())
}

fn check_vector_levels(name: &str, grid: &Grid, v: &VectorField) -> Result<()> {
    if !v.consistent() {
        return Err(Error::ShapeMismatch(format!("{name}: vector components disagree")));
    }
    check_scalar_levels(name, grid, &v.comp_theta)
}

// ---------------------------------------------------------------------------
// Single-level variants used by the barotropic projection.
// ---------------------------------------------------------------------------

pub fn h_grad_level(grid: &Grid, s: &LevelField) -> (LevelField, LevelField) {
    let as_field = ScalarField {
        n_theta: s.n_theta,
        n_phi: s.n_phi,
        n_xi: 1,
        values: s.values.clone(),
    };
    let g = h_grad(grid, &as_field).expect("level shape checked by caller");
    (
        LevelField { n_theta: s.n_theta, n_phi: s.n_phi, values: g.comp_theta.values },
        LevelField { n_theta: s.n_theta, n_phi: s.n_phi, values: g.comp_phi.values },
    )
}

pub fn laplace_level(grid: &Grid, s: &LevelField) -> LevelField {
    let as_field = ScalarField {
        n_theta: s.n_theta,
        n_phi: s.n_phi,
        n_xi: 1,
        values: s.values.clone(),
    };
    let l = laplace_scalar(grid, &as_field).expect("level shape checked by caller");
    LevelField { n_theta: s.n_theta, n_phi: s.n_phi, values: l.values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, inner_omega, inner_omega_vec, integrate_omega, Params};
    use crate::harness::rng::DetRng;

    fn random_scalar(grid: &Grid, rng: &mut DetRng) -> ScalarField {
        ScalarField::from_fn(grid.n_theta, grid.n_phi, grid.n_xi, |_, _, _| rng.next_signed())
    }

    fn random_vector(grid: &Grid, rng: &mut DetRng) -> VectorField {
        VectorField {
            comp_theta: random_scalar(grid, rng),
            comp_phi: random_scalar(grid, rng),
        }
    }

    /// Random velocity with exactly zero vertical mean, hence satisfying the
    /// barotropic constraint to round-off.
    fn random_constrained(grid: &Grid, rng: &mut DetRng) -> VectorField {
        fluctuation(&random_vector(grid, rng))
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-30)
    }

    #[test]
    fn div_of_zonal_flow_vanishes() {
        let grid = build_grid(8, 16, 4).unwrap();
        let u = VectorField {
            comp_theta: ScalarField::zeros(8, 16, 4),
            comp_phi: ScalarField::from_fn(8, 16, 4, |_, _, _| 3.25),
        };
        let d = h_div(&grid, &u).unwrap();
        assert!(d.values.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn divergence_integrates_to_zero() {
        let grid = build_grid(8, 16, 4).unwrap();
        let mut rng = DetRng::new(1);
        for _ in 0..10 {
            let u = random_vector(&grid, &mut rng);
            let d = h_div(&grid, &u).unwrap();
            let mut scale = 0.0;
            for v in &d.values {
                scale += v.abs();
            }
            assert!(integrate_omega(&d, &grid).unwrap().abs() <= 1e-13 * scale.max(1.0));
        }
    }

    #[test]
    fn div_consistency_on_meridional_flow() {
        // u = (sin θ g(φ), 0) has divergence 2 cos θ g(φ).
        let err_for = |n: usize| {
            let grid = build_grid(n, 2 * n, 2).unwrap();
            let g = |phi: f64| (2.0 * phi).cos();
            let u = VectorField {
                comp_theta: ScalarField::from_fn(n, 2 * n, 2, |i, j, _| {
                    grid.sin_center[i] * g(grid.phi_centers[j])
                }),
                comp_phi: ScalarField::zeros(n, 2 * n, 2),
            };
            let d = h_div(&grid, &u).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                let theta = grid.theta_centers[i];
                if !(0.25..0.75).contains(&(theta / std::f64::consts::PI)) {
                    continue;
                }
                for j in 0..2 * n {
                    let exact = 2.0 * theta.cos() * g(grid.phi_centers[j]);
                    worst = worst.max((d.get(i, j, 0) - exact).abs());
                }
            }
            worst
        };
        let e1 = err_for(16);
        let e2 = err_for(32);
        assert!((e1 / e2).log2() >= 1.9, "observed order {}", (e1 / e2).log2());
    }

    #[test]
    fn gradient_is_negative_adjoint_of_divergence() {
        let grid = build_grid(8, 16, 4).unwrap();
        let mut rng = DetRng::new(2);
        for _ in 0..20 {
            let s = random_scalar(&grid, &mut rng);
            let u = random_vector(&grid, &mut rng);
            let lhs = inner_omega(&s, &h_div(&grid, &u).unwrap(), &grid).unwrap();
            let rhs = -inner_omega_vec(&h_grad(&grid, &s).unwrap(), &u, &grid).unwrap();
            assert!(rel(lhs, rhs) <= 1e-13, "residual {}", rel(lhs, rhs));
        }
    }

    #[test]
    fn gradient_of_constant_vanishes_and_consistency() {
        let grid = build_grid(16, 32, 2).unwrap();
        let c = ScalarField::from_fn(16, 32, 2, |_, _, _| 7.5);
        let g = h_grad(&grid, &c).unwrap();
        assert!(g.max_abs() == 0.0);

        let err_for = |n: usize| {
            let grid = build_grid(n, 2 * n, 2).unwrap();
            let s = ScalarField::from_fn(n, 2 * n, 2, |i, _, _| grid.theta_centers[i].cos());
            let g = h_grad(&grid, &s).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                if !(0.25..0.75).contains(&(grid.theta_centers[i] / std::f64::consts::PI)) {
                    continue;
                }
                for j in 0..2 * n {
                    worst = worst
                        .max((g.comp_theta.get(i, j, 0) + grid.sin_center[i]).abs())
                        .max(g.comp_phi.get(i, j, 0).abs());
                }
            }
            worst
        };
        let e1 = err_for(16);
        let e2 = err_for(32);
        assert!((e1 / e2).log2() >= 1.9);
    }

    #[test]
    fn scalar_advection_identity_and_consistency() {
        let grid = build_grid(8, 16, 4).unwrap();
        let mut rng = DetRng::new(3);
        for _ in 0..20 {
            let v = random_vector(&grid, &mut rng);
            let s = random_scalar(&grid, &mut rng);
            let adv = advect_scalar(&grid, &v, &s).unwrap();
            let d = h_div(&grid, &v).unwrap();
            let sdiv = pointwise_mul(&s, &d);
            let lhs = integrate_omega(&adv, &grid).unwrap();
            let rhs = integrate_omega(&sdiv, &grid).unwrap();
            assert!(rel(lhs, -rhs) <= 1e-13, "residual {}", rel(lhs, -rhs));
        }

        let zero = advect_scalar(
            &grid,
            &VectorField::zeros(8, 16, 4),
            &random_scalar(&grid, &mut rng),
        )
        .unwrap();
        assert!(zero.max_abs() == 0.0);

        // Solid-body rotation v = (0, sin θ) advects s(φ) by ∂s/∂φ.
        let err_for = |n: usize| {
            let grid = build_grid(n, 2 * n, 2).unwrap();
            let v = VectorField {
                comp_theta: ScalarField::zeros(n, 2 * n, 2),
                comp_phi: ScalarField::from_fn(n, 2 * n, 2, |i, _, _| grid.sin_center[i]),
            };
            let s = ScalarField::from_fn(n, 2 * n, 2, |_, j, _| (3.0 * grid.phi_centers[j]).sin());
            let adv = advect_scalar(&grid, &v, &s).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                if !(0.25..0.75).contains(&(grid.theta_centers[i] / std::f64::consts::PI)) {
                    continue;
                }
                for j in 0..2 * n {
                    let exact = 3.0 * (3.0 * grid.phi_centers[j]).cos();
                    worst = worst.max((adv.get(i, j, 0) - exact).abs());
                }
            }
            worst
        };
        let e1 = err_for(16);
        let e2 = err_for(32);
        assert!((e1 / e2).log2() >= 1.9);
    }

    #[test]
    fn vector_advection_metric_terms_exact() {
        let grid = build_grid(8, 16, 4).unwrap();
        let v = VectorField {
            comp_theta: ScalarField::zeros(8, 16, 4),
            comp_phi: ScalarField::from_fn(8, 16, 4, |i, _, _| grid.sin_center[i] * 1.5),
        };
        let adv = advect_vector(&grid, &v, &v).unwrap();
        for i in 0..8 {
            for j in 0..16 {
                for k in 0..4 {
                    let vphi = v.comp_phi.get(i, j, k);
                    let expect = -vphi * vphi * grid.cot_center[i];
                    assert_eq!(adv.comp_theta.get(i, j, k), expect);
                    assert_eq!(adv.comp_phi.get(i, j, k), 0.0);
                }
            }
        }
    }

    #[test]
    fn vertical_velocity_structure() {
        let grid = build_grid(8, 16, 4).unwrap();
        let mut rng = DetRng::new(4);

        // ξ-independent divergence gives a linear face profile (1 − ξ)·d.
        let v2d = {
            let t = ScalarField::from_fn(8, 16, 1, |i, j, _| {
                ((i as f64) * 0.3).sin() + (j as f64 * 0.2).cos()
            });
            let p = ScalarField::from_fn(8, 16, 1, |i, j, _| ((i + 2 * j) as f64 * 0.1).sin());
            VectorField {
                comp_theta: ScalarField::from_fn(8, 16, 4, |i, j, _| t.get(i, j, 0)),
                comp_phi: ScalarField::from_fn(8, 16, 4, |i, j, _| p.get(i, j, 0)),
            }
        };
        let d = h_div(&grid, &v2d).unwrap();
        let w = vertical_velocity(&grid, &v2d).unwrap();
        for i in 0..8 {
            for j in 0..16 {
                assert_eq!(w.get(i, j, 4), 0.0);
                for kf in 0..=4usize {
                    let expect = (1.0 - grid.xi_face(kf)) * d.get(i, j, 0);
                    assert!((w.get(i, j, kf) - expect).abs() <= 1e-14 * expect.abs().max(1.0));
                }
            }
        }

        // Constrained velocity: face value at ξ = 0 vanishes to round-off.
        let vc = random_constrained(&grid, &mut rng);
        let w = vertical_velocity(&grid, &vc).unwrap();
        for i in 0..8 {
            for j in 0..16 {
                assert!(w.get(i, j, 0).abs() <= 1e-13 * vc.max_abs().max(1.0));
            }
        }
    }

    #[test]
    fn full_advection_energy_neutrality() {
        let grid = build_grid(8, 16, 4).unwrap();
        let mut rng = DetRng::new(5);
        for _ in 0..10 {
            let v = random_constrained(&grid, &mut rng);
            let s = random_scalar(&grid, &mut rng);
            let adv = full_advect(&grid, &v, &s, 1e-10).unwrap();
            let num = inner_omega(&adv, &s, &grid).unwrap();
            let scale = inner_omega(&s, &s, &grid).unwrap() * v.max_abs();
            assert!(num.abs() <= 1e-12 * scale.max(1.0), "residual {num:.3e}");

            let w1 = random_vector(&grid, &mut rng);
            let advv = full_advect_vector(&grid, &v, &w1, 1e-10).unwrap();
            let num = inner_omega_vec(&advv, &w1, &grid).unwrap();
            let scale = inner_omega_vec(&w1, &w1, &grid).unwrap() * v.max_abs();
            assert!(num.abs() <= 1e-12 * scale.max(1.0), "vector residual {num:.3e}");
        }
    }

    #[test]
    fn full_advection_rejects_unconstrained_velocity() {
        let grid = build_grid(8, 16, 4).unwrap();
        // Strongly divergent barotropic flow.
        let v = VectorField {
            comp_theta: ScalarField::from_fn(8, 16, 4, |i, _, _| grid.theta_centers[i].sin()),
            comp_phi: ScalarField::zeros(8, 16, 4),
        };
        let s = ScalarField::from_fn(8, 16, 4, |_, _, k| k as f64);
        assert!(matches!(
            full_advect(&grid, &v, &s, 1e-10),
            Err(Error::ConstraintViolated { .. })
        ));
    }

    #[test]
    fn full_advection_reduces_to_horizontal_for_zonal_flow() {
        let grid = build_grid(8, 16, 4).unwrap();
        let mut rng = DetRng::new(6);
        // Zonal flow is exactly divergence-free, so W ≡ 0 bitwise.
        let v = VectorField {
            comp_theta: ScalarField::zeros(8, 16, 4),
            comp_phi: ScalarField::from_fn(8, 16, 4, |i, _, _| (grid.theta_centers[i] * 2.0).sin()),
        };
        let s = random_scalar(&grid, &mut rng);
        let full = full_advect(&grid, &v, &s, 1e-10).unwrap();
        let horiz = advect_scalar(&grid, &v, &s).unwrap();
        assert_eq!(full.values, horiz.values);
    }

    #[test]
    fn scalar_laplacian_adjoint_and_eigenfunction() {
        let grid = build_grid(8, 16, 4).unwrap();
        let mut rng = DetRng::new(7);
        for _ in 0..10 {
            let s = random_scalar(&grid, &mut rng);
            let s1 = random_scalar(&grid, &mut rng);
            let lhs = -inner_omega(&laplace_scalar(&grid, &s).unwrap(), &s1, &grid).unwrap();
            let rhs = inner_omega_vec(
                &h_grad(&grid, &s).unwrap(),
                &h_grad(&grid, &s1).unwrap(),
                &grid,
            )
            .unwrap();
            assert!(rel(lhs, rhs) <= 1e-13);
        }

        let c = ScalarField::from_fn(8, 16, 4, |_, _, _| 4.0);
        assert!(laplace_scalar(&grid, &c).unwrap().max_abs() == 0.0);

        // cos θ is the l = 1 zonal harmonic with eigenvalue −2.
        let err_for = |n: usize| {
            let grid = build_grid(n, 2 * n, 2).unwrap();
            let s = ScalarField::from_fn(n, 2 * n, 2, |i, _, _| grid.theta_centers[i].cos());
            let l = laplace_scalar(&grid, &s).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                if !(0.25..0.75).contains(&(grid.theta_centers[i] / std::f64::consts::PI)) {
                    continue;
                }
                for j in 0..2 * n {
                    worst = worst.max((l.get(i, j, 0) + 2.0 * grid.theta_centers[i].cos()).abs());
                }
            }
            worst
        };
        let e1 = err_for(16);
        let e2 = err_for(32);
        assert!((e1 / e2).log2() >= 1.9);
    }

    #[test]
    fn vector_laplacian_identity_and_consistency() {
        let grid = build_grid(8, 16, 4).unwrap();
        let mut rng = DetRng::new(8);
        for _ in 0..10 {
            let u = random_vector(&grid, &mut rng);
            let u1 = random_vector(&grid, &mut rng);
            let mut neg_lap = laplace_vector(&grid, &u).unwrap();
            neg_lap.scale(-1.0);
            let lhs = inner_omega_vec(&neg_lap, &u1, &grid).unwrap();
            let dt = cov_deriv_theta(&grid, &u).unwrap();
            let dt1 = cov_deriv_theta(&grid, &u1).unwrap();
            let dp = cov_deriv_phi(&grid, &u).unwrap();
            let dp1 = cov_deriv_phi(&grid, &u1).unwrap();
            let rhs = inner_omega_vec(&dt, &dt1, &grid).unwrap()
                + inner_omega_vec(&dp, &dp1, &grid).unwrap()
                + inner_omega_vec(&u, &u1, &grid).unwrap();
            assert!(rel(lhs, rhs) <= 1e-12, "residual {}", rel(lhs, rhs));
        }

        assert!(laplace_vector(&grid, &VectorField::zeros(8, 16, 4)).unwrap().max_abs() == 0.0);

        // u = (0, sin θ) satisfies Δu = (0, −2 sin θ).
        let err_for = |n: usize| {
            let grid = build_grid(n, 2 * n, 2).unwrap();
            let u = VectorField {
                comp_theta: ScalarField::zeros(n, 2 * n, 2),
                comp_phi: ScalarField::from_fn(n, 2 * n, 2, |i, _, _| grid.sin_center[i]),
            };
            let l = laplace_vector(&grid, &u).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                if !(0.25..0.75).contains(&(grid.theta_centers[i] / std::f64::consts::PI)) {
                    continue;
                }
                for j in 0..2 * n {
                    worst = worst
                        .max((l.comp_phi.get(i, j, 0) + 2.0 * grid.sin_center[i]).abs())
                        .max(l.comp_theta.get(i, j, 0).abs());
                }
            }
            worst
        };
        let e1 = err_for(16);
        let e2 = err_for(32);
        assert!((e1 / e2).log2() >= 1.9, "observed order {}", (e1 / e2).log2());
    }

    #[test]
    fn hydrostatic_column_closed_form() {
        let grid = build_grid(8, 16, 4).unwrap();
        let params = Params::default();
        let phi_s = LevelField::from_fn(8, 16, |i, j| 0.1 * i as f64 - 0.05 * j as f64);
        let zero_t = ScalarField::zeros(8, 16, 4);
        let zero_q = ScalarField::zeros(8, 16, 4);
        let phi = hydrostatic_phi(&grid, &zero_t, &zero_q, &phi_s, &params).unwrap();
        for i in 0..8 {
            for j in 0..16 {
                for kf in 0..=4 {
                    assert_eq!(phi.get(i, j, kf), phi_s.get(i, j));
                }
            }
        }

        let t0 = 2.5;
        let t = ScalarField::from_fn(8, 16, 4, |_, _, _| t0);
        let phi = hydrostatic_phi(&grid, &t, &zero_q, &phi_s, &params).unwrap();
        let span = params.p_cap - params.p0;
        for i in 0..8 {
            for j in 0..16 {
                for kf in 0..=4 {
                    let p = span * grid.xi_face(kf) + params.p0;
                    let expect = phi_s.get(i, j)
                        + params.b * params.p_cap * t0 / span * (params.p_cap / p).ln();
                    assert!(rel(phi.get(i, j, kf), expect) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn pressure_buoyancy_duality() {
        let grid = build_grid(8, 16, 4).unwrap();
        let params = Params::default();
        let mut rng = DetRng::new(9);
        for _ in 0..10 {
            let v = random_constrained(&grid, &mut rng);
            let t = random_scalar(&grid, &mut rng);
            let q = random_scalar(&grid, &mut rng);
            let pgf = pressure_gradient_force(&grid, &t, &q, &params).unwrap();
            let w = vertical_velocity(&grid, &v).unwrap();
            let heat = buoyancy_heating(&grid, &q, &w, &params).unwrap();
            let lhs = inner_omega_vec(&pgf, &v, &grid).unwrap();
            let rhs = inner_omega(&heat, &t, &grid).unwrap();
            assert!(rel(lhs, rhs) <= 1e-12, "residual {}", rel(lhs, rhs));
        }
    }

    #[test]
    fn mean_fluctuation_split() {
        let grid = build_grid(8, 16, 8).unwrap();
        let mut rng = DetRng::new(10);

        let u2d = VectorField {
            comp_theta: ScalarField::from_fn(8, 16, 8, |i, j, _| (i * 16 + j) as f64 * 0.01),
            comp_phi: ScalarField::from_fn(8, 16, 8, |i, j, _| (i as f64 - j as f64) * 0.02),
        };
        let avg = vertical_average(&u2d);
        assert_eq!(avg, u2d);
        assert!(fluctuation(&u2d).max_abs() == 0.0);
        assert_eq!(vertical_average(&avg), avg);

        let u = random_vector(&grid, &mut rng);
        let f = fluctuation(&u);
        for i in 0..8 {
            for j in 0..16 {
                let mut acc = crate::field::CompensatedSum::new();
                for k in 0..8 {
                    acc.add(f.comp_theta.get(i, j, k));
                }
                assert!((acc.value() / 8.0).abs() <= 1e-15);
            }
        }
        let _ = grid;
    }

    #[test]
    fn vertical_derivative_boundary_closures() {
        let grid = build_grid(4, 8, 8).unwrap();
        let c = ScalarField::from_fn(4, 8, 8, |_, _, _| 3.0);
        let d = d_xi(&grid, &c, VerticalBc::NeumannBoth).unwrap();
        assert!(d.max_abs() == 0.0);

        let mut rng = DetRng::new(11);
        let s = ScalarField::from_fn(4, 8, 8, |_, _, _| rng.next_signed());
        let a = d_xi(&grid, &s, VerticalBc::RobinTop { coef: 0.0 }).unwrap();
        let b = d_xi(&grid, &s, VerticalBc::NeumannBoth).unwrap();
        assert_eq!(a.values, b.values);

        // Profile exp(−α(ξ−1)) satisfies the Robin face condition exactly;
        // the discrete face derivative converges at second order.
        let alpha = 0.7;
        let face_err = |nx: usize| {
            let grid = build_grid(4, 8, nx).unwrap();
            let s = ScalarField::from_fn(4, 8, nx, |_, _, k| {
                (-alpha * (grid.xi_centers[k] - 1.0)).exp()
            });
            let gamma = VerticalBc::RobinTop { coef: alpha }.top_ghost_factor(grid.d_xi);
            let ghost = gamma * s.get(0, 0, nx - 1);
            let deriv = (ghost - s.get(0, 0, nx - 1)) / grid.d_xi;
            (deriv + alpha).abs()
        };
        let e1 = face_err(8);
        let e2 = face_err(16);
        assert!((e1 / e2).log2() >= 1.9, "observed order {}", (e1 / e2).log2());
    }

    #[test]
    fn operators_are_linear() {
        let grid = build_grid(8, 16, 4).unwrap();
        let mut rng = DetRng::new(12);
        let s1 = random_scalar(&grid, &mut rng);
        let s2 = random_scalar(&grid, &mut rng);
        let v = random_vector(&grid, &mut rng);
        let v2 = random_vector(&grid, &mut rng);
        let (a, b) = (1.7, -0.4);
        let mut combo = s1.clone();
        combo.scale(a);
        combo.axpy(b, &s2);

        let assert_close = |lhs: &ScalarField, rhs: &ScalarField| {
            for (x, y) in lhs.values.iter().zip(rhs.values.iter()) {
                assert!((x - y).abs() <= 1e-13 * x.abs().max(1.0));
            }
        };

        let lhs = laplace_scalar(&grid, &combo).unwrap();
        let mut rhs = laplace_scalar(&grid, &s1).unwrap();
        rhs.scale(a);
        rhs.axpy(b, &laplace_scalar(&grid, &s2).unwrap());
        assert_close(&lhs, &rhs);

        let lhs = h_grad(&grid, &combo).unwrap();
        let mut rhs = h_grad(&grid, &s1).unwrap();
        rhs.scale(a);
        rhs.axpy(b, &h_grad(&grid, &s2).unwrap());
        assert_close(&lhs.comp_theta, &rhs.comp_theta);
        assert_close(&lhs.comp_phi, &rhs.comp_phi);

        // Advection is linear in the advected field…
        let lhs = advect_scalar(&grid, &v, &combo).unwrap();
        let mut rhs = advect_scalar(&grid, &v, &s1).unwrap();
        rhs.scale(a);
        rhs.axpy(b, &advect_scalar(&grid, &v, &s2).unwrap());
        assert_close(&lhs, &rhs);

        // …and separately in the velocity.
        let mut vcombo = v.clone();
        vcombo.scale(a);
        vcombo.axpy(b, &v2);
        let lhs = advect_scalar(&grid, &vcombo, &s1).unwrap();
        let mut rhs = advect_scalar(&grid, &v, &s1).unwrap();
        rhs.scale(a);
        rhs.axpy(b, &advect_scalar(&grid, &v2, &s1).unwrap());
        assert_close(&lhs, &rhs);

        let lhs = h_div(&grid, &vcombo).unwrap();
        let mut rhs = h_div(&grid, &v).unwrap();
        rhs.scale(a);
        rhs.axpy(b, &h_div(&grid, &v2).unwrap());
        assert_close(&lhs, &rhs);
    }
}
