//! Prognostic state and the explicit tendencies of the moist system
//!
//!   ∂v/∂t + ∇_v v + W(v) ∂v/∂ξ + (f/R₀) k×v + ∇Φ_s + ∫_ξ¹ (bP/p) ∇[(1+aq)T] dξ′ = viscous,
//!   ∂T/∂t + ∇_v T + W(v) ∂T/∂ξ − (bP/p)(1+aq) W(v) = Q₁ + diffusive,
//!   ∂q/∂t + ∇_v q + W(v) ∂q/∂ξ = Q₂ + diffusive,
//!
//! with ∂v/∂ξ = 0 at both faces, ∂T/∂ξ = −α_s T and ∂q/∂ξ = −β_s q at ξ = 1,
//! homogeneous Neumann at ξ = 0. Viscous and diffusive terms belong to the
//! time stepper; Coriolis may be handled there by an exact rotation substep.

use crate::error::{Error, Result};
use crate::field::{LevelField, ScalarField, VectorField};
use crate::geometry::{coriolis, integrate_sphere, Grid, Params};
use crate::operators::{
    buoyancy_heating, full_advect_scalar_with_w, full_advect_vector_with_w, h_grad_level,
    hydrostatic_phi, pressure_gradient_force, vertical_velocity, VerticalBc,
};

/// Prognostic fields. `phi_s` carries the surface geopotential determined by
/// the most recent barotropic projection (zero mean; purely diagnostic).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub v: VectorField,
    pub temperature: ScalarField,
    pub moisture: ScalarField,
    pub phi_s: LevelField,
    pub t: f64,
}

impl State {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            v: VectorField::zeros(grid.n_theta, grid.n_phi, grid.n_xi),
            temperature: ScalarField::zeros(grid.n_theta, grid.n_phi, grid.n_xi),
            moisture: ScalarField::zeros(grid.n_theta, grid.n_phi, grid.n_xi),
            phi_s: LevelField::zeros(grid.n_theta, grid.n_phi),
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.temperature.is_finite() && self.moisture.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.v
            .max_abs()
            .max(self.temperature.max_abs())
            .max(self.moisture.max_abs())
    }
}

/// Fields diagnosed instantaneously from a state: face-centred vertical
/// velocity, face-centred geopotential and the mean-zero surface geopotential.
#[derive(Debug, Clone)]
pub struct Diagnosed {
    pub w_face: ScalarField,
    pub phi_face: ScalarField,
    pub phi_s: LevelField,
}

/// Time-independent heat and moisture sources.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub q1: ScalarField,
    pub q2: ScalarField,
}

impl Forcing {
    pub fn zero(grid: &Grid) -> Self {
        Self {
            q1: ScalarField::zeros(grid.n_theta, grid.n_phi, grid.n_xi),
            q2: ScalarField::zeros(grid.n_theta, grid.n_phi, grid.n_xi),
        }
    }
}

/// Which prognostic family a vertical boundary closure belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    Velocity,
    Temperature,
    Moisture,
}

impl FieldKind {
    pub fn vertical_bc(self, params: &Params) -> VerticalBc {
        match self {
            FieldKind::Velocity => VerticalBc::NeumannBoth,
            FieldKind::Temperature => VerticalBc::RobinTop { coef: params.alpha_s },
            FieldKind::Moisture => VerticalBc::RobinTop { coef: params.beta_s },
        }
    }
}

/// Ghost-cell values below ξ = 0 and above ξ = 1 for every column.
#[derive(Debug, Clone)]
pub struct GhostLayers {
    pub bottom: LevelField,
    pub top: LevelField,
}

/// Populate ghost cells for `field` according to the closure of `kind`.
pub fn apply_boundary(
    grid: &Grid,
    field: &ScalarField,
    kind: FieldKind,
    params: &Params,
) -> Result<GhostLayers> {
    crate::field::check_scalar_shape("apply_boundary", field, grid.n_theta, grid.n_phi, grid.n_xi)?;
    let gamma = kind.vertical_bc(params).top_ghost_factor(grid.d_xi);
    let nx = grid.n_xi;
    let mut bottom = LevelField::zeros(grid.n_theta, grid.n_phi);
    let mut top = LevelField::zeros(grid.n_theta, grid.n_phi);
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            bottom.set(i, j, field.get(i, j, 0));
            top.set(i, j, gamma * field.get(i, j, nx - 1));
        }
    }
    Ok(GhostLayers { bottom, top })
}

/// Diagnose W and Φ from the prognostic fields; Φ_s is re-centred to zero
/// sphere mean.
pub fn diagnose(grid: &Grid, state: &State, params: &Params) -> Result<Diagnosed> {
    let w_face = vertical_velocity(grid, &state.v)?;
    let mean = integrate_sphere(&state.phi_s, grid)? / (4.0 * std::f64::consts::PI);
    let mut phi_s = state.phi_s.clone();
    for v in phi_s.values.iter_mut() {
        *v -= mean;
    }
    let phi_face = hydrostatic_phi(grid, &state.temperature, &state.moisture, &phi_s, params)?;
    Ok(Diagnosed { w_face, phi_face, phi_s })
}

/// −(f/R₀) k×v, the explicit Coriolis tendency. Energy-neutral pointwise.
pub fn coriolis_tendency(grid: &Grid, v: &VectorField, params: &Params) -> VectorField {
    let mut out = VectorField::zeros(v.n_theta(), v.n_phi(), v.n_xi());
    for i in 0..v.n_theta() {
        let f = coriolis(grid.theta_centers[i]) / params.r0;
        for j in 0..v.n_phi() {
            for k in 0..v.n_xi() {
                let idx = out.comp_theta.idx(i, j, k);
                // k×v = (−v_φ, v_θ); tendency is −(f/R₀) k×v.
                out.comp_theta.values[idx] = f * v.comp_phi.values[idx];
                out.comp_phi.values[idx] = -f * v.comp_theta.values[idx];
            }
        }
    }
    out
}

/// Explicit momentum tendency
/// −[∇_v v + W(v)∂v/∂ξ + (f/R₀)k×v + ∇Φ_s + PGF(T, q)].
///
/// `include_coriolis` is false when the stepper handles rotation as an exact
/// substep; `include_phi_s` is false when Φ_s is left entirely to the
/// projection.
pub fn rhs_momentum(
    grid: &Grid,
    state: &State,
    diag: &Diagnosed,
    params: &Params,
    constraint_tol: f64,
    include_coriolis: bool,
    include_phi_s: bool,
) -> Result<VectorField> {
    check_constraint_from_diag(grid, &state.v, diag, constraint_tol)?;
    let mut out = full_advect_vector_with_w(grid, &state.v, &diag.w_face, &state.v)?;
    out.scale(-1.0);
    let pgf = pressure_gradient_force(grid, &state.temperature, &state.moisture, params)?;
    out.axpy(-1.0, &pgf);
    if include_phi_s {
        let (gt, gp) = h_grad_level(grid, &diag.phi_s);
        for i in 0..grid.n_theta {
            for j in 0..grid.n_phi {
                for k in 0..grid.n_xi {
                    let idx = out.comp_theta.idx(i, j, k);
                    out.comp_theta.values[idx] -= gt.get(i, j);
                    out.comp_phi.values[idx] -= gp.get(i, j);
                }
            }
        }
    }
    if include_coriolis {
        let cor = coriolis_tendency(grid, &state.v, params);
        out.axpy(1.0, &cor);
    }
    Ok(out)
}

/// Explicit temperature tendency −[∇_v T + W∂T/∂ξ] + (bP/p)(1+aq)W + Q₁.
pub fn rhs_temperature(
    grid: &Grid,
    state: &State,
    diag: &Diagnosed,
    forcing: &Forcing,
    params: &Params,
    constraint_tol: f64,
) -> Result<ScalarField> {
    check_constraint_from_diag(grid, &state.v, diag, constraint_tol)?;
    let mut out = full_advect_scalar_with_w(grid, &state.v, &diag.w_face, &state.temperature)?;
    out.scale(-1.0);
    let heat = buoyancy_heating(grid, &state.moisture, &diag.w_face, params)?;
    out.axpy(1.0, &heat);
    out.axpy(1.0, &forcing.q1);
    Ok(out)
}

/// Explicit moisture tendency −[∇_v q + W∂q/∂ξ] + Q₂.
pub fn rhs_moisture(
    grid: &Grid,
    state: &State,
    diag: &Diagnosed,
    forcing: &Forcing,
    _params: &Params,
    constraint_tol: f64,
) -> Result<ScalarField> {
    check_constraint_from_diag(grid, &state.v, diag, constraint_tol)?;
    let mut out = full_advect_scalar_with_w(grid, &state.v, &diag.w_face, &state.moisture)?;
    out.scale(-1.0);
    out.axpy(1.0, &forcing.q2);
    Ok(out)
}

fn check_constraint_from_diag(
    grid: &Grid,
    v: &VectorField,
    diag: &Diagnosed,
    tol: f64,
) -> Result<()> {
    let mut residual: f64 = 0.0;
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            residual = residual.max(diag.w_face.get(i, j, 0).abs());
        }
    }
    let limit = 100.0 * tol * v.max_abs().max(1.0);
    if residual > limit {
        return Err(Error::ConstraintViolated { residual, limit });
    }
    Ok(())
}
