//! IMEX time integration.
//!
//! One step advances the prognostic fields through: explicit skew advection,
//! pressure-gradient and buoyancy terms (zonally filtered in the polar band),
//! an exact pointwise Coriolis rotation, implicit vertical diffusion
//! (backward Euler, tridiagonal per column) with horizontal diffusion either
//! explicit or folded into a Crank–Nicolson solve, and finally a barotropic
//! pressure projection that restores ∫₀¹ div v dξ = 0 through a conjugate-
//! gradient Poisson solve for the surface geopotential.

use crate::error::{Error, Result};
use crate::field::{LevelField, ScalarField, VectorField};
use crate::filter::{effective_zonal_spacing, PolarFilter};
use crate::geometry::{coriolis, inner_omega, inner_omega_vec, inner_sphere, Grid, Params};
use crate::model::{diagnose, rhs_moisture, rhs_momentum, rhs_temperature, FieldKind, Forcing, State};
use crate::operators::{
    h_grad_level, laplace_level, laplace_scalar, laplace_vector, vertical_velocity, VerticalBc,
};

/// How horizontal diffusion is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionMode {
    /// Vertical implicit (backward Euler) + horizontal explicit Euler.
    VerticalImplicitHorizontalExplicit,
    /// Crank–Nicolson on the full diffusion operator, solved by CG.
    FullyImplicitCn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub diffusion_mode: DiffusionMode,
    /// Constraint residual target, scaled by max(1, |v|∞).
    pub projection_tol: f64,
    pub max_cg_iters: usize,
    pub cfl_safety: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            diffusion_mode: DiffusionMode::VerticalImplicitHorizontalExplicit,
            projection_tol: 1e-10,
            max_cg_iters: 2000,
            cfl_safety: 0.8,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation { key: "step.dt".into(), msg: "must be positive".into() });
        }
        if !(self.projection_tol > 0.0) {
            return Err(Error::Validation {
                key: "step.projection_tol".into(),
                msg: "must be positive".into(),
            });
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Validation {
                key: "step.cfl_safety".into(),
                msg: "must lie in (0, 1]".into(),
            });
        }
        if self.max_cg_iters == 0 {
            return Err(Error::Validation {
                key: "step.max_cg_iters".into(),
                msg: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Scratch carried between steps: the previous surface-geopotential solve
/// warm-starts the next one, and the polar filter tables are reused.
#[derive(Debug, Clone)]
pub struct EllipticWorkspace {
    pub phi_prev: LevelField,
    pub filter: PolarFilter,
}

impl EllipticWorkspace {
    pub fn new(grid: &Grid) -> Self {
        Self {
            phi_prev: LevelField::zeros(grid.n_theta, grid.n_phi),
            filter: PolarFilter::new(grid),
        }
    }
}

// ---------------------------------------------------------------------------
// Conjugate gradient over quadrature-weighted field spaces.
// ---------------------------------------------------------------------------

trait CgSpace: Clone {
    fn dot(&self, other: &Self, grid: &Grid) -> f64;
    fn axpy_(&mut self, a: f64, other: &Self);
    fn scale_(&mut self, a: f64);
    fn max_abs_(&self) -> f64;
}

impl CgSpace for LevelField {
    fn dot(&self, other: &Self, grid: &Grid) -> f64 {
        inner_sphere(self, other, grid).expect("cg shapes fixed")
    }
    fn axpy_(&mut self, a: f64, other: &Self) {
        self.axpy(a, other);
    }
    fn scale_(&mut self, a: f64) {
        for v in self.values.iter_mut() {
            *v *= a;
        }
    }
    fn max_abs_(&self) -> f64 {
        self.max_abs()
    }
}

impl CgSpace for ScalarField {
    fn dot(&self, other: &Self, grid: &Grid) -> f64 {
        inner_omega(self, other, grid).expect("cg shapes fixed")
    }
    fn axpy_(&mut self, a: f64, other: &Self) {
        self.axpy(a, other);
    }
    fn scale_(&mut self, a: f64) {
        self.scale(a);
    }
    fn max_abs_(&self) -> f64 {
        self.max_abs()
    }
}

impl CgSpace for VectorField {
    fn dot(&self, other: &Self, grid: &Grid) -> f64 {
        inner_omega_vec(self, other, grid).expect("cg shapes fixed")
    }
    fn axpy_(&mut self, a: f64, other: &Self) {
        self.axpy(a, other);
    }
    fn scale_(&mut self, a: f64) {
        self.scale(a);
    }
    fn max_abs_(&self) -> f64 {
        self.max_abs()
    }
}

/// CG on an SPD operator under the grid quadrature inner product, stopping on
/// the max-norm of the residual. Summation order is fixed, so results are
/// bit-reproducible.
fn cg_solve<T: CgSpace>(
    grid: &Grid,
    apply: impl Fn(&T) -> T,
    b: &T,
    x0: T,
    tol_max_abs: f64,
    max_iters: usize,
) -> Result<(T, usize)> {
    let mut x = x0;
    let ax = apply(&x);
    let mut r = b.clone();
    r.axpy_(-1.0, &ax);
    if r.max_abs_() <= tol_max_abs {
        return Ok((x, 0));
    }
    let mut p = r.clone();
    let mut rz = r.dot(&r, grid);
    for iter in 1..=max_iters {
        let ap = apply(&p);
        let pap = p.dot(&ap, grid);
        if !(pap > 0.0) {
            return Err(Error::EllipticDivergence { residual: r.max_abs_(), iters: iter });
        }
        let alpha = rz / pap;
        x.axpy_(alpha, &p);
        r.axpy_(-alpha, &ap);
        if r.max_abs_() <= tol_max_abs {
            return Ok((x, iter));
        }
        let rz_new = r.dot(&r, grid);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut p_next = r.clone();
        p_next.axpy_(beta, &p);
        p = p_next;
    }
    Err(Error::EllipticDivergence { residual: r.max_abs_(), iters: max_iters })
}

fn remove_sphere_mean(grid: &Grid, f: &mut LevelField) {
    let mean = inner_sphere(f, &LevelField::from_fn(f.n_theta, f.n_phi, |_, _| 1.0), grid)
        .expect("shape fixed")
        / (4.0 * std::f64::consts::PI);
    for v in f.values.iter_mut() {
        *v -= mean;
    }
}

// ---------------------------------------------------------------------------
// Barotropic projection.
// ---------------------------------------------------------------------------

/// Project `v_star` onto the barotropic constraint: solve
/// ΔΦ_s = (1/dt)·∫₀¹ div v* dξ for mean-zero Φ_s, then subtract dt·∇Φ_s at
/// every level. The post-residual max |∫₀¹ div v dξ| is at most
/// `projection_tol` scaled by max(1, |v*|∞).
pub fn barotropic_projection(
    grid: &Grid,
    v_star: &VectorField,
    dt: f64,
    ws: &mut EllipticWorkspace,
    cfg: &StepConfig,
) -> Result<(VectorField, LevelField)> {
    let w = vertical_velocity(grid, v_star)?;
    let mut b = LevelField::zeros(grid.n_theta, grid.n_phi);
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            b.set(i, j, w.get(i, j, 0));
        }
    }
    let scale = v_star.max_abs().max(1.0);
    let tol = cfg.projection_tol * scale;

    // Solve −Δφ = −b (SPD form); warm-started from the previous step.
    let mut rhs = b.clone();
    rhs.scale_(-1.0);
    remove_sphere_mean(grid, &mut rhs);
    let x0 = ws.phi_prev.clone();
    let (mut phi, _iters) = cg_solve(
        grid,
        |x: &LevelField| {
            let mut l = laplace_level(grid, x);
            l.scale_(-1.0);
            l
        },
        &rhs,
        x0,
        0.5 * tol,
        cfg.max_cg_iters,
    )?;
    remove_sphere_mean(grid, &mut phi);
    ws.phi_prev = phi.clone();

    let (gt, gp) = h_grad_level(grid, &phi);
    let mut v = v_star.clone();
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            for k in 0..grid.n_xi {
                let idx = v.comp_theta.idx(i, j, k);
                v.comp_theta.values[idx] -= gt.get(i, j);
                v.comp_phi.values[idx] -= gp.get(i, j);
            }
        }
    }

    let post = crate::operators::constraint_residual(grid, &v)?;
    if post > tol {
        return Err(Error::EllipticDivergence { residual: post, iters: cfg.max_cg_iters });
    }

    let mut phi_s = phi;
    for val in phi_s.values.iter_mut() {
        *val /= dt;
    }
    Ok((v, phi_s))
}

// ---------------------------------------------------------------------------
// Implicit vertical diffusion.
// ---------------------------------------------------------------------------

/// Second difference with ghost closures from `bc`, per column entry.
fn vertical_laplacian_column(col: &[f64], gamma: f64, d_xi: f64, out: &mut [f64]) {
    let n = col.len();
    let inv2 = 1.0 / (d_xi * d_xi);
    for k in 0..n {
        let below = if k > 0 { col[k - 1] } else { col[0] };
        let above = if k + 1 < n { col[k + 1] } else { gamma * col[n - 1] };
        out[k] = (above - 2.0 * col[k] + below) * inv2;
    }
}

/// Backward-Euler solve (I − dt·coeff·∂²/∂ξ²) x = column with ghost closure
/// from `bc`. Solved in increment form, so fields the operator annihilates
/// (e.g. constants under Neumann ends) pass through bit-identically.
pub fn implicit_vertical_diffusion(
    column: &[f64],
    dt: f64,
    coeff: f64,
    bc: VerticalBc,
    d_xi: f64,
) -> Vec<f64> {
    let n = column.len();
    let gamma = bc.top_ghost_factor(d_xi);
    let r = dt * coeff / (d_xi * d_xi);

    let mut rhs = vec![0.0; n];
    vertical_laplacian_column(column, gamma, d_xi, &mut rhs);
    for v in rhs.iter_mut() {
        *v *= dt * coeff;
    }

    // Tridiagonal rows of (I − dt·coeff·L): boundary diagonals reflect the
    // Neumann mirror at the bottom and the Robin ghost at the top.
    let mut diag = vec![1.0 + 2.0 * r; n];
    diag[0] = 1.0 + r;
    diag[n - 1] = 1.0 + (2.0 - gamma) * r;
    let off = -r;

    // Thomas sweep.
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    assert!(diag[0] > 0.0, "singular tridiagonal system");
    c[0] = off / diag[0];
    d[0] = rhs[0] / diag[0];
    for k in 1..n {
        let denom = diag[k] - off * c[k - 1];
        assert!(denom > 0.0, "singular tridiagonal system");
        c[k] = off / denom;
        d[k] = (rhs[k] - off * d[k - 1]) / denom;
    }
    let mut delta = vec![0.0; n];
    delta[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        delta[k] = d[k] - c[k] * delta[k + 1];
    }

    column.iter().zip(delta.iter()).map(|(x, dlt)| x + dlt).collect()
}

fn vertical_diffuse_field(grid: &Grid, field: &mut ScalarField, dt: f64, coeff: f64, bc: VerticalBc) {
    let nx = grid.n_xi;
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            let start = field.idx(i, j, 0);
            let col: Vec<f64> = field.values[start..start + nx].to_vec();
            let solved = implicit_vertical_diffusion(&col, dt, coeff, bc, grid.d_xi);
            field.values[start..start + nx].copy_from_slice(&solved);
        }
    }
}

// ---------------------------------------------------------------------------
// CFL estimate.
// ---------------------------------------------------------------------------

/// Largest admissible dt: `cfl_safety` times the minimum over cells of
/// h_eff/|v|, h_eff²·Re₁/4 (explicit-diffusion mode only) and dξ/|W|,
/// where h_eff = min(dθ, effective zonal spacing).
pub fn cfl_dt(state: &State, grid: &Grid, params: &Params, cfg: &StepConfig) -> f64 {
    let mut dt_min = f64::INFINITY;
    let h_eff: Vec<f64> = (0..grid.n_theta)
        .map(|i| grid.d_theta.min(effective_zonal_spacing(grid, i)))
        .collect();

    if cfg.diffusion_mode == DiffusionMode::VerticalImplicitHorizontalExplicit {
        for h in &h_eff {
            dt_min = dt_min.min(h * h * params.re1 / 4.0);
        }
    }

    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            for k in 0..grid.n_xi {
                let vt = state.v.comp_theta.get(i, j, k);
                let vp = state.v.comp_phi.get(i, j, k);
                let speed = (vt * vt + vp * vp).sqrt();
                if speed > 0.0 {
                    dt_min = dt_min.min(h_eff[i] / speed);
                }
            }
        }
    }

    if let Ok(w) = vertical_velocity(grid, &state.v) {
        for val in &w.values {
            let a = val.abs();
            if a > 0.0 {
                dt_min = dt_min.min(grid.d_xi / a);
            }
        }
    }

    cfg.cfl_safety * dt_min
}

// ---------------------------------------------------------------------------
// The step itself.
// ---------------------------------------------------------------------------

fn rotate_coriolis(grid: &Grid, v: &mut VectorField, dt: f64, params: &Params) {
    for i in 0..grid.n_theta {
        let omega = coriolis(grid.theta_centers[i]) / params.r0;
        let (s, c) = (omega * dt).sin_cos();
        for j in 0..grid.n_phi {
            for k in 0..grid.n_xi {
                let idx = v.comp_theta.idx(i, j, k);
                let vt = v.comp_theta.values[idx];
                let vp = v.comp_phi.values[idx];
                v.comp_theta.values[idx] = c * vt + s * vp;
                v.comp_phi.values[idx] = -s * vt + c * vp;
            }
        }
    }
}

fn cn_diffuse_scalar(
    grid: &Grid,
    field: &ScalarField,
    dt: f64,
    coeff_h: f64,
    coeff_v: f64,
    bc: VerticalBc,
    cfg: &StepConfig,
) -> Result<ScalarField> {
    let gamma = bc.top_ghost_factor(grid.d_xi);
    let apply_a = |s: &ScalarField| -> ScalarField {
        let mut out = laplace_scalar(grid, s).expect("shape fixed");
        out.scale(-coeff_h);
        let nx = grid.n_xi;
        let mut lap = vec![0.0; nx];
        for i in 0..grid.n_theta {
            for j in 0..grid.n_phi {
                let start = s.idx(i, j, 0);
                vertical_laplacian_column(&s.values[start..start + nx], gamma, grid.d_xi, &mut lap);
                for k in 0..nx {
                    out.values[start + k] -= coeff_v * lap[k];
                }
            }
        }
        out
    };
    let half = 0.5 * dt;
    let mut rhs = field.clone();
    rhs.axpy(-half, &apply_a(field));
    let tol = cfg.projection_tol * rhs.max_abs().max(1.0);
    let (x, _) = cg_solve(
        grid,
        |s: &ScalarField| {
            let mut out = s.clone();
            out.axpy(half, &apply_a(s));
            out
        },
        &rhs,
        field.clone(),
        tol,
        cfg.max_cg_iters,
    )?;
    Ok(x)
}

fn cn_diffuse_vector(
    grid: &Grid,
    field: &VectorField,
    dt: f64,
    params: &Params,
    cfg: &StepConfig,
) -> Result<VectorField> {
    let apply_a = |u: &VectorField| -> VectorField {
        let mut out = laplace_vector(grid, u).expect("shape fixed");
        out.scale(-1.0 / params.re1);
        let nx = grid.n_xi;
        let mut lap = vec![0.0; nx];
        for comp in [0usize, 1] {
            for i in 0..grid.n_theta {
                for j in 0..grid.n_phi {
                    let (src, dst) = if comp == 0 {
                        (&u.comp_theta, &mut out.comp_theta)
                    } else {
                        (&u.comp_phi, &mut out.comp_phi)
                    };
                    let start = src.idx(i, j, 0);
                    vertical_laplacian_column(&src.values[start..start + nx], 1.0, grid.d_xi, &mut lap);
                    for k in 0..nx {
                        dst.values[start + k] -= lap[k] / params.re2;
                    }
                }
            }
        }
        out
    };
    let half = 0.5 * dt;
    let mut rhs = field.clone();
    rhs.axpy(-half, &apply_a(field));
    let tol = cfg.projection_tol * rhs.max_abs().max(1.0);
    let (x, _) = cg_solve(
        grid,
        |u: &VectorField| {
            let mut out = u.clone();
            out.axpy(half, &apply_a(u));
            out
        },
        &rhs,
        field.clone(),
        tol,
        cfg.max_cg_iters,
    )?;
    Ok(x)
}

/// Advance one step. The returned state satisfies the barotropic constraint
/// to `projection_tol` (scaled) and `t` advanced by `dt`.
pub fn step(
    grid: &Grid,
    state: &State,
    forcing: &Forcing,
    params: &Params,
    cfg: &StepConfig,
    ws: &mut EllipticWorkspace,
) -> Result<State> {
    if !state.is_finite() {
        return Err(Error::NonFinite("input state".into()));
    }
    let limit = cfl_dt(state, grid, params, cfg);
    if cfg.dt > limit {
        return Err(Error::CflViolation { dt: cfg.dt, limit });
    }
    let dt = cfg.dt;
    let diag = diagnose(grid, state, params)?;

    // Explicit tendencies; Φ_s is left to the projection and Coriolis to the
    // rotation substep.
    let mut tend_v = rhs_momentum(grid, state, &diag, params, cfg.projection_tol, false, false)?;
    let mut tend_t = rhs_temperature(grid, state, &diag, forcing, params, cfg.projection_tol)?;
    let mut tend_q = rhs_moisture(grid, state, &diag, forcing, params, cfg.projection_tol)?;

    let explicit_horizontal = cfg.diffusion_mode == DiffusionMode::VerticalImplicitHorizontalExplicit;
    if explicit_horizontal {
        // Horizontal momentum diffusion split: the gradient part (Δv + v) is
        // filtered with the rest of the tendency, the pointwise −v/Re₁ part is
        // added unfiltered afterwards so every zonal mode keeps its damping.
        let lap = laplace_vector(grid, &state.v)?;
        tend_v.axpy(1.0 / params.re1, &lap);
        tend_v.axpy(1.0 / params.re1, &state.v);
        let lap_t = laplace_scalar(grid, &state.temperature)?;
        tend_t.axpy(1.0 / params.rt1, &lap_t);
        let lap_q = laplace_scalar(grid, &state.moisture)?;
        tend_q.axpy(1.0 / params.rq1, &lap_q);
    }

    ws.filter.apply_vector(&mut tend_v);
    ws.filter.apply_scalar(&mut tend_t);
    ws.filter.apply_scalar(&mut tend_q);
    if explicit_horizontal {
        tend_v.axpy(-1.0 / params.re1, &state.v);
    }

    let mut v = state.v.clone();
    v.axpy(dt, &tend_v);
    let mut temperature = state.temperature.clone();
    temperature.axpy(dt, &tend_t);
    let mut moisture = state.moisture.clone();
    moisture.axpy(dt, &tend_q);

    rotate_coriolis(grid, &mut v, dt, params);

    match cfg.diffusion_mode {
        DiffusionMode::VerticalImplicitHorizontalExplicit => {
            let bc_v = FieldKind::Velocity.vertical_bc(params);
            vertical_diffuse_field(grid, &mut v.comp_theta, dt, 1.0 / params.re2, bc_v);
            vertical_diffuse_field(grid, &mut v.comp_phi, dt, 1.0 / params.re2, bc_v);
            vertical_diffuse_field(
                grid,
                &mut temperature,
                dt,
                1.0 / params.rt2,
                FieldKind::Temperature.vertical_bc(params),
            );
            vertical_diffuse_field(
                grid,
                &mut moisture,
                dt,
                1.0 / params.rq2,
                FieldKind::Moisture.vertical_bc(params),
            );
        }
        DiffusionMode::FullyImplicitCn => {
            v = cn_diffuse_vector(grid, &v, dt, params, cfg)?;
            temperature = cn_diffuse_scalar(
                grid,
                &temperature,
                dt,
                1.0 / params.rt1,
                1.0 / params.rt2,
                FieldKind::Temperature.vertical_bc(params),
                cfg,
            )?;
            moisture = cn_diffuse_scalar(
                grid,
                &moisture,
                dt,
                1.0 / params.rq1,
                1.0 / params.rq2,
                FieldKind::Moisture.vertical_bc(params),
                cfg,
            )?;
        }
    }

    let (v, phi_s) = barotropic_projection(grid, &v, dt, ws, cfg)?;

    if !(v.is_finite() && temperature.is_finite() && moisture.is_finite()) {
        return Err(Error::NonFinite("stepped state".into()));
    }

    Ok(State {
        v,
        temperature,
        moisture,
        phi_s,
        t: state.t + dt,
    })
}
