//! Norm functionals, the discrete energy budget and run-level experiment
//! evaluators (decay envelope, twin separation, absorbing-ball statistics,
//! barotropic/baroclinic split).

use crate::error::{Error, Result};
use crate::field::{CompensatedSum, ScalarField, VectorField};
use crate::geometry::{inner_omega, inner_omega_vec, Grid, Params};
use crate::model::{FieldKind, Forcing, State};
use crate::operators::{
    cov_deriv_phi, cov_deriv_theta, d_xi, fluctuation, h_grad, vertical_average, vertical_velocity,
    VerticalBc,
};

/// Quadrature-weighted Lᵖ norm of a scalar field, p ∈ {2, 3, 4}.
pub fn lp_norm_scalar(grid: &Grid, s: &ScalarField, p: u32) -> Result<f64> {
    if !matches!(p, 2 | 3 | 4) {
        return Err(Error::OutOfRange(format!("lp_norm: p = {p} not in {{2, 3, 4}}")));
    }
    crate::field::check_scalar_shape("lp_norm", s, grid.n_theta, grid.n_phi, s.n_xi)?;
    let mut acc = CompensatedSum::new();
    for i in 0..grid.n_theta {
        let w = grid.weight(i) * grid.d_xi;
        for j in 0..grid.n_phi {
            for k in 0..s.n_xi {
                acc.add(w * s.get(i, j, k).abs().powi(p as i32));
            }
        }
    }
    Ok(root_p(acc.value(), p))
}

fn root_p(x: f64, p: u32) -> f64 {
    match p {
        2 => x.sqrt(),
        3 => x.cbrt(),
        _ => x.sqrt().sqrt(),
    }
}

/// Lᵖ norm of a vector field using the pointwise magnitude |X| = (X_θ²+X_φ²)^½.
pub fn lp_norm_vector(grid: &Grid, v: &VectorField, p: u32) -> Result<f64> {
    if !matches!(p, 2 | 3 | 4) {
        return Err(Error::OutOfRange(format!("lp_norm: p = {p} not in {{2, 3, 4}}")));
    }
    let mut acc = CompensatedSum::new();
    for i in 0..grid.n_theta {
        let w = grid.weight(i) * grid.d_xi;
        for j in 0..grid.n_phi {
            for k in 0..v.n_xi() {
                let m = v.comp_theta.get(i, j, k).hypot(v.comp_phi.get(i, j, k));
                acc.add(w * m.powi(p as i32));
            }
        }
    }
    Ok(root_p(acc.value(), p))
}

/// ∫ |∂s/∂ξ|² over interior ξ-faces (the Dirichlet form of the column solves).
pub fn xi_face_seminorm_sq(grid: &Grid, s: &ScalarField) -> f64 {
    let mut acc = CompensatedSum::new();
    let inv = 1.0 / grid.d_xi;
    for i in 0..grid.n_theta {
        let w = grid.weight(i) * grid.d_xi;
        for j in 0..grid.n_phi {
            for k in 0..s.n_xi.saturating_sub(1) {
                let d = (s.get(i, j, k + 1) - s.get(i, j, k)) * inv;
                acc.add(w * d * d);
            }
        }
    }
    acc.value()
}

/// Lᵖ(S²) norm of the Robin-consistent face value of `s` at ξ = 1.
pub fn trace_top_lp(grid: &Grid, s: &ScalarField, p: u32, bc: VerticalBc) -> f64 {
    let gamma = bc.top_ghost_factor(grid.d_xi);
    let face = 0.5 * (1.0 + gamma);
    let mut acc = CompensatedSum::new();
    for i in 0..grid.n_theta {
        let w = grid.weight(i);
        for j in 0..grid.n_phi {
            let t = face * s.get(i, j, s.n_xi - 1);
            acc.add(w * t.abs().powi(p as i32));
        }
    }
    root_p(acc.value(), p)
}

/// Covariant H¹-type seminorm ∫(|∇_θ v|² + |∇_φ v|²) of a vector field.
pub fn covariant_seminorm_sq(grid: &Grid, v: &VectorField) -> Result<f64> {
    let dt = cov_deriv_theta(grid, v)?;
    let dp = cov_deriv_phi(grid, v)?;
    Ok(inner_omega_vec(&dt, &dt, grid)? + inner_omega_vec(&dp, &dp, grid)?)
}

/// Squared V₂/V₃ norm of a scalar: ∫(|∇s|² + |∂s/∂ξ|² + s²).
pub fn h1_scalar_sq(grid: &Grid, s: &ScalarField) -> Result<f64> {
    let g = h_grad(grid, s)?;
    Ok(inner_omega_vec(&g, &g, grid)? + xi_face_seminorm_sq(grid, s) + inner_omega(s, s, grid)?)
}

/// Squared V₁ norm of a vector: ∫(|∇_θv|² + |∇_φv|² + |∂v/∂ξ|² + |v|²).
pub fn h1_vector_sq(grid: &Grid, v: &VectorField) -> Result<f64> {
    Ok(covariant_seminorm_sq(grid, v)?
        + xi_face_seminorm_sq(grid, &v.comp_theta)
        + xi_face_seminorm_sq(grid, &v.comp_phi)
        + inner_omega_vec(v, v, grid)?)
}

/// Per-field and total V norms of a state: (‖v‖, ‖T‖, ‖q‖, ‖U‖).
pub fn h1_norm(grid: &Grid, state: &State) -> Result<(f64, f64, f64, f64)> {
    let v2 = h1_vector_sq(grid, &state.v)?;
    let t2 = h1_scalar_sq(grid, &state.temperature)?;
    let q2 = h1_scalar_sq(grid, &state.moisture)?;
    Ok((v2.sqrt(), t2.sqrt(), q2.sqrt(), (v2 + t2 + q2).sqrt()))
}

/// The dissipation and forcing functionals of the L² energy identity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Budget {
    pub diss_v: f64,
    pub diss_t: f64,
    pub diss_q: f64,
    pub force_t: f64,
    pub force_q: f64,
}

impl Budget {
    pub fn dissipation(&self) -> f64 {
        self.diss_v + self.diss_t + self.diss_q
    }
    pub fn forcing(&self) -> f64 {
        self.force_t + self.force_q
    }
}

pub fn energy_budget(
    grid: &Grid,
    state: &State,
    forcing: &Forcing,
    params: &Params,
) -> Result<Budget> {
    let v = &state.v;
    let diss_v = (covariant_seminorm_sq(grid, v)? + inner_omega_vec(v, v, grid)?) / params.re1
        + (xi_face_seminorm_sq(grid, &v.comp_theta) + xi_face_seminorm_sq(grid, &v.comp_phi))
            / params.re2;

    // Trace terms carry the (1 + c·dξ/2) factor that makes them equal the
    // Robin column operator's own boundary extraction, so the budget closes
    // against the implicit solves at O(dt).
    let gt = h_grad(grid, &state.temperature)?;
    let trace_t = trace_top_lp(grid, &state.temperature, 2, FieldKind::Temperature.vertical_bc(params));
    let diss_t = inner_omega_vec(&gt, &gt, grid)? / params.rt1
        + xi_face_seminorm_sq(grid, &state.temperature) / params.rt2
        + params.alpha_s / params.rt2 * trace_t * trace_t * (1.0 + params.alpha_s * grid.d_xi / 2.0);

    let gq = h_grad(grid, &state.moisture)?;
    let trace_q = trace_top_lp(grid, &state.moisture, 2, FieldKind::Moisture.vertical_bc(params));
    let diss_q = inner_omega_vec(&gq, &gq, grid)? / params.rq1
        + xi_face_seminorm_sq(grid, &state.moisture) / params.rq2
        + params.beta_s / params.rq2 * trace_q * trace_q * (1.0 + params.beta_s * grid.d_xi / 2.0);

    Ok(Budget {
        diss_v,
        diss_t,
        diss_q,
        force_t: inner_omega(&forcing.q1, &state.temperature, grid)?,
        force_q: inner_omega(&forcing.q2, &state.moisture, grid)?,
    })
}

/// Barotropic and baroclinic kinetic energies (E_bar, E_fluc); their sum is
/// |v|₂² by the orthogonality of the mean/fluctuation split.
pub fn barotropic_baroclinic_energy(grid: &Grid, v: &VectorField) -> Result<(f64, f64)> {
    let avg = vertical_average(v);
    let fluc = fluctuation(v);
    Ok((inner_omega_vec(&avg, &avg, grid)?, inner_omega_vec(&fluc, &fluc, grid)?))
}

/// ‖v̄‖_{H¹(S²)} of the vertical-mean flow.
pub fn barotropic_h1(grid: &Grid, v: &VectorField) -> Result<f64> {
    let avg = vertical_average(v);
    let level = VectorField {
        comp_theta: ScalarField {
            n_theta: grid.n_theta,
            n_phi: grid.n_phi,
            n_xi: 1,
            values: avg.comp_theta.level(0).values,
        },
        comp_phi: ScalarField {
            n_theta: grid.n_theta,
            n_phi: grid.n_phi,
            n_xi: 1,
            values: avg.comp_phi.level(0).values,
        },
    };
    let dt = cov_deriv_theta(grid, &level)?;
    let dp = cov_deriv_phi(grid, &level)?;
    // Fields with n_xi = 1 integrate with weight d_xi; rescale to a pure
    // surface integral.
    let sq = (inner_omega_vec(&dt, &dt, grid)?
        + inner_omega_vec(&dp, &dp, grid)?
        + inner_omega_vec(&level, &level, grid)?)
        / grid.d_xi;
    Ok(sq.sqrt())
}

/// One row of the diagnostics series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagRecord {
    pub t: f64,
    pub l2_v: f64,
    pub l2_t: f64,
    pub l2_q: f64,
    pub l3_vfluc: f64,
    pub l3_t: f64,
    pub l4_vfluc: f64,
    pub l4_t: f64,
    pub l4_q: f64,
    pub h1_v: f64,
    pub h1_t: f64,
    pub h1_q: f64,
    pub h1_u: f64,
    pub trace_t_l2: f64,
    pub trace_q_l2: f64,
    pub trace_t_l4: f64,
    pub trace_q_l4: f64,
    pub vxi_l2: f64,
    pub txi_l2: f64,
    pub qxi_l2: f64,
    pub barotropic_h1: f64,
    pub constraint_residual: f64,
    pub diss_v: f64,
    pub diss_t: f64,
    pub diss_q: f64,
    pub force_t: f64,
    pub force_q: f64,
    pub energy_residual: f64,
}

pub const DIAG_CSV_HEADER: &str = "t,l2_v,l2_T,l2_q,l3_vfluc,l3_T,l4_vfluc,l4_T,l4_q,h1_v,h1_T,h1_q,h1_U,trace_T_l2,trace_q_l2,trace_T_l4,trace_q_l4,vxi_l2,Txi_l2,qxi_l2,barotropic_h1,constraint_residual,diss_v,diss_T,diss_q,force_T,force_q,energy_residual";

impl DiagRecord {
    /// Evaluate every functional on `state`. `energy_prev` is (|U|₂² at the
    /// previous step, dt of that step); when present the budget residual
    /// |d/dt ½|U|₂² + dissipation − forcing| is attached.
    pub fn compute(
        grid: &Grid,
        state: &State,
        forcing: &Forcing,
        params: &Params,
        energy_prev: Option<(f64, f64)>,
    ) -> Result<Self> {
        let vfluc = fluctuation(&state.v);
        let l2_v = lp_norm_vector(grid, &state.v, 2)?;
        let l2_t = lp_norm_scalar(grid, &state.temperature, 2)?;
        let l2_q = lp_norm_scalar(grid, &state.moisture, 2)?;
        let (h1_v, h1_t, h1_q, h1_u) = h1_norm(grid, state)?;
        let budget = energy_budget(grid, state, forcing, params)?;
        let u2 = l2_v * l2_v + l2_t * l2_t + l2_q * l2_q;
        let energy_residual = match energy_prev {
            Some((u2_prev, dt)) if dt > 0.0 => {
                (0.5 * (u2 - u2_prev) / dt + budget.dissipation() - budget.forcing()).abs()
            }
            _ => 0.0,
        };
        let w = vertical_velocity(grid, &state.v)?;
        let mut constraint: f64 = 0.0;
        for i in 0..grid.n_theta {
            for j in 0..grid.n_phi {
                constraint = constraint.max(w.get(i, j, 0).abs());
            }
        }
        Ok(Self {
            t: state.t,
            l2_v,
            l2_t,
            l2_q,
            l3_vfluc: lp_norm_vector(grid, &vfluc, 3)?,
            l3_t: lp_norm_scalar(grid, &state.temperature, 3)?,
            l4_vfluc: lp_norm_vector(grid, &vfluc, 4)?,
            l4_t: lp_norm_scalar(grid, &state.temperature, 4)?,
            l4_q: lp_norm_scalar(grid, &state.moisture, 4)?,
            h1_v,
            h1_t,
            h1_q,
            h1_u,
            trace_t_l2: trace_top_lp(grid, &state.temperature, 2, FieldKind::Temperature.vertical_bc(params)),
            trace_q_l2: trace_top_lp(grid, &state.moisture, 2, FieldKind::Moisture.vertical_bc(params)),
            trace_t_l4: trace_top_lp(grid, &state.temperature, 4, FieldKind::Temperature.vertical_bc(params)),
            trace_q_l4: trace_top_lp(grid, &state.moisture, 4, FieldKind::Moisture.vertical_bc(params)),
            vxi_l2: (xi_face_seminorm_sq(grid, &state.v.comp_theta)
                + xi_face_seminorm_sq(grid, &state.v.comp_phi))
            .sqrt(),
            txi_l2: xi_face_seminorm_sq(grid, &state.temperature).sqrt(),
            qxi_l2: xi_face_seminorm_sq(grid, &state.moisture).sqrt(),
            barotropic_h1: barotropic_h1(grid, &state.v)?,
            constraint_residual: constraint,
            diss_v: budget.diss_v,
            diss_t: budget.diss_t,
            diss_q: budget.diss_q,
            force_t: budget.force_t,
            force_q: budget.force_q,
            energy_residual,
        })
    }

    pub fn u2(&self) -> f64 {
        self.l2_v * self.l2_v + self.l2_t * self.l2_t + self.l2_q * self.l2_q
    }

    pub fn csv_row(&self) -> String {
        let vals = [
            self.t,
            self.l2_v,
            self.l2_t,
            self.l2_q,
            self.l3_vfluc,
            self.l3_t,
            self.l4_vfluc,
            self.l4_t,
            self.l4_q,
            self.h1_v,
            self.h1_t,
            self.h1_q,
            self.h1_u,
            self.trace_t_l2,
            self.trace_q_l2,
            self.trace_t_l4,
            self.trace_q_l4,
            self.vxi_l2,
            self.txi_l2,
            self.qxi_l2,
            self.barotropic_h1,
            self.constraint_residual,
            self.diss_v,
            self.diss_t,
            self.diss_q,
            self.force_t,
            self.force_q,
            self.energy_residual,
        ];
        let mut out = String::with_capacity(vals.len() * 24);
        for (n, v) in vals.iter().enumerate() {
            if n > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out
    }
}

/// Verdict of an unforced decay experiment.
#[derive(Debug, Clone, Copy)]
pub struct DecayReport {
    /// Rate min{1/Re₁, 1/(2Rt₂), α_s/(2Rt₂), 1/(2Rq₂), β_s/(2Rq₂)}.
    pub c0: f64,
    /// Least-squares slope of −ln |U|₂² over the series.
    pub fitted_rate: f64,
    pub monotone: bool,
    pub envelope_ok: bool,
}

pub fn decay_rate_c0(params: &Params) -> f64 {
    (1.0 / params.re1)
        .min(1.0 / (2.0 * params.rt2))
        .min(params.alpha_s / (2.0 * params.rt2))
        .min(1.0 / (2.0 * params.rq2))
        .min(params.beta_s / (2.0 * params.rq2))
}

pub fn decay_envelope(series: &[DiagRecord], params: &Params) -> Result<DecayReport> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let c0 = decay_rate_c0(params);
    let u0 = series[0].u2();
    let t0 = series[0].t;

    let mut monotone = true;
    for w in series.windows(2) {
        if w[1].u2() > w[0].u2() * (1.0 + 1e-10) {
            monotone = false;
        }
    }

    let mut envelope_ok = true;
    for r in series {
        if r.u2() > u0 * (-0.5 * c0 * (r.t - t0)).exp() * (1.0 + 1e-12) {
            envelope_ok = false;
        }
    }

    // Least-squares fit of ln u² against t, skipping exact zeros.
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|r| r.u2() > 0.0)
        .map(|r| (r.t, r.u2().ln()))
        .collect();
    let fitted_rate = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() > 0.0 {
            -(n * sxy - sx * sy) / denom
        } else {
            0.0
        }
    } else {
        0.0
    };

    Ok(DecayReport { c0, fitted_rate, monotone, envelope_ok })
}

/// One sample of a twin-run separation series.
#[derive(Debug, Clone, Copy)]
pub struct SeparationSample {
    pub t: f64,
    /// |v₁−v₂|₂² + |T₁−T₂|₂² + |q₁−q₂|₂².
    pub sep: f64,
    /// Gronwall-type coefficient built from the reference run with unit
    /// constants.
    pub coeff: f64,
}

/// Coefficient K(t) assembled from the norm factors of the continuous-
/// dependence estimate, with unit constants.
pub fn gronwall_coefficient(grid: &Grid, reference: &State, params: &Params) -> Result<f64> {
    let v4 = lp_norm_vector(grid, &reference.v, 4)?;
    let t4 = lp_norm_scalar(grid, &reference.temperature, 4)?;
    let q4 = lp_norm_scalar(grid, &reference.moisture, 4)?;

    let bc_v = FieldKind::Velocity.vertical_bc(params);
    let bc_t = FieldKind::Temperature.vertical_bc(params);
    let bc_q = FieldKind::Moisture.vertical_bc(params);

    let vxi = VectorField {
        comp_theta: d_xi(grid, &reference.v.comp_theta, bc_v)?,
        comp_phi: d_xi(grid, &reference.v.comp_phi, bc_v)?,
    };
    let vxi_l2_sq = inner_omega_vec(&vxi, &vxi, grid)?;
    let grad_vxi_sq = covariant_seminorm_sq(grid, &vxi)?;

    let txi = d_xi(grid, &reference.temperature, bc_t)?;
    let txi_l2_sq = inner_omega(&txi, &txi, grid)?;
    let gtxi = h_grad(grid, &txi)?;
    let grad_txi_sq = inner_omega_vec(&gtxi, &gtxi, grid)?;

    let qxi = d_xi(grid, &reference.moisture, bc_q)?;
    let qxi_l2_sq = inner_omega(&qxi, &qxi, grid)?;
    let gqxi = h_grad(grid, &qxi)?;
    let grad_qxi_sq = inner_omega_vec(&gqxi, &gqxi, grid)?;

    let k_v = v4.powi(8) + t4.powi(8) + q4.powi(8) + vxi_l2_sq + (vxi_l2_sq + 1.0) * grad_vxi_sq;
    let k_t = v4.powi(8) + t4.powi(8) + txi_l2_sq + (txi_l2_sq + 1.0) * grad_txi_sq;
    let k_q = v4.powi(8)
        + t4.powi(2)
        + t4.powi(4)
        + q4.powi(8)
        + qxi_l2_sq
        + (qxi_l2_sq + 1.0) * grad_qxi_sq;
    Ok(k_v + k_t + k_q)
}

/// Squared L² separation between two aligned state series, with the
/// reference-run coefficient series.
pub fn twin_separation(
    run_a: &[State],
    run_b: &[State],
    grid: &Grid,
    params: &Params,
) -> Result<Vec<SeparationSample>> {
    if run_a.len() != run_b.len() {
        return Err(Error::LengthMismatch(run_a.len(), run_b.len()));
    }
    let mut out = Vec::with_capacity(run_a.len());
    for (a, b) in run_a.iter().zip(run_b.iter()) {
        if !a.v.same_shape(&b.v) {
            return Err(Error::ShapeMismatch("twin_separation: states disagree".into()));
        }
        let mut dv = a.v.clone();
        dv.axpy(-1.0, &b.v);
        let mut dt_ = a.temperature.clone();
        dt_.axpy(-1.0, &b.temperature);
        let mut dq = a.moisture.clone();
        dq.axpy(-1.0, &b.moisture);
        let sep = inner_omega_vec(&dv, &dv, grid)?
            + inner_omega(&dt_, &dt_, grid)?
            + inner_omega(&dq, &dq, grid)?;
        out.push(SeparationSample {
            t: a.t,
            sep,
            coeff: gronwall_coefficient(grid, b, params)?,
        });
    }
    Ok(out)
}

/// Empirical absorbing-ball statistics over an ensemble of ‖U‖ series.
#[derive(Debug, Clone)]
pub struct AbsorbReport {
    /// Sup of late-time ‖U‖ over all members.
    pub rho_hat: f64,
    /// Per member, first time from which ‖U‖ stays ≤ rho_hat.
    pub entry_times: Vec<f64>,
    /// Ratio of the largest to the smallest member-wise late-time sup.
    pub spread: f64,
}

pub fn absorbing_stats(members: &[Vec<DiagRecord>], t_transient: f64) -> Result<AbsorbReport> {
    if members.len() < 2 {
        return Err(Error::InsufficientMembers(members.len()));
    }
    let mut late_sups = Vec::with_capacity(members.len());
    for series in members {
        if series.is_empty() {
            return Err(Error::EmptySeries);
        }
        let sup = series
            .iter()
            .filter(|r| r.t >= t_transient)
            .map(|r| r.h1_u)
            .fold(f64::NEG_INFINITY, f64::max);
        if !sup.is_finite() {
            return Err(Error::EmptySeries);
        }
        late_sups.push(sup);
    }
    let rho_hat = late_sups.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = late_sups.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if lo > 0.0 { rho_hat / lo } else { 1.0 };

    let tol = rho_hat * (1.0 + 1e-12);
    let mut entry_times = Vec::with_capacity(members.len());
    for series in members {
        let mut entry = series.last().map(|r| r.t).unwrap_or(0.0);
        for r in series.iter().rev() {
            if r.h1_u <= tol {
                entry = r.t;
            } else {
                break;
            }
        }
        entry_times.push(entry);
    }
    Ok(AbsorbReport { rho_hat, entry_times, spread })
}
