//! Analytic forcing and initial-condition catalogues.
//!
//! Generated fields are passed through the polar filter once at construction
//! so the filtered band never holds zonal modes the stepper would immediately
//! discard; random velocities are projected onto the barotropic constraint.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::filter::PolarFilter;
use crate::geometry::{Grid, Params};
use crate::harness::config::{Config, ProfileConfig};
use crate::harness::rng::DetRng;
use crate::harness::snapshot::read_snapshot;
use crate::model::{Forcing, State};
use crate::operators::fluctuation;
use crate::timestepper::{barotropic_projection, EllipticWorkspace, StepConfig};

fn analytic_profile(grid: &Grid, pc: &ProfileConfig, use_moisture_field: bool) -> Result<ScalarField> {
    let (nt, np, nx) = (grid.n_theta, grid.n_phi, grid.n_xi);
    let field = match pc.profile.as_str() {
        "zero" => ScalarField::zeros(nt, np, nx),
        "constant" => ScalarField::from_fn(nt, np, nx, |_, _, _| pc.amplitude),
        "zonal_band" => ScalarField::from_fn(nt, np, nx, |i, _, _| {
            let d = (grid.theta_centers[i] - pc.center) / pc.width;
            pc.amplitude * (-d * d).exp()
        }),
        "harmonic_bump" => {
            let m = pc.mode.max(1) as f64;
            ScalarField::from_fn(nt, np, nx, |i, j, _| {
                pc.amplitude
                    * (m * grid.phi_centers[j]).cos()
                    * grid.sin_center[i].powi(pc.mode.max(1) as i32)
            })
        }
        "snapshot" => {
            let (header, state) = read_snapshot(Path::new(&pc.path))?;
            if (header.n_theta, header.n_phi, header.n_xi) != (nt, np, nx) {
                return Err(Error::Validation {
                    key: "forcing.path".into(),
                    msg: "snapshot dims do not match the grid".into(),
                });
            }
            let mut f = if use_moisture_field { state.moisture } else { state.temperature };
            f.scale(pc.amplitude);
            f
        }
        other => {
            return Err(Error::Validation {
                key: "forcing.profile".into(),
                msg: format!("unknown profile `{other}`"),
            })
        }
    };
    Ok(field)
}

pub fn build_forcing(cfg: &Config, grid: &Grid) -> Result<Forcing> {
    let filter = PolarFilter::new(grid);
    let mut q1 = analytic_profile(grid, &cfg.forcing_q1, false)?;
    let mut q2 = analytic_profile(grid, &cfg.forcing_q2, true)?;
    filter.apply_scalar(&mut q1);
    filter.apply_scalar(&mut q2);
    Ok(Forcing { q1, q2 })
}

/// Smooth random field from a few low zonal and vertical modes.
fn random_smooth_scalar(grid: &Grid, rng: &mut DetRng, amplitude: f64) -> ScalarField {
    let (nt, np, nx) = (grid.n_theta, grid.n_phi, grid.n_xi);
    let mut modes = Vec::new();
    for m in 0..=3usize {
        for kv in 0..=2usize {
            modes.push((m, kv, rng.next_signed(), rng.next_f64() * 2.0 * std::f64::consts::PI));
        }
    }
    ScalarField::from_fn(nt, np, nx, |i, j, k| {
        let theta = grid.theta_centers[i];
        let phi = grid.phi_centers[j];
        let xi = grid.xi_centers[k];
        let mut v = 0.0;
        for (m, kv, c, phase) in &modes {
            let zonal = if *m == 0 { 1.0 } else { (*m as f64 * phi + phase).cos() };
            let merid = theta.sin().powi((*m).max(1) as i32) * (theta.cos() * (*m as f64 + 1.0)).cos();
            let vert = (std::f64::consts::PI * *kv as f64 * xi).cos();
            v += c * zonal * merid * vert;
        }
        amplitude * v / 6.0
    })
}

/// Fixed-shape, exactly baroclinic velocity perturbation of unit amplitude
/// scale; used by the twin-run driver.
pub fn twin_perturbation_shape(grid: &Grid) -> VectorField {
    let mut rng = DetRng::new(0x7715);
    let raw = VectorField {
        comp_theta: random_smooth_scalar(grid, &mut rng, 1.0),
        comp_phi: random_smooth_scalar(grid, &mut rng, 1.0),
    };
    let mut shape = fluctuation(&raw);
    let filter = PolarFilter::new(grid);
    filter.apply_vector(&mut shape);
    // Re-centre after filtering: the filter acts per level, so the vertical
    // mean stays zero, but keep the guarantee explicit.
    shape = fluctuation(&shape);
    shape
}

pub fn build_initial(
    cfg: &Config,
    grid: &Grid,
    params: &Params,
    step_cfg: &StepConfig,
) -> Result<State> {
    let _ = params;
    match cfg.initial.profile.as_str() {
        "zero" => Ok(State::zeros(grid)),
        "random_smooth" => {
            let mut rng = DetRng::new(cfg.initial.seed);
            let amp = cfg.initial.amplitude;
            let filter = PolarFilter::new(grid);
            let mut v = VectorField {
                comp_theta: random_smooth_scalar(grid, &mut rng, amp),
                comp_phi: random_smooth_scalar(grid, &mut rng, amp),
            };
            let mut temperature = random_smooth_scalar(grid, &mut rng, amp);
            let mut moisture = random_smooth_scalar(grid, &mut rng, amp);
            filter.apply_vector(&mut v);
            filter.apply_scalar(&mut temperature);
            filter.apply_scalar(&mut moisture);

            let mut ws = EllipticWorkspace::new(grid);
            let (v, phi_s) = barotropic_projection(grid, &v, 1.0, &mut ws, step_cfg)?;
            Ok(State { v, temperature, moisture, phi_s, t: 0.0 })
        }
        "snapshot" => {
            let (header, mut state) = read_snapshot(Path::new(&cfg.initial.path))?;
            if (header.n_theta, header.n_phi, header.n_xi)
                != (grid.n_theta, grid.n_phi, grid.n_xi)
            {
                return Err(Error::Validation {
                    key: "initial.path".into(),
                    msg: "snapshot dims do not match grid".into(),
                });
            }
            let mut ws = EllipticWorkspace::new(grid);
            let (v, phi_s) = barotropic_projection(grid, &state.v, 1.0, &mut ws, step_cfg)?;
            state.v = v;
            state.phi_s = phi_s;
            state.t = 0.0;
            Ok(state)
        }
        other => Err(Error::Validation {
            key: "initial.profile".into(),
            msg: format!("unknown profile `{other}`"),
        }),
    }
}
