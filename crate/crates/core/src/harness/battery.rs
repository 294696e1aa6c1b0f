//! Identity battery: checks every summation-by-parts cancellation the solver
//! is built on, over many random field draws, and reports the worst relative
//! residual per identity.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::geometry::{
    build_grid, inner_omega, inner_omega_vec, integrate_omega, Grid, Params,
};
use crate::harness::rng::DetRng;
use crate::operators::{
    advect_scalar, buoyancy_heating, cov_deriv_phi, cov_deriv_theta, fluctuation, full_advect,
    full_advect_vector, h_div, h_grad, laplace_scalar, laplace_vector, pressure_gradient_force,
    vertical_velocity,
};

pub const BATTERY_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BatteryLine {
    pub name: &'static str,
    pub max_residual: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct BatteryReport {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_xi: usize,
    pub seed: u64,
    pub draws: usize,
    pub lines: Vec<BatteryLine>,
}

impl BatteryReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.max_residual <= l.threshold)
    }
}

impl fmt::Display for BatteryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "identity battery: grid {}x{}x{}, {} draws, seed {}",
            self.n_theta, self.n_phi, self.n_xi, self.draws, self.seed
        )?;
        for l in &self.lines {
            let verdict = if l.max_residual <= l.threshold { "ok" } else { "FAIL" };
            writeln!(
                f,
                "  {:<28} max residual {:.3e}  (threshold {:.1e})  {}",
                l.name, l.max_residual, l.threshold, verdict
            )?;
        }
        write!(f, "result: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-30)
}

fn random_scalar(grid: &Grid, rng: &mut DetRng) -> ScalarField {
    ScalarField::from_fn(grid.n_theta, grid.n_phi, grid.n_xi, |_, _, _| rng.next_signed())
}

fn random_vector(grid: &Grid, rng: &mut DetRng) -> VectorField {
    VectorField {
        comp_theta: random_scalar(grid, rng),
        comp_phi: random_scalar(grid, rng),
    }
}

/// Run the battery on one grid. Velocities entering the transport identities
/// are made exactly baroclinic, which satisfies the barotropic constraint to
/// round-off.
pub fn run_battery(
    n_theta: usize,
    n_phi: usize,
    n_xi: usize,
    seed: u64,
    draws: usize,
) -> Result<BatteryReport> {
    let grid = build_grid(n_theta, n_phi, n_xi)?;
    let params = Params::default();
    let mut rng = DetRng::new(seed);

    let mut worst = [0.0f64; 8];
    for _ in 0..draws {
        let s = random_scalar(&grid, &mut rng);
        let s1 = random_scalar(&grid, &mut rng);
        let u = random_vector(&grid, &mut rng);
        let u1 = random_vector(&grid, &mut rng);
        let vc = fluctuation(&random_vector(&grid, &mut rng));
        let t = random_scalar(&grid, &mut rng);
        let q = random_scalar(&grid, &mut rng);

        // ∫ s div u = −∫ ∇s·u.
        let lhs = inner_omega(&s, &h_div(&grid, &u)?, &grid)?;
        let rhs = -inner_omega_vec(&h_grad(&grid, &s)?, &u, &grid)?;
        worst[0] = worst[0].max(rel(lhs, rhs));

        // ∫ div u = 0.
        let d = h_div(&grid, &u)?;
        let scale: f64 = d.values.iter().map(|x| x.abs()).sum::<f64>() / d.values.len() as f64;
        worst[1] = worst[1].max(integrate_omega(&d, &grid)?.abs() / scale.max(1e-30));

        // ∫ ∇_v s + ∫ s div v = 0.
        let adv = advect_scalar(&grid, &u, &s)?;
        let mut sdiv = s.clone();
        for (x, y) in sdiv.values.iter_mut().zip(d.values.iter()) {
            *x *= y;
        }
        let a = integrate_omega(&adv, &grid)?;
        let b = integrate_omega(&sdiv, &grid)?;
        worst[2] = worst[2].max((a + b).abs() / a.abs().max(b.abs()).max(1e-30));

        // ∫ (∇_v s + W(v) ∂s/∂ξ)·s = 0 for constrained v.
        let fa = full_advect(&grid, &vc, &s, 1e-10)?;
        let num = inner_omega(&fa, &s, &grid)?;
        let den = inner_omega(&s, &s, &grid)? * vc.max_abs().max(1e-30);
        worst[3] = worst[3].max(num.abs() / den.max(1e-30));

        // Same for a vector argument.
        let fav = full_advect_vector(&grid, &vc, &u1, 1e-10)?;
        let num = inner_omega_vec(&fav, &u1, &grid)?;
        let den = inner_omega_vec(&u1, &u1, &grid)? * vc.max_abs().max(1e-30);
        worst[4] = worst[4].max(num.abs() / den.max(1e-30));

        // ∫ PGF(T,q)·v = ∫ (bP/p)(1+aq) W(v) T for constrained v.
        let pgf = pressure_gradient_force(&grid, &t, &q, &params)?;
        let w = vertical_velocity(&grid, &vc)?;
        let heat = buoyancy_heating(&grid, &q, &w, &params)?;
        let lhs = inner_omega_vec(&pgf, &vc, &grid)?;
        let rhs = inner_omega(&heat, &t, &grid)?;
        worst[5] = worst[5].max(rel(lhs, rhs));

        // ∫ (−Δu)·u₁ = covariant H¹ pairing + ∫ u·u₁.
        let mut neg_lap = laplace_vector(&grid, &u)?;
        neg_lap.scale(-1.0);
        let lhs = inner_omega_vec(&neg_lap, &u1, &grid)?;
        let rhs = inner_omega_vec(&cov_deriv_theta(&grid, &u)?, &cov_deriv_theta(&grid, &u1)?, &grid)?
            + inner_omega_vec(&cov_deriv_phi(&grid, &u)?, &cov_deriv_phi(&grid, &u1)?, &grid)?
            + inner_omega_vec(&u, &u1, &grid)?;
        worst[6] = worst[6].max(rel(lhs, rhs));

        // ∫ (−Δs)·s₁ = ∫ ∇s·∇s₁.
        let lhs = -inner_omega(&laplace_scalar(&grid, &s)?, &s1, &grid)?;
        let rhs = inner_omega_vec(&h_grad(&grid, &s)?, &h_grad(&grid, &s1)?, &grid)?;
        worst[7] = worst[7].max(rel(lhs, rhs));
    }

    let names = [
        "div_grad_adjoint",
        "div_sphere_mean",
        "advection_flux_identity",
        "scalar_transport_energy",
        "vector_transport_energy",
        "pressure_buoyancy_duality",
        "vector_laplacian_pairing",
        "scalar_laplacian_pairing",
    ];
    let lines = names
        .iter()
        .zip(worst.iter())
        .map(|(name, w)| BatteryLine { name, max_residual: *w, threshold: BATTERY_THRESHOLD })
        .collect();
    Ok(BatteryReport { n_theta, n_phi, n_xi, seed, draws, lines })
}

/// Battery entry point used by the CLI.
pub fn verify_operators(seed: u64, n_theta: usize, n_phi: usize, n_xi: usize) -> Result<BatteryReport> {
    let report = run_battery(n_theta, n_phi, n_xi, seed, 100)?;
    if !report.passed() {
        let failing: Vec<&str> = report
            .lines
            .iter()
            .filter(|l| l.max_residual > l.threshold)
            .map(|l| l.name)
            .collect();
        return Err(Error::BatteryFailure(failing.join(", ")));
    }
    Ok(report)
}
