//! Experiment drivers: plain runs, twin (perturbed-pair) runs and ensembles.
//! All outputs are deterministic for a fixed config and seed, independent of
//! how many members run in parallel.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::diagnostics::{
    absorbing_stats, twin_separation, AbsorbReport, DiagRecord, SeparationSample, DIAG_CSV_HEADER,
};
use crate::error::{Error, Result};
use crate::geometry::{build_grid_with_band, inner_omega, inner_omega_vec, Grid};
use crate::harness::config::Config;
use crate::harness::profiles::{build_forcing, build_initial, twin_perturbation_shape};
use crate::harness::snapshot::write_snapshot;
use crate::model::State;
use crate::timestepper::{step, EllipticWorkspace};

pub fn grid_from_config(cfg: &Config) -> Result<Grid> {
    let band = cfg
        .grid
        .polar_filter_band
        .unwrap_or_else(|| (cfg.grid.n_theta / 8).max(1));
    build_grid_with_band(cfg.grid.n_theta, cfg.grid.n_phi, cfg.grid.n_xi, band)
}

fn n_steps(cfg: &Config) -> usize {
    if cfg.run.t_end <= 0.0 {
        0
    } else {
        (cfg.run.t_end / cfg.step.dt - 1e-9).ceil().max(0.0) as usize
    }
}

fn state_u2(grid: &Grid, state: &State) -> Result<f64> {
    Ok(inner_omega_vec(&state.v, &state.v, grid)?
        + inner_omega(&state.temperature, &state.temperature, grid)?
        + inner_omega(&state.moisture, &state.moisture, grid)?)
}

struct CsvSink {
    file: std::io::BufWriter<fs::File>,
}

impl CsvSink {
    fn create(path: &Path) -> Result<Self> {
        let mut file = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(file, "{DIAG_CSV_HEADER}")?;
        Ok(Self { file })
    }

    fn write(&mut self, record: &DiagRecord) -> Result<()> {
        writeln!(self.file, "{}", record.csv_row())?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }
}

/// Run one simulation from the config, writing `diagnostics.csv` and
/// snapshots into the output directory. Returns the diagnostic series.
///
/// On a non-finite state the driver writes `snapshot_failed.bin` and returns
/// the NonFinite error so the CLI can exit with the numerical-failure status.
pub fn run_simulation(cfg: &Config) -> Result<Vec<DiagRecord>> {
    cfg.validate()?;
    run_simulation_in(cfg, Path::new(&cfg.run.out_dir))
}

fn run_simulation_in(cfg: &Config, out_dir: &Path) -> Result<Vec<DiagRecord>> {
    let grid = grid_from_config(cfg)?;
    let params = cfg.params.clone();
    let forcing = build_forcing(cfg, &grid)?;
    let mut state = build_initial(cfg, &grid, &params, &cfg.step)?;
    let mut ws = EllipticWorkspace::new(&grid);

    fs::create_dir_all(out_dir)?;
    let mut sink = CsvSink::create(&out_dir.join("diagnostics.csv"))?;

    let mut rows = Vec::new();
    let first = DiagRecord::compute(&grid, &state, &forcing, &params, None)?;
    sink.write(&first)?;
    rows.push(first);
    write_snapshot(&out_dir.join("snapshot_000000.bin"), &state, &params)?;

    let steps = n_steps(cfg);
    for n in 1..=steps {
        let u2_prev = state_u2(&grid, &state)?;
        state = match step(&grid, &state, &forcing, &params, &cfg.step, &mut ws) {
            Ok(s) => s,
            Err(e @ Error::NonFinite(_)) => {
                write_snapshot(&out_dir.join("snapshot_failed.bin"), &state, &params)?;
                sink.finish()?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        if n % cfg.run.output_every == 0 || n == steps {
            let rec = DiagRecord::compute(
                &grid,
                &state,
                &forcing,
                &params,
                Some((u2_prev, cfg.step.dt)),
            )?;
            sink.write(&rec)?;
            rows.push(rec);
        }
        if cfg.run.snapshot_every > 0 && n % cfg.run.snapshot_every == 0 {
            write_snapshot(&out_dir.join(format!("snapshot_{n:06}.bin")), &state, &params)?;
        }
    }
    sink.finish()?;
    Ok(rows)
}

/// Twin experiment: a base run and a run whose initial velocity is perturbed
/// by `epsilon` times a fixed baroclinic shape. Emits `twin.csv` with the
/// squared separation and the reference-run coefficient series.
pub fn run_twin(cfg: &Config, epsilon: f64) -> Result<Vec<SeparationSample>> {
    cfg.validate()?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Validation {
            key: "twin.epsilon".into(),
            msg: "must be finite and >= 0".into(),
        });
    }
    let grid = grid_from_config(cfg)?;
    let params = cfg.params.clone();
    let forcing = build_forcing(cfg, &grid)?;

    let base0 = build_initial(cfg, &grid, &params, &cfg.step)?;
    let mut pert0 = base0.clone();
    let shape = twin_perturbation_shape(&grid);
    pert0.v.axpy(epsilon, &shape);

    let steps = n_steps(cfg);
    let every = cfg.run.output_every;

    let mut ws_a = EllipticWorkspace::new(&grid);
    let mut ws_b = EllipticWorkspace::new(&grid);
    let mut a = base0;
    let mut b = pert0;
    let mut series_a = vec![a.clone()];
    let mut series_b = vec![b.clone()];
    for n in 1..=steps {
        a = step(&grid, &a, &forcing, &params, &cfg.step, &mut ws_a)?;
        b = step(&grid, &b, &forcing, &params, &cfg.step, &mut ws_b)?;
        if n % every == 0 || n == steps {
            series_a.push(a.clone());
            series_b.push(b.clone());
        }
    }

    let samples = twin_separation(&series_a, &series_b, &grid, &params)?;
    let out_dir = PathBuf::from(&cfg.run.out_dir);
    fs::create_dir_all(&out_dir)?;
    let mut file = std::io::BufWriter::new(fs::File::create(out_dir.join("twin.csv"))?);
    writeln!(file, "t,separation_sq,coefficient")?;
    for s in &samples {
        writeln!(file, "{},{},{}", s.t, s.sep, s.coeff)?;
    }
    file.flush()?;
    Ok(samples)
}

/// Ensemble of runs sharing forcing and seed, with initial amplitudes drawn
/// from `ic_scales` (cycled if shorter than `member_count`). Members execute
/// on worker threads; per-member outputs are written in index order.
pub fn run_ensemble(
    cfg: &Config,
    member_count: usize,
    ic_scales: &[f64],
) -> Result<(AbsorbReport, Vec<Vec<DiagRecord>>)> {
    cfg.validate()?;
    if member_count < 2 {
        return Err(Error::InsufficientMembers(member_count));
    }
    if ic_scales.is_empty() {
        return Err(Error::Validation {
            key: "ensemble.scales".into(),
            msg: "need at least one amplitude".into(),
        });
    }

    let out_dir = PathBuf::from(&cfg.run.out_dir);
    fs::create_dir_all(&out_dir)?;

    let mut member_cfgs = Vec::with_capacity(member_count);
    for m in 0..member_count {
        let mut c = cfg.clone();
        c.initial.amplitude = ic_scales[m % ic_scales.len()];
        c.run.out_dir = out_dir.join(format!("member_{m:03}")).to_string_lossy().into_owned();
        member_cfgs.push(c);
    }

    let mut results: Vec<Option<Result<Vec<DiagRecord>>>> =
        (0..member_count).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for c in &member_cfgs {
            handles.push(scope.spawn(move || run_simulation(c)));
        }
        for (slot, h) in results.iter_mut().zip(handles) {
            *slot = Some(h.join().expect("ensemble member panicked"));
        }
    });

    let mut members = Vec::with_capacity(member_count);
    for r in results {
        members.push(r.expect("member result missing")?);
    }

    let t_transient = cfg.run.t_end * 2.0 / 3.0;
    let report = absorbing_stats(&members, t_transient)?;

    let mut file = std::io::BufWriter::new(fs::File::create(out_dir.join("ensemble_report.txt"))?);
    writeln!(file, "members = {member_count}")?;
    writeln!(file, "t_transient = {t_transient}")?;
    writeln!(file, "rho_hat = {}", report.rho_hat)?;
    writeln!(file, "spread = {}", report.spread)?;
    for (m, e) in report.entry_times.iter().enumerate() {
        writeln!(file, "entry_time_{m:03} = {e}")?;
    }
    file.flush()?;
    Ok((report, members))
}
