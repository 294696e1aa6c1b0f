//! Zonal spectral filter for the rows adjacent to the poles.
//!
//! On a latitude–longitude grid the physical zonal spacing sin θ·dφ collapses
//! near the poles; the usual cure is to truncate the zonal Fourier spectrum of
//! the explicit tendencies inside a polar band so the effective spacing never
//! drops below its value at the band edge. The truncation is an orthogonal
//! projection under the row quadrature (uniform in φ), so it never increases
//! the discrete energy.

use crate::field::{ScalarField, VectorField};
use crate::geometry::Grid;

/// Highest zonal wavenumber retained in row `i` (Nyquist−1 outside the band).
pub fn zonal_mode_cutoff(grid: &Grid, i: usize) -> usize {
    let nyq = grid.n_phi / 2;
    let band = grid.polar_filter_band;
    if band == 0 {
        return nyq;
    }
    let from_north = i.min(grid.n_theta - 1 - i);
    if from_north >= band {
        return nyq;
    }
    let sin_edge = grid.sin_center[band];
    let m = (nyq as f64 * grid.sin_center[i] / sin_edge).floor() as usize;
    m.clamp(1, nyq - 1)
}

/// Effective zonal spacing used by the CFL bound: sin θ·dφ outside the band,
/// stretched by the retained-mode ratio inside it.
pub fn effective_zonal_spacing(grid: &Grid, i: usize) -> f64 {
    let nyq = grid.n_phi / 2;
    let m = zonal_mode_cutoff(grid, i);
    grid.sin_center[i] * grid.d_phi * nyq as f64 / m as f64
}

#[derive(Debug, Clone)]
struct FilterRow {
    row: usize,
    m_keep: usize,
}

/// Precomputed truncation tables for the filtered rows of one grid.
#[derive(Debug, Clone)]
pub struct PolarFilter {
    n_phi: usize,
    rows: Vec<FilterRow>,
    /// cos(m φ_j), sin(m φ_j) for m = 0..=n_phi/2, row-major in m.
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
}

impl PolarFilter {
    pub fn new(grid: &Grid) -> Self {
        let mut rows = Vec::new();
        let band = grid.polar_filter_band;
        for i in 0..grid.n_theta {
            let from_pole = i.min(grid.n_theta - 1 - i);
            if from_pole < band {
                rows.push(FilterRow {
                    row: i,
                    m_keep: zonal_mode_cutoff(grid, i),
                });
            }
        }
        let nyq = grid.n_phi / 2;
        let mut cos_table = Vec::with_capacity((nyq + 1) * grid.n_phi);
        let mut sin_table = Vec::with_capacity((nyq + 1) * grid.n_phi);
        for m in 0..=nyq {
            for j in 0..grid.n_phi {
                let arg = m as f64 * grid.phi_centers[j];
                cos_table.push(arg.cos());
                sin_table.push(arg.sin());
            }
        }
        Self {
            n_phi: grid.n_phi,
            rows,
            cos_table,
            sin_table,
        }
    }

    pub fn is_active(&self) -> bool {
        !self.rows.is_empty()
    }

    /// Truncate one zonal ring in place, keeping modes m ≤ m_keep.
    fn filter_ring(&self, ring: &mut [f64], m_keep: usize) {
        let np = self.n_phi;
        debug_assert_eq!(ring.len(), np);
        let mut mean = 0.0;
        for x in ring.iter() {
            mean += *x;
        }
        mean /= np as f64;
        let mut out = vec![mean; np];
        for m in 1..=m_keep {
            let cos_row = &self.cos_table[m * np..(m + 1) * np];
            let sin_row = &self.sin_table[m * np..(m + 1) * np];
            let mut a = 0.0;
            let mut b = 0.0;
            for j in 0..np {
                a += ring[j] * cos_row[j];
                b += ring[j] * sin_row[j];
            }
            a *= 2.0 / np as f64;
            b *= 2.0 / np as f64;
            for j in 0..np {
                out[j] += a * cos_row[j] + b * sin_row[j];
            }
        }
        ring.copy_from_slice(&out);
    }

    pub fn apply_scalar(&self, f: &mut ScalarField) {
        if self.rows.is_empty() {
            return;
        }
        let np = f.n_phi;
        let nx = f.n_xi;
        let mut ring = vec![0.0; np];
        for fr in &self.rows {
            for k in 0..nx {
                for j in 0..np {
                    ring[j] = f.get(fr.row, j, k);
                }
                self.filter_ring(&mut ring, fr.m_keep);
                for j in 0..np {
                    f.set(fr.row, j, k, ring[j]);
                }
            }
        }
    }

    pub fn apply_vector(&self, v: &mut VectorField) {
        self.apply_scalar(&mut v.comp_theta);
        self.apply_scalar(&mut v.comp_phi);
    }
}
