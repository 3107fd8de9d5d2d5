//! 3D cell grids of coefficients (sampled tessellations, RVE fields).

use crate::phase::{Phase, PhaseTable};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A 3D grid of phase cells: one sampled microstructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub dims: [usize; 3],
    pub cell_size: f64,
    pub table: PhaseTable,
    /// Phase index per cell, layout (i * ny + j) * nz + k.
    pub cells: Vec<u16>,
    /// Uniform lattice offset in [0, cell_size)^3 making the field stationary in law.
    pub offset: [f64; 3],
    pub seed: u64,
}

impl GridField {
    pub fn n_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn phase(&self, cell: usize) -> &Phase {
        &self.table.phases[self.cells[cell] as usize]
    }

    /// Phase at a physical point (periodic wrap of the lattice).
    pub fn phase_at_point(&self, y: [f64; 3]) -> &Phase {
        let mut id = [0usize; 3];
        for d in 0..3 {
            let c = ((y[d] - self.offset[d]) / self.cell_size).floor() as i64;
            id[d] = c.rem_euclid(self.dims[d] as i64) as usize;
        }
        self.phase(self.idx(id[0], id[1], id[2]))
    }

    pub fn validate(&self) -> Result<()> {
        self.table.validate()?;
        if self.dims.iter().any(|&n| n == 0) {
            return Err(Error::Invalid("grid dims must be >= 1".into()));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::Invalid("cell_size must be positive".into()));
        }
        if self.cells.len() != self.n_cells() {
            return Err(Error::Invalid("cell array length does not match dims".into()));
        }
        if self.cells.iter().any(|&c| c as usize >= self.table.len()) {
            return Err(Error::Invalid("cell refers to a phase outside the table".into()));
        }
        Ok(())
    }

    /// Empirical phase table of the sample (cell fractions as probabilities).
    pub fn empirical_table(&self) -> PhaseTable {
        let mut counts = vec![0usize; self.table.len()];
        for &c in &self.cells {
            counts[c as usize] += 1;
        }
        let n = self.n_cells() as f64;
        PhaseTable {
            phases: self.table.phases.clone(),
            probabilities: counts.iter().map(|&c| c as f64 / n).collect(),
            bounds: self.table.bounds.clone(),
        }
    }
}

/// iid phases on a lattice with a uniform random offset.
pub fn sample_checkerboard(
    table: &PhaseTable,
    cell_size: f64,
    dims: [usize; 3],
    seed: u64,
) -> Result<GridField> {
    table.validate()?;
    if dims.iter().any(|&n| n == 0) {
        return Err(Error::Invalid("grid dims must be >= 1".into()));
    }
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(Error::Invalid("cell_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = [
        rng.gen::<f64>() * cell_size,
        rng.gen::<f64>() * cell_size,
        rng.gen::<f64>() * cell_size,
    ];
    let n = dims[0] * dims[1] * dims[2];
    let mut cells = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut phase = table.len() - 1;
        for (i, &p) in table.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                phase = i;
                break;
            }
        }
        cells.push(phase as u16);
    }
    let field = GridField {
        dims,
        cell_size,
        table: table.clone(),
        cells,
        offset,
        seed,
    };
    field.validate()?;
    Ok(field)
}

/// Grid-aligned laminate RVE: layers normal to e3, each `cells_per_layer`
/// cells thick, phases drawn iid from the table. Layer boundaries coincide
/// with cell faces, so the 1D corrector problem is exact on this field.
pub fn laminate_rve(
    table: &PhaseTable,
    n_layers: usize,
    cells_per_layer: usize,
    nx: usize,
    ny: usize,
    cell_size: f64,
    seed: u64,
) -> Result<GridField> {
    table.validate()?;
    if n_layers == 0 || cells_per_layer == 0 || nx == 0 || ny == 0 {
        return Err(Error::Invalid("laminate RVE dims must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer_phase = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut phase = table.len() - 1;
        for (i, &p) in table.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                phase = i;
                break;
            }
        }
        layer_phase.push(phase as u16);
    }
    Ok(grid_from_layers(table, &layer_phase, cells_per_layer, nx, ny, cell_size, seed))
}

/// Grid-aligned laminate with a prescribed layer sequence (e.g. the
/// deterministic alternating case).
pub fn laminate_grid_from_sequence(
    table: &PhaseTable,
    layer_phase: &[u16],
    cells_per_layer: usize,
    nx: usize,
    ny: usize,
    cell_size: f64,
) -> Result<GridField> {
    table.validate()?;
    if layer_phase.is_empty() || cells_per_layer == 0 || nx == 0 || ny == 0 {
        return Err(Error::Invalid("laminate grid dims must be >= 1".into()));
    }
    Ok(grid_from_layers(table, layer_phase, cells_per_layer, nx, ny, cell_size, 0))
}

fn grid_from_layers(
    table: &PhaseTable,
    layer_phase: &[u16],
    cells_per_layer: usize,
    nx: usize,
    ny: usize,
    cell_size: f64,
    seed: u64,
) -> GridField {
    let nz = layer_phase.len() * cells_per_layer;
    let dims = [nx, ny, nz];
    let mut cells = vec![0u16; nx * ny * nz];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                cells[(i * ny + j) * nz + k] = layer_phase[k / cells_per_layer];
            }
        }
    }
    GridField {
        dims,
        cell_size,
        table: table.clone(),
        cells,
        offset: [0.0; 3],
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::Phase;

    fn two_phase() -> PhaseTable {
        PhaseTable::new(
            vec![
                Phase {
                    a: 1.0,
                    kappa: 0.0,
                    m_sat: 0.0,
                    k1: 0.0,
                    easy_axis: [0.0, 0.0, 1.0],
                },
                Phase {
                    a: 4.0,
                    kappa: 0.0,
                    m_sat: 0.0,
                    k1: 0.0,
                    easy_axis: [0.0, 0.0, 1.0],
                },
            ],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn single_phase_constant_field() {
        let table = PhaseTable::new(
            vec![Phase {
                a: 1.0,
                kappa: 0.5,
                m_sat: 1.0,
                k1: 0.0,
                easy_axis: [0.0, 0.0, 1.0],
            }],
            vec![1.0],
        )
        .unwrap();
        let f = sample_checkerboard(&table, 1.0, [4, 4, 4], 9).unwrap();
        assert!(f.cells.iter().all(|&c| c == 0));
    }

    #[test]
    fn checkerboard_fraction_binomial_oracle() {
        let f = sample_checkerboard(&two_phase(), 1.0, [64, 64, 64], 1).unwrap();
        let n = f.n_cells() as f64;
        let frac = f.cells.iter().filter(|&&c| c == 0).count() as f64 / n;
        let tol = 3.0 * (0.25 / n).sqrt();
        assert!((frac - 0.5).abs() < tol, "frac {} tol {}", frac, tol);
    }

    #[test]
    fn checkerboard_determinism() {
        let a = sample_checkerboard(&two_phase(), 1.0, [8, 8, 8], 42).unwrap();
        let b = sample_checkerboard(&two_phase(), 1.0, [8, 8, 8], 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn point_lookup_wraps_periodically() {
        let f = sample_checkerboard(&two_phase(), 1.0, [4, 4, 4], 3).unwrap();
        let p1 = f.phase_at_point([0.5 + f.offset[0], 0.5 + f.offset[1], 0.5 + f.offset[2]]);
        let p2 = f.phase_at_point([4.5 + f.offset[0], 0.5 + f.offset[1], 0.5 + f.offset[2]]);
        assert_eq!(p1.a, p2.a);
    }

    #[test]
    fn laminate_rve_layers_constant_in_plane() {
        let f = laminate_rve(&two_phase(), 8, 4, 3, 3, 0.25, 5).unwrap();
        assert_eq!(f.dims, [3, 3, 32]);
        for k in 0..32 {
            let c0 = f.cells[f.idx(0, 0, k)];
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(f.cells[f.idx(i, j, k)], c0);
                }
            }
        }
    }
}
