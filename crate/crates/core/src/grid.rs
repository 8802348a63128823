//! Phase-encode grid geometry: normalized k-space radii and annulus binning.

use crate::{Result, SegError};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Dimensions of the 2D phase-encode sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ny: usize,
    pub nz: usize,
}

impl GridSpec {
    pub fn new(ny: usize, nz: usize) -> Result<Self> {
        if ny < 8 || nz < 8 {
            return Err(SegError::Invalid(format!(
                "grid must be at least 8x8, got {ny}x{nz}"
            )));
        }
        Ok(GridSpec { ny, nz })
    }

    /// Total number of grid locations (T).
    pub fn total(&self) -> usize {
        self.ny * self.nz
    }

    /// Normalized k-space radius in [0, 1]: each axis is mapped to [-1, 1)
    /// around its DC index (n/2), and the Euclidean norm is divided by sqrt(2)
    /// so the grid diagonal reaches exactly 1.
    pub fn radius(&self, iy: usize, iz: usize) -> f64 {
        let u = 2.0 * (iy as f64 - (self.ny / 2) as f64) / self.ny as f64;
        let v = 2.0 * (iz as f64 - (self.nz / 2) as f64) / self.nz as f64;
        (u * u + v * v).sqrt() / std::f64::consts::SQRT_2
    }

    /// Radius of every grid location.
    pub fn radius_map(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.ny, self.nz), |(iy, iz)| self.radius(iy, iz))
    }

    pub fn contains(&self, iy: usize, iz: usize) -> bool {
        iy < self.ny && iz < self.nz
    }
}

/// Width of the finest annulus bins in normalized radius (two cell steps of
/// the shorter axis).
pub fn fine_bin_width(grid: &GridSpec) -> f64 {
    2.0 / grid.ny.min(grid.nz) as f64
}

/// Number of fine annulus bins covering [0, 1].
pub fn fine_bin_count(grid: &GridSpec) -> usize {
    (1.0 / fine_bin_width(grid)).floor() as usize + 1
}

/// Fine-bin index of a radius; the final bin absorbs k_r = 1.
pub fn fine_bin_index(grid: &GridSpec, k_r: f64) -> usize {
    let n = fine_bin_count(grid);
    ((k_r / fine_bin_width(grid)) as usize).min(n - 1)
}

/// One annulus used for radial statistics: a set of flat cell indices that
/// share (approximately) the same k-space radius.
#[derive(Debug, Clone)]
pub struct Annulus {
    /// Representative radius (cell-count-weighted mean).
    pub center: f64,
    /// Flat (row-major) indices of the member cells.
    pub cells: Vec<usize>,
}

/// Partition the non-disk cells into fine annulus bins of width
/// [`fine_bin_width`]. Empty bins are dropped. `disk_fraction` = radius of the
/// fully sampled central disk; cells with k_r <= disk_fraction are excluded
/// (they are forced to density 1 and carry no coverage statistics).
pub fn fine_annuli(grid: &GridSpec, disk_fraction: f64) -> Vec<Annulus> {
    let nbins = fine_bin_count(grid);
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); nbins];
    let mut rsum = vec![0.0; nbins];
    for iy in 0..grid.ny {
        for iz in 0..grid.nz {
            let r = grid.radius(iy, iz);
            if in_disk(r, disk_fraction) {
                continue;
            }
            let b = fine_bin_index(grid, r);
            cells[b].push(iy * grid.nz + iz);
            rsum[b] += r;
        }
    }
    cells
        .into_iter()
        .zip(rsum)
        .filter(|(c, _)| !c.is_empty())
        .map(|(c, s)| Annulus {
            center: s / c.len() as f64,
            cells: c,
        })
        .collect()
}

/// Whether a radius lies in the fully sampled central disk. A zero disk
/// fraction means no disk (used by synthetic uniform densities).
pub fn in_disk(k_r: f64, disk_fraction: f64) -> bool {
    disk_fraction > 0.0 && k_r <= disk_fraction
}

/// Minimum cell count per pooled annulus group.
pub const GROUP_MIN_CELLS: usize = 256;
/// Maximum relative spread of the base density within a pooled group.
pub const GROUP_SPREAD_FRAC: f64 = 0.05;

/// Pool fine annuli (inside-out) into groups that are statistically usable
/// for the conditional-density update: a group keeps absorbing the next fine
/// bin while it holds fewer than [`GROUP_MIN_CELLS`] cells, or while the base
/// density across the group stays within [`GROUP_SPREAD_FRAC`] (relative).
/// The outermost fine bins hold only a handful of cells, so without pooling
/// the per-annulus coverage ratio there is statistically meaningless.
/// A trailing undersized group is merged into its inward neighbor.
pub fn grouped_annuli(grid: &GridSpec, density: &Array2<f64>, disk_fraction: f64) -> Vec<Annulus> {
    let fine = fine_annuli(grid, disk_fraction);
    let flat = density.as_slice().expect("density is row-major");
    let mut groups: Vec<Annulus> = Vec::new();
    let mut cur: Option<(Annulus, f64, f64, f64)> = None; // (annulus, pmin, pmax, psum)

    for a in fine {
        let (pmin, pmax, psum) = a.cells.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, 0.0),
            |(lo, hi, s), &c| (lo.min(flat[c]), hi.max(flat[c]), s + flat[c]),
        );
        match cur.take() {
            None => cur = Some((a, pmin, pmax, psum)),
            Some((mut g, gmin, gmax, gsum)) => {
                let nmin = gmin.min(pmin);
                let nmax = gmax.max(pmax);
                let nsum = gsum + psum;
                let ncells = g.cells.len() + a.cells.len();
                let nmean = nsum / ncells as f64;
                if g.cells.len() < GROUP_MIN_CELLS || (nmax - nmin) <= GROUP_SPREAD_FRAC * nmean {
                    g.center = (g.center * g.cells.len() as f64
                        + a.center * a.cells.len() as f64)
                        / ncells as f64;
                    g.cells.extend(a.cells);
                    cur = Some((g, nmin, nmax, nsum));
                } else {
                    groups.push(g);
                    cur = Some((a, pmin, pmax, psum));
                }
            }
        }
    }
    if let Some((g, ..)) = cur {
        if g.cells.len() < GROUP_MIN_CELLS && !groups.is_empty() {
            let last = groups.last_mut().unwrap();
            let ncells = (last.cells.len() + g.cells.len()) as f64;
            last.center = (last.center * last.cells.len() as f64
                + g.center * g.cells.len() as f64)
                / ncells;
            last.cells.extend(g.cells);
        } else {
            groups.push(g);
        }
    }
    groups
}
