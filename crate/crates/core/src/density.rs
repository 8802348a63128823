//! Variable-density sampling probability design.
//!
//! The probability profile is polynomial in normalized k-space radius with a
//! fully sampled central disk:
//!
//! ```text
//! p(k_r) = 1                                   k_r <= center_fraction
//! p(k_r) = clip((1 - k_r)^degree + v, 0, 1)    otherwise
//! ```
//!
//! The offset `v` is found by bisection so the grid mean equals 1/R. The
//! additive offset keeps a strictly positive floor density everywhere, which
//! is what lets segregated sampling exhaust every annulus.

use crate::grid::{in_disk, GridSpec};
use crate::{Result, SegError};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Designed sampling probability field with its radial-profile parameters.
#[derive(Debug, Clone)]
pub struct SamplingDensity {
    pub grid: GridSpec,
    /// Per-cell probability in [0, 1], row-major [ny x nz].
    pub values: Array2<f64>,
    /// Radius of the fully sampled central disk as a fraction of the maximum
    /// radius; 0 means no disk (synthetic densities only).
    pub center_fraction: f64,
    pub target_r: f64,
    pub degree: u32,
}

/// Paper degrees per acceleration factor; nearest entry wins for other R.
const DEGREE_TABLE: [(f64, u32); 5] = [(2.0, 2), (3.0, 3), (4.0, 4), (6.0, 5), (8.0, 6)];

/// Degree default: nearest entry of the (R, degree) table.
pub fn default_degree(r: f64) -> u32 {
    let mut best = DEGREE_TABLE[0];
    for &(tr, d) in &DEGREE_TABLE[1..] {
        if (r - tr).abs() < (r - best.0).abs() {
            best = (tr, d);
        }
    }
    best.1
}

/// Center-fraction default: linear from 18% at R=2 down to 4% at R=8,
/// clamped outside that range.
pub fn default_center_fraction(r: f64) -> f64 {
    (0.18 - (r - 2.0) * 0.14 / 6.0).clamp(0.04, 0.18)
}

/// Design a density whose grid mean is 1/R (relative tolerance 1e-3).
pub fn design_density(
    grid: GridSpec,
    r: f64,
    degree: Option<u32>,
    center_fraction: Option<f64>,
) -> Result<SamplingDensity> {
    if !(1.0..=16.0).contains(&r) {
        if r < 1.0 {
            return Err(SegError::InfeasibleR {
                reason: format!("mean density cannot exceed 1 (requested R = {r})"),
                achievable: 1.0,
            });
        }
        return Err(SegError::Invalid(format!("R = {r} outside supported [1, 16]")));
    }
    let degree = degree.unwrap_or_else(|| default_degree(r));
    if degree < 1 {
        return Err(SegError::Invalid("degree must be >= 1".into()));
    }
    let cf = center_fraction.unwrap_or_else(|| default_center_fraction(r));
    if !(0.0 < cf && cf <= 1.0) {
        return Err(SegError::Invalid(format!("center_fraction {cf} outside (0, 1]")));
    }

    if r == 1.0 {
        // saturation: the budget is the whole grid
        return Ok(SamplingDensity {
            grid,
            values: Array2::from_elem((grid.ny, grid.nz), 1.0),
            center_fraction: cf,
            target_r: r,
            degree,
        });
    }

    let target = 1.0 / r;
    let radii = grid.radius_map();
    let t = grid.total() as f64;
    let base: Vec<f64> = radii.iter().map(|&kr| (1.0 - kr).powi(degree as i32)).collect();
    let disk: Vec<bool> = radii.iter().map(|&kr| in_disk(kr, cf)).collect();
    let disk_cells = disk.iter().filter(|&&d| d).count();

    let mean_at = |v: f64| -> f64 {
        let mut s = disk_cells as f64;
        for (b, &d) in base.iter().zip(&disk) {
            if !d {
                s += (b + v).clamp(0.0, 1.0);
            }
        }
        s / t
    };

    // feasibility: even with everything outside the disk at zero, the disk
    // alone may exceed the budget
    let floor_mean = disk_cells as f64 / t;
    if floor_mean > target {
        return Err(SegError::InfeasibleR {
            reason: format!(
                "fully sampled central disk ({disk_cells} cells) alone exceeds the 1/R budget"
            ),
            achievable: 1.0 / floor_mean,
        });
    }

    let (mut lo, mut hi) = (-1.0, 2.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = 0.5 * (lo + hi);
    let achieved = mean_at(v);
    if (achieved - target).abs() / target > 1e-3 {
        return Err(SegError::InfeasibleR {
            reason: format!("bisection stalled at mean {achieved:.6} for target {target:.6}"),
            achievable: 1.0 / achieved,
        });
    }

    let mut values = Array2::zeros((grid.ny, grid.nz));
    for ((val, &b), &d) in values.iter_mut().zip(&base).zip(&disk) {
        *val = if d { 1.0 } else { (b + v).clamp(0.0, 1.0) };
    }
    Ok(SamplingDensity {
        grid,
        values,
        center_fraction: cf,
        target_r: r,
        degree,
    })
}

impl SamplingDensity {
    /// Synthetic uniform density (no central disk); used for the statistical
    /// oracles where the binomial/e_n theory assumes one fixed p.
    pub fn uniform(grid: GridSpec, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SegError::Invalid(format!("probability {p} outside [0, 1]")));
        }
        Ok(SamplingDensity {
            grid,
            values: Array2::from_elem((grid.ny, grid.nz), p),
            center_fraction: 0.0,
            target_r: if p > 0.0 { 1.0 / p } else { f64::INFINITY },
            degree: 1,
        })
    }

    /// Stored probability at one grid location.
    pub fn at(&self, ky: usize, kz: usize) -> Result<f64> {
        if !self.grid.contains(ky, kz) {
            return Err(SegError::OutOfGrid {
                ky,
                kz,
                ny: self.grid.ny,
                nz: self.grid.nz,
            });
        }
        Ok(self.values[[ky, kz]])
    }

    pub fn mean(&self) -> f64 {
        self.values.sum() / self.grid.total() as f64
    }
}

/// One annulus of the radial profile.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RadialBin {
    /// Bin-center radius (midpoint of the equal-width bin).
    pub center: f64,
    /// Mean density over the member cells.
    pub mean: f64,
    /// Number of member cells.
    pub cells: usize,
}

/// Per-annulus mean density over equal-width bins of normalized radius.
/// Empty bins are omitted.
pub fn radial_profile(d: &SamplingDensity, n_bins: usize) -> Result<Vec<RadialBin>> {
    if n_bins < 4 {
        return Err(SegError::Invalid(format!("n_bins {n_bins} < 4")));
    }
    let width = 1.0 / n_bins as f64;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for ((iy, iz), &val) in d.values.indexed_iter() {
        let b = ((d.grid.radius(iy, iz) / width) as usize).min(n_bins - 1);
        sums[b] += val;
        counts[b] += 1;
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .enumerate()
        .filter(|(_, (_, c))| *c > 0)
        .map(|(b, (s, c))| RadialBin {
            center: (b as f64 + 0.5) * width,
            mean: s / c as f64,
            cells: c,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_and_center_fraction_defaults() {
        assert_eq!(default_degree(2.0), 2);
        assert_eq!(default_degree(3.0), 3);
        assert_eq!(default_degree(4.0), 4);
        assert_eq!(default_degree(6.0), 5);
        assert_eq!(default_degree(8.0), 6);
        assert_eq!(default_degree(16.0), 6);
        assert_eq!(default_degree(1.5), 2);
        assert!((default_center_fraction(2.0) - 0.18).abs() < 1e-12);
        assert!((default_center_fraction(8.0) - 0.04).abs() < 1e-12);
        assert!((default_center_fraction(12.0) - 0.04).abs() < 1e-12);
        assert!((default_center_fraction(5.0) - (0.18 - 3.0 * 0.14 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn designed_mean_hits_budget_256_r2() {
        let g = GridSpec::new(256, 256).unwrap();
        let d = design_density(g, 2.0, None, None).unwrap();
        assert_eq!(d.degree, 2);
        assert!((d.mean() - 0.5).abs() / 0.5 < 1e-3);
    }

    #[test]
    fn r_of_one_saturates_everywhere() {
        let g = GridSpec::new(64, 64).unwrap();
        let d = design_density(g, 1.0, None, None).unwrap();
        for &v in d.values.iter() {
            assert_eq!(v, 1.0);
        }
        assert_eq!(d.mean(), 1.0);
    }

    #[test]
    fn explicit_degree_and_center_fraction() {
        // direct-summation check of the designed array
        let g = GridSpec::new(64, 64).unwrap();
        let d = design_density(g, 4.0, Some(4), Some(0.10)).unwrap();
        let mean = d.values.sum() / 4096.0;
        assert!((mean - 0.25).abs() / 0.25 < 1e-3, "mean {mean}");
        assert_eq!(d.at(32, 32).unwrap(), 1.0);
    }

    #[test]
    fn values_bounded_and_disk_saturated() {
        let g = GridSpec::new(96, 80).unwrap();
        let d = design_density(g, 6.0, None, None).unwrap();
        for ((iy, iz), &v) in d.values.indexed_iter() {
            assert!((0.0..=1.0).contains(&v));
            if in_disk(g.radius(iy, iz), d.center_fraction) {
                assert_eq!(v, 1.0);
            }
        }
    }

    #[test]
    fn profile_monotone_in_radius() {
        let g = GridSpec::new(256, 256).unwrap();
        let d = design_density(g, 4.0, None, None).unwrap();
        let prof = radial_profile(&d, 32).unwrap();
        for w in prof.windows(2) {
            assert!(w[0].mean >= w[1].mean - 1e-12);
        }
    }

    #[test]
    fn profile_integrates_to_budget() {
        let g = GridSpec::new(256, 256).unwrap();
        let d = design_density(g, 4.0, None, None).unwrap();
        let prof = radial_profile(&d, 48).unwrap();
        let total: f64 = prof.iter().map(|b| b.mean * b.cells as f64).sum();
        let mean = total / g.total() as f64;
        assert!((mean - 0.25).abs() / 0.25 < 1e-3);
    }

    #[test]
    fn uniform_density_profile_flat() {
        let g = GridSpec::new(64, 64).unwrap();
        let d = SamplingDensity::uniform(g, 1.0).unwrap();
        for b in radial_profile(&d, 8).unwrap() {
            assert_eq!(b.mean, 1.0);
        }
    }

    #[test]
    fn extremes_of_profile() {
        let g = GridSpec::new(128, 128).unwrap();
        let d = design_density(g, 4.0, None, None).unwrap();
        // center of k-space is inside the Nyquist disk
        assert_eq!(d.at(64, 64).unwrap(), 1.0);
        // corner (max radius) carries the minimum of the profile
        let corner = d.at(0, 0).unwrap();
        let min = d.values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((corner - min).abs() < 1e-12);
    }

    #[test]
    fn out_of_grid_and_infeasible_errors() {
        let g = GridSpec::new(64, 64).unwrap();
        let d = design_density(g, 4.0, None, None).unwrap();
        assert!(matches!(d.at(64, 0), Err(SegError::OutOfGrid { .. })));
        assert!(matches!(
            design_density(g, 0.5, None, None),
            Err(SegError::InfeasibleR { .. })
        ));
        // a huge fully sampled disk cannot meet R = 16
        let err = design_density(g, 16.0, None, Some(0.9)).unwrap_err();
        match err {
            SegError::InfeasibleR { achievable, .. } => assert!(achievable < 16.0),
            other => panic!("expected InfeasibleR, got {other:?}"),
        }
    }

    #[test]
    fn determinism_bit_identical() {
        let g = GridSpec::new(128, 96).unwrap();
        let a = design_density(g, 3.0, None, None).unwrap();
        let b = design_density(g, 3.0, None, None).unwrap();
        assert_eq!(a.values, b.values);
    }
}
