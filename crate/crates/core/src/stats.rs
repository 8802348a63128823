//! Occupancy distributions and coverage/overlap metrics for pattern sets.

use crate::density::SamplingDensity;
use crate::grid::fine_annuli;
use crate::patterns::PatternSet;
use crate::{Result, SegError};
use serde::{Deserialize, Serialize};

/// Distribution of the number of times one location is sampled across N
/// independent acquisitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupancyDistribution {
    /// probs[t] = P(location sampled exactly t times), t = 0..=N.
    pub probs: Vec<f64>,
    pub p_o: f64,
    pub n: usize,
}

/// Binomial occupancy for a fixed per-acquisition probability.
pub fn binomial_occupancy(p_o: f64, n: usize) -> Result<OccupancyDistribution> {
    if !(0.0..=1.0).contains(&p_o) {
        return Err(SegError::Invalid(format!("p_o {p_o} outside [0, 1]")));
    }
    if n < 1 {
        return Err(SegError::Invalid("n must be >= 1".into()));
    }
    let q = 1.0 - p_o;
    let mut probs = vec![0.0; n + 1];
    // multiplicative binomial coefficients stay exact well past n = 50
    let mut coef = 1.0f64;
    for (t, prob) in probs.iter_mut().enumerate() {
        *prob = coef * p_o.powi(t as i32) * q.powi((n - t) as i32);
        coef = coef * (n - t) as f64 / (t + 1) as f64;
    }
    Ok(OccupancyDistribution { probs, p_o, n })
}

impl OccupancyDistribution {
    /// Probability of complete omission from all acquisitions.
    pub fn p_omitted(&self) -> f64 {
        self.probs[0]
    }

    /// Probability of being sampled within exactly one acquisition.
    pub fn p_unique(&self) -> f64 {
        self.probs[1]
    }
}

/// Per-annulus slice of a coverage report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnulusCoverage {
    pub center: f64,
    pub cells: usize,
    pub aggregate_pct: f64,
    pub differential_pct: f64,
    pub overlap_pct: f64,
}

/// Coverage and overlap metrics of an N-pattern set (percent units).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Locations sampled by at least one pattern.
    pub aggregate_pct: f64,
    /// Locations sampled by exactly one pattern, attributed per pattern.
    pub differential_pct: Vec<f64>,
    pub differential_mean: f64,
    pub differential_std: f64,
    /// Locations sampled by exactly one pattern, any pattern (the theoretical
    /// single-coverage sum).
    pub differential_any_pct: f64,
    /// Mean repeated-sampling count, normalized by T(N-1).
    pub overlap_pct: f64,
    /// True when differential and overlap were divided by the single-pattern
    /// budget 1/R.
    pub normalized_by_single: bool,
    pub per_annulus: Vec<AnnulusCoverage>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Expected coverage metrics under independent random draws from a density.
pub fn theoretical_coverage(d: &SamplingDensity, n: usize) -> Result<CoverageReport> {
    if n < 1 {
        return Err(SegError::Invalid("n must be >= 1".into()));
    }
    let t = d.grid.total() as f64;
    let nf = n as f64;
    let mut agg = 0.0;
    let mut any = 0.0;
    let mut over = 0.0;
    let per_cell = |p: f64| -> (f64, f64, f64) {
        let q0 = (1.0 - p).powi(n as i32);
        let p1 = nf * p * (1.0 - p).powi(n as i32 - 1);
        // sum_{t>=2} (t-1) P_t = N p - 1 + P_0
        let o = nf * p - 1.0 + q0;
        (1.0 - q0, p1, o)
    };
    for &p in d.values.iter() {
        let (a, p1, o) = per_cell(p);
        agg += a;
        any += p1;
        over += o;
    }
    let overlap_pct = if n >= 2 {
        over / (t * (nf - 1.0)) * 100.0
    } else {
        0.0
    };
    // expected per-pattern differential is identical across patterns
    let per_pattern = any / nf / t * 100.0;
    let differential_pct = vec![per_pattern; n];
    let (dm, ds) = mean_std(&differential_pct);

    let annuli = fine_annuli(&d.grid, 0.0);
    let flat = d.values.as_slice().expect("row-major");
    let per_annulus = annuli
        .iter()
        .map(|a| {
            let m = a.cells.len() as f64;
            let (mut aa, mut p1a, mut oa) = (0.0, 0.0, 0.0);
            for &c in &a.cells {
                let (x, y, z) = per_cell(flat[c]);
                aa += x;
                p1a += y;
                oa += z;
            }
            AnnulusCoverage {
                center: a.center,
                cells: a.cells.len(),
                aggregate_pct: aa / m * 100.0,
                differential_pct: p1a / m * 100.0,
                overlap_pct: if n >= 2 { oa / (m * (nf - 1.0)) * 100.0 } else { 0.0 },
            }
        })
        .collect();

    Ok(CoverageReport {
        aggregate_pct: agg / t * 100.0,
        differential_pct,
        differential_mean: dm,
        differential_std: ds,
        differential_any_pct: any / t * 100.0,
        overlap_pct,
        normalized_by_single: false,
        per_annulus,
    })
}

/// Observed coverage metrics of a drawn pattern set. With
/// `normalize_by_single`, differential and overlap are divided by the
/// single-pattern budget 1/R.
pub fn empirical_coverage(set: &PatternSet, normalize_by_single: bool) -> Result<CoverageReport> {
    if set.patterns.is_empty() {
        return Err(SegError::Invalid("empty pattern set".into()));
    }
    let grid = set.patterns[0].grid;
    for p in &set.patterns {
        if p.grid != grid {
            return Err(SegError::GridMismatch("patterns on different grids".into()));
        }
    }
    let n = set.patterns.len();
    let nf = n as f64;
    let t = grid.total() as f64;
    let mut counts = vec![0u32; grid.total()];
    for p in &set.patterns {
        let mask = p.mask.as_slice().expect("row-major");
        for (c, &m) in counts.iter_mut().zip(mask) {
            *c += m as u32;
        }
    }
    let scale = if normalize_by_single { set.density.target_r } else { 1.0 };

    let aggregate_pct = counts.iter().filter(|&&c| c > 0).count() as f64 / t * 100.0;
    let differential_pct: Vec<f64> = set
        .patterns
        .iter()
        .map(|p| {
            let mask = p.mask.as_slice().expect("row-major");
            let unique = counts
                .iter()
                .zip(mask)
                .filter(|(&c, &m)| c == 1 && m == 1)
                .count();
            unique as f64 / t * 100.0 * scale
        })
        .collect();
    let (dm, ds) = mean_std(&differential_pct);
    let differential_any_pct = counts.iter().filter(|&&c| c == 1).count() as f64 / t * 100.0 * scale;
    let overlap_pct = if n >= 2 {
        counts.iter().map(|&c| c.saturating_sub(1) as f64).sum::<f64>() / (t * (nf - 1.0))
            * 100.0
            * scale
    } else {
        0.0
    };

    let annuli = fine_annuli(&grid, 0.0);
    let per_annulus = annuli
        .iter()
        .map(|a| {
            let m = a.cells.len() as f64;
            let agg = a.cells.iter().filter(|&&c| counts[c] > 0).count() as f64 / m * 100.0;
            let uni = a.cells.iter().filter(|&&c| counts[c] == 1).count() as f64 / m
                * 100.0
                * scale;
            let ov = if n >= 2 {
                a.cells
                    .iter()
                    .map(|&c| counts[c].saturating_sub(1) as f64)
                    .sum::<f64>()
                    / (m * (nf - 1.0))
                    * 100.0
                    * scale
            } else {
                0.0
            };
            AnnulusCoverage {
                center: a.center,
                cells: a.cells.len(),
                aggregate_pct: agg,
                differential_pct: uni,
                overlap_pct: ov,
            }
        })
        .collect();

    Ok(CoverageReport {
        aggregate_pct,
        differential_pct,
        differential_mean: dm,
        differential_std: ds,
        differential_any_pct,
        overlap_pct,
        normalized_by_single: normalize_by_single,
        per_annulus,
    })
}

/// Expected aggregate-coverage curve e_n for segregated sampling at one fixed
/// density p_o: e_n = (1/mu)(1 - (1 - mu p_o)^n) for mu > 0, and the
/// difference-equation limit e_n = n p_o at mu = 0; both clipped at 1.
pub fn expected_coverage_curve(p_o: f64, mu: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(0.0 < p_o && p_o <= 1.0) {
        return Err(SegError::Invalid(format!("p_o {p_o} outside (0, 1]")));
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(SegError::Invalid(format!("mu {mu} outside [0, 1]")));
    }
    let mut out = Vec::with_capacity(n_max);
    if mu == 0.0 {
        // recursion e_n = e_{n-1} + p_o
        let mut e = 0.0;
        for _ in 0..n_max {
            e += p_o;
            out.push(e.min(1.0));
        }
    } else {
        for n in 1..=n_max {
            let e = (1.0 - (1.0 - mu * p_o).powi(n as i32)) / mu;
            out.push(e.min(1.0));
        }
    }
    Ok(out)
}
