//! Multiple-acquisition sampling-pattern generation: random, low-correlation,
//! and statistically segregated strategies, plus PSF incoherence metrics.
//!
//! Candidate draws are Bernoulli trials keyed on (seed, ky, kz), so any
//! candidate can be re-materialized from its seed alone. Selection among
//! candidates orders by aliasing energy; for a binary mask with S samples on
//! a T-cell grid the aliasing energy equals T/S - 1 exactly (Parseval), so
//! the selection is implemented on sample counts without a transform per
//! candidate. A unit test pins this equivalence against FFT-computed values.

use crate::density::SamplingDensity;
use crate::fft::Fft2;
use crate::grid::{grouped_annuli, Annulus, GridSpec};
use crate::par;
use crate::rng::{cell_uniform, derive_seed};
use crate::{Result, SegError};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Sentinel reported for r_psf when a mask has no sidelobes (fully sampled).
pub const R_PSF_SENTINEL: f64 = 1e12;

/// Binary k-space mask for one acquisition.
#[derive(Debug, Clone)]
pub struct SamplingPattern {
    pub grid: GridSpec,
    /// 0/1 mask, row-major [ny x nz].
    pub mask: Array2<u8>,
    /// Seed that produced this draw.
    pub seed: u64,
}

impl SamplingPattern {
    pub fn samples(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }

    pub fn sampled_fraction(&self) -> f64 {
        self.samples() as f64 / self.grid.total() as f64
    }
}

/// Pattern-generation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    LowCorr,
    Segregated,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Random => write!(f, "random"),
            Strategy::LowCorr => write!(f, "low_corr"),
            Strategy::Segregated => write!(f, "segregated"),
        }
    }
}

/// Ordered set of N patterns drawn for one experiment.
#[derive(Debug, Clone)]
pub struct PatternSet {
    pub patterns: Vec<SamplingPattern>,
    pub strategy: Strategy,
    /// Segregation strength; present only for the segregated strategy.
    pub mu: Option<f64>,
    pub density: SamplingDensity,
}

/// Point-spread-function incoherence figures of one mask.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PsfMetrics {
    /// Peak magnitude over maximum sidelobe magnitude (>= 1).
    pub r_psf: f64,
    /// Total sidelobe energy normalized by the peak energy.
    pub aliasing_energy: f64,
}

/// Number of prior patterns that sampled each location.
#[derive(Debug, Clone)]
pub struct CoverageCount {
    pub grid: GridSpec,
    pub counts: Array2<u32>,
}

impl CoverageCount {
    pub fn new(grid: GridSpec) -> Self {
        CoverageCount {
            grid,
            counts: Array2::zeros((grid.ny, grid.nz)),
        }
    }

    pub fn add(&mut self, p: &SamplingPattern) -> Result<()> {
        if p.grid != self.grid {
            return Err(SegError::GridMismatch(
                "pattern grid differs from coverage grid".into(),
            ));
        }
        for (c, &m) in self.counts.iter_mut().zip(p.mask.iter()) {
            *c += m as u32;
        }
        Ok(())
    }

    pub fn covered_fraction(&self) -> f64 {
        self.counts.iter().filter(|&&c| c > 0).count() as f64 / self.grid.total() as f64
    }
}

/// Independent Bernoulli draw of one pattern from a density.
pub fn draw_pattern(d: &SamplingDensity, seed: u64) -> SamplingPattern {
    let mask = Array2::from_shape_fn((d.grid.ny, d.grid.nz), |(iy, iz)| {
        (cell_uniform(seed, iy, iz) < d.values[[iy, iz]]) as u8
    });
    SamplingPattern {
        grid: d.grid,
        mask,
        seed,
    }
}

/// Sample count of the pattern `draw_pattern(d, seed)` would produce, without
/// materializing the mask.
fn draw_count(values: &Array2<f64>, seed: u64) -> usize {
    values
        .indexed_iter()
        .filter(|&((iy, iz), &p)| cell_uniform(seed, iy, iz) < p)
        .count()
}

/// PSF metrics of a mask via the unitary inverse DFT.
pub fn psf_metrics(p: &SamplingPattern) -> Result<PsfMetrics> {
    let samples = p.samples();
    if samples == 0 {
        return Err(SegError::Invalid("psf of an empty mask".into()));
    }
    let complex = p.mask.mapv(|m| Complex64::new(m as f64, 0.0));
    let psf = Fft2::new(p.grid.ny, p.grid.nz).inverse(&complex);
    psf_metrics_from(&psf, p.grid)
}

fn psf_metrics_from(psf: &Array2<Complex64>, grid: GridSpec) -> Result<PsfMetrics> {
    let peak_idx = (grid.ny / 2, grid.nz / 2);
    let peak2 = psf[[peak_idx.0, peak_idx.1]].norm_sqr();
    let mut side2_max = 0.0f64;
    let mut side2_sum = 0.0f64;
    for ((iy, iz), v) in psf.indexed_iter() {
        if (iy, iz) == peak_idx {
            continue;
        }
        let e = v.norm_sqr();
        side2_sum += e;
        side2_max = side2_max.max(e);
    }
    let r_psf = if side2_max <= peak2 * 1e-24 {
        R_PSF_SENTINEL
    } else {
        (peak2 / side2_max).sqrt().min(R_PSF_SENTINEL)
    };
    Ok(PsfMetrics {
        r_psf,
        aliasing_energy: side2_sum / peak2,
    })
}

/// Select the best of `n_candidates` draws from `values`: the one with the
/// minimum aliasing energy (= maximum sample count), ties broken by lowest
/// candidate index. Returns (candidate_index, seed).
fn select_candidate(
    values: &Array2<f64>,
    master: u64,
    acq: u64,
    n_candidates: usize,
) -> (usize, u64) {
    let counts = par::map_indexed(n_candidates, |c| {
        draw_count(values, derive_seed(master, acq, c as u64))
    });
    let mut best = 0usize;
    for (c, &n) in counts.iter().enumerate().skip(1) {
        if n > counts[best] {
            best = c;
        }
    }
    (best, derive_seed(master, acq, best as u64))
}

/// N independently selected random patterns (minimum aliasing energy among
/// `n_candidates` draws per acquisition).
pub fn generate_random_set(
    d: &SamplingDensity,
    n: usize,
    n_candidates: usize,
    seed: u64,
) -> Result<PatternSet> {
    if n < 1 || n_candidates < 1 {
        return Err(SegError::Invalid("need n >= 1 and n_candidates >= 1".into()));
    }
    let patterns = (0..n)
        .map(|acq| {
            let (_, s) = select_candidate(&d.values, seed, acq as u64, n_candidates);
            draw_pattern(d, s)
        })
        .collect();
    Ok(PatternSet {
        patterns,
        strategy: Strategy::Random,
        mu: None,
        density: d.clone(),
    })
}

/// Pearson correlation between two flattened {0,1} masks. Constant masks
/// (zero variance) correlate 0 by convention.
pub fn mask_correlation(a: &SamplingPattern, b: &SamplingPattern) -> f64 {
    let t = a.grid.total() as f64;
    let (mut sa, mut sb, mut dot) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.mask.iter().zip(b.mask.iter()) {
        sa += x as f64;
        sb += y as f64;
        dot += (x & y) as f64;
    }
    let va = t * sa - sa * sa;
    let vb = t * sb - sb * sb;
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    (t * dot - sa * sb) / (va * vb).sqrt()
}

/// Low-correlation strategy: shortlist the `n_shortlist` minimal-aliasing
/// candidates out of `n_total` draws, then greedily pick N patterns with
/// minimal summed pairwise correlation (seeded from the single best-aliasing
/// candidate).
pub fn generate_lowcorr_set(
    d: &SamplingDensity,
    n: usize,
    n_total: usize,
    n_shortlist: usize,
    seed: u64,
) -> Result<PatternSet> {
    if n < 1 {
        return Err(SegError::Invalid("need n >= 1".into()));
    }
    if n_shortlist < n {
        return Err(SegError::Invalid(format!(
            "shortlist {n_shortlist} smaller than requested set size {n}"
        )));
    }
    if n_total < n_shortlist {
        return Err(SegError::Invalid("n_total must be >= n_shortlist".into()));
    }

    // pass 1: counts only
    let counts = par::map_indexed(n_total, |c| {
        draw_count(&d.values, derive_seed(seed, 0, c as u64))
    });
    // shortlist by descending count (= ascending aliasing energy), tie by index
    let mut order: Vec<usize> = (0..n_total).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order.truncate(n_shortlist);

    // pass 2: materialize shortlist masks
    let shortlist: Vec<SamplingPattern> = par::map_indexed(order.len(), |i| {
        draw_pattern(d, derive_seed(seed, 0, order[i] as u64))
    });

    // greedy forward selection on summed correlation
    let mut selected = vec![0usize];
    while selected.len() < n {
        let sums = par::map_indexed(shortlist.len(), |c| {
            if selected.contains(&c) {
                f64::INFINITY
            } else {
                selected
                    .iter()
                    .map(|&s| mask_correlation(&shortlist[c], &shortlist[s]))
                    .sum::<f64>()
            }
        });
        let mut best = usize::MAX;
        let mut best_sum = f64::INFINITY;
        for (c, &s) in sums.iter().enumerate() {
            if s < best_sum {
                best_sum = s;
                best = c;
            }
        }
        selected.push(best);
    }

    Ok(PatternSet {
        patterns: selected.into_iter().map(|c| shortlist[c].clone()).collect(),
        strategy: Strategy::LowCorr,
        mu: None,
        density: d.clone(),
    })
}

/// Conditional-density update for the next segregated pattern: per annulus
/// group, covered locations drop to mu*p and uncovered locations rise to
/// beta*p with beta = (S - mu*S_cov)/S_unc, where S, S_cov, S_unc are the
/// base-density masses of all / covered / uncovered cells. For a flat annulus
/// profile this is exactly beta = (1 - mu*K)/(1 - K) with K the covered
/// fraction, and it conserves the annulus density mass exactly for any
/// profile. When the boost would push a cell past 1, the corrected rule pins
/// uncovered locations at 1 and spreads the remaining mass flat over covered
/// ones, (S - (m - c))/c, clipped below at 0. Exhausted annuli (K = 1) return
/// to the base density. mu = 1 leaves the density untouched. The central
/// Nyquist disk stays at 1.
pub fn update_conditional_density(
    d: &SamplingDensity,
    cov: &CoverageCount,
    mu: f64,
) -> Result<SamplingDensity> {
    if cov.grid != d.grid {
        return Err(SegError::GridMismatch(
            "coverage grid differs from density grid".into(),
        ));
    }
    let groups = grouped_annuli(&d.grid, &d.values, d.center_fraction);
    update_conditional_density_grouped(d, cov, mu, &groups)
}

/// Same as [`update_conditional_density`] with a precomputed annulus
/// partition (the partition depends only on the base density).
pub fn update_conditional_density_grouped(
    d: &SamplingDensity,
    cov: &CoverageCount,
    mu: f64,
    groups: &[Annulus],
) -> Result<SamplingDensity> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(SegError::Invalid(format!("mu {mu} outside [0, 1]")));
    }
    let base = d.values.as_slice().expect("row-major");
    let counts = cov.counts.as_slice().expect("row-major");
    let mut out = d.values.clone();
    let flat = out.as_slice_mut().expect("row-major");

    for g in groups {
        let m = g.cells.len();
        let c_cov = g.cells.iter().filter(|&&c| counts[c] > 0).count();
        if c_cov == m {
            // exhausted annulus: back to the base density
            for &c in &g.cells {
                flat[c] = base[c];
            }
            continue;
        }
        let mass: f64 = g.cells.iter().map(|&c| base[c]).sum();
        let mass_cov: f64 = g
            .cells
            .iter()
            .filter(|&&c| counts[c] > 0)
            .map(|&c| base[c])
            .sum();
        let mass_unc = mass - mass_cov;
        let p_max_unc = g
            .cells
            .iter()
            .filter(|&&c| counts[c] == 0)
            .map(|&c| base[c])
            .fold(0.0, f64::max);
        let beta = if mass_unc > 0.0 {
            (mass - mu * mass_cov) / mass_unc
        } else {
            1.0
        };
        if beta * p_max_unc <= 1.0 {
            for &c in &g.cells {
                flat[c] = base[c] * if counts[c] > 0 { mu } else { beta };
            }
        } else {
            let p_cov = ((mass - (m - c_cov) as f64) / c_cov as f64).max(0.0);
            for &c in &g.cells {
                flat[c] = if counts[c] > 0 { p_cov } else { 1.0 };
            }
        }
    }
    Ok(SamplingDensity {
        grid: d.grid,
        values: out,
        center_fraction: d.center_fraction,
        target_r: d.target_r,
        degree: d.degree,
    })
}

/// Statistically segregated set: the first pattern is drawn from the base
/// density; each later pattern is drawn from the conditional density updated
/// with the coverage of all preceding patterns. Candidate selection matches
/// [`generate_random_set`], so mu = 1 reproduces the random strategy draw for
/// draw.
pub fn generate_segregated_set(
    d: &SamplingDensity,
    n: usize,
    mu: f64,
    n_candidates: usize,
    seed: u64,
) -> Result<PatternSet> {
    if n < 1 || n_candidates < 1 {
        return Err(SegError::Invalid("need n >= 1 and n_candidates >= 1".into()));
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(SegError::Invalid(format!("mu {mu} outside [0, 1]")));
    }
    let groups = grouped_annuli(&d.grid, &d.values, d.center_fraction);
    let mut cov = CoverageCount::new(d.grid);
    let mut patterns = Vec::with_capacity(n);
    let mut current = d.clone();
    for acq in 0..n {
        if acq > 0 {
            current = update_conditional_density_grouped(d, &cov, mu, &groups)?;
        }
        let (_, s) = select_candidate(&current.values, seed, acq as u64, n_candidates);
        let p = draw_pattern(&current, s);
        cov.add(&p)?;
        patterns.push(p);
    }
    Ok(PatternSet {
        patterns,
        strategy: Strategy::Segregated,
        mu: Some(mu),
        density: d.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::design_density;
    use crate::grid::in_disk;

    fn grid64() -> GridSpec {
        GridSpec::new(64, 64).unwrap()
    }

    #[test]
    fn saturated_density_draws_full_mask() {
        let d = SamplingDensity::uniform(grid64(), 1.0).unwrap();
        for seed in [0u64, 9, 1234] {
            let p = draw_pattern(&d, seed);
            assert_eq!(p.samples(), 64 * 64);
        }
    }

    #[test]
    fn disk_only_density_draws_exactly_the_disk() {
        let g = grid64();
        let mut d = SamplingDensity::uniform(g, 0.0).unwrap();
        d.center_fraction = 0.2;
        for ((iy, iz), v) in d.values.indexed_iter_mut() {
            if in_disk(g.radius(iy, iz), 0.2) {
                *v = 1.0;
            }
        }
        let p = draw_pattern(&d, 7);
        for ((iy, iz), &m) in p.mask.indexed_iter() {
            assert_eq!(m == 1, in_disk(g.radius(iy, iz), 0.2));
        }
    }

    #[test]
    fn draw_count_matches_binomial_3_sigma() {
        let g = GridSpec::new(256, 256).unwrap();
        let d = design_density(g, 4.0, None, None).unwrap();
        let expected: f64 = d.values.sum();
        let sigma: f64 = d.values.iter().map(|&p| p * (1.0 - p)).sum::<f64>().sqrt();
        for seed in 0..5u64 {
            let n = draw_pattern(&d, seed).samples() as f64;
            assert!(
                (n - expected).abs() < 3.0 * sigma,
                "seed {seed}: {n} vs {expected} +- {sigma}"
            );
        }
    }

    #[test]
    fn psf_of_full_mask_is_delta() {
        let d = SamplingDensity::uniform(grid64(), 1.0).unwrap();
        let m = psf_metrics(&draw_pattern(&d, 0)).unwrap();
        assert_eq!(m.r_psf, R_PSF_SENTINEL);
        assert!(m.aliasing_energy < 1e-20);
    }

    #[test]
    fn psf_of_regular_decimation_has_unit_ratio() {
        let g = grid64();
        let mask = Array2::from_shape_fn((64, 64), |(iy, _)| (iy % 2 == 0) as u8);
        let p = SamplingPattern { grid: g, mask, seed: 0 };
        let m = psf_metrics(&p).unwrap();
        // coherent replica at half-FOV has the same magnitude as the peak
        assert!((m.r_psf - 1.0).abs() < 1e-9, "r_psf {}", m.r_psf);
    }

    #[test]
    fn psf_empty_mask_errors() {
        let g = grid64();
        let p = SamplingPattern {
            grid: g,
            mask: Array2::zeros((64, 64)),
            seed: 0,
        };
        assert!(psf_metrics(&p).is_err());
    }

    /// Brute-force O(T^2) DFT oracle for the PSF.
    fn psf_oracle(p: &SamplingPattern) -> PsfMetrics {
        let (ny, nz) = (p.grid.ny, p.grid.nz);
        let t = (ny * nz) as f64;
        let psf = Array2::from_shape_fn((ny, nz), |(x, y)| {
            let fx = x as f64 - (ny / 2) as f64;
            let fy = y as f64 - (nz / 2) as f64;
            let mut acc = Complex64::default();
            for iy in 0..ny {
                for iz in 0..nz {
                    if p.mask[[iy, iz]] == 0 {
                        continue;
                    }
                    let ky = iy as f64 - (ny / 2) as f64;
                    let kz = iz as f64 - (nz / 2) as f64;
                    let ph = 2.0 * std::f64::consts::PI
                        * (fx * ky / ny as f64 + fy * kz / nz as f64);
                    acc += Complex64::from_polar(1.0, ph);
                }
            }
            acc / t.sqrt()
        });
        psf_metrics_from(&psf, p.grid).unwrap()
    }

    #[test]
    fn psf_matches_direct_dft_oracle() {
        let d = design_density(grid64(), 4.0, None, None).unwrap();
        let p = draw_pattern(&d, 42);
        let fast = psf_metrics(&p).unwrap();
        let slow = psf_oracle(&p);
        assert!((fast.r_psf - slow.r_psf).abs() < 1e-9);
        assert!((fast.aliasing_energy - slow.aliasing_energy).abs() < 1e-9);
    }

    #[test]
    fn aliasing_energy_closed_form() {
        // for a binary mask, aliasing energy = T/S - 1 exactly
        let d = design_density(grid64(), 4.0, None, None).unwrap();
        let p = draw_pattern(&d, 3);
        let m = psf_metrics(&p).unwrap();
        let want = 64.0 * 64.0 / p.samples() as f64 - 1.0;
        assert!((m.aliasing_energy - want).abs() < 1e-9);
    }

    #[test]
    fn count_selection_equals_min_aliasing_selection() {
        let d = design_density(grid64(), 4.0, None, None).unwrap();
        let n_candidates = 24;
        let (best, _) = select_candidate(&d.values, 11, 0, n_candidates);
        let energies: Vec<f64> = (0..n_candidates)
            .map(|c| {
                psf_metrics(&draw_pattern(&d, derive_seed(11, 0, c as u64)))
                    .unwrap()
                    .aliasing_energy
            })
            .collect();
        let min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(energies[best] <= min + 1e-9);
    }

    #[test]
    fn single_candidate_set_is_plain_draws() {
        let d = design_density(grid64(), 4.0, None, None).unwrap();
        let set = generate_random_set(&d, 3, 1, 99).unwrap();
        for (acq, p) in set.patterns.iter().enumerate() {
            let direct = draw_pattern(&d, derive_seed(99, acq as u64, 0));
            assert_eq!(p.mask, direct.mask);
        }
    }

    #[test]
    fn selected_aliasing_at_most_median() {
        let d = design_density(grid64(), 4.0, None, None).unwrap();
        let n_candidates = 15;
        let set = generate_random_set(&d, 1, n_candidates, 5).unwrap();
        let selected = psf_metrics(&set.patterns[0]).unwrap().aliasing_energy;
        let mut energies: Vec<f64> = (0..n_candidates)
            .map(|c| {
                psf_metrics(&draw_pattern(&d, derive_seed(5, 0, c as u64)))
                    .unwrap()
                    .aliasing_energy
            })
            .collect();
        energies.sort_by(f64::total_cmp);
        assert!(selected <= energies[n_candidates / 2]);
    }

    #[test]
    fn lowcorr_n1_is_min_aliasing_candidate() {
        let d = design_density(grid64(), 4.0, None, None).unwrap();
        let set = generate_lowcorr_set(&d, 1, 40, 8, 21).unwrap();
        let counts: Vec<usize> = (0..40)
            .map(|c| draw_pattern(&d, derive_seed(21, 0, c)).samples())
            .collect();
        let best = (0..40).max_by_key(|&c| (counts[c], usize::MAX - c)).unwrap();
        assert_eq!(set.patterns[0].seed, derive_seed(21, 0, best as u64));
    }

    #[test]
    fn lowcorr_greedy_matches_exhaustive_pairs() {
        // exhaustive C(8,2) oracle over the shortlist
        let d = design_density(grid64(), 4.0, None, None).unwrap();
        let n_total = 60;
        let n_shortlist = 8;
        for seed in 0..24u64 {
            let set = generate_lowcorr_set(&d, 2, n_total, n_shortlist, seed).unwrap();
            let greedy_corr = mask_correlation(&set.patterns[0], &set.patterns[1]);

            let counts: Vec<usize> = (0..n_total)
                .map(|c| draw_count(&d.values, derive_seed(seed, 0, c as u64)))
                .collect();
            let mut order: Vec<usize> = (0..n_total).collect();
            order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
            order.truncate(n_shortlist);
            let shortlist: Vec<SamplingPattern> = order
                .iter()
                .map(|&c| draw_pattern(&d, derive_seed(seed, 0, c as u64)))
                .collect();
            let mut best = f64::INFINITY;
            for i in 0..n_shortlist {
                for j in (i + 1)..n_shortlist {
                    best = best.min(mask_correlation(&shortlist[i], &shortlist[j]));
                }
            }
            // greedy is anchored at the min-aliasing candidate, so it can only
            // match the exhaustive optimum when that candidate is in the best
            // pair; it must never beat it
            assert!(greedy_corr >= best - 1e-12);
            if seed == 2 {
                // frozen instance where the anchored greedy finds the optimum
                assert!(
                    (greedy_corr - best).abs() < 1e-12,
                    "seed 2 greedy {greedy_corr} vs exhaustive {best}"
                );
            }
        }
    }

    #[test]
    fn update_mu_one_is_exact_identity() {
        let g = GridSpec::new(128, 128).unwrap();
        let d = design_density(g, 4.0, None, None).unwrap();
        let mut cov = CoverageCount::new(g);
        cov.add(&draw_pattern(&d, 1)).unwrap();
        let out = update_conditional_density(&d, &cov, 1.0).unwrap();
        assert_eq!(out.values, d.values);
    }

    #[test]
    fn update_hand_derived_values() {
        // annulus with K = 0.5, p = 0.25, mu = 0: beta = 2 -> covered 0, uncovered 0.5
        let mu = 0.0f64;
        let (k, p) = (0.5f64, 0.25f64);
        let beta = (1.0 - mu * k) / (1.0 - k);
        assert_eq!(beta, 2.0);
        assert_eq!(p * beta, 0.5);
        assert_eq!(p * mu, 0.0);
        assert!((k * (p * mu) + (1.0 - k) * (p * beta) - p).abs() < 1e-15);

        // annulus with K = 0.9, p = 0.25, mu = 0: naive boost 2.5 > 1 -> corrected
        let (k, p) = (0.9f64, 0.25f64);
        let beta = 1.0 / (1.0 - k);
        assert!(p * beta > 1.0);
        let covered = (k - 1.0 + p) / k;
        assert!((covered - 0.25 / 1.5).abs() < 1e-12, "covered {covered}");
        let mean = (1.0 - k) * 1.0 + k * covered;
        assert!((mean - p).abs() < 1e-12);
    }

    #[test]
    fn update_conserves_annulus_mass_exactly() {
        let g = GridSpec::new(128, 128).unwrap();
        let d = design_density(g, 4.0, None, None).unwrap();
        let groups = grouped_annuli(&g, &d.values, d.center_fraction);
        let mut cov = CoverageCount::new(g);
        for seed in 0..3 {
            cov.add(&draw_pattern(&d, seed)).unwrap();
            for &mu in &[0.0, 0.3, 0.7, 1.0] {
                let out = update_conditional_density_grouped(&d, &cov, mu, &groups).unwrap();
                let base = d.values.as_slice().unwrap();
                let new = out.values.as_slice().unwrap();
                for grp in &groups {
                    let m = grp.cells.len() as f64;
                    let pbar: f64 = grp.cells.iter().map(|&c| base[c]).sum::<f64>() / m;
                    let nbar: f64 = grp.cells.iter().map(|&c| new[c]).sum::<f64>() / m;
                    assert!(
                        (nbar - pbar).abs() < 1e-9,
                        "mu {mu}: annulus mean {nbar} vs base {pbar}"
                    );
                }
            }
        }
    }

    #[test]
    fn update_rejects_bad_mu_and_grid() {
        let g = grid64();
        let d = design_density(g, 4.0, None, None).unwrap();
        let cov = CoverageCount::new(g);
        assert!(update_conditional_density(&d, &cov, 1.5).is_err());
        let other = CoverageCount::new(GridSpec::new(32, 32).unwrap());
        assert!(update_conditional_density(&d, &other, 0.5).is_err());
    }

    #[test]
    fn segregated_mu_one_equals_random_bit_for_bit() {
        let d = design_density(grid64(), 4.0, None, None).unwrap();
        let seg = generate_segregated_set(&d, 3, 1.0, 8, 77).unwrap();
        let rnd = generate_random_set(&d, 3, 8, 77).unwrap();
        for (a, b) in seg.patterns.iter().zip(rnd.patterns.iter()) {
            assert_eq!(a.mask, b.mask);
            assert_eq!(a.seed, b.seed);
        }
    }

    #[test]
    fn segregated_set_is_deterministic() {
        let d = design_density(grid64(), 4.0, None, None).unwrap();
        let a = generate_segregated_set(&d, 4, 0.0, 16, 5).unwrap();
        let b = generate_segregated_set(&d, 4, 0.0, 16, 5).unwrap();
        for (x, y) in a.patterns.iter().zip(b.patterns.iter()) {
            assert_eq!(x.mask, y.mask);
        }
    }

    #[test]
    fn segregated_preserves_radial_rate_within_binomial_ci() {
        // 99% CI around the base profile for annuli with >= 200 cells
        let g = GridSpec::new(128, 128).unwrap();
        let d = design_density(g, 4.0, None, None).unwrap();
        let set = generate_segregated_set(&d, 8, 0.0, 50, 31).unwrap();
        let annuli = crate::grid::fine_annuli(&g, d.center_fraction);
        let base = d.values.as_slice().unwrap();
        for p in &set.patterns {
            let mask = p.mask.as_slice().unwrap();
            let (mut inside, mut total) = (0usize, 0usize);
            for a in annuli.iter().filter(|a| a.cells.len() >= 200) {
                let m = a.cells.len() as f64;
                let po = a.cells.iter().map(|&c| base[c]).sum::<f64>() / m;
                let rate = a.cells.iter().filter(|&&c| mask[c] != 0).count() as f64 / m;
                let hw = 2.5758293 * (po * (1.0 - po) / m).sqrt();
                total += 1;
                if (rate - po).abs() <= hw {
                    inside += 1;
                }
            }
            assert!(
                inside as f64 >= 0.95 * total as f64,
                "{} of {} annuli inside CI",
                inside,
                total
            );
        }
    }

    #[test]
    fn segregated_coverage_grows_with_n_and_mu() {
        let g = GridSpec::new(128, 128).unwrap();
        let d = design_density(g, 4.0, None, None).unwrap();
        let coverage = |n: usize, mu: f64| -> f64 {
            let mut acc = 0.0;
            for seed in 0..10u64 {
                let set = generate_segregated_set(&d, n, mu, 10, seed).unwrap();
                let mut cov = CoverageCount::new(g);
                for p in &set.patterns {
                    cov.add(p).unwrap();
                }
                acc += cov.covered_fraction();
            }
            acc / 10.0
        };
        assert!(coverage(4, 0.0) <= coverage(6, 0.0) + 1e-12);
        assert!(coverage(4, 0.0) >= coverage(4, 0.5));
        assert!(coverage(4, 0.5) >= coverage(4, 1.0));
    }
}
