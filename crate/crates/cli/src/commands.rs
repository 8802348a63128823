//! Subcommand implementations: thin orchestration over the library crate
//! plus the CSV/JSON surfaces.

use segsamp::density::{design_density, SamplingDensity};
use segsamp::experiments::{
    run_experiment, table1_sweep, EvalMode, ExperimentConfig, ProtocolPreset,
};
use segsamp::grid::GridSpec;
use segsamp::io;
use segsamp::patterns::{
    generate_lowcorr_set, generate_random_set, generate_segregated_set, psf_metrics, PatternSet,
    SamplingPattern, Strategy,
};
use segsamp::phantom::{
    add_noise, forward_kspace, inverse_kspace, make_analytic_phantom, render_acquisitions,
    ComplexImage, KSpaceData,
};
use segsamp::quality::{evaluate, pnorm_combine, ReportScope};
use segsamp::recon::{normalize_dataset, pe_reconstruct, undersample, zf_recon, PEConfig};
use segsamp::stats::empirical_coverage;
use segsamp::{Result, SegError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn parse_grid(s: &str) -> Result<GridSpec> {
    let (ny, nz) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| SegError::Invalid(format!("grid '{s}' is not NYxNZ")))?;
    let ny: usize = ny
        .trim()
        .parse()
        .map_err(|_| SegError::Invalid(format!("bad grid rows in '{s}'")))?;
    let nz: usize = nz
        .trim()
        .parse()
        .map_err(|_| SegError::Invalid(format!("bad grid cols in '{s}'")))?;
    GridSpec::new(ny, nz)
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    match s {
        "random" => Ok(Strategy::Random),
        "low_corr" | "lowcorr" | "low-corr" => Ok(Strategy::LowCorr),
        "segregated" => Ok(Strategy::Segregated),
        other => Err(SegError::Invalid(format!(
            "unknown strategy '{other}' (random | low_corr | segregated)"
        ))),
    }
}

fn parse_preset(s: &str) -> Result<ProtocolPreset> {
    match s {
        "bssfp" => Ok(ProtocolPreset::Bssfp),
        "t1_spin_echo" | "t1" => Ok(ProtocolPreset::T1SpinEcho),
        "t2_multi_echo" | "t2" => Ok(ProtocolPreset::T2MultiEcho),
        other => Err(SegError::Invalid(format!(
            "unknown protocol '{other}' (bssfp | t1_spin_echo | t2_multi_echo)"
        ))),
    }
}

fn config_hash(parts: &[String]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn csv_with_header(hash: &str, header: &str, rows: &[String]) -> String {
    let mut out = format!("# segsamp {VERSION} config_hash={hash}\n{header}\n");
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

// ------------------------------------------------------------------ density

pub fn cmd_density(
    grid: &str,
    r: f64,
    degree: Option<u32>,
    center_fraction: Option<f64>,
    out: &Path,
) -> Result<()> {
    let grid = parse_grid(grid)?;
    let d = design_density(grid, r, degree, center_fraction)?;
    io::export_density(out, &d)?;
    println!(
        "density {}x{} R={} degree={} cf={:.4} mean={:.6} -> {}",
        grid.ny,
        grid.nz,
        r,
        d.degree,
        d.center_fraction,
        d.mean(),
        out.display()
    );
    Ok(())
}

fn load_density(dir: &Path) -> Result<SamplingDensity> {
    #[derive(Deserialize)]
    struct Meta {
        ny: usize,
        nz: usize,
        target_r: f64,
        degree: u32,
        center_fraction: f64,
    }
    let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join("density.json"))?)?;
    let values = io::read_csv_grid(&dir.join("density.csv"))?;
    if values.dim() != (meta.ny, meta.nz) {
        return Err(SegError::Format("density.csv does not match density.json dims".into()));
    }
    Ok(SamplingDensity {
        grid: GridSpec::new(meta.ny, meta.nz)?,
        values,
        center_fraction: meta.center_fraction,
        target_r: meta.target_r,
        degree: meta.degree,
    })
}

// ----------------------------------------------------------------- patterns

#[allow(clippy::too_many_arguments)]
pub fn cmd_patterns(
    grid: &str,
    r: f64,
    n: usize,
    strategy: &str,
    mu: f64,
    candidates: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let grid = parse_grid(grid)?;
    let strategy = parse_strategy(strategy)?;
    let d = design_density(grid, r, None, None)?;
    let set = match strategy {
        Strategy::Random => generate_random_set(&d, n, candidates, seed)?,
        Strategy::LowCorr => {
            generate_lowcorr_set(&d, n, 10 * candidates.max(100), (candidates / 2).max(n), seed)?
        }
        Strategy::Segregated => generate_segregated_set(&d, n, mu, candidates, seed)?,
    };
    let metrics: Vec<_> = set
        .patterns
        .iter()
        .map(psf_metrics)
        .collect::<Result<_>>()?;
    io::export_pattern_set(out, &set, seed, &metrics)?;
    io::export_density(&out.join("density"), &d)?;

    let coverage = empirical_coverage(&set, true)?;
    let json = serde_json::to_string_pretty(&coverage)? + "\n";
    io::write_atomic(&out.join("coverage.json"), json.as_bytes())?;

    let hash = config_hash(&[format!(
        "patterns grid={}x{} r={r} n={n} strategy={strategy} mu={mu} candidates={candidates} seed={seed}",
        grid.ny, grid.nz
    )]);
    let row = format!(
        "{r},{n},{strategy},{mu},{:.4},{:.4},{:.4},{:.4}",
        coverage.aggregate_pct,
        coverage.differential_mean,
        coverage.differential_std,
        coverage.overlap_pct
    );
    let csv = csv_with_header(
        &hash,
        "r,n,strategy,mu,aggregate_pct,differential_mean_pct,differential_std_pct,overlap_pct",
        &[row],
    );
    io::write_atomic(&out.join("coverage.csv"), csv.as_bytes())?;
    println!(
        "{} set: aggregate {:.1}%, differential {:.1}+-{:.1}%, overlap {:.1}% -> {}",
        strategy,
        coverage.aggregate_pct,
        coverage.differential_mean,
        coverage.differential_std,
        coverage.overlap_pct,
        out.display()
    );
    Ok(())
}

// -------------------------------------------------------------- sweep-table1

pub fn cmd_sweep_table1(
    grid: &str,
    seeds: usize,
    master_seed: u64,
    candidates: usize,
    out: &Path,
) -> Result<()> {
    let grid = parse_grid(grid)?;
    let r_values = [2.0, 4.0, 6.0, 8.0];
    let n_values = [2usize, 3, 4, 6, 8, 10];
    let rows = table1_sweep(grid, &r_values, &n_values, seeds, candidates, master_seed)?;
    let hash = config_hash(&[format!(
        "sweep-table1 grid={}x{} seeds={seeds} master={master_seed} candidates={candidates}",
        grid.ny, grid.nz
    )]);
    let lines: Vec<String> = rows
        .iter()
        .map(|row| {
            format!(
                "{},{},{:.2},{:.2},{:.2},{:.2},{:.2}",
                row.r, row.n, row.agg_delta, row.diff_delta, row.over_delta,
                row.agg_random, row.agg_segregated
            )
        })
        .collect();
    let csv = csv_with_header(
        &hash,
        "r,n,agg_delta_pct,diff_delta_pct,over_delta_pct,agg_random_pct,agg_segregated_pct",
        &lines,
    );
    io::write_atomic(out, csv.as_bytes())?;
    println!("{} rows -> {}", rows.len(), out.display());
    Ok(())
}

// ----------------------------------------------------------------- simulate

#[derive(Debug, Serialize, Deserialize)]
struct SimManifest {
    ny: usize,
    nz: usize,
    protocol: ProtocolPreset,
    n: usize,
    noise_variance: f64,
    seed: u64,
    undersampled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pattern_dir: Option<PathBuf>,
    kspace_files: Vec<String>,
    reference_files: Vec<String>,
}

fn load_pattern_set(dir: &Path) -> Result<(PatternSet, io::PatternManifest)> {
    let manifest: io::PatternManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let density = load_density(&dir.join("density"))?;
    let patterns: Vec<SamplingPattern> = manifest
        .patterns
        .iter()
        .map(|e| io::read_mask_pgm(&dir.join(&e.file), e.seed))
        .collect::<Result<_>>()?;
    Ok((
        PatternSet {
            patterns,
            strategy: manifest.strategy,
            mu: manifest.mu,
            density,
        },
        manifest,
    ))
}

pub fn cmd_simulate(
    grid: &str,
    protocol: &str,
    n: usize,
    patterns: Option<&Path>,
    noise_variance: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let grid = parse_grid(grid)?;
    let preset = parse_preset(protocol)?;
    let spec = make_analytic_phantom(grid, preset.tissue_preset())?;
    let proto = preset.protocol(n)?;
    let rendered = render_acquisitions(&spec, &proto)?;
    let images: Vec<ComplexImage> = match preset {
        ProtocolPreset::T1SpinEcho => vec![rendered[0].clone(); n],
        _ => rendered,
    };

    let set = match patterns {
        Some(dir) => {
            let (set, _) = load_pattern_set(dir)?;
            if set.patterns.len() != n {
                return Err(SegError::Invalid(format!(
                    "pattern set holds {} masks but N = {n}",
                    set.patterns.len()
                )));
            }
            if set.patterns[0].grid != grid {
                return Err(SegError::GridMismatch("pattern grid differs from simulation".into()));
            }
            Some(set)
        }
        None => None,
    };

    fs::create_dir_all(out)?;
    let proto_meta = serde_json::to_value(&proto)?;
    let mut kspace_files = Vec::with_capacity(n);
    let mut reference_files = Vec::with_capacity(n);
    for (acq, img) in images.iter().enumerate() {
        let mut k = forward_kspace(img);
        k.acquisition_index = acq;
        if noise_variance > 0.0 {
            k = add_noise(&k, noise_variance, segsamp::rng::derive_seed(seed, 0x0153, acq as u64))?;
        }
        if let Some(set) = &set {
            k = undersample(&k, &set.patterns[acq])?;
        }
        let kname = format!("acq_{acq:03}.ksp");
        io::write_kspace(&out.join(&kname), &k, Some(proto_meta.clone()))?;
        kspace_files.push(kname);
        let rname = format!("ref_{acq:03}.img");
        io::write_image(&out.join(&rname), img, acq)?;
        reference_files.push(rname);
    }
    let manifest = SimManifest {
        ny: grid.ny,
        nz: grid.nz,
        protocol: preset,
        n,
        noise_variance,
        seed,
        undersampled: set.is_some(),
        pattern_dir: patterns.map(|p| p.to_path_buf()),
        kspace_files,
        reference_files,
    };
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    io::write_atomic(&out.join("manifest.json"), json.as_bytes())?;
    println!("{n} datasets -> {}", out.display());
    Ok(())
}

// -------------------------------------------------------------------- recon

pub fn cmd_recon(input: &Path, method: &str, pe_config: Option<&Path>, out: &Path) -> Result<()> {
    let manifest: SimManifest =
        serde_json::from_str(&fs::read_to_string(input.join("manifest.json"))?)?;
    let grid = GridSpec::new(manifest.ny, manifest.nz)?;
    let datasets: Vec<KSpaceData> = manifest
        .kspace_files
        .iter()
        .map(|f| io::read_kspace(&input.join(f)))
        .collect::<Result<_>>()?;

    let pattern_set = match &manifest.pattern_dir {
        Some(dir) => Some(load_pattern_set(dir)?.0),
        None => None,
    };
    let density = match &pattern_set {
        Some(set) => set.density.clone(),
        None => SamplingDensity::uniform(grid, 1.0)?,
    };

    fs::create_dir_all(out)?;
    let hash = config_hash(&[format!("recon input={} method={method}", input.display())]);
    match method {
        "zf" => {
            for (acq, k) in datasets.iter().enumerate() {
                let img = zf_recon(k, &density)?;
                io::write_image(&out.join(format!("recon_{acq:03}.img")), &img, acq)?;
            }
        }
        "pe" => {
            let set = pattern_set.as_ref().ok_or_else(|| {
                SegError::Invalid("profile encoding needs the pattern set (simulate --patterns)".into())
            })?;
            let cfg = match pe_config {
                Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
                None => match manifest.protocol {
                    ProtocolPreset::T2MultiEcho => PEConfig::preset_multicontrast(),
                    _ => PEConfig::preset_phantom(),
                },
            };
            let (normed, scale) = normalize_dataset(&datasets, &density)?;
            let result = pe_reconstruct(&normed, &set.patterns, &density, &cfg)?;
            for (acq, mut img) in result.images.into_iter().enumerate() {
                img.data.mapv_inplace(|v| v * scale);
                io::write_image(&out.join(format!("recon_{acq:03}.img")), &img, acq)?;
            }
            let lines: Vec<String> = result
                .objective_trace
                .iter()
                .enumerate()
                .map(|(i, o)| format!("{i},{o}"))
                .collect();
            let csv = csv_with_header(&hash, "outer_iteration,objective", &lines);
            io::write_atomic(&out.join("objective.csv"), csv.as_bytes())?;
        }
        other => {
            return Err(SegError::Invalid(format!("unknown method '{other}' (zf | pe)")));
        }
    }
    // echo the input manifest so evaluate can find the reference
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "input": input,
        "method": method,
        "n": manifest.n,
    }))? + "\n";
    io::write_atomic(&out.join("recon.json"), json.as_bytes())?;
    println!("{} reconstructions -> {}", manifest.n, out.display());
    Ok(())
}

// ----------------------------------------------------------------- evaluate

pub fn cmd_evaluate(recon: &Path, reference: &Path, mode: &str, out: &Path) -> Result<()> {
    let mode = match mode {
        "combined_pnorm" | "combined" => EvalMode::CombinedPnorm,
        "combined_mean" => EvalMode::CombinedMean,
        "per_contrast" => EvalMode::PerContrast,
        other => {
            return Err(SegError::Invalid(format!(
                "unknown mode '{other}' (combined_pnorm | combined_mean | per_contrast)"
            )))
        }
    };
    let manifest: SimManifest =
        serde_json::from_str(&fs::read_to_string(reference.join("manifest.json"))?)?;
    let refs: Vec<ComplexImage> = manifest
        .reference_files
        .iter()
        .map(|f| io::read_image(&reference.join(f)))
        .collect::<Result<_>>()?;
    let recons: Vec<ComplexImage> = (0..manifest.n)
        .map(|acq| io::read_image(&recon.join(format!("recon_{acq:03}.img"))))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (i, (rec, r)) in recons.iter().zip(&refs).enumerate() {
        let rep = evaluate(
            &rec.data.mapv(|v| v.norm()),
            &r.data.mapv(|v| v.norm()),
            ReportScope::PerAcquisition(i),
        )?;
        rows.push(format!(
            "acq_{i},{:.4},{:.4},{:.6e}",
            rep.psnr_db, rep.ssim_pct, rep.mse_mean
        ));
        reports.push(rep);
    }
    match mode {
        EvalMode::CombinedPnorm => {
            let test = pnorm_combine(&recons, 2.0)?;
            let refc = pnorm_combine(&refs, 2.0)?;
            let rep = evaluate(&test, &refc, ReportScope::Combined)?;
            rows.push(format!(
                "combined,{:.4},{:.4},{:.6e}",
                rep.psnr_db, rep.ssim_pct, rep.mse_mean
            ));
            reports.push(rep);
        }
        EvalMode::CombinedMean => {
            let test = segsamp::experiments::mean_magnitude(&recons);
            let refc = segsamp::experiments::mean_magnitude(&refs);
            let rep = evaluate(&test, &refc, ReportScope::Combined)?;
            rows.push(format!(
                "combined,{:.4},{:.4},{:.6e}",
                rep.psnr_db, rep.ssim_pct, rep.mse_mean
            ));
            reports.push(rep);
        }
        EvalMode::PerContrast => {}
    }
    let hash = config_hash(&[format!(
        "evaluate recon={} reference={} mode={mode:?}",
        recon.display(),
        reference.display()
    )]);
    let csv = csv_with_header(&hash, "image,psnr_db,ssim_pct,mse_mean", &rows);
    io::write_atomic(out, csv.as_bytes())?;
    let json = serde_json::to_string_pretty(&reports)? + "\n";
    io::write_atomic(&out.with_extension("json"), json.as_bytes())?;
    println!("{} rows -> {}", rows.len(), out.display());
    Ok(())
}

// --------------------------------------------------------------- experiment

pub fn cmd_experiment(config: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(config)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)?;
    let out_dir = match out {
        Some(p) => p.to_path_buf(),
        None => {
            let root = std::env::var("SEGSAMP_OUT").unwrap_or_else(|_| "out".into());
            let stem = config
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("experiment");
            PathBuf::from(root).join(stem)
        }
    };
    let summary = run_experiment(&cfg, Some(&out_dir))?;

    // flat CSV of the sweep cells
    let hash = config_hash(&[text]);
    let lines: Vec<String> = summary
        .cells
        .iter()
        .map(|c| {
            format!(
                "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
                c.strategy,
                c.mu.map(|m| format!("{m}")).unwrap_or_default(),
                c.noise_variance,
                c.coverage_mean_pct,
                c.psnr_mean_db,
                c.psnr_std_db,
                c.ssim_mean_pct,
                c.ssim_std_pct
            )
        })
        .collect();
    let csv = csv_with_header(
        &hash,
        "strategy,mu,noise_variance,coverage_mean_pct,psnr_mean_db,psnr_std_db,ssim_mean_pct,ssim_std_pct",
        &lines,
    );
    io::write_atomic(&out_dir.join("cells.csv"), csv.as_bytes())?;

    println!("PSNR ordering: {}", summary.psnr_ordering.join(" > "));
    println!("report -> {}", out_dir.display());
    Ok(())
}

// ----------------------------------------------------------------- helpers

/// Recover an image stack for quick inspection (used in tests).
#[allow(dead_code)]
pub fn zf_stack(datasets: &[KSpaceData]) -> Vec<ComplexImage> {
    datasets.iter().map(inverse_kspace).collect()
}
