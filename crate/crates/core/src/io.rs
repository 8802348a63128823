//! File formats shared with the command-line tool: P5 PGM masks and density
//! previews, CSV grids, raw little-endian complex volumes with JSON sidecars,
//! raw 8-bit label volumes, and pattern-set manifests. All writes go through
//! a write-temp-then-rename step so concurrent replicas never expose partial
//! files.

use crate::density::SamplingDensity;
use crate::grid::GridSpec;
use crate::patterns::{PatternSet, PsfMetrics, SamplingPattern, Strategy};
use crate::phantom::{ComplexImage, KSpaceData, PhantomSpec, TissueParams};
use crate::{Result, SegError};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// Write `bytes` atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = BufWriter::new(fs::File::create(&tmp)?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------- PGM masks

/// Binary P5 PGM, maxval 255. Values are written as round(value * 255).
pub fn write_pgm(path: &Path, values: &Array2<f64>) -> Result<()> {
    let (ny, nz) = values.dim();
    let mut bytes = format!("P5\n{nz} {ny}\n255\n").into_bytes();
    bytes.extend(values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    write_atomic(path, &bytes)
}

/// Read a binary P5 PGM into values in [0, 1].
pub fn read_pgm(path: &Path) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut fields = Vec::new();
    let mut pos = 0usize;
    while fields.len() < 4 && pos < bytes.len() {
        // skip whitespace and comment lines
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
    }
    if fields.len() < 4 || fields[0] != "P5" {
        return Err(SegError::Format(format!("{}: not a binary P5 PGM", path.display())));
    }
    let nz: usize = fields[1].parse().map_err(|_| SegError::Format("bad width".into()))?;
    let ny: usize = fields[2].parse().map_err(|_| SegError::Format("bad height".into()))?;
    let maxval: f64 = fields[3].parse().map_err(|_| SegError::Format("bad maxval".into()))?;
    pos += 1; // single whitespace after maxval
    let data = &bytes[pos..];
    if data.len() < ny * nz {
        return Err(SegError::Format(format!(
            "{}: expected {} pixels, found {}",
            path.display(),
            ny * nz,
            data.len()
        )));
    }
    Ok(Array2::from_shape_fn((ny, nz), |(i, j)| {
        data[i * nz + j] as f64 / maxval
    }))
}

/// Export a mask as 0/255 PGM.
pub fn write_mask_pgm(path: &Path, p: &SamplingPattern) -> Result<()> {
    write_pgm(path, &p.mask.mapv(|m| m as f64))
}

/// Import a 0/255 PGM mask.
pub fn read_mask_pgm(path: &Path, seed: u64) -> Result<SamplingPattern> {
    let values = read_pgm(path)?;
    let (ny, nz) = values.dim();
    let grid = GridSpec::new(ny, nz)?;
    Ok(SamplingPattern {
        grid,
        mask: values.mapv(|v| (v >= 0.5) as u8),
        seed,
    })
}

// ---------------------------------------------------------------- CSV grids

/// Row-major CSV: one grid row per line, one value per cell.
pub fn write_csv_grid(path: &Path, values: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in values.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_csv_grid(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| SegError::Format(format!("bad CSV value: {e}")))?);
    }
    let ny = rows.len();
    let nz = rows.first().map(|r| r.len()).unwrap_or(0);
    if ny == 0 || nz == 0 || rows.iter().any(|r| r.len() != nz) {
        return Err(SegError::Format("ragged or empty CSV grid".into()));
    }
    Ok(Array2::from_shape_fn((ny, nz), |(i, j)| rows[i][j]))
}

// ------------------------------------------------- raw complex volume + JSON

/// Sidecar describing a raw complex file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexSidecar {
    pub ny: usize,
    pub nz: usize,
    /// "image" or "kspace".
    pub kind: String,
    pub acquisition_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<serde_json::Value>,
}

fn complex_bytes(a: &Array2<Complex64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(a.len() * 8);
    for v in a.iter() {
        bytes.extend_from_slice(&(v.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    bytes
}

fn complex_from_bytes(bytes: &[u8], ny: usize, nz: usize) -> Result<Array2<Complex64>> {
    if bytes.len() != ny * nz * 8 {
        return Err(SegError::Format(format!(
            "raw complex size mismatch: {} bytes for {ny}x{nz}",
            bytes.len()
        )));
    }
    Ok(Array2::from_shape_fn((ny, nz), |(i, j)| {
        let o = (i * nz + j) * 8;
        let re = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let im = f32::from_le_bytes(bytes[o + 4..o + 8].try_into().unwrap());
        Complex64::new(re as f64, im as f64)
    }))
}

/// Write interleaved (re, im) little-endian f32 plus a `.json` sidecar next
/// to it.
pub fn write_complex_raw(path: &Path, data: &Array2<Complex64>, sidecar: &ComplexSidecar) -> Result<()> {
    write_atomic(path, &complex_bytes(data))?;
    let meta = serde_json::to_string_pretty(sidecar)? + "\n";
    write_atomic(&path.with_extension("json"), meta.as_bytes())
}

/// Read a raw complex file and its sidecar.
pub fn read_complex_raw(path: &Path) -> Result<(Array2<Complex64>, ComplexSidecar)> {
    let meta: ComplexSidecar =
        serde_json::from_str(&fs::read_to_string(path.with_extension("json"))?)?;
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let data = complex_from_bytes(&bytes, meta.ny, meta.nz)?;
    Ok((data, meta))
}

pub fn write_kspace(path: &Path, k: &KSpaceData, protocol: Option<serde_json::Value>) -> Result<()> {
    write_complex_raw(
        path,
        &k.samples,
        &ComplexSidecar {
            ny: k.grid.ny,
            nz: k.grid.nz,
            kind: "kspace".into(),
            acquisition_index: k.acquisition_index,
            protocol,
        },
    )
}

pub fn read_kspace(path: &Path) -> Result<KSpaceData> {
    let (samples, meta) = read_complex_raw(path)?;
    if meta.kind != "kspace" {
        return Err(SegError::Format(format!(
            "{}: expected kspace, found {}",
            path.display(),
            meta.kind
        )));
    }
    Ok(KSpaceData {
        grid: GridSpec::new(meta.ny, meta.nz)?,
        samples,
        acquisition_index: meta.acquisition_index,
    })
}

pub fn write_image(path: &Path, img: &ComplexImage, acquisition_index: usize) -> Result<()> {
    write_complex_raw(
        path,
        &img.data,
        &ComplexSidecar {
            ny: img.grid.ny,
            nz: img.grid.nz,
            kind: "image".into(),
            acquisition_index,
            protocol: None,
        },
    )
}

pub fn read_image(path: &Path) -> Result<ComplexImage> {
    let (data, meta) = read_complex_raw(path)?;
    if meta.kind != "image" {
        return Err(SegError::Format(format!(
            "{}: expected image, found {}",
            path.display(),
            meta.kind
        )));
    }
    Ok(ComplexImage {
        grid: GridSpec::new(meta.ny, meta.nz)?,
        data,
    })
}

// --------------------------------------------------------- label volumes

/// JSON header of a raw 8-bit label volume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelHeader {
    pub ny: usize,
    pub nz: usize,
    /// Tissue names indexed by label value 1..; label 0 is background.
    pub labels: Vec<String>,
}

/// Write the raw labels and header of a phantom (b0 map is not part of the
/// exchange format and is reloaded as zero).
pub fn save_label_volume(path: &Path, spec: &PhantomSpec) -> Result<()> {
    let header = LabelHeader {
        ny: spec.grid.ny,
        nz: spec.grid.nz,
        labels: spec.tissues.iter().map(|t| t.name.clone()).collect(),
    };
    write_atomic(path, spec.labels.as_slice().expect("row-major"))?;
    let meta = serde_json::to_string_pretty(&header)? + "\n";
    write_atomic(&path.with_extension("json"), meta.as_bytes())
}

/// Load a raw 8-bit label volume; tissue parameters are looked up by name in
/// `tissue_table`.
pub fn load_label_volume(path: &Path, tissue_table: &[TissueParams]) -> Result<PhantomSpec> {
    let header: LabelHeader =
        serde_json::from_str(&fs::read_to_string(path.with_extension("json"))?)?;
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != header.ny * header.nz {
        return Err(SegError::Format(format!(
            "label volume size mismatch: {} bytes for {}x{}",
            bytes.len(),
            header.ny,
            header.nz
        )));
    }
    let tissues: Vec<TissueParams> = header
        .labels
        .iter()
        .map(|name| {
            tissue_table
                .iter()
                .find(|t| &t.name == name)
                .cloned()
                .ok_or_else(|| SegError::Format(format!("unknown tissue '{name}'")))
        })
        .collect::<Result<_>>()?;
    let max_label = tissues.len() as u8;
    if bytes.iter().any(|&b| b > max_label) {
        return Err(SegError::Format("label value exceeds tissue table".into()));
    }
    let grid = GridSpec::new(header.ny, header.nz)?;
    Ok(PhantomSpec {
        grid,
        labels: Array2::from_shape_vec((header.ny, header.nz), bytes)
            .map_err(|e| SegError::Format(e.to_string()))?,
        tissues,
        b0_map: Array2::zeros((header.ny, header.nz)),
    })
}

// ------------------------------------------------------ pattern manifests

/// Per-pattern entry of a pattern-set manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternEntry {
    pub file: String,
    pub seed: u64,
    pub samples: usize,
    pub sampled_fraction: f64,
    pub aliasing_energy: f64,
    pub r_psf: f64,
}

/// JSON manifest describing an exported pattern set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternManifest {
    pub strategy: Strategy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub ny: usize,
    pub nz: usize,
    pub target_r: f64,
    pub master_seed: u64,
    pub patterns: Vec<PatternEntry>,
}

/// Export all masks of a set as PGM plus a manifest with per-pattern PSF
/// statistics. Returns the manifest.
pub fn export_pattern_set(
    dir: &Path,
    set: &PatternSet,
    master_seed: u64,
    metrics: &[PsfMetrics],
) -> Result<PatternManifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(set.patterns.len());
    for (i, (p, m)) in set.patterns.iter().zip(metrics).enumerate() {
        let file = format!("mask_{i:03}.pgm");
        write_mask_pgm(&dir.join(&file), p)?;
        entries.push(PatternEntry {
            file,
            seed: p.seed,
            samples: p.samples(),
            sampled_fraction: p.sampled_fraction(),
            aliasing_energy: m.aliasing_energy,
            r_psf: m.r_psf,
        });
    }
    let manifest = PatternManifest {
        strategy: set.strategy,
        mu: set.mu,
        ny: set.density.grid.ny,
        nz: set.density.grid.nz,
        target_r: set.density.target_r,
        master_seed,
        patterns: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    write_atomic(&dir.join("manifest.json"), json.as_bytes())?;
    Ok(manifest)
}

/// Export a density as CSV + PGM preview + JSON metadata.
pub fn export_density(dir: &Path, d: &SamplingDensity) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    write_csv_grid(&dir.join("density.csv"), &d.values)?;
    write_pgm(&dir.join("density.pgm"), &d.values)?;
    let meta = serde_json::json!({
        "ny": d.grid.ny,
        "nz": d.grid.nz,
        "target_r": d.target_r,
        "degree": d.degree,
        "center_fraction": d.center_fraction,
        "mean": d.mean(),
    });
    let json = serde_json::to_string_pretty(&meta)? + "\n";
    let path = dir.join("density.json");
    write_atomic(&path, json.as_bytes())?;
    Ok(path)
}
