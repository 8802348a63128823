//! Statistically segregated k-space sampling for multiple-acquisition MRI.
//!
//! The crate covers the full desk-scale experiment pipeline:
//!
//! * [`density`] — variable-density sampling probability design for a target
//!   acceleration factor R
//! * [`patterns`] — random, low-correlation, and segregated pattern-set
//!   generation plus PSF incoherence metrics
//! * [`stats`] — theoretical occupancy distributions and empirical
//!   coverage/overlap reports
//! * [`phantom`] — analytic multi-tissue phantom, bSSFP / spin-echo signal
//!   models, k-space synthesis and noise
//! * [`recon`] — zero-filled and profile-encoding (joint SPIRiT-style)
//!   reconstruction
//! * [`quality`] — PSNR / SSIM / MSE-map evaluation
//! * [`io`] — file formats shared with the command-line tool
//!
//! All operations are deterministic given their seeds, independent of thread
//! count. The `parallel` feature (default) runs candidate evaluation, voxel
//! rendering and seed replicas on rayon; without it everything runs
//! sequentially with identical results.

pub mod density;
pub mod experiments;
pub mod fft;
pub mod grid;
pub mod io;
pub mod par;
pub mod patterns;
pub mod phantom;
pub mod quality;
pub mod recon;
pub mod rng;
pub mod stats;
pub mod wavelet;

use thiserror::Error;

/// Errors reported by the sampling, simulation and reconstruction operations.
#[derive(Error, Debug)]
pub enum SegError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("acceleration factor infeasible: {reason} (achievable bound R = {achievable:.4})")]
    InfeasibleR { reason: String, achievable: f64 },
    #[error("index ({ky}, {kz}) outside {ny}x{nz} grid")]
    OutOfGrid { ky: usize, kz: usize, ny: usize, nz: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for SegError {
    fn from(e: serde_json::Error) -> Self {
        SegError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SegError>;
