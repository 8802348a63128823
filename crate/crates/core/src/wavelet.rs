//! Orthonormal separable 2D Daubechies-4 wavelet transform with periodic
//! boundaries, packed quadrant layout ([LL | LH; HL | HH] per level).
//!
//! Dimensions must be divisible by 2^levels; inputs that are not are
//! zero-padded up to the next multiple and cropped on inversion.

use crate::{Result, SegError};
use ndarray::{s, Array2};
use num_complex::Complex64;

/// Default decomposition depth.
pub const DEFAULT_LEVELS: usize = 4;

// 4-tap Daubechies analysis low-pass: [(1+√3), (3+√3), (3−√3), (1−√3)] / (4√2)
fn filters() -> ([f64; 4], [f64; 4]) {
    let s3 = 3.0f64.sqrt();
    let norm = 4.0 * 2.0f64.sqrt();
    let lo = [
        (1.0 + s3) / norm,
        (3.0 + s3) / norm,
        (3.0 - s3) / norm,
        (1.0 - s3) / norm,
    ];
    // quadrature mirror: g_k = (-1)^k h_{3-k}
    let hi = [lo[3], -lo[2], lo[1], -lo[0]];
    (lo, hi)
}

fn analyze_1d(x: &[Complex64], out: &mut [Complex64]) {
    let n = x.len();
    let half = n / 2;
    let (lo, hi) = filters();
    for i in 0..half {
        let mut a = Complex64::default();
        let mut d = Complex64::default();
        for k in 0..4 {
            let v = x[(2 * i + k) % n];
            a += lo[k] * v;
            d += hi[k] * v;
        }
        out[i] = a;
        out[half + i] = d;
    }
}

fn synthesize_1d(c: &[Complex64], out: &mut [Complex64]) {
    let n = c.len();
    let half = n / 2;
    let (lo, hi) = filters();
    for v in out.iter_mut() {
        *v = Complex64::default();
    }
    for i in 0..half {
        let a = c[i];
        let d = c[half + i];
        for k in 0..4 {
            out[(2 * i + k) % n] += lo[k] * a + hi[k] * d;
        }
    }
}

fn transform_level(a: &mut Array2<Complex64>, ny: usize, nz: usize, forward: bool) {
    let mut rowbuf = vec![Complex64::default(); nz];
    let mut rowout = vec![Complex64::default(); nz];
    for iy in 0..ny {
        for iz in 0..nz {
            rowbuf[iz] = a[[iy, iz]];
        }
        if forward {
            analyze_1d(&rowbuf, &mut rowout);
        } else {
            synthesize_1d(&rowbuf, &mut rowout);
        }
        for iz in 0..nz {
            a[[iy, iz]] = rowout[iz];
        }
    }
    let mut colbuf = vec![Complex64::default(); ny];
    let mut colout = vec![Complex64::default(); ny];
    for iz in 0..nz {
        for iy in 0..ny {
            colbuf[iy] = a[[iy, iz]];
        }
        if forward {
            analyze_1d(&colbuf, &mut colout);
        } else {
            synthesize_1d(&colbuf, &mut colout);
        }
        for iy in 0..ny {
            a[[iy, iz]] = colout[iy];
        }
    }
}

fn padded_dims(ny: usize, nz: usize, levels: usize) -> (usize, usize) {
    let m = 1usize << levels;
    (ny.div_ceil(m) * m, nz.div_ceil(m) * m)
}

/// Multi-level forward transform. The result has the padded dimensions.
pub fn wavelet_fwd(img: &Array2<Complex64>, levels: usize) -> Result<Array2<Complex64>> {
    let (ny, nz) = img.dim();
    if levels == 0 {
        return Err(SegError::Invalid("levels must be >= 1".into()));
    }
    let (py, pz) = padded_dims(ny, nz, levels);
    if (py >> levels) < 2 || (pz >> levels) < 2 {
        return Err(SegError::Invalid(format!(
            "{ny}x{nz} too small for {levels} wavelet levels"
        )));
    }
    let mut buf = Array2::default((py, pz));
    buf.slice_mut(s![..ny, ..nz]).assign(img);
    let (mut cy, mut cz) = (py, pz);
    for _ in 0..levels {
        let mut sub = buf.slice(s![..cy, ..cz]).to_owned();
        transform_level(&mut sub, cy, cz, true);
        buf.slice_mut(s![..cy, ..cz]).assign(&sub);
        cy /= 2;
        cz /= 2;
    }
    Ok(buf)
}

/// Inverse of [`wavelet_fwd`]; `dims` crops back to the original image size.
pub fn wavelet_inv(
    coeffs: &Array2<Complex64>,
    levels: usize,
    dims: (usize, usize),
) -> Result<Array2<Complex64>> {
    let (py, pz) = coeffs.dim();
    if levels == 0 || (py >> levels) < 2 || (pz >> levels) < 2 {
        return Err(SegError::Invalid("bad level count for inverse wavelet".into()));
    }
    let mut buf = coeffs.clone();
    let (mut cy, mut cz) = (py >> (levels - 1), pz >> (levels - 1));
    for _ in 0..levels {
        let mut sub = buf.slice(s![..cy, ..cz]).to_owned();
        transform_level(&mut sub, cy, cz, false);
        buf.slice_mut(s![..cy, ..cz]).assign(&sub);
        cy *= 2;
        cz *= 2;
    }
    Ok(buf.slice(s![..dims.0, ..dims.1]).to_owned())
}
