//! Image-quality metrics: p-norm acquisition combination, PSNR, SSIM and
//! MSE maps.

use crate::phantom::ComplexImage;
use crate::{Result, SegError};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// PSNR reported when the images are identical (MSE = 0).
pub const PSNR_CAP_DB: f64 = 300.0;

/// Whether a report describes one acquisition or the combined image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportScope {
    Combined,
    PerAcquisition(usize),
}

/// Quality metrics of one test image against a reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityReport {
    pub psnr_db: f64,
    pub ssim_pct: f64,
    pub mse_mean: f64,
    pub scope: ReportScope,
}

/// Per-voxel p-norm combination across acquisitions; p >= 1e6 is treated as
/// the max-magnitude combination.
pub fn pnorm_combine(images: &[ComplexImage], p: f64) -> Result<Array2<f64>> {
    if images.is_empty() {
        return Err(SegError::Invalid("no images to combine".into()));
    }
    if p < 1.0 {
        return Err(SegError::Invalid(format!("p {p} must be >= 1")));
    }
    let dims = images[0].data.dim();
    for img in images {
        if img.data.dim() != dims {
            return Err(SegError::GridMismatch("image dims differ".into()));
        }
    }
    let mut out = Array2::zeros(dims);
    if p >= 1e6 {
        for img in images {
            for (o, v) in out.iter_mut().zip(img.data.iter()) {
                *o = f64::max(*o, v.norm());
            }
        }
    } else {
        for img in images {
            for (o, v) in out.iter_mut().zip(img.data.iter()) {
                *o += v.norm().powf(p);
            }
        }
        out.mapv_inplace(|v| v.powf(1.0 / p));
    }
    Ok(out)
}

fn check_dims(test: &Array2<f64>, reference: &Array2<f64>) -> Result<()> {
    if test.dim() != reference.dim() {
        return Err(SegError::GridMismatch(format!(
            "test {:?} vs reference {:?}",
            test.dim(),
            reference.dim()
        )));
    }
    Ok(())
}

/// Per-pixel squared error map.
pub fn mse_map(test: &Array2<f64>, reference: &Array2<f64>) -> Result<Array2<f64>> {
    check_dims(test, reference)?;
    Ok(Array2::from_shape_fn(test.dim(), |idx| {
        (test[idx] - reference[idx]).powi(2)
    }))
}

/// Peak signal-to-noise ratio in dB; peak is max |reference|. Identical
/// images return the 300 dB cap.
pub fn psnr(test: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    check_dims(test, reference)?;
    let peak = reference.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    if peak == 0.0 {
        return Err(SegError::Invalid("reference image is identically zero".into()));
    }
    let mse = mse_map(test, reference)?.mean().unwrap();
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean structural similarity as a percentage: 11x11 Gaussian window with
/// sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range max |reference|, valid
/// window placement.
pub fn ssim(test: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    check_dims(test, reference)?;
    let (ny, nz) = test.dim();
    if ny < 11 || nz < 11 {
        return Err(SegError::Invalid(format!("ssim needs dims >= 11, got {ny}x{nz}")));
    }
    let l = reference.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    if l == 0.0 {
        return Err(SegError::Invalid("reference image is identically zero".into()));
    }
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    let w = gaussian_window();

    // separable weighted moments
    let mx = filter_valid(test, &w);
    let my = filter_valid(reference, &w);
    let mxx = filter_valid(&(test * test), &w);
    let myy = filter_valid(&(reference * reference), &w);
    let mxy = filter_valid(&(test * reference), &w);

    let mut acc = 0.0;
    let mut count = 0usize;
    for ((i, j), &ux) in mx.indexed_iter() {
        let uy = my[[i, j]];
        let vx = mxx[[i, j]] - ux * ux;
        let vy = myy[[i, j]] - uy * uy;
        let cxy = mxy[[i, j]] - ux * uy;
        let s = ((2.0 * ux * uy + c1) * (2.0 * cxy + c2))
            / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        acc += s;
        count += 1;
    }
    Ok(acc / count as f64 * 100.0)
}

const SSIM_WINDOW: usize = 11;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let sigma = 1.5;
    let mut w = [0.0; SSIM_WINDOW];
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - (SSIM_WINDOW as f64 - 1.0) / 2.0;
        *v = (-x * x / (2.0 * sigma * sigma)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Separable valid-mode weighted filter: output dims shrink by WINDOW-1.
fn filter_valid(a: &Array2<f64>, w: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (ny, nz) = a.dim();
    let oy = ny - SSIM_WINDOW + 1;
    let oz = nz - SSIM_WINDOW + 1;
    // rows
    let mut tmp = Array2::zeros((ny, oz));
    for i in 0..ny {
        for j in 0..oz {
            let mut s = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                s += wk * a[[i, j + k]];
            }
            tmp[[i, j]] = s;
        }
    }
    // columns
    let mut out = Array2::zeros((oy, oz));
    for i in 0..oy {
        for j in 0..oz {
            let mut s = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                s += wk * tmp[[i + k, j]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Full evaluation of a test image against a reference.
pub fn evaluate(test: &Array2<f64>, reference: &Array2<f64>, scope: ReportScope) -> Result<QualityReport> {
    Ok(QualityReport {
        psnr_db: psnr(test, reference)?,
        ssim_pct: ssim(test, reference)?,
        mse_mean: mse_map(test, reference)?.mean().unwrap(),
        scope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::rng::Counter;
    use num_complex::Complex64;

    fn random(ny: usize, nz: usize, seed: u64) -> Array2<f64> {
        let mut rng = Counter::new(seed);
        Array2::from_shape_fn((ny, nz), |_| rng.uniform())
    }

    fn image_of(a: &Array2<f64>) -> ComplexImage {
        ComplexImage {
            grid: GridSpec::new(a.dim().0, a.dim().1).unwrap(),
            data: a.mapv(|v| Complex64::new(v, 0.0)),
        }
    }

    #[test]
    fn pnorm_single_and_identical() {
        let a = random(16, 16, 1);
        let img = image_of(&a);
        let one = pnorm_combine(&[img.clone()], 2.0).unwrap();
        for (x, y) in one.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
        let four = pnorm_combine(&vec![img.clone(); 4], 2.0).unwrap();
        for (x, y) in four.iter().zip(a.iter()) {
            assert!((x - 2.0 * y).abs() < 1e-12); // N^{1/p} = 4^{1/2}
        }
        let max = pnorm_combine(&[img.clone(), image_of(&(&a * 0.5))], 1e7).unwrap();
        for (x, y) in max.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn psnr_cap_closed_form_and_scale_invariance() {
        let a = random(32, 32, 2);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);

        // constant offset c on a peak-1 reference: 10 log10(1/c^2)
        let mut reference = Array2::zeros((32, 32));
        reference[[5, 5]] = 1.0;
        let c = 0.01;
        let test = reference.mapv(|v| v + c);
        let got = psnr(&test, &reference).unwrap();
        assert!((got - 10.0 * (1.0 / (c * c)).log10()).abs() < 1e-9);

        let b = random(32, 32, 3);
        let p1 = psnr(&a, &b).unwrap();
        let p2 = psnr(&(&a * 7.5), &(&b * 7.5)).unwrap();
        assert!((p1 - p2).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_sign_and_scale() {
        let a = random(32, 32, 4);
        assert!((ssim(&a, &a).unwrap() - 100.0).abs() < 1e-9);
        // reflect around the mean: covariance flips sign, luminance does not
        let mean = a.mean().unwrap();
        let inv = a.mapv(|v| 2.0 * mean - v);
        assert!(ssim(&inv, &a).unwrap() < 0.0);
        let s1 = ssim(&a, &random(32, 32, 5)).unwrap();
        let s2 = ssim(&(&a * 3.0), &(random(32, 32, 5) * 3.0)).unwrap();
        assert!((s1 - s2).abs() < 1e-9);
    }

    /// Naive per-window SSIM oracle (direct sliding window, no separability).
    fn ssim_oracle(test: &Array2<f64>, reference: &Array2<f64>) -> f64 {
        let w = gaussian_window();
        let (ny, nz) = test.dim();
        let l = reference.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        let c1 = (0.01 * l).powi(2);
        let c2 = (0.03 * l).powi(2);
        let mut acc = 0.0;
        let mut count = 0;
        for i0 in 0..=(ny - SSIM_WINDOW) {
            for j0 in 0..=(nz - SSIM_WINDOW) {
                let (mut ux, mut uy) = (0.0, 0.0);
                let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
                for di in 0..SSIM_WINDOW {
                    for dj in 0..SSIM_WINDOW {
                        let wij = w[di] * w[dj];
                        let x = test[[i0 + di, j0 + dj]];
                        let y = reference[[i0 + di, j0 + dj]];
                        ux += wij * x;
                        uy += wij * y;
                        xx += wij * x * x;
                        yy += wij * y * y;
                        xy += wij * x * y;
                    }
                }
                let (vx, vy, cxy) = (xx - ux * ux, yy - uy * uy, xy - ux * uy);
                acc += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2))
                    / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        acc / count as f64 * 100.0
    }

    #[test]
    fn ssim_checkerboard_shift_matches_oracle() {
        let board = Array2::from_shape_fn((64, 64), |(i, j)| ((i + j) % 2) as f64);
        let shifted = Array2::from_shape_fn((64, 64), |(i, j)| ((i + j + 1) % 2) as f64);
        let fast = ssim(&shifted, &board).unwrap();
        let slow = ssim_oracle(&shifted, &board);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }

    #[test]
    fn ssim_random_matches_oracle() {
        let a = random(24, 30, 8);
        let b = random(24, 30, 9);
        assert!((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn mse_map_consistency() {
        let a = random(20, 20, 10);
        let same = mse_map(&a, &a).unwrap();
        assert!(same.iter().all(|&v| v == 0.0));
        let b = a.mapv(|v| v + 0.3);
        let m = mse_map(&b, &a).unwrap();
        for &v in m.iter() {
            assert!((v - 0.09).abs() < 1e-12);
        }
        // sum of map / T equals the MSE inside psnr
        let c = random(20, 20, 11);
        let mse = mse_map(&c, &a).unwrap().mean().unwrap();
        let peak = a.iter().cloned().fold(0.0f64, f64::max);
        let p = psnr(&c, &a).unwrap();
        assert!((p - 10.0 * (peak * peak / mse).log10()).abs() < 1e-12);
    }

    #[test]
    fn dim_mismatch_errors() {
        let a = random(16, 16, 1);
        let b = random(16, 18, 1);
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
        assert!(mse_map(&a, &b).is_err());
        assert!(ssim(&random(8, 8, 1), &random(8, 8, 2)).is_err());
    }
}
