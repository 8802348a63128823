//! Centered unitary 2D DFTs on row-major complex arrays.
//!
//! k-space arrays in this crate are laid out with DC at index (ny/2, nz/2),
//! matching the sampling-density and mask layouts. The transforms here wrap
//! the shifts so that `forward` maps a centered image to centered k-space and
//! `inverse` maps back, both scaled by 1/sqrt(T) (Parseval-exact).

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

/// Planned transforms for one grid size.
pub struct Fft2 {
    ny: usize,
    nz: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(ny: usize, nz: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            ny,
            nz,
            row_fwd: planner.plan_fft(nz, FftDirection::Forward),
            row_inv: planner.plan_fft(nz, FftDirection::Inverse),
            col_fwd: planner.plan_fft(ny, FftDirection::Forward),
            col_inv: planner.plan_fft(ny, FftDirection::Inverse),
        }
    }

    fn transform(&self, a: &Array2<Complex64>, forward: bool) -> Array2<Complex64> {
        assert_eq!(a.dim(), (self.ny, self.nz), "fft plan / array size mismatch");
        let mut buf = ifftshift2(a);
        {
            let (row, col) = if forward {
                (&self.row_fwd, &self.col_fwd)
            } else {
                (&self.row_inv, &self.col_inv)
            };
            let data = buf.as_slice_mut().expect("row-major");
            for r in data.chunks_exact_mut(self.nz) {
                row.process(r);
            }
            // columns: transpose, transform rows, transpose back
            let mut t = transpose(data, self.ny, self.nz);
            for c in t.chunks_exact_mut(self.ny) {
                col.process(c);
            }
            let back = transpose(&t, self.nz, self.ny);
            data.copy_from_slice(&back);
        }
        let scale = 1.0 / ((self.ny * self.nz) as f64).sqrt();
        buf.mapv_inplace(|x| x * scale);
        fftshift2(&buf)
    }

    /// Image -> centered k-space (unitary).
    pub fn forward(&self, img: &Array2<Complex64>) -> Array2<Complex64> {
        self.transform(img, true)
    }

    /// Centered k-space -> image (unitary).
    pub fn inverse(&self, ksp: &Array2<Complex64>) -> Array2<Complex64> {
        self.transform(ksp, false)
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

fn roll2(a: &Array2<Complex64>, dy: usize, dz: usize) -> Array2<Complex64> {
    let (ny, nz) = a.dim();
    Array2::from_shape_fn((ny, nz), |(i, j)| a[[(i + dy) % ny, (j + dz) % nz]])
}

/// Move DC from the center index to (0, 0).
pub fn ifftshift2(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (ny, nz) = a.dim();
    roll2(a, ny / 2, nz / 2)
}

/// Move DC from (0, 0) to the center index.
pub fn fftshift2(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (ny, nz) = a.dim();
    roll2(a, ny - ny / 2, nz - nz / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Counter;

    fn random_image(ny: usize, nz: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = Counter::new(seed);
        Array2::from_shape_fn((ny, nz), |_| {
            Complex64::new(rng.uniform() - 0.5, rng.uniform() - 0.5)
        })
    }

    fn norm(a: &Array2<Complex64>) -> f64 {
        a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn roundtrip_and_parseval() {
        for (ny, nz) in [(32, 32), (24, 40), (33, 17)] {
            let img = random_image(ny, nz, 5);
            let fft = Fft2::new(ny, nz);
            let ksp = fft.forward(&img);
            assert!((norm(&ksp) - norm(&img)).abs() < 1e-10, "parseval {ny}x{nz}");
            let back = fft.inverse(&ksp);
            let err: f64 = img
                .iter()
                .zip(back.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-10, "roundtrip {ny}x{nz}: {err}");
        }
    }

    #[test]
    fn delta_image_gives_flat_spectrum() {
        let (ny, nz) = (16, 16);
        let mut img = Array2::from_elem((ny, nz), Complex64::default());
        img[[3, 11]] = Complex64::new(1.0, 0.0);
        let ksp = Fft2::new(ny, nz).forward(&img);
        let want = 1.0 / ((ny * nz) as f64).sqrt();
        for v in ksp.iter() {
            assert!((v.norm() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn centered_dc_carries_image_mean() {
        let (ny, nz) = (16, 12);
        let img = Array2::from_elem((ny, nz), Complex64::new(2.0, 0.0));
        let ksp = Fft2::new(ny, nz).forward(&img);
        // constant image -> single peak at the DC index (ny/2, nz/2)
        assert!((ksp[[8, 6]].re - 2.0 * ((ny * nz) as f64).sqrt()).abs() < 1e-10);
        let off: f64 = ksp
            .indexed_iter()
            .filter(|((i, j), _)| !(*i == 8 && *j == 6))
            .map(|(_, v)| v.norm())
            .sum();
        assert!(off < 1e-9);
    }

    /// Brute-force centered unitary DFT used to pin the convention.
    fn dft_oracle(img: &Array2<Complex64>) -> Array2<Complex64> {
        let (ny, nz) = img.dim();
        let t = (ny * nz) as f64;
        Array2::from_shape_fn((ny, nz), |(ky, kz)| {
            let fy = ky as f64 - (ny / 2) as f64;
            let fz = kz as f64 - (nz / 2) as f64;
            let mut acc = Complex64::default();
            for iy in 0..ny {
                for iz in 0..nz {
                    let y = iy as f64 - (ny / 2) as f64;
                    let z = iz as f64 - (nz / 2) as f64;
                    let ph = -2.0 * std::f64::consts::PI
                        * (fy * y / ny as f64 + fz * z / nz as f64);
                    acc += img[[iy, iz]] * Complex64::from_polar(1.0, ph);
                }
            }
            acc / t.sqrt()
        })
    }

    #[test]
    fn matches_direct_dft() {
        let img = random_image(12, 10, 9);
        let fast = Fft2::new(12, 10).forward(&img);
        let slow = dft_oracle(&img);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
