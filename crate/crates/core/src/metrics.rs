//! Reconstruction and payload quality metrics.
//!
//! MS-SSIM follows the usual five-scale construction: an 11-tap Gaussian
//! window with σ = 1.5, `K1 = 0.01`, `K2 = 0.03`, dynamic range 255, 2×2
//! average-pool downsampling between scales, and per-scale exponents
//! `[0.0448, 0.2856, 0.3001, 0.2363, 0.1333]`. Contrast-structure terms are
//! used at the first four scales and the full SSIM at the last. Channels are
//! scored independently and averaged. Negative per-scale terms are clamped
//! to zero.
//!
//! Five scales need a shorter side of at least 176 pixels (the coarsest
//! scale must still fit one window). Smaller images use as many scales as
//! fit, with the leading exponents renormalized to sum to one; below 11
//! pixels the window shrinks to the largest odd size that fits.

use crate::imaging::Image;
use crate::{Error, Result};

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const DYNAMIC_RANGE: f64 = 255.0;

fn check_shape(a: &Image, b: &Image) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            expected: a.data().len(),
            actual: b.data().len(),
        })
    }
}

/// PSNR in dB with peak 255 over all samples. Identical images give `+∞`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_shape(a, b)?;
    let se: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    if se == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = se as f64 / a.data().len() as f64;
    Ok(10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / mse).log10())
}

/// Fraction of differing bits; zero for empty input.
pub fn ber(sent: &[bool], received: &[bool]) -> Result<f64> {
    if sent.len() != received.len() {
        return Err(Error::LengthMismatch {
            expected: sent.len(),
            actual: received.len(),
        });
    }
    if sent.is_empty() {
        return Ok(0.0);
    }
    Ok(bit_errors(sent, received) as f64 / sent.len() as f64)
}

pub fn bit_errors(sent: &[bool], received: &[bool]) -> usize {
    sent.iter().zip(received).filter(|(a, b)| a != b).count()
}

/// Number of scales used for a plane of the given size.
pub fn ms_ssim_scales(height: usize, width: usize) -> usize {
    let side = height.min(width);
    (1..=MS_SSIM_WEIGHTS.len())
        .take_while(|&s| side >> (s - 1) >= WINDOW)
        .last()
        .unwrap_or(1)
}

/// MS-SSIM in `[0, 1]`, averaged over channels.
pub fn ms_ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shape(a, b)?;
    let scales = ms_ssim_scales(a.height(), a.width());
    let total: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let weights: Vec<f64> = MS_SSIM_WEIGHTS[..scales].iter().map(|w| w / total).collect();
    let mut sum = 0.0;
    for c in 0..a.channels() {
        let pa = Plane::from_image(a, c);
        let pb = Plane::from_image(b, c);
        sum += ms_ssim_plane(pa, pb, &weights);
    }
    Ok(sum / a.channels() as f64)
}

#[derive(Debug, Clone)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn from_image(img: &Image, c: usize) -> Self {
        let plane = img.height() * img.width();
        Plane {
            h: img.height(),
            w: img.width(),
            v: img.data()[c * plane..(c + 1) * plane]
                .iter()
                .map(|&x| f64::from(x))
                .collect(),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            h: self.h,
            w: self.w,
            v: self.v.iter().map(|&x| f(x)).collect(),
        }
    }

    fn mul(&self, other: &Plane) -> Plane {
        Plane {
            h: self.h,
            w: self.w,
            v: self.v.iter().zip(&other.v).map(|(x, y)| x * y).collect(),
        }
    }

    /// 2×2 average pooling; an odd trailing row/column is dropped.
    fn downsample(&self) -> Plane {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let at = |yy: usize, xx: usize| self.v[yy * self.w + xx];
                v.push(
                    (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1)) / 4.0,
                );
            }
        }
        Plane { h, w, v }
    }

    /// Separable 'valid' filtering with a symmetric 1-D kernel.
    fn filter(&self, k: &[f64]) -> Plane {
        let n = k.len();
        let w1 = self.w + 1 - n;
        let mut tmp = vec![0.0; self.h * w1];
        for y in 0..self.h {
            let row = &self.v[y * self.w..(y + 1) * self.w];
            for x in 0..w1 {
                tmp[y * w1 + x] = row[x..x + n].iter().zip(k).map(|(a, b)| a * b).sum();
            }
        }
        let h1 = self.h + 1 - n;
        let mut v = vec![0.0; h1 * w1];
        for y in 0..h1 {
            for x in 0..w1 {
                v[y * w1 + x] = (0..n).map(|i| tmp[(y + i) * w1 + x] * k[i]).sum();
            }
        }
        Plane { h: h1, w: w1, v }
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|x| x / s).collect()
}

/// Mean SSIM and mean contrast-structure term of one scale.
fn ssim_terms(a: &Plane, b: &Plane) -> (f64, f64) {
    let mut size = WINDOW.min(a.h).min(a.w);
    if size.is_multiple_of(2) {
        size -= 1;
    }
    let k = gaussian_kernel(size, SIGMA);
    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (K2 * DYNAMIC_RANGE).powi(2);
    let mu_a = a.filter(&k);
    let mu_b = b.filter(&k);
    let e_aa = a.map(|x| x * x).filter(&k);
    let e_bb = b.map(|x| x * x).filter(&k);
    let e_ab = a.mul(b).filter(&k);
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.v.len() {
        let (ma, mb) = (mu_a.v[i], mu_b.v[i]);
        let va = e_aa.v[i] - ma * ma;
        let vb = e_bb.v[i] - mb * mb;
        let cov = e_ab.v[i] - ma * mb;
        let cs_i = (2.0 * cov + c2) / (va + vb + c2);
        cs += cs_i;
        ssim += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1) * cs_i;
    }
    let n = mu_a.v.len() as f64;
    (ssim / n, cs / n)
}

fn ms_ssim_plane(mut a: Plane, mut b: Plane, weights: &[f64]) -> f64 {
    let mut out = 1.0;
    for (s, &w) in weights.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&a, &b);
        let term = if s + 1 == weights.len() { ssim } else { cs };
        out *= term.max(0.0).powf(w);
        if s + 1 < weights.len() {
            a = a.downsample();
            b = b.downsample();
        }
    }
    out
}
