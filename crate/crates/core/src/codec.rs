//! Semantic encoder/decoder contract and a deterministic reference codec.
//!
//! A [`LatentBlock`] has one global summary row followed by one row per
//! visible patch in visible-first (ascending raster) order. The reference
//! codec pools each visible patch down to `D` values and fills masked
//! patches by neighbour diffusion on the decoder side.

use crate::imaging::{self, Image, MaskedImage, PatchGrid};
use crate::sparse::{build_restore_indices, RestoreIndices};
use crate::{Error, Result};

/// Latent rows: row 0 is the summary row, rows `1..` the visible patches.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBlock {
    dim: usize,
    values: Vec<f64>,
}

impl LatentBlock {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::Codec(format!(
                "{} latent values do not form rows of width {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Codec("non-finite latent value".into()));
        }
        Ok(Self { dim, values })
    }

    /// Latent width `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn summary(&self) -> &[f64] {
        self.row(0)
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps the first `rows` rows.
    pub fn truncated(&self, rows: usize) -> LatentBlock {
        LatentBlock {
            dim: self.dim,
            values: self.values[..rows.min(self.rows()) * self.dim].to_vec(),
        }
    }
}

/// Image geometry the decoder reconstructs into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub channels: usize,
    pub grid: PatchGrid,
}

impl Geometry {
    pub fn of(img: &Image, patch_size: usize) -> Result<Self> {
        Ok(Self {
            channels: img.channels(),
            grid: imaging::patchify(img, patch_size)?,
        })
    }

    pub fn patch_samples(&self) -> usize {
        self.channels * self.grid.patch_size() * self.grid.patch_size()
    }
}

/// The `g_en` / `g_de` pair. Implementations must be safe to call
/// concurrently with independent inputs.
pub trait Codec: Send + Sync {
    /// Encodes only the visible patches of `mimg`.
    fn encode(&self, mimg: &MaskedImage) -> Result<(LatentBlock, RestoreIndices)>;

    /// Reconstructs a full image with the source geometry.
    fn decode(&self, latent: &LatentBlock, restore: &RestoreIndices, geometry: &Geometry) -> Result<Image>;

    fn latent_dim(&self) -> usize;
}

/// Number of diffusion sweeps used to fill masked patches.
pub const DIFFUSION_ITERATIONS: usize = 50;

/// Block-average pooling codec with diffusion fill.
///
/// Pooling layout: when `D = C·k` and each `P×P` channel plane splits into
/// `k` square blocks, every latent value is the mean of one block (order
/// channel, block row, block column). Otherwise the `C×P×P` patch samples are
/// split into `D` contiguous runs. `D = C·P·P` is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceCodec {
    dim: usize,
}

impl ReferenceCodec {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// Sample-index groups for a patch of `channels×p×p`; one group per latent value.
    fn groups(&self, channels: usize, p: usize) -> Result<Vec<Vec<usize>>> {
        let total = channels * p * p;
        if self.dim == 0 || !total.is_multiple_of(self.dim) {
            return Err(Error::Codec(format!(
                "latent dim {} does not divide {total} samples per patch",
                self.dim
            )));
        }
        if self.dim.is_multiple_of(channels) {
            let per_channel = self.dim / channels;
            let side = (per_channel as f64).sqrt().round() as usize;
            if side * side == per_channel && p.is_multiple_of(side) {
                let b = p / side;
                let mut groups = Vec::with_capacity(self.dim);
                for c in 0..channels {
                    for by in 0..side {
                        for bx in 0..side {
                            let mut g = Vec::with_capacity(b * b);
                            for y in by * b..(by + 1) * b {
                                for x in bx * b..(bx + 1) * b {
                                    g.push((c * p + y) * p + x);
                                }
                            }
                            groups.push(g);
                        }
                    }
                }
                return Ok(groups);
            }
        }
        let run = total / self.dim;
        Ok((0..self.dim).map(|d| (d * run..(d + 1) * run).collect()).collect())
    }
}

impl Codec for ReferenceCodec {
    fn encode(&self, mimg: &MaskedImage) -> Result<(LatentBlock, RestoreIndices)> {
        let grid = mimg.grid();
        let img = mimg.pixels();
        let groups = self.groups(img.channels(), grid.patch_size())?;
        let restore = build_restore_indices(mimg.mask());
        if restore.len_keep() == 0 {
            return Err(Error::NoVisiblePatches);
        }
        let mut values = vec![0.0; (restore.len_keep() + 1) * self.dim];
        for (row, &n) in restore.visible().iter().enumerate() {
            let samples = imaging::extract_patch(img, grid, n);
            let out = &mut values[(row + 1) * self.dim..(row + 2) * self.dim];
            for (v, g) in out.iter_mut().zip(&groups) {
                let sum: u32 = g.iter().map(|&i| u32::from(samples[i])).sum();
                *v = f64::from(sum) / (255.0 * g.len() as f64);
            }
        }
        let k = restore.len_keep() as f64;
        for d in 0..self.dim {
            values[d] = (1..=restore.len_keep()).map(|r| values[r * self.dim + d]).sum::<f64>() / k;
        }
        Ok((LatentBlock::new(self.dim, values)?, restore))
    }

    fn decode(&self, latent: &LatentBlock, restore: &RestoreIndices, geometry: &Geometry) -> Result<Image> {
        if latent.rows() != restore.len_keep() + 1 {
            return Err(Error::LengthMismatch {
                expected: restore.len_keep() + 1,
                actual: latent.rows(),
            });
        }
        if latent.dim() != self.dim {
            return Err(Error::LengthMismatch {
                expected: self.dim,
                actual: latent.dim(),
            });
        }
        let grid = &geometry.grid;
        if restore.n() != grid.n() {
            return Err(Error::LengthMismatch {
                expected: grid.n(),
                actual: restore.n(),
            });
        }
        let groups = self.groups(geometry.channels, grid.patch_size())?;
        let d = self.dim;
        let n = grid.n();

        // per-patch latent vectors; masked patches start from the summary row
        let mut field = vec![0.0; n * d];
        for p in 0..n {
            field[p * d..(p + 1) * d].copy_from_slice(latent.summary());
        }
        for (row, &p) in restore.visible().iter().enumerate() {
            field[p * d..(p + 1) * d].copy_from_slice(latent.row(row + 1));
        }
        let masked = restore.masked();
        let mut next = field.clone();
        for _ in 0..DIFFUSION_ITERATIONS {
            for &p in masked {
                let mut acc = vec![0.0; d];
                let mut count = 0usize;
                for q in grid.neighbors(p) {
                    for (a, v) in acc.iter_mut().zip(&field[q * d..(q + 1) * d]) {
                        *a += v;
                    }
                    count += 1;
                }
                if count > 0 {
                    for (o, a) in next[p * d..(p + 1) * d].iter_mut().zip(acc) {
                        *o = a / count as f64;
                    }
                }
            }
            std::mem::swap(&mut field, &mut next);
            for &p in masked {
                next[p * d..(p + 1) * d].copy_from_slice(&field[p * d..(p + 1) * d]);
            }
        }

        let mut img = Image::filled(geometry.channels, grid.height(), grid.width(), 0)?;
        let mut samples = vec![0u8; geometry.patch_samples()];
        for p in 0..n {
            for (v, g) in field[p * d..(p + 1) * d].iter().zip(&groups) {
                let s = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                for &i in g {
                    samples[i] = s;
                }
            }
            imaging::write_patch(&mut img, grid, p, &samples);
        }
        Ok(img)
    }

    fn latent_dim(&self) -> usize {
        self.dim
    }
}

/// Uniform scalar quantizer over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantSpec {
    bits: u32,
    lo: f64,
    hi: f64,
}

impl Default for QuantSpec {
    fn default() -> Self {
        Self {
            bits: 8,
            lo: 0.0,
            hi: 1.0,
        }
    }
}

impl QuantSpec {
    pub fn new(bits: u32, lo: f64, hi: f64) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::Codec(format!("quantizer bits {bits} outside 1..=16")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Codec(format!("bad clip range [{lo}, {hi}]")));
        }
        Ok(Self { bits, lo, hi })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn levels(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    /// Distance between adjacent reconstruction levels.
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / f64::from(self.levels())
    }

    pub fn code(&self, x: f64) -> u16 {
        let t = (x.clamp(self.lo, self.hi) - self.lo) / (self.hi - self.lo);
        (t * f64::from(self.levels())).round() as u16
    }

    pub fn value(&self, code: u16) -> f64 {
        self.lo + f64::from(code.min(self.levels() as u16)) * self.step()
    }
}

/// Quantized latent codes, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedLatent {
    pub dim: usize,
    pub codes: Vec<u16>,
}

impl QuantizedLatent {
    /// `rows·D·q`.
    pub fn bit_count(&self, spec: &QuantSpec) -> usize {
        self.codes.len() * spec.bits() as usize
    }
}

/// Quantizes every latent value; returns the codes and `L_e` total in bits.
pub fn quantize(latent: &LatentBlock, spec: &QuantSpec) -> (QuantizedLatent, usize) {
    let q = QuantizedLatent {
        dim: latent.dim(),
        codes: latent.values().iter().map(|&v| spec.code(v)).collect(),
    };
    let bits = q.bit_count(spec);
    (q, bits)
}

pub fn dequantize(q: &QuantizedLatent, spec: &QuantSpec) -> Result<LatentBlock> {
    LatentBlock::new(q.dim, q.codes.iter().map(|&c| spec.value(c)).collect())
}
