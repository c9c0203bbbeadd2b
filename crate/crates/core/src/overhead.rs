//! Transmission-overhead accounting.
//!
//! `L_e` is counted per visible patch; everything else the frame carries
//! (side information, header, summary row) is folded into `L_m`.

use std::io::Write;

use serde::Serialize;

use crate::{Error, Result};

/// Default bits per pixel of the uncoded image baseline.
pub const DEFAULT_BITS_PER_PIXEL: u64 = 16;

/// `⌈W·H/(P·P)⌉`.
pub fn patch_count(width: u64, height: u64, patch_size: u64) -> u64 {
    (width * height).div_ceil(patch_size * patch_size)
}

/// `⌈N·(1−M_r)⌉·L_e + L_m`.
///
/// Products within 1e-9 of an integer are snapped to it before the ceiling so
/// that `M_r = k/N` yields exactly `N − k` visible patches.
///
/// # Panics
///
/// If `mask_ratio` is outside `[0, 1]`.
pub fn overhead_proposed(n: u64, mask_ratio: f64, l_e_per_patch: u64, l_m: u64) -> u64 {
    assert!(
        (0.0..=1.0).contains(&mask_ratio),
        "mask ratio {mask_ratio} outside [0, 1]"
    );
    let visible = n as f64 * (1.0 - mask_ratio);
    let rounded = visible.round();
    let visible = if (visible - rounded).abs() < 1e-9 {
        rounded
    } else {
        visible.ceil()
    };
    visible as u64 * l_e_per_patch + l_m
}

/// `(N − L_b)·L_e + L_m`, the cost when every payload bit masks a patch.
pub fn overhead_minimal(n: u64, l_b: u64, l_e_per_patch: u64, l_m: u64) -> Result<u64> {
    if l_b > n {
        return Err(Error::PayloadTooLong {
            len: l_b as usize,
            capacity: n as usize,
        });
    }
    Ok((n - l_b) * l_e_per_patch + l_m)
}

/// `W·H·C·B_p + L_b`: raw pixels plus the payload sent separately.
pub fn overhead_direct(width: u64, height: u64, channels: u64, bits_per_pixel: u64, l_b: u64) -> u64 {
    width * height * channels * bits_per_pixel + l_b
}

/// Budget check `bits ≤ ε`; no budget always passes.
pub fn check_cost(bits: u64, epsilon: Option<u64>) -> bool {
    epsilon.is_none_or(|eps| bits <= eps)
}

pub fn compression_ratio(bits: f64, direct_bits: f64) -> f64 {
    bits / direct_bits
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadInputs {
    pub n: u64,
    pub mask_ratio: f64,
    pub l_e: u64,
    pub l_m: u64,
    pub l_b: u64,
    pub width: u64,
    pub height: u64,
    pub channels: u64,
    pub bits_per_pixel: u64,
}

/// One row of the overhead CSV. Column order is stable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadReport {
    pub n: u64,
    pub mask_ratio: f64,
    pub l_e: u64,
    pub l_m: u64,
    pub l_b: u64,
    pub width: u64,
    pub height: u64,
    pub channels: u64,
    pub bits_per_pixel: u64,
    pub bits_proposed: u64,
    pub bits_minimal: u64,
    pub bits_direct: u64,
    pub compression_ratio: f64,
}

pub const REPORT_COLUMNS: [&str; 13] = [
    "n",
    "mask_ratio",
    "l_e",
    "l_m",
    "l_b",
    "width",
    "height",
    "channels",
    "bits_per_pixel",
    "bits_proposed",
    "bits_minimal",
    "bits_direct",
    "compression_ratio",
];

impl OverheadReport {
    pub fn compute(i: &OverheadInputs) -> Result<Self> {
        if !(0.0..=1.0).contains(&i.mask_ratio) {
            return Err(Error::Config(vec![format!(
                "mask ratio {} outside [0, 1]",
                i.mask_ratio
            )]));
        }
        let bits_proposed = overhead_proposed(i.n, i.mask_ratio, i.l_e, i.l_m);
        let bits_minimal = overhead_minimal(i.n, i.l_b, i.l_e, i.l_m)?;
        let bits_direct = overhead_direct(i.width, i.height, i.channels, i.bits_per_pixel, i.l_b);
        Ok(Self {
            n: i.n,
            mask_ratio: i.mask_ratio,
            l_e: i.l_e,
            l_m: i.l_m,
            l_b: i.l_b,
            width: i.width,
            height: i.height,
            channels: i.channels,
            bits_per_pixel: i.bits_per_pixel,
            bits_proposed,
            bits_minimal,
            bits_direct,
            compression_ratio: compression_ratio(bits_proposed as f64, bits_direct as f64),
        })
    }

    /// Writes the header line and this report as one CSV row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.serialize(self)?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
