//! Payload bits to mask pattern and back.
//!
//! Payload bit `i` masks patch `i`; the payload occupies the first `L_b`
//! grid positions and the remaining positions stay visible.

use std::ops::RangeInclusive;

use rand::Rng;

use crate::{Error, Result};

/// Mask ratios the semantic decoder is expected to handle well.
pub const MASK_RATIO_BAND: RangeInclusive<f64> = 0.10..=0.80;

/// Digital payload as an ordered bit sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitPayload(Vec<bool>);

impl BitPayload {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Bytes to bits, most-significant bit of byte 0 first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self(
            bytes
                .iter()
                .flat_map(|&b| (0..8).rev().map(move |k| (b >> k) & 1 == 1))
                .collect(),
        )
    }

    /// Bits to bytes, MSB first; a trailing partial byte is zero padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (k, &b)| acc | (u8::from(b) << (7 - k)))
            })
            .collect()
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random()).collect())
    }

    /// `L_b`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn popcount(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl FromIterator<bool> for BitPayload {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Per-patch mask bits; `true` means the patch is masked.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskPattern(Vec<bool>);

impl MaskPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![true; n])
    }

    /// Number of patches `N`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, masked: bool) {
        self.0[i] = masked;
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    /// Count of masked patches.
    pub fn popcount(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Count of visible patches.
    pub fn visible_count(&self) -> usize {
        self.len() - self.popcount()
    }

    /// Masked fraction `M_r`; zero for an empty grid.
    pub fn ratio(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.popcount() as f64 / self.len() as f64
        }
    }

    /// Raster indices of masked patches (the set ℳ).
    pub fn masked_indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }
}

impl FromIterator<bool> for MaskPattern {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Places the payload on the first `L_b` patches of an `n`-patch grid.
pub fn payload_to_mask(payload: &BitPayload, n: usize) -> Result<MaskPattern> {
    if payload.len() > n {
        return Err(Error::PayloadTooLong {
            len: payload.len(),
            capacity: n,
        });
    }
    let mut bits = payload.0.clone();
    bits.resize(n, false);
    Ok(MaskPattern(bits))
}

/// Payload read back from a mask, with the tail positions that should have
/// been visible but were not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadRecovery {
    pub payload: BitPayload,
    /// Masked positions at or beyond `L_b`; nonempty means the mask was corrupted.
    pub corrupted_tail: Vec<usize>,
}

impl PayloadRecovery {
    pub fn is_clean(&self) -> bool {
        self.corrupted_tail.is_empty()
    }
}

/// Reads the first `len` mask bits as the payload. `len` is clamped to the mask length.
pub fn mask_to_payload(mask: &MaskPattern, len: usize) -> PayloadRecovery {
    let len = len.min(mask.len());
    PayloadRecovery {
        payload: BitPayload(mask.0[..len].to_vec()),
        corrupted_tail: (len..mask.len()).filter(|&i| mask.0[i]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskRatioAdvisory {
    WithinBand,
    BelowBand,
    AboveBand,
}

/// Flags mask ratios outside [`MASK_RATIO_BAND`]. Never blocks transmission.
pub fn check_mask_ratio(mask: &MaskPattern) -> MaskRatioAdvisory {
    classify_ratio(mask.ratio())
}

pub fn classify_ratio(ratio: f64) -> MaskRatioAdvisory {
    if ratio < *MASK_RATIO_BAND.start() {
        MaskRatioAdvisory::BelowBand
    } else if ratio > *MASK_RATIO_BAND.end() {
        MaskRatioAdvisory::AboveBand
    } else {
        MaskRatioAdvisory::WithinBand
    }
}
