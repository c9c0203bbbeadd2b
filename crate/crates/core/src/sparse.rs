//! Compact mask side information.
//!
//! The transmitter sends whichever index list is shorter, the masked
//! patches or the visible ones, tagged with a polarity bit. The receiver
//! rebuilds the mask and the restore permutation the decoder needs, using a
//! stable double argsort over the mask bits.
//!
//! On-air layout, big-endian within each field:
//!
//! ```text
//! polarity (1) | count (ceil(log2(N+1))) | index_0 .. index_{count-1} (ceil(log2 N) each)
//! ```

use crate::bitmap::MaskPattern;
use crate::{Error, Result};

/// Which class of patch a [`SparseIndexSet`] lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    /// Indices are visible patches. Encoded as bit 0.
    Unmasked,
    /// Indices are masked patches. Encoded as bit 1.
    Masked,
}

impl Polarity {
    pub fn bit(self) -> bool {
        self == Polarity::Masked
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Polarity::Masked
        } else {
            Polarity::Unmasked
        }
    }
}

/// Permutation from visible-first shuffled order back to raster order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RestoreIndices {
    ids_shuffle: Vec<usize>,
    ids_restore: Vec<usize>,
    len_keep: usize,
}

impl RestoreIndices {
    /// Builds from a restore permutation and the number of visible patches.
    pub fn from_restore(ids_restore: Vec<usize>, len_keep: usize) -> Result<Self> {
        let ids_shuffle = argsort_stable(&ids_restore);
        let n = ids_restore.len();
        if len_keep > n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: len_keep,
            });
        }
        // argsort of a permutation inverts it; anything else fails the check
        if ids_shuffle.iter().enumerate().any(|(i, &s)| ids_restore[s] != i) {
            return Err(Error::Codec("restore indices are not a permutation".into()));
        }
        Ok(Self {
            ids_shuffle,
            ids_restore,
            len_keep,
        })
    }

    /// Raster index of each slot in visible-first order.
    pub fn ids_shuffle(&self) -> &[usize] {
        &self.ids_shuffle
    }

    /// Slot in visible-first order occupied by each raster patch.
    pub fn ids_restore(&self) -> &[usize] {
        &self.ids_restore
    }

    /// Number of visible patches.
    pub fn len_keep(&self) -> usize {
        self.len_keep
    }

    pub fn n(&self) -> usize {
        self.ids_restore.len()
    }

    /// Raster indices of the visible patches, in latent row order.
    pub fn visible(&self) -> &[usize] {
        &self.ids_shuffle[..self.len_keep]
    }

    /// Raster indices of the masked patches.
    pub fn masked(&self) -> &[usize] {
        &self.ids_shuffle[self.len_keep..]
    }

    pub fn mask(&self) -> MaskPattern {
        (0..self.n()).map(|i| self.ids_restore[i] >= self.len_keep).collect()
    }
}

/// Stable argsort: indices ordering `keys` ascending, ties in original order.
pub fn argsort_stable<T: Ord>(keys: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    idx
}

/// Double argsort of the mask bits: visible patches first, raster order kept within each class.
pub fn build_restore_indices(mask: &MaskPattern) -> RestoreIndices {
    let ids_shuffle = argsort_stable(mask.bits());
    let ids_restore = argsort_stable(&ids_shuffle);
    RestoreIndices {
        ids_shuffle,
        ids_restore,
        len_keep: mask.visible_count(),
    }
}

/// The shorter of the masked/visible index lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparseIndexSet {
    indices: Vec<usize>,
    polarity: Polarity,
    n: usize,
}

impl SparseIndexSet {
    /// Validates that `indices` are in range and distinct, and sorts them.
    pub fn new(mut indices: Vec<usize>, polarity: Polarity, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateIndex(w[0]));
        }
        Ok(Self { indices, polarity, n })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Serialized length `L_m` in bits.
    pub fn bit_len(&self) -> usize {
        serialized_len(self.n, self.indices.len())
    }
}

/// Emits the masked indices when they are strictly fewer than the visible
/// ones; otherwise (ties included) the visible indices.
pub fn sparse_encode(mask: &MaskPattern) -> SparseIndexSet {
    let ones = mask.popcount();
    let zeros = mask.len() - ones;
    let (polarity, want) = if zeros > ones {
        (Polarity::Masked, true)
    } else {
        (Polarity::Unmasked, false)
    };
    let indices = mask
        .iter()
        .enumerate()
        .filter(|&(_, b)| b == want)
        .map(|(i, _)| i)
        .collect();
    SparseIndexSet {
        indices,
        polarity,
        n: mask.len(),
    }
}

/// Rebuilds the mask and its restore permutation.
pub fn sparse_decode(set: &SparseIndexSet) -> Result<(MaskPattern, RestoreIndices)> {
    let n = set.n;
    let fill = set.polarity == Polarity::Unmasked;
    let mut bits = vec![fill; n];
    let mut seen = vec![false; n];
    for &i in &set.indices {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::DuplicateIndex(i));
        }
        bits[i] = !fill;
    }
    let mask = MaskPattern::new(bits);
    let restore = build_restore_indices(&mask);
    Ok((mask, restore))
}

/// Bits needed to represent values `0..count` (`ceil(log2 count)`, 0 for `count <= 1`).
pub fn bits_for(count: usize) -> usize {
    if count <= 1 {
        0
    } else {
        (usize::BITS - (count - 1).leading_zeros()) as usize
    }
}

/// Width of the count field for an `n`-patch grid.
pub fn count_field_bits(n: usize) -> usize {
    bits_for(n + 1)
}

/// Width of each index field for an `n`-patch grid.
pub fn index_field_bits(n: usize) -> usize {
    bits_for(n)
}

/// `L_m = 1 + ceil(log2(N+1)) + count * ceil(log2 N)`.
pub fn serialized_len(n: usize, count: usize) -> usize {
    1 + count_field_bits(n) + count * index_field_bits(n)
}

fn push_field(out: &mut Vec<bool>, value: usize, width: usize) {
    out.extend((0..width).rev().map(|k| (value >> k) & 1 == 1));
}

fn read_field(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
}

pub fn serialize_sparse(set: &SparseIndexSet) -> Vec<bool> {
    let mut out = Vec::with_capacity(set.bit_len());
    out.push(set.polarity.bit());
    push_field(&mut out, set.indices.len(), count_field_bits(set.n));
    let w = index_field_bits(set.n);
    for &i in &set.indices {
        push_field(&mut out, i, w);
    }
    out
}

/// What [`deserialize_sparse`] had to fix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Repairs {
    /// Count field pointed past the available bits and was clamped.
    pub count_clamped: bool,
    /// Indices at or beyond `N`, remapped modulo `N`.
    pub out_of_range: usize,
    /// Repeated indices dropped (first occurrence kept).
    pub duplicates: usize,
    /// Indices arrived out of ascending order.
    pub unordered: bool,
}

impl Repairs {
    pub fn any(&self) -> bool {
        self.count_clamped || self.out_of_range > 0 || self.duplicates > 0 || self.unordered
    }
}

/// Parses side information, repairing channel damage deterministically:
/// out-of-range indices wrap modulo `N`, duplicates keep their first
/// occurrence, and a count past the bit budget is clamped to it.
pub fn deserialize_sparse(bits: &[bool], n: usize) -> Result<(SparseIndexSet, Repairs)> {
    let cw = count_field_bits(n);
    let header = 1 + cw;
    if bits.len() < header {
        return Err(Error::Truncated {
            needed: header,
            available: bits.len(),
        });
    }
    let polarity = Polarity::from_bit(bits[0]);
    let mut count = read_field(&bits[1..header]);
    let iw = index_field_bits(n);
    let mut repairs = Repairs::default();
    if let Some(budget) = (bits.len() - header).checked_div(iw) {
        if count > budget {
            count = budget;
            repairs.count_clamped = true;
        }
    }
    if count > n {
        return Err(Error::CountOverflow { count, n });
    }
    let mut seen = vec![false; n];
    let mut indices = Vec::with_capacity(count);
    let mut last = None;
    for k in 0..count {
        let start = header + k * iw;
        let mut i = read_field(&bits[start..start + iw]);
        if i >= n {
            i %= n;
            repairs.out_of_range += 1;
        }
        if seen[i] {
            repairs.duplicates += 1;
            continue;
        }
        seen[i] = true;
        if last.is_some_and(|l| i < l) {
            repairs.unordered = true;
        }
        last = Some(i);
        indices.push(i);
    }
    indices.sort_unstable();
    Ok((SparseIndexSet { indices, polarity, n }, repairs))
}
