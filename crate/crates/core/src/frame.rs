//! The on-air frame and the end-to-end link.
//!
//! A frame is a protected header, the serialized sparse side information and
//! the latent block. Header and side information go out as BPSK bits; the
//! latent block goes out as analog I/Q symbols (two values per symbol) or,
//! in digital mode, as quantized BPSK bits.
//!
//! Header layout (72 bits, big-endian fields, sent three times and
//! majority-decoded):
//!
//! ```text
//! N (16) | len_keep (16) | L_b (16) | D (16) | polarity (1) | zero pad (7)
//! ```
//!
//! `.scframe` files hold the 9 header bytes, the side information bits packed
//! MSB-first into whole bytes, then the latent values as `f32` little-endian,
//! row-major.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bitmap::{mask_to_payload, payload_to_mask, BitPayload, MaskPattern};
use crate::channel::{
    demodulate_bpsk, equalize, modulate_bpsk, normalize_power, transmit_with, ChannelConfig, SymbolStream,
};
use crate::codec::{dequantize, quantize, Codec, Geometry, LatentBlock, QuantSpec, QuantizedLatent};
use crate::imaging::{apply_mask, Image};
use crate::sparse::{
    build_restore_indices, deserialize_sparse, serialize_sparse, sparse_decode, sparse_encode, Polarity, Repairs,
    SparseIndexSet,
};
use crate::{Error, Result};

pub const HEADER_BITS: usize = 72;
pub const HEADER_REPETITION: usize = 3;
pub const HEADER_ON_AIR_BITS: usize = HEADER_BITS * HEADER_REPETITION;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub n: u16,
    pub len_keep: u16,
    pub payload_len: u16,
    pub dim: u16,
    pub polarity: Polarity,
}

impl Header {
    pub fn to_bits(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(HEADER_BITS);
        for field in [self.n, self.len_keep, self.payload_len, self.dim] {
            out.extend((0..16).rev().map(|k| (field >> k) & 1 == 1));
        }
        out.push(self.polarity.bit());
        out.resize(HEADER_BITS, false);
        out
    }

    /// Parses 72 header bits. Nonzero padding means the header is damaged.
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        if bits.len() != HEADER_BITS {
            return Err(Error::FrameLost(format!("header has {} bits", bits.len())));
        }
        if bits[65..].iter().any(|&b| b) {
            return Err(Error::FrameLost("header padding is not zero".into()));
        }
        let field = |i: usize| {
            bits[i * 16..(i + 1) * 16]
                .iter()
                .fold(0u16, |acc, &b| (acc << 1) | u16::from(b))
        };
        Ok(Self {
            n: field(0),
            len_keep: field(1),
            payload_len: field(2),
            dim: field(3),
            polarity: Polarity::from_bit(bits[64]),
        })
    }

    pub fn to_bytes(&self) -> [u8; HEADER_BITS / 8] {
        let mut out = [0u8; HEADER_BITS / 8];
        for (i, bit) in self.to_bits().into_iter().enumerate() {
            out[i / 8] |= u8::from(bit) << (7 - i % 8);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_bits(&unpack_bits(bytes, HEADER_BITS))
    }

    fn masked(&self) -> usize {
        usize::from(self.n) - usize::from(self.len_keep)
    }

    /// Number of indices the side information must carry.
    pub fn sideinfo_count(&self) -> usize {
        match self.polarity {
            Polarity::Masked => self.masked(),
            Polarity::Unmasked => usize::from(self.len_keep),
        }
    }

    pub fn sideinfo_bits(&self) -> usize {
        crate::sparse::serialized_len(usize::from(self.n), self.sideinfo_count())
    }

    pub fn latent_rows(&self) -> usize {
        usize::from(self.len_keep) + 1
    }

    /// Checks the header against the receiver's geometry and for internal consistency.
    pub fn validate(&self, n: usize, dim: usize) -> Result<()> {
        let lost = |why: String| Err(Error::FrameLost(why));
        if usize::from(self.n) != n {
            return lost(format!("header N={} but receiver grid has {n}", self.n));
        }
        if usize::from(self.dim) != dim {
            return lost(format!("header D={} but codec uses {dim}", self.dim));
        }
        if self.len_keep == 0 || self.len_keep > self.n {
            return lost(format!("len_keep {} invalid for N={}", self.len_keep, self.n));
        }
        if self.payload_len > self.n {
            return lost(format!("L_b {} exceeds N={}", self.payload_len, self.n));
        }
        if self.masked() > usize::from(self.payload_len) {
            return lost(format!("{} masked patches but L_b={}", self.masked(), self.payload_len));
        }
        let expect = if usize::from(self.len_keep) > self.masked() {
            Polarity::Masked
        } else {
            Polarity::Unmasked
        };
        if self.polarity != expect {
            return lost("polarity inconsistent with len_keep".into());
        }
        Ok(())
    }
}

/// Repeats the header block [`HEADER_REPETITION`] times.
pub fn protect_header(bits: &[bool]) -> Vec<bool> {
    bits.iter()
        .copied()
        .cycle()
        .take(bits.len() * HEADER_REPETITION)
        .collect()
}

/// Bitwise majority vote over the repeated header copies.
pub fn majority_header(bits: &[bool]) -> Vec<bool> {
    let len = bits.len() / HEADER_REPETITION;
    (0..len)
        .map(|i| (0..HEADER_REPETITION).filter(|&r| bits[r * len + i]).count() * 2 > HEADER_REPETITION)
        .collect()
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |acc, (k, &b)| acc | (u8::from(b) << (7 - k)))
        })
        .collect()
}

fn unpack_bits(bytes: &[u8], count: usize) -> Vec<bool> {
    (0..count)
        .map(|i| bytes.get(i / 8).is_some_and(|b| (b >> (7 - i % 8)) & 1 == 1))
        .collect()
}

/// How latent values are put on air.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum LatentMode {
    /// Two real values per complex symbol, power normalized, no quantization.
    #[default]
    Analog,
    /// Quantized to `q` bits per value and sent as BPSK.
    Digital,
}

impl std::str::FromStr for LatentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analog" => Ok(LatentMode::Analog),
            "digital" => Ok(LatentMode::Digital),
            other => Err(Error::Config(vec![format!("unknown latent mode {other:?}")])),
        }
    }
}

impl std::fmt::Display for LatentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LatentMode::Analog => "analog",
            LatentMode::Digital => "digital",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub patch_size: usize,
    pub quant: QuantSpec,
    pub latent_mode: LatentMode,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            patch_size: 16,
            quant: QuantSpec::default(),
            latent_mode: LatentMode::Analog,
        }
    }
}

/// Bit cost of a frame, split the way the overhead accountant counts it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameCost {
    pub visible_patches: usize,
    /// `L_e`: `D·q` bits per visible patch.
    pub bits_per_patch: usize,
    pub summary_bits: usize,
    pub sideinfo_bits: usize,
    pub header_bits: usize,
}

impl FrameCost {
    /// Everything not scaling with visible patches: side information, header, summary row.
    pub fn l_m(&self) -> usize {
        self.sideinfo_bits + self.header_bits + self.summary_bits
    }

    pub fn total(&self) -> usize {
        self.visible_patches * self.bits_per_patch + self.l_m()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub header: Header,
    pub latent: LatentBlock,
    pub sideinfo: Vec<bool>,
}

impl Frame {
    pub fn cost(&self, quant: &QuantSpec) -> FrameCost {
        let per_value = quant.bits() as usize;
        FrameCost {
            visible_patches: usize::from(self.header.len_keep),
            bits_per_patch: self.latent.dim() * per_value,
            summary_bits: self.latent.dim() * per_value,
            sideinfo_bits: self.sideinfo.len(),
            header_bits: HEADER_ON_AIR_BITS,
        }
    }

    /// Latent values as I/Q pairs (odd count padded with a zero Q), before normalization.
    pub fn latent_symbols(&self) -> SymbolStream {
        SymbolStream::new(
            self.latent
                .values()
                .chunks(2)
                .map(|c| Complex64::new(c[0], c.get(1).copied().unwrap_or(0.0)))
                .collect(),
        )
    }

    pub fn to_scframe(&self) -> Vec<u8> {
        let mut out = self.header.to_bytes().to_vec();
        out.extend(pack_bits(&self.sideinfo));
        for &v in self.latent.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    /// Parses a `.scframe`; lengths must agree exactly with the header.
    pub fn from_scframe(bytes: &[u8]) -> Result<Self> {
        let hlen = HEADER_BITS / 8;
        if bytes.len() < hlen {
            return Err(Error::Format("scframe shorter than its header".into()));
        }
        let header = Header::from_bytes(&bytes[..hlen]).map_err(|e| Error::Format(e.to_string()))?;
        if header.len_keep == 0 || header.len_keep > header.n || header.dim == 0 {
            return Err(Error::Format("scframe header fields inconsistent".into()));
        }
        let side_bits = header.sideinfo_bits();
        let side_bytes = side_bits.div_ceil(8);
        let latent_len = header.latent_rows() * usize::from(header.dim);
        let expected = hlen + side_bytes + latent_len * 4;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "scframe is {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let sideinfo = unpack_bits(&bytes[hlen..hlen + side_bytes], side_bits);
        let values = bytes[hlen + side_bytes..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let latent = LatentBlock::new(usize::from(header.dim), values).map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            header,
            latent,
            sideinfo,
        })
    }
}

fn to_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::Codec(format!("{what} = {v} does not fit the 16-bit header field")))
}

/// Payload → mask → masked image → codec → side information.
pub fn sem_encode(img: &Image, payload: &BitPayload, codec: &dyn Codec, cfg: &LinkConfig) -> Result<Frame> {
    let geometry = Geometry::of(img, cfg.patch_size)?;
    let n = geometry.grid.n();
    let mask = payload_to_mask(payload, n)?;
    if mask.visible_count() == 0 {
        return Err(Error::NoVisiblePatches);
    }
    let masked = apply_mask(img, &geometry.grid, &mask)?;
    let (latent, restore) = codec.encode(&masked)?;
    if restore.len_keep() != mask.visible_count() || latent.rows() != restore.len_keep() + 1 {
        return Err(Error::Codec("codec output inconsistent with the mask".into()));
    }
    let sparse = sparse_encode(&mask);
    let header = Header {
        n: to_u16(n, "N")?,
        len_keep: to_u16(restore.len_keep(), "len_keep")?,
        payload_len: to_u16(payload.len(), "L_b")?,
        dim: to_u16(latent.dim(), "D")?,
        polarity: sparse.polarity(),
    };
    Ok(Frame {
        header,
        latent,
        sideinfo: serialize_sparse(&sparse),
    })
}

/// Hard-decided frame segments after the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    /// All repeated header copies, before the majority vote.
    pub header_bits: Vec<bool>,
    pub sideinfo: Vec<bool>,
    pub latent_values: Vec<f64>,
}

impl ReceivedFrame {
    /// A frame received without impairment.
    pub fn clean(frame: &Frame) -> Self {
        Self {
            header_bits: protect_header(&frame.header.to_bits()),
            sideinfo: frame.sideinfo.clone(),
            latent_values: frame.latent.values().to_vec(),
        }
    }
}

fn bpsk_link<R: rand::Rng + ?Sized>(bits: &[bool], ch: &ChannelConfig, rng: &mut R) -> Vec<bool> {
    if bits.is_empty() {
        return Vec::new();
    }
    let rx = transmit_with(&modulate_bpsk(bits), ch, rng);
    let (eq, erasures) = equalize(&rx);
    demodulate_bpsk(&eq, &erasures)
}

/// Sends every frame segment through the channel, in order header, side
/// information, latents, from one generator seeded by `ch.seed`.
pub fn transmit_frame(frame: &Frame, cfg: &LinkConfig, ch: &ChannelConfig) -> Result<ReceivedFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(ch.seed);
    let header_bits = bpsk_link(&protect_header(&frame.header.to_bits()), ch, &mut rng);
    let sideinfo = bpsk_link(&frame.sideinfo, ch, &mut rng);
    let count = frame.latent.values().len();
    let latent_values = match cfg.latent_mode {
        LatentMode::Analog => {
            let symbols = frame.latent_symbols();
            let (tx, scale) = match normalize_power(&symbols) {
                Ok(v) => v,
                // an all-zero latent block is sent as is
                Err(Error::ZeroPower) => (symbols, 1.0),
                Err(e) => return Err(e),
            };
            let rx = transmit_with(&tx, ch, &mut rng);
            let (eq, erasures) = equalize(&rx);
            let mut out = Vec::with_capacity(count + 1);
            for (s, erased) in eq.symbols.iter().zip(erasures) {
                let s = if erased { Complex64::new(0.0, 0.0) } else { s / scale };
                out.push(s.re);
                out.push(s.im);
            }
            out.truncate(count);
            out
        }
        LatentMode::Digital => {
            let q = cfg.quant.bits() as usize;
            let (codes, _) = quantize(&frame.latent, &cfg.quant);
            let bits: Vec<bool> = codes
                .codes
                .iter()
                .flat_map(|&c| (0..q).rev().map(move |k| (c >> k) & 1 == 1))
                .collect();
            let got = bpsk_link(&bits, ch, &mut rng);
            let codes = got
                .chunks(q)
                .map(|c| c.iter().fold(0u16, |acc, &b| (acc << 1) | u16::from(b)))
                .collect();
            dequantize(
                &QuantizedLatent {
                    dim: frame.latent.dim(),
                    codes,
                },
                &cfg.quant,
            )?
            .values()
            .to_vec()
        }
    };
    Ok(ReceivedFrame {
        header_bits,
        sideinfo,
        latent_values,
    })
}

/// What the receiver noticed while decoding.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntegrityFlags {
    pub sideinfo: Repairs,
    /// Side information polarity bit disagreed with the header.
    pub polarity_mismatch: bool,
    /// Decoded mask's visible count disagreed with the header's `len_keep`.
    pub visible_mismatch: bool,
    /// Masked positions past `L_b`.
    pub corrupted_tail: Vec<usize>,
}

impl IntegrityFlags {
    pub fn is_clean(&self) -> bool {
        !self.sideinfo.any() && !self.polarity_mismatch && !self.visible_mismatch && self.corrupted_tail.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub header: Header,
    pub image: Image,
    pub payload: BitPayload,
    pub mask: MaskPattern,
    pub flags: IntegrityFlags,
}

/// Header vote → side information → mask → codec decode → payload.
pub fn sem_decode(rx: &ReceivedFrame, codec: &dyn Codec, geometry: &Geometry) -> Result<Decoded> {
    if rx.header_bits.len() != HEADER_ON_AIR_BITS {
        return Err(Error::FrameLost(format!(
            "{} header bits received",
            rx.header_bits.len()
        )));
    }
    let header = Header::from_bits(&majority_header(&rx.header_bits))?;
    let n = geometry.grid.n();
    let dim = codec.latent_dim();
    header.validate(n, dim)?;
    if rx.sideinfo.len() != header.sideinfo_bits() {
        return Err(Error::FrameLost(format!(
            "header implies {} side-information bits, {} received",
            header.sideinfo_bits(),
            rx.sideinfo.len()
        )));
    }
    let rows = header.latent_rows();
    if rx.latent_values.len() != rows * dim {
        return Err(Error::FrameLost(format!(
            "header implies {} latent values, {} received",
            rows * dim,
            rx.latent_values.len()
        )));
    }

    let mut flags = IntegrityFlags::default();
    let (mut set, repairs) = deserialize_sparse(&rx.sideinfo, n).map_err(|e| Error::FrameLost(e.to_string()))?;
    flags.sideinfo = repairs;
    if set.polarity() != header.polarity {
        flags.polarity_mismatch = true;
        set = SparseIndexSet::new(set.indices().to_vec(), header.polarity, n)?;
    }
    let (mask, _) = sparse_decode(&set)?;
    let recovered = mask_to_payload(&mask, usize::from(header.payload_len));
    flags.corrupted_tail = recovered.corrupted_tail;

    // The latent block length is fixed by the header; bend the codec's view
    // of the mask to it when the side information was damaged.
    let len_keep = usize::from(header.len_keep);
    let visible = mask.visible_count();
    let mut codec_mask = mask.clone();
    let mut latent = LatentBlock::new(
        dim,
        rx.latent_values
            .iter()
            .map(|v| if v.is_finite() { *v } else { 0.0 })
            .collect(),
    )?;
    if visible != len_keep {
        flags.visible_mismatch = true;
        if visible > len_keep {
            let surplus: Vec<usize> = (0..n)
                .rev()
                .filter(|&i| !mask.get(i))
                .take(visible - len_keep)
                .collect();
            for i in surplus {
                codec_mask.set(i, true);
            }
        } else if visible == 0 {
            codec_mask.set(0, false);
            latent = latent.truncated(2);
        } else {
            latent = latent.truncated(visible + 1);
        }
    }
    let restore = build_restore_indices(&codec_mask);
    let image = codec.decode(&latent, &restore, geometry)?;
    Ok(Decoded {
        header,
        image,
        payload: recovered.payload,
        mask,
        flags,
    })
}

/// Encode, transmit and decode one image and payload.
pub fn run_link(
    img: &Image,
    payload: &BitPayload,
    codec: &dyn Codec,
    cfg: &LinkConfig,
    ch: &ChannelConfig,
) -> Result<(Frame, Result<Decoded>)> {
    let frame = sem_encode(img, payload, codec, cfg)?;
    let geometry = Geometry::of(img, cfg.patch_size)?;
    let rx = transmit_frame(&frame, cfg, ch)?;
    let decoded = sem_decode(&rx, codec, &geometry);
    Ok((frame, decoded))
}
