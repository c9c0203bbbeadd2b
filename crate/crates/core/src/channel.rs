//! Single-antenna physical layer: power normalization, BPSK, and the
//! `y = h·x + n` channel with AWGN or per-symbol Rayleigh fading.
//!
//! Noise is circularly-symmetric complex Gaussian with total variance
//! `σ² = 10^(−snr_db/10)` for unit-power symbols, so for BPSK `snr_db` is
//! Eb/N0. An infinite SNR gives a noiseless link.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Gains with magnitude below this are treated as erasures.
pub const ERASURE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        })
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            other => Err(Error::Channel(format!("unknown channel kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub seed: u64,
}

impl ChannelConfig {
    /// Rejects NaN and −∞; +∞ means noiseless.
    pub fn new(kind: ChannelKind, snr_db: f64, seed: u64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::Channel(format!("snr_db {snr_db} is not usable")));
        }
        Ok(Self { kind, snr_db, seed })
    }

    pub fn noiseless(kind: ChannelKind) -> Self {
        Self {
            kind,
            snr_db: f64::INFINITY,
            seed: 0,
        }
    }

    /// Total complex noise variance σ².
    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }
}

/// Complex baseband symbols.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolStream {
    pub symbols: Vec<Complex64>,
}

impl SymbolStream {
    pub fn new(symbols: Vec<Complex64>) -> Self {
        Self { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Mean `|s|²`; zero when empty.
    pub fn avg_power(&self) -> f64 {
        if self.symbols.is_empty() {
            return 0.0;
        }
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.symbols.len() as f64
    }

    pub fn scaled(&self, k: f64) -> SymbolStream {
        SymbolStream::new(self.symbols.iter().map(|s| s * k).collect())
    }
}

/// Scales the stream to unit mean power; returns it with the applied factor.
pub fn normalize_power(stream: &SymbolStream) -> Result<(SymbolStream, f64)> {
    let p = stream.avg_power();
    if p == 0.0 {
        return Err(Error::ZeroPower);
    }
    let k = p.sqrt().recip();
    Ok((stream.scaled(k), k))
}

/// Bit 0 → +1, bit 1 → −1.
pub fn modulate_bpsk(bits: &[bool]) -> SymbolStream {
    SymbolStream::new(
        bits.iter()
            .map(|&b| Complex64::new(if b { -1.0 } else { 1.0 }, 0.0))
            .collect(),
    )
}

/// Hard decision on the real part (≥ 0 → 0). Erased symbols decide 0.
pub fn demodulate_bpsk(stream: &SymbolStream, erasures: &[bool]) -> Vec<bool> {
    stream
        .symbols
        .iter()
        .enumerate()
        .map(|(i, s)| !erasures.get(i).copied().unwrap_or(false) && s.re < 0.0)
        .collect()
}

/// Channel output plus the fading gains, when any.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub stream: SymbolStream,
    pub fading: Option<Vec<Complex64>>,
}

/// Unit-variance circularly-symmetric complex Gaussian sample.
fn cn<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Passes `stream` through the channel. Reproducible from `cfg.seed`.
pub fn transmit(stream: &SymbolStream, cfg: &ChannelConfig) -> Received {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    transmit_with(stream, cfg, &mut rng)
}

/// [`transmit`] drawing from a caller-owned generator, for multi-segment frames.
pub fn transmit_with<R: rand::Rng + ?Sized>(stream: &SymbolStream, cfg: &ChannelConfig, rng: &mut R) -> Received {
    let sigma2 = cfg.noise_variance();
    let mut fading = (cfg.kind == ChannelKind::Rayleigh).then(|| Vec::with_capacity(stream.len()));
    let symbols = stream
        .symbols
        .iter()
        .map(|&x| {
            let y = match fading.as_mut() {
                Some(record) => {
                    let h = cn(rng, 1.0);
                    record.push(h);
                    h * x
                }
                None => x,
            };
            if sigma2 > 0.0 {
                y + cn(rng, sigma2)
            } else {
                y
            }
        })
        .collect();
    Received {
        stream: SymbolStream::new(symbols),
        fading,
    }
}

/// Zero-forcing equalization with perfect CSI. Returns the equalized stream
/// and a per-symbol erasure flag.
pub fn equalize(rx: &Received) -> (SymbolStream, Vec<bool>) {
    match &rx.fading {
        None => (rx.stream.clone(), vec![false; rx.stream.len()]),
        Some(h) => {
            let mut erasures = Vec::with_capacity(h.len());
            let symbols = rx
                .stream
                .symbols
                .iter()
                .zip(h)
                .map(|(&y, &h)| {
                    let erased = h.norm() < ERASURE_THRESHOLD;
                    erasures.push(erased);
                    if erased {
                        Complex64::new(0.0, 0.0)
                    } else {
                        y / h
                    }
                })
                .collect();
            (SymbolStream::new(symbols), erasures)
        }
    }
}

/// `Q(x) = ½·erfc(x/√2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Theoretical BPSK bit error rate over AWGN at the given Eb/N0 in dB.
pub fn bpsk_awgn_ber(ebn0_db: f64) -> f64 {
    q_function((2.0 * 10f64.powf(ebn0_db / 10.0)).sqrt())
}

/// Derives the seed of sub-stream `index` from `master` (splitmix64 of
/// `master + (index + 1)·γ`, γ = 0x9E3779B97F4A7C15).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
