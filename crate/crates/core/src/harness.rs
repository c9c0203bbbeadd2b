//! Experiment sweeps: configuration, trial records, CSV output and SVG plots.
//!
//! Seeds are split as follows. The payload for image `i`, length index `j`
//! and trial `t` comes from `derive_seed(derive_seed(seed, PAYLOAD_STREAM),
//! (i·J + j)·T + t)`, so every SNR and channel point of one trial carries the
//! same payload. The channel seed of a record is `derive_seed(seed, k)` where
//! `k` is the record's position in the sweep order image → payload length →
//! trial → SNR → channel.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitmap::BitPayload;
use crate::channel::{derive_seed, ChannelConfig, ChannelKind};
use crate::codec::{Codec, Geometry, QuantSpec, ReferenceCodec};
use crate::frame::{run_link, LatentMode, LinkConfig};
use crate::imaging::{load_image, synthetic_image, Image};
use crate::metrics::{bit_errors, ms_ssim, psnr};
use crate::wire::{RemoteCodec, ENDPOINT_ENV};
use crate::{Error, Result};

pub const PAYLOAD_STREAM: u64 = 0x7061_796c_6f61_6473;
pub const TRIALS_FILE: &str = "trials.csv";

/// Where carrier images come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    File(PathBuf),
    /// `synthetic:HxW:seed`
    Synthetic {
        height: usize,
        width: usize,
        seed: u64,
    },
}

impl ImageSource {
    pub fn label(&self) -> String {
        match self {
            ImageSource::File(p) => p.display().to_string(),
            ImageSource::Synthetic { height, width, seed } => format!("synthetic:{height}x{width}:{seed}"),
        }
    }

    pub fn load(&self) -> Result<Image> {
        match self {
            ImageSource::File(p) => load_image(p),
            ImageSource::Synthetic { height, width, seed } => Ok(synthetic_image(*height, *width, *seed)),
        }
    }
}

impl FromStr for ImageSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let Some(rest) = s.strip_prefix("synthetic:") else {
            return Ok(ImageSource::File(PathBuf::from(s)));
        };
        let (size, seed) = rest.split_once(':').unwrap_or((rest, "0"));
        let (h, w) = size
            .split_once('x')
            .ok_or_else(|| format!("bad synthetic size {size:?}"))?;
        let num = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad synthetic spec {s:?}"))
        };
        Ok(ImageSource::Synthetic {
            height: num(h)?,
            width: num(w)?,
            seed: seed
                .trim()
                .parse()
                .map_err(|_| format!("bad synthetic seed in {s:?}"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecChoice {
    Reference,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlotKind {
    BerVsSnr,
    PsnrVsSnr,
    MsSsimVsSnr,
    BerVsMasked,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::BerVsSnr,
        PlotKind::PsnrVsSnr,
        PlotKind::MsSsimVsSnr,
        PlotKind::BerVsMasked,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::BerVsSnr => "ber_vs_snr",
            PlotKind::PsnrVsSnr => "psnr_vs_snr",
            PlotKind::MsSsimVsSnr => "msssim_vs_snr",
            PlotKind::BerVsMasked => "ber_vs_masked",
        }
    }
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| format!("unknown plot kind {s:?}"))
    }
}

/// Keys accepted in the configuration file, in documentation order.
pub const CONFIG_KEYS: [&str; 15] = [
    "images",
    "payload_lengths",
    "snr_db",
    "channels",
    "trials",
    "codec",
    "codec_endpoint",
    "latent_dim",
    "latent_mode",
    "quant_bits",
    "quant_range",
    "patch_size",
    "seed",
    "output_dir",
    "plots",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub images: Vec<ImageSource>,
    pub payload_lengths: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub channels: Vec<ChannelKind>,
    pub trials: usize,
    pub codec: CodecChoice,
    /// `host:port`; when unset the environment variable is consulted.
    pub codec_endpoint: Option<String>,
    pub latent_dim: usize,
    pub latent_mode: LatentMode,
    pub quant_bits: u32,
    pub quant_range: (f64, f64),
    pub patch_size: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub plots: Vec<PlotKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            images: vec![ImageSource::Synthetic {
                height: 224,
                width: 224,
                seed: 0,
            }],
            payload_lengths: vec![100],
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            channels: vec![ChannelKind::Awgn],
            trials: 10,
            codec: CodecChoice::Reference,
            codec_endpoint: None,
            latent_dim: 48,
            latent_mode: LatentMode::Analog,
            quant_bits: 8,
            quant_range: (0.0, 1.0),
            patch_size: 16,
            seed: 0,
            output_dir: PathBuf::from("out"),
            plots: PlotKind::ALL.to_vec(),
        }
    }
}

fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn one<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| format!("{:?}: {e}", value.trim()))
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let wrap = |r: std::result::Result<(), String>| r.map_err(|e| format!("{key}: {e}"));
        wrap(match key {
            "images" => list(value).map(|v| self.images = v),
            "payload_lengths" => list(value).map(|v| self.payload_lengths = v),
            "snr_db" => list(value).map(|v| self.snr_db = v),
            "channels" => list(value).map(|v| self.channels = v),
            "trials" => one(value).map(|v| self.trials = v),
            "codec" => match value.trim() {
                "reference" => {
                    self.codec = CodecChoice::Reference;
                    Ok(())
                }
                "remote" => {
                    self.codec = CodecChoice::Remote;
                    Ok(())
                }
                other => Err(format!("unknown codec {other:?}")),
            },
            "codec_endpoint" => {
                let ep = value.trim();
                self.codec_endpoint = (!ep.is_empty()).then(|| ep.to_string());
                Ok(())
            }
            "latent_dim" => one(value).map(|v| self.latent_dim = v),
            "latent_mode" => one(value).map(|v| self.latent_mode = v),
            "quant_bits" => one(value).map(|v| self.quant_bits = v),
            "quant_range" => list::<f64>(value).and_then(|v| match v[..] {
                [lo, hi] => {
                    self.quant_range = (lo, hi);
                    Ok(())
                }
                _ => Err("expected lo,hi".into()),
            }),
            "patch_size" => one(value).map(|v| self.patch_size = v),
            "seed" => one(value).map(|v| self.seed = v),
            "output_dir" => {
                self.output_dir = PathBuf::from(value.trim());
                Ok(())
            }
            "plots" => list(value).map(|v| self.plots = v),
            _ => Err("unknown key".into()),
        })
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored. Every bad line is reported.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut errors = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = cfg.set(k.trim(), v) {
                        errors.push(format!("line {}: {e}", no + 1));
                    }
                }
                None => errors.push(format!("line {}: expected key = value", no + 1)),
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Renders the configuration in the file format.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("images", join(self.images.iter().map(ImageSource::label).collect()));
        line(
            "payload_lengths",
            join(self.payload_lengths.iter().map(|v| v.to_string()).collect()),
        );
        line("snr_db", join(self.snr_db.iter().map(|v| v.to_string()).collect()));
        line("channels", join(self.channels.iter().map(|v| v.to_string()).collect()));
        line("trials", self.trials.to_string());
        line(
            "codec",
            match self.codec {
                CodecChoice::Reference => "reference".into(),
                CodecChoice::Remote => "remote".into(),
            },
        );
        if let Some(ep) = &self.codec_endpoint {
            line("codec_endpoint", ep.clone());
        }
        line("latent_dim", self.latent_dim.to_string());
        line("latent_mode", self.latent_mode.to_string());
        line("quant_bits", self.quant_bits.to_string());
        line("quant_range", format!("{},{}", self.quant_range.0, self.quant_range.1));
        line("patch_size", self.patch_size.to_string());
        line("seed", self.seed.to_string());
        line("output_dir", self.output_dir.display().to_string());
        line("plots", join(self.plots.iter().map(|k| k.name().to_string()).collect()));
        out
    }

    pub fn quant(&self) -> Result<QuantSpec> {
        QuantSpec::new(self.quant_bits, self.quant_range.0, self.quant_range.1)
    }

    pub fn link(&self) -> Result<LinkConfig> {
        Ok(LinkConfig {
            patch_size: self.patch_size,
            quant: self.quant()?,
            latent_mode: self.latent_mode,
        })
    }

    /// Checks everything that does not need the images; lists every violation.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.images.is_empty() {
            errors.push("images: empty".to_string());
        }
        if self.payload_lengths.is_empty() {
            errors.push("payload_lengths: empty".into());
        }
        if self.snr_db.is_empty() {
            errors.push("snr_db: empty".into());
        }
        if let Some(bad) = self.snr_db.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
            errors.push(format!("snr_db: {bad} is not usable"));
        }
        if self.channels.is_empty() {
            errors.push("channels: empty".into());
        }
        if self.trials == 0 {
            errors.push("trials: must be at least 1".into());
        }
        if self.patch_size == 0 {
            errors.push("patch_size: must be positive".into());
        }
        if self.latent_dim == 0 {
            errors.push("latent_dim: must be positive".into());
        }
        if let Err(e) = self.quant() {
            errors.push(format!("quant: {e}"));
        }
        for img in &self.images {
            if let ImageSource::Synthetic { height, width, .. } = img {
                let p = self.patch_size.max(1);
                if *height == 0 || *width == 0 || height % p != 0 || width % p != 0 {
                    errors.push(format!("images: {} not divisible into {p}-pixel patches", img.label()));
                    continue;
                }
                let n = (height / p) * (width / p);
                for &l in self.payload_lengths.iter().filter(|&&l| l > n) {
                    errors.push(format!("payload_lengths: {l} exceeds N={n} for {}", img.label()));
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn record_count(&self) -> usize {
        self.images.len() * self.payload_lengths.len() * self.trials * self.snr_db.len() * self.channels.len()
    }
}

/// One row of `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub image: String,
    pub payload_len: usize,
    pub snr_db: f64,
    pub channel: ChannelKind,
    pub trial: usize,
    pub seed: u64,
    pub masked: usize,
    pub ber: f64,
    pub psnr_db: f64,
    pub ms_ssim: f64,
    pub bits_proposed: u64,
    pub frame_lost: bool,
    pub wallclock_s: f64,
}

/// Bit errors over the sent length; bits missing from `received` count as errors.
pub fn payload_ber(sent: &[bool], received: &[bool]) -> f64 {
    if sent.is_empty() {
        return 0.0;
    }
    let missing = sent.len().saturating_sub(received.len());
    (bit_errors(sent, received) + missing) as f64 / sent.len() as f64
}

/// Builds the configured codec; a remote codec is connected and checked now.
pub fn build_codec(cfg: &ExperimentConfig, n: usize) -> Result<Box<dyn Codec>> {
    match cfg.codec {
        CodecChoice::Reference => Ok(Box::new(ReferenceCodec::new(cfg.latent_dim))),
        CodecChoice::Remote => {
            let ep = match &cfg.codec_endpoint {
                Some(ep) => ep.clone(),
                None => std::env::var(ENDPOINT_ENV)
                    .map_err(|_| Error::Remote(format!("no codec_endpoint configured and {ENDPOINT_ENV} unset")))?,
            };
            let codec = RemoteCodec::connect(&ep)?;
            codec.validate(cfg.patch_size, n)?;
            Ok(Box::new(codec))
        }
    }
}

/// Runs the sweep with the configured codec, writing `trials.csv` and plots
/// into the output directory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let images = load_images(cfg)?;
    let n = Geometry::of(&images[0], cfg.patch_size)?.grid.n();
    let codec = build_codec(cfg, n)?;
    let records = run_sweep_with(cfg, &images, codec.as_ref())?;
    emit_plots(&records, &cfg.plots, &cfg.output_dir)?;
    Ok(records)
}

/// Loads every image and checks payload lengths against its patch count.
pub fn load_images(cfg: &ExperimentConfig) -> Result<Vec<Image>> {
    let mut errors = Vec::new();
    let mut images = Vec::new();
    for src in &cfg.images {
        match src
            .load()
            .and_then(|img| Geometry::of(&img, cfg.patch_size).map(|g| (img, g)))
        {
            Ok((img, g)) => {
                let n = g.grid.n();
                for &l in cfg.payload_lengths.iter().filter(|&&l| l > n) {
                    errors.push(format!("payload_lengths: {l} exceeds N={n} for {}", src.label()));
                }
                images.push(img);
            }
            Err(e) => errors.push(format!("images: {}: {e}", src.label())),
        }
    }
    if errors.is_empty() {
        Ok(images)
    } else {
        Err(Error::Config(errors))
    }
}

/// Runs every trial with `codec`, appending rows to `trials.csv` as they complete.
pub fn run_sweep_with(cfg: &ExperimentConfig, images: &[Image], codec: &dyn Codec) -> Result<Vec<TrialRecord>> {
    let link = cfg.link()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let path = cfg.output_dir.join(TRIALS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut writer = csv::Writer::from_writer(file);

    let lengths = cfg.payload_lengths.len();
    let points = cfg.snr_db.len() * cfg.channels.len();
    let units: Vec<(usize, usize, usize)> = (0..images.len())
        .flat_map(|i| (0..lengths).flat_map(move |j| (0..cfg.trials).map(move |t| (i, j, t))))
        .collect();
    let payload_master = derive_seed(cfg.seed, PAYLOAD_STREAM);
    let chunk = rayon::current_num_threads().max(1) * 4;
    let mut all = Vec::with_capacity(cfg.record_count());

    for batch in units.chunks(chunk) {
        let results: Vec<Result<Vec<TrialRecord>>> = batch
            .par_iter()
            .map(|&(i, j, t)| {
                let unit = ((i * lengths + j) * cfg.trials + t) as u64;
                let len = cfg.payload_lengths[j];
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(payload_master, unit));
                let payload = BitPayload::random(len, &mut rng);
                let mut out = Vec::with_capacity(points);
                for (s, &snr) in cfg.snr_db.iter().enumerate() {
                    for (c, &kind) in cfg.channels.iter().enumerate() {
                        let k = unit * points as u64 + (s * cfg.channels.len() + c) as u64;
                        let ch = ChannelConfig::new(kind, snr, derive_seed(cfg.seed, k))?;
                        out.push(run_trial(
                            &cfg.images[i].label(),
                            &images[i],
                            &payload,
                            codec,
                            &link,
                            &ch,
                            t,
                        )?);
                    }
                }
                Ok(out)
            })
            .collect();
        for rows in results {
            for r in rows? {
                writer.serialize(&r)?;
                all.push(r);
            }
        }
        writer.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(all)
}

fn run_trial(
    label: &str,
    img: &Image,
    payload: &BitPayload,
    codec: &dyn Codec,
    link: &LinkConfig,
    ch: &ChannelConfig,
    trial: usize,
) -> Result<TrialRecord> {
    let start = Instant::now();
    let (frame, decoded) = run_link(img, payload, codec, link, ch)?;
    let bits_proposed = frame.cost(&link.quant).total() as u64;
    let (ber, psnr_db, ms, lost) = match decoded {
        Ok(d) => (
            payload_ber(payload.bits(), d.payload.bits()),
            psnr(img, &d.image)?,
            ms_ssim(img, &d.image)?,
            false,
        ),
        Err(Error::FrameLost(_)) => (f64::NAN, f64::NAN, f64::NAN, true),
        Err(e) => return Err(e),
    };
    Ok(TrialRecord {
        image: label.to_string(),
        payload_len: payload.len(),
        snr_db: ch.snr_db,
        channel: ch.kind,
        trial,
        seed: ch.seed,
        masked: payload.popcount(),
        ber,
        psnr_db,
        ms_ssim: ms,
        bits_proposed,
        frame_lost: lost,
        wallclock_s: start.elapsed().as_secs_f64(),
    })
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<Point>,
}

/// Mean and standard error of the mean (sample standard deviation / √n).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups records into plotted series. Lost frames and non-finite values are
/// left out.
pub fn aggregate(records: &[TrialRecord], kind: PlotKind) -> Vec<Series> {
    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.frame_lost) {
        let (label, x, y) = match kind {
            PlotKind::BerVsSnr => (format!("{} L_b={}", r.channel, r.payload_len), r.snr_db, r.ber),
            PlotKind::PsnrVsSnr => (format!("{} L_b={}", r.channel, r.payload_len), r.snr_db, r.psnr_db),
            PlotKind::MsSsimVsSnr => (format!("{} L_b={}", r.channel, r.payload_len), r.snr_db, r.ms_ssim),
            PlotKind::BerVsMasked => (format!("{} {} dB", r.channel, r.snr_db), r.masked as f64, r.ber),
        };
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        // order-preserving key for f64 x values
        let key = if x >= 0.0 {
            x.to_bits() ^ (1 << 63)
        } else {
            !x.to_bits()
        };
        groups
            .entry(label)
            .or_default()
            .entry(key)
            .or_insert_with(|| (x, Vec::new()))
            .1
            .push(y);
    }
    groups
        .into_iter()
        .map(|(label, pts)| Series {
            label,
            points: pts
                .into_values()
                .map(|(x, ys)| {
                    let (mean, stderr) = mean_stderr(&ys);
                    Point {
                        x,
                        mean,
                        stderr,
                        count: ys.len(),
                    }
                })
                .collect(),
        })
        .collect()
}

/// Writes one SVG per kind into `dir` and returns the paths.
pub fn emit_plots(records: &[TrialRecord], kinds: &[PlotKind], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Config(vec!["no records to plot".into()]));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for &kind in kinds {
        let path = dir.join(format!("{}.svg", kind.name()));
        let svg = render_svg(kind, &aggregate(records, kind));
        let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(svg.as_bytes()).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const BER_FLOOR: f64 = 1e-7;

fn axis_labels(kind: PlotKind) -> (&'static str, &'static str) {
    match kind {
        PlotKind::BerVsSnr => ("SNR (dB)", "BER"),
        PlotKind::PsnrVsSnr => ("SNR (dB)", "PSNR (dB)"),
        PlotKind::MsSsimVsSnr => ("SNR (dB)", "MS-SSIM"),
        PlotKind::BerVsMasked => ("masked patches", "BER"),
    }
}

/// Line plot with error bars. BER axes are logarithmic with zero drawn at
/// the floor; each marker carries its exact values as data attributes.
pub fn render_svg(kind: PlotKind, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 180.0, 30.0, 50.0);
    let log = matches!(kind, PlotKind::BerVsSnr | PlotKind::BerVsMasked);
    let ty = |v: f64| if log { v.max(BER_FLOOR).log10() } else { v };

    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(ty(p.mean - p.stderr));
        y1 = y1.max(ty(p.mean + p.stderr));
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if log {
        y0 = y0.floor();
        y1 = y1.ceil();
    }
    if x1 - x0 < 1e-12 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (ty(y) - y0) / (y1 - y0) * (h - top - bottom);
    let py_raw = |t: f64| h - bottom - (t - y0) / (y1 - y0) * (h - top - bottom);

    let (xl, yl) = axis_labels(kind);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, kind.name());
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for k in 0..=4 {
        let xv = x0 + (x1 - x0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(xv),
            h - bottom + 16.0,
            trim_num(xv)
        );
    }
    let ticks: Vec<f64> = if log {
        (y0 as i64..=y1 as i64).map(|e| e as f64).collect()
    } else {
        (0..=4).map(|k| y0 + (y1 - y0) * k as f64 / 4.0).collect()
    };
    for t in ticks {
        let label = if log { format!("1e{}", t as i64) } else { trim_num(t) };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#,
            left - 6.0,
            py_raw(t) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">{xl}</text>"#,
        (left + w - right) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{yl}</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    );

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<g class="series" data-label="{}" stroke="{color}" fill="{color}">"#,
            ser.label
        );
        let line: Vec<String> = ser
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.x), py(p.mean)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none"/>"#, line.join(" "));
        for p in &ser.points {
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"#,
                py(p.mean - p.stderr),
                py(p.mean + p.stderr),
                x = px(p.x)
            );
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" data-x="{}" data-mean="{}" data-stderr="{}" data-n="{}"/>"#,
                px(p.x),
                py(p.mean),
                p.x,
                p.mean,
                p.stderr,
                p.count
            );
        }
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" stroke="none">{}</text>"#,
            w - right + 12.0,
            ly + 4.0,
            ser.label
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
