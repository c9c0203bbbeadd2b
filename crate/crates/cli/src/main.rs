use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use semcom::bitmap::BitPayload;
use semcom::channel::{ChannelConfig, ChannelKind};
use semcom::codec::{Geometry, QuantSpec};
use semcom::frame::{sem_decode, sem_encode, transmit_frame, Frame, LatentMode, LinkConfig};
use semcom::harness::{build_codec, run_sweep, CodecChoice, ExperimentConfig, ImageSource, TRIALS_FILE};
use semcom::imaging::Image;
use semcom::overhead::{patch_count, OverheadInputs, OverheadReport, DEFAULT_BITS_PER_PIXEL};

/// Carrier-image semantic link simulator.
#[derive(Parser)]
#[command(name = "semcom", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encode an image and payload into a .scframe file.
    Send(SendArgs),
    /// Decode a .scframe file into an image and payload.
    Recv(RecvArgs),
    /// Run an experiment sweep.
    Sweep(SweepArgs),
    /// Print one overhead report row as CSV.
    Overhead(OverheadArgs),
}

#[derive(Args)]
struct CodecArgs {
    /// reference | remote
    #[arg(long, default_value = "reference")]
    codec: String,
    /// host:port of a remote codec server
    #[arg(long)]
    codec_endpoint: Option<String>,
    #[arg(long, default_value_t = 48)]
    latent_dim: usize,
    #[arg(long, default_value_t = 16)]
    patch_size: usize,
}

impl CodecArgs {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig {
            latent_dim: self.latent_dim,
            patch_size: self.patch_size,
            codec_endpoint: self.codec_endpoint.clone(),
            ..Default::default()
        };
        cfg.set("codec", &self.codec).map_err(anyhow::Error::msg)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SendArgs {
    /// Image file (PNG or PPM) or synthetic:HxW:seed
    #[arg(long)]
    image: String,
    /// Payload as a string of 0/1 characters
    #[arg(long, conflicts_with = "payload_file")]
    payload_bits: Option<String>,
    /// Payload as the bytes of a file, most significant bit first
    #[arg(long)]
    payload_file: Option<PathBuf>,
    #[command(flatten)]
    codec: CodecArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RecvArgs {
    input: PathBuf,
    #[command(flatten)]
    codec: CodecArgs,
    /// awgn | rayleigh
    #[arg(long, default_value = "awgn")]
    channel: ChannelKind,
    /// Channel SNR in dB; inf for a clean link
    #[arg(long, default_value_t = f64::INFINITY)]
    snr_db: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// analog | digital
    #[arg(long, default_value = "analog")]
    latent_mode: LatentMode,
    #[arg(long, default_value_t = 8)]
    quant_bits: u32,
    /// Image height; defaults to a square grid
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    /// Reconstructed image (PNG)
    #[arg(long)]
    image_out: PathBuf,
    /// Recovered payload bytes, most significant bit first
    #[arg(long)]
    payload_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Flat key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    images: Option<String>,
    #[arg(long)]
    payload_lengths: Option<String>,
    #[arg(long)]
    snr_db: Option<String>,
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    codec: Option<String>,
    #[arg(long)]
    codec_endpoint: Option<String>,
    #[arg(long)]
    latent_dim: Option<String>,
    #[arg(long)]
    latent_mode: Option<String>,
    #[arg(long)]
    quant_bits: Option<String>,
    #[arg(long)]
    quant_range: Option<String>,
    #[arg(long)]
    patch_size: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    plots: Option<String>,
}

impl SweepArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 15] {
        [
            ("images", &self.images),
            ("payload_lengths", &self.payload_lengths),
            ("snr_db", &self.snr_db),
            ("channels", &self.channels),
            ("trials", &self.trials),
            ("codec", &self.codec),
            ("codec_endpoint", &self.codec_endpoint),
            ("latent_dim", &self.latent_dim),
            ("latent_mode", &self.latent_mode),
            ("quant_bits", &self.quant_bits),
            ("quant_range", &self.quant_range),
            ("patch_size", &self.patch_size),
            ("seed", &self.seed),
            ("output_dir", &self.output_dir),
            ("plots", &self.plots),
        ]
    }
}

#[derive(Args)]
struct OverheadArgs {
    #[arg(long, default_value_t = 224)]
    width: u64,
    #[arg(long, default_value_t = 224)]
    height: u64,
    #[arg(long, default_value_t = 3)]
    channels: u64,
    #[arg(long, default_value_t = 16)]
    patch_size: u64,
    /// Patch count; defaults to the image area over the patch area
    #[arg(long)]
    n: Option<u64>,
    /// Mask ratio; defaults to L_b / N
    #[arg(long)]
    mask_ratio: Option<f64>,
    /// Latent bits per visible patch
    #[arg(long, default_value_t = 384)]
    l_e: u64,
    /// Fixed bits per frame
    #[arg(long, default_value_t = 0)]
    l_m: u64,
    #[arg(long, default_value_t = 0)]
    l_b: u64,
    #[arg(long, default_value_t = DEFAULT_BITS_PER_PIXEL)]
    bits_per_pixel: u64,
}

fn read_payload(bits: &Option<String>, file: &Option<PathBuf>) -> Result<BitPayload> {
    if let Some(path) = file {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(BitPayload::from_bytes(&bytes));
    }
    let text = bits.as_deref().unwrap_or("");
    text.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => bail!("payload bits must be 0 or 1, got {other:?}"),
        })
        .collect::<Result<Vec<bool>>>()
        .map(BitPayload::new)
}

fn send(a: SendArgs) -> Result<()> {
    let img = a.image.parse::<ImageSource>().map_err(anyhow::Error::msg)?.load()?;
    let payload = read_payload(&a.payload_bits, &a.payload_file)?;
    let cfg = a.codec.experiment()?;
    let n = Geometry::of(&img, cfg.patch_size)?.grid.n();
    let codec = build_codec(&cfg, n)?;
    let frame = sem_encode(&img, &payload, codec.as_ref(), &cfg.link()?)?;
    fs::write(&a.output, frame.to_scframe()).with_context(|| format!("writing {}", a.output.display()))?;
    let cost = frame.cost(&cfg.quant()?);
    eprintln!(
        "{}: N={} len_keep={} L_b={} bits={}",
        a.output.display(),
        frame.header.n,
        frame.header.len_keep,
        frame.header.payload_len,
        cost.total()
    );
    Ok(())
}

fn recv(a: RecvArgs) -> Result<()> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let frame = Frame::from_scframe(&bytes)?;
    let n = usize::from(frame.header.n);
    let p = a.codec.patch_size;
    let (h, w) = match (a.height, a.width) {
        (Some(h), Some(w)) => (h, w),
        (None, None) => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                bail!("N={n} is not a square grid; pass --height and --width");
            }
            (side * p, side * p)
        }
        _ => bail!("--height and --width go together"),
    };
    let mut cfg = a.codec.experiment()?;
    cfg.latent_dim = usize::from(frame.header.dim);
    let geometry = Geometry::of(&Image::filled(a.channels, h, w, 0)?, p)?;
    let codec = build_codec(&cfg, geometry.grid.n())?;
    let link = LinkConfig {
        patch_size: p,
        quant: QuantSpec::new(a.quant_bits, 0.0, 1.0)?,
        latent_mode: a.latent_mode,
    };
    let ch = ChannelConfig::new(a.channel, a.snr_db, a.seed)?;
    let rx = transmit_frame(&frame, &link, &ch)?;
    let d = sem_decode(&rx, codec.as_ref(), &geometry)?;
    d.image.save_png(&a.image_out)?;
    if let Some(path) = &a.payload_out {
        fs::write(path, d.payload.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    let bits: String = d.payload.bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
    println!("{bits}");
    if !d.flags.is_clean() {
        eprintln!("warning: side information damaged: {:?}", d.flags);
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let mut errors = Vec::new();
    for (key, value) in a.overrides() {
        if let Some(v) = value {
            if let Err(e) = cfg.set(key, v) {
                errors.push(format!("--{}: {e}", key.replace('_', "-")));
            }
        }
    }
    if !errors.is_empty() {
        return Err(semcom::Error::Config(errors).into());
    }
    if cfg.codec == CodecChoice::Remote {
        eprintln!("using remote codec");
    }
    let records = run_sweep(&cfg)?;
    let lost = records.iter().filter(|r| r.frame_lost).count();
    eprintln!(
        "{} records ({lost} frames lost) written to {}",
        records.len(),
        cfg.output_dir.join(TRIALS_FILE).display()
    );
    Ok(())
}

fn overhead(a: OverheadArgs) -> Result<()> {
    let n = a.n.unwrap_or_else(|| patch_count(a.width, a.height, a.patch_size));
    if a.l_b > n {
        bail!("l_b {} exceeds N={n}", a.l_b);
    }
    let report = OverheadReport::compute(&OverheadInputs {
        n,
        mask_ratio: a.mask_ratio.unwrap_or(a.l_b as f64 / n as f64),
        l_e: a.l_e,
        l_m: a.l_m,
        l_b: a.l_b,
        width: a.width,
        height: a.height,
        channels: a.channels,
        bits_per_pixel: a.bits_per_pixel,
    })?;
    report.write_csv(std::io::stdout().lock())?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Send(a) => send(a),
        Cmd::Recv(a) => recv(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Overhead(a) => overhead(a),
    }
}
