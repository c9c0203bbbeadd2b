use std::collections::BTreeMap;
use std::fs;

use semcom::channel::ChannelKind;
use semcom::harness::{
    aggregate, emit_plots, mean_stderr, read_records, run_sweep, CodecChoice, ExperimentConfig, ImageSource, PlotKind,
    TRIALS_FILE,
};
use semcom::Error;

fn small(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        images: vec![
            ImageSource::Synthetic {
                height: 64,
                width: 64,
                seed: 1,
            },
            ImageSource::Synthetic {
                height: 64,
                width: 64,
                seed: 2,
            },
        ],
        payload_lengths: vec![4, 8, 12],
        snr_db: vec![10.0],
        channels: vec![ChannelKind::Awgn, ChannelKind::Rayleigh],
        trials: 5,
        output_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn grid_product_and_incremental_csv() {
    let dir = tempfile::tempdir().unwrap();
    let records = run_sweep(&small(dir.path())).unwrap();
    assert_eq!(records.len(), 60);
    let on_disk = read_records(dir.path().join(TRIALS_FILE)).unwrap();
    assert_eq!(on_disk.len(), 60);
    let mut keys: Vec<_> = on_disk
        .iter()
        .map(|r| {
            (
                r.image.clone(),
                r.payload_len,
                r.snr_db.to_bits(),
                r.channel.to_string(),
                r.trial,
            )
        })
        .collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 60);
    for kind in PlotKind::ALL {
        assert!(dir.path().join(format!("{}.svg", kind.name())).exists());
    }
}

#[test]
fn noiseless_point_has_zero_ber() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        payload_lengths: vec![100],
        snr_db: vec![f64::INFINITY],
        trials: 1,
        output_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let r = run_sweep(&cfg).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].ber, 0.0);
    assert!(!r[0].frame_lost);
    let csv = fs::read_to_string(dir.path().join(TRIALS_FILE)).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",inf,"), "{csv}");
}

fn strip_wallclock(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn same_seed_same_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = small(a.path());
    cfg.snr_db = vec![0.0, 5.0];
    cfg.latent_mode = semcom::frame::LatentMode::Digital;
    run_sweep(&cfg).unwrap();
    cfg.output_dir = b.path().to_path_buf();
    run_sweep(&cfg).unwrap();
    let read = |d: &tempfile::TempDir| fs::read_to_string(d.path().join(TRIALS_FILE)).unwrap();
    assert_eq!(strip_wallclock(&read(&a)), strip_wallclock(&read(&b)));

    cfg.seed = 1;
    run_sweep(&cfg).unwrap();
    assert_ne!(strip_wallclock(&read(&a)), strip_wallclock(&read(&b)));
}

fn svg_points(svg: &str) -> Vec<(f64, f64, f64)> {
    let attr = |tag: &str, name: &str| -> f64 {
        let key = format!("{name}=\"");
        let start = tag.find(&key).unwrap() + key.len();
        tag[start..].split('"').next().unwrap().parse().unwrap()
    };
    svg.lines()
        .filter(|l| l.contains("<circle"))
        .map(|l| (attr(l, "data-x"), attr(l, "data-mean"), attr(l, "data-stderr")))
        .collect()
}

#[test]
fn plotted_means_match_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        images: vec![ImageSource::Synthetic {
            height: 64,
            width: 64,
            seed: 3,
        }],
        payload_lengths: vec![10],
        snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
        trials: 6,
        output_dir: dir.path().to_path_buf(),
        plots: vec![PlotKind::BerVsSnr, PlotKind::PsnrVsSnr],
        ..Default::default()
    };
    run_sweep(&cfg).unwrap();

    // recompute straight from the CSV text
    let text = fs::read_to_string(dir.path().join(TRIALS_FILE)).unwrap();
    let mut rows = text.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (snr_c, ber_c, psnr_c, lost_c) = (col("snr_db"), col("ber"), col("psnr_db"), col("frame_lost"));
    let mut ber: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    let mut ps: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for line in rows {
        let f: Vec<&str> = line.split(',').collect();
        if f[lost_c] == "true" {
            continue;
        }
        let snr = f[snr_c].parse::<f64>().unwrap() as i64;
        ber.entry(snr).or_default().push(f[ber_c].parse().unwrap());
        let p: f64 = f[psnr_c].parse().unwrap();
        if p.is_finite() {
            ps.entry(snr).or_default().push(p);
        }
    }

    for (kind, expected) in [(PlotKind::BerVsSnr, ber), (PlotKind::PsnrVsSnr, ps)] {
        let svg = fs::read_to_string(dir.path().join(format!("{}.svg", kind.name()))).unwrap();
        let pts = svg_points(&svg);
        assert_eq!(pts.len(), expected.len(), "{}", kind.name());
        for ((x, mean, se), (snr, vals)) in pts.iter().zip(&expected) {
            assert_eq!(*x as i64, *snr);
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            assert!((mean - m).abs() <= 1e-12 * m.abs().max(1.0), "{mean} vs {m}");
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            assert!((se - (var / n).sqrt()).abs() <= 1e-12);
        }
    }
    assert!(!dir.path().join("ber_vs_masked.svg").exists());
}

#[test]
fn ber_vs_masked_series_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.plots = vec![PlotKind::BerVsMasked];
    let records = run_sweep(&cfg).unwrap();
    let series = aggregate(&records, PlotKind::BerVsMasked);
    assert_eq!(series.len(), 2);
    for s in &series {
        assert!(s.points.windows(2).all(|w| w[0].x < w[1].x));
        assert!(s.points.iter().all(|p| p.x <= 12.0));
    }
    let svg = fs::read_to_string(dir.path().join("ber_vs_masked.svg")).unwrap();
    assert!(svg.contains("masked patches"));
}

#[test]
fn five_snr_points_per_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        images: vec![ImageSource::Synthetic {
            height: 32,
            width: 32,
            seed: 1,
        }],
        payload_lengths: vec![2],
        trials: 2,
        output_dir: dir.path().to_path_buf(),
        plots: vec![PlotKind::BerVsSnr],
        ..Default::default()
    };
    let records = run_sweep(&cfg).unwrap();
    let series = aggregate(&records, PlotKind::BerVsSnr);
    assert_eq!(series.len(), 1);
    assert_eq!(series[0].points.len(), 5);
    let paths = emit_plots(&records, &[PlotKind::BerVsSnr], dir.path()).unwrap();
    assert_eq!(paths.len(), 1);
    assert_eq!(svg_points(&fs::read_to_string(&paths[0]).unwrap()).len(), 5);
    let (m, _) = mean_stderr(
        &records
            .iter()
            .filter(|r| r.snr_db == 0.0 && !r.frame_lost)
            .map(|r| r.ber)
            .collect::<Vec<_>>(),
    );
    assert_eq!(series[0].points[0].mean, m);
}

#[test]
fn empty_records_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        emit_plots(&[], &[PlotKind::BerVsSnr], dir.path()),
        Err(Error::Config(_))
    ));
}

#[test]
fn bad_config_lists_all_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        images: vec![ImageSource::Synthetic {
            height: 32,
            width: 32,
            seed: 0,
        }],
        payload_lengths: vec![2, 5, 9],
        channels: vec![],
        trials: 0,
        output_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let Err(Error::Config(v)) = run_sweep(&cfg) else {
        panic!()
    };
    // two lengths over N=4, empty channels, zero trials
    assert_eq!(v.len(), 4, "{v:?}");
    assert!(!dir.path().join(TRIALS_FILE).exists());

    let cfg = ExperimentConfig {
        images: vec![ImageSource::File(dir.path().join("missing.png"))],
        output_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    assert!(matches!(run_sweep(&cfg), Err(Error::Config(_))));
}

#[test]
fn unreachable_remote_codec_fails_fast() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let cfg = ExperimentConfig {
        codec: CodecChoice::Remote,
        codec_endpoint: Some(format!("127.0.0.1:{port}")),
        output_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    assert!(matches!(run_sweep(&cfg), Err(Error::Remote(_))));
    assert!(!dir.path().join(TRIALS_FILE).exists());
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.cfg");
    let cfg = small(dir.path());
    fs::write(&path, cfg.to_text()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
}
