//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use semcom::bitmap::{BitPayload, MaskPattern};
use semcom::channel::{demodulate_bpsk, equalize, modulate_bpsk, transmit, ChannelConfig, ChannelKind};
use semcom::codec::{Geometry, ReferenceCodec};
use semcom::frame::{run_link, LinkConfig};
use semcom::imaging::{extract_patch, synthetic_image, Image};
use semcom::metrics::{ms_ssim, psnr};
use semcom::overhead::{compression_ratio, overhead_direct, overhead_minimal, overhead_proposed};
use semcom::sparse::{sparse_decode, sparse_encode};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Gaussian tail probability by composite Simpson integration of the density.
fn q_oracle(x: f64) -> f64 {
    let upper = x + 40.0;
    let steps = 200_000;
    let h = (upper - x) / steps as f64;
    let pdf = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = pdf(x) + pdf(upper);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * pdf(x + k as f64 * h);
    }
    sum * h / 3.0
}

fn digital_round_trip() -> Outcome {
    let start = Instant::now();
    let codec = ReferenceCodec::new(48);
    let cfg = LinkConfig::default();
    let trials_per_len = 13;
    let failures: usize = (0..=156usize)
        .into_par_iter()
        .map(|len| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + len as u64);
            let mut bad = 0;
            for _ in 0..trials_per_len {
                let img = synthetic_image(224, 224, rng.random());
                let p = BitPayload::random(len, &mut rng);
                let ch = ChannelConfig::noiseless(ChannelKind::Awgn);
                match run_link(&img, &p, &codec, &cfg, &ch) {
                    Ok((_, Ok(d))) if d.payload == p => {}
                    _ => bad += 1,
                }
            }
            bad
        })
        .sum();
    let trials = 157 * trials_per_len;
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && trials >= 2000 && elapsed <= Duration::from_secs(120),
        format!("{trials} trials, {failures} mismatches, {:.1} s", elapsed.as_secs_f64()),
    )
}

/// `ids_restore[i]` is patch `i`'s slot when visible patches come first, both groups ascending.
fn visible_first_oracle(mask: &MaskPattern) -> Vec<usize> {
    let mut order: Vec<usize> = (0..mask.len()).filter(|&i| !mask.get(i)).collect();
    order.extend((0..mask.len()).filter(|&i| mask.get(i)));
    let mut restore = vec![0; mask.len()];
    for (slot, &patch) in order.iter().enumerate() {
        restore[patch] = slot;
    }
    restore
}

fn algorithm_oracle() -> Outcome {
    let start = Instant::now();
    let mut bad = 0;
    for m in 0u32..256 {
        let mask: MaskPattern = (0..8).map(|i| (m >> (7 - i)) & 1 == 1).collect();
        let set = sparse_encode(&mask);
        let Ok((back, restore)) = sparse_decode(&set) else {
            bad += 1;
            continue;
        };
        if back != mask || restore.ids_restore() != visible_first_oracle(&mask).as_slice() {
            bad += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        bad == 0 && elapsed < Duration::from_secs(1),
        format!("256 masks, {bad} mismatches, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn sparse_length_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(196);
    let mut violations = 0;
    for _ in 0..10_000 {
        let density: f64 = rng.random();
        let mask: MaskPattern = (0..196).map(|_| rng.random_bool(density)).collect();
        let pop = mask.popcount();
        if sparse_encode(&mask).indices().len() != pop.min(196 - pop) {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("10000 masks, {violations} violations"))
}

fn channel_calibration() -> Outcome {
    let start = Instant::now();
    let bits_per_point = 1_000_000;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for (k, snr) in [0.0, 2.0, 4.0, 6.0, 8.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + k as u64);
        let bits: Vec<bool> = (0..bits_per_point).map(|_| rng.random()).collect();
        let cfg = ChannelConfig::new(ChannelKind::Awgn, snr, 500 + k as u64).unwrap();
        let rx = transmit(&modulate_bpsk(&bits), &cfg);
        let (eq, erasures) = equalize(&rx);
        let got = demodulate_bpsk(&eq, &erasures);
        let errors = bits.iter().zip(&got).filter(|(a, b)| a != b).count();
        let measured = errors as f64 / bits_per_point as f64;
        let expected = q_oracle((2.0 * 10f64.powf(snr / 10.0)).sqrt());
        let se = (expected * (1.0 - expected) / bits_per_point as f64).sqrt();
        let z = (measured - expected).abs() / se;
        worst = worst.max(z);
        notes.push(format!("{snr} dB {measured:.3e}/{expected:.3e}"));
    }

    let cfg = ChannelConfig::new(ChannelKind::Rayleigh, 10.0, 77).unwrap();
    let rx = transmit(&modulate_bpsk(&vec![false; 1_000_000]), &cfg);
    let gains = rx.fading.unwrap();
    let power = gains.iter().map(|h| h.norm_sqr()).sum::<f64>() / gains.len() as f64;
    let elapsed = start.elapsed();
    outcome(
        worst <= 3.0 && (power - 1.0).abs() <= 0.01 && elapsed <= Duration::from_secs(60),
        format!(
            "max |z| {worst:.2} [{}], Rayleigh E|h|^2 {power:.4}, {:.1} s",
            notes.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn ber_shape() -> Outcome {
    let codec = ReferenceCodec::new(48);
    let cfg = LinkConfig::default();
    let img = synthetic_image(224, 224, 4);
    let len = 100;
    let mut means = Vec::new();
    let mut ses = Vec::new();
    let mut notes = Vec::new();
    for (k, snr) in [0.0, 5.0, 10.0, 15.0, 20.0].into_iter().enumerate() {
        let trials = if snr >= 20.0 { 1000 } else { 300 };
        let results: Vec<(f64, bool)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(((k as u64) << 32) | t as u64);
                let p = BitPayload::random(len, &mut rng);
                let ch = ChannelConfig::new(ChannelKind::Awgn, snr, rng.random()).unwrap();
                let (_, d) = run_link(&img, &p, &codec, &cfg, &ch).unwrap();
                match d {
                    Ok(d) => (semcom::harness::payload_ber(p.bits(), d.payload.bits()), false),
                    // a lost frame leaves the receiver guessing
                    Err(_) => (0.5, true),
                }
            })
            .collect();
        let bers: Vec<f64> = results.iter().map(|r| r.0).collect();
        let lost = results.iter().filter(|r| r.1).count();
        let (m, se) = semcom::harness::mean_stderr(&bers);
        notes.push(format!("{snr} dB {m:.2e}±{se:.1e} ({lost} lost)"));
        means.push(m);
        ses.push(se);
    }
    let monotone = (1..means.len()).all(|k| means[k] <= means[k - 1] + (ses[k].powi(2) + ses[k - 1].powi(2)).sqrt());
    outcome(monotone && means[4] <= 1e-4, notes.join(", "))
}

fn overhead_arithmetic() -> Outcome {
    let direct = overhead_direct(224, 224, 3, 16, 150);
    let rel = (direct as f64 - 24.0860e5).abs() / 24.0860e5;
    let rows = [(1.5030, 6.24), (1.5063, 6.25), (2.0080, 8.34)];
    let ratios_ok = rows
        .iter()
        .all(|&(bits, pct)| (compression_ratio(bits, 24.0848) * 100.0 * 100.0).round() / 100.0 == pct);
    let decreasing = (1..=196u64)
        .all(|l| overhead_minimal(196, l, 384, 1000).unwrap() < overhead_minimal(196, l - 1, 384, 1000).unwrap());
    outcome(
        direct == 2_408_598 && rel <= 1e-5 && ratios_ok && decreasing,
        format!("direct {direct} (rel {rel:.2e}), ratios ok {ratios_ok}, minimal decreasing {decreasing}"),
    )
}

fn formula_consistency() -> Outcome {
    let mut bad = 0;
    for (l_e, l_m) in [(384u64, 1000u64), (1, 0), (6144, 1657)] {
        for l_b in 0..=196u64 {
            let ratio = l_b as f64 / 196.0;
            if overhead_proposed(196, ratio, l_e, l_m) != overhead_minimal(196, l_b, l_e, l_m).unwrap() {
                bad += 1;
            }
        }
    }
    outcome(bad == 0, format!("{} cases, {bad} mismatches", 3 * 197))
}

fn lossless_visible_path() -> Outcome {
    let codec = ReferenceCodec::new(768);
    let cfg = LinkConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(768);
    let mut bad_patches = 0;
    let mut checked = 0;
    for kind in [ChannelKind::Awgn, ChannelKind::Rayleigh] {
        for len in [1usize, 40, 100, 156] {
            let img = synthetic_image(224, 224, rng.random());
            let p = BitPayload::random(len, &mut rng);
            let (_, d) = run_link(&img, &p, &codec, &cfg, &ChannelConfig::noiseless(kind)).unwrap();
            let d = d.unwrap();
            let grid = Geometry::of(&img, 16).unwrap().grid;
            for n in (0..grid.n()).filter(|&n| !d.mask.get(n)) {
                checked += 1;
                if extract_patch(&d.image, &grid, n) != extract_patch(&img, &grid, n) {
                    bad_patches += 1;
                }
            }
        }
    }
    let img = synthetic_image(224, 224, 11);
    let (_, d) = run_link(
        &img,
        &BitPayload::default(),
        &codec,
        &cfg,
        &ChannelConfig::noiseless(ChannelKind::Awgn),
    )
    .unwrap();
    let whole = d.map(|d| d.image == img).unwrap_or(false);
    outcome(
        bad_patches == 0 && whole,
        format!("{checked} visible patches, {bad_patches} differ; L_b=0 image exact {whole}"),
    )
}

fn metric_sanity() -> Outcome {
    let a = synthetic_image(224, 224, 21);
    let b = synthetic_image(224, 224, 22);
    let self_ssim = ms_ssim(&a, &a).unwrap();
    let flat = Image::filled(3, 64, 64, 100).unwrap();
    let shifted = Image::filled(3, 64, 64, 116).unwrap();
    let p = psnr(&flat, &shifted).unwrap();
    let p_sym = psnr(&shifted, &flat).unwrap();
    let s_ab = ms_ssim(&a, &b).unwrap();
    let s_ba = ms_ssim(&b, &a).unwrap();
    let pass = (self_ssim - 1.0).abs() <= 1e-9 && (p - 24.05).abs() <= 0.01 && p == p_sym && s_ab == s_ba;
    outcome(
        pass,
        format!(
            "MS-SSIM(a,a) {self_ssim:.12}, PSNR {p:.6} dB, symmetric {}",
            p == p_sym && s_ab == s_ba
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("digital round-trip", digital_round_trip),
        ("sparse encode/decode oracle equivalence", algorithm_oracle),
        ("sparse length bound", sparse_length_bound),
        ("channel calibration", channel_calibration),
        ("payload BER vs SNR shape", ber_shape),
        ("overhead arithmetic", overhead_arithmetic),
        ("overhead formula consistency", formula_consistency),
        ("lossless visible path", lossless_visible_path),
        ("metric sanity", metric_sanity),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
