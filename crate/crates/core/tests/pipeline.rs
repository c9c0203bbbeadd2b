use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use semcom::bitmap::BitPayload;
use semcom::channel::{ChannelConfig, ChannelKind};
use semcom::codec::{Geometry, QuantSpec, ReferenceCodec};
use semcom::frame::{
    run_link, sem_decode, sem_encode, transmit_frame, Frame, LatentMode, LinkConfig, ReceivedFrame, HEADER_ON_AIR_BITS,
};
use semcom::imaging::{load_image, synthetic_image};
use semcom::metrics::{bit_errors, psnr};
use semcom::overhead::{overhead_minimal, overhead_proposed};
use semcom::sparse::serialized_len;
use semcom::Error;

#[test]
fn noiseless_round_trip_every_length() {
    let codec = ReferenceCodec::new(48);
    let failures: usize = (0..1000u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(t);
            let len = rng.random_range(0..=156);
            let mode = if t % 2 == 0 {
                LatentMode::Analog
            } else {
                LatentMode::Digital
            };
            let kind = if t % 3 == 0 {
                ChannelKind::Rayleigh
            } else {
                ChannelKind::Awgn
            };
            let cfg = LinkConfig {
                latent_mode: mode,
                ..Default::default()
            };
            let img = synthetic_image(224, 224, rng.random());
            let p = BitPayload::random(len, &mut rng);
            let (_, d) = run_link(&img, &p, &codec, &cfg, &ChannelConfig::noiseless(kind)).unwrap();
            usize::from(d.unwrap().payload != p)
        })
        .sum();
    assert_eq!(failures, 0);
}

#[test]
fn frame_cost_equals_overhead_prediction() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let img = synthetic_image(224, 224, 31);
    for (dim, bits) in [(48usize, 8u32), (768, 8), (12, 4)] {
        let codec = ReferenceCodec::new(dim);
        let cfg = LinkConfig {
            quant: QuantSpec::new(bits, 0.0, 1.0).unwrap(),
            ..Default::default()
        };
        for len in (0..=156).step_by(13) {
            let p = BitPayload::random(len, &mut rng);
            let f = sem_encode(&img, &p, &codec, &cfg).unwrap();
            let pop = p.popcount() as u64;
            let l_e = (dim as u64) * u64::from(bits);
            let l_m =
                serialized_len(196, (pop as usize).min(196 - pop as usize)) as u64 + HEADER_ON_AIR_BITS as u64 + l_e;
            let cost = f.cost(&cfg.quant);
            assert_eq!(
                cost.total() as u64,
                overhead_proposed(196, pop as f64 / 196.0, l_e, l_m)
            );
            assert_eq!(cost.total() as u64, overhead_minimal(196, pop, l_e, l_m).unwrap());
        }
    }
}

#[test]
fn high_snr_payload_ber() {
    let codec = ReferenceCodec::new(48);
    let cfg = LinkConfig::default();
    let img = synthetic_image(224, 224, 2);
    let (errors, bits): (usize, usize) = (0..1000u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(t + 7);
            let p = BitPayload::random(100, &mut rng);
            let ch = ChannelConfig::new(ChannelKind::Awgn, 20.0, rng.random()).unwrap();
            let (_, d) = run_link(&img, &p, &codec, &cfg, &ch).unwrap();
            let got = d.map(|d| d.payload).unwrap_or_default();
            (
                bit_errors(p.bits(), got.bits()) + p.len().saturating_sub(got.len()),
                p.len(),
            )
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    assert_eq!(bits, 100_000);
    assert!(errors as f64 / bits as f64 <= 1e-4, "{errors} errors");
}

#[test]
fn image_quality_improves_with_snr() {
    let codec = ReferenceCodec::new(48);
    let cfg = LinkConfig::default();
    let img = synthetic_image(224, 224, 3);
    let p = BitPayload::new((0..60).map(|i| i % 2 == 0).collect());
    let mean_psnr = |snr: f64| {
        (0..10)
            .map(|s| {
                let ch = ChannelConfig::new(ChannelKind::Awgn, snr, s).unwrap();
                psnr(&img, &run_link(&img, &p, &codec, &cfg, &ch).unwrap().1.unwrap().image).unwrap()
            })
            .sum::<f64>()
            / 10.0
    };
    let (lo, hi) = (mean_psnr(5.0), mean_psnr(25.0));
    assert!(hi > lo, "{lo} vs {hi}");
}

#[test]
fn corrupted_sideinfo_still_yields_image() {
    let codec = ReferenceCodec::new(48);
    let img = synthetic_image(224, 224, 4);
    let geometry = Geometry::of(&img, 16).unwrap();
    let p = BitPayload::new((0..100).map(|i| i % 5 == 0).collect());
    let f = sem_encode(&img, &p, &codec, &LinkConfig::default()).unwrap();
    for bit in 9..f.sideinfo.len() {
        let mut rx = ReceivedFrame::clean(&f);
        rx.sideinfo[bit] ^= true;
        let d = sem_decode(&rx, &codec, &geometry).unwrap();
        assert!(bit_errors(p.bits(), d.payload.bits()) > 0, "bit {bit}");
        assert!(d.image.same_shape(&img));
    }
}

#[test]
fn scframe_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let codec = ReferenceCodec::new(48);
    let cfg = LinkConfig::default();
    let img = synthetic_image(224, 224, 8);
    let p = BitPayload::from_bytes(b"hello, carrier");
    let f = sem_encode(&img, &p, &codec, &cfg).unwrap();
    let path = dir.path().join("a.scframe");
    std::fs::write(&path, f.to_scframe()).unwrap();
    let back = Frame::from_scframe(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(back.header, f.header);
    let geometry = Geometry::of(&img, 16).unwrap();
    let rx = transmit_frame(&back, &cfg, &ChannelConfig::noiseless(ChannelKind::Awgn)).unwrap();
    let d = sem_decode(&rx, &codec, &geometry).unwrap();
    assert_eq!(d.payload, p);
    assert_eq!(d.payload.to_bytes(), b"hello, carrier");

    let png = dir.path().join("out.png");
    d.image.save_png(&png).unwrap();
    assert_eq!(load_image(&png).unwrap(), d.image);
}

#[test]
fn low_snr_frames_can_be_lost() {
    let codec = ReferenceCodec::new(48);
    let img = synthetic_image(224, 224, 9);
    let p = BitPayload::new(vec![true; 50]);
    let lost = (0..50)
        .filter(|&s| {
            let ch = ChannelConfig::new(ChannelKind::Awgn, -5.0, s).unwrap();
            matches!(
                run_link(&img, &p, &codec, &LinkConfig::default(), &ch).unwrap().1,
                Err(Error::FrameLost(_))
            )
        })
        .count();
    assert!(lost > 0);
}
