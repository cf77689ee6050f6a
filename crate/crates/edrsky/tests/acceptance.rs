//! End-to-end acceptance suite. Each test prints one `ACCEPTANCE n ...:
//! PASS/FAIL` line so the whole gate can be audited from the test log:
//! `cargo test --test acceptance -- --nocapture`.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edrsky::ann::{backward, train, MlpParameters, MlpSpec, Optimizer, TrainConfig, TrainLoss};
use edrsky::envmap::{
    clip_to_ev, directions, equalize_exposure, irradiance,
    light_samples, render_diffuse_sphere, solid_angles, ExposureValue, SkyangularGeometry,
};
use edrsky::image::{luminance_of, RadianceImage};
use edrsky::losses::{band_masks, l1, scale_invariant_loss, sensitivity_sweep, BandSpec};
use edrsky::pipeline::{downsample_pow2, retention_audit, rotate_about_zenith};
use edrsky::segmentation::{solar_position, CaptureMeta, ClassMask};
use edrsky::synthetic::{random_sky, sunny_sky, uniform_sky};
use edrsky::tonemap::{log_uniform_grid, TonemapOperator};

fn verdict(number: u32, name: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("ACCEPTANCE {number} {name}: PASS — {detail}"),
        Err(detail) => {
            println!("ACCEPTANCE {number} {name}: FAIL — {detail}");
            panic!("acceptance criterion {number} ({name}) failed: {detail}");
        }
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn criterion_01_solid_angle_conservation() {
    let start = Instant::now();
    let geom = SkyangularGeometry::new(512).unwrap();
    let total = solid_angles(&geom).total();
    let elapsed = start.elapsed();
    let rel = (total - TAU).abs() / TAU;
    let outcome = if rel <= 1e-3 && elapsed < Duration::from_secs(1) {
        Ok(format!("sum {total:.6} vs 2pi, rel err {rel:.2e}, {elapsed:?}"))
    } else {
        Err(format!("sum {total}, rel err {rel:.2e}, {elapsed:?}"))
    };
    verdict(1, "solid-angle conservation", outcome);
}

#[test]
fn criterion_02_tonemapper_bijectivity() {
    let ops = [
        TonemapOperator::Gamma { gamma: 2.2 },
        TonemapOperator::LogN { base: 2.0 },
        TonemapOperator::MuLaw { mu: 5000.0 },
        TonemapOperator::MuLawLog2 { mu: 5000.0 },
        TonemapOperator::DeepCloudsRecip,
    ];
    let grid = log_uniform_grid(0.0, 32768.0, 512);
    let mut worst = 0.0f64;
    let mut failure = None;
    for op in &ops {
        for &x in &grid {
            match op.inverse(op.forward(x)) {
                Ok(back) => {
                    let rel = (back - x).abs() / x.max(1e-9);
                    worst = worst.max(rel);
                    if rel > 1e-5 {
                        failure = Some(format!("{} at {x}: rel {rel:.2e}", op.name()));
                    }
                }
                Err(e) => failure = Some(format!("{} at {x}: {e}", op.name())),
            }
        }
    }
    let outcome = match failure {
        None => Ok(format!("5 operators x {} grid points, worst rel {worst:.2e}", grid.len())),
        Some(f) => Err(f),
    };
    verdict(2, "tonemapper bijectivity", outcome);
}

#[test]
fn criterion_03_deepclouds_spot_value() {
    let v = TonemapOperator::DeepCloudsRecip.forward(0.0);
    let outcome = if (v - 0.990099).abs() <= 1e-6 {
        Ok(format!("value {v:.9}"))
    } else {
        Err(format!("value {v:.9}, expected 0.990099 +/- 1e-6"))
    };
    verdict(3, "reciprocal compression at zero", outcome);
}

#[test]
fn criterion_04_scale_invariant_loss_vanishes() {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let img = random_sky(32, seed).unwrap();
        // Strictly positive everywhere (the border is zero).
        let img = img.map(|px| [px[0] + 0.01, px[1] + 0.01, px[2] + 0.01]);
        for alpha in [0.1, 1.0, 10.0] {
            let loss = scale_invariant_loss(&img, &img.scaled(alpha)).unwrap();
            worst = worst.max(loss.abs());
        }
    }
    let outcome = if worst <= 1e-9 {
        Ok(format!("worst |loss| {worst:.2e} over 5 images x 3 scales"))
    } else {
        Err(format!("worst |loss| {worst:.2e} exceeds 1e-9"))
    };
    verdict(4, "scale-invariant loss vanishes under scaling", outcome);
}

#[test]
fn criterion_05_cascade_partition_and_mask_degeneracy() {
    let n = 32;
    let geom = SkyangularGeometry::new(n).unwrap();
    let on_disc = ClassMask::new(
        n,
        n,
        (0..n * n).map(|i| geom.is_on_disc(i % n, i / n)).collect(),
        None,
    );
    let bands = BandSpec { ev_max: 15 };
    let mut checked = 0;
    let mut failure = None;
    for seed in 0..100u64 {
        let img = random_sky(n, seed).unwrap().scaled(2f64.powf((seed % 13) as f64));
        let counts: usize = band_masks(&img, bands, Some(&on_disc))
            .iter()
            .map(|m| m.count())
            .sum();
        if counts != on_disc.count() {
            failure = Some(format!("seed {seed}: band counts {counts} vs {}", on_disc.count()));
            break;
        }
        // Full-mask selective loss degenerates to the global loss bitwise.
        let other = random_sky(n, seed + 1000).unwrap();
        let full = ClassMask::full(n, n);
        let masked = l1(&img, &other, Some(&full)).unwrap().value;
        let global = l1(&img, &other, None).unwrap().value;
        if masked.to_bits() != global.to_bits() {
            failure = Some(format!("seed {seed}: masked {masked} != global {global}"));
            break;
        }
        checked += 1;
    }
    let outcome = match failure {
        None => Ok(format!("{checked} random images partition exactly and degenerate bitwise")),
        Some(f) => Err(f),
    };
    verdict(5, "cascade partition and mask degeneracy", outcome);
}

#[test]
fn criterion_06_truncation_sensitivity_contrast() {
    // Sun at 3.6% of pixels, 13.4 EV. The L1 comparison runs in the
    // tonemapped LDR space the training losses operate in; raw HDR L1 is
    // reported alongside for reference.
    let img = sunny_sky(256, 0.036, 13.4, 135.0, 45.0).unwrap();
    let omega = solid_angles(&SkyangularGeometry::new(256).unwrap());
    let rows = sensitivity_sweep(
        &img,
        &omega,
        BandSpec { ev_max: 15 },
        &TonemapOperator::MuLawLog2 { mu: 5000.0 },
    )
    .unwrap();
    let at = |t: u32| rows.iter().find(|r| r.truncation_ev == t).unwrap();
    let (r12, r15) = (at(12), at(15));
    let l1_change = (r12.l1_ldr - r15.l1_ldr).abs();
    let illum_change = (r15.illumination_ratio - r12.illumination_ratio).abs();
    let outcome = if l1_change < 0.01 && illum_change >= 0.20 {
        Ok(format!(
            "LDR L1 change {l1_change:.4} (< 0.01) vs illumination change {illum_change:.2} \
             (>= 0.20); HDR L1 at t=12: {:.1}",
            r12.l1_hdr
        ))
    } else {
        Err(format!("LDR L1 change {l1_change:.4}, illumination change {illum_change:.2}"))
    };
    verdict(6, "loss insensitivity to sun truncation", outcome);
}

#[test]
fn criterion_07_downsampling_retention() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut corpus: Vec<RadianceImage> = (0..4).map(|s| random_sky(256, s).unwrap()).collect();
    corpus.push(sunny_sky(256, 0.036, 13.4, 45.0, 30.0).unwrap());
    let mut worst = f64::INFINITY;
    for img in &corpus {
        let angle = rng.gen_range(0.0..360.0);
        let rotated = rotate_about_zenith(img, angle).unwrap();
        let down = downsample_pow2(&rotated, 1).unwrap();
        let audit = retention_audit(img, &down).unwrap();
        worst = worst.min(audit.illumination_ratio);
    }

    let big = random_sky(1024, 9).unwrap();
    let start = Instant::now();
    let rotated = rotate_about_zenith(&big, 137.0).unwrap();
    let _ = downsample_pow2(&rotated, 1).unwrap();
    let elapsed = start.elapsed();

    let outcome = if worst >= 0.99 && elapsed < Duration::from_secs(1) {
        Ok(format!(
            "worst retention {worst:.4} over {} images; 1024^2 rotate+downsample {elapsed:?}",
            corpus.len()
        ))
    } else {
        Err(format!("worst retention {worst:.4}, 1024^2 pipeline {elapsed:?}"))
    };
    verdict(7, "illumination retention through preprocessing", outcome);
}

#[test]
fn criterion_08_ephemeris_accuracy() {
    // 20 noon-UTC checks at longitude 0: five latitudes x four seasons,
    // all with the sun above ~5 degrees. Reference values come from an
    // independent PSA-algorithm implementation.
    let mut worst = 0.0f64;
    let mut failure = None;
    let mut checks = 0;
    for lat in [-60.0, -30.0, 0.0, 30.0, 60.0] {
        for (month, day) in [(3, 20), (6, 21), (9, 22), (12, 21)] {
            let ts = Utc.with_ymd_and_hms(2020, month, day, 12, 0, 0).unwrap();
            let ours = solar_position(&CaptureMeta {
                latitude: lat,
                longitude: 0.0,
                timestamp: ts,
            })
            .unwrap();
            let reference = spa::solar_position::<spa::StdFloatOps>(ts, lat, 0.0).unwrap();
            let ref_elevation = 90.0 - reference.zenith_angle;
            let err = (ours.elevation - ref_elevation).abs();
            worst = worst.max(err);
            checks += 1;
            if err > 0.5 {
                failure = Some(format!(
                    "lat {lat} {month}-{day}: ours {:.3} vs reference {ref_elevation:.3}",
                    ours.elevation
                ));
            }
        }
    }
    let outcome = match failure {
        None => Ok(format!("{checks} checks, worst elevation error {worst:.3} deg")),
        Some(f) => Err(f),
    };
    verdict(8, "solar ephemeris accuracy", outcome);
}

/// Smallest |pre-activation| across hidden layers: finite differences are
/// only meaningful away from the ReLU kink.
fn hidden_kink_margin(params: &MlpParameters, batch: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut margin = f64::INFINITY;
    let spec = params.spec();
    let last = params.layers.len() - 1;
    for (input, _) in batch {
        let mut act = input.clone();
        for (l, layer) in params.layers.iter().enumerate() {
            let mut next = layer.biases.clone();
            for (o, out) in next.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                *out += row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>();
            }
            if l != last {
                for z in &next {
                    margin = margin.min(z.abs());
                }
                for z in &mut next {
                    if *z < 0.0 {
                        *z = 0.0;
                    }
                }
            }
            act = next;
        }
    }
    let _ = spec;
    margin
}

#[test]
fn criterion_09_mlp_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    let mut failure = None;
    for trial in 0..100 {
        let (params, batch) = loop {
            let spec = MlpSpec {
                input_channels: rng.gen_range(1..=4),
                hidden_layers: rng.gen_range(0..=3),
                hidden_width: rng.gen_range(1..=8),
                output_channels: rng.gen_range(1..=3),
            };
            let params = MlpParameters::kaiming_init(spec, rng.gen()).unwrap();
            let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..4)
                .map(|_| {
                    (
                        (0..spec.input_channels).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        (0..spec.output_channels).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    )
                })
                .collect();
            if spec.hidden_layers == 0 || hidden_kink_margin(&params, &batch) > 1e-3 {
                break (params, batch);
            }
        };
        let (_, analytic) = backward(&params, &batch, TrainLoss::L2).unwrap();
        let a = analytic.flatten();

        let h = 1e-5;
        let flat = params.flatten();
        let mut numeric = Vec::with_capacity(flat.len());
        for i in 0..flat.len() {
            let mut probe = params.clone();
            let mut plus = flat.clone();
            plus[i] += h;
            probe.unflatten_into(&plus).unwrap();
            let (lp, _) = backward(&probe, &batch, TrainLoss::L2).unwrap();
            let mut minus = flat.clone();
            minus[i] -= h;
            probe.unflatten_into(&minus).unwrap();
            let (lm, _) = backward(&probe, &batch, TrainLoss::L2).unwrap();
            numeric.push((lp - lm) / (2.0 * h));
        }
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt()
            + numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        worst = worst.max(rel);
        if rel > 1e-4 {
            failure = Some(format!("trial {trial}: relative gradient error {rel:.2e}"));
            break;
        }
    }
    let outcome = match failure {
        None => Ok(format!("100 trials, worst relative error {worst:.2e}")),
        Some(f) => Err(f),
    };
    verdict(9, "analytic gradients match finite differences", outcome);
}

#[test]
fn criterion_10_ann_inverse_tonemapper_fit() {
    let start = Instant::now();
    let op = TonemapOperator::MuLawLog2 { mu: 5000.0 };
    let encode = |i: f64| (1.0 + i).log2();

    // Log-uniform intensities over [0, 2^14], split 80/20 train/held-out.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut intensities: Vec<f64> = log_uniform_grid(0.0, 14f64.exp2(), 1280);
    intensities.extend((0..256).map(|_| rng.gen_range(0.0..14f64.exp2())));
    let mut held_out = Vec::new();
    let mut train_set = Vec::new();
    for (k, &i) in intensities.iter().enumerate() {
        let sample = (vec![op.forward(i)], vec![encode(i)]);
        if k % 5 == 4 {
            held_out.push((i, sample));
        } else {
            train_set.push(sample);
        }
    }

    let spec =
        MlpSpec { input_channels: 1, hidden_layers: 9, hidden_width: 32, output_channels: 1 };
    let config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 256,
        epochs: 400,
        loss: TrainLoss::L2,
        optimizer: Optimizer::Adam,
        seed: 12,
    };
    let (params, curve) = train(spec, &config, &train_set).unwrap();

    // Relative error in log2 space, with a unit floor so near-zero
    // targets don't blow the ratio up.
    let mut total_rel = 0.0;
    let mut worst_rel = 0.0f64;
    for (_, (x, t)) in &held_out {
        let pred = params.forward(x).unwrap()[0];
        let rel = (pred - t[0]).abs() / t[0].abs().max(1.0);
        total_rel += rel;
        worst_rel = worst_rel.max(rel);
    }
    let mean_rel = total_rel / held_out.len() as f64;
    let elapsed = start.elapsed();
    let outcome = if mean_rel < 0.05 && elapsed < Duration::from_secs(600) {
        Ok(format!(
            "held-out mean rel err {:.2}% (worst {:.2}%), final MSE {:.2e}, {elapsed:?}",
            100.0 * mean_rel,
            100.0 * worst_rel,
            curve.last().unwrap()
        ))
    } else {
        Err(format!(
            "held-out mean rel err {:.2}% (worst {:.2}%), {elapsed:?}",
            100.0 * mean_rel,
            100.0 * worst_rel
        ))
    };
    verdict(10, "ANN inverse-tonemapper fit", outcome);
}

#[test]
fn criterion_11_diffuse_sphere_probe() {
    // Up-facing irradiance of a uniform unit sky is the cosine integral
    // over the hemisphere: pi.
    let n = 512;
    let geom = SkyangularGeometry::new(n).unwrap();
    let sky = uniform_sky(n, [1.0; 3]).unwrap();
    let samples = light_samples(&sky, &solid_angles(&geom), &directions(&geom));
    let e = irradiance(&samples, [0.0, 0.0, 1.0]);
    let pi_rel = (e[1] - PI).abs() / PI;

    // Clip-then-equalize keeps total rendered energy but redistributes it.
    let img = sunny_sky(256, 0.036, 13.4, 135.0, 45.0).unwrap();
    let omega = solid_angles(&SkyangularGeometry::new(256).unwrap());
    let clipped = clip_to_ev(&img, ExposureValue { stops: 9.0 });
    let equalized = equalize_exposure(&clipped, &img, &omega).unwrap();

    let probe = |map: &RadianceImage| {
        let small = downsample_pow2(map, 2).unwrap();
        let g = SkyangularGeometry::of_image(&small).unwrap();
        render_diffuse_sphere(&small, &solid_angles(&g), &directions(&g), 32).unwrap()
    };
    let render_full = probe(&img);
    let render_equalized = probe(&equalized);

    let energy = |r: &RadianceImage| -> f64 {
        r.pixels().iter().map(|px| px[0] as f64 + px[1] as f64 + px[2] as f64).sum()
    };
    let energy_rel =
        (energy(&render_full) - energy(&render_equalized)).abs() / energy(&render_full);
    let max_pixel_rel = render_full
        .pixels()
        .iter()
        .zip(render_equalized.pixels())
        .map(|(a, b)| {
            let (la, lb) = (luminance_of(*a), luminance_of(*b));
            if la.max(lb) > 1e-9 { (la - lb).abs() / la.max(lb) } else { 0.0 }
        })
        .fold(0.0f64, f64::max);

    let outcome = if pi_rel <= 0.005 && energy_rel <= 0.01 && max_pixel_rel >= 0.30 {
        Ok(format!(
            "up irradiance {:.5} (pi rel {pi_rel:.2e}); render energy rel {energy_rel:.4}, \
             max pixel rel diff {max_pixel_rel:.2}",
            e[1]
        ))
    } else {
        Err(format!(
            "pi rel {pi_rel:.2e}, energy rel {energy_rel:.4}, max pixel rel {max_pixel_rel:.2}"
        ))
    };
    verdict(11, "diffuse-sphere probe", outcome);
}

#[test]
fn criterion_12_end_to_end_cli() {
    let bin = env!("CARGO_BIN_EXE_edrsky");
    let out_dir = tempfile::tempdir().unwrap();
    let start = Instant::now();

    let fig2 = std::process::Command::new(bin)
        .args(["demo-fig2"])
        .arg(fixture("sunny_256.hdr"))
        .args(["--evs", "15,13,11,9", "--out"])
        .arg(out_dir.path().join("fig2"))
        .output()
        .unwrap();
    let fig4b = std::process::Command::new(bin)
        .args(["demo-fig4b"])
        .arg(fixture("sunny_256.hdr"))
        .arg("--out")
        .arg(out_dir.path().join("fig4b.csv"))
        .output()
        .unwrap();
    let elapsed = start.elapsed();

    let usage = std::process::Command::new(bin).output().unwrap();
    let usage_code = usage.status.code();

    let expected = [
        out_dir.path().join("fig2/map_ev09.hdr"),
        out_dir.path().join("fig2/render_ev09.png"),
        out_dir.path().join("fig2/fig2.csv"),
        out_dir.path().join("fig4b.csv"),
    ];
    let missing: Vec<_> = expected.iter().filter(|p| !p.exists()).collect();

    let outcome = if fig2.status.success()
        && fig4b.status.success()
        && usage_code == Some(2)
        && missing.is_empty()
        && elapsed < Duration::from_secs(60)
    {
        Ok(format!("demo-fig2 + demo-fig4b in {elapsed:?}; bare invocation exits 2"))
    } else {
        Err(format!(
            "fig2 {:?}, fig4b {:?}, usage exit {usage_code:?}, missing {missing:?}, {elapsed:?}\n\
             fig2 stderr: {}\nfig4b stderr: {}",
            fig2.status,
            fig4b.status,
            String::from_utf8_lossy(&fig2.stderr),
            String::from_utf8_lossy(&fig4b.stderr)
        ))
    };
    verdict(12, "end-to-end CLI demos", outcome);
}
