//! `edrsky` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error (clap default).
//! Defaults for mu and gamma resolve as: explicit flag > `--config` JSON
//! file > `EDRSKY_MU` / `EDRSKY_GAMMA` environment variables > built-in.
//! Every run echoes its fully-resolved configuration to stdout as one
//! JSON line, and all file outputs are written atomically.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use edrsky::ann::{
    attach_priori, train, MlpSpec, Optimizer, TargetSpace,
    TrainConfig, TrainLoss,
};
use edrsky::envmap::{
    clip_to_ev, directions, dynamic_range_ev, equalize_exposure, integrated_illumination,
    render_diffuse_sphere, solid_angles, ExposureValue, SkyangularGeometry,
};
use edrsky::error::Error;
use edrsky::hdr_io::{read_hdr, write_auto, write_report, ReportRow};
use edrsky::image::RadianceImage;
use edrsky::losses::{
    cascade_bands_loss, cascade_exposure_loss, l1, l2, scale_invariant_loss, sensitivity_sweep,
    BandSpec, CascadeBreakdown, InnerLoss, LossWeights, TonemapClamp,
};
use edrsky::pipeline::{
    downsample_pow2, retention_audit, rotate_about_zenith, split_dataset, DatasetRecord,
};
use edrsky::segmentation::{
    segment, CaptureMeta, LabelClass, SegmentationConfig, DEFAULT_BRUSH_PX,
    DEFAULT_CLOUD_THRESHOLD, DEFAULT_SOLAR_RADIUS_DEG,
};
use edrsky::synthetic;
use edrsky::tonemap::{
    log_uniform_grid, sweep_curves, TonemapOperator, DEFAULT_GAMMA, DEFAULT_MU,
};

/// Feature vector paired with its regression target.
type Sample = (Vec<f64>, Vec<f64>);

#[derive(Parser)]
#[command(name = "edrsky", version, about = "HDR sky environment-map toolkit")]
struct Cli {
    /// JSON file with default parameters; explicit flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply or invert a tonemapping operator on an HDR file.
    Tonemap(TonemapArgs),
    /// Compare two environment maps: EV ratio, illumination ratio, L1/L2.
    Metrics(MetricsArgs),
    /// Evaluate a reconstruction loss between two HDR files.
    Loss(LossArgs),
    /// Segment a capture into border/skydome/cloud/sun classes.
    Label(LabelArgs),
    /// Rotate, downsample, audit and split a set of captures.
    Preprocess(PreprocessArgs),
    /// Tabulate tonemap curves and HDR-space error propagation.
    Sweep(SweepArgs),
    /// Train the per-pixel MLP inverse tonemapper.
    FitAnn(FitAnnArgs),
    /// Render a diffuse sphere lit by an environment map.
    Relight(RelightArgs),
    /// Incremental EV clipping with exposure equalization and sphere probes.
    DemoFig2(DemoFig2Args),
    /// Loss sensitivity to dynamic-range truncation, as CSV.
    DemoFig4b(DemoFig4bArgs),
}

/// Defaults loadable from `--config`; any subset of fields may appear.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mu: Option<f64>,
    gamma: Option<f64>,
    seed: Option<u64>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, Error> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::format("config", e.to_string()))
            }
        }
    }

    fn mu(&self, flag: Option<f64>) -> f64 {
        flag.or(self.mu).or_else(|| env_f64("EDRSKY_MU")).unwrap_or(DEFAULT_MU)
    }

    fn gamma(&self, flag: Option<f64>) -> f64 {
        flag.or(self.gamma).or_else(|| env_f64("EDRSKY_GAMMA")).unwrap_or(DEFAULT_GAMMA)
    }

    fn seed(&self, flag: Option<u64>) -> u64 {
        self.seed.map_or(flag.unwrap_or(0), |file| flag.unwrap_or(file))
    }
}

fn env_f64(name: &str) -> Option<f64> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OperatorKind {
    Gamma,
    Logn,
    Mulaw,
    Mulawlog2,
    Deepclouds,
}

#[derive(Args)]
struct TonemapArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "mulawlog2")]
    op: OperatorKind,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Base for the logarithmic operator.
    #[arg(long, default_value_t = 2.0)]
    base: f64,
    /// Apply the inverse map (LDR back to HDR).
    #[arg(long)]
    invert: bool,
}

#[derive(Args)]
struct MetricsArgs {
    real: PathBuf,
    fake: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossKind {
    L1,
    L2,
    CascadeBands,
    CascadeExposure,
    ScaleInvariant,
}

#[derive(Args)]
struct LossArgs {
    real: PathBuf,
    fake: PathBuf,
    #[arg(long, value_enum)]
    kind: LossKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15)]
    ev_max: u32,
    #[arg(long, default_value_t = 4)]
    exposures: u32,
    /// Term weights: `INDEX=ALPHA` for bands/exposures, or a class name
    /// (`sun`, `cloud`, `skydome`) with `--label` for selective weighting.
    #[arg(long = "alpha", value_name = "KEY=ALPHA")]
    alphas: Vec<String>,
    /// Label PNG (class ids 0-3) enabling class-selective evaluation.
    #[arg(long)]
    label: Option<PathBuf>,
    /// Gamma-tonemap and clamp inside each exposure bracket.
    #[arg(long)]
    tonemap_gamma: Option<f64>,
}

#[derive(Args)]
struct LabelArgs {
    input: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    lat: f64,
    #[arg(long, allow_hyphen_values = true)]
    lon: f64,
    /// Capture instant, RFC 3339 (e.g. 2016-06-21T16:48:00Z).
    #[arg(long)]
    time: DateTime<Utc>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CLOUD_THRESHOLD, allow_hyphen_values = true)]
    cloud_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_BRUSH_PX)]
    brush: usize,
    #[arg(long, default_value_t = DEFAULT_SOLAR_RADIUS_DEG)]
    solar_radius: f64,
    #[arg(long)]
    mu: Option<f64>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input HDR files; all receive the same capture metadata unless a
    /// manifest is supplied instead.
    inputs: Vec<PathBuf>,
    /// JSON manifest: array of `{image_path, meta:{latitude, longitude,
    /// timestamp}}` records. Overrides positional inputs.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    lat: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lon: Option<f64>,
    #[arg(long)]
    time: Option<DateTime<Utc>>,
    /// `random` or a fixed angle in degrees.
    #[arg(long, default_value = "random")]
    rotate: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Downsampling exponent: each step halves the resolution.
    #[arg(long, default_value_t = 1)]
    downsample: u32,
    #[arg(long)]
    out: PathBuf,
    /// Train/val/test fractions.
    #[arg(long, default_value = "0.7,0.15,0.15")]
    split: String,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// LDR-space error used for the propagation column.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Upper end of the intensity grid, in stops.
    #[arg(long, default_value_t = 15.0)]
    max_ev: f64,
    #[arg(long, default_value_t = 256)]
    count: usize,
}

#[derive(Args)]
struct FitAnnArgs {
    /// Optional HDR file to fit on; default is a scalar intensity grid.
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 9)]
    layers: usize,
    /// Append the (X, Y, Z, Omega, Label) channels (needs an input map).
    #[arg(long)]
    priori: bool,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    /// Sample count for the scalar grid fit.
    #[arg(long, default_value_t = 4096)]
    samples: usize,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss curve CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct RelightArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Downsample the environment by 2^N before integrating.
    #[arg(long, default_value_t = 0)]
    env_downsample: u32,
}

#[derive(Args)]
struct DemoFig2Args {
    input: PathBuf,
    #[arg(long, default_value = "15,13,11,9")]
    evs: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    render_resolution: usize,
}

#[derive(Args)]
struct DemoFig4bArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15)]
    ev_max: u32,
    #[arg(long)]
    mu: Option<f64>,
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("edrsky: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Tonemap(a) => cmd_tonemap(a, &file),
        Command::Metrics(a) => cmd_metrics(a, &file),
        Command::Loss(a) => cmd_loss(a, &file),
        Command::Label(a) => cmd_label(a, &file),
        Command::Preprocess(a) => cmd_preprocess(a, &file),
        Command::Sweep(a) => cmd_sweep(a, &file),
        Command::FitAnn(a) => cmd_fit_ann(a, &file),
        Command::Relight(a) => cmd_relight(a),
        Command::DemoFig2(a) => cmd_demo_fig2(a),
        Command::DemoFig4b(a) => cmd_demo_fig4b(a, &file),
    }
}

fn echo_config(command: &str, config: serde_json::Value) {
    println!("{}", json!({ "command": command, "config": config }));
}

fn build_operator(
    kind: OperatorKind,
    mu: f64,
    gamma: f64,
    base: f64,
) -> Result<TonemapOperator, Error> {
    let op = match kind {
        OperatorKind::Gamma => TonemapOperator::Gamma { gamma },
        OperatorKind::Logn => TonemapOperator::LogN { base },
        OperatorKind::Mulaw => TonemapOperator::MuLaw { mu },
        OperatorKind::Mulawlog2 => TonemapOperator::MuLawLog2 { mu },
        OperatorKind::Deepclouds => TonemapOperator::DeepCloudsRecip,
    };
    op.validate()?;
    Ok(op)
}

fn cmd_tonemap(a: &TonemapArgs, file: &FileConfig) -> Result<(), Error> {
    let (mu, gamma) = (file.mu(a.mu), file.gamma(a.gamma));
    let op = build_operator(a.op, mu, gamma, a.base)?;
    echo_config(
        "tonemap",
        json!({
            "input": a.input, "out": a.out, "operator": op, "invert": a.invert,
        }),
    );
    let img = read_hdr(&a.input)?;
    let result = if a.invert { op.invert(&img)? } else { op.apply(&img)? };
    write_auto(&result, &a.out)
}

fn cmd_metrics(a: &MetricsArgs, file: &FileConfig) -> Result<(), Error> {
    let mu = file.mu(a.mu);
    echo_config("metrics", json!({ "real": a.real, "fake": a.fake, "out": a.out, "mu": mu }));
    let real = read_hdr(&a.real)?;
    let fake = read_hdr(&a.fake)?;
    real.ensure_same_shape(&fake)?;
    let omega = solid_angles(&SkyangularGeometry::of_image(&real)?);
    let op = TonemapOperator::MuLawLog2 { mu };
    let (ldr_real, ldr_fake) = (op.apply(&real)?, op.apply(&fake)?);

    let ev_real = dynamic_range_ev(&real)?.stops;
    let ev_fake = dynamic_range_ev(&fake).map(|e| e.stops).unwrap_or(0.0);
    let ii_real = integrated_illumination(&real, &omega)?;
    let ii_fake = integrated_illumination(&fake, &omega)?;
    let row = ReportRow {
        label: "metrics".into(),
        values: vec![
            ("ev_real".into(), ev_real),
            ("ev_fake".into(), ev_fake),
            ("ev_ratio".into(), if ev_real != 0.0 { ev_fake / ev_real } else { f64::NAN }),
            ("illum_real".into(), ii_real),
            ("illum_fake".into(), ii_fake),
            ("illum_ratio".into(), if ii_real > 0.0 { ii_fake / ii_real } else { f64::NAN }),
            ("l1_hdr".into(), l1(&real, &fake, None)?.value),
            ("l2_hdr".into(), l2(&real, &fake, None)?.value),
            ("l1_ldr".into(), l1(&ldr_real, &ldr_fake, None)?.value),
            ("l2_ldr".into(), l2(&ldr_real, &ldr_fake, None)?.value),
        ],
    };
    write_report(&[row], &a.out)
}

/// Splits `--alpha` pairs into numeric term weights and class weights.
fn parse_alphas(raw: &[String]) -> Result<(LossWeights, HashMap<LabelClass, f64>), Error> {
    let mut weights = LossWeights::uniform(1.0);
    let mut classes = HashMap::new();
    for pair in raw {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("--alpha '{pair}' is not KEY=ALPHA")))?;
        let alpha: f64 = value
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad alpha value '{value}'")))?;
        if let Ok(index) = key.parse::<usize>() {
            weights = weights.with(index, alpha);
        } else {
            let class = match key {
                "skydome" => LabelClass::Skydome,
                "cloud" => LabelClass::Cloud,
                "sun" => LabelClass::Sun,
                other => {
                    return Err(Error::InvalidParameter(format!("unknown alpha key '{other}'")))
                }
            };
            classes.insert(class, alpha);
        }
    }
    Ok((weights, classes))
}

fn read_label_png(path: &Path, width: usize, height: usize) -> Result<Vec<u8>, Error> {
    let img = image::open(path).map_err(|e| Error::format("png", e.to_string()))?.into_luma8();
    if img.width() as usize != width || img.height() as usize != height {
        return Err(Error::ShapeMismatch(format!(
            "label {}x{} vs image {width}x{height}",
            img.width(),
            img.height()
        )));
    }
    Ok(img.into_raw())
}

fn breakdown_rows(breakdown: &CascadeBreakdown, prefix: &str) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = breakdown
        .terms
        .iter()
        .map(|t| ReportRow {
            label: format!("{prefix}{}", t.index),
            values: vec![
                ("pixel_count".into(), t.pixel_count as f64),
                ("loss".into(), t.loss),
                ("weighted".into(), t.weighted),
            ],
        })
        .collect();
    rows.push(ReportRow {
        label: "total".into(),
        values: vec![
            ("pixel_count".into(), breakdown.terms.iter().map(|t| t.pixel_count).sum::<usize>() as f64),
            ("loss".into(), breakdown.total),
            ("weighted".into(), breakdown.total),
        ],
    });
    rows
}

fn cmd_loss(a: &LossArgs, file: &FileConfig) -> Result<(), Error> {
    let _ = file;
    echo_config(
        "loss",
        json!({
            "real": a.real, "fake": a.fake, "kind": format!("{:?}", a.kind),
            "ev_max": a.ev_max, "exposures": a.exposures, "alpha": a.alphas,
            "label": a.label, "tonemap_gamma": a.tonemap_gamma, "out": a.out,
        }),
    );
    let real = read_hdr(&a.real)?;
    let fake = read_hdr(&a.fake)?;
    let (weights, class_alphas) = parse_alphas(&a.alphas)?;

    // With a label file the loss runs per class and sums the weighted
    // class terms; otherwise it runs once, unmasked.
    let masks: Vec<(String, f64, Option<edrsky::segmentation::ClassMask>)> = match &a.label {
        None => {
            if !class_alphas.is_empty() {
                return Err(Error::InvalidParameter(
                    "class alphas need --label to derive the masks".into(),
                ));
            }
            vec![("global".into(), 1.0, None)]
        }
        Some(path) => {
            let data = read_label_png(path, real.width(), real.height())?;
            [LabelClass::Skydome, LabelClass::Cloud, LabelClass::Sun]
                .into_iter()
                .map(|class| {
                    let values = data.iter().map(|id| *id == class as u8).collect();
                    let mask = edrsky::segmentation::ClassMask::new(
                        real.width(),
                        real.height(),
                        values,
                        Some(class),
                    );
                    let alpha = class_alphas.get(&class).copied().unwrap_or(1.0);
                    (format!("{class:?}").to_lowercase(), alpha, Some(mask))
                })
                .collect()
        }
    };

    let mut rows = Vec::new();
    let mut weighted_total = 0.0;
    for (name, alpha, mask) in &masks {
        let mask = mask.as_ref();
        match a.kind {
            LossKind::L1 | LossKind::L2 => {
                let r = if a.kind == LossKind::L1 {
                    l1(&real, &fake, mask)?
                } else {
                    l2(&real, &fake, mask)?
                };
                weighted_total += alpha * r.value;
                rows.push(ReportRow {
                    label: name.clone(),
                    values: vec![
                        ("pixel_count".into(), r.pixel_count as f64),
                        ("loss".into(), r.value),
                        ("weighted".into(), alpha * r.value),
                    ],
                });
            }
            LossKind::ScaleInvariant => {
                let v = scale_invariant_loss(&real, &fake)?;
                weighted_total += alpha * v;
                rows.push(ReportRow {
                    label: name.clone(),
                    values: vec![
                        ("pixel_count".into(), (real.pixels().len()) as f64),
                        ("loss".into(), v),
                        ("weighted".into(), alpha * v),
                    ],
                });
            }
            LossKind::CascadeBands => {
                let b = cascade_bands_loss(
                    &real,
                    &fake,
                    InnerLoss::L1,
                    BandSpec { ev_max: a.ev_max },
                    &weights,
                    mask,
                )?;
                weighted_total += alpha * b.total;
                rows.extend(breakdown_rows(&b, &format!("{name}/band")));
            }
            LossKind::CascadeExposure => {
                let b = cascade_exposure_loss(
                    &real,
                    &fake,
                    InnerLoss::L1,
                    a.exposures,
                    &weights,
                    mask,
                    a.tonemap_gamma.map(|gamma| TonemapClamp { gamma }),
                )?;
                weighted_total += alpha * b.total;
                rows.extend(breakdown_rows(&b, &format!("{name}/exposure")));
            }
        }
    }
    if masks.len() > 1 {
        rows.push(ReportRow {
            label: "selective_total".into(),
            values: vec![
                ("pixel_count".into(), 0.0),
                ("loss".into(), weighted_total),
                ("weighted".into(), weighted_total),
            ],
        });
    }
    write_report(&rows, &a.out)
}

fn cmd_label(a: &LabelArgs, file: &FileConfig) -> Result<(), Error> {
    let mu = file.mu(a.mu);
    let config = SegmentationConfig {
        cloud_threshold: a.cloud_threshold,
        brush_px: a.brush,
        solar_radius_deg: a.solar_radius,
        mu,
    };
    echo_config(
        "label",
        json!({
            "input": a.input, "out": a.out, "lat": a.lat, "lon": a.lon,
            "time": a.time, "cloud_threshold": a.cloud_threshold,
            "brush": a.brush, "solar_radius": a.solar_radius, "mu": mu,
        }),
    );
    let img = read_hdr(&a.input)?;
    let meta = CaptureMeta { latitude: a.lat, longitude: a.lon, timestamp: a.time };
    let (label, pos) = segment(&img, &meta, &config)?;
    let n = label.resolution();
    edrsky::hdr_io::write_png8_gray(label.classes(), n, n, &a.out)?;

    let histogram = label.histogram();
    let sidecar = a.out.with_extension("json");
    let body = serde_json::to_vec_pretty(&json!({
        "meta": meta,
        "solar_position": pos,
        "histogram": {
            "border": histogram[0], "skydome": histogram[1],
            "cloud": histogram[2], "sun": histogram[3],
        },
        "config": {
            "cloud_threshold": a.cloud_threshold, "brush": a.brush,
            "solar_radius": a.solar_radius, "mu": mu,
        },
    }))
    .map_err(|e| Error::format("json", e.to_string()))?;
    edrsky::hdr_io::atomic_write(&sidecar, |f| {
        use std::io::Write;
        f.write_all(&body).map_err(|e| Error::io(&sidecar, e))
    })
}

fn parse_fractions(raw: &str) -> Result<(f64, f64, f64), Error> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::InvalidParameter(format!("bad --split '{raw}'")))?;
    if parts.len() != 3 {
        return Err(Error::InvalidParameter("--split needs three fractions".into()));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn cmd_preprocess(a: &PreprocessArgs, file: &FileConfig) -> Result<(), Error> {
    let seed = file.seed(a.seed);
    let fractions = parse_fractions(&a.split)?;
    echo_config(
        "preprocess",
        json!({
            "manifest": a.manifest, "inputs": a.inputs, "rotate": a.rotate,
            "seed": seed, "downsample": a.downsample, "out": a.out, "split": a.split,
        }),
    );

    let mut records: Vec<DatasetRecord> = match &a.manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))?
        }
        None => {
            let (lat, lon, time) = match (a.lat, a.lon, a.time) {
                (Some(lat), Some(lon), Some(time)) => (lat, lon, time),
                _ => {
                    return Err(Error::InvalidParameter(
                        "without --manifest, preprocess needs --lat, --lon and --time".into(),
                    ))
                }
            };
            a.inputs
                .iter()
                .map(|p| DatasetRecord {
                    image_path: p.clone(),
                    meta: CaptureMeta { latitude: lat, longitude: lon, timestamp: time },
                    label_path: None,
                    split: None,
                })
                .collect()
        }
    };
    if records.is_empty() {
        return Err(Error::InvalidParameter("no inputs to preprocess".into()));
    }

    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let mut audit_rows = Vec::new();
    for record in &mut records {
        let img = read_hdr(&record.image_path)?;
        let angle = match a.rotate.as_str() {
            "random" => rng.gen_range(0.0..360.0),
            fixed => fixed
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad --rotate '{fixed}'")))?,
        };
        let rotated = rotate_about_zenith(&img, angle)?;
        let processed =
            if a.downsample > 0 { downsample_pow2(&rotated, a.downsample)? } else { rotated };
        let audit = retention_audit(&img, &processed)?;

        let name = record
            .image_path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::InvalidParameter("input has no file name".into()))?;
        let out_path = a.out.join(name);
        write_auto(&processed, &out_path)?;

        audit_rows.push(ReportRow {
            label: name.to_string(),
            values: vec![
                ("rotation_deg".into(), angle),
                ("ev_before".into(), audit.ev_before.unwrap_or(f64::NAN)),
                ("ev_after".into(), audit.ev_after.unwrap_or(f64::NAN)),
                ("illumination_ratio".into(), audit.illumination_ratio),
            ],
        });
        record.image_path = out_path;
    }

    split_dataset(&mut records, fractions, seed)?;
    write_report(&audit_rows, a.out.join("retention.csv"))?;
    let manifest = serde_json::to_vec_pretty(&records)
        .map_err(|e| Error::format("manifest", e.to_string()))?;
    let manifest_path = a.out.join("manifest.json");
    edrsky::hdr_io::atomic_write(&manifest_path, |f| {
        use std::io::Write;
        f.write_all(&manifest).map_err(|e| Error::io(&manifest_path, e))
    })
}

fn cmd_sweep(a: &SweepArgs, file: &FileConfig) -> Result<(), Error> {
    let (mu, gamma) = (file.mu(a.mu), file.gamma(a.gamma));
    echo_config(
        "sweep",
        json!({
            "out": a.out, "mu": mu, "gamma": gamma, "delta": a.delta,
            "max_ev": a.max_ev, "count": a.count,
        }),
    );
    let ops = [
        TonemapOperator::Gamma { gamma },
        TonemapOperator::LogN { base: 2.0 },
        TonemapOperator::MuLaw { mu },
        TonemapOperator::MuLawLog2 { mu },
        TonemapOperator::DeepCloudsRecip,
    ];
    let grid = log_uniform_grid(0.0, a.max_ev.exp2(), a.count);
    let rows: Vec<ReportRow> = sweep_curves(&ops, &grid, a.delta)?
        .into_iter()
        .map(|r| ReportRow {
            label: r.operator,
            values: vec![
                ("intensity".into(), r.intensity),
                ("mapped".into(), r.mapped),
                ("hdr_error".into(), r.hdr_error.unwrap_or(f64::NAN)),
            ],
        })
        .collect();
    write_report(&rows, &a.out)
}

fn cmd_fit_ann(a: &FitAnnArgs, file: &FileConfig) -> Result<(), Error> {
    let mu = file.mu(a.mu);
    let seed = file.seed(a.seed);
    echo_config(
        "fit-ann",
        json!({
            "input": a.input, "layers": a.layers, "priori": a.priori, "mu": mu,
            "epochs": a.epochs, "seed": seed, "lr": a.lr, "batch": a.batch,
            "samples": a.samples, "out": a.out, "curve": a.curve,
        }),
    );
    let op = TonemapOperator::MuLawLog2 { mu };
    let target = TargetSpace::Log2Edr;

    let (spec, data): (MlpSpec, Vec<Sample>) = match &a.input {
        // Scalar grid fit: (mulawlog2(I), log2(1 + I)) pairs.
        None => {
            let grid = log_uniform_grid(0.0, 14f64.exp2(), a.samples);
            let data = grid
                .iter()
                .map(|&i| (vec![op.forward(i)], vec![target.encode(i)]))
                .collect();
            let spec = MlpSpec {
                input_channels: 1,
                hidden_layers: a.layers,
                hidden_width: 32,
                output_channels: 1,
            };
            (spec, data)
        }
        Some(path) => {
            let img = read_hdr(path)?;
            let ldr = op.apply(&img)?;
            let mut features: Vec<Vec<f64>> = ldr
                .pixels()
                .iter()
                .map(|px| vec![px[0] as f64, px[1] as f64, px[2] as f64])
                .collect();
            if a.priori {
                let geom = SkyangularGeometry::of_image(&img)?;
                let omega = solid_angles(&geom);
                let dirs = directions(&geom);
                // Sun/cloud are unknown without capture metadata, so the
                // priori label distinguishes border vs skydome only.
                let n = geom.resolution();
                let empty = edrsky::segmentation::ClassMask::empty(n, n);
                let label = edrsky::segmentation::compose_label(&empty, &empty, &geom)?;
                features = attach_priori(&features, &dirs, &omega, &label)?;
            }
            let targets: Vec<Vec<f64>> = img
                .pixels()
                .iter()
                .map(|px| {
                    vec![
                        target.encode(px[0] as f64),
                        target.encode(px[1] as f64),
                        target.encode(px[2] as f64),
                    ]
                })
                .collect();
            let spec = MlpSpec {
                input_channels: features[0].len(),
                hidden_layers: a.layers,
                hidden_width: 32,
                output_channels: 3,
            };
            (spec, features.into_iter().zip(targets).collect())
        }
    };

    let config = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        loss: TrainLoss::L2,
        optimizer: Optimizer::Adam,
        seed,
    };
    let (params, curve) = train(spec, &config, &data)?;
    params.save(&a.out)?;
    if let Some(curve_path) = &a.curve {
        let rows: Vec<ReportRow> = curve
            .iter()
            .enumerate()
            .map(|(epoch, loss)| ReportRow {
                label: format!("epoch{epoch}"),
                values: vec![("epoch".into(), epoch as f64), ("loss".into(), *loss)],
            })
            .collect();
        write_report(&rows, curve_path)?;
    }
    println!(
        "{}",
        json!({ "final_loss": curve.last(), "parameters": spec.parameter_count() })
    );
    Ok(())
}

fn cmd_relight(a: &RelightArgs) -> Result<(), Error> {
    echo_config(
        "relight",
        json!({
            "input": a.input, "out": a.out, "resolution": a.resolution,
            "env_downsample": a.env_downsample,
        }),
    );
    let img = read_hdr(&a.input)?;
    let env =
        if a.env_downsample > 0 { downsample_pow2(&img, a.env_downsample)? } else { img };
    let geom = SkyangularGeometry::of_image(&env)?;
    let render =
        render_diffuse_sphere(&env, &solid_angles(&geom), &directions(&geom), a.resolution)?;
    write_auto(&render, &a.out)
}

fn cmd_demo_fig2(a: &DemoFig2Args) -> Result<(), Error> {
    let evs: Vec<f64> = a
        .evs
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::InvalidParameter(format!("bad --evs '{}'", a.evs)))?;
    echo_config(
        "demo-fig2",
        json!({
            "input": a.input, "evs": evs, "out": a.out,
            "render_resolution": a.render_resolution,
        }),
    );
    let img = read_hdr(&a.input)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    // Integrate spheres on a bounded environment to keep the demo fast.
    let mut probe_env = img.clone();
    let mut probe_steps = 0u32;
    while probe_env.width() > 128 {
        probe_steps += 1;
        probe_env = downsample_pow2(&img, probe_steps)?;
    }

    let geom = SkyangularGeometry::of_image(&img)?;
    let omega = solid_angles(&geom);
    let probe_geom = SkyangularGeometry::of_image(&probe_env)?;
    let (probe_omega, probe_dirs) = (solid_angles(&probe_geom), directions(&probe_geom));
    let full_ii = integrated_illumination(&img, &omega)?;

    let mut rows = Vec::new();
    for &ev in &evs {
        let clipped = clip_to_ev(&img, ExposureValue { stops: ev });
        let equalized = equalize_exposure(&clipped, &img, &omega)?;
        let tag = format!("ev{ev:02.0}");
        write_auto(&equalized, a.out.join(format!("map_{tag}.hdr")))?;
        write_auto(&equalized, a.out.join(format!("map_{tag}.png")))?;

        let mut probe = equalized.clone();
        if probe_steps > 0 {
            probe = downsample_pow2(&equalized, probe_steps)?;
        }
        let render =
            render_diffuse_sphere(&probe, &probe_omega, &probe_dirs, a.render_resolution)?;
        write_auto(&render, a.out.join(format!("render_{tag}.hdr")))?;
        write_auto(&render, a.out.join(format!("render_{tag}.png")))?;

        rows.push(ReportRow {
            label: tag,
            values: vec![
                ("clip_ev".into(), ev),
                ("ev_clipped".into(), dynamic_range_ev(&clipped)?.stops),
                (
                    "illum_ratio_clipped".into(),
                    integrated_illumination(&clipped, &omega)? / full_ii,
                ),
                (
                    "illum_ratio_equalized".into(),
                    integrated_illumination(&equalized, &omega)? / full_ii,
                ),
            ],
        });
    }
    write_report(&rows, a.out.join("fig2.csv"))
}

fn cmd_demo_fig4b(a: &DemoFig4bArgs, file: &FileConfig) -> Result<(), Error> {
    let mu = file.mu(a.mu);
    echo_config(
        "demo-fig4b",
        json!({ "input": a.input, "out": a.out, "ev_max": a.ev_max, "mu": mu }),
    );
    let img = read_hdr(&a.input)?;
    let omega = solid_angles(&SkyangularGeometry::of_image(&img)?);
    let rows = sensitivity_sweep(
        &img,
        &omega,
        BandSpec { ev_max: a.ev_max },
        &TonemapOperator::MuLawLog2 { mu },
    )?;
    let report: Vec<ReportRow> = rows
        .iter()
        .map(|r| ReportRow {
            label: format!("t{}", r.truncation_ev),
            values: vec![
                ("t".into(), r.truncation_ev as f64),
                ("L1_HDR".into(), r.l1_hdr),
                ("L2_HDR".into(), r.l2_hdr),
                ("L1_LDR".into(), r.l1_ldr),
                ("L2_LDR".into(), r.l2_ldr),
                ("illum_ratio".into(), r.illumination_ratio),
            ],
        })
        .collect();
    write_report(&report, &a.out)
}

// Used by unit tests for the parser; synthetic is re-exported so demo
// fixtures can be produced without a separate tool.
#[allow(dead_code)]
fn synthetic_fixture(resolution: usize) -> Result<RadianceImage, Error> {
    synthetic::sunny_sky(resolution, 0.036, 13.4, 135.0, 45.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn fractions_parse() {
        assert_eq!(parse_fractions("0.7,0.15,0.15").unwrap(), (0.7, 0.15, 0.15));
        assert!(parse_fractions("0.7,0.3").is_err());
        assert!(parse_fractions("a,b,c").is_err());
    }

    #[test]
    fn alpha_pairs_parse() {
        let (weights, classes) =
            parse_alphas(&["3=0.5".into(), "sun=0.1".into(), "skydome=10".into()]).unwrap();
        assert_eq!(weights.alpha(3), 0.5);
        assert_eq!(weights.alpha(0), 1.0);
        assert_eq!(classes[&LabelClass::Sun], 0.1);
        assert_eq!(classes[&LabelClass::Skydome], 10.0);
        assert!(parse_alphas(&["nope".into()]).is_err());
        assert!(parse_alphas(&["venus=1".into()]).is_err());
    }
}
