//! Per-pixel MLP inverse tonemapper (the ldr2EDR / latent2EDR head).
//!
//! A stack of 1x1 "convolutions" is functionally an MLP applied to each
//! pixel independently: no spatial mixing, ReLU on hidden layers,
//! identity on the output layer. Training is plain backprop with either
//! Adam or SGD, deterministic under a fixed seed.

mod train;

pub use train::{backward, train, Gradients, Optimizer, TrainConfig, TrainLoss};

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envmap::{
    dynamic_range_ev, integrated_illumination, DirectionMap, SolidAngleMap,
};
use crate::error::{Error, Result};
use crate::image::RadianceImage;
use crate::losses;
use crate::segmentation::LabelMap;

/// Number of priori channels (X, Y, Z, Omega, Label).
pub const PRIORI_CHANNELS: usize = 5;

/// Architecture of the per-pixel head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_channels: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_channels: usize,
}

impl MlpSpec {
    /// RGB-in / RGB-out head with the default width.
    pub fn ldr2edr(hidden_layers: usize) -> Self {
        MlpSpec { input_channels: 3, hidden_layers, hidden_width: 32, output_channels: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.hidden_width == 0 || self.output_channels == 0 {
            return Err(Error::InvalidParameter(format!("degenerate MLP spec {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each linear layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_channels;
        for _ in 0..self.hidden_layers {
            dims.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        dims.push((fan_in, self.output_channels));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One linear layer: row-major `weights[out * fan_in]` plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer { fan_in, fan_out, weights: vec![0.0; fan_in * fan_out], biases: vec![0.0; fan_out] }
    }
}

/// All trainable parameters of a head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    spec: MlpSpec,
    pub layers: Vec<Layer>,
}

impl MlpParameters {
    pub fn spec(&self) -> MlpSpec {
        self.spec
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec.layer_dims().into_iter().map(|(i, o)| Layer::zeros(i, o)).collect();
        Ok(MlpParameters { spec, layers })
    }

    /// Uniform Kaiming-style fan-in initialization, biases zero.
    pub fn kaiming_init(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = (6.0 / fan_in as f64).sqrt();
                Layer {
                    fan_in,
                    fan_out,
                    weights: (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(MlpParameters { spec, layers })
    }

    /// Evaluates one feature vector. ReLU on hidden layers, identity on
    /// the output layer.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.spec.input_channels {
            return Err(Error::ShapeMismatch(format!(
                "feature dimension {} vs spec {}",
                input.len(),
                self.spec.input_channels
            )));
        }
        let mut activation = input.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = layer.biases.clone();
            for (o, out) in next.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                *out += row.iter().zip(&activation).map(|(w, a)| w * a).sum::<f64>();
            }
            if l != last {
                for v in &mut next {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activation = next;
        }
        Ok(activation)
    }

    /// Forward pass keeping pre-activations for backprop.
    pub(crate) fn forward_cached(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let last = self.layers.len() - 1;
        let mut activations = vec![input.to_vec()];
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = activations.last().unwrap();
            let mut next = layer.biases.clone();
            for (o, out) in next.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                *out += row.iter().zip(prev.iter()).map(|(w, a)| w * a).sum::<f64>();
            }
            if l != last {
                for v in &mut next {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(next);
        }
        let output = activations.last().unwrap().clone();
        (activations, output)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.spec.parameter_count());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.biases);
        }
        flat
    }

    pub fn unflatten_into(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.spec.parameter_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} values vs {} parameters",
                flat.len(),
                self.spec.parameter_count()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Checkpoint: one JSON shape header line followed by the flat
    /// parameter blob as little-endian f64.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::hdr_io::atomic_write(path, |file| {
            let header = serde_json::to_string(&self.spec)
                .map_err(|e| Error::format("checkpoint", e.to_string()))?;
            file.write_all(b"EDRSKY-ANN v1\n").map_err(|e| Error::io(path, e))?;
            file.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            for v in self.flatten() {
                file.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
            }
            Ok(())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut lines = bytes.splitn(3, |b| *b == b'\n');
        let magic = lines.next().unwrap_or_default();
        if magic != b"EDRSKY-ANN v1" {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let header = lines.next().ok_or_else(|| Error::format("checkpoint", "missing header"))?;
        let spec: MlpSpec = serde_json::from_slice(header)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let blob = lines.next().ok_or_else(|| Error::format("checkpoint", "missing blob"))?;
        let expected = spec.parameter_count() * 8;
        if blob.len() != expected {
            return Err(Error::format(
                "checkpoint",
                format!("blob is {} bytes, expected {expected}", blob.len()),
            ));
        }
        let flat: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("checkpoint", "non-finite parameter"));
        }
        let mut params = MlpParameters::zeros(spec)?;
        params.unflatten_into(&flat)?;
        Ok(params)
    }
}

/// Encoding of EDR targets for training and prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpace {
    /// Raw linear radiance.
    Linear,
    /// `log2(1 + I)`; keeps zero radiance finite.
    Log2Edr,
}

impl TargetSpace {
    #[inline]
    pub fn encode(&self, linear: f64) -> f64 {
        match self {
            TargetSpace::Linear => linear,
            TargetSpace::Log2Edr => (1.0 + linear).log2(),
        }
    }

    #[inline]
    pub fn decode(&self, value: f64) -> f64 {
        match self {
            TargetSpace::Linear => value.max(0.0),
            TargetSpace::Log2Edr => (value.exp2() - 1.0).max(0.0),
        }
    }
}

/// Concatenates `(X, Y, Z, Omega/Omega_max, label/3)` to each pixel's
/// feature vector.
pub fn attach_priori(
    features: &[Vec<f64>],
    dirs: &DirectionMap,
    omega: &SolidAngleMap,
    label: &LabelMap,
) -> Result<Vec<Vec<f64>>> {
    let n = dirs.resolution();
    if omega.resolution() != n || label.resolution() != n || features.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "features {} / dirs {}^2 / omega {}^2 / label {}^2",
            features.len(),
            n,
            omega.resolution(),
            label.resolution()
        )));
    }
    let omega_max = omega.values().iter().cloned().fold(0.0f64, f64::max);
    let scale = if omega_max > 0.0 { 1.0 / omega_max } else { 0.0 };
    Ok(features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let d = dirs.values()[i];
            let mut out = f.clone();
            out.extend_from_slice(&[
                d[0],
                d[1],
                d[2],
                omega.values()[i] * scale,
                label.classes()[i] as f64 / 3.0,
            ]);
            out
        })
        .collect())
}

/// Runs the head over every pixel of an image (RGB features only) and
/// decodes the output back to linear radiance.
pub fn predict_image(
    params: &MlpParameters,
    ldr: &RadianceImage,
    target_space: TargetSpace,
) -> Result<RadianceImage> {
    if params.spec.input_channels != 3 || params.spec.output_channels != 3 {
        return Err(Error::ShapeMismatch(format!(
            "predict_image needs a 3->3 head, spec is {:?}",
            params.spec
        )));
    }
    let outputs: Vec<Result<[f32; 3]>> = crate::par::map(ldr.pixels(), |px| {
        let out = params.forward(&[px[0] as f64, px[1] as f64, px[2] as f64])?;
        Ok([
            target_space.decode(out[0]) as f32,
            target_space.decode(out[1]) as f32,
            target_space.decode(out[2]) as f32,
        ])
    });
    let mut pixels = Vec::with_capacity(outputs.len());
    for px in outputs {
        pixels.push(px?);
    }
    RadianceImage::from_pixels(ldr.width(), ldr.height(), pixels)
}

/// Head evaluation against ground truth: EV and illumination ratios
/// plus HDR-space reconstruction losses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadReport {
    pub ev_ratio: f64,
    pub illumination_ratio: f64,
    pub l1_hdr: f64,
    pub l2_hdr: f64,
}

pub fn evaluate_head(
    predicted: &RadianceImage,
    truth: &RadianceImage,
    omega: &SolidAngleMap,
) -> Result<HeadReport> {
    predicted.ensure_same_shape(truth)?;
    let ii_truth = integrated_illumination(truth, omega)?;
    let ii_pred = integrated_illumination(predicted, omega)?;
    let ev_truth = dynamic_range_ev(truth)?.stops;
    let ev_pred = dynamic_range_ev(predicted).map(|e| e.stops).unwrap_or(f64::NEG_INFINITY);
    Ok(HeadReport {
        ev_ratio: if ev_truth != 0.0 { ev_pred / ev_truth } else { f64::NAN },
        illumination_ratio: if ii_truth > 0.0 { ii_pred / ii_truth } else { 0.0 },
        l1_hdr: losses::l1(truth, predicted, None)?.value,
        l2_hdr: losses::l2(truth, predicted, None)?.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmap::{directions, solid_angles, SkyangularGeometry};
    use crate::segmentation::{compose_label, ClassMask};

    #[test]
    fn spec_parameter_count() {
        let spec = MlpSpec { input_channels: 3, hidden_layers: 2, hidden_width: 4, output_channels: 3 };
        // 3*4+4 + 4*4+4 + 4*3+3 = 16 + 20 + 15
        assert_eq!(spec.parameter_count(), 51);
        assert_eq!(spec.layer_dims(), vec![(3, 4), (4, 4), (4, 3)]);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let spec = MlpSpec::ldr2edr(2);
        let params = MlpParameters::zeros(spec).unwrap();
        let out = params.forward(&[0.3, 0.8, 0.1]).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer_passes_through() {
        let spec = MlpSpec { input_channels: 3, hidden_layers: 0, hidden_width: 1, output_channels: 3 };
        let mut params = MlpParameters::zeros(spec).unwrap();
        for i in 0..3 {
            params.layers[0].weights[i * 3 + i] = 1.0;
        }
        let out = params.forward(&[0.5, -0.2, 7.0]).unwrap();
        assert_eq!(out, vec![0.5, -0.2, 7.0]);
    }

    #[test]
    fn per_pixel_locality() {
        let spec = MlpSpec::ldr2edr(2);
        let params = MlpParameters::kaiming_init(spec, 3).unwrap();
        let a = RadianceImage::from_pixels(2, 1, vec![[0.1, 0.2, 0.3], [0.7, 0.8, 0.9]]).unwrap();
        let b = RadianceImage::from_pixels(2, 1, vec![[0.7, 0.8, 0.9], [0.1, 0.2, 0.3]]).unwrap();
        let pa = predict_image(&params, &a, TargetSpace::Log2Edr).unwrap();
        let pb = predict_image(&params, &b, TargetSpace::Log2Edr).unwrap();
        assert_eq!(pa.get(0, 0), pb.get(1, 0));
        assert_eq!(pa.get(1, 0), pb.get(0, 0));
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let params = MlpParameters::kaiming_init(MlpSpec::ldr2edr(1), 0).unwrap();
        assert!(params.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.ann");
        let params = MlpParameters::kaiming_init(MlpSpec::ldr2edr(3), 9).unwrap();
        params.save(&path).unwrap();
        let back = MlpParameters::load(&path).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn priori_augmentation() {
        let n = 16;
        let geom = SkyangularGeometry::new(n).unwrap();
        let omega = solid_angles(&geom);
        let dirs = directions(&geom);
        let label =
            compose_label(&ClassMask::empty(n, n), &ClassMask::empty(n, n), &geom).unwrap();
        let features = vec![vec![0.1, 0.2, 0.3]; n * n];
        let augmented = attach_priori(&features, &dirs, &omega, &label).unwrap();
        assert!(augmented.iter().all(|f| f.len() == 8));
        // Center pixel looks near the zenith with the largest footprint.
        let center = &augmented[(n / 2) * n + n / 2];
        assert!(center[5] > 0.99, "zenith Z {}", center[5]);
        assert!((center[6] - 1.0).abs() < 1e-9, "normalized omega {}", center[6]);
        // Corner pixel is border: omega 0, label 0.
        let corner = &augmented[0];
        assert_eq!(corner[6], 0.0);
        assert_eq!(corner[7], 0.0);
    }

    #[test]
    fn evaluate_head_perfect_and_zero_predictors() {
        let n = 32;
        let geom = SkyangularGeometry::new(n).unwrap();
        let omega = solid_angles(&geom);
        let truth = crate::synthetic::gradient_sky(n).unwrap();
        let perfect = evaluate_head(&truth, &truth, &omega).unwrap();
        assert_eq!(perfect.ev_ratio, 1.0);
        assert_eq!(perfect.illumination_ratio, 1.0);
        assert_eq!(perfect.l1_hdr, 0.0);
        let zero = evaluate_head(&RadianceImage::zeros(n, n), &truth, &omega).unwrap();
        assert_eq!(zero.illumination_ratio, 0.0);
    }
}
