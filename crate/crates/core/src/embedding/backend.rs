//! Embedding backends: a seeded stub for fixtures and an ONNX-graph backend
//! for exported encoders.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::ArrayView3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tract_onnx::prelude::*;

use super::{BackboneProfile, TokenSequence};
use crate::corpus::{Generator, Label, SampleRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Image,
    Text,
}

/// Turns samples into vectors. Instances are owned by one worker at a time.
pub trait EmbeddingBackend {
    fn image_dim(&self) -> usize;
    fn text_dim(&self) -> usize;

    /// Whether `embed_image` needs decoded pixels; the stub only needs the
    /// sample identity.
    fn needs_pixels(&self) -> bool;

    fn embed_image(
        &mut self,
        sample: &SampleRecord,
        pixels: Option<ArrayView3<'_, f32>>,
    ) -> Result<Vec<f32>>;

    fn embed_text(&mut self, sample: &SampleRecord, tokens: &TokenSequence) -> Result<Vec<f32>>;
}

/// A class-dependent offset added to one coordinate of generated samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedBias {
    pub index: usize,
    pub magnitude: f32,
}

fn stub_rng(id: &str, modality: Modality, seed: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(id.as_bytes());
    h.update([0u8]);
    h.update(match modality {
        Modality::Image => b"image".as_slice(),
        Modality::Text => b"text".as_slice(),
    });
    h.update(seed.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Unit-norm pseudo-embedding keyed on (sample id, modality, seed).
///
/// With `planted_bias` set, generated samples get `magnitude` added to the
/// chosen coordinate before the final normalization.
pub fn embed_stub(
    sample: &SampleRecord,
    modality: Modality,
    seed: u64,
    dim: usize,
    planted_bias: Option<PlantedBias>,
) -> Vec<f32> {
    let mut rng = stub_rng(&sample.id, modality, seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    if let Some(bias) = planted_bias {
        if sample.label == Label::Generated && bias.index < dim {
            v[bias.index] += f64::from(bias.magnitude);
            normalize(&mut v);
        }
    }
    v.into_iter().map(|x| x as f32).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StubConfig {
    pub seed: u64,
    /// Per-generator planted direction, applied to image vectors only.
    #[serde(default)]
    pub planted: BTreeMap<Generator, PlantedBias>,
}

pub struct StubBackend {
    config: StubConfig,
    profile: BackboneProfile,
}

impl StubBackend {
    pub fn new(config: StubConfig, profile: BackboneProfile) -> Self {
        StubBackend { config, profile }
    }
}

fn check_pixels(pixels: ArrayView3<'_, f32>, profile: &BackboneProfile) -> Result<()> {
    let r = profile.input_resolution as usize;
    if pixels.shape() != [3, r, r] {
        return Err(Error::DimensionMismatch {
            context: format!("pixel tensor {:?} for resolution {r}", pixels.shape()),
            expected: 3 * r * r,
            actual: pixels.len(),
        });
    }
    Ok(())
}

impl EmbeddingBackend for StubBackend {
    fn image_dim(&self) -> usize {
        self.profile.image_dim
    }

    fn text_dim(&self) -> usize {
        self.profile.text_dim
    }

    fn needs_pixels(&self) -> bool {
        false
    }

    fn embed_image(
        &mut self,
        sample: &SampleRecord,
        pixels: Option<ArrayView3<'_, f32>>,
    ) -> Result<Vec<f32>> {
        if let Some(p) = pixels {
            check_pixels(p, &self.profile)?;
        }
        let bias = self.config.planted.get(&sample.generator).copied();
        Ok(embed_stub(
            sample,
            Modality::Image,
            self.config.seed,
            self.profile.image_dim,
            bias,
        ))
    }

    fn embed_text(&mut self, sample: &SampleRecord, tokens: &TokenSequence) -> Result<Vec<f32>> {
        if tokens.ids.len() != self.profile.context_length {
            return Err(Error::DimensionMismatch {
                context: "token sequence".into(),
                expected: self.profile.context_length,
                actual: tokens.ids.len(),
            });
        }
        Ok(embed_stub(
            sample,
            Modality::Text,
            self.config.seed,
            self.profile.text_dim,
            None,
        ))
    }
}

type Plan = Arc<TypedSimplePlan>;

fn backend_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Backend(format!("{}: {e}", path.display()))
}

/// Loads a graph, checks its named input and output, and fixes the input
/// shape for batch size one.
fn load_graph(path: &Path, input: &str, output: &str, fact: InferenceFact) -> Result<Plan> {
    let model = tract_onnx::onnx()
        .model_for_path(path)
        .map_err(|e| backend_err(path, e))?;
    let inputs = model.input_outlets().map_err(|e| backend_err(path, e))?;
    if inputs.len() != 1 || model.node(inputs[0].node).name != input {
        return Err(backend_err(
            path,
            format!("expected a single input named {input:?}"),
        ));
    }
    let outputs = model.output_outlets().map_err(|e| backend_err(path, e))?;
    let position = outputs
        .iter()
        .position(|o| model.outlet_label(*o) == Some(output) || model.node(o.node).name == output)
        .ok_or_else(|| backend_err(path, format!("no output named {output:?}")))?;
    let keep = outputs[position];
    model
        .with_output_outlets(&[keep])
        .and_then(|m| m.with_input_fact(0, fact))
        .and_then(|m| m.into_optimized())
        .and_then(|m| m.into_runnable())
        .map_err(|e| backend_err(path, e))
}

/// Runs exported encoder graphs (`pixel_values` -> `image_embeds`,
/// `input_ids` -> `text_embeds`).
pub struct OnnxBackend {
    profile: BackboneProfile,
    image: Option<(PathBuf, Plan)>,
    text: Option<(PathBuf, Plan)>,
}

impl OnnxBackend {
    pub fn load(
        profile: BackboneProfile,
        image_model: Option<&Path>,
        text_model: Option<&Path>,
    ) -> Result<Self> {
        let r = profile.input_resolution as usize;
        let image = image_model
            .map(|p| {
                let fact = f32::fact([1, 3, r, r]).into();
                load_graph(p, "pixel_values", "image_embeds", fact)
                    .map(|plan| (p.to_path_buf(), plan))
            })
            .transpose()?;
        let text = text_model
            .map(|p| {
                let fact = i64::fact([1, profile.context_length]).into();
                load_graph(p, "input_ids", "text_embeds", fact).map(|plan| (p.to_path_buf(), plan))
            })
            .transpose()?;
        Ok(OnnxBackend {
            profile,
            image,
            text,
        })
    }

    fn run(plan: &Plan, path: &Path, input: Tensor, dim: usize) -> Result<Vec<f32>> {
        let out = plan
            .run(tvec!(input.into()))
            .map_err(|e| backend_err(path, e))?;
        let view = out[0]
            .to_plain_array_view::<f32>()
            .map_err(|e| backend_err(path, e))?;
        if view.len() != dim {
            return Err(Error::DimensionMismatch {
                context: format!("{} output", path.display()),
                expected: dim,
                actual: view.len(),
            });
        }
        let v: Vec<f32> = view.iter().copied().collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(backend_err(path, "non-finite embedding"));
        }
        Ok(v)
    }
}

impl EmbeddingBackend for OnnxBackend {
    fn image_dim(&self) -> usize {
        self.profile.image_dim
    }

    fn text_dim(&self) -> usize {
        self.profile.text_dim
    }

    fn needs_pixels(&self) -> bool {
        true
    }

    fn embed_image(
        &mut self,
        _sample: &SampleRecord,
        pixels: Option<ArrayView3<'_, f32>>,
    ) -> Result<Vec<f32>> {
        let (path, plan) = self
            .image
            .as_ref()
            .ok_or_else(|| Error::Backend("no image graph loaded".into()))?;
        let pixels = pixels.ok_or_else(|| Error::Backend("image graph needs pixels".into()))?;
        check_pixels(pixels, &self.profile)?;
        let r = self.profile.input_resolution as usize;
        let data: Vec<f32> = pixels.iter().copied().collect();
        let tensor = Tensor::from_shape(&[1, 3, r, r], &data).map_err(|e| backend_err(path, e))?;
        Self::run(plan, path, tensor, self.profile.image_dim)
    }

    fn embed_text(&mut self, _sample: &SampleRecord, tokens: &TokenSequence) -> Result<Vec<f32>> {
        let (path, plan) = self
            .text
            .as_ref()
            .ok_or_else(|| Error::Backend("no text graph loaded".into()))?;
        let ctx = self.profile.context_length;
        if tokens.ids.len() != ctx {
            return Err(Error::DimensionMismatch {
                context: "token sequence".into(),
                expected: ctx,
                actual: tokens.ids.len(),
            });
        }
        let tensor =
            Tensor::from_shape(&[1, ctx], &tokens.ids).map_err(|e| backend_err(path, e))?;
        Self::run(plan, path, tensor, self.profile.text_dim)
    }
}

/// Recipe for building one backend instance per extraction worker.
#[derive(Debug, Clone)]
pub enum BackendSpec {
    Stub(StubConfig),
    Onnx {
        image_model: Option<PathBuf>,
        text_model: Option<PathBuf>,
    },
}

impl BackendSpec {
    pub fn instantiate(
        &self,
        profile: &BackboneProfile,
    ) -> Result<Box<dyn EmbeddingBackend + Send>> {
        Ok(match self {
            BackendSpec::Stub(cfg) => Box::new(StubBackend::new(cfg.clone(), profile.clone())),
            BackendSpec::Onnx {
                image_model,
                text_model,
            } => Box::new(OnnxBackend::load(
                profile.clone(),
                image_model.as_deref(),
                text_model.as_deref(),
            )?),
        })
    }
}
