//! Image and caption feature extraction.

mod backend;
mod extract;
mod preprocess;
mod profile;
mod store;
mod tokenizer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use backend::{
    embed_stub, BackendSpec, EmbeddingBackend, Modality, OnnxBackend, PlantedBias, StubBackend,
    StubConfig,
};
pub use extract::{extract_corpus, ExtractOptions};
pub use preprocess::{load_rgb, preprocess_image};
pub use profile::{bundled_tokenizer_dir, BackboneProfile, CLIP_MEAN, CLIP_STD};
pub use store::{EmbeddingRecord, EmbeddingStore};
pub use tokenizer::{ClipTokenizer, TokenSequence};

/// Which features a classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    ImageOnly,
    ImageText,
}

impl FeatureMode {
    /// Label used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            FeatureMode::ImageOnly => "Image Only",
            FeatureMode::ImageText => "Text+Image",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::ImageOnly => "image_only",
            FeatureMode::ImageText => "image_text",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "image" | "image-only" | "image_only" => Ok(FeatureMode::ImageOnly),
            "image-text" | "image_text" | "image+text" | "text+image" => Ok(FeatureMode::ImageText),
            other => Err(format!(
                "unknown mode {other:?} (expected image or image-text)"
            )),
        }
    }
}

/// Concatenates image then text features.
pub fn fuse(image_vec: &[f32], text_vec: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(image_vec.len() + text_vec.len());
    out.extend_from_slice(image_vec);
    out.extend_from_slice(text_vec);
    out
}
