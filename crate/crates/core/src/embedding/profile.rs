use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CLIP_MEAN: [f32; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
pub const CLIP_STD: [f32; 3] = [0.268_629_54, 0.261_302_6, 0.275_777_1];

/// Location of the bundled CLIP tokenizer files.
pub fn bundled_tokenizer_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("assets")
        .join("clip")
}

/// Dimensions and preprocessing constants of one encoder pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneProfile {
    pub name: String,
    pub image_dim: usize,
    pub text_dim: usize,
    pub input_resolution: u32,
    pub channel_mean: [f32; 3],
    pub channel_std: [f32; 3],
    pub context_length: usize,
    pub vocab_path: PathBuf,
    pub merges_path: PathBuf,
}

impl BackboneProfile {
    fn clip(name: &str, dim: usize) -> Self {
        let dir = bundled_tokenizer_dir();
        BackboneProfile {
            name: name.to_string(),
            image_dim: dim,
            text_dim: dim,
            input_resolution: 224,
            channel_mean: CLIP_MEAN,
            channel_std: CLIP_STD,
            context_length: 77,
            vocab_path: dir.join("vocab.json"),
            merges_path: dir.join("merges.txt"),
        }
    }

    pub fn clip_vit() -> Self {
        Self::clip("clip-vit", 512)
    }

    pub fn clip_rn50() -> Self {
        Self::clip("clip-rn50", 1024)
    }

    pub fn stub() -> Self {
        Self::clip("stub", 512)
    }

    /// Looks up a built-in profile by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "clip-vit" => Some(Self::clip_vit()),
            "clip-rn50" => Some(Self::clip_rn50()),
            "stub" => Some(Self::stub()),
            _ => None,
        }
    }

    /// Loads a profile from a JSON file. Relative tokenizer paths resolve
    /// against the file's directory.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut profile: BackboneProfile = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut profile.vocab_path, &mut profile.merges_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_dim == 0 || self.text_dim == 0 {
            return Err(Error::Config(format!(
                "profile {}: zero embedding dim",
                self.name
            )));
        }
        if self.input_resolution == 0 {
            return Err(Error::Config(format!(
                "profile {}: zero resolution",
                self.name
            )));
        }
        if self.context_length < 2 {
            return Err(Error::Config(format!(
                "profile {}: context_length must leave room for start/end markers",
                self.name
            )));
        }
        if self.channel_std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::Config(format!(
                "profile {}: channel_std must be positive",
                self.name
            )));
        }
        Ok(())
    }
}
