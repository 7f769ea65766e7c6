use std::path::PathBuf;

use super::{
    load_rgb, preprocess_image, BackboneProfile, BackendSpec, ClipTokenizer, EmbeddingRecord,
    EmbeddingStore, FeatureMode,
};
use crate::corpus::{Manifest, SampleRecord};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// Directory that manifest `image_path`s are relative to.
    pub image_root: PathBuf,
    pub workers: usize,
    /// L2-normalize each modality's vector before storing it.
    pub l2_normalize: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            image_root: PathBuf::from("."),
            workers: 1,
            l2_normalize: false,
        }
    }
}

fn l2_normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut()
            .for_each(|x| *x = (f64::from(*x) / norm) as f32);
    }
}

type Outcome = std::result::Result<EmbeddingRecord, (String, String)>;

fn embed_chunk(
    records: &[SampleRecord],
    spec: &BackendSpec,
    profile: &BackboneProfile,
    tokenizer: Option<&ClipTokenizer>,
    options: &ExtractOptions,
) -> Result<Vec<Outcome>> {
    let mut backend = spec.instantiate(profile)?;
    let mut out = Vec::with_capacity(records.len());
    for sample in records {
        let mut one = || -> Result<EmbeddingRecord> {
            let pixels = if backend.needs_pixels() {
                let img = load_rgb(&options.image_root.join(&sample.image_path))?;
                Some(preprocess_image(&img, profile)?)
            } else {
                None
            };
            let mut image_vec = backend.embed_image(sample, pixels.as_ref().map(|p| p.view()))?;
            let mut text_vec = match tokenizer {
                Some(tok) => Some(backend.embed_text(sample, &tok.tokenize(&sample.caption))?),
                None => None,
            };
            if options.l2_normalize {
                l2_normalize(&mut image_vec);
                if let Some(t) = text_vec.as_mut() {
                    l2_normalize(t);
                }
            }
            Ok(EmbeddingRecord {
                sample_id: sample.id.clone(),
                image_vec,
                text_vec,
            })
        };
        out.push(one().map_err(|e| (sample.id.clone(), e.to_string())));
    }
    Ok(out)
}

/// Embeds every manifest record, in manifest order.
///
/// Work is split into contiguous chunks, one backend instance per worker.
/// Any per-sample failure fails the whole extraction and the error lists
/// every failing id.
pub fn extract_corpus(
    manifest: &Manifest,
    spec: &BackendSpec,
    profile: &BackboneProfile,
    mode: FeatureMode,
    options: &ExtractOptions,
) -> Result<EmbeddingStore> {
    profile.validate()?;
    let tokenizer = match mode {
        FeatureMode::ImageText => Some(ClipTokenizer::from_profile(profile)?),
        FeatureMode::ImageOnly => None,
    };
    let records = manifest.records();
    let workers = options.workers.max(1).min(records.len().max(1));
    let chunk = records.len().div_ceil(workers).max(1);

    let results: Vec<Result<Vec<Outcome>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .map(|part| {
                let tokenizer = tokenizer.as_ref();
                scope.spawn(move || embed_chunk(part, spec, profile, tokenizer, options))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Backend("extraction worker panicked".into())))
            })
            .collect()
    });

    let mut embedded = Vec::with_capacity(records.len());
    let mut failures = Vec::new();
    for part in results {
        for outcome in part? {
            match outcome {
                Ok(r) => embedded.push(r),
                Err(f) => failures.push(f),
            }
        }
    }
    if !failures.is_empty() {
        return Err(Error::Extraction(failures));
    }
    let text_dim = match mode {
        FeatureMode::ImageText => profile.text_dim,
        FeatureMode::ImageOnly => 0,
    };
    EmbeddingStore::new(profile.image_dim, text_dim, embedded)
}
