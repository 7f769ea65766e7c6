//! Dataset manifests: one captioned image per record, real or generated.
//!
//! The on-disk form is JSONL with exactly the fields of [`SampleRecord`].
//! Parsing enforces the record invariants (unique ids, `real` iff generator
//! `none`, non-empty image path); the caption pairing check is opt-in via
//! [`Manifest::check_paired`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{read_bytes, write_atomic};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Generated,
}

impl Label {
    /// Positive class is `Generated`.
    pub fn as_binary(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Generated => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Generated => "generated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Generator {
    None,
    StableDiffusion,
    Glide,
    Other(String),
}

impl Generator {
    pub fn as_str(&self) -> &str {
        match self {
            Generator::None => "none",
            Generator::StableDiffusion => "stable_diffusion",
            Generator::Glide => "glide",
            Generator::Other(name) => name,
        }
    }

    /// Human-readable name as used in result tables.
    pub fn display_name(&self) -> &str {
        match self {
            Generator::None => "None",
            Generator::StableDiffusion => "Stable Diffusion",
            Generator::Glide => "GLIDE",
            Generator::Other(name) => name,
        }
    }
}

impl TryFrom<String> for Generator {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        Ok(match s.as_str() {
            "none" => Generator::None,
            "stable_diffusion" => Generator::StableDiffusion,
            "glide" => Generator::Glide,
            "" => return Err("empty generator name".into()),
            _ => Generator::Other(s),
        })
    }
}

impl std::str::FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Generator::try_from(s.to_string())
    }
}

impl From<Generator> for String {
    fn from(g: Generator) -> String {
        g.as_str().to_string()
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Dataset {
    Mscoco,
    Wikimedia,
    Other(String),
}

impl Dataset {
    pub fn as_str(&self) -> &str {
        match self {
            Dataset::Mscoco => "mscoco",
            Dataset::Wikimedia => "wikimedia",
            Dataset::Other(name) => name,
        }
    }

    pub fn display_name(&self) -> &str {
        match self {
            Dataset::Mscoco => "MSCOCO",
            Dataset::Wikimedia => "Wikimedia",
            Dataset::Other(name) => name,
        }
    }
}

impl TryFrom<String> for Dataset {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        Ok(match s.as_str() {
            "mscoco" => Dataset::Mscoco,
            // Result tables call the same corpus "Wikipedia".
            "wikimedia" | "wikipedia" => Dataset::Wikimedia,
            "" => return Err("empty dataset name".into()),
            _ => Dataset::Other(s),
        })
    }
}

impl std::str::FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Dataset::try_from(s.to_string())
    }
}

impl From<Dataset> for String {
    fn from(d: Dataset) -> String {
        d.as_str().to_string()
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacroCategory {
    Animate,
    Inanimate,
    Unknown,
}

impl MacroCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            MacroCategory::Animate => "animate",
            MacroCategory::Inanimate => "inanimate",
            MacroCategory::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One captioned image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub image_path: String,
    pub caption: String,
    pub label: Label,
    pub generator: Generator,
    pub dataset: Dataset,
    pub category: Option<String>,
    pub macro_category: MacroCategory,
    pub split: Split,
}

impl SampleRecord {
    /// A blank caption is accepted but flagged; such records are left out of
    /// image+text training unless explicitly requested.
    pub fn is_degenerate(&self) -> bool {
        self.caption.trim().is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidManifest("empty id".into()));
        }
        if self.image_path.is_empty() {
            return Err(Error::InvalidManifest(format!(
                "record {:?}: empty image_path",
                self.id
            )));
        }
        let consistent = (self.label == Label::Real) == (self.generator == Generator::None);
        if !consistent {
            return Err(Error::LabelGenerator {
                id: self.id.clone(),
                label: self.label.to_string(),
                generator: self.generator.to_string(),
            });
        }
        Ok(())
    }
}

/// An ordered, validated list of records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<SampleRecord>,
    pub source_note: String,
}

impl Manifest {
    /// Builds a manifest, checking every record invariant and id uniqueness.
    pub fn new(records: Vec<SampleRecord>, source_note: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for record in &records {
            record.validate()?;
            if !seen.insert(record.id.as_str()) {
                return Err(Error::DuplicateId(record.id.clone()));
            }
        }
        Ok(Manifest {
            records,
            source_note: source_note.into(),
        })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Every generated caption must match the caption of some real record.
    pub fn check_paired(&self) -> Result<()> {
        let real: HashSet<&str> = self
            .records
            .iter()
            .filter(|r| r.label == Label::Real)
            .map(|r| r.caption.as_str())
            .collect();
        for r in self.records.iter().filter(|r| r.label == Label::Generated) {
            if !real.contains(r.caption.as_str()) {
                return Err(Error::InvalidManifest(format!(
                    "record {:?}: generated caption has no real counterpart",
                    r.id
                )));
            }
        }
        Ok(())
    }

    pub fn split_counts(&self) -> BTreeMap<(Split, Label), usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry((r.split, r.label)).or_insert(0) += 1;
        }
        counts
    }

    pub fn filter(&self, predicate: &RecordFilter) -> Manifest {
        Manifest {
            records: self
                .records
                .iter()
                .filter(|r| predicate.matches(r))
                .cloned()
                .collect(),
            source_note: self.source_note.clone(),
        }
    }

    /// Concatenates manifests, re-checking id uniqueness across them.
    pub fn merge(parts: Vec<Manifest>) -> Result<Manifest> {
        let note = parts
            .iter()
            .map(|m| m.source_note.as_str())
            .collect::<Vec<_>>()
            .join(" + ");
        let records = parts.into_iter().flat_map(|m| m.records).collect();
        Manifest::new(records, note)
    }

    pub fn from_jsonl(text: &str, path: &Path) -> Result<Manifest> {
        let mut records = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: SampleRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            record.validate().map_err(|e| match e {
                Error::LabelGenerator { .. } => e,
                other => Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: other.to_string(),
                },
            })?;
            records.push(record);
        }
        Manifest::new(records, path.display().to_string())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records always serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn parse_manifest(path: &Path) -> Result<Manifest> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    Manifest::from_jsonl(&text, path)
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    write_atomic(path, manifest.to_jsonl().as_bytes())
}

/// Conjunctive predicate over the categorical record fields.
///
/// `None` accepts anything; `Some(set)` accepts only listed values (an empty
/// set accepts nothing).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordFilter {
    pub split: Option<Vec<Split>>,
    pub label: Option<Vec<Label>>,
    pub generator: Option<Vec<Generator>>,
    pub dataset: Option<Vec<Dataset>>,
    pub macro_category: Option<Vec<MacroCategory>>,
}

fn admits<T: PartialEq>(allowed: &Option<Vec<T>>, value: &T) -> bool {
    allowed.as_ref().is_none_or(|set| set.contains(value))
}

fn intersect<T: PartialEq + Clone>(a: &Option<Vec<T>>, b: &Option<Vec<T>>) -> Option<Vec<T>> {
    match (a, b) {
        (None, None) => None,
        (Some(x), None) | (None, Some(x)) => Some(x.clone()),
        (Some(x), Some(y)) => Some(x.iter().filter(|v| y.contains(v)).cloned().collect()),
    }
}

impl RecordFilter {
    pub fn any() -> Self {
        RecordFilter::default()
    }

    pub fn split(mut self, split: Split) -> Self {
        self.split = Some(vec![split]);
        self
    }

    pub fn generators(mut self, generators: impl IntoIterator<Item = Generator>) -> Self {
        self.generator = Some(generators.into_iter().collect());
        self
    }

    pub fn generator(self, generator: Generator) -> Self {
        self.generators([generator])
    }

    pub fn label(mut self, label: Label) -> Self {
        self.label = Some(vec![label]);
        self
    }

    pub fn dataset(mut self, dataset: Dataset) -> Self {
        self.dataset = Some(vec![dataset]);
        self
    }

    pub fn macro_category(mut self, category: MacroCategory) -> Self {
        self.macro_category = Some(vec![category]);
        self
    }

    /// Real records plus the generated records of one generator.
    pub fn real_and(generator: Generator) -> Self {
        RecordFilter::any().generators([Generator::None, generator])
    }

    pub fn matches(&self, r: &SampleRecord) -> bool {
        admits(&self.split, &r.split)
            && admits(&self.label, &r.label)
            && admits(&self.generator, &r.generator)
            && admits(&self.dataset, &r.dataset)
            && admits(&self.macro_category, &r.macro_category)
    }

    pub fn and(&self, other: &RecordFilter) -> RecordFilter {
        RecordFilter {
            split: intersect(&self.split, &other.split),
            label: intersect(&self.label, &other.label),
            generator: intersect(&self.generator, &other.generator),
            dataset: intersect(&self.dataset, &other.dataset),
            macro_category: intersect(&self.macro_category, &other.macro_category),
        }
    }
}

/// Shape of a synthetic paired corpus: per split, `real` real records and one
/// generated record per (real record, generator).
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    pub generators: Vec<Generator>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SyntheticCorpus {
    /// Builds the manifest. Records alternate between animate and inanimate
    /// macro-categories; ids and paths are derived from split and index, so
    /// the result is fully deterministic.
    pub fn build(&self) -> Result<Manifest> {
        const CATEGORIES: [(&str, MacroCategory); 4] = [
            ("Animal", MacroCategory::Animate),
            ("River", MacroCategory::Inanimate),
            ("Artist", MacroCategory::Animate),
            ("Road", MacroCategory::Inanimate),
        ];
        let mut records = Vec::new();
        for (split, n) in [
            (Split::Train, self.train),
            (Split::Val, self.val),
            (Split::Test, self.test),
        ] {
            for i in 0..n {
                let (category, macro_category) = CATEGORIES[i % CATEGORIES.len()];
                let caption = format!("{split} caption {i} of a {}", category.to_lowercase());
                records.push(SampleRecord {
                    id: format!("{split}-real-{i:05}"),
                    image_path: format!("real/{split}/{i:05}.png"),
                    caption: caption.clone(),
                    label: Label::Real,
                    generator: Generator::None,
                    dataset: self.dataset.clone(),
                    category: Some(category.to_string()),
                    macro_category,
                    split,
                });
                for g in &self.generators {
                    records.push(SampleRecord {
                        id: format!("{split}-{g}-{i:05}"),
                        image_path: format!("{g}/{split}/{i:05}.png"),
                        caption: caption.clone(),
                        label: Label::Generated,
                        generator: g.clone(),
                        dataset: self.dataset.clone(),
                        category: Some(category.to_string()),
                        macro_category,
                        split,
                    });
                }
            }
        }
        Manifest::new(records, "synthetic")
    }
}
