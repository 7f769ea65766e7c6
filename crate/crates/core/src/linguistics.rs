//! Caption profiles over universal POS annotations and their correlation with
//! classifier outcomes. Tagging itself happens elsewhere; this module reads
//! the annotation JSONL.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::io::read_bytes;
use crate::metrics::pearson;
use crate::{Error, Result};

/// The universal POS inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
    Space,
}

impl Upos {
    pub const ALL: [Upos; 18] = [
        Upos::Adj,
        Upos::Adp,
        Upos::Adv,
        Upos::Aux,
        Upos::Cconj,
        Upos::Det,
        Upos::Intj,
        Upos::Noun,
        Upos::Num,
        Upos::Part,
        Upos::Pron,
        Upos::Propn,
        Upos::Punct,
        Upos::Sconj,
        Upos::Sym,
        Upos::Verb,
        Upos::X,
        Upos::Space,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Upos::Adj => "ADJ",
            Upos::Adp => "ADP",
            Upos::Adv => "ADV",
            Upos::Aux => "AUX",
            Upos::Cconj => "CCONJ",
            Upos::Det => "DET",
            Upos::Intj => "INTJ",
            Upos::Noun => "NOUN",
            Upos::Num => "NUM",
            Upos::Part => "PART",
            Upos::Pron => "PRON",
            Upos::Propn => "PROPN",
            Upos::Punct => "PUNCT",
            Upos::Sconj => "SCONJ",
            Upos::Sym => "SYM",
            Upos::Verb => "VERB",
            Upos::X => "X",
            Upos::Space => "SPACE",
        }
    }
}

impl FromStr for Upos {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Upos::ALL
            .into_iter()
            .find(|u| u.as_str() == s)
            .ok_or_else(|| format!("unknown UPOS tag {s:?}"))
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Upos {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Upos {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    pub text: String,
    pub upos: Upos,
    pub is_stop: bool,
    pub is_alpha: bool,
    pub is_space: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionAnnotation {
    pub id: String,
    pub caption: String,
    pub tokens: Vec<TokenAnnotation>,
    pub n_entities: u32,
}

/// Reads annotation JSONL keyed by sample id. Blank lines are skipped.
pub fn parse_annotations(path: &Path) -> Result<BTreeMap<String, CaptionAnnotation>> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    parse_annotations_str(&text, path)
}

pub fn parse_annotations_str(
    text: &str,
    path: &Path,
) -> Result<BTreeMap<String, CaptionAnnotation>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: CaptionAnnotation =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let id = record.id.clone();
        if out.insert(id.clone(), record).is_some() {
            return Err(parse_err(format!("duplicate id {id:?}")));
        }
    }
    Ok(out)
}

/// Feature names in profile order.
pub const FEATURES: [&str; 22] = [
    "LENGTH",
    "ADJ",
    "ADP",
    "ADV",
    "AUX",
    "CCONJ",
    "DET",
    "INTJ",
    "NOUN",
    "NUM",
    "PART",
    "PRON",
    "PROPN",
    "PUNCT",
    "SCONJ",
    "SYM",
    "VERB",
    "X",
    "SPACE",
    "STOPS",
    "NON_ALPHA",
    "NAMED_ENTITIES",
];

const STOPS: usize = 19;
const NON_ALPHA: usize = 20;
const NAMED_ENTITIES: usize = 21;

/// Counts per feature, indexed like [`FEATURES`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinguisticProfile {
    pub counts: [u64; 22],
}

impl LinguisticProfile {
    pub fn get(&self, feature: &str) -> Option<u64> {
        FEATURES
            .iter()
            .position(|f| *f == feature)
            .map(|i| self.counts[i])
    }

    pub fn pos_count(&self, tag: Upos) -> u64 {
        self.counts[1 + tag as usize]
    }

    pub fn token_count(&self) -> u64 {
        Upos::ALL.iter().map(|&t| self.pos_count(t)).sum()
    }
}

impl std::ops::Add for LinguisticProfile {
    type Output = LinguisticProfile;

    fn add(mut self, other: LinguisticProfile) -> LinguisticProfile {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self
    }
}

impl Serialize for LinguisticProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(FEATURES.len()))?;
        for (name, v) in FEATURES.iter().zip(self.counts) {
            map.serialize_entry(name, &v)?;
        }
        map.end()
    }
}

/// LENGTH counts characters; SPACE counts tokens tagged SPACE, which for a
/// consistent annotation are exactly those flagged `is_space`.
pub fn profile(caption: &str, tokens: &[TokenAnnotation], n_entities: u32) -> LinguisticProfile {
    let mut p = LinguisticProfile::default();
    p.counts[0] = caption.chars().count() as u64;
    for t in tokens {
        p.counts[1 + t.upos as usize] += 1;
        p.counts[STOPS] += u64::from(t.is_stop);
        p.counts[NON_ALPHA] += u64::from(!t.is_alpha);
    }
    p.counts[NAMED_ENTITIES] = u64::from(n_entities);
    p
}

impl CaptionAnnotation {
    pub fn profile(&self) -> LinguisticProfile {
        profile(&self.caption, &self.tokens, self.n_entities)
    }
}

/// What the feature columns are correlated against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationTarget {
    /// 1 when the classifier got the sample right.
    #[default]
    Correctness,
    /// 1 when the classifier said "generated".
    PredictedLabel,
}

impl FromStr for CorrelationTarget {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "correctness" => Ok(CorrelationTarget::Correctness),
            "predicted" | "predicted_label" | "predicted-label" => {
                Ok(CorrelationTarget::PredictedLabel)
            }
            _ => Err(format!(
                "unknown correlation target {s:?} (correctness | predicted)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub model: String,
    pub generator: String,
    #[serde(default)]
    pub dataset: String,
    #[serde(default)]
    pub target: CorrelationTarget,
    /// Defined coefficients only.
    pub features: BTreeMap<String, f64>,
    /// Features with zero variance, in profile order.
    pub undefined: Vec<String>,
    pub n: usize,
}

impl CorrelationReport {
    /// Coefficient per feature in profile order; `None` when undefined.
    pub fn ordered(&self) -> Vec<(&'static str, Option<f64>)> {
        FEATURES
            .iter()
            .map(|&f| (f, self.features.get(f).copied()))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrelationMeta {
    pub model: String,
    pub generator: String,
    pub dataset: String,
    pub target: CorrelationTarget,
}

/// Pearson r of every feature against the 0/1 outcome over the ids present
/// in both maps.
pub fn correlation_report(
    profiles: &BTreeMap<String, LinguisticProfile>,
    outcomes: &BTreeMap<String, u8>,
    meta: CorrelationMeta,
) -> Result<CorrelationReport> {
    let joined: Vec<(&LinguisticProfile, f64)> = outcomes
        .iter()
        .filter_map(|(id, &o)| profiles.get(id).map(|p| (p, f64::from(o))))
        .collect();
    if joined.is_empty() {
        return Err(Error::InvalidInput(
            "no sample has both a profile and an outcome".into(),
        ));
    }
    if joined.len() < 2 {
        return Err(Error::InvalidInput(
            "correlation needs at least two samples".into(),
        ));
    }
    let y: Vec<f64> = joined.iter().map(|(_, o)| *o).collect();
    let mut features = BTreeMap::new();
    let mut undefined = Vec::new();
    for (k, name) in FEATURES.iter().enumerate() {
        let x: Vec<f64> = joined.iter().map(|(p, _)| p.counts[k] as f64).collect();
        match pearson(&x, &y) {
            Ok(r) => {
                features.insert(name.to_string(), r);
            }
            Err(Error::Undefined(_)) => undefined.push(name.to_string()),
            Err(e) => return Err(e),
        }
    }
    Ok(CorrelationReport {
        model: meta.model,
        generator: meta.generator,
        dataset: meta.dataset,
        target: meta.target,
        features,
        undefined,
        n: joined.len(),
    })
}
