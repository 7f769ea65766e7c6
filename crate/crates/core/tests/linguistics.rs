mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::pearson_oracle;
use diffdetect_core::linguistics::{
    correlation_report, parse_annotations, parse_annotations_str, profile, CorrelationMeta,
    LinguisticProfile, TokenAnnotation, Upos, FEATURES,
};
use diffdetect_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture() -> BTreeMap<String, LinguisticProfile> {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/linguistics/annotations.jsonl");
    parse_annotations(&path)
        .unwrap()
        .into_iter()
        .map(|(id, a)| (id, a.profile()))
        .collect()
}

fn expect(p: &LinguisticProfile, nonzero: &[(&str, u64)]) {
    for f in FEATURES {
        let want = nonzero.iter().find(|(n, _)| *n == f).map_or(0, |(_, v)| *v);
        assert_eq!(p.get(f), Some(want), "{f}");
    }
}

#[test]
fn hand_counted_profiles() {
    let profiles = fixture();
    assert_eq!(profiles.len(), 3);
    expect(
        &profiles["dog"],
        &[
            ("LENGTH", 21),
            ("DET", 1),
            ("NOUN", 1),
            ("VERB", 1),
            ("ADP", 1),
            ("PROPN", 1),
            ("PUNCT", 1),
            ("STOPS", 2),
            ("NON_ALPHA", 1),
            ("NAMED_ENTITIES", 1),
        ],
    );
    expect(
        &profiles["cats"],
        &[
            ("LENGTH", 15),
            ("NUM", 1),
            ("NOUN", 1),
            ("SPACE", 1),
            ("VERB", 1),
            ("STOPS", 1),
            ("NON_ALPHA", 1),
            ("NAMED_ENTITIES", 1),
        ],
    );
    expect(
        &profiles["cars"],
        &[
            ("LENGTH", 21),
            ("DET", 2),
            ("ADJ", 2),
            ("NOUN", 2),
            ("PUNCT", 1),
            ("STOPS", 2),
            ("NON_ALPHA", 1),
        ],
    );
    assert_eq!(profiles["cars"].token_count(), 7);
    assert_eq!(profiles["dog"].pos_count(Upos::Propn), 1);
}

#[test]
fn length_counts_characters_not_bytes() {
    let p = profile("café ☕", &[], 0);
    assert_eq!(p.get("LENGTH"), Some(6));
}

#[test]
fn malformed_lines_are_located() {
    let good = r#"{"id":"a","caption":"x","tokens":[],"n_entities":0}"#;
    let cases = [
        format!("{good}\n{{\"id\":"),
        format!("{good}\n{}", good.replace("\"tokens\":[]", r#""tokens":[{"text":"x","upos":"NOPE","is_stop":false,"is_alpha":true,"is_space":false}]"#)),
        format!("{good}\n{good}"),
        format!("{good}\n{}", good.replace("\"n_entities\":0", "\"n_entities\":0,\"extra\":1")),
    ];
    for text in &cases {
        match parse_annotations_str(text, Path::new("ann.jsonl")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2, "{text}"),
            other => panic!("expected parse error for {text:?}, got {other:?}"),
        }
    }
}

fn token(upos: Upos) -> TokenAnnotation {
    TokenAnnotation {
        text: "w".into(),
        upos,
        is_stop: upos == Upos::Det,
        is_alpha: upos != Upos::Punct,
        is_space: false,
    }
}

/// Twenty captions whose outcome is 1 exactly when they hold at least three
/// nouns; other tags are drawn at random.
fn noun_fixture() -> (BTreeMap<String, LinguisticProfile>, BTreeMap<String, u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut profiles = BTreeMap::new();
    let mut outcomes = BTreeMap::new();
    for i in 0..20 {
        let nouns = i % 6;
        let mut tokens: Vec<TokenAnnotation> = (0..nouns).map(|_| token(Upos::Noun)).collect();
        for tag in [Upos::Det, Upos::Adj, Upos::Verb, Upos::Punct] {
            for _ in 0..rng.random_range(0..3) {
                tokens.push(token(tag));
            }
        }
        let caption = "w ".repeat(tokens.len());
        let id = format!("s{i:02}");
        profiles.insert(
            id.clone(),
            profile(&caption, &tokens, rng.random_range(0..2)),
        );
        outcomes.insert(id, u8::from(nouns >= 3));
    }
    (profiles, outcomes)
}

/// Point-biserial form: (mean1 - mean0) / sd * sqrt(p q), population sd.
fn point_biserial(x: &[f64], y: &[u8]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let group = |c: u8| {
        let v: Vec<f64> = x
            .iter()
            .zip(y)
            .filter(|(_, &l)| l == c)
            .map(|(v, _)| *v)
            .collect();
        (v.iter().sum::<f64>() / v.len() as f64, v.len() as f64 / n)
    };
    let ((m1, p), (m0, q)) = (group(1), group(0));
    (m1 - m0) / sd * (p * q).sqrt()
}

#[test]
fn correlations_match_point_biserial_oracle() {
    let (profiles, outcomes) = noun_fixture();
    let report = correlation_report(&profiles, &outcomes, CorrelationMeta::default()).unwrap();
    assert_eq!(report.n, 20);
    let y: Vec<u8> = outcomes.values().copied().collect();
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    for (k, f) in FEATURES.iter().enumerate() {
        let x: Vec<f64> = profiles.values().map(|p| p.counts[k] as f64).collect();
        match report.features.get(*f) {
            Some(&r) => {
                assert!((r - point_biserial(&x, &y)).abs() < 1e-9, "{f}");
                assert!((r - pearson_oracle(&x, &yf)).abs() < 1e-9, "{f}");
            }
            None => assert!(
                x.iter().all(|&v| v == x[0]),
                "{f} reported undefined but varies"
            ),
        }
    }
}

#[test]
fn constructed_dependency_has_largest_coefficient() {
    let (profiles, outcomes) = noun_fixture();
    let report = correlation_report(&profiles, &outcomes, CorrelationMeta::default()).unwrap();
    let (best, r) = report
        .features
        .iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    assert_eq!(best, "NOUN");
    assert!(*r > 0.8, "{r}");
}

#[test]
fn constant_features_are_undefined_not_zero() {
    let (profiles, outcomes) = noun_fixture();
    let report = correlation_report(&profiles, &outcomes, CorrelationMeta::default()).unwrap();
    for f in ["INTJ", "SPACE", "X", "SYM"] {
        assert!(report.undefined.contains(&f.to_string()), "{f}");
        assert!(!report.features.contains_key(f));
    }
    let json = serde_json::to_value(&report).unwrap();
    assert!(json["features"].get("INTJ").is_none());
    assert_eq!(
        report.features.len() + report.undefined.len(),
        FEATURES.len()
    );
}

#[test]
fn only_shared_ids_are_used() {
    let (profiles, mut outcomes) = noun_fixture();
    outcomes.insert("not-annotated".into(), 1);
    let report = correlation_report(&profiles, &outcomes, CorrelationMeta::default()).unwrap();
    assert_eq!(report.n, 20);
    assert!(correlation_report(&BTreeMap::new(), &outcomes, CorrelationMeta::default()).is_err());
}
