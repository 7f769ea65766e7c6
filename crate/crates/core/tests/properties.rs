mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::{brute_force_auc, pearson_oracle};
use diffdetect_core::corpus::{
    Dataset, Generator, Label, MacroCategory, Manifest, RecordFilter, SampleRecord, Split,
};
use diffdetect_core::embedding::{
    embed_stub, fuse, BackboneProfile, ClipTokenizer, EmbeddingRecord, EmbeddingStore, Modality,
};
use diffdetect_core::linguistics::{
    correlation_report, profile, CorrelationMeta, TokenAnnotation, Upos,
};
use diffdetect_core::metrics::{
    accuracy, category_error_rates, confusion_at_threshold, pearson, roc_auc, threshold_predictions,
};
use diffdetect_core::trainer::{lr_at, param_count, MlpConfig};
use proptest::prelude::*;

fn labelled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..200).prop_flat_map(|n| {
        (
            // Coarse grid so that ties are common.
            proptest::collection::vec((-20i32..20).prop_map(|k| f64::from(k) / 8.0), n),
            proptest::collection::vec(0u8..2, n),
        )
            .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
    })
}

proptest! {
    #[test]
    fn auc_equals_pairwise_oracle((scores, labels) in labelled_scores()) {
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), brute_force_auc(&scores, &labels));
    }

    #[test]
    fn auc_invariant_under_increasing_maps((scores, labels) in labelled_scores()) {
        let base = roc_auc(&scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        prop_assert_eq!(roc_auc(&affine, &labels).unwrap(), base);
        prop_assert_eq!(roc_auc(&exp, &labels).unwrap(), base);
    }

    #[test]
    fn accuracy_agrees_with_confusion((scores, labels) in labelled_scores(), t in 0.0f64..1.0) {
        let probs: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
        let c = confusion_at_threshold(&probs, &labels, t).unwrap();
        let acc = accuracy(&threshold_predictions(&probs, t), &labels).unwrap();
        prop_assert_eq!(acc, 100.0 * (c.tp + c.tn) as f64 / labels.len() as f64);
        prop_assert_eq!(c.total(), labels.len() as u64);
    }

    #[test]
    fn category_buckets_sum_to_global(
        (scores, labels) in labelled_scores(),
        cat_seed in proptest::collection::vec(0usize..3, 200),
    ) {
        let names = ["animate", "inanimate", "unknown"];
        let cats: Vec<&str> = (0..labels.len()).map(|i| names[cat_seed[i]]).collect();
        let r = category_error_rates(&scores, &labels, &cats, 0.5).unwrap();
        prop_assert_eq!(r.total(), confusion_at_threshold(&scores, &labels, 0.5).unwrap());
        for e in r.categories.values() {
            for p in [e.fn_pct, e.fp_pct].into_iter().flatten() {
                prop_assert!((0.0..=100.0).contains(&p));
            }
        }
    }

    #[test]
    fn pearson_matches_oracle_and_is_bounded(
        pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..200),
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = pearson(&x, &y).unwrap();
        prop_assert!((r - pearson_oracle(&x, &y)).abs() < 1e-12);
        prop_assert!(r.abs() <= 1.0 + 1e-12);
        prop_assert_eq!(r, pearson(&y, &x).unwrap());
    }

    #[test]
    fn pearson_of_affine_map_is_sign_of_slope(
        x in proptest::collection::vec(-50.0f64..50.0, 3..100),
        a in -10.0f64..10.0,
        b in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
    ) {
        prop_assume!(x.iter().any(|&v| (v - x[0]).abs() > 1e-3));
        let y: Vec<f64> = x.iter().map(|v| a + b * v).collect();
        prop_assert!((pearson(&x, &y).unwrap() - b.signum()).abs() < 1e-9);
    }

    #[test]
    fn lr_schedule_is_monotone_with_exact_endpoints(
        epochs in 2usize..400,
        start in 0.01f64..1.0,
        ratio in 1.0f64..1000.0,
    ) {
        let cfg = MlpConfig { max_epochs: epochs, lr_start: start, lr_end: start / ratio, ..MlpConfig::new(4) };
        prop_assert_eq!(lr_at(0, &cfg).unwrap(), cfg.lr_start);
        prop_assert_eq!(lr_at(epochs - 1, &cfg).unwrap(), cfg.lr_end);
        let lrs: Vec<f64> = (0..epochs).map(|e| lr_at(e, &cfg).unwrap()).collect();
        prop_assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn param_count_formula(input in 1usize..2000, hidden in proptest::collection::vec(1usize..300, 0..4)) {
        let cfg = MlpConfig { hidden_dims: hidden.clone(), ..MlpConfig::new(input) };
        let mut widths = vec![input];
        widths.extend(&hidden);
        widths.push(1);
        let expected: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        prop_assert_eq!(param_count(&cfg), expected);
    }
}

fn record_strategy() -> impl Strategy<Value = SampleRecord> {
    (
        "[a-z0-9]{1,12}",
        "[ -~]{0,30}",
        prop_oneof![
            Just(None),
            Just(Some(Generator::StableDiffusion)),
            Just(Some(Generator::Glide)),
            Just(Some(Generator::Other("dalle".into())))
        ],
        prop_oneof![Just(Dataset::Mscoco), Just(Dataset::Wikimedia)],
        prop_oneof![
            Just(MacroCategory::Animate),
            Just(MacroCategory::Inanimate),
            Just(MacroCategory::Unknown)
        ],
        prop_oneof![Just(Split::Train), Just(Split::Val), Just(Split::Test)],
        proptest::option::of("[A-Za-z]{1,8}"),
    )
        .prop_map(
            |(id, caption, generator, dataset, macro_category, split, category)| SampleRecord {
                image_path: format!("img/{id}.png"),
                id,
                caption,
                label: if generator.is_some() {
                    Label::Generated
                } else {
                    Label::Real
                },
                generator: generator.unwrap_or(Generator::None),
                dataset,
                category,
                macro_category,
                split,
            },
        )
}

fn unique_records() -> impl Strategy<Value = Vec<SampleRecord>> {
    proptest::collection::vec(record_strategy(), 0..30).prop_map(|mut v| {
        let mut seen = std::collections::BTreeSet::new();
        v.retain(|r| seen.insert(r.id.clone()));
        v
    })
}

fn filter_strategy() -> impl Strategy<Value = RecordFilter> {
    (
        proptest::option::of(prop_oneof![Just(Split::Train), Just(Split::Test)]),
        proptest::option::of(prop_oneof![Just(Label::Real), Just(Label::Generated)]),
        proptest::option::of(prop_oneof![
            Just(Generator::Glide),
            Just(Generator::StableDiffusion)
        ]),
        proptest::option::of(prop_oneof![Just(Dataset::Mscoco), Just(Dataset::Wikimedia)]),
        any::<bool>(),
    )
        .prop_map(|(split, label, generator, dataset, real_and)| {
            let mut f = match (generator, real_and) {
                (Some(g), true) => RecordFilter::real_and(g),
                (Some(g), false) => RecordFilter::any().generator(g),
                (None, _) => RecordFilter::any(),
            };
            if let Some(s) = split {
                f = f.split(s);
            }
            if let Some(l) = label {
                f = f.label(l);
            }
            if let Some(d) = dataset {
                f = f.dataset(d);
            }
            f
        })
}

proptest! {
    #[test]
    fn manifest_jsonl_round_trip(records in unique_records()) {
        let m = Manifest::new(records, "prop").unwrap();
        let back = Manifest::from_jsonl(&m.to_jsonl(), Path::new("m.jsonl")).unwrap();
        prop_assert_eq!(back.records(), m.records());
    }

    #[test]
    fn filter_conjunction(records in unique_records(), a in filter_strategy(), b in filter_strategy()) {
        let both = a.and(&b);
        for r in &records {
            prop_assert_eq!(both.matches(r), a.matches(r) && b.matches(r));
        }
        let m = Manifest::new(records, "prop").unwrap();
        let chained = m.filter(&a).filter(&b);
        let direct = m.filter(&both);
        prop_assert_eq!(chained.records(), direct.records());
    }

    #[test]
    fn split_counts_total(records in unique_records()) {
        let n = records.len();
        let m = Manifest::new(records, "prop").unwrap();
        prop_assert_eq!(m.split_counts().values().sum::<usize>(), n);
    }

    #[test]
    fn store_round_trip(
        dims in (1usize..8, 0usize..5),
        rows in proptest::collection::vec(proptest::collection::vec(-5.0f32..5.0, 13), 0..10),
    ) {
        let (di, dt) = dims;
        let records: Vec<EmbeddingRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, v)| EmbeddingRecord {
                sample_id: format!("s{i}"),
                image_vec: v[..di].to_vec(),
                text_vec: (dt > 0).then(|| v[di..di + dt].to_vec()),
            })
            .collect();
        let store = EmbeddingStore::new(di, dt, records).unwrap();
        let back = EmbeddingStore::from_bytes(&store.to_bytes()).unwrap();
        prop_assert_eq!(back.to_bytes(), store.to_bytes());
        prop_assert_eq!(back.records(), store.records());
    }

    #[test]
    fn stub_vectors_are_unit_norm(id in "[ -~]{1,20}", seed in any::<u64>(), text in any::<bool>()) {
        let modality = if text { Modality::Text } else { Modality::Image };
        let r = record_for_stub(&id);
        let v = embed_stub(&r, modality, seed, 64, None);
        let norm: f64 = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fused_layout(image in proptest::collection::vec(-1.0f32..1.0, 0..20), text in proptest::collection::vec(-1.0f32..1.0, 0..20)) {
        let f = fuse(&image, &text);
        prop_assert_eq!(f.len(), image.len() + text.len());
        prop_assert_eq!(&f[..image.len()], &image[..]);
        prop_assert_eq!(&f[image.len()..], &text[..]);
    }

    #[test]
    fn token_sequences_are_framed(caption in "\\PC{0,200}") {
        let tok = tokenizer();
        let seq = tok.tokenize(&caption);
        prop_assert_eq!(seq.ids.len(), 77);
        prop_assert_eq!(seq.ids[0], tok.start_id());
        prop_assert!(seq.effective_length >= 2 && seq.effective_length <= 77);
        prop_assert_eq!(seq.ids[seq.effective_length - 1], tok.end_id());
        prop_assert!(seq.ids[seq.effective_length..].iter().all(|&i| i == 0));
    }
}

fn tokenizer() -> &'static ClipTokenizer {
    static TOK: std::sync::OnceLock<ClipTokenizer> = std::sync::OnceLock::new();
    TOK.get_or_init(|| ClipTokenizer::from_profile(&BackboneProfile::clip_vit()).unwrap())
}

fn record_for_stub(id: &str) -> SampleRecord {
    SampleRecord {
        id: id.into(),
        image_path: "x.png".into(),
        caption: String::new(),
        label: Label::Real,
        generator: Generator::None,
        dataset: Dataset::Mscoco,
        category: None,
        macro_category: MacroCategory::Unknown,
        split: Split::Train,
    }
}

fn token_strategy() -> impl Strategy<Value = TokenAnnotation> {
    ("[a-z.,0-9 ]{1,6}", 0usize..18, any::<bool>()).prop_map(|(text, tag, is_stop)| {
        let upos = Upos::ALL[tag];
        TokenAnnotation {
            is_alpha: text.chars().all(char::is_alphabetic),
            is_space: upos == Upos::Space,
            text,
            upos,
            is_stop,
        }
    })
}

proptest! {
    #[test]
    fn profile_is_additive(
        a in proptest::collection::vec(token_strategy(), 0..12),
        b in proptest::collection::vec(token_strategy(), 0..12),
        ca in "[a-z ]{0,20}",
        cb in "[a-z ]{0,20}",
        ea in 0u32..4,
        eb in 0u32..4,
    ) {
        let joined: Vec<_> = a.iter().chain(&b).cloned().collect();
        let whole = profile(&format!("{ca}{cb}"), &joined, ea + eb);
        prop_assert_eq!(whole, profile(&ca, &a, ea) + profile(&cb, &b, eb));
        prop_assert_eq!(whole.token_count(), joined.len() as u64);
        for f in ["STOPS", "NON_ALPHA", "SPACE"] {
            prop_assert!(whole.get(f).unwrap() <= joined.len() as u64);
        }
    }

    #[test]
    fn correlation_ignores_sample_order(
        rows in proptest::collection::vec((proptest::collection::vec(token_strategy(), 0..8), 0u8..2), 3..30),
        rotation in 0usize..30,
    ) {
        let build = |order: &[usize]| {
            let mut profiles = BTreeMap::new();
            let mut outcomes = BTreeMap::new();
            for &i in order {
                let (tokens, o) = &rows[i];
                profiles.insert(format!("s{i}"), profile("cap", tokens, 0));
                outcomes.insert(format!("s{i}"), *o);
            }
            correlation_report(&profiles, &outcomes, CorrelationMeta::default()).unwrap()
        };
        let forward: Vec<usize> = (0..rows.len()).collect();
        let mut shuffled = forward.clone();
        shuffled.rotate_left(rotation % rows.len());
        shuffled.reverse();
        prop_assert_eq!(build(&forward), build(&shuffled));
    }
}
