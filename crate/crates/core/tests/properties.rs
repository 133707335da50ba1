//! Property tests for the documented bounds of the feature extractors and
//! the probability metrics.

use proptest::collection::vec;
use proptest::prelude::*;

use ember_core::meta::{
    extract_generation, extract_label_based, rouge_l_f1, tokenize, GenPair, HashEmbedder,
    LabeledDoc,
};
use ember_core::prior::tv_distance;

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,6}"
}

fn text(max_words: usize) -> impl Strategy<Value = String> {
    vec(word(), 0..max_words).prop_map(|ws| ws.join(" "))
}

fn labeled_corpus() -> impl Strategy<Value = Vec<LabeledDoc>> {
    vec(("[a-d]", text(8)), 2..40).prop_map(|rows| {
        rows.into_iter()
            .map(|(label, text)| LabeledDoc { label, text })
            .collect()
    })
}

fn pair_corpus() -> impl Strategy<Value = Vec<GenPair>> {
    vec((text(8), text(8)), 1..20).prop_map(|rows| {
        rows.into_iter()
            .map(|(prompt, target)| GenPair { prompt, target })
            .collect()
    })
}

proptest! {
    #[test]
    fn label_features_respect_documented_bounds(docs in labeled_corpus()) {
        let v = extract_label_based(&docs).unwrap();
        let names = v.names();
        let get = |name: &str| v.values[names.iter().position(|n| n == name).unwrap()];
        let n_classes = get("nr_classes");
        prop_assert!(get("entropy") >= -1e-12);
        prop_assert!(get("entropy") <= n_classes.log2() + 1e-12);
        prop_assert!(get("imbalance_ratio") >= 1.0 - 1e-12);
        prop_assert!(get("min_class_prob") > 0.0 && get("max_class_prob") <= 1.0);
        prop_assert!(get("cv_doc_len") >= 0.0);
        prop_assert!((0.0..=1.0).contains(&get("landmark_acc")));
        prop_assert!(v.values.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn generation_features_respect_documented_bounds(pairs in pair_corpus()) {
        let v = extract_generation(&pairs, &HashEmbedder::default()).unwrap();
        let names = v.names();
        let get = |name: &str| v.values[names.iter().position(|n| n == name).unwrap()];
        for feature in ["prompt_ttr", "target_ttr"] {
            prop_assert!(get(feature) > 0.0 && get(feature) <= 1.0, "{feature} = {}", get(feature));
        }
        for feature in ["vocab_novelty", "rouge_l_f1"] {
            prop_assert!((0.0..=1.0).contains(&get(feature)), "{feature} = {}", get(feature));
        }
        prop_assert!(get("semantic_similarity") <= 1.0 + 1e-12);
        prop_assert!(v.values.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn rouge_f1_is_bounded_and_swap_invariant(a in text(12), b in text(12)) {
        let ta = tokenize(&a);
        let tb = tokenize(&b);
        let forward = rouge_l_f1(&ta, &tb);
        let backward = rouge_l_f1(&tb, &ta);
        prop_assert!((0.0..=1.0).contains(&forward));
        prop_assert_eq!(forward, backward, "precision and recall swap; F1 is invariant");
        prop_assert_eq!(rouge_l_f1(&ta, &ta), 1.0, "self-overlap is always perfect");
    }

    #[test]
    fn tv_distance_is_a_bounded_metric(
        raw_p in vec(1e-3..1.0f64, 4),
        raw_q in vec(1e-3..1.0f64, 4),
    ) {
        let normalize = |v: &[f64]| -> Vec<f64> {
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        };
        let p = normalize(&raw_p);
        let q = normalize(&raw_q);
        let d = tv_distance(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, tv_distance(&q, &p).unwrap());
        prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
    }
}
