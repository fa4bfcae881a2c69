//! Rationale extraction and attribution rendering properties.

use proptest::prelude::*;

use spanlab::corpus::{self, BioLabel, Post, SplitSpec, TagSequence};
use spanlab::explain::{self, RationaleConfig, Selection};
use spanlab::synth::{self, SynthConfig};

fn synthetic(n_posts: usize) -> Vec<Post> {
    synth::generate(&SynthConfig {
        n_posts,
        ..SynthConfig::default()
    })
    .unwrap()
    .posts
}

fn short(epochs: usize, lambda: f64) -> RationaleConfig {
    RationaleConfig {
        epochs,
        lambda,
        ..RationaleConfig::default()
    }
}

fn mean_gate(model: &explain::AreModel, posts: &[Post]) -> f64 {
    let gates: Vec<f64> = posts.iter().flat_map(|p| model.gates(p)).collect();
    gates.iter().sum::<f64>() / gates.len() as f64
}

#[test]
fn dropping_the_sparsity_term_never_raises_the_loss() {
    let posts = synthetic(200);
    let (_, free) = explain::are_train(&posts, &short(15, 0.0)).unwrap();
    let (_, sparse) = explain::are_train(&posts, &short(15, 0.5)).unwrap();
    assert!(free.epoch_loss.last() <= sparse.epoch_loss.last(), "{free:?} {sparse:?}");
}

#[test]
fn huge_sparsity_closes_the_gates() {
    let posts = synthetic(200);
    let (model, _) = explain::are_train(&posts, &short(30, 1e3)).unwrap();
    let g = mean_gate(&model, &posts);
    assert!(g < 0.05, "mean gate {g}");
}

#[test]
fn all_clean_corpus_drives_predictions_and_gates_down() {
    let posts: Vec<Post> = synthetic(100)
        .into_iter()
        .map(|p| {
            let n = p.len();
            p.with_gold(TagSequence::all_outside(n))
        })
        .collect();
    let (model, _) = explain::are_train(&posts, &short(20, 0.2)).unwrap();
    for p in &posts {
        assert!(model.predict_proba(p) < 0.5);
    }
    let (untrained, _) = explain::are_train(&posts, &short(0, 0.2)).unwrap();
    assert!(mean_gate(&model, &posts) < mean_gate(&untrained, &posts));
}

#[test]
fn extraction_is_always_valid_bio() {
    let posts = synthetic(120);
    let split = corpus::stratified_split(&posts, &SplitSpec::default()).unwrap();
    let cfg = short(10, 0.2);
    let (model, _) = explain::are_train(&split.train, &cfg).unwrap();
    for p in &split.test {
        for sel in [cfg.selection, Selection::TopK(2), Selection::Threshold(0.1)] {
            let tags = explain::are_extract(&model, p, sel);
            assert_eq!(tags.len(), p.len());
            assert!(tags.is_valid());
        }
    }
}

#[test]
fn contiguity_rule() {
    let sel = explain::select(&[0.9, 0.8, 0.1], Selection::Threshold(0.5));
    assert_eq!(
        TagSequence::from_selection(&sel).labels,
        vec![BioLabel::B, BioLabel::I, BioLabel::O]
    );
    let none = explain::select(&[0.2, 0.4], Selection::Threshold(0.5));
    assert!(!TagSequence::from_selection(&none).has_toxic());
}

/// Bucket by counting how many of the four interior cut points lie at or
/// below the score.
fn bucket_oracle(scores: &[f64]) -> Vec<u8> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0; scores.len()];
    }
    let cuts: Vec<f64> = (1..5).map(|k| lo + (hi - lo) * k as f64 / 5.0).collect();
    scores
        .iter()
        .map(|&s| cuts.iter().filter(|&&c| s >= c).count() as u8)
        .collect()
}

proptest! {
    #[test]
    fn buckets_match_cut_point_oracle(scores in proptest::collection::vec(-5.0f64..5.0, 1..30)) {
        let got = explain::attribution_buckets(&scores);
        let want = bucket_oracle(&scores);
        // Scores landing within rounding distance of a cut may fall either side.
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for ((g, w), s) in got.iter().zip(&want).zip(&scores) {
            let pos = if hi > lo { 5.0 * (s - lo) / (hi - lo) } else { 0.0 };
            if (pos - pos.round()).abs() > 1e-9 {
                prop_assert_eq!(g, w);
            } else {
                prop_assert!((i16::from(*g) - i16::from(*w)).abs() <= 1);
            }
        }
        if hi > lo {
            prop_assert!(got.contains(&0));
            prop_assert!(got.contains(&4));
        }
    }
}
