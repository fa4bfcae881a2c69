//! Augmentation rates by counting, and label preservation.

use spanlab::augment::{
    self, AugmentConfig, BackTranslation, BackTranslator, CodeSwitchConfig, Dictionary, MaskConfig, SynonymConfig,
};
use spanlab::corpus::Post;
use spanlab::rng;
use spanlab::synth::{self, SynthConfig};
use spanlab::vocab::MASK;

fn corpus(n: usize) -> (Vec<Post>, Dictionary) {
    let s = synth::generate(&SynthConfig {
        n_posts: n,
        max_len: 25,
        min_len: 15,
        ..SynthConfig::default()
    })
    .unwrap();
    // Every word, toxic ones included, gets an entry so protection is what
    // keeps toxic tokens intact.
    let mut table = String::new();
    for w in s.filler.iter().chain(s.lexicons.iter().flatten()) {
        table.push_str(&format!("{w}\t{w}x,{w}y\n"));
    }
    (s.posts, Dictionary::parse(&table).unwrap())
}

fn changed(a: &Post, b: &Post) -> usize {
    a.tokens.iter().zip(&b.tokens).filter(|(x, y)| x.surface != y.surface).count()
}

fn eligible(p: &Post) -> usize {
    p.gold.as_ref().unwrap().labels.iter().filter(|l| !l.is_toxic()).count()
}

#[test]
fn synonym_fraction_by_counting() {
    let (posts, dict) = corpus(1000);
    let cfg = SynonymConfig {
        enabled: true,
        frac_min: 0.10,
        frac_max: 0.15,
        dictionary: Some(dict),
    };
    let (mut replaced, mut total) = (0, 0);
    for (i, p) in posts.iter().enumerate() {
        let mut r = rng::item_stream(1, "test.synonym", i);
        let out = augment::synonym_replace(p, &cfg, &mut r).unwrap();
        replaced += changed(p, &out);
        total += eligible(p);
    }
    let frac = replaced as f64 / total as f64;
    assert!((0.09..=0.16).contains(&frac), "replacement fraction {frac}");
}

#[test]
fn mask_rate_over_ten_thousand_tokens() {
    let (posts, _) = corpus(1000);
    let cfg = MaskConfig {
        enabled: true,
        prob: 0.05,
        token: MASK.into(),
        per_epoch: false,
    };
    let (mut masked, mut total) = (0, 0);
    for (i, p) in posts.iter().enumerate() {
        let mut r = rng::item_stream(2, "test.mask", i);
        let out = augment::mask_tokens(p, &cfg, &mut r);
        masked += out.tokens.iter().filter(|t| t.surface == MASK).count();
        total += eligible(p);
    }
    assert!(total >= 10_000);
    let rate = masked as f64 / total as f64;
    assert!((rate - 0.05).abs() <= 0.01, "mask rate {rate}");
}

#[test]
fn codeswitch_statistics_by_counting() {
    let (posts, dict) = corpus(2000);
    let cfg = CodeSwitchConfig {
        enabled: true,
        sample_frac: 0.15,
        word_frac_min: 0.20,
        word_frac_max: 0.30,
        dictionary: Some(dict),
    };
    let (mut touched, mut replaced, mut total) = (0, 0, 0);
    for (i, p) in posts.iter().enumerate() {
        let mut r = rng::item_stream(3, "test.codeswitch", i);
        let out = augment::codeswitch(p, &cfg, &mut r).unwrap();
        let n = changed(p, &out);
        if n > 0 {
            touched += 1;
            replaced += n;
            total += eligible(p);
        }
    }
    let post_frac = touched as f64 / posts.len() as f64;
    assert!((post_frac - 0.15).abs() <= 0.03, "post fraction {post_frac}");
    let word_frac = replaced as f64 / total as f64;
    assert!((0.19..=0.31).contains(&word_frac), "word fraction {word_frac}");
}

#[test]
fn labels_and_toxic_surfaces_survive_every_stage() {
    let (posts, dict) = corpus(500);
    let mut cfg = AugmentConfig::default();
    cfg.synonym.dictionary = Some(dict.clone());
    cfg.codeswitch.dictionary = Some(dict);
    cfg.synonym.frac_min = 0.5;
    cfg.synonym.frac_max = 1.0;
    cfg.masking.prob = 0.3;
    cfg.masking.per_epoch = false;
    cfg.codeswitch.sample_frac = 1.0;
    let out = augment::augment_corpus(&posts, &cfg).unwrap();
    let mut altered = 0;
    for (a, b) in posts.iter().zip(&out) {
        assert_eq!(a.gold, b.gold);
        assert_eq!(b.id, format!("{}+aug", a.id));
        let labels = &a.gold.as_ref().unwrap().labels;
        for ((x, y), l) in a.tokens.iter().zip(&b.tokens).zip(labels) {
            if l.is_toxic() {
                assert_eq!(x.surface, y.surface);
            } else {
                altered += usize::from(x.surface != y.surface);
            }
            let s: String = b.text.chars().skip(y.char_start).take(y.len()).collect();
            assert_eq!(s, y.surface);
        }
    }
    assert!(altered > 0);
    assert_eq!(out, augment::augment_corpus(&posts, &cfg).unwrap());
}

#[test]
fn demo_dictionaries_load_and_codeswitch_both_ways() {
    let cfg = AugmentConfig::demo();
    cfg.validate().unwrap();
    let cs = cfg.codeswitch.dictionary.as_ref().unwrap();
    assert!(cs.get("دوست").unwrap().contains(&"friend".to_string()));
    assert!(cs.get("friend").unwrap().contains(&"دوست".to_string()));
}

struct Identity;

impl BackTranslator for Identity {
    fn round_trip(&self, post: &Post) -> spanlab::Result<BackTranslation> {
        Ok(BackTranslation {
            post: post.clone(),
            alignment_confidence: 1.0,
        })
    }
}

#[test]
fn mock_back_translator_preserves_labels() {
    let (posts, _) = corpus(5);
    for p in &posts {
        let bt = Identity.round_trip(p).unwrap();
        assert_eq!(bt.post.gold, p.gold);
        assert_eq!(bt.alignment_confidence, 1.0);
        assert!(augment::backtranslate_stub(p).is_err());
    }
}
