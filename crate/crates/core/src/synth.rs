//! Synthetic planted-lexicon corpora: toxic spans are runs of lexicon words
//! inserted into filler text, so the gold tags are exact by construction.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BioLabel, Domain, Post, TagSequence};
use crate::error::{Error, Result};
use crate::rng;
use crate::textproc::Token;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_posts: usize,
    /// Toxic words per lexicon.
    pub lexicon_size: usize,
    pub domains: Vec<Domain>,
    /// Give each domain its own toxic lexicon instead of sharing one.
    pub disjoint_lexicons: bool,
    pub filler_size: usize,
    /// Fraction of posts carrying at least one toxic span.
    pub toxic_rate: f64,
    /// Fraction of toxic posts carrying two spans.
    pub multi_span_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub max_span_words: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_posts: 600,
            lexicon_size: 30,
            domains: vec![Domain::SocialMedia, Domain::News, Domain::YouTube],
            disjoint_lexicons: false,
            filler_size: 300,
            toxic_rate: 0.54,
            multi_span_rate: 0.12,
            min_len: 5,
            max_len: 15,
            max_span_words: 3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::Config("synth needs at least one domain".into()));
        }
        if self.lexicon_size == 0 || self.filler_size == 0 {
            return Err(Error::Config("lexicon and filler sizes must be positive".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("synth lengths need 0 < min_len <= max_len".into()));
        }
        if self.max_span_words == 0 {
            return Err(Error::Config("max_span_words must be positive".into()));
        }
        for (name, p) in [("toxic_rate", self.toxic_rate), ("multi_span_rate", self.multi_span_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "kh", "ch",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "aa", "ee", "oo"];

fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
        .collect()
}

/// `count` distinct pseudo-words not already in `taken`.
fn word_list(rng: &mut ChaCha8Rng, count: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.gen_range(2..=3);
        let w = pseudo_word(rng, syllables);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// The generated corpus together with the lexicons used to plant spans.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub posts: Vec<Post>,
    /// One lexicon per domain, in `domains` order (all equal when shared).
    pub lexicons: Vec<Vec<String>>,
    pub filler: Vec<String>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut words_rng = rng::stream(cfg.seed, "synth.words");
    let mut taken = BTreeSet::new();
    let filler = word_list(&mut words_rng, cfg.filler_size, &mut taken);
    let lexicons: Vec<Vec<String>> = if cfg.disjoint_lexicons {
        cfg.domains
            .iter()
            .map(|_| word_list(&mut words_rng, cfg.lexicon_size, &mut taken))
            .collect()
    } else {
        let shared = word_list(&mut words_rng, cfg.lexicon_size, &mut taken);
        vec![shared; cfg.domains.len()]
    };
    let mut posts = Vec::with_capacity(cfg.n_posts);
    for i in 0..cfg.n_posts {
        let mut rng = rng::item_stream(cfg.seed, "synth.post", i);
        let d = i % cfg.domains.len();
        posts.push(make_post(cfg, &mut rng, i, cfg.domains[d], &lexicons[d], &filler));
    }
    Ok(SynthCorpus {
        posts,
        lexicons,
        filler,
    })
}

fn make_post(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    index: usize,
    domain: Domain,
    lexicon: &[String],
    filler: &[String],
) -> Post {
    let len = rng.gen_range(cfg.min_len..=cfg.max_len);
    let mut labels = vec![BioLabel::O; len];
    if rng.gen_bool(cfg.toxic_rate) {
        let n_spans = if rng.gen_bool(cfg.multi_span_rate) { 2 } else { 1 };
        for _ in 0..n_spans {
            plant_span(rng, &mut labels, cfg.max_span_words);
        }
    }
    let mut words = Vec::with_capacity(len);
    for label in &labels {
        let pool = if label.is_toxic() { lexicon } else { filler };
        words.push(pool.choose(rng).unwrap().clone());
    }
    let mut tokens = Vec::with_capacity(len);
    let mut offset = 0;
    for w in words {
        let n = w.chars().count();
        tokens.push(Token::new(w, offset, offset + n));
        offset += n + 1;
    }
    Post::from_tokens(format!("synth-{index:05}"), domain, tokens).with_gold(TagSequence::new(labels))
}

/// Places one run of toxic labels where it neither overlaps nor touches an
/// existing run; gives up silently if no such place exists.
fn plant_span(rng: &mut ChaCha8Rng, labels: &mut [BioLabel], max_words: usize) {
    let width = rng.gen_range(1..=max_words.min(labels.len()));
    let free = |s: usize| {
        let lo = s.saturating_sub(1);
        let hi = (s + width + 1).min(labels.len());
        labels[lo..hi].iter().all(|l| *l == BioLabel::O)
    };
    let starts: Vec<usize> = (0..=labels.len() - width).filter(|&s| free(s)).collect();
    if let Some(&s) = starts.choose(rng) {
        labels[s] = BioLabel::B;
        for l in &mut labels[s + 1..s + width] {
            *l = BioLabel::I;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::format_corpus;

    #[test]
    fn deterministic_and_valid() {
        let cfg = SynthConfig {
            n_posts: 200,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(format_corpus(&a.posts), format_corpus(&b.posts));
        let lexicon: BTreeSet<&String> = a.lexicons[0].iter().collect();
        for post in &a.posts {
            let gold = post.gold.as_ref().unwrap();
            assert!(gold.is_valid());
            for (tok, label) in post.tokens.iter().zip(&gold.labels) {
                assert_eq!(label.is_toxic(), lexicon.contains(&tok.surface));
            }
        }
        let toxic = a.posts.iter().filter(|p| p.is_toxic()).count();
        assert!((80..=135).contains(&toxic), "{toxic}");
    }

    #[test]
    fn disjoint_lexicons_share_nothing() {
        let cfg = SynthConfig {
            disjoint_lexicons: true,
            n_posts: 30,
            ..SynthConfig::default()
        };
        let c = generate(&cfg).unwrap();
        let all: BTreeSet<&String> = c.lexicons.iter().flatten().collect();
        assert_eq!(all.len(), 3 * cfg.lexicon_size);
    }
}
