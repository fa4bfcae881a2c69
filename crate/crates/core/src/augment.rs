//! Label-preserving augmentation: synonym replacement, token masking and
//! code-switch substitution, applied in that order. Toxic tokens are never
//! eligible, so gold tags and toxic surfaces survive unchanged.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng;
use crate::textproc::Token;
use crate::vocab::MASK;

pub const DEMO_SYNONYMS: &str = include_str!("../data/synonyms_demo.tsv");
pub const DEMO_CODESWITCH: &str = include_str!("../data/codeswitch_demo.tsv");

/// `word<TAB>alternative[,alternative...]` entries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    entries: BTreeMap<String, Vec<String>>,
}

impl Dictionary {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (word, alts) = line.split_once('\t').ok_or_else(|| Error::RuleSyntax {
                line: idx + 1,
                msg: "expected word<TAB>alternatives".into(),
            })?;
            let alts: Vec<String> = alts
                .split(',')
                .map(str::trim)
                .filter(|a| !a.is_empty() && *a != word)
                .map(String::from)
                .collect();
            if word.is_empty() || alts.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(Error::RuleSyntax {
                    line: idx + 1,
                    msg: "entry needs a single-word key and at least one alternative".into(),
                });
            }
            let slot = entries.entry(word.to_string()).or_default();
            for a in alts {
                if !slot.contains(&a) {
                    slot.push(a);
                }
            }
        }
        Ok(Dictionary { entries })
    }

    /// Missing or unreadable files are configuration errors.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read dictionary {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Adds the reverse of every pair, for two-way bilingual lookup.
    pub fn symmetric(mut self) -> Self {
        let pairs: Vec<(String, String)> = self
            .entries
            .iter()
            .flat_map(|(w, alts)| alts.iter().map(move |a| (a.clone(), w.clone())))
            .collect();
        for (a, w) in pairs {
            let slot = self.entries.entry(a).or_default();
            if !slot.contains(&w) {
                slot.push(w);
            }
        }
        self
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynonymConfig {
    pub enabled: bool,
    /// Per-post replacement fraction is drawn uniformly from this range.
    pub frac_min: f64,
    pub frac_max: f64,
    pub dictionary: Option<Dictionary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskConfig {
    pub enabled: bool,
    pub prob: f64,
    pub token: String,
    /// Draw fresh masks every epoch instead of once up front.
    pub per_epoch: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeSwitchConfig {
    pub enabled: bool,
    pub sample_frac: f64,
    pub word_frac_min: f64,
    pub word_frac_max: f64,
    pub dictionary: Option<Dictionary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub synonym: SynonymConfig,
    pub masking: MaskConfig,
    pub codeswitch: CodeSwitchConfig,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            synonym: SynonymConfig {
                enabled: true,
                frac_min: 0.10,
                frac_max: 0.15,
                dictionary: None,
            },
            masking: MaskConfig {
                enabled: true,
                prob: 0.05,
                token: MASK.to_string(),
                per_epoch: true,
            },
            codeswitch: CodeSwitchConfig {
                enabled: true,
                sample_frac: 0.15,
                word_frac_min: 0.20,
                word_frac_max: 0.30,
                dictionary: None,
            },
            seed: 42,
        }
    }
}

impl AugmentConfig {
    /// Default settings with the shipped demo dictionaries.
    pub fn demo() -> Self {
        let mut cfg = AugmentConfig::default();
        cfg.synonym.dictionary = Some(Dictionary::parse(DEMO_SYNONYMS).expect("demo synonyms parse"));
        cfg.codeswitch.dictionary = Some(
            Dictionary::parse(DEMO_CODESWITCH)
                .expect("demo code-switch dictionary parses")
                .symmetric(),
        );
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("synonym.frac_min", self.synonym.frac_min),
            ("synonym.frac_max", self.synonym.frac_max),
            ("mask.prob", self.masking.prob),
            ("codeswitch.sample_frac", self.codeswitch.sample_frac),
            ("codeswitch.word_frac_min", self.codeswitch.word_frac_min),
            ("codeswitch.word_frac_max", self.codeswitch.word_frac_max),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if self.synonym.frac_min > self.synonym.frac_max
            || self.codeswitch.word_frac_min > self.codeswitch.word_frac_max
        {
            return Err(Error::Config("fraction range has min above max".into()));
        }
        if self.synonym.enabled && self.synonym.dictionary.is_none() {
            return Err(Error::Config("synonym replacement enabled without a dictionary".into()));
        }
        if self.codeswitch.enabled && self.codeswitch.dictionary.is_none() {
            return Err(Error::Config("code-switching enabled without a dictionary".into()));
        }
        if self.masking.token.is_empty() || self.masking.token.chars().any(char::is_whitespace) {
            return Err(Error::Config("mask token must be a single non-empty word".into()));
        }
        Ok(())
    }
}

fn toxic_mask(post: &Post) -> Vec<bool> {
    post.gold
        .as_ref()
        .map(|g| g.toxic_mask())
        .unwrap_or_else(|| vec![false; post.len()])
}

/// Rebuilds a post with new token surfaces, keeping the text between tokens.
pub fn with_surfaces(post: &Post, surfaces: Vec<String>) -> Post {
    assert_eq!(surfaces.len(), post.tokens.len());
    let chars: Vec<char> = post.text.chars().collect();
    let mut text = String::new();
    let mut tokens = Vec::with_capacity(surfaces.len());
    let mut cursor = 0;
    let mut out_len = 0;
    for (tok, surface) in post.tokens.iter().zip(surfaces) {
        let gap: String = chars[cursor..tok.char_start].iter().collect();
        out_len += gap.chars().count();
        text.push_str(&gap);
        let n = surface.chars().count();
        tokens.push(Token::new(surface.clone(), out_len, out_len + n));
        text.push_str(&surface);
        out_len += n;
        cursor = tok.char_end;
    }
    text.extend(&chars[cursor..]);
    Post {
        text,
        tokens,
        ..post.clone()
    }
}

/// floor(x) plus one with probability frac(x), so the expected count is x.
fn stochastic_round(x: f64, rng: &mut ChaCha8Rng) -> usize {
    let base = x.floor();
    base as usize + usize::from(rng.gen::<f64>() < x - base)
}

/// Replaces a random subset of the eligible positions using `pick`.
fn replace_some(
    post: &Post,
    eligible: &[usize],
    frac: f64,
    rng: &mut ChaCha8Rng,
    mut pick: impl FnMut(usize, &mut ChaCha8Rng) -> String,
) -> Post {
    let count = stochastic_round(frac * eligible.len() as f64, rng).min(eligible.len());
    if count == 0 {
        return post.clone();
    }
    let mut chosen: Vec<usize> = sample(rng, eligible.len(), count).into_iter().map(|i| eligible[i]).collect();
    chosen.sort_unstable();
    let mut surfaces: Vec<String> = post.tokens.iter().map(|t| t.surface.clone()).collect();
    for pos in chosen {
        surfaces[pos] = pick(pos, rng);
    }
    with_surfaces(post, surfaces)
}

/// Non-toxic tokens with a dictionary entry.
fn eligible(post: &Post, dict: &Dictionary) -> Vec<usize> {
    let toxic = toxic_mask(post);
    (0..post.len())
        .filter(|&i| !toxic[i] && dict.get(&post.tokens[i].surface).is_some())
        .collect()
}

pub fn synonym_replace(post: &Post, cfg: &SynonymConfig, rng: &mut ChaCha8Rng) -> Result<Post> {
    let dict = cfg
        .dictionary
        .as_ref()
        .ok_or_else(|| Error::Config("synonym replacement needs a dictionary".into()))?;
    let eligible = eligible(post, dict);
    if eligible.is_empty() {
        return Ok(post.clone());
    }
    let frac = rng.gen_range(cfg.frac_min..=cfg.frac_max);
    Ok(replace_some(post, &eligible, frac, rng, |pos, rng| {
        let alts = dict.get(&post.tokens[pos].surface).expect("eligible");
        alts[rng.gen_range(0..alts.len())].clone()
    }))
}

pub fn mask_tokens(post: &Post, cfg: &MaskConfig, rng: &mut ChaCha8Rng) -> Post {
    let toxic = toxic_mask(post);
    let mut changed = false;
    let surfaces: Vec<String> = post
        .tokens
        .iter()
        .zip(&toxic)
        .map(|(tok, &is_toxic)| {
            if !is_toxic && cfg.prob > 0.0 && rng.gen::<f64>() < cfg.prob {
                changed = true;
                cfg.token.clone()
            } else {
                tok.surface.clone()
            }
        })
        .collect();
    if changed {
        with_surfaces(post, surfaces)
    } else {
        post.clone()
    }
}

pub fn codeswitch(post: &Post, cfg: &CodeSwitchConfig, rng: &mut ChaCha8Rng) -> Result<Post> {
    let dict = cfg
        .dictionary
        .as_ref()
        .ok_or_else(|| Error::Config("code-switching needs a bilingual dictionary".into()))?;
    if !rng.gen_bool(cfg.sample_frac) {
        return Ok(post.clone());
    }
    let eligible = eligible(post, dict);
    if eligible.is_empty() {
        return Ok(post.clone());
    }
    let frac = rng.gen_range(cfg.word_frac_min..=cfg.word_frac_max);
    Ok(replace_some(post, &eligible, frac, rng, |pos, rng| {
        let alts = dict.get(&post.tokens[pos].surface).expect("eligible");
        alts[rng.gen_range(0..alts.len())].clone()
    }))
}

/// Runs the enabled stages (synonym, then mask, then code-switch) on one
/// post. Each stage has its own stream derived from (seed, stage, index).
/// Masking is skipped when it is configured per epoch; the trainer applies
/// it instead.
pub fn augment_post(post: &Post, cfg: &AugmentConfig, index: usize) -> Result<Post> {
    let mut out = post.clone();
    if cfg.synonym.enabled {
        let mut r = rng::item_stream(cfg.seed, "augment.synonym", index);
        out = synonym_replace(&out, &cfg.synonym, &mut r)?;
    }
    if cfg.masking.enabled && !cfg.masking.per_epoch {
        let mut r = rng::item_stream(cfg.seed, "augment.mask", index);
        out = mask_tokens(&out, &cfg.masking, &mut r);
    }
    if cfg.codeswitch.enabled {
        let mut r = rng::item_stream(cfg.seed, "augment.codeswitch", index);
        out = codeswitch(&out, &cfg.codeswitch, &mut r)?;
    }
    Ok(out)
}

/// One augmented copy per post, ids suffixed with `+aug`.
pub fn augment_corpus(posts: &[Post], cfg: &AugmentConfig) -> Result<Vec<Post>> {
    cfg.validate()?;
    parallel::map(posts, parallel::worker_count(), |i, post| {
        augment_post(post, cfg, i).map(|mut p| {
            p.id = format!("{}+aug", post.id);
            p
        })
    })
    .into_iter()
    .collect()
}

/// A round trip through another language with word alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct BackTranslation {
    pub post: Post,
    /// Share of labelled tokens the aligner mapped back with confidence.
    pub alignment_confidence: f64,
}

/// Client interface for Urdu to English to Urdu back-translation. No
/// implementation ships; plug an MT service and aligner in here.
pub trait BackTranslator {
    fn round_trip(&self, post: &Post) -> Result<BackTranslation>;
}

pub const BACKTRANSLATION_INTEGRATION_POINT: &str =
    "augment::BackTranslator (external MT service plus word aligner for label transfer)";

pub fn backtranslate_stub(_post: &Post) -> Result<BackTranslation> {
    Err(Error::NotImplemented {
        integration_point: BACKTRANSLATION_INTEGRATION_POINT,
    })
}

/// The default client: always reports the missing integration.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoBackTranslator;

impl BackTranslator for NoBackTranslator {
    fn round_trip(&self, post: &Post) -> Result<BackTranslation> {
        backtranslate_stub(post)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BioLabel::*, Domain, TagSequence};
    use crate::textproc::tokenize;

    fn post(text: &str, labels: Vec<crate::corpus::BioLabel>) -> Post {
        Post::from_tokens("p", Domain::News, tokenize(text)).with_gold(TagSequence::new(labels))
    }

    #[test]
    fn offsets_follow_new_surfaces() {
        let p = post("aa  b, c", vec![O, O, O, O]);
        let q = with_surfaces(&p, vec!["x".into(), "bbb".into(), ",".into(), "c".into()]);
        assert_eq!(q.text, "x  bbb, c");
        for t in &q.tokens {
            let s: String = q.text.chars().skip(t.char_start).take(t.len()).collect();
            assert_eq!(s, t.surface);
        }
    }

    #[test]
    fn all_toxic_post_is_untouched() {
        let cfg = AugmentConfig::demo();
        let p = post("dost khabar log", vec![B, I, I]);
        for i in 0..50 {
            assert_eq!(augment_post(&p, &cfg, i).unwrap(), p);
        }
    }

    #[test]
    fn empty_dictionary_and_zero_prob_are_identity() {
        let p = post("dost khabar log", vec![O, O, O]);
        let cfg = SynonymConfig {
            enabled: true,
            frac_min: 1.0,
            frac_max: 1.0,
            dictionary: Some(Dictionary::default()),
        };
        let mut r = rng::stream(1, "t");
        assert_eq!(synonym_replace(&p, &cfg, &mut r).unwrap(), p);
        let m = MaskConfig {
            enabled: true,
            prob: 0.0,
            token: MASK.into(),
            per_epoch: false,
        };
        assert_eq!(mask_tokens(&p, &m, &mut r), p);
    }

    #[test]
    fn missing_dictionary_is_config_error() {
        assert!(matches!(Dictionary::load("/nonexistent/dict.tsv"), Err(Error::Config(_))));
        let mut cfg = AugmentConfig::default();
        cfg.synonym.enabled = true;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn stub_reports_integration_point() {
        let p = post("a", vec![O]);
        match backtranslate_stub(&p) {
            Err(Error::NotImplemented { integration_point }) => {
                assert!(integration_point.contains("BackTranslator"))
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(NoBackTranslator.round_trip(&p).is_err());
    }
}
