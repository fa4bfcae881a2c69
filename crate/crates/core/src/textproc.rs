//! Offset-preserving normalization and tokenization.
//!
//! Every step operates on a character buffer paired with an origin map: for
//! each output character, the index of the raw-text character it came from.
//! Steps only ever drop, rewrite, or insert characters, so the composed map
//! always points back into the raw input.
//!
//! All offsets in this crate are counted in Unicode scalar values (`char`s),
//! not bytes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use unicode_normalization::char::canonical_combining_class;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Domain, Post};
use crate::error::{Error, Result};

/// Demo Roman-Urdu to Nastaliq table shipped with the crate.
pub const DEMO_TRANSLITERATION: &str = include_str!("../data/translit_demo.tsv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawText {
    pub content: String,
    pub source_id: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub surface: String,
    /// Inclusive start, in chars of the normalized text.
    pub char_start: usize,
    /// Exclusive end.
    pub char_end: usize,
}

impl Token {
    pub fn new(surface: impl Into<String>, char_start: usize, char_end: usize) -> Self {
        Token {
            surface: surface.into(),
            char_start,
            char_end,
        }
    }

    pub fn len(&self) -> usize {
        self.char_end - self.char_start
    }

    pub fn is_empty(&self) -> bool {
        self.char_end == self.char_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    UnicodeNfc,
    DiacriticStrip,
    RomanToNastaliq,
    NoiseRemoval,
    WhitespaceNorm,
    WordSegmentation,
}

impl Step {
    pub const ALL: [Step; 6] = [
        Step::UnicodeNfc,
        Step::DiacriticStrip,
        Step::NoiseRemoval,
        Step::RomanToNastaliq,
        Step::WhitespaceNorm,
        Step::WordSegmentation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Step::UnicodeNfc => "nfc",
            Step::DiacriticStrip => "diacritics",
            Step::RomanToNastaliq => "transliterate",
            Step::NoiseRemoval => "noise",
            Step::WhitespaceNorm => "whitespace",
            Step::WordSegmentation => "segment",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Step {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Step::ALL
            .into_iter()
            .find(|step| step.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown preprocessing step {s:?}")))
    }
}

/// A longest-match-first rewrite table loaded from `pattern<TAB>replacement` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleTable {
    /// Sorted by pattern length (descending), then lexicographically.
    rules: Vec<(Vec<char>, String)>,
}

impl RuleTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules: Vec<(Vec<char>, String)> = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(pattern), Some(replacement), None) =
                (fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::RuleSyntax {
                    line: line_no,
                    msg: "expected exactly two tab-separated fields".into(),
                });
            };
            if pattern.is_empty() {
                return Err(Error::RuleSyntax {
                    line: line_no,
                    msg: "empty pattern".into(),
                });
            }
            let key: Vec<char> = pattern.chars().map(|c| c.to_ascii_lowercase()).collect();
            if rules.iter().any(|(k, _)| *k == key) {
                return Err(Error::RuleSyntax {
                    line: line_no,
                    msg: format!("duplicate pattern {pattern:?}"),
                });
            }
            rules.push((key, replacement.to_string()));
        }
        rules.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(RuleTable { rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn demo() -> Self {
        Self::parse(DEMO_TRANSLITERATION).expect("demo transliteration table is well-formed")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// The longest rule matching at `chars[pos..]`, ASCII case-insensitively.
    fn match_at(&self, chars: &[char], pos: usize) -> Option<(usize, &str)> {
        self.rules.iter().find_map(|(pattern, replacement)| {
            let end = pos + pattern.len();
            (end <= chars.len()
                && chars[pos..end]
                    .iter()
                    .zip(pattern)
                    .all(|(c, p)| c.to_ascii_lowercase() == *p))
            .then_some((pattern.len(), replacement.as_str()))
        })
    }

    fn lookup_word(&self, word: &[char]) -> Option<&str> {
        self.rules
            .iter()
            .find(|(pattern, _)| {
                pattern.len() == word.len()
                    && word.iter().zip(pattern).all(|(c, p)| c.to_ascii_lowercase() == *p)
            })
            .map(|(_, r)| r.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub steps: Vec<Step>,
    pub transliteration: RuleTable,
    pub segmentation: RuleTable,
    /// Inclusive ranges of combining marks removed by [`Step::DiacriticStrip`].
    pub diacritics: Vec<(char, char)>,
}

/// Arabic-script harakat, excluding madda and hamza above/below, which are
/// letter-forming in Urdu.
pub const DEFAULT_DIACRITICS: &[(char, char)] = &[
    ('\u{064B}', '\u{0652}'),
    ('\u{0656}', '\u{065F}'),
    ('\u{0670}', '\u{0670}'),
];

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            steps: Step::ALL.to_vec(),
            transliteration: RuleTable::demo(),
            segmentation: RuleTable::default(),
            diacritics: DEFAULT_DIACRITICS.to_vec(),
        }
    }
}

impl PipelineConfig {
    /// A configuration with no steps enabled.
    pub fn empty() -> Self {
        PipelineConfig {
            steps: Vec::new(),
            ..Default::default()
        }
    }

    pub fn with_steps(steps: &[Step]) -> Self {
        PipelineConfig {
            steps: steps.to_vec(),
            ..Default::default()
        }
    }

    pub fn without(mut self, step: Step) -> Self {
        self.steps.retain(|s| *s != step);
        self
    }

    pub fn is_enabled(&self, step: Step) -> bool {
        self.steps.contains(&step)
    }

    fn is_diacritic(&self, c: char) -> bool {
        self.diacritics.iter().any(|&(lo, hi)| (lo..=hi).contains(&c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub text: String,
    /// For each char of `text`, the index of the raw char it originates from.
    pub offset_map: Vec<usize>,
}

impl Normalized {
    /// Maps a half-open char range of the normalized text back to raw offsets.
    pub fn raw_range(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        if start >= end || end > self.offset_map.len() {
            return None;
        }
        Some((self.offset_map[start], self.offset_map[end - 1] + 1))
    }
}

/// Text being rewritten, with per-char provenance.
#[derive(Debug, Clone)]
struct Tracked {
    chars: Vec<char>,
    origin: Vec<usize>,
}

impl Tracked {
    fn new(text: &str) -> Self {
        let chars: Vec<char> = text.chars().collect();
        let origin = (0..chars.len()).collect();
        Tracked { chars, origin }
    }

    fn with_capacity(n: usize) -> Self {
        Tracked {
            chars: Vec::with_capacity(n),
            origin: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, c: char, origin: usize) {
        self.chars.push(c);
        self.origin.push(origin);
    }

    fn push_str(&mut self, s: &str, origin: usize) {
        for c in s.chars() {
            self.push(c, origin);
        }
    }
}

/// Runs the enabled steps in order. When NFC is enabled it is re-applied after
/// the last rewriting step so the output is always in composed form.
pub fn normalize(raw: &RawText, cfg: &PipelineConfig) -> Normalized {
    normalize_str(&raw.content, cfg)
}

pub fn normalize_str(text: &str, cfg: &PipelineConfig) -> Normalized {
    let mut t = Tracked::new(text);
    for step in &cfg.steps {
        t = match step {
            Step::UnicodeNfc => nfc_step(&t),
            Step::DiacriticStrip => filter_step(&t, |c| !cfg.is_diacritic(c)),
            Step::RomanToNastaliq => transliterate_step(&t, &cfg.transliteration),
            Step::NoiseRemoval => noise_step(&t),
            Step::WhitespaceNorm => whitespace_step(&t),
            Step::WordSegmentation => segment_step(&t, &cfg.segmentation),
        };
    }
    if cfg.is_enabled(Step::UnicodeNfc) {
        t = nfc_step(&t);
    }
    Normalized {
        text: t.chars.iter().collect(),
        offset_map: t.origin,
    }
}

fn nfc_of(chars: &[char]) -> Vec<char> {
    chars.iter().copied().nfc().collect()
}

/// NFC over provenance-tracked text. The input is cut into segments that
/// normalize independently; every output char of a segment maps to the
/// segment's first origin.
fn nfc_step(t: &Tracked) -> Tracked {
    let mut out = Tracked::with_capacity(t.chars.len());
    let n = t.chars.len();
    let mut seg_start = 0;
    for i in 1..=n {
        let boundary = i == n || {
            let c = t.chars[i];
            canonical_combining_class(c) == 0 && {
                let joined = nfc_of(&t.chars[seg_start..=i]);
                let mut apart = nfc_of(&t.chars[seg_start..i]);
                apart.extend(nfc_of(&t.chars[i..=i]));
                joined == apart
            }
        };
        if boundary {
            let origin = t.origin[seg_start];
            for c in nfc_of(&t.chars[seg_start..i]) {
                out.push(c, origin);
            }
            seg_start = i;
        }
    }
    out
}

fn filter_step(t: &Tracked, keep: impl Fn(char) -> bool) -> Tracked {
    let mut out = Tracked::with_capacity(t.chars.len());
    for (&c, &o) in t.chars.iter().zip(&t.origin) {
        if keep(c) {
            out.push(c, o);
        }
    }
    out
}

fn transliterate_step(t: &Tracked, table: &RuleTable) -> Tracked {
    let mut out = Tracked::with_capacity(t.chars.len());
    let mut pos = 0;
    while pos < t.chars.len() {
        match table.match_at(&t.chars, pos) {
            Some((len, replacement)) if t.chars[pos].is_ascii_alphabetic() => {
                out.push_str(replacement, t.origin[pos]);
                pos += len;
            }
            _ => {
                out.push(t.chars[pos], t.origin[pos]);
                pos += 1;
            }
        }
    }
    out
}

/// Rewrites Roman-script text left to right, taking the longest matching rule
/// at each position. Characters no rule covers pass through unchanged.
pub fn transliterate_roman(text: &str, table: &RuleTable) -> String {
    transliterate_step(&Tracked::new(text), table)
        .chars
        .into_iter()
        .collect()
}

fn noise_patterns() -> &'static [Regex; 2] {
    static PATTERNS: OnceLock<[Regex; 2]> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        [
            Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap(),
            Regex::new(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+").unwrap(),
        ]
    })
}

/// Removes URLs and e-mail addresses, then collapses runs of a repeated
/// punctuation mark to a single mark.
fn noise_step(t: &Tracked) -> Tracked {
    let mut current = t.clone();
    for pattern in noise_patterns() {
        let text: String = current.chars.iter().collect();
        let mut drop = vec![false; current.chars.len()];
        let byte_to_char: Vec<usize> = {
            let mut map = vec![0; text.len() + 1];
            for (ci, (bi, _)) in text.char_indices().enumerate() {
                map[bi] = ci;
            }
            map[text.len()] = current.chars.len();
            map
        };
        for m in pattern.find_iter(&text) {
            for flag in &mut drop[byte_to_char[m.start()]..byte_to_char[m.end()]] {
                *flag = true;
            }
        }
        let mut next = Tracked::with_capacity(current.chars.len());
        for (i, (&c, &o)) in current.chars.iter().zip(&current.origin).enumerate() {
            if !drop[i] {
                next.push(c, o);
            }
        }
        current = next;
    }
    let mut out = Tracked::with_capacity(current.chars.len());
    for (&c, &o) in current.chars.iter().zip(&current.origin) {
        if is_punctuation(c) && out.chars.last() == Some(&c) {
            continue;
        }
        out.push(c, o);
    }
    out
}

fn whitespace_step(t: &Tracked) -> Tracked {
    let mut out = Tracked::with_capacity(t.chars.len());
    let mut pending_space: Option<usize> = None;
    for (&c, &o) in t.chars.iter().zip(&t.origin) {
        if c.is_whitespace() {
            pending_space.get_or_insert(o);
            continue;
        }
        if let Some(space_origin) = pending_space.take() {
            if !out.chars.is_empty() {
                out.push(' ', space_origin);
            }
        }
        out.push(c, o);
    }
    out
}

/// Whole-word replacement from the segmentation table.
fn segment_step(t: &Tracked, table: &RuleTable) -> Tracked {
    if table.is_empty() {
        return t.clone();
    }
    let mut out = Tracked::with_capacity(t.chars.len());
    let mut pos = 0;
    while pos < t.chars.len() {
        if t.chars[pos].is_whitespace() {
            out.push(t.chars[pos], t.origin[pos]);
            pos += 1;
            continue;
        }
        let end = (pos..t.chars.len())
            .find(|&i| t.chars[i].is_whitespace())
            .unwrap_or(t.chars.len());
        match table.lookup_word(&t.chars[pos..end]) {
            Some(replacement) => out.push_str(replacement, t.origin[pos]),
            None => {
                for i in pos..end {
                    out.push(t.chars[i], t.origin[i]);
                }
            }
        }
        pos = end;
    }
    out
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '،' | '؛' | '؟' | '۔' | '٪' | '٫' | '٬' | '«' | '»' | '¡' | '¿' | '·' | '٭'
        )
        || ('\u{2010}'..='\u{2027}').contains(&c)
        || ('\u{2030}'..='\u{205E}').contains(&c)
        || ('\u{3001}'..='\u{3003}').contains(&c)
        || ('\u{FF01}'..='\u{FF0F}').contains(&c)
}

/// Whitespace-delimited tokenization with every punctuation mark split off as
/// its own token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    let mut word = String::new();
    let flush = |tokens: &mut Vec<Token>, word: &mut String, start: &mut Option<usize>, end| {
        if let Some(s) = start.take() {
            tokens.push(Token::new(std::mem::take(word), s, end));
        }
    };
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        if c.is_whitespace() {
            flush(&mut tokens, &mut word, &mut word_start, i);
        } else if is_punctuation(c) {
            flush(&mut tokens, &mut word, &mut word_start, i);
            tokens.push(Token::new(c.to_string(), i, i + 1));
        } else {
            word_start.get_or_insert(i);
            word.push(c);
        }
    }
    flush(&mut tokens, &mut word, &mut word_start, n);
    tokens
}

/// Levenshtein distance over chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            curr[j + 1] = substitute.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// `1 - distance / max_len`; two empty strings are identical (similarity 1).
pub fn similarity(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / max_len as f64
}

/// Indices of texts kept by near-duplicate removal: a text is dropped when its
/// similarity to any earlier kept text reaches `threshold`.
pub fn dedup_indices<S: AsRef<str>>(texts: &[S], threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "dedup threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let mut kept: Vec<usize> = Vec::new();
    for (i, text) in texts.iter().enumerate() {
        let duplicate = kept
            .iter()
            .any(|&k| similarity(texts[k].as_ref(), text.as_ref()) >= threshold);
        if !duplicate {
            kept.push(i);
        }
    }
    Ok(kept)
}

pub fn dedup(posts: Vec<Post>, threshold: f64) -> Result<Vec<Post>> {
    let keep = dedup_indices(
        &posts.iter().map(|p| p.text.as_str()).collect::<Vec<_>>(),
        threshold,
    )?;
    let mut keep = keep.into_iter().peekable();
    Ok(posts
        .into_iter()
        .enumerate()
        .filter_map(|(i, p)| (keep.next_if_eq(&i).is_some()).then_some(p))
        .collect())
}
