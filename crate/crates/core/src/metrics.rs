//! Span-level character-offset F1, token-level F1 and BIO validity rates.

use std::collections::BTreeSet;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::corpus::{BioLabel, Post, TagSequence};
use crate::error::{Error, Result};

/// Character offsets (in chars of the normalized text) marked toxic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CharSpanSet(BTreeSet<usize>);

impl CharSpanSet {
    pub fn new() -> Self {
        CharSpanSet(BTreeSet::new())
    }

    pub fn insert(&mut self, offset: usize) -> bool {
        self.0.insert(offset)
    }

    pub fn insert_range(&mut self, start: usize, end: usize) {
        self.0.extend(start..end);
    }

    pub fn from_range(start: usize, end: usize) -> Self {
        CharSpanSet((start..end).collect())
    }

    pub fn contains(&self, offset: usize) -> bool {
        self.0.contains(&offset)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn intersection_len(&self, other: &CharSpanSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    /// Maximal runs of consecutive offsets, as half-open ranges.
    pub fn ranges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for o in self.iter() {
            match out.last_mut() {
                Some((_, end)) if *end == o => *end = o + 1,
                _ => out.push((o, o + 1)),
            }
        }
        out
    }
}

impl FromIterator<usize> for CharSpanSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        CharSpanSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, predicted: usize, actual: usize) -> Prf {
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
        Prf {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }
}

fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-post span precision, recall and F1. Both sets empty scores 1; exactly
/// one empty scores 0.
pub fn span_prf(pred: &CharSpanSet, gold: &CharSpanSet) -> Prf {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => Prf {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        },
        (true, false) | (false, true) => Prf::default(),
        (false, false) => Prf::from_counts(pred.intersection_len(gold), pred.len(), gold.len()),
    }
}

/// Macro average of per-post span scores.
pub fn corpus_span_prf(preds: &[CharSpanSet], golds: &[CharSpanSet]) -> Result<Prf> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            expected: golds.len(),
            found: preds.len(),
        });
    }
    if preds.is_empty() {
        return Ok(Prf::default());
    }
    let n = preds.len() as f64;
    let mut acc = Prf::default();
    for (p, g) in preds.iter().zip(golds) {
        let s = span_prf(p, g);
        acc.precision += s.precision;
        acc.recall += s.recall;
        acc.f1 += s.f1;
    }
    Ok(Prf {
        precision: acc.precision / n,
        recall: acc.recall / n,
        f1: acc.f1 / n,
    })
}

pub fn corpus_span_f1(preds: &[CharSpanSet], golds: &[CharSpanSet]) -> Result<f64> {
    corpus_span_prf(preds, golds).map(|p| p.f1)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TokenScores {
    pub prf: Prf,
    /// Neither predictions nor gold contain a toxic token; F1 is 1 by convention.
    pub degenerate: bool,
}

/// Binary toxic (B or I) micro-averaged over all tokens of all sequences.
pub fn token_prf(preds: &[TagSequence], golds: &[TagSequence]) -> Result<TokenScores> {
    let (mut tp, mut predicted, mut actual) = (0, 0, 0);
    check_aligned(preds, golds)?;
    for (p, g) in preds.iter().zip(golds) {
        for (pl, gl) in p.labels.iter().zip(&g.labels) {
            predicted += usize::from(pl.is_toxic());
            actual += usize::from(gl.is_toxic());
            tp += usize::from(pl.is_toxic() && gl.is_toxic());
        }
    }
    if predicted == 0 && actual == 0 {
        return Ok(TokenScores {
            prf: Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            },
            degenerate: true,
        });
    }
    Ok(TokenScores {
        prf: Prf::from_counts(tp, predicted, actual),
        degenerate: false,
    })
}

/// Per-BIO-class scores in O, B, I order.
pub fn token_prf_per_class(preds: &[TagSequence], golds: &[TagSequence]) -> Result<[Prf; 3]> {
    check_aligned(preds, golds)?;
    let mut out = [Prf::default(); 3];
    for label in BioLabel::ALL {
        let (mut tp, mut predicted, mut actual) = (0, 0, 0);
        for (p, g) in preds.iter().zip(golds) {
            for (&pl, &gl) in p.labels.iter().zip(&g.labels) {
                predicted += usize::from(pl == label);
                actual += usize::from(gl == label);
                tp += usize::from(pl == label && gl == label);
            }
        }
        out[label.index()] = Prf::from_counts(tp, predicted, actual);
    }
    Ok(out)
}

fn check_aligned(preds: &[TagSequence], golds: &[TagSequence]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            expected: golds.len(),
            found: preds.len(),
        });
    }
    for (p, g) in preds.iter().zip(golds) {
        if p.len() != g.len() {
            return Err(Error::LengthMismatch {
                expected: g.len(),
                found: p.len(),
            });
        }
    }
    Ok(())
}

pub fn invalid_bio_rate(sequences: &[TagSequence]) -> f64 {
    if sequences.is_empty() {
        return 0.0;
    }
    sequences.iter().filter(|s| !s.is_valid()).count() as f64 / sequences.len() as f64
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub posts: usize,
    pub span: Prf,
    pub token: Prf,
    pub token_degenerate: bool,
    pub invalid_bio_rate: f64,
    pub per_class: Option<[Prf; 3]>,
}

impl EvalReport {
    pub fn key_values(&self, prefix: &str) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{prefix}{k}={v}");
        };
        kv("posts", self.posts.to_string());
        kv("span_p", format!("{:.6}", self.span.precision));
        kv("span_r", format!("{:.6}", self.span.recall));
        kv("span_f1", format!("{:.6}", self.span.f1));
        kv("token_p", format!("{:.6}", self.token.precision));
        kv("token_r", format!("{:.6}", self.token.recall));
        kv("token_f1", format!("{:.6}", self.token.f1));
        kv("token_f1_degenerate", self.token_degenerate.to_string());
        kv("invalid_bio_rate", format!("{:.6}", self.invalid_bio_rate));
        if let Some(per_class) = &self.per_class {
            for label in BioLabel::ALL {
                let s = per_class[label.index()];
                kv(&format!("class.{label}.p"), format!("{:.6}", s.precision));
                kv(&format!("class.{label}.r"), format!("{:.6}", s.recall));
                kv(&format!("class.{label}.f1"), format!("{:.6}", s.f1));
            }
        }
        out
    }
}

/// Evaluates predicted tags against the gold tags carried by `gold_posts`.
/// Posts without gold are scored against an all-O sequence.
pub fn evaluate(gold_posts: &[Post], preds: &[TagSequence], per_class: bool) -> Result<EvalReport> {
    if gold_posts.len() != preds.len() {
        return Err(Error::LengthMismatch {
            expected: gold_posts.len(),
            found: preds.len(),
        });
    }
    let golds: Vec<TagSequence> = gold_posts
        .iter()
        .map(|p| p.gold.clone().unwrap_or_else(|| TagSequence::all_outside(p.len())))
        .collect();
    check_aligned(preds, &golds)?;
    let pred_spans: Vec<CharSpanSet> = gold_posts
        .iter()
        .zip(preds)
        .map(|(p, tags)| crate::corpus::spans_from_tags(&p.tokens, tags))
        .collect();
    let gold_spans: Vec<CharSpanSet> = gold_posts
        .iter()
        .zip(&golds)
        .map(|(p, tags)| crate::corpus::spans_from_tags(&p.tokens, tags))
        .collect();
    let token = token_prf(preds, &golds)?;
    Ok(EvalReport {
        posts: gold_posts.len(),
        span: corpus_span_prf(&pred_spans, &gold_spans)?,
        token: token.prf,
        token_degenerate: token.degenerate,
        invalid_bio_rate: invalid_bio_rate(preds),
        per_class: per_class.then(|| token_prf_per_class(preds, &golds)).transpose()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Domain,
    Category,
}

/// One report per group, in sorted group-name order; posts without a
/// category fall into `"Other"`.
pub fn breakdown(
    gold_posts: &[Post],
    preds: &[TagSequence],
    key: GroupKey,
) -> Result<Vec<(String, EvalReport)>> {
    if gold_posts.len() != preds.len() {
        return Err(Error::LengthMismatch {
            expected: gold_posts.len(),
            found: preds.len(),
        });
    }
    let mut groups: BTreeMap<String, (Vec<Post>, Vec<TagSequence>)> = BTreeMap::new();
    for (post, pred) in gold_posts.iter().zip(preds) {
        let name = match key {
            GroupKey::Domain => post.domain.to_string(),
            GroupKey::Category => post
                .category
                .clone()
                .filter(|c| !c.is_empty())
                .unwrap_or_else(|| "Other".to_string()),
        };
        let entry = groups.entry(name).or_default();
        entry.0.push(post.clone());
        entry.1.push(pred.clone());
    }
    groups
        .into_iter()
        .map(|(name, (posts, preds))| Ok((name, evaluate(&posts, &preds, false)?)))
        .collect()
}

/// Aligned plain-text table of group reports.
pub fn format_table(rows: &[(String, EvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(5).max(5);
    let mut out = format!(
        "{:<width$}  {:>5}  {:>7}  {:>7}  {:>7}  {:>7}\n",
        "group", "posts", "span_f1", "tok_p", "tok_r", "tok_f1"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}",
            name, r.posts, r.span.f1, r.token.precision, r.token.recall, r.token.f1
        );
    }
    out
}
