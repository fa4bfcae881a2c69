//! BIO-annotated posts, the token-per-line corpus format, stratified splits,
//! and corpus statistics.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::metrics::CharSpanSet;
use crate::rng;
use crate::textproc::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    SocialMedia,
    News,
    YouTube,
    Other,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::SocialMedia, Domain::News, Domain::YouTube, Domain::Other];

    pub fn name(self) -> &'static str {
        match self {
            Domain::SocialMedia => "social_media",
            Domain::News => "news",
            Domain::YouTube => "youtube",
            Domain::Other => "other",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "socialmedia" | "social" | "sm" => Ok(Domain::SocialMedia),
            "news" | "urdunewspapers" => Ok(Domain::News),
            "youtube" | "yt" => Ok(Domain::YouTube),
            "other" => Ok(Domain::Other),
            _ => Err(Error::InvalidInput(format!("unknown domain {s:?}"))),
        }
    }
}

/// The three-label BIO scheme. Discriminants fix the label order O < B < I
/// used for tie-breaking and matrix layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BioLabel {
    O = 0,
    B = 1,
    I = 2,
}

impl BioLabel {
    pub const ALL: [BioLabel; 3] = [BioLabel::O, BioLabel::B, BioLabel::I];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> BioLabel {
        BioLabel::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BioLabel::O => "O",
            BioLabel::B => "B-TOXIC",
            BioLabel::I => "I-TOXIC",
        }
    }

    pub fn is_toxic(self) -> bool {
        self != BioLabel::O
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BioLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O" => Ok(BioLabel::O),
            "B-TOXIC" => Ok(BioLabel::B),
            "I-TOXIC" => Ok(BioLabel::I),
            _ => Err(Error::InvalidInput(format!("unknown label {s:?}"))),
        }
    }
}

/// A BIO label sequence. Ill-formed sequences are representable; gold data is
/// never rejected for them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TagSequence {
    pub labels: Vec<BioLabel>,
}

impl TagSequence {
    pub fn new(labels: Vec<BioLabel>) -> Self {
        TagSequence { labels }
    }

    pub fn all_outside(len: usize) -> Self {
        TagSequence::new(vec![BioLabel::O; len])
    }

    /// Builds tags from a token-level selection: each maximal run of selected
    /// tokens becomes B followed by I's. Always well-formed.
    pub fn from_selection(selected: &[bool]) -> Self {
        let labels = selected
            .iter()
            .enumerate()
            .map(|(t, &sel)| match (sel, t > 0 && selected[t - 1]) {
                (false, _) => BioLabel::O,
                (true, false) => BioLabel::B,
                (true, true) => BioLabel::I,
            })
            .collect();
        TagSequence { labels }
    }

    /// No I at position 0 and no I directly after O.
    pub fn is_valid(&self) -> bool {
        is_valid_bio(&self.labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn toxic_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_toxic()).collect()
    }

    pub fn has_toxic(&self) -> bool {
        self.labels.iter().any(|l| l.is_toxic())
    }
}

impl From<Vec<BioLabel>> for TagSequence {
    fn from(labels: Vec<BioLabel>) -> Self {
        TagSequence { labels }
    }
}

pub fn is_valid_bio(labels: &[BioLabel]) -> bool {
    let mut prev = BioLabel::O;
    for &label in labels {
        if label == BioLabel::I && prev == BioLabel::O {
            return false;
        }
        prev = label;
    }
    true
}

/// Half-open token-index ranges of maximal toxic runs (B or I, in any order).
pub fn toxic_runs(labels: &[BioLabel]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, label) in labels.iter().enumerate() {
        match (label.is_toxic(), start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                runs.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, labels.len()));
    }
    runs
}

/// Character offsets covered by the maximal toxic runs. Characters strictly
/// between two tokens of one run are included; an orphan I (after O) simply
/// starts a run.
///
/// # Panics
/// If `tokens` and `tags` differ in length.
pub fn spans_from_tags(tokens: &[Token], tags: &TagSequence) -> CharSpanSet {
    assert_eq!(tokens.len(), tags.len(), "tokens and tags must align");
    let mut set = CharSpanSet::new();
    for (start, end) in toxic_runs(&tags.labels) {
        set.insert_range(tokens[start].char_start, tokens[end - 1].char_end);
    }
    set
}

/// Per-annotator labels for one post; `None` marks a missing annotation.
pub type AnnotatorTrack = Vec<Option<BioLabel>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Post {
    pub id: String,
    pub domain: Domain,
    /// Normalized text the token offsets index into.
    pub text: String,
    pub tokens: Vec<Token>,
    pub gold: Option<TagSequence>,
    /// Additional annotators beyond the gold column, in file order.
    pub annotations: Vec<AnnotatorTrack>,
    pub category: Option<String>,
}

impl Post {
    /// An unlabeled post whose text is reconstructed from the tokens, with a
    /// single space in each gap.
    pub fn from_tokens(id: impl Into<String>, domain: Domain, tokens: Vec<Token>) -> Self {
        let text = text_from_tokens(&tokens);
        Post {
            id: id.into(),
            domain,
            text,
            tokens,
            gold: None,
            annotations: Vec::new(),
            category: None,
        }
    }

    pub fn with_gold(mut self, gold: TagSequence) -> Self {
        assert_eq!(gold.len(), self.tokens.len(), "gold must align with tokens");
        self.gold = Some(gold);
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Post-level toxicity: at least one toxic gold token.
    pub fn is_toxic(&self) -> bool {
        self.gold.as_ref().is_some_and(TagSequence::has_toxic)
    }

    pub fn gold_spans(&self) -> CharSpanSet {
        match &self.gold {
            Some(gold) => spans_from_tags(&self.tokens, gold),
            None => CharSpanSet::new(),
        }
    }

    /// The gold column followed by every extra annotator column.
    pub fn annotator_tracks(&self) -> Vec<AnnotatorTrack> {
        let mut tracks = Vec::with_capacity(1 + self.annotations.len());
        if let Some(gold) = &self.gold {
            tracks.push(gold.labels.iter().copied().map(Some).collect());
        }
        tracks.extend(self.annotations.iter().cloned());
        tracks
    }
}

/// Rebuilds the normalized text from offset-bearing tokens, filling gaps
/// with spaces.
pub fn text_from_tokens(tokens: &[Token]) -> String {
    let mut text = String::new();
    let mut cursor = 0;
    for token in tokens {
        for _ in cursor..token.char_start {
            text.push(' ');
        }
        text.push_str(&token.surface);
        cursor = token.char_end;
    }
    text
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Ten hand-labelled posts with a second annotator column.
pub const DEMO_CORPUS: &str = include_str!("../data/demo_corpus.tsv");

/// Parses the token-per-line format.
pub fn parse_corpus(input: &str) -> Result<Vec<Post>> {
    let mut posts = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !block.is_empty() {
                posts.push(parse_block(&block)?);
                block.clear();
            }
        } else {
            block.push((idx + 1, line));
        }
    }
    if !block.is_empty() {
        posts.push(parse_block(&block)?);
    }
    Ok(posts)
}

fn parse_block(lines: &[(usize, &str)]) -> Result<Post> {
    let first_line = lines[0].0;
    let mut id = None;
    let mut domain = None;
    let mut category = None;
    let mut tokens = Vec::new();
    let mut gold = Vec::new();
    let mut extra: Vec<AnnotatorTrack> = Vec::new();
    let mut columns = None;
    for &(line_no, line) in lines {
        if let Some(header) = line.strip_prefix('#') {
            let (key, value) = header.split_once(' ').unwrap_or((header, ""));
            match key {
                "id" => id = Some(value.to_string()),
                "domain" => {
                    domain = Some(value.parse::<Domain>().map_err(|e| parse_err(line_no, e.to_string()))?)
                }
                "category" => category = Some(value.to_string()),
                _ => return Err(parse_err(line_no, format!("unknown header #{key}"))),
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(parse_err(line_no, "expected surface, start, end and labels"));
        }
        match columns {
            None => {
                columns = Some(fields.len());
                extra = vec![Vec::new(); fields.len().saturating_sub(4)];
            }
            Some(n) if n != fields.len() => {
                return Err(parse_err(
                    line_no,
                    format!("token has {} columns, previous tokens had {n}", fields.len()),
                ))
            }
            _ => {}
        }
        let surface = fields[0];
        let start: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad start offset {:?}", fields[1])))?;
        let end: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad end offset {:?}", fields[2])))?;
        if surface.is_empty() || end <= start || end - start != surface.chars().count() {
            return Err(parse_err(
                line_no,
                format!("offsets {start}..{end} do not match surface {surface:?}"),
            ));
        }
        if let Some(prev) = tokens.last().map(|t: &Token| t.char_end) {
            if start < prev {
                return Err(parse_err(line_no, "tokens overlap or are out of order"));
            }
        }
        tokens.push(Token::new(surface, start, end));
        if fields.len() >= 4 {
            gold.push(
                fields[3]
                    .parse::<BioLabel>()
                    .map_err(|e| parse_err(line_no, e.to_string()))?,
            );
        }
        for (track, field) in extra.iter_mut().zip(&fields[4..]) {
            let label = match *field {
                "-" => None,
                s => Some(s.parse::<BioLabel>().map_err(|e| parse_err(line_no, e.to_string()))?),
            };
            track.push(label);
        }
    }
    let id = id.ok_or_else(|| parse_err(first_line, "post without #id header"))?;
    let domain = domain.unwrap_or(Domain::Other);
    let mut post = Post::from_tokens(id, domain, tokens);
    post.category = category;
    if columns.is_some_and(|n| n >= 4) {
        post.gold = Some(TagSequence::new(gold));
    }
    post.annotations = extra;
    Ok(post)
}

/// Serializes posts in the canonical token-per-line form.
pub fn format_corpus(posts: &[Post]) -> String {
    let mut out = String::new();
    for post in posts {
        let _ = writeln!(out, "#id {}", post.id);
        let _ = writeln!(out, "#domain {}", post.domain);
        if let Some(category) = &post.category {
            let _ = writeln!(out, "#category {category}");
        }
        for (t, token) in post.tokens.iter().enumerate() {
            let _ = write!(out, "{}\t{}\t{}", token.surface, token.char_start, token.char_end);
            if let Some(gold) = &post.gold {
                let _ = write!(out, "\t{}", gold.labels[t]);
                for track in &post.annotations {
                    let _ = write!(out, "\t{}", track[t].map_or("-", BioLabel::as_str));
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Post>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn save_corpus(posts: &[Post], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_corpus(posts)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    domain: String,
    text: String,
}

/// Parses the JSON-lines raw format (`{"id", "domain", "text"}` per line).
pub fn parse_raw_jsonl(input: &str) -> Result<Vec<crate::textproc::RawText>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord =
            serde_json::from_str(line).map_err(|e| parse_err(idx + 1, e.to_string()))?;
        out.push(crate::textproc::RawText {
            content: record.text,
            source_id: record.id,
            domain: record.domain.parse().map_err(|e: Error| parse_err(idx + 1, e.to_string()))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratify {
    /// Cells are post toxicity only.
    Toxicity,
    /// Cells are domain × toxicity.
    Domain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub dev_frac: f64,
    pub test_frac: f64,
    pub stratify_on: Stratify,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.8,
            dev_frac: 0.1,
            test_frac: 0.1,
            stratify_on: Stratify::Domain,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.dev_frac, self.test_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("split fractions must lie in [0, 1]".into()));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions sum to {}, expected 1",
                fracs.iter().sum::<f64>()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Post>,
    pub dev: Vec<Post>,
    pub test: Vec<Post>,
}

/// Splits each non-empty stratification cell independently; each split keeps
/// the original corpus order.
pub fn stratified_split(posts: &[Post], spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut cells: BTreeMap<(Option<Domain>, bool), Vec<usize>> = BTreeMap::new();
    for (i, post) in posts.iter().enumerate() {
        let domain = match spec.stratify_on {
            Stratify::Domain => Some(post.domain),
            Stratify::Toxicity => None,
        };
        cells.entry((domain, post.is_toxic())).or_default().push(i);
    }
    let mut assignment = vec![0u8; posts.len()];
    let mut rng = rng::stream(spec.seed, "split");
    for ((domain, toxic), mut members) in cells {
        let n = members.len();
        if n < 3 {
            let cell = format!(
                "{}/{}",
                domain.map_or("all", Domain::name),
                if toxic { "toxic" } else { "non-toxic" }
            );
            return Err(Error::CellTooSmall { cell, count: n });
        }
        members.shuffle(&mut rng);
        let n_train = ((n as f64 * spec.train_frac).round() as usize).min(n);
        let n_dev = ((n as f64 * spec.dev_frac).round() as usize).min(n - n_train);
        for (rank, &i) in members.iter().enumerate() {
            assignment[i] = if rank < n_train {
                0
            } else if rank < n_train + n_dev {
                1
            } else {
                2
            };
        }
    }
    let mut splits = Splits::default();
    for (post, which) in posts.iter().zip(assignment) {
        match which {
            0 => splits.train.push(post.clone()),
            1 => splits.dev.push(post.clone()),
            _ => splits.test.push(post.clone()),
        }
    }
    Ok(splits)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Summary {
        let mut s = Summary {
            mean: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            count: 0,
        };
        let mut total = 0.0;
        for v in values {
            total += v;
            s.min = s.min.min(v);
            s.max = s.max.max(v);
            s.count += 1;
        }
        if s.count == 0 {
            return Summary::default();
        }
        s.mean = total / s.count as f64;
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainStats {
    pub domain: Domain,
    pub samples: usize,
    pub toxic_pct: f64,
    pub non_toxic_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusStats {
    pub posts: usize,
    pub toxic_posts: usize,
    pub per_domain: Vec<DomainStats>,
    /// Tokens per post.
    pub post_length: Summary,
    /// Tokens per dense toxic span (maximal toxic run).
    pub span_length: Summary,
    /// Fraction of toxic tokens, over posts with at least one toxic token.
    pub toxic_token_ratio: Summary,
    pub span_count: usize,
    /// Fraction of all posts with two or more disjoint toxic spans.
    pub multi_span_fraction: f64,
    /// Gold label counts in O, B, I order.
    pub label_counts: [usize; 3],
}

impl CorpusStats {
    pub fn label_distribution(&self) -> [f64; 3] {
        let total: usize = self.label_counts.iter().sum();
        if total == 0 {
            return [0.0; 3];
        }
        self.label_counts.map(|c| c as f64 / total as f64)
    }

    /// Key=value lines, stable order.
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "posts={}", self.posts);
        let _ = writeln!(out, "toxic_posts={}", self.toxic_posts);
        for d in &self.per_domain {
            let _ = writeln!(
                out,
                "domain.{}.samples={}\ndomain.{}.toxic_pct={:.2}\ndomain.{}.non_toxic_pct={:.2}",
                d.domain, d.samples, d.domain, d.toxic_pct, d.domain, d.non_toxic_pct
            );
        }
        for (name, s) in [
            ("post_length", &self.post_length),
            ("span_length", &self.span_length),
            ("toxic_token_ratio", &self.toxic_token_ratio),
        ] {
            let _ = writeln!(
                out,
                "{name}.mean={:.4}\n{name}.min={:.4}\n{name}.max={:.4}",
                s.mean, s.min, s.max
            );
        }
        let _ = writeln!(out, "spans={}", self.span_count);
        let _ = writeln!(out, "multi_span_fraction={:.4}", self.multi_span_fraction);
        let dist = self.label_distribution();
        for label in BioLabel::ALL {
            let _ = writeln!(
                out,
                "labels.{}={}\nlabels.{}.frac={:.4}",
                label,
                self.label_counts[label.index()],
                label,
                dist[label.index()]
            );
        }
        out
    }
}

pub fn compute_stats(posts: &[Post]) -> CorpusStats {
    let mut per_domain: BTreeMap<Domain, (usize, usize)> = BTreeMap::new();
    let mut span_lengths = Vec::new();
    let mut ratios = Vec::new();
    let mut multi = 0;
    let mut label_counts = [0usize; 3];
    for post in posts {
        let entry = per_domain.entry(post.domain).or_default();
        entry.0 += 1;
        if post.is_toxic() {
            entry.1 += 1;
        }
        let Some(gold) = &post.gold else { continue };
        for label in &gold.labels {
            label_counts[label.index()] += 1;
        }
        let runs = toxic_runs(&gold.labels);
        span_lengths.extend(runs.iter().map(|(s, e)| (e - s) as f64));
        if runs.len() >= 2 {
            multi += 1;
        }
        if !runs.is_empty() {
            let toxic: usize = runs.iter().map(|(s, e)| e - s).sum();
            ratios.push(toxic as f64 / gold.len() as f64);
        }
    }
    let per_domain: Vec<DomainStats> = per_domain
        .into_iter()
        .map(|(domain, (samples, toxic))| {
            let toxic_pct = 100.0 * toxic as f64 / samples as f64;
            DomainStats {
                domain,
                samples,
                toxic_pct,
                non_toxic_pct: 100.0 - toxic_pct,
            }
        })
        .collect();
    CorpusStats {
        posts: posts.len(),
        toxic_posts: posts.iter().filter(|p| p.is_toxic()).count(),
        per_domain,
        post_length: Summary::of(posts.iter().map(|p| p.len() as f64)),
        span_count: span_lengths.len(),
        span_length: Summary::of(span_lengths),
        toxic_token_ratio: Summary::of(ratios),
        multi_span_fraction: if posts.is_empty() {
            0.0
        } else {
            multi as f64 / posts.len() as f64
        },
        label_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BioLabel::{B, I, O};

    fn post(id: &str, domain: Domain, words: &[&str], labels: &[BioLabel]) -> Post {
        let text = words.join(" ");
        Post::from_tokens(id, domain, crate::textproc::tokenize(&text))
            .with_gold(TagSequence::new(labels.to_vec()))
    }

    #[test]
    fn validity() {
        assert!(TagSequence::new(vec![O, B, I, O]).is_valid());
        assert!(TagSequence::new(vec![B, B, I]).is_valid());
        assert!(!TagSequence::new(vec![I, O]).is_valid());
        assert!(!TagSequence::new(vec![B, O, I]).is_valid());
        assert!(TagSequence::default().is_valid());
    }

    #[test]
    fn load_single_post() {
        let text = "#id p1\n#domain news\nyeh\t0\t3\tO\nbura\t4\t8\tB-TOXIC\ninsaan\t9\t15\tI-TOXIC\n\n";
        let posts = parse_corpus(text).unwrap();
        assert_eq!(posts.len(), 1);
        let p = &posts[0];
        assert_eq!(p.len(), 3);
        assert_eq!(p.text, "yeh bura insaan");
        assert!(p.gold.as_ref().unwrap().is_valid());
        assert_eq!(format_corpus(&posts), text);
    }

    #[test]
    fn orphan_inside_loads_as_invalid() {
        let text = "#id p\n#domain youtube\nx\t0\t1\tI-TOXIC\ny\t2\t3\tO\n\n";
        let posts = parse_corpus(text).unwrap();
        assert!(!posts[0].gold.as_ref().unwrap().is_valid());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad_label = "#id p\nx\t0\t1\tB-NICE\n";
        assert!(matches!(parse_corpus(bad_label), Err(Error::Parse { line: 2, .. })));
        let ragged = "#id p\nx\t0\t1\tO\ny\t2\t3\n";
        assert!(matches!(parse_corpus(ragged), Err(Error::Parse { line: 3, .. })));
        let bad_offsets = "#id p\nxy\t0\t1\tO\n";
        assert!(matches!(parse_corpus(bad_offsets), Err(Error::Parse { line: 2, .. })));
        let no_id = "x\t0\t1\tO\n";
        assert!(matches!(parse_corpus(no_id), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn annotator_columns_and_missing_values() {
        let text = "#id p\n#domain social_media\n#category insult\na\t0\t1\tB-TOXIC\tB-TOXIC\t-\nb\t2\t3\tO\tI-TOXIC\tO\n\n";
        let posts = parse_corpus(text).unwrap();
        let p = &posts[0];
        assert_eq!(p.annotations.len(), 2);
        assert_eq!(p.annotations[1], vec![None, Some(O)]);
        assert_eq!(p.category.as_deref(), Some("insult"));
        assert_eq!(p.annotator_tracks().len(), 3);
        assert_eq!(format_corpus(&posts), text);
    }

    #[test]
    fn spans_all_outside_is_empty() {
        let p = post("a", Domain::News, &["ab", "cd"], &[O, O]);
        assert!(p.gold_spans().is_empty());
    }

    #[test]
    fn spans_include_interior_whitespace() {
        let tokens = vec![Token::new("ab", 0, 2), Token::new("cd", 3, 5)];
        let spans = spans_from_tags(&tokens, &TagSequence::new(vec![B, I]));
        assert_eq!(spans.iter().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        // Orphan I starts its own run.
        let spans = spans_from_tags(&tokens, &TagSequence::new(vec![O, I]));
        assert_eq!(spans.iter().collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn split_single_cell_sizes_and_determinism() {
        let posts: Vec<Post> = (0..100)
            .map(|i| post(&format!("p{i}"), Domain::News, &["a", "b"], &[O, O]))
            .collect();
        let spec = SplitSpec::default();
        let a = stratified_split(&posts, &spec).unwrap();
        assert_eq!((a.train.len(), a.dev.len(), a.test.len()), (80, 10, 10));
        let b = stratified_split(&posts, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_small_cell_is_an_error() {
        let mut posts: Vec<Post> = (0..10)
            .map(|i| post(&format!("p{i}"), Domain::News, &["a"], &[O]))
            .collect();
        posts.push(post("t", Domain::News, &["x"], &[B]));
        let err = stratified_split(&posts, &SplitSpec::default()).unwrap_err();
        match err {
            Error::CellTooSmall { cell, count } => {
                assert_eq!(cell, "news/toxic");
                assert_eq!(count, 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn split_fraction_sum_checked() {
        let spec = SplitSpec {
            train_frac: 0.7,
            ..SplitSpec::default()
        };
        assert!(matches!(stratified_split(&[], &spec), Err(Error::Config(_))));
    }

    #[test]
    fn stats_empty_and_single() {
        let s = compute_stats(&[]);
        assert_eq!(s.posts, 0);
        assert_eq!(s.span_count, 0);
        assert_eq!(s.label_counts, [0, 0, 0]);
        assert_eq!(s.multi_span_fraction, 0.0);

        let s = compute_stats(&[post("a", Domain::YouTube, &["w", "x", "y", "z"], &[O, B, I, O])]);
        assert_eq!(s.span_count, 1);
        assert_eq!(s.span_length.mean, 2.0);
        assert_eq!(s.multi_span_fraction, 0.0);
        assert_eq!(s.label_counts, [2, 1, 1]);
        assert_eq!(s.per_domain[0].toxic_pct, 100.0);
    }

    #[test]
    fn selection_to_tags() {
        let tags = TagSequence::from_selection(&[true, true, false, true]);
        assert_eq!(tags.labels, vec![B, I, O, B]);
        assert!(tags.is_valid());
    }
}
