//! Flat `section.key = value` run configuration. Defaults come from the
//! library types; a config file overrides them and flags override the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spanlab::augment::AugmentConfig;
use spanlab::corpus::{Domain, SplitSpec, Stratify};
use spanlab::explain::{GateMode, RationaleConfig, Selection};
use spanlab::labeler::{EncoderConfig, EncoderKind, LabelerConfig, LossConfig, LossKind};
use spanlab::metrics::GroupKey;
use spanlab::synth::SynthConfig;
use spanlab::textproc::Step;
use spanlab::trainer::{StopCriterion, TrainConfig};
use spanlab::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplainMethod {
    Ig,
    Attention,
    Are,
    Tags,
}

impl ExplainMethod {
    pub fn name(self) -> &'static str {
        match self {
            ExplainMethod::Ig => "ig",
            ExplainMethod::Attention => "attention",
            ExplainMethod::Are => "are",
            ExplainMethod::Tags => "tags",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    pub steps: Vec<Step>,
    pub transliteration: Option<PathBuf>,
    pub segmentation: Option<PathBuf>,
    /// Similarity at or above which a later post is dropped; `None` keeps all.
    pub dedup_threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExplainOptions {
    pub method: ExplainMethod,
    pub steps: usize,
    pub attention_threshold: f64,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub preprocess: PreprocessOptions,
    pub split: SplitSpec,
    pub encoder: EncoderConfig,
    pub constrain_bio: bool,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub breakdown: Option<GroupKey>,
    pub per_class: bool,
    pub explain: ExplainOptions,
    pub rationale: RationaleConfig,
    pub augment: AugmentConfig,
    pub synonym_dictionary: Option<PathBuf>,
    pub codeswitch_dictionary: Option<PathBuf>,
    pub synth: SynthConfig,
    /// Explicit `train.epoch_mask_prob`; otherwise it follows `augment.mask`.
    pub epoch_mask_prob: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let loss = LossConfig {
            derived_weights: true,
            ..LossConfig::default()
        };
        RunConfig {
            seed: 42,
            preprocess: PreprocessOptions {
                steps: Step::ALL.to_vec(),
                transliteration: None,
                segmentation: None,
                dedup_threshold: None,
            },
            split: SplitSpec::default(),
            encoder: EncoderConfig::default(),
            constrain_bio: true,
            loss,
            train: TrainConfig::default(),
            breakdown: Some(GroupKey::Domain),
            per_class: true,
            explain: ExplainOptions {
                method: ExplainMethod::Ig,
                steps: 50,
                attention_threshold: 0.5,
                limit: None,
            },
            rationale: RationaleConfig::default(),
            augment: AugmentConfig::demo(),
            synonym_dictionary: None,
            codeswitch_dictionary: None,
            synth: SynthConfig::default(),
            epoch_mask_prob: None,
        }
    }
}

fn conflict(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key} = {value:?}: {why}"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| conflict(key, value, e))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(conflict(key, value, "expected on/off")),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn optional_path(value: &str) -> Option<PathBuf> {
    match value {
        "" | "none" | "builtin" => None,
        v => Some(PathBuf::from(v)),
    }
}

/// Every key the config file accepts, with a short description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed; module streams are derived from it"),
    ("preprocess.steps", "comma list of nfc,diacritics,noise,transliterate,whitespace,segment"),
    ("preprocess.transliteration", "rule table path (builtin demo table when unset)"),
    ("preprocess.segmentation", "segmentation rule table path"),
    ("preprocess.dedup_threshold", "drop near-duplicates at this similarity, or none"),
    ("split.train", "train fraction"),
    ("split.dev", "dev fraction"),
    ("split.test", "test fraction"),
    ("split.stratify", "domain or toxicity"),
    ("encoder.kind", "recurrent or attention"),
    ("encoder.embed_dim", "embedding width"),
    ("encoder.hidden_dim", "encoder output width"),
    ("encoder.heads", "attention heads"),
    ("encoder.dropout", "dropout probability"),
    ("model.constrain_bio", "on/off"),
    ("loss.kind", "crf, weighted or focal"),
    ("loss.gamma", "focal exponent"),
    ("loss.class_weights", "O,B,I weights used when derived_weights is off"),
    ("loss.derived_weights", "derive class weights from training label counts"),
    ("loss.smoothing", "add-k smoothing for derived weights"),
    ("train.lr", "learning rate"),
    ("train.batch_size", "mini-batch size"),
    ("train.momentum", "SGD momentum"),
    ("train.clip_norm", "global gradient-norm clip"),
    ("train.max_epochs", "epoch limit"),
    ("train.patience", "early-stopping patience"),
    ("train.domain_weighting", "inverse-size domain weights and balanced batches"),
    ("train.single_domain", "train and validate on one domain only, or none"),
    ("train.stop", "macro or any_domain"),
    ("train.min_count", "vocabulary frequency cutoff"),
    ("train.epoch_mask_prob", "per-epoch masking of non-toxic tokens (augment.mask.prob when per_epoch)"),
    ("grid.learning_rates", "comma list"),
    ("grid.batch_sizes", "comma list"),
    ("grid.dropouts", "comma list"),
    ("eval.breakdown", "domain, category or none"),
    ("eval.per_class", "report per-class token scores"),
    ("explain.method", "ig, attention, are or tags"),
    ("explain.steps", "integration steps"),
    ("explain.attention_threshold", "mean-attention cutoff"),
    ("explain.limit", "explain only the first N posts, or none"),
    ("are.lambda", "sparsity weight"),
    ("are.threshold", "gate threshold (clears are.top_k)"),
    ("are.top_k", "select k tokens per post (clears are.threshold)"),
    ("are.gate_mode", "soft or hard"),
    ("are.embed_dim", "ARE embedding width"),
    ("are.lr", "ARE learning rate"),
    ("are.epochs", "ARE epochs"),
    ("are.batch_size", "ARE batch size"),
    ("augment.synonym.enabled", "on/off"),
    ("augment.synonym.frac_min", "lower replacement fraction"),
    ("augment.synonym.frac_max", "upper replacement fraction"),
    ("augment.synonym.dictionary", "dictionary path (builtin demo when unset)"),
    ("augment.mask.enabled", "on/off"),
    ("augment.mask.prob", "mask probability"),
    ("augment.mask.token", "mask token"),
    ("augment.mask.per_epoch", "on: mask during training each epoch; off: mask in the augment pass"),
    ("augment.codeswitch.enabled", "on/off"),
    ("augment.codeswitch.sample_frac", "fraction of posts code-switched"),
    ("augment.codeswitch.word_frac_min", "lower word fraction"),
    ("augment.codeswitch.word_frac_max", "upper word fraction"),
    ("augment.codeswitch.dictionary", "bilingual dictionary path (builtin demo when unset)"),
    ("synth.n_posts", "posts to generate"),
    ("synth.lexicon_size", "toxic words per lexicon"),
    ("synth.domains", "comma list of domains"),
    ("synth.disjoint_lexicons", "one lexicon per domain"),
    ("synth.filler_size", "filler vocabulary size"),
    ("synth.toxic_rate", "fraction of posts with a span"),
    ("synth.multi_span_rate", "fraction of toxic posts with two spans"),
    ("synth.min_len", "minimum post length"),
    ("synth.max_len", "maximum post length"),
    ("synth.max_span_words", "longest planted span"),
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "preprocess.steps" => self.preprocess.steps = parse_list(key, v)?,
            "preprocess.transliteration" => self.preprocess.transliteration = optional_path(v),
            "preprocess.segmentation" => self.preprocess.segmentation = optional_path(v),
            "preprocess.dedup_threshold" => {
                self.preprocess.dedup_threshold = if v == "none" { None } else { Some(parse(key, v)?) }
            }
            "split.train" => self.split.train_frac = parse(key, v)?,
            "split.dev" => self.split.dev_frac = parse(key, v)?,
            "split.test" => self.split.test_frac = parse(key, v)?,
            "split.stratify" => {
                self.split.stratify_on = match v {
                    "domain" => Stratify::Domain,
                    "toxicity" => Stratify::Toxicity,
                    _ => return Err(conflict(key, v, "expected domain or toxicity")),
                }
            }
            "encoder.kind" => self.encoder.kind = parse::<EncoderKind>(key, v)?,
            "encoder.embed_dim" => self.encoder.embed_dim = parse(key, v)?,
            "encoder.hidden_dim" => self.encoder.hidden_dim = parse(key, v)?,
            "encoder.heads" => self.encoder.heads = parse(key, v)?,
            "encoder.dropout" => self.encoder.dropout = parse(key, v)?,
            "model.constrain_bio" => self.constrain_bio = parse_bool(key, v)?,
            "loss.kind" => self.loss.kind = parse::<LossKind>(key, v)?,
            "loss.gamma" => self.loss.gamma = parse(key, v)?,
            "loss.class_weights" => {
                let w: Vec<f64> = parse_list(key, v)?;
                self.loss.class_weights = w
                    .try_into()
                    .map_err(|_| conflict(key, v, "expected three weights (O,B,I)"))?;
            }
            "loss.derived_weights" => self.loss.derived_weights = parse_bool(key, v)?,
            "loss.smoothing" => self.loss.smoothing = parse(key, v)?,
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.momentum" => self.train.momentum = parse(key, v)?,
            "train.clip_norm" => self.train.clip_norm = parse(key, v)?,
            "train.max_epochs" => self.train.max_epochs = parse(key, v)?,
            "train.patience" => self.train.patience = parse(key, v)?,
            "train.domain_weighting" => self.train.domain_weighting = parse_bool(key, v)?,
            "train.single_domain" => {
                self.train.single_domain = if v == "none" { None } else { Some(parse::<Domain>(key, v)?) }
            }
            "train.stop" => {
                self.train.stop = match v {
                    "macro" => StopCriterion::MacroAverage,
                    "any_domain" => StopCriterion::AnyDomain,
                    _ => return Err(conflict(key, v, "expected macro or any_domain")),
                }
            }
            "train.min_count" => self.train.min_count = parse(key, v)?,
            "train.epoch_mask_prob" => self.epoch_mask_prob = Some(parse(key, v)?),
            "grid.learning_rates" => self.train.learning_rates = parse_list(key, v)?,
            "grid.batch_sizes" => self.train.batch_sizes = parse_list(key, v)?,
            "grid.dropouts" => self.train.dropouts = parse_list(key, v)?,
            "eval.breakdown" => {
                self.breakdown = match v {
                    "domain" => Some(GroupKey::Domain),
                    "category" => Some(GroupKey::Category),
                    "none" => None,
                    _ => return Err(conflict(key, v, "expected domain, category or none")),
                }
            }
            "eval.per_class" => self.per_class = parse_bool(key, v)?,
            "explain.method" => {
                self.explain.method = match v {
                    "ig" => ExplainMethod::Ig,
                    "attention" => ExplainMethod::Attention,
                    "are" => ExplainMethod::Are,
                    "tags" => ExplainMethod::Tags,
                    _ => return Err(conflict(key, v, "expected ig, attention, are or tags")),
                }
            }
            "explain.steps" => self.explain.steps = parse(key, v)?,
            "explain.attention_threshold" => self.explain.attention_threshold = parse(key, v)?,
            "explain.limit" => self.explain.limit = if v == "none" { None } else { Some(parse(key, v)?) },
            "are.lambda" => self.rationale.lambda = parse(key, v)?,
            "are.threshold" => self.rationale.selection = Selection::Threshold(parse(key, v)?),
            "are.top_k" => self.rationale.selection = Selection::TopK(parse(key, v)?),
            "are.gate_mode" => {
                self.rationale.gate_mode = match v {
                    "soft" => GateMode::SoftL1,
                    "hard" => GateMode::HardAtInference,
                    _ => return Err(conflict(key, v, "expected soft or hard")),
                }
            }
            "are.embed_dim" => self.rationale.embed_dim = parse(key, v)?,
            "are.lr" => self.rationale.lr = parse(key, v)?,
            "are.epochs" => self.rationale.epochs = parse(key, v)?,
            "are.batch_size" => self.rationale.batch_size = parse(key, v)?,
            "augment.synonym.enabled" => self.augment.synonym.enabled = parse_bool(key, v)?,
            "augment.synonym.frac_min" => self.augment.synonym.frac_min = parse(key, v)?,
            "augment.synonym.frac_max" => self.augment.synonym.frac_max = parse(key, v)?,
            "augment.synonym.dictionary" => self.synonym_dictionary = optional_path(v),
            "augment.mask.enabled" => self.augment.masking.enabled = parse_bool(key, v)?,
            "augment.mask.prob" => self.augment.masking.prob = parse(key, v)?,
            "augment.mask.token" => self.augment.masking.token = v.to_string(),
            "augment.mask.per_epoch" => self.augment.masking.per_epoch = parse_bool(key, v)?,
            "augment.codeswitch.enabled" => self.augment.codeswitch.enabled = parse_bool(key, v)?,
            "augment.codeswitch.sample_frac" => self.augment.codeswitch.sample_frac = parse(key, v)?,
            "augment.codeswitch.word_frac_min" => self.augment.codeswitch.word_frac_min = parse(key, v)?,
            "augment.codeswitch.word_frac_max" => self.augment.codeswitch.word_frac_max = parse(key, v)?,
            "augment.codeswitch.dictionary" => self.codeswitch_dictionary = optional_path(v),
            "synth.n_posts" => self.synth.n_posts = parse(key, v)?,
            "synth.lexicon_size" => self.synth.lexicon_size = parse(key, v)?,
            "synth.domains" => self.synth.domains = parse_list(key, v)?,
            "synth.disjoint_lexicons" => self.synth.disjoint_lexicons = parse_bool(key, v)?,
            "synth.filler_size" => self.synth.filler_size = parse(key, v)?,
            "synth.toxic_rate" => self.synth.toxic_rate = parse(key, v)?,
            "synth.multi_span_rate" => self.synth.multi_span_rate = parse(key, v)?,
            "synth.min_len" => self.synth.min_len = parse(key, v)?,
            "synth.max_len" => self.synth.max_len = parse(key, v)?,
            "synth.max_span_words" => self.synth.max_span_words = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a config file. Repeating a key with a different value is a
    /// conflict.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", idx + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(prev) = seen.get(key) {
                if prev != value {
                    return Err(Error::Config(format!(
                        "config line {}: {key} set to both {prev:?} and {value:?}",
                        idx + 1
                    )));
                }
            }
            seen.insert(key.to_string(), value.to_string());
            self.set(key, value)
                .map_err(|e| Error::Config(format!("config line {}: {e}", idx + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.apply_text(&text)
    }

    /// Pushes the master seed into every module config and checks the
    /// merged view for contradictions.
    pub fn finalize(&mut self) -> Result<()> {
        self.split.seed = self.seed;
        self.encoder.seed = self.seed;
        self.train.seed = self.seed;
        self.rationale.seed = self.seed;
        self.augment.seed = self.seed;
        self.synth.seed = self.seed;
        let mask = &self.augment.masking;
        self.train.epoch_mask_prob = self
            .epoch_mask_prob
            .unwrap_or(if mask.enabled && mask.per_epoch { mask.prob } else { 0.0 });
        if let Some(path) = &self.synonym_dictionary {
            self.augment.synonym.dictionary = Some(spanlab::augment::Dictionary::load(path)?);
        }
        if let Some(path) = &self.codeswitch_dictionary {
            self.augment.codeswitch.dictionary = Some(spanlab::augment::Dictionary::load(path)?.symmetric());
        }
        self.split.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        self.rationale.validate()?;
        self.augment.validate()?;
        self.synth.validate()?;
        let mut enc = self.encoder.clone();
        enc.vocab_size = enc.vocab_size.max(2);
        enc.validate()?;
        if self.explain.steps == 0 {
            return Err(Error::Config("explain.steps must be at least 1".into()));
        }
        if self.explain.method == ExplainMethod::Attention && self.encoder.kind != EncoderKind::Attention {
            return Err(Error::Config(
                "explain.method = attention needs encoder.kind = attention".into(),
            ));
        }
        if let Some(t) = self.preprocess.dedup_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config("preprocess.dedup_threshold must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn labeler(&self) -> LabelerConfig {
        LabelerConfig {
            encoder: self.encoder.clone(),
            head: self.loss.kind.head(),
            constrain_bio: self.constrain_bio,
        }
    }

    /// The loss config actually used: class weights are only derived for
    /// the softmax-head losses.
    pub fn loss(&self) -> LossConfig {
        let mut loss = self.loss.clone();
        loss.derived_weights &= loss.kind != LossKind::CrfNll;
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_key_is_settable() {
        let samples = [
            ("seed", "7"),
            ("preprocess.steps", "nfc,whitespace"),
            ("preprocess.dedup_threshold", "0.9"),
            ("split.stratify", "toxicity"),
            ("encoder.kind", "attention"),
            ("model.constrain_bio", "off"),
            ("loss.kind", "focal"),
            ("loss.class_weights", "1,2,3"),
            ("train.single_domain", "news"),
            ("train.stop", "any_domain"),
            ("grid.learning_rates", "0.1,0.2"),
            ("eval.breakdown", "category"),
            ("explain.method", "are"),
            ("explain.limit", "3"),
            ("are.top_k", "2"),
            ("are.gate_mode", "soft"),
            ("augment.mask.token", "[M]"),
            ("synth.domains", "news,youtube"),
        ];
        let special: BTreeMap<&str, &str> = samples.into_iter().collect();
        for (key, _) in KEYS {
            let mut cfg = RunConfig::default();
            let value = special.get(key).copied().unwrap_or_else(|| {
                if key.ends_with("enabled")
                    || key.ends_with("weights")
                    || key.ends_with("weighting")
                    || key.ends_with("lexicons")
                    || key.ends_with("per_class")
                    || key.ends_with("per_epoch")
                {
                    "on"
                } else if key.ends_with("dictionary") || key.ends_with("transliteration") || key.ends_with("segmentation") {
                    "x.tsv"
                } else {
                    "1"
                }
            });
            cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn file_parsing_and_conflicts() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\ntrain.lr = 0.1\n\nloss.kind = weighted\n").unwrap();
        assert_eq!(cfg.train.lr, 0.1);
        assert_eq!(cfg.loss.kind, LossKind::Weighted);
        assert!(matches!(cfg.apply_text("train.lr = 0.1\ntrain.lr = 0.2"), Err(Error::Config(_))));
        assert!(matches!(cfg.apply_text("nope.key = 1"), Err(Error::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.set("split.train", "0.9").unwrap();
        assert!(matches!(cfg.finalize(), Err(Error::Config(_))));
    }

    #[test]
    fn epoch_masking_follows_the_mask_stage() {
        let mut cfg = RunConfig::default();
        cfg.finalize().unwrap();
        assert_eq!(cfg.train.epoch_mask_prob, 0.05);
        let mut cfg = RunConfig::default();
        cfg.set("augment.mask.per_epoch", "off").unwrap();
        cfg.finalize().unwrap();
        assert_eq!(cfg.train.epoch_mask_prob, 0.0);
        let mut cfg = RunConfig::default();
        cfg.set("train.epoch_mask_prob", "0.2").unwrap();
        cfg.set("augment.mask.enabled", "off").unwrap();
        cfg.finalize().unwrap();
        assert_eq!(cfg.train.epoch_mask_prob, 0.2);
    }
}
