//! Multi-domain training: inverse-size domain weights, domain-balanced
//! mini-batches, SGD with momentum and gradient clipping, and early stopping
//! on dev token-F1. Also grid search and the cross-domain matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BioLabel, Domain, Post, Splits, TagSequence};
use crate::error::{Error, Result};
use crate::labeler::{class_weights, Example, LabelerConfig, LabelerParams, LossConfig, LossKind};
use crate::metrics::{self, token_prf};
use crate::parallel;
use crate::rng;
use crate::vocab::{Vocab, MASK_INDEX};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCriterion {
    /// Stop when the mean dev F1 over domains has not improved for
    /// `patience` epochs.
    MacroAverage,
    /// Stop when no single domain's dev F1 has improved for `patience` epochs.
    AnyDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub dropouts: Vec<f64>,
    /// Learning rate and batch size of a single (non-grid) run.
    pub lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub domain_weighting: bool,
    pub single_domain: Option<Domain>,
    pub stop: StopCriterion,
    /// Minimum training frequency for a word to enter the vocabulary.
    pub min_count: usize,
    /// Probability of replacing a non-toxic training token with the mask
    /// token, redrawn every epoch. Zero disables it.
    pub epoch_mask_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rates: vec![1e-5, 3e-5, 5e-5],
            batch_sizes: vec![16, 32],
            dropouts: vec![0.1, 0.3],
            lr: 0.05,
            batch_size: 16,
            momentum: 0.9,
            clip_norm: 5.0,
            max_epochs: 20,
            patience: 5,
            seed: 42,
            domain_weighting: true,
            single_domain: None,
            stop: StopCriterion::MacroAverage,
            min_count: 1,
            epoch_mask_prob: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.learning_rates.is_empty() || self.batch_sizes.is_empty() || self.dropouts.is_empty() {
            return Err(Error::Config("grid axes must be non-empty".into()));
        }
        if self.batch_size == 0 || self.batch_sizes.contains(&0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.lr < 0.0 || self.learning_rates.iter().any(|&lr| lr < 0.0) {
            return Err(Error::Config("learning rates must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.epoch_mask_prob) {
            return Err(Error::Config("epoch_mask_prob must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// w_d = (1/|D_d|) / Σ_d' (1/|D_d'|).
pub fn domain_weights(counts: &BTreeMap<Domain, usize>) -> Result<BTreeMap<Domain, f64>> {
    if let Some((d, _)) = counts.iter().find(|(_, &n)| n == 0) {
        return Err(Error::EmptyDomain(d.name().into()));
    }
    let norm: f64 = counts.values().map(|&n| 1.0 / n as f64).sum();
    Ok(counts
        .iter()
        .map(|(&d, &n)| (d, (1.0 / n as f64) / norm))
        .collect())
}

/// Draws from a group in shuffled order, reshuffling whenever it runs dry.
#[derive(Debug, Clone)]
struct Cycler {
    members: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
}

impl Cycler {
    fn new(members: Vec<usize>) -> Self {
        Cycler {
            order: members.clone(),
            cursor: members.len(),
            members,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.cursor == self.order.len() {
            self.order = self.members.clone();
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }
}

/// Stateful domain-balanced sampler; state carries across epochs.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    groups: Vec<Cycler>,
    total: usize,
    rng: ChaCha8Rng,
}

impl BalancedSampler {
    /// `groups` holds item indices per domain; every group must be non-empty.
    pub fn new(groups: Vec<Vec<usize>>, rng: ChaCha8Rng) -> Result<Self> {
        if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
            return Err(Error::EmptyDomain("sampler group".into()));
        }
        let total = groups.iter().map(Vec::len).sum();
        Ok(BalancedSampler {
            groups: groups.into_iter().map(Cycler::new).collect(),
            total,
            rng,
        })
    }

    /// One epoch: ceil(N / batch_size) batches. Each batch gives every group
    /// batch_size / G slots; the remainder slots rotate across groups from
    /// batch to batch.
    pub fn epoch(&mut self, batch_size: usize) -> Vec<Vec<usize>> {
        let g = self.groups.len();
        let n_batches = self.total.div_ceil(batch_size);
        let (base, extra) = (batch_size / g, batch_size % g);
        let mut rotation = 0;
        let mut batches = Vec::with_capacity(n_batches);
        for _ in 0..n_batches {
            let mut batch = Vec::with_capacity(batch_size);
            for (k, group) in self.groups.iter_mut().enumerate() {
                let slots = base + usize::from((k + g - rotation) % g < extra);
                for _ in 0..slots {
                    batch.push(group.next(&mut self.rng));
                }
            }
            rotation = (rotation + extra) % g;
            batches.push(batch);
        }
        batches
    }
}

/// One epoch of domain-balanced batches over item indices grouped by domain.
pub fn balanced_batches(groups: &[Vec<usize>], batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut sampler = BalancedSampler::new(groups.to_vec(), rng::stream(seed, "trainer.batches"))?;
    Ok(sampler.epoch(batch_size))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dev_f1: BTreeMap<Domain, f64>,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    /// Dev F1 of the initial parameters (epoch 0).
    pub initial_dev_f1: BTreeMap<Domain, f64>,
    pub initial_macro_f1: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned checkpoint (0 = initial parameters).
    pub best_epoch: usize,
    pub best_macro_f1: f64,
    pub stopped_early: bool,
    pub aborted: Option<String>,
}

impl TrainLog {
    /// Line-oriented records: one per epoch, then a summary line.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        let f1s = |m: &BTreeMap<Domain, f64>| {
            m.iter()
                .map(|(d, f)| format!(" dev_f1.{}={f:.6}", d.name()))
                .collect::<String>()
        };
        let _ = writeln!(
            out,
            "epoch=0 loss=nan dev_f1.macro={:.6}{}",
            self.initial_macro_f1,
            f1s(&self.initial_dev_f1)
        );
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "epoch={} loss={:.6} dev_f1.macro={:.6}{}",
                r.epoch,
                r.loss,
                r.macro_f1,
                f1s(&r.dev_f1)
            );
        }
        let _ = writeln!(
            out,
            "best_epoch={} best_dev_f1.macro={:.6} stopped_early={} aborted={}",
            self.best_epoch,
            self.best_macro_f1,
            self.stopped_early,
            self.aborted.as_deref().unwrap_or("none")
        );
        out
    }
}

/// Replaces each orphan I (at position 0 or after O) with B.
pub fn repair_bio(labels: &[BioLabel]) -> Vec<BioLabel> {
    let mut out = labels.to_vec();
    for t in 0..out.len() {
        if out[t] == BioLabel::I && (t == 0 || out[t - 1] == BioLabel::O) {
            out[t] = BioLabel::B;
        }
    }
    out
}

fn gold_labels(post: &Post) -> Vec<BioLabel> {
    post.gold
        .as_ref()
        .map(|g| g.labels.clone())
        .unwrap_or_else(|| vec![BioLabel::O; post.len()])
}

/// Label counts (O, B, I) over gold tags.
pub fn label_counts(posts: &[Post]) -> [f64; 3] {
    let mut counts = [0.0; 3];
    for post in posts {
        for l in gold_labels(post) {
            counts[l.index()] += 1.0;
        }
    }
    counts
}

pub fn predict_all(params: &LabelerParams, posts: &[Post]) -> Vec<TagSequence> {
    posts.iter().map(|p| params.predict(&params.vocab.encode(p))).collect()
}

/// Token-F1 on the dev posts of each domain present.
pub fn dev_scores(params: &LabelerParams, dev: &[Post]) -> Result<BTreeMap<Domain, f64>> {
    let mut by_domain: BTreeMap<Domain, Vec<&Post>> = BTreeMap::new();
    for post in dev {
        by_domain.entry(post.domain).or_default().push(post);
    }
    let mut out = BTreeMap::new();
    for (domain, posts) in by_domain {
        let preds: Vec<TagSequence> = posts.iter().map(|p| params.predict(&params.vocab.encode(p))).collect();
        let golds: Vec<TagSequence> = posts.iter().map(|p| TagSequence::new(gold_labels(p))).collect();
        out.insert(domain, token_prf(&preds, &golds)?.prf.f1);
    }
    Ok(out)
}

fn macro_average(scores: &BTreeMap<Domain, f64>) -> f64 {
    if scores.is_empty() {
        0.0
    } else {
        scores.values().sum::<f64>() / scores.len() as f64
    }
}

/// Trains one model and returns the best-dev checkpoint with its log.
pub fn train(
    train_posts: &[Post],
    dev_posts: &[Post],
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    model_cfg: &LabelerConfig,
) -> Result<(LabelerParams, TrainLog)> {
    cfg.validate()?;
    loss_cfg.validate()?;
    let keep = |p: &&Post| cfg.single_domain.is_none_or(|d| p.domain == d);
    let train_posts: Vec<&Post> = train_posts.iter().filter(keep).filter(|p| !p.is_empty()).collect();
    let dev_posts: Vec<Post> = dev_posts.iter().filter(keep).cloned().collect();
    if train_posts.is_empty() {
        return Err(Error::InvalidInput("no training posts".into()));
    }

    let vocab = Vocab::build(train_posts.iter().copied(), cfg.min_count);
    let mut model_cfg = model_cfg.clone();
    model_cfg.head = loss_cfg.kind.head();
    let mut params = LabelerParams::init(model_cfg, vocab)?;

    let mut loss_cfg = loss_cfg.clone();
    if loss_cfg.derived_weights {
        let owned: Vec<Post> = train_posts.iter().map(|p| (*p).clone()).collect();
        let counts = label_counts(&owned).map(|n| n + loss_cfg.smoothing);
        loss_cfg.class_weights = class_weights(counts)?;
    }

    let mut domain_counts: BTreeMap<Domain, usize> = BTreeMap::new();
    for p in &train_posts {
        *domain_counts.entry(p.domain).or_default() += 1;
    }
    let weights = if cfg.domain_weighting {
        domain_weights(&domain_counts)?
    } else {
        domain_counts.keys().map(|&d| (d, 1.0)).collect()
    };
    let repair = loss_cfg.kind == LossKind::CrfNll && params.config.constrain_bio;
    let examples: Vec<Example> = train_posts
        .iter()
        .map(|p| {
            let gold = gold_labels(p);
            Example {
                ids: params.vocab.encode(p),
                gold: if repair { repair_bio(&gold) } else { gold },
                weight: weights[&p.domain],
            }
        })
        .collect();
    let groups: Vec<Vec<usize>> = if cfg.domain_weighting {
        domain_counts
            .keys()
            .map(|&d| (0..train_posts.len()).filter(|&i| train_posts[i].domain == d).collect())
            .collect()
    } else {
        vec![(0..train_posts.len()).collect()]
    };
    let mut sampler = BalancedSampler::new(groups, rng::stream(cfg.seed, "trainer.batches"))?;
    let mut dropout_rng = rng::stream(cfg.seed, "trainer.dropout");
    let mut mask_rng = rng::stream(cfg.seed, "trainer.mask");

    let mut log = TrainLog::default();
    log.initial_dev_f1 = dev_scores(&params, &dev_posts)?;
    log.initial_macro_f1 = macro_average(&log.initial_dev_f1);
    log.best_macro_f1 = log.initial_macro_f1;
    let mut best = params.clone();
    let mut best_per_domain = log.initial_dev_f1.clone();
    let mut since_improvement = 0;
    let mut velocity: BTreeMap<String, Array2<f64>> = params
        .tensors
        .iter()
        .map(|(k, t)| (k.clone(), Array2::zeros(t.dim())))
        .collect();

    'epochs: for epoch in 1..=cfg.max_epochs {
        let batches = sampler.epoch(cfg.batch_size);
        let mut epoch_loss = 0.0;
        for batch in &batches {
            let mut items: Vec<Example> = batch.iter().map(|&i| examples[i].clone()).collect();
            if cfg.epoch_mask_prob > 0.0 {
                for ex in &mut items {
                    for (id, label) in ex.ids.iter_mut().zip(&ex.gold) {
                        if !label.is_toxic() && mask_rng.gen::<f64>() < cfg.epoch_mask_prob {
                            *id = MASK_INDEX;
                        }
                    }
                }
            }
            let (value, mut grads) = match params.loss_and_grad(&items, &loss_cfg, Some(&mut dropout_rng)) {
                Ok(r) => r,
                Err(e @ (Error::NonFinite(_) | Error::NonFiniteGradient { .. })) => {
                    log.aborted = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            epoch_loss += value;
            let norm = grads.values().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
            if norm > cfg.clip_norm {
                let k = cfg.clip_norm / norm;
                grads.values_mut().for_each(|g| g.mapv_inplace(|x| x * k));
            }
            for (name, g) in grads {
                let v = velocity.get_mut(&name).expect("velocity");
                v.zip_mut_with(&g, |v, &g| *v = cfg.momentum * *v + g);
                let v = &*v;
                params.tensor_mut(&name).zip_mut_with(v, |p, &v| *p -= cfg.lr * v);
            }
        }
        let dev_f1 = dev_scores(&params, &dev_posts)?;
        let macro_f1 = macro_average(&dev_f1);
        log.epochs.push(EpochRecord {
            epoch,
            loss: epoch_loss / batches.len() as f64,
            dev_f1: dev_f1.clone(),
            macro_f1,
        });
        if macro_f1 > log.best_macro_f1 {
            log.best_macro_f1 = macro_f1;
            log.best_epoch = epoch;
            best = params.clone();
        }
        let improved = match cfg.stop {
            StopCriterion::MacroAverage => log.best_epoch == epoch,
            StopCriterion::AnyDomain => {
                let mut any = false;
                for (d, f) in &dev_f1 {
                    let b = best_per_domain.entry(*d).or_insert(f64::NEG_INFINITY);
                    if *f > *b {
                        *b = *f;
                        any = true;
                    }
                }
                any
            }
        };
        since_improvement = if improved { 0 } else { since_improvement + 1 };
        if since_improvement >= cfg.patience {
            log.stopped_early = true;
            break;
        }
    }
    Ok((best, log))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lr: f64,
    pub batch_size: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub point: GridPoint,
    pub dev_f1: f64,
    pub log: TrainLog,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub runs: Vec<GridRun>,
    pub best: usize,
}

impl GridResult {
    pub fn best_run(&self) -> &GridRun {
        &self.runs[self.best]
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("lr\tbatch\tdropout\tdev_f1\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{:e}\t{}\t{}\t{:.6}",
                r.point.lr, r.point.batch_size, r.point.dropout, r.dev_f1
            );
        }
        let b = &self.best_run().point;
        let _ = writeln!(out, "best: lr={:e} batch={} dropout={}", b.lr, b.batch_size, b.dropout);
        out
    }
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// The grid in tie-break order: ascending lr, then batch size, then dropout.
pub fn grid_points(cfg: &TrainConfig) -> Vec<GridPoint> {
    let mut batches = cfg.batch_sizes.clone();
    batches.sort_unstable();
    batches.dedup();
    let mut out = Vec::new();
    for &lr in &sorted_unique(cfg.learning_rates.clone()) {
        for &batch_size in &batches {
            for &dropout in &sorted_unique(cfg.dropouts.clone()) {
                out.push(GridPoint { lr, batch_size, dropout });
            }
        }
    }
    out
}

/// Exhaustive grid; the best run has the highest best-epoch dev F1, ties going
/// to the earliest point in [`grid_points`] order.
pub fn grid_search(
    train_posts: &[Post],
    dev_posts: &[Post],
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    model_cfg: &LabelerConfig,
) -> Result<GridResult> {
    cfg.validate()?;
    let points = grid_points(cfg);
    let results = parallel::map(&points, parallel::worker_count(), |_, point| {
        let run_cfg = TrainConfig {
            lr: point.lr,
            batch_size: point.batch_size,
            ..cfg.clone()
        };
        let mut m = model_cfg.clone();
        m.encoder.dropout = point.dropout;
        train(train_posts, dev_posts, &run_cfg, loss_cfg, &m).map(|(_, log)| GridRun {
            point: *point,
            dev_f1: log.best_macro_f1,
            log,
        })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.dev_f1 > runs[best].dev_f1 {
            best = i;
        }
    }
    Ok(GridResult { runs, best })
}

/// Rows are training sources (each domain, then all domains together);
/// columns are test domains.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossDomainMatrix {
    pub domains: Vec<Domain>,
    pub sources: Vec<String>,
    pub token_f1: Vec<Vec<f64>>,
    pub span_f1: Vec<Vec<f64>>,
}

impl CrossDomainMatrix {
    pub fn diagonal_mean(&self) -> f64 {
        let n = self.domains.len();
        (0..n).map(|i| self.token_f1[i][i]).sum::<f64>() / n as f64
    }

    pub fn off_diagonal_mean(&self) -> f64 {
        let n = self.domains.len();
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    sum += self.token_f1[i][j];
                }
            }
        }
        sum / (n * (n - 1)) as f64
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("train\\test");
        for d in &self.domains {
            let _ = write!(out, "\t{}", d.name());
        }
        out.push('\n');
        for (name, row) in self.sources.iter().zip(&self.token_f1) {
            out.push_str(name);
            for f in row {
                let _ = write!(out, "\t{f:.4}");
            }
            out.push('\n');
        }
        out
    }
}

/// Trains one model per source domain plus one on all domains and scores each
/// on every domain's test split.
pub fn cross_domain_eval(
    splits: &Splits,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    model_cfg: &LabelerConfig,
) -> Result<CrossDomainMatrix> {
    let domains: Vec<Domain> = {
        let mut d: Vec<Domain> = splits.train.iter().map(|p| p.domain).collect();
        d.sort();
        d.dedup();
        d
    };
    if domains.len() < 2 {
        return Err(Error::InvalidInput("cross-domain evaluation needs at least two domains".into()));
    }
    let mut sources: Vec<Option<Domain>> = domains.iter().copied().map(Some).collect();
    sources.push(None);
    let tests: Vec<Vec<Post>> = domains
        .iter()
        .map(|&d| splits.test.iter().filter(|p| p.domain == d).cloned().collect())
        .collect();
    let rows = parallel::map(&sources, parallel::worker_count(), |_, source| {
        let run_cfg = TrainConfig {
            single_domain: *source,
            ..cfg.clone()
        };
        let (params, _) = train(&splits.train, &splits.dev, &run_cfg, loss_cfg, model_cfg)?;
        let mut tok = Vec::new();
        let mut span = Vec::new();
        for test in &tests {
            let preds = predict_all(&params, test);
            let report = metrics::evaluate(test, &preds, false)?;
            tok.push(report.token.f1);
            span.push(report.span.f1);
        }
        Ok((tok, span))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let (token_f1, span_f1) = rows.into_iter().unzip();
    Ok(CrossDomainMatrix {
        sources: sources
            .iter()
            .map(|s| s.map_or("multi".to_string(), |d| d.name().to_string()))
            .collect(),
        domains,
        token_f1,
        span_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_from_table_counts() {
        let counts = BTreeMap::from([(Domain::SocialMedia, 5254), (Domain::News, 4300), (Domain::YouTube, 4788)]);
        let w = domain_weights(&counts).unwrap();
        // Independent arithmetic: harmonic normalisation by hand.
        let inv = [1.0 / 5254.0, 1.0 / 4300.0, 1.0 / 4788.0];
        let s: f64 = inv.iter().sum();
        assert!((w[&Domain::SocialMedia] - inv[0] / s).abs() < 1e-15);
        assert!((w[&Domain::SocialMedia] - 0.3013).abs() < 1e-4);
        assert!((w[&Domain::News] - 0.3681).abs() < 1e-4);
        assert!((w[&Domain::YouTube] - 0.3306).abs() < 1e-4);
        assert!((w.values().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weights_simple_cases() {
        let w = domain_weights(&BTreeMap::from([(Domain::News, 10), (Domain::YouTube, 20)])).unwrap();
        assert!((w[&Domain::News] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[&Domain::YouTube] - 1.0 / 3.0).abs() < 1e-15);
        let eq = domain_weights(&BTreeMap::from([(Domain::News, 7), (Domain::Other, 7)])).unwrap();
        assert_eq!(eq[&Domain::News], 0.5);
        assert!(matches!(
            domain_weights(&BTreeMap::from([(Domain::News, 0)])),
            Err(Error::EmptyDomain(_))
        ));
    }

    #[test]
    fn balanced_composition() {
        let groups = vec![(0..9).collect(), (9..18).collect(), (18..27).collect()];
        for batch in balanced_batches(&groups, 9, 1).unwrap() {
            for g in 0..3 {
                assert_eq!(batch.iter().filter(|&&i| i / 9 == g).count(), 3);
            }
        }
        let groups = vec![(0..10).collect(), (10..30).collect()];
        let batches = balanced_batches(&groups, 4, 1).unwrap();
        assert_eq!(batches.len(), 8);
        for batch in batches {
            assert_eq!(batch.iter().filter(|&&i| i < 10).count(), 2);
        }
    }

    #[test]
    fn repair_turns_orphans_into_begins() {
        use BioLabel::*;
        assert_eq!(repair_bio(&[I, I, O, I, B, I]), vec![B, I, O, B, B, I]);
    }
}
