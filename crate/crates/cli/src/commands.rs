use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use spanlab::agreement::AgreementReport;
use spanlab::augment;
use spanlab::corpus::{self, Domain, Post, Splits, TagSequence};
use spanlab::explain::{self, Highlight, RenderFormat};
use spanlab::labeler::LabelerParams;
use spanlab::metrics;
use spanlab::synth;
use spanlab::textproc::{self, PipelineConfig, RawText, RuleTable};
use spanlab::trainer;
use spanlab::{Error, Result};

use crate::config::{ExplainMethod, RunConfig};
use crate::{Common, Format};

/// One-line status summaries go to stderr so stdout carries only the report.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stderr(), $($arg)*);
    }};
}

#[derive(Debug, Clone, Copy)]
pub enum Sub {
    Preprocess,
    Stats,
    Agreement,
    Split,
    Train,
    Grid,
    Eval,
    Crossdomain,
    Predict,
    Explain,
    Augment,
    Synth,
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{flag} is required for this subcommand")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes the report to `--output`, or to stdout when no path is given.
fn emit(output: &Option<PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => write_file(path, text),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn destination(output: &Option<PathBuf>) -> String {
    output.as_ref().map_or("stdout".to_string(), |p| p.display().to_string())
}

fn load(path: &Path) -> Result<Vec<Post>> {
    corpus::load_corpus(path)
}

/// Train and dev posts: a directory holding `train.tsv` and `dev.tsv`, or a
/// single corpus split with the configured spec.
fn train_dev(path: &Path, cfg: &RunConfig) -> Result<Splits> {
    if path.is_dir() {
        let test = path.join("test.tsv");
        Ok(Splits {
            train: load(&path.join("train.tsv"))?,
            dev: load(&path.join("dev.tsv"))?,
            test: if test.exists() { load(&test)? } else { Vec::new() },
        })
    } else {
        corpus::stratified_split(&load(path)?, &cfg.split)
    }
}

pub fn run(sub: Sub, c: &Common) -> Result<()> {
    let cfg = c.run_config()?;
    match sub {
        Sub::Preprocess => preprocess(c, &cfg),
        Sub::Stats => {
            let posts = load(required(&c.input, "--input")?)?;
            let stats = corpus::compute_stats(&posts);
            emit(&c.output, &stats.to_report())?;
            say!(
                "stats: {} posts, {} toxic, {} spans -> {}",
                stats.posts,
                stats.toxic_posts,
                stats.span_count,
                destination(&c.output)
            );
            Ok(())
        }
        Sub::Agreement => {
            let posts = load(required(&c.input, "--input")?)?;
            let report = AgreementReport::compute(&posts);
            emit(&c.output, &report.render())?;
            let kappa = report.kappa.as_ref().map_or("undefined".to_string(), |k| format!("{:.4}", k.kappa));
            let alpha = report.alpha.as_ref().map_or("undefined".to_string(), |a| format!("{a:.4}"));
            say!(
                "agreement: kappa={kappa} alpha={alpha} disagreeing_posts={} -> {}",
                report.disagreements.len(),
                destination(&c.output)
            );
            Ok(())
        }
        Sub::Split => {
            let posts = load(required(&c.input, "--input")?)?;
            let dir = required(&c.output, "--output")?;
            let splits = corpus::stratified_split(&posts, &cfg.split)?;
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?;
            for (name, part) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
                corpus::save_corpus(part, dir.join(format!("{name}.tsv")))?;
            }
            say!(
                "split: train={} dev={} test={} -> {}",
                splits.train.len(),
                splits.dev.len(),
                splits.test.len(),
                dir.display()
            );
            Ok(())
        }
        Sub::Train => train(c, &cfg),
        Sub::Grid => {
            let splits = train_dev(required(&c.input, "--input")?, &cfg)?;
            let result = trainer::grid_search(&splits.train, &splits.dev, &cfg.train, &cfg.loss(), &cfg.labeler())?;
            emit(&c.output, &result.to_table())?;
            let best = result.best_run();
            say!(
                "grid: {} runs, best lr={:e} batch={} dropout={} dev_f1={:.4} -> {}",
                result.runs.len(),
                best.point.lr,
                best.point.batch_size,
                best.point.dropout,
                best.dev_f1,
                destination(&c.output)
            );
            Ok(())
        }
        Sub::Eval => eval(c, &cfg),
        Sub::Crossdomain => {
            let posts = load(required(&c.input, "--input")?)?;
            let splits = corpus::stratified_split(&posts, &cfg.split)?;
            let m = trainer::cross_domain_eval(&splits, &cfg.train, &cfg.loss(), &cfg.labeler())?;
            emit(&c.output, &m.to_table())?;
            say!(
                "crossdomain: diagonal={:.4} off_diagonal={:.4} -> {}",
                m.diagonal_mean(),
                m.off_diagonal_mean(),
                destination(&c.output)
            );
            Ok(())
        }
        Sub::Predict => {
            let posts = load(required(&c.input, "--input")?)?;
            let params = model(c)?;
            let preds = trainer::predict_all(&params, &posts);
            let labelled: Vec<Post> = posts
                .into_iter()
                .zip(preds)
                .map(|(mut p, tags)| {
                    p.gold = Some(tags);
                    p.annotations.clear();
                    p
                })
                .collect();
            let toxic = labelled.iter().filter(|p| p.is_toxic()).count();
            emit(&c.output, &corpus::format_corpus(&labelled))?;
            say!(
                "predict: {} posts, {} predicted toxic -> {}",
                labelled.len(),
                toxic,
                destination(&c.output)
            );
            Ok(())
        }
        Sub::Explain => explain(c, &cfg),
        Sub::Augment => {
            let posts = load(required(&c.input, "--input")?)?;
            let augmented = augment::augment_corpus(&posts, &cfg.augment)?;
            let changed = posts
                .iter()
                .zip(&augmented)
                .filter(|(a, b)| a.tokens != b.tokens)
                .count();
            let mut all = posts.clone();
            all.extend(augmented);
            emit(&c.output, &corpus::format_corpus(&all))?;
            say!(
                "augment: {} posts, {} altered copies -> {}",
                posts.len(),
                changed,
                destination(&c.output)
            );
            Ok(())
        }
        Sub::Synth => {
            let generated = synth::generate(&cfg.synth)?;
            let toxic = generated.posts.iter().filter(|p| p.is_toxic()).count();
            emit(&c.output, &corpus::format_corpus(&generated.posts))?;
            say!(
                "synth: {} posts, {} toxic -> {}",
                generated.posts.len(),
                toxic,
                destination(&c.output)
            );
            Ok(())
        }
    }
}

fn model(c: &Common) -> Result<LabelerParams> {
    let mut params = LabelerParams::load(required(&c.model, "--model")?)?;
    if let Some(s) = c.constrain_bio {
        params.config.constrain_bio = s == crate::Switch::On;
    }
    Ok(params)
}

fn raw_records(text: &str) -> Result<Vec<RawText>> {
    if text.trim_start().starts_with('{') {
        return corpus::parse_raw_jsonl(text);
    }
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| RawText {
            content: l.to_string(),
            source_id: format!("line-{}", i + 1),
            domain: Domain::Other,
        })
        .collect())
}

fn preprocess(c: &Common, cfg: &RunConfig) -> Result<()> {
    let path = required(&c.input, "--input")?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut pipeline = PipelineConfig::with_steps(&cfg.preprocess.steps);
    if let Some(p) = &cfg.preprocess.transliteration {
        pipeline.transliteration = RuleTable::load(p)?;
    }
    if let Some(p) = &cfg.preprocess.segmentation {
        pipeline.segmentation = RuleTable::load(p)?;
    }
    let records = raw_records(&text)?;
    let mut posts: Vec<Post> = records
        .iter()
        .map(|raw| {
            let norm = textproc::normalize(raw, &pipeline);
            let mut post = Post::from_tokens(raw.source_id.clone(), raw.domain, textproc::tokenize(&norm.text));
            post.text = norm.text;
            post
        })
        .collect();
    let before = posts.len();
    if let Some(threshold) = cfg.preprocess.dedup_threshold {
        posts = textproc::dedup(posts, threshold)?;
    }
    let tokens: usize = posts.iter().map(Post::len).sum();
    emit(&c.output, &corpus::format_corpus(&posts))?;
    say!(
        "preprocess: {} posts, {} tokens, {} duplicates removed -> {}",
        posts.len(),
        tokens,
        before - posts.len(),
        destination(&c.output)
    );
    Ok(())
}

fn train(c: &Common, cfg: &RunConfig) -> Result<()> {
    let splits = train_dev(required(&c.input, "--input")?, cfg)?;
    let model_path = required(&c.model, "--model")?;
    let (params, log) = trainer::train(&splits.train, &splits.dev, &cfg.train, &cfg.loss(), &cfg.labeler())?;
    params.save(model_path)?;
    let mut report = log.to_lines();
    if !splits.test.is_empty() {
        let preds = trainer::predict_all(&params, &splits.test);
        let scores = metrics::evaluate(&splits.test, &preds, false)?;
        report.push_str(&scores.key_values("test."));
    }
    emit(&c.output, &report)?;
    say!(
        "train: {} posts, best_epoch={} dev_f1={:.4} params={} -> {}",
        splits.train.len(),
        log.best_epoch,
        log.best_macro_f1,
        params.num_parameters(),
        model_path.display()
    );
    Ok(())
}

/// Predicted tags read from a corpus whose label column holds predictions.
fn predictions_from(path: &Path, gold: &[Post]) -> Result<Vec<TagSequence>> {
    let pred_posts = load(path)?;
    if pred_posts.len() != gold.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            found: pred_posts.len(),
        });
    }
    gold.iter()
        .zip(pred_posts)
        .map(|(g, p)| {
            if p.id != g.id || p.len() != g.len() {
                return Err(Error::InvalidInput(format!(
                    "prediction for {} does not align with gold post {}",
                    p.id, g.id
                )));
            }
            p.gold
                .ok_or_else(|| Error::InvalidInput(format!("prediction {} has no label column", p.id)))
        })
        .collect()
}

fn eval(c: &Common, cfg: &RunConfig) -> Result<()> {
    let gold = load(required(&c.input, "--input")?)?;
    let preds = match (&c.pred, &c.model) {
        (Some(path), None) => predictions_from(path, &gold)?,
        (None, Some(_)) => trainer::predict_all(&model(c)?, &gold),
        (Some(_), Some(_)) => return Err(Error::Config("give either --pred or --model, not both".into())),
        (None, None) => return Err(Error::Config("eval needs --pred or --model".into())),
    };
    let report = metrics::evaluate(&gold, &preds, cfg.per_class)?;
    let mut out = report.key_values("");
    if let Some(key) = cfg.breakdown {
        out.push('\n');
        out.push_str(&metrics::format_table(&metrics::breakdown(&gold, &preds, key)?));
    }
    emit(&c.output, &out)?;
    say!(
        "eval: {} posts, span_f1={:.4} token_f1={:.4} -> {}",
        report.posts,
        report.span.f1,
        report.token.f1,
        destination(&c.output)
    );
    Ok(())
}

struct Explained {
    scores: Vec<f64>,
    tags: Option<TagSequence>,
    attribution: Option<explain::AttributionMap>,
}

impl Explained {
    fn highlight(&self) -> Highlight<'_> {
        match (&self.attribution, &self.tags) {
            (Some(map), _) => Highlight::Attribution(map),
            (None, Some(tags)) => Highlight::Tags(tags),
            (None, None) => unreachable!("every method yields tags or attributions"),
        }
    }
}

fn explain(c: &Common, cfg: &RunConfig) -> Result<()> {
    let mut posts = load(required(&c.input, "--input")?)?;
    if let Some(limit) = cfg.explain.limit {
        posts.truncate(limit);
    }
    let results: Vec<Explained> = match cfg.explain.method {
        ExplainMethod::Are => {
            let (are, _) = explain::are_train(&posts, &cfg.rationale)?;
            posts
                .iter()
                .map(|p| Explained {
                    scores: are.gates(p),
                    tags: Some(explain::are_extract(&are, p, cfg.rationale.selection)),
                    attribution: None,
                })
                .collect()
        }
        method => {
            let params = model(c)?;
            posts
                .iter()
                .map(|p| -> Result<Explained> {
                    let ids = params.vocab.encode(p);
                    Ok(match method {
                        ExplainMethod::Ig => {
                            let map = explain::explain_post(&params, p, cfg.explain.steps)?;
                            Explained {
                                scores: map.token_scores.clone(),
                                tags: None,
                                attribution: Some(map),
                            }
                        }
                        ExplainMethod::Attention => Explained {
                            scores: explain::mean_attention(&params, &ids)?,
                            tags: Some(explain::attention_tags(&params, &ids, cfg.explain.attention_threshold)?),
                            attribution: None,
                        },
                        _ => {
                            let probs = params.probabilities(&ids)?;
                            Explained {
                                scores: probs.rows().into_iter().map(|r| r[1] + r[2]).collect(),
                                tags: Some(params.predict(&ids)),
                                attribution: None,
                            }
                        }
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    let out = match c.format.unwrap_or(Format::Tsv) {
        Format::Tsv => {
            let mut out = String::from("id\tindex\ttoken\tscore\ttag\n");
            for (p, e) in posts.iter().zip(&results) {
                for (i, tok) in p.tokens.iter().enumerate() {
                    let tag = e.tags.as_ref().map_or("-", |t| t.labels[i].as_str());
                    let _ = writeln!(out, "{}\t{i}\t{}\t{:.6}\t{tag}", p.id, tok.surface, e.scores[i]);
                }
                if let Some(map) = &e.attribution {
                    let _ = writeln!(
                        out,
                        "# {} f_input={:.6} f_baseline={:.6} residual={:.3e}",
                        p.id, map.f_input, map.f_baseline, map.completeness_residual
                    );
                }
            }
            out
        }
        Format::Ansi => {
            let mut out = String::new();
            for (p, e) in posts.iter().zip(&results) {
                let _ = writeln!(out, "{}\t{}", p.id, explain::render_highlights(p, e.highlight(), RenderFormat::Ansi));
            }
            out
        }
        Format::Html => {
            let paragraphs: Vec<String> = posts
                .iter()
                .zip(&results)
                .map(|(p, e)| explain::html_paragraph(p, e.highlight()))
                .collect();
            explain::html_document("spanlab explanations", &paragraphs)
        }
    };
    emit(&c.output, &out)?;
    say!(
        "explain: {} posts via {} -> {}",
        posts.len(),
        cfg.explain.method.name(),
        destination(&c.output)
    );
    Ok(())
}
