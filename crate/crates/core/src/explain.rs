//! Integrated gradients, attention indicators, the attention-based rationale
//! extractor (ARE), and highlight rendering.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{self, Graph, Var};
use crate::corpus::{toxic_runs, Post, TagSequence};
use crate::error::{Error, Result};
use crate::labeler::{EncoderKind, LabelerParams};
use crate::rng;
use crate::vocab::Vocab;

/// A scalar function of a T×E input with its gradient.
pub trait ScalarModel {
    fn value_and_grad(&self, x: &Array2<f64>) -> Result<(f64, Array2<f64>)>;
}

impl ScalarModel for LabelerParams {
    fn value_and_grad(&self, x: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        self.toxicity_with_grad(x)
    }
}

/// F(x) = Σ w ∘ x.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub weights: Array2<f64>,
}

impl ScalarModel for LinearModel {
    fn value_and_grad(&self, x: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        if x.dim() != self.weights.dim() {
            return Err(Error::InvalidInput("input shape differs from the weights".into()));
        }
        Ok(((&self.weights * x).sum(), self.weights.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    /// One score per token: the attribution summed over embedding dimensions.
    pub token_scores: Vec<f64>,
    pub baseline: String,
    pub steps: usize,
    pub f_input: f64,
    pub f_baseline: f64,
    /// |Σ attributions − (F(x) − F(x'))|.
    pub completeness_residual: f64,
}

/// Midpoint Riemann sum of the path integral from `baseline` to `x`:
/// attribution = (x − x') ∘ (1/m) Σ_k ∇F(x' + (k + ½)/m · (x − x')).
pub fn integrated_gradients(
    model: &dyn ScalarModel,
    x: &Array2<f64>,
    baseline: &Array2<f64>,
    steps: usize,
    baseline_name: &str,
) -> Result<AttributionMap> {
    if steps == 0 {
        return Err(Error::Config("integration steps must be at least 1".into()));
    }
    if x.dim() != baseline.dim() {
        return Err(Error::InvalidInput("baseline shape differs from the input".into()));
    }
    let delta = x - baseline;
    let mut total = Array2::<f64>::zeros(x.dim());
    for k in 0..steps {
        let alpha = (k as f64 + 0.5) / steps as f64;
        let point = baseline + &(&delta * alpha);
        let (_, grad) = model.value_and_grad(&point)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteAttribution { step: k });
        }
        total += &grad;
    }
    let attr = &delta * &total / steps as f64;
    let token_scores: Vec<f64> = attr.rows().into_iter().map(|r| r.sum()).collect();
    let f_input = model.value_and_grad(x)?.0;
    let f_baseline = model.value_and_grad(baseline)?.0;
    let sum: f64 = token_scores.iter().sum();
    Ok(AttributionMap {
        token_scores,
        baseline: baseline_name.to_string(),
        steps,
        f_input,
        f_baseline,
        completeness_residual: (sum - (f_input - f_baseline)).abs(),
    })
}

/// Integrated gradients of the post-level toxicity score against the
/// all-zero embedding baseline.
pub fn explain_post(params: &LabelerParams, post: &Post, steps: usize) -> Result<AttributionMap> {
    let x = params.embed(&params.vocab.encode(post));
    let zero = Array2::zeros(x.dim());
    integrated_gradients(params, &x, &zero, steps, "zero-embedding")
}

/// Mean incoming attention ᾱ_j, averaged over query positions and heads.
pub fn mean_attention(params: &LabelerParams, ids: &[usize]) -> Result<Vec<f64>> {
    if params.config.encoder.kind != EncoderKind::Attention {
        return Err(Error::UnsupportedEncoder(params.config.encoder.kind.name().into()));
    }
    let enc = params.encode(ids);
    let t = ids.len();
    let mut mean = vec![0.0; t];
    for a in &enc.attention {
        for i in 0..t {
            for (j, m) in mean.iter_mut().enumerate() {
                *m += a[[i, j]];
            }
        }
    }
    let denom = (t * enc.attention.len()) as f64;
    Ok(mean.into_iter().map(|m| m / denom).collect())
}

/// Token indices whose mean incoming attention exceeds `threshold`.
pub fn attention_indicators(params: &LabelerParams, ids: &[usize], threshold: f64) -> Result<Vec<usize>> {
    Ok(mean_attention(params, ids)?
        .into_iter()
        .enumerate()
        .filter(|&(_, a)| a > threshold)
        .map(|(j, _)| j)
        .collect())
}

/// Attention indicators turned into tags by contiguity.
pub fn attention_tags(params: &LabelerParams, ids: &[usize], threshold: f64) -> Result<TagSequence> {
    let picked = attention_indicators(params, ids, threshold)?;
    let mut selected = vec![false; ids.len()];
    for j in picked {
        selected[j] = true;
    }
    Ok(TagSequence::from_selection(&selected))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    TopK(usize),
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    /// Soft gates in training and inference.
    SoftL1,
    /// Soft gates in training; inference feeds the classifier 0/1 gates.
    HardAtInference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationaleConfig {
    pub lambda: f64,
    pub selection: Selection,
    pub gate_mode: GateMode,
    pub embed_dim: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RationaleConfig {
    fn default() -> Self {
        RationaleConfig {
            lambda: 0.2,
            selection: Selection::Threshold(0.5),
            gate_mode: GateMode::HardAtInference,
            embed_dim: 16,
            lr: 0.05,
            momentum: 0.9,
            epochs: 60,
            batch_size: 16,
            seed: 42,
        }
    }
}

impl RationaleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("ARE lambda must be >= 0".into()));
        }
        match self.selection {
            Selection::TopK(0) => Err(Error::Config("top-k needs k >= 1".into())),
            Selection::Threshold(t) if !(t > 0.0 && t < 1.0) => {
                Err(Error::Config("gate threshold must lie in (0, 1)".into()))
            }
            _ if self.embed_dim == 0 || self.batch_size == 0 => {
                Err(Error::Config("ARE dimensions must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Generator: g_t = σ(x_t·w_g + b_g). Encoder/classifier:
/// p = σ((Σ_t g_t x_t)·w_c + b_c).
#[derive(Debug, Clone, PartialEq)]
pub struct AreModel {
    pub vocab: Vocab,
    pub embed: Array2<f64>,
    pub w_g: Array2<f64>,
    pub b_g: Array2<f64>,
    pub w_c: Array2<f64>,
    pub b_c: Array2<f64>,
    pub gate_mode: GateMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreLog {
    /// Mean objective per epoch (cross-entropy plus λ times mean gate).
    pub epoch_loss: Vec<f64>,
}

const ARE_TENSORS: usize = 5;

impl AreModel {
    fn tensors(&self) -> [&Array2<f64>; ARE_TENSORS] {
        [&self.embed, &self.w_g, &self.b_g, &self.w_c, &self.b_c]
    }

    fn tensors_mut(&mut self) -> [&mut Array2<f64>; ARE_TENSORS] {
        [&mut self.embed, &mut self.w_g, &mut self.b_g, &mut self.w_c, &mut self.b_c]
    }

    fn rows(&self, ids: &[usize]) -> Array2<f64> {
        self.embed.select(ndarray::Axis(0), ids)
    }

    /// Per-token gate values in [0, 1].
    pub fn gates(&self, post: &Post) -> Vec<f64> {
        let ids = self.vocab.encode(post);
        if ids.is_empty() {
            return Vec::new();
        }
        let x = self.rows(&ids);
        let z = x.dot(&self.w_g);
        z.iter().map(|&v| autodiff::sigmoid(v + self.b_g[[0, 0]])).collect()
    }

    /// Post-level toxicity probability.
    pub fn predict_proba(&self, post: &Post) -> f64 {
        let ids = self.vocab.encode(post);
        if ids.is_empty() {
            return autodiff::sigmoid(self.b_c[[0, 0]]);
        }
        let x = self.rows(&ids);
        let gates = self.gates(post);
        let mut pooled = Array2::<f64>::zeros((1, x.ncols()));
        for (t, &g) in gates.iter().enumerate() {
            let g = match self.gate_mode {
                GateMode::SoftL1 => g,
                GateMode::HardAtInference => f64::from(u8::from(g > 0.5)),
            };
            pooled.row_mut(0).scaled_add(g, &x.row(t));
        }
        autodiff::sigmoid(pooled.dot(&self.w_c)[[0, 0]] + self.b_c[[0, 0]])
    }

    /// Objective (cross-entropy + λ·mean gate) over a batch and gradients in
    /// [`Self::tensors`] order.
    fn loss_and_grad(&self, batch: &[(Vec<usize>, f64)], lambda: f64) -> (f64, Vec<Array2<f64>>) {
        let mut g = Graph::new();
        let w_g = g.leaf(self.w_g.clone());
        let b_g = g.leaf(self.b_g.clone());
        let w_c = g.leaf(self.w_c.clone());
        let b_c = g.leaf(self.b_c.clone());
        let mut inputs: Vec<(Var, &[usize])> = Vec::new();
        let mut terms = Vec::new();
        let n = batch.len() as f64;
        for (ids, y) in batch {
            let x = g.leaf(self.rows(ids));
            inputs.push((x, ids));
            let zg = g.matmul(x, w_g);
            let zg = g.add_row(zg, b_g);
            let gates = g.sigmoid(zg);
            let weighted = g.mul_col(x, gates);
            let pooled = g.sum_rows(weighted);
            let z = g.matmul(pooled, w_c);
            let z = g.add_row(z, b_c);
            let zv = g.scalar(z);
            // Stable BCE on the logit: softplus(z) − y·z.
            let bce = zv.max(0.0) + (-zv.abs()).exp().ln_1p() - y * zv;
            let dz = autodiff::sigmoid(zv) - y;
            let bce = g.custom_scalar(bce / n, vec![(z, Array2::from_elem((1, 1), dz / n))]);
            let gate_sum = g.sum_rows(gates);
            let penalty = g.scale(gate_sum, lambda / (ids.len() as f64 * n));
            terms.push(g.add(bce, penalty));
        }
        let stacked = g.concat_rows(&terms);
        let root = g.sum_rows(stacked);
        let value = g.scalar(root);
        let grads = g.backward(root);
        let mut d_embed = Array2::zeros(self.embed.dim());
        for (x, ids) in inputs {
            let gx = grads.get(x);
            for (row, &id) in ids.iter().enumerate() {
                let mut dst = d_embed.row_mut(id);
                dst += &gx.row(row);
            }
        }
        (
            value,
            vec![d_embed, grads.get(w_g), grads.get(b_g), grads.get(w_c), grads.get(b_c)],
        )
    }
}

/// Trains the ARE generator and classifier on post-level labels (a post is
/// toxic when it has any toxic gold token).
pub fn are_train(posts: &[Post], cfg: &RationaleConfig) -> Result<(AreModel, AreLog)> {
    cfg.validate()?;
    let posts: Vec<&Post> = posts.iter().filter(|p| !p.is_empty()).collect();
    if posts.is_empty() {
        return Err(Error::InvalidInput("ARE needs at least one non-empty post".into()));
    }
    let vocab = Vocab::build(posts.iter().copied(), 1);
    let mut init = rng::stream(cfg.seed, "are.init");
    let e = cfg.embed_dim;
    let mut uniform = |r: usize, c: usize, fan_in: usize| {
        let b = 1.0 / (fan_in as f64).sqrt();
        Array2::from_shape_simple_fn((r, c), || init.gen_range(-b..b))
    };
    let mut model = AreModel {
        embed: uniform(vocab.len(), e, e),
        w_g: uniform(e, 1, e),
        b_g: Array2::zeros((1, 1)),
        w_c: uniform(e, 1, e),
        b_c: Array2::zeros((1, 1)),
        vocab,
        gate_mode: cfg.gate_mode,
    };
    let data: Vec<(Vec<usize>, f64)> = posts
        .iter()
        .map(|p| (model.vocab.encode(p), f64::from(u8::from(p.is_toxic()))))
        .collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = rng::stream(cfg.seed, "are.batches");
    let mut velocity: Vec<Array2<f64>> = model.tensors().iter().map(|t| Array2::zeros(t.dim())).collect();
    let mut log = AreLog { epoch_loss: Vec::new() };
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Vec<usize>, f64)> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (value, grads) = model.loss_and_grad(&batch, cfg.lambda);
            if !value.is_finite() {
                return Err(Error::NonFinite("ARE objective".into()));
            }
            total += value;
            batches += 1;
            for ((param, v), g) in model.tensors_mut().into_iter().zip(&mut velocity).zip(&grads) {
                v.zip_mut_with(g, |v, &g| *v = cfg.momentum * *v + g);
                param.zip_mut_with(v, |p, &v| *p -= cfg.lr * v);
            }
        }
        log.epoch_loss.push(total / batches as f64);
    }
    Ok((model, log))
}

/// Hard selection on the gates, mapped to B/I by contiguity.
pub fn are_extract(model: &AreModel, post: &Post, selection: Selection) -> TagSequence {
    let gates = model.gates(post);
    TagSequence::from_selection(&select(&gates, selection))
}

/// Marks the selected positions. Top-k ties keep the earlier position.
pub fn select(scores: &[f64], selection: Selection) -> Vec<bool> {
    let mut out = vec![false; scores.len()];
    match selection {
        Selection::Threshold(tau) => {
            for (o, &s) in out.iter_mut().zip(scores) {
                *o = s > tau;
            }
        }
        Selection::TopK(k) => {
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            for &i in idx.iter().take(k) {
                out[i] = true;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Ansi,
    Html,
}

pub enum Highlight<'a> {
    Tags(&'a TagSequence),
    Attribution(&'a AttributionMap),
}

/// Equal-width intensity buckets 0..=4 over [min, max] of the scores; a
/// constant score vector maps to bucket 0.
pub fn attribution_buckets(scores: &[f64]) -> Vec<u8> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .map(|&s| {
            if hi <= lo {
                0
            } else {
                ((5.0 * (s - lo) / (hi - lo)).floor() as i64).clamp(0, 4) as u8
            }
        })
        .collect()
}

const ANSI_TOXIC: &str = "\x1b[1;31m";
const ANSI_RESET: &str = "\x1b[0m";
const ANSI_BUCKETS: [&str; 5] = ["", "\x1b[34m", "\x1b[36m", "\x1b[33m", "\x1b[1;31m"];

fn is_rtl(text: &str) -> bool {
    text.chars().any(|c| matches!(c as u32, 0x0590..=0x08FF | 0xFB1D..=0xFDFF | 0xFE70..=0xFEFF))
}

fn html_escape(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}

/// Regions (char_start, char_end, level) to wrap, in text order.
fn regions(post: &Post, highlight: &Highlight) -> Vec<(usize, usize, u8)> {
    match highlight {
        Highlight::Tags(tags) => toxic_runs(&tags.labels)
            .into_iter()
            .map(|(s, e)| (post.tokens[s].char_start, post.tokens[e - 1].char_end, 4))
            .collect(),
        Highlight::Attribution(map) => attribution_buckets(&map.token_scores)
            .into_iter()
            .zip(&post.tokens)
            .filter(|(b, _)| *b > 0)
            .map(|(b, t)| (t.char_start, t.char_end, b))
            .collect(),
    }
}

/// Renders the post text with toxic spans or attribution intensities marked.
/// HTML output is a complete document with inline styles.
pub fn render_highlights(post: &Post, highlight: Highlight, format: RenderFormat) -> String {
    let chars: Vec<char> = post.text.chars().collect();
    let regions = regions(post, &highlight);
    let tags_mode = matches!(highlight, Highlight::Tags(_));
    let mut body = String::new();
    let mut cursor = 0;
    let plain = |from: usize, to: usize, body: &mut String| {
        let s: String = chars[from..to].iter().collect();
        match format {
            RenderFormat::Ansi => body.push_str(&s),
            RenderFormat::Html => html_escape(&s, body),
        }
    };
    for (start, end, level) in regions {
        plain(cursor, start, &mut body);
        let inner: String = chars[start..end].iter().collect();
        match format {
            RenderFormat::Ansi => {
                let open = if tags_mode { ANSI_TOXIC } else { ANSI_BUCKETS[level as usize] };
                let _ = write!(body, "{open}{inner}{ANSI_RESET}");
            }
            RenderFormat::Html => {
                let alpha = f64::from(level) / 4.0;
                let _ = write!(
                    body,
                    "<mark style=\"background-color: rgba(220, 30, 30, {alpha:.2}); color: inherit\">"
                );
                html_escape(&inner, &mut body);
                body.push_str("</mark>");
            }
        }
        cursor = end;
    }
    plain(cursor, chars.len(), &mut body);
    match format {
        RenderFormat::Ansi => body,
        RenderFormat::Html => {
            let dir = if is_rtl(&post.text) { "rtl" } else { "ltr" };
            let paragraph = format!("<p dir=\"{dir}\" style=\"font-size: 1.4em; line-height: 2\">{body}</p>\n");
            html_document(&post.id, &[paragraph])
        }
    }
}

/// Wraps rendered HTML paragraphs in one standalone document.
pub fn html_document(title: &str, paragraphs: &[String]) -> String {
    let mut escaped = String::new();
    html_escape(title, &mut escaped);
    let mut out = format!(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{escaped}</title>\n</head>\n\
         <body style=\"font-family: sans-serif\">\n"
    );
    for p in paragraphs {
        out.push_str(p);
    }
    out.push_str("</body>\n</html>\n");
    out
}

/// The `<p>` element [`render_highlights`] puts inside its HTML document.
pub fn html_paragraph(post: &Post, highlight: Highlight) -> String {
    let doc = render_highlights(post, highlight, RenderFormat::Html);
    let start = doc.find("<p ").expect("paragraph present");
    let end = doc.rfind("</p>\n").expect("paragraph present") + "</p>\n".len();
    doc[start..end].to_string()
}
