//! The tagger: an embedding encoder (BiLSTM or multi-head self-attention),
//! a linear emission projection, and either a CRF or an independent softmax
//! head.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::corpus::{BioLabel, TagSequence};
use crate::crf::{self, Transitions, LABELS, TRANSITION_ROWS};
use crate::error::{Error, Result};
use crate::rng;
use crate::vocab::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Recurrent,
    Attention,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Recurrent => "recurrent",
            EncoderKind::Attention => "attention",
        }
    }
}

impl FromStr for EncoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recurrent" => Ok(EncoderKind::Recurrent),
            "attention" => Ok(EncoderKind::Attention),
            _ => Err(Error::Config(format!("unknown encoder kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Recurrent,
            vocab_size: 2,
            embed_dim: 64,
            hidden_dim: 128,
            heads: 4,
            dropout: 0.1,
            seed: 42,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        match self.kind {
            EncoderKind::Recurrent if !self.hidden_dim.is_multiple_of(2) => Err(Error::Config(format!(
                "recurrent hidden_dim {} must be even (split across directions)",
                self.hidden_dim
            ))),
            EncoderKind::Attention if self.heads == 0 || !self.hidden_dim.is_multiple_of(self.heads) => {
                Err(Error::Config(format!(
                    "attention heads {} must divide hidden_dim {}",
                    self.heads, self.hidden_dim
                )))
            }
            _ if !(0.0..1.0).contains(&self.dropout) => {
                Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Crf,
    Softmax,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Crf => "crf",
            HeadKind::Softmax => "softmax",
        }
    }
}

impl FromStr for HeadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crf" => Ok(HeadKind::Crf),
            "softmax" => Ok(HeadKind::Softmax),
            _ => Err(Error::Config(format!("unknown head kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrfNll,
    Weighted,
    Focal,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::CrfNll => "crf",
            LossKind::Weighted => "weighted",
            LossKind::Focal => "focal",
        }
    }

    /// The head a loss trains.
    pub fn head(self) -> HeadKind {
        match self {
            LossKind::CrfNll => HeadKind::Crf,
            LossKind::Weighted | LossKind::Focal => HeadKind::Softmax,
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crf" => Ok(LossKind::CrfNll),
            "weighted" => Ok(LossKind::Weighted),
            "focal" => Ok(LossKind::Focal),
            _ => Err(Error::Config(format!("unknown loss kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Per-class weights in O, B, I order (the α of the focal loss).
    pub class_weights: [f64; LABELS],
    pub gamma: f64,
    /// Derive the class weights from training label counts.
    pub derived_weights: bool,
    /// Add-k smoothing applied to label counts when deriving weights.
    pub smoothing: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::CrfNll,
            class_weights: [1.0; LABELS],
            gamma: 2.0,
            derived_weights: false,
            smoothing: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Config("class weights must be positive".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("focal gamma {} must be >= 0", self.gamma)));
        }
        if !(self.smoothing >= 0.0) {
            return Err(Error::Config("smoothing must be >= 0".into()));
        }
        Ok(())
    }
}

/// w_i = N / (3·n_i).
pub fn class_weights(counts: [f64; LABELS]) -> Result<[f64; LABELS]> {
    for (label, &n) in BioLabel::ALL.iter().zip(&counts) {
        if !(n > 0.0) {
            return Err(Error::ZeroClassCount { label: label.as_str() });
        }
    }
    let total: f64 = counts.iter().sum();
    Ok(counts.map(|n| total / (LABELS as f64 * n)))
}

fn check_gold(emissions: &Array2<f64>, gold: &[BioLabel]) -> Result<()> {
    if emissions.ncols() != LABELS {
        return Err(Error::InvalidInput(format!(
            "emission matrix must have {LABELS} columns"
        )));
    }
    if emissions.nrows() != gold.len() {
        return Err(Error::LengthMismatch {
            expected: emissions.nrows(),
            found: gold.len(),
        });
    }
    Ok(())
}

/// Row-wise softmax.
pub fn softmax(emissions: &Array2<f64>) -> Array2<f64> {
    let mut p = emissions.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    p
}

fn log_softmax(emissions: &Array2<f64>) -> Array2<f64> {
    let mut out = emissions.clone();
    for mut row in out.rows_mut() {
        let lse = crf::log_sum_exp(row.as_slice().expect("contiguous row"));
        row.mapv_inplace(|x| x - lse);
    }
    out
}

/// Σ_t w(gold_t)·(−log softmax(emissions_t)[gold_t]).
pub fn softmax_nll(emissions: &Array2<f64>, gold: &[BioLabel], weights: &[f64; LABELS]) -> Result<f64> {
    Ok(softmax_nll_with_grad(emissions, gold, weights)?.0)
}

pub fn softmax_nll_with_grad(
    emissions: &Array2<f64>,
    gold: &[BioLabel],
    weights: &[f64; LABELS],
) -> Result<(f64, Array2<f64>)> {
    check_gold(emissions, gold)?;
    let logp = log_softmax(emissions);
    let mut grad = logp.mapv(f64::exp);
    let mut loss = 0.0;
    for (t, label) in gold.iter().enumerate() {
        let g = label.index();
        let w = weights[g];
        loss -= w * logp[[t, g]];
        grad[[t, g]] -= 1.0;
        grad.row_mut(t).mapv_inplace(|x| x * w);
    }
    Ok((loss, grad))
}

/// Σ_t α(gold_t)·(1 − p_t)^γ·(−log p_t), p_t the softmax probability of the
/// gold label.
pub fn focal_loss(emissions: &Array2<f64>, gold: &[BioLabel], alpha: &[f64; LABELS], gamma: f64) -> Result<f64> {
    Ok(focal_loss_with_grad(emissions, gold, alpha, gamma)?.0)
}

pub fn focal_loss_with_grad(
    emissions: &Array2<f64>,
    gold: &[BioLabel],
    alpha: &[f64; LABELS],
    gamma: f64,
) -> Result<(f64, Array2<f64>)> {
    check_gold(emissions, gold)?;
    let logp = log_softmax(emissions);
    let probs = logp.mapv(f64::exp);
    let mut grad = Array2::zeros(emissions.dim());
    let mut loss = 0.0;
    for (t, label) in gold.iter().enumerate() {
        let g = label.index();
        let (lp, p) = (logp[[t, g]], probs[[t, g]]);
        let q = 1.0 - p;
        let focus = if gamma == 0.0 { 1.0 } else { q.powf(gamma) };
        loss += alpha[g] * focus * -lp;
        // p·dL/dp, then the softmax Jacobian: dp_g/dz_k = p_g(δ_gk − p_k).
        let slope = if gamma == 0.0 || q <= 0.0 {
            0.0
        } else {
            gamma * q.powf(gamma - 1.0) * p * lp
        };
        let p_dl_dp = alpha[g] * (slope - focus);
        for k in 0..LABELS {
            let delta = if k == g { 1.0 } else { 0.0 };
            grad[[t, k]] = p_dl_dp * (delta - probs[[t, k]]);
        }
    }
    Ok((loss, grad))
}

/// Architecture and decoding settings stored alongside the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelerConfig {
    pub encoder: EncoderConfig,
    pub head: HeadKind,
    pub constrain_bio: bool,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig {
            encoder: EncoderConfig::default(),
            head: HeadKind::Crf,
            constrain_bio: true,
        }
    }
}

impl LabelerConfig {
    /// Tensor names and shapes implied by this configuration, in file order.
    pub fn tensor_shapes(&self) -> Vec<(String, (usize, usize))> {
        let e = &self.encoder;
        let (v, d, h) = (e.vocab_size, e.embed_dim, e.hidden_dim);
        let mut shapes = vec![("embed".to_string(), (v, d))];
        match e.kind {
            EncoderKind::Recurrent => {
                let hd = h / 2;
                for dir in ["fwd", "bwd"] {
                    shapes.push((format!("lstm.{dir}.w_ih"), (d, 4 * hd)));
                    shapes.push((format!("lstm.{dir}.w_hh"), (hd, 4 * hd)));
                    shapes.push((format!("lstm.{dir}.b"), (1, 4 * hd)));
                }
            }
            EncoderKind::Attention => {
                shapes.push(("attn.w_in".into(), (d, h)));
                shapes.push(("attn.b_in".into(), (1, h)));
                for name in ["attn.w_q", "attn.w_k", "attn.w_v", "attn.w_o"] {
                    shapes.push((name.into(), (h, h)));
                }
                shapes.push(("attn.b_o".into(), (1, h)));
            }
        }
        shapes.push(("emit.w".into(), (h, LABELS)));
        shapes.push(("emit.b".into(), (1, LABELS)));
        shapes.push(("crf.trans".into(), (TRANSITION_ROWS, LABELS)));
        shapes
    }
}

pub type Gradients = BTreeMap<String, Array2<f64>>;

/// One training or evaluation item: vocabulary indices, gold labels and a
/// loss weight.
#[derive(Debug, Clone)]
pub struct Example {
    pub ids: Vec<usize>,
    pub gold: Vec<BioLabel>,
    pub weight: f64,
}

/// Encoder outputs for one post.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub hidden: Array2<f64>,
    /// One T×T matrix per head (self-attention only); rows sum to 1.
    pub attention: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelerParams {
    pub config: LabelerConfig,
    pub vocab: Vocab,
    pub tensors: BTreeMap<String, Array2<f64>>,
}

struct Built {
    hidden: Var,
    emissions: Var,
    attention: Vec<Var>,
}

impl LabelerParams {
    /// Seeded initialization: uniform in ±1/√fan_in, transitions zero.
    pub fn init(config: LabelerConfig, vocab: Vocab) -> Result<Self> {
        let mut config = config;
        config.encoder.vocab_size = vocab.len();
        config.encoder.validate()?;
        let mut rng = rng::stream(config.encoder.seed, "labeler.init");
        let mut tensors = BTreeMap::new();
        for (name, (r, c)) in config.tensor_shapes() {
            let t = if name == "crf.trans" {
                Array2::zeros((r, c))
            } else {
                let fan_in = match name.as_str() {
                    "embed" => c,
                    n if n.ends_with(".b") || n.ends_with(".b_in") || n.ends_with(".b_o") => c,
                    _ => r,
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                Array2::from_shape_simple_fn((r, c), || rng.gen_range(-bound..bound))
            };
            tensors.insert(name, t);
        }
        Ok(LabelerParams { config, vocab, tensors })
    }

    pub fn tensor(&self, name: &str) -> &Array2<f64> {
        &self.tensors[name]
    }

    pub fn tensor_mut(&mut self, name: &str) -> &mut Array2<f64> {
        self.tensors.get_mut(name).expect("known tensor name")
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn transitions(&self) -> Transitions {
        Transitions::from_matrix(self.tensor("crf.trans"), self.config.constrain_bio)
    }

    /// Embedding rows for the given indices; out-of-range indices map to UNK.
    pub fn embed(&self, ids: &[usize]) -> Array2<f64> {
        let table = self.tensor("embed");
        let rows: Vec<usize> = ids
            .iter()
            .map(|&i| if i < table.nrows() { i } else { crate::vocab::UNK_INDEX })
            .collect();
        table.select(Axis(0), &rows)
    }

    fn param_leaves(&self, g: &mut Graph) -> BTreeMap<String, Var> {
        self.tensors
            .iter()
            .filter(|(name, _)| name.as_str() != "embed")
            .map(|(name, t)| (name.clone(), g.leaf(t.clone())))
            .collect()
    }

    fn build(
        &self,
        g: &mut Graph,
        pv: &BTreeMap<String, Var>,
        x: Var,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Built {
        let enc = &self.config.encoder;
        let t_len = g.value(x).nrows();
        let mut x = x;
        if let Some(r) = dropout.as_deref_mut() {
            x = apply_dropout(g, x, enc.dropout, r);
        }
        let (hidden, attention) = match enc.kind {
            EncoderKind::Recurrent => {
                let hd = enc.hidden_dim / 2;
                let fwd = lstm_direction(g, pv, "fwd", x, t_len, hd, false);
                let bwd = lstm_direction(g, pv, "bwd", x, t_len, hd, true);
                (g.concat_cols(&[fwd, bwd]), Vec::new())
            }
            EncoderKind::Attention => self_attention(g, pv, x, enc.hidden_dim, enc.heads),
        };
        let mut h = hidden;
        if let Some(r) = dropout {
            h = apply_dropout(g, h, enc.dropout, r);
        }
        let proj = g.matmul(h, pv["emit.w"]);
        let emissions = g.add_row(proj, pv["emit.b"]);
        Built {
            hidden,
            emissions,
            attention,
        }
    }

    /// Inference-mode encoder pass.
    pub fn encode(&self, ids: &[usize]) -> Encoded {
        self.encode_embedded(self.embed(ids))
    }

    pub fn encode_embedded(&self, x: Array2<f64>) -> Encoded {
        let mut g = Graph::new();
        let pv = self.param_leaves(&mut g);
        let x = g.leaf(x);
        let b = self.build(&mut g, &pv, x, None);
        Encoded {
            hidden: g.value(b.hidden).clone(),
            attention: b.attention.iter().map(|&a| g.value(a).clone()).collect(),
        }
    }

    /// T×3 emission scores (inference mode).
    pub fn emissions(&self, ids: &[usize]) -> Array2<f64> {
        self.emissions_embedded(self.embed(ids))
    }

    pub fn emissions_embedded(&self, x: Array2<f64>) -> Array2<f64> {
        let mut g = Graph::new();
        let pv = self.param_leaves(&mut g);
        let x = g.leaf(x);
        let b = self.build(&mut g, &pv, x, None);
        g.value(b.emissions).clone()
    }

    /// Decodes a tag sequence. The CRF head runs Viterbi with the learned
    /// transitions; the softmax head takes the per-token argmax, restricted to
    /// BIO-valid paths when `constrain_bio` is set.
    pub fn decode_emissions(&self, emissions: &Array2<f64>) -> TagSequence {
        let (path, _) = match self.config.head {
            HeadKind::Crf => crf::viterbi(emissions, &self.transitions()),
            HeadKind::Softmax => {
                let mut tr = Transitions::zeros();
                if self.config.constrain_bio {
                    tr.constrain();
                }
                crf::viterbi(&log_softmax(emissions), &tr)
            }
        };
        TagSequence::new(path)
    }

    pub fn predict(&self, ids: &[usize]) -> TagSequence {
        if ids.is_empty() {
            return TagSequence::all_outside(0);
        }
        self.decode_emissions(&self.emissions(ids))
    }

    /// Per-token label probabilities: CRF marginals or softmax outputs.
    pub fn probabilities(&self, ids: &[usize]) -> Result<Array2<f64>> {
        let e = self.emissions(ids);
        match self.config.head {
            HeadKind::Crf => crf::marginals(&e, &self.transitions()),
            HeadKind::Softmax => Ok(softmax(&e)),
        }
    }

    /// Post-level toxicity score F(x): mean over tokens of the toxic (B or I)
    /// probability, with its gradient with respect to the input embeddings.
    pub fn toxicity_with_grad(&self, x: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        let mut g = Graph::new();
        let pv = self.param_leaves(&mut g);
        let xv = g.leaf(x.clone());
        let b = self.build(&mut g, &pv, xv, None);
        let e = g.value(b.emissions).clone();
        let (value, d_e) = match self.config.head {
            HeadKind::Crf => crf::toxic_mass_with_grad(&e, &self.transitions())?,
            HeadKind::Softmax => {
                let p = softmax(&e);
                let n = e.nrows() as f64;
                let o = BioLabel::O.index();
                let value = p.column(o).iter().map(|po| 1.0 - po).sum::<f64>() / n;
                // d(−p_O)/dz_k = −p_O(δ_Ok − p_k)
                let mut d = Array2::zeros(e.dim());
                for t in 0..e.nrows() {
                    for k in 0..LABELS {
                        let delta = if k == o { 1.0 } else { 0.0 };
                        d[[t, k]] = -p[[t, o]] * (delta - p[[t, k]]) / n;
                    }
                }
                (value, d)
            }
        };
        let out = g.custom_scalar(value, vec![(b.emissions, d_e)]);
        let grads = g.backward(out);
        Ok((value, grads.get(xv)))
    }

    /// Weighted mean loss Σ w·loss / Σ w over a batch and its gradient for
    /// every tensor. Dropout is applied when `dropout_rng` is given.
    pub fn loss_and_grad(
        &self,
        batch: &[Example],
        loss: &LossConfig,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Gradients)> {
        let total_weight: f64 = batch.iter().map(|ex| ex.weight).sum();
        if batch.is_empty() || !(total_weight > 0.0) {
            return Err(Error::InvalidInput("empty batch or zero total weight".into()));
        }
        let mut g = Graph::new();
        let pv = self.param_leaves(&mut g);
        let trans = self.transitions();
        let mut terms = Vec::with_capacity(batch.len());
        let mut inputs = Vec::with_capacity(batch.len());
        let mut value = 0.0;
        for ex in batch {
            if ex.ids.is_empty() {
                continue;
            }
            let xv = g.leaf(self.embed(&ex.ids));
            inputs.push((xv, &ex.ids));
            let b = self.build(&mut g, &pv, xv, dropout_rng.as_deref_mut());
            let e = g.value(b.emissions).clone();
            let scale = ex.weight / total_weight;
            let (l, d_e, d_t) = match loss.kind {
                LossKind::CrfNll => {
                    let r = crf::nll_with_grad(&e, &trans, &ex.gold)?;
                    (r.nll, r.emissions, Some(r.transitions))
                }
                LossKind::Weighted => {
                    let (l, d) = softmax_nll_with_grad(&e, &ex.gold, &loss.class_weights)?;
                    (l, d, None)
                }
                LossKind::Focal => {
                    let (l, d) = focal_loss_with_grad(&e, &ex.gold, &loss.class_weights, loss.gamma)?;
                    (l, d, None)
                }
            };
            value += scale * l;
            let mut local = vec![(b.emissions, d_e * scale)];
            if let Some(d_t) = d_t {
                local.push((pv["crf.trans"], d_t * scale));
            }
            terms.push(g.custom_scalar(scale * l, local));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        if terms.is_empty() {
            return Err(Error::InvalidInput("batch holds only empty posts".into()));
        }
        let mut grads = Gradients::new();
        for (name, t) in &self.tensors {
            grads.insert(name.clone(), Array2::zeros(t.dim()));
        }
        let stacked = g.concat_rows(&terms);
        let root = g.sum_rows(stacked);
        let gr = g.backward(root);
        for (name, &v) in &pv {
            *grads.get_mut(name).expect("tensor") += &gr.get(v);
        }
        let embed = grads.get_mut("embed").expect("embed");
        for &(xv, ids) in &inputs {
            let gx = gr.get(xv);
            for (row, &id) in ids.iter().enumerate() {
                let id = if id < embed.nrows() { id } else { crate::vocab::UNK_INDEX };
                let mut dst = embed.row_mut(id);
                dst += &gx.row(row);
            }
        }
        for (name, grad) in &grads {
            if grad.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient { param: name.clone() });
            }
        }
        Ok((value, grads))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let snapshot = self.snapshot();
        out.extend_from_slice(&(snapshot.len() as u64).to_le_bytes());
        out.extend_from_slice(snapshot.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
            for x in t.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Corrupt("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r, "version")?);
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let snap_len = u64::from_le_bytes(read_array(&mut r, "config length")?) as usize;
        if snap_len > r.len() {
            return Err(Error::Corrupt("truncated config snapshot".into()));
        }
        let snapshot = std::str::from_utf8(&r[..snap_len])
            .map_err(|_| Error::Corrupt("config snapshot is not UTF-8".into()))?;
        let (config, vocab) = parse_snapshot(snapshot)?;
        r = &r[snap_len..];
        let count = u32::from_le_bytes(read_array(&mut r, "tensor count")?) as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = u32::from_le_bytes(read_array(&mut r, "tensor name length")?) as usize;
            if name_len > r.len() {
                return Err(Error::Corrupt("truncated tensor name".into()));
            }
            let name = std::str::from_utf8(&r[..name_len])
                .map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?
                .to_string();
            r = &r[name_len..];
            let rows = u64::from_le_bytes(read_array(&mut r, "tensor rows")?) as usize;
            let cols = u64::from_le_bytes(read_array(&mut r, "tensor cols")?) as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.len()))
                .ok_or_else(|| Error::Corrupt(format!("truncated data for tensor {name}")))?;
            let data: Vec<f64> = r[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            r = &r[n * 8..];
            let t = Array2::from_shape_vec((rows, cols), data).expect("length checked");
            tensors.insert(name, t);
        }
        if !r.is_empty() {
            return Err(Error::Corrupt(format!("{} trailing bytes", r.len())));
        }
        let params = LabelerParams { config, vocab, tensors };
        params.check_shapes(&params.config)?;
        Ok(params)
    }

    /// Verifies every tensor against the shapes `config` implies.
    pub fn check_shapes(&self, config: &LabelerConfig) -> Result<()> {
        let expected = config.tensor_shapes();
        for (name, (r, c)) in &expected {
            match self.tensors.get(name) {
                None => return Err(Error::Corrupt(format!("missing tensor {name}"))),
                Some(t) if t.dim() != (*r, *c) => {
                    return Err(Error::ShapeMismatch {
                        tensor: name.clone(),
                        expected: vec![*r, *c],
                        found: vec![t.nrows(), t.ncols()],
                    })
                }
                Some(_) => {}
            }
        }
        if self.tensors.len() != expected.len() {
            let extra = self
                .tensors
                .keys()
                .find(|k| !expected.iter().any(|(n, _)| n == *k))
                .cloned()
                .unwrap_or_default();
            return Err(Error::Corrupt(format!("unexpected tensor {extra}")));
        }
        if self.vocab.len() != config.encoder.vocab_size {
            return Err(Error::ShapeMismatch {
                tensor: "embed".into(),
                expected: vec![config.encoder.vocab_size, config.encoder.embed_dim],
                found: vec![self.vocab.len(), config.encoder.embed_dim],
            });
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks the tensors against an expected configuration.
    pub fn load_checked(path: impl AsRef<Path>, config: &LabelerConfig) -> Result<Self> {
        let params = Self::load(path)?;
        params.check_shapes(config)?;
        Ok(params)
    }

    fn snapshot(&self) -> String {
        let e = &self.config.encoder;
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| s.push_str(&format!("{k}={v}\n"));
        kv("encoder.kind", &e.kind.name());
        kv("encoder.vocab_size", &e.vocab_size);
        kv("encoder.embed_dim", &e.embed_dim);
        kv("encoder.hidden_dim", &e.hidden_dim);
        kv("encoder.heads", &e.heads);
        kv("encoder.dropout", &e.dropout);
        kv("encoder.seed", &e.seed);
        kv("head", &self.config.head.name());
        kv("constrain_bio", &self.config.constrain_bio);
        for (i, w) in self.vocab.words().iter().enumerate() {
            kv(&format!("vocab.{i}"), w);
        }
        s
    }
}

const MAGIC: &[u8; 8] = b"SPANLAB\x01";
pub const FORMAT_VERSION: u32 = 1;

fn read_exact(r: &mut &[u8], buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Corrupt(format!("truncated while reading {what}")))
}

fn read_array<const N: usize>(r: &mut &[u8], what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf, what)?;
    Ok(buf)
}

fn parse_snapshot(s: &str) -> Result<(LabelerConfig, Vocab)> {
    let mut cfg = LabelerConfig::default();
    let mut words: BTreeMap<usize, String> = BTreeMap::new();
    let bad = |k: &str| Error::Corrupt(format!("bad config value for {k}"));
    for line in s.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Corrupt(format!("bad config line {line:?}")))?;
        match k {
            "encoder.kind" => cfg.encoder.kind = v.parse().map_err(|_| bad(k))?,
            "encoder.vocab_size" => cfg.encoder.vocab_size = v.parse().map_err(|_| bad(k))?,
            "encoder.embed_dim" => cfg.encoder.embed_dim = v.parse().map_err(|_| bad(k))?,
            "encoder.hidden_dim" => cfg.encoder.hidden_dim = v.parse().map_err(|_| bad(k))?,
            "encoder.heads" => cfg.encoder.heads = v.parse().map_err(|_| bad(k))?,
            "encoder.dropout" => cfg.encoder.dropout = v.parse().map_err(|_| bad(k))?,
            "encoder.seed" => cfg.encoder.seed = v.parse().map_err(|_| bad(k))?,
            "head" => cfg.head = v.parse().map_err(|_| bad(k))?,
            "constrain_bio" => cfg.constrain_bio = v.parse().map_err(|_| bad(k))?,
            _ => match k.strip_prefix("vocab.").and_then(|i| i.parse().ok()) {
                Some(i) => {
                    words.insert(i, v.to_string());
                }
                None => return Err(Error::Corrupt(format!("unknown config key {k}"))),
            },
        }
    }
    if words.keys().copied().ne(0..words.len()) {
        return Err(Error::Corrupt("vocabulary indices are not contiguous".into()));
    }
    Ok((cfg, Vocab::from_words(words.into_values().collect())))
}

fn apply_dropout(g: &mut Graph, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Var {
    if rate <= 0.0 {
        return x;
    }
    let keep = 1.0 - rate;
    let mask = g
        .value(x)
        .mapv(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
    g.mul_const(x, mask)
}

/// One LSTM direction with gates in i, f, g, o order. Returns T×hd.
fn lstm_direction(
    g: &mut Graph,
    pv: &BTreeMap<String, Var>,
    dir: &str,
    x: Var,
    t_len: usize,
    hd: usize,
    reverse: bool,
) -> Var {
    let w_ih = pv[&format!("lstm.{dir}.w_ih")];
    let w_hh = pv[&format!("lstm.{dir}.w_hh")];
    let bias = pv[&format!("lstm.{dir}.b")];
    let xw = g.matmul(x, w_ih);
    let xw = g.add_row(xw, bias);
    let mut outs: Vec<Option<Var>> = vec![None; t_len];
    let mut state: Option<(Var, Var)> = None;
    let order: Vec<usize> = if reverse {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    for t in order {
        let mut z = g.slice_rows(xw, t, t + 1);
        if let Some((h_prev, _)) = state {
            let rec = g.matmul(h_prev, w_hh);
            z = g.add(z, rec);
        }
        let zi = g.slice_cols(z, 0, hd);
        let i = g.sigmoid(zi);
        let zg = g.slice_cols(z, 2 * hd, 3 * hd);
        let cand = g.tanh(zg);
        let zo = g.slice_cols(z, 3 * hd, 4 * hd);
        let o = g.sigmoid(zo);
        let ic = g.mul(i, cand);
        let c = match state {
            Some((_, c_prev)) => {
                let zf = g.slice_cols(z, hd, 2 * hd);
                let f = g.sigmoid(zf);
                let fc = g.mul(f, c_prev);
                g.add(fc, ic)
            }
            None => ic,
        };
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        outs[t] = Some(h);
        state = Some((h, c));
    }
    let outs: Vec<Var> = outs.into_iter().map(|v| v.expect("every step visited")).collect();
    g.concat_rows(&outs)
}

/// Sinusoidal position encodings, T×d.
pub fn position_encoding(t_len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((t_len, d), |(pos, i)| {
        let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let angle = pos as f64 * rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// H0 = (x + pos)·W_in + b_in; per head A = softmax(Q K^T / √d_k);
/// output tanh(H0 + concat(A V)·W_o + b_o).
fn self_attention(
    g: &mut Graph,
    pv: &BTreeMap<String, Var>,
    x: Var,
    hidden: usize,
    heads: usize,
) -> (Var, Vec<Var>) {
    let (t_len, d) = g.value(x).dim();
    let pos = g.leaf(position_encoding(t_len, d));
    let xp = g.add(x, pos);
    let h0 = g.matmul(xp, pv["attn.w_in"]);
    let h0 = g.add_row(h0, pv["attn.b_in"]);
    let q = g.matmul(h0, pv["attn.w_q"]);
    let k = g.matmul(h0, pv["attn.w_k"]);
    let v = g.matmul(h0, pv["attn.w_v"]);
    let dk = hidden / heads;
    let mut attention = Vec::with_capacity(heads);
    let mut head_out = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dk, (h + 1) * dk);
        let qh = g.slice_cols(q, lo, hi);
        let kh = g.slice_cols(k, lo, hi);
        let vh = g.slice_cols(v, lo, hi);
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt);
        let scores = g.scale(scores, 1.0 / (dk as f64).sqrt());
        let a = g.softmax_rows(scores);
        attention.push(a);
        head_out.push(g.matmul(a, vh));
    }
    let cat = g.concat_cols(&head_out);
    let o = g.matmul(cat, pv["attn.w_o"]);
    let o = g.add_row(o, pv["attn.b_o"]);
    let sum = g.add(h0, o);
    (g.tanh(sum), attention)
}
