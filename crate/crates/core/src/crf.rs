//! Linear-chain CRF over the three BIO labels.
//!
//! Transition parameters are a 5×3 matrix: row 0 scores START→y, rows 1..=3
//! score y'→y for y' in O, B, I, and row 4 scores y→STOP (indexed by the
//! column y). A path's score is
//!
//! ```text
//! start[y_1] + Σ_t emit[t][y_t] + Σ_{t>1} pair[y_{t-1}][y_t] + stop[y_T]
//! ```
//!
//! With the BIO constraint on, START→I and O→I are excluded (score −∞) from
//! both the partition function and decoding.

use ndarray::Array2;

use crate::corpus::BioLabel;
use crate::error::{Error, Result};

pub const LABELS: usize = 3;
pub const TRANSITION_ROWS: usize = 5;
const START_ROW: usize = 0;
const STOP_ROW: usize = 4;

/// Transition scores with the BIO mask applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transitions {
    pub start: [f64; LABELS],
    pub pair: [[f64; LABELS]; LABELS],
    pub stop: [f64; LABELS],
}

impl Transitions {
    pub fn zeros() -> Self {
        Transitions {
            start: [0.0; LABELS],
            pair: [[0.0; LABELS]; LABELS],
            stop: [0.0; LABELS],
        }
    }

    /// Reads the 5×3 parameter matrix, masking invalid BIO moves when
    /// `constrain_bio` is set.
    pub fn from_matrix(m: &Array2<f64>, constrain_bio: bool) -> Self {
        assert_eq!(m.dim(), (TRANSITION_ROWS, LABELS), "transition matrix must be 5x3");
        let mut t = Transitions::zeros();
        for y in 0..LABELS {
            t.start[y] = m[[START_ROW, y]];
            t.stop[y] = m[[STOP_ROW, y]];
            for prev in 0..LABELS {
                t.pair[prev][y] = m[[1 + prev, y]];
            }
        }
        if constrain_bio {
            t.constrain();
        }
        t
    }

    pub fn constrain(&mut self) {
        let (o, i) = (BioLabel::O.index(), BioLabel::I.index());
        self.start[i] = f64::NEG_INFINITY;
        self.pair[o][i] = f64::NEG_INFINITY;
    }

    /// Whether the entry at (row, col) of the 5×3 matrix is masked out.
    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        let v = match row {
            START_ROW => self.start[col],
            STOP_ROW => self.stop[col],
            r => self.pair[r - 1][col],
        };
        v == f64::NEG_INFINITY
    }
}

fn check_emissions(emissions: &Array2<f64>) -> Result<()> {
    if emissions.ncols() != LABELS {
        return Err(Error::InvalidInput(format!(
            "emission matrix must have {LABELS} columns, found {}",
            emissions.ncols()
        )));
    }
    if emissions.nrows() == 0 {
        return Err(Error::InvalidInput("empty emission matrix".into()));
    }
    if emissions.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("emission scores".into()));
    }
    Ok(())
}

/// Numbers the forward-backward recursion can run over: plain log-scores,
/// or log-scores carrying one directional derivative.
trait LogScalar: Copy {
    fn from_f64(v: f64) -> Self;
    fn plus(self, other: Self) -> Self;
    fn plus_f64(self, c: f64) -> Self;
    fn minus(self, other: Self) -> Self;
    fn log_sum_exp(xs: &[Self]) -> Self;
    /// exp of a log-probability.
    fn exp(self) -> Self;
    fn val(self) -> f64;
}

impl LogScalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn plus_f64(self, c: f64) -> Self {
        self + c
    }
    fn minus(self, other: Self) -> Self {
        self - other
    }
    fn log_sum_exp(xs: &[Self]) -> Self {
        log_sum_exp(xs)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn val(self) -> f64 {
        self
    }
}

/// A value with a forward-mode tangent.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: f64,
}

impl LogScalar for Dual {
    fn from_f64(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
    fn plus(self, o: Self) -> Self {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
    fn plus_f64(self, c: f64) -> Self {
        Dual { v: self.v + c, d: self.d }
    }
    fn minus(self, o: Self) -> Self {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
    fn log_sum_exp(xs: &[Self]) -> Self {
        let m = xs.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.v));
        if m == f64::NEG_INFINITY {
            return Dual { v: m, d: 0.0 };
        }
        let (mut total, mut weighted) = (0.0, 0.0);
        for x in xs {
            let w = (x.v - m).exp();
            total += w;
            if w > 0.0 {
                weighted += w * x.d;
            }
        }
        Dual {
            v: m + total.ln(),
            d: weighted / total,
        }
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual { v: e, d: if e > 0.0 { e * self.d } else { 0.0 } }
    }
    fn val(self) -> f64 {
        self.v
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

struct Lattice<N> {
    /// alpha[t][y]: log-sum of prefixes ending in y at t, emission included.
    alpha: Vec<[N; LABELS]>,
    /// beta[t][y]: log-sum of suffixes after t given y at t, stop included.
    beta: Vec<[N; LABELS]>,
    log_z: N,
}

fn forward_backward<N: LogScalar>(emit: &[[N; LABELS]], tr: &Transitions) -> Lattice<N> {
    let n = emit.len();
    let mut alpha = Vec::with_capacity(n);
    alpha.push(std::array::from_fn(|y| emit[0][y].plus_f64(tr.start[y])));
    for t in 1..n {
        let prev: &[N; LABELS] = &alpha[t - 1];
        let row = std::array::from_fn(|y| {
            let terms: [N; LABELS] = std::array::from_fn(|p| prev[p].plus_f64(tr.pair[p][y]));
            N::log_sum_exp(&terms).plus(emit[t][y])
        });
        alpha.push(row);
    }
    let mut beta = vec![[N::from_f64(0.0); LABELS]; n];
    beta[n - 1] = std::array::from_fn(|y| N::from_f64(tr.stop[y]));
    for t in (0..n - 1).rev() {
        let next = beta[t + 1];
        beta[t] = std::array::from_fn(|y| {
            let terms: [N; LABELS] =
                std::array::from_fn(|z| next[z].plus(emit[t + 1][z]).plus_f64(tr.pair[y][z]));
            N::log_sum_exp(&terms)
        });
    }
    let last = &alpha[n - 1];
    let finals: [N; LABELS] = std::array::from_fn(|y| last[y].plus_f64(tr.stop[y]));
    let log_z = N::log_sum_exp(&finals);
    Lattice { alpha, beta, log_z }
}

fn rows(emissions: &Array2<f64>) -> Vec<[f64; LABELS]> {
    emissions
        .rows()
        .into_iter()
        .map(|r| [r[0], r[1], r[2]])
        .collect()
}

/// log Σ over all label paths of exp(path score), by the forward algorithm.
pub fn log_partition(emissions: &Array2<f64>, tr: &Transitions) -> Result<f64> {
    check_emissions(emissions)?;
    Ok(forward_backward(&rows(emissions), tr).log_z)
}

/// Score of one label path, accumulated left to right.
pub fn sequence_score(emissions: &Array2<f64>, tr: &Transitions, labels: &[BioLabel]) -> f64 {
    assert_eq!(emissions.nrows(), labels.len());
    let mut score = tr.start[labels[0].index()] + emissions[[0, labels[0].index()]];
    for t in 1..labels.len() {
        let (p, y) = (labels[t - 1].index(), labels[t].index());
        score = score + tr.pair[p][y] + emissions[[t, y]];
    }
    score + tr.stop[labels[labels.len() - 1].index()]
}

/// Per-position label marginals (T×3).
pub fn marginals(emissions: &Array2<f64>, tr: &Transitions) -> Result<Array2<f64>> {
    check_emissions(emissions)?;
    let lat = forward_backward(&rows(emissions), tr);
    Ok(node_marginals(&lat))
}

fn node_marginals(lat: &Lattice<f64>) -> Array2<f64> {
    let n = lat.alpha.len();
    Array2::from_shape_fn((n, LABELS), |(t, y)| {
        (lat.alpha[t][y] + lat.beta[t][y] - lat.log_z).exp()
    })
}

/// Expected usage counts of each entry of the 5×3 transition matrix.
fn expected_transition_counts(
    emit: &[[f64; LABELS]],
    tr: &Transitions,
    lat: &Lattice<f64>,
) -> Array2<f64> {
    let n = emit.len();
    let mut counts = Array2::zeros((TRANSITION_ROWS, LABELS));
    for y in 0..LABELS {
        counts[[START_ROW, y]] = (lat.alpha[0][y] + lat.beta[0][y] - lat.log_z).exp();
        counts[[STOP_ROW, y]] = (lat.alpha[n - 1][y] + tr.stop[y] - lat.log_z).exp();
    }
    for t in 1..n {
        for p in 0..LABELS {
            for y in 0..LABELS {
                let s = lat.alpha[t - 1][p] + tr.pair[p][y] + emit[t][y] + lat.beta[t][y] - lat.log_z;
                counts[[1 + p, y]] += s.exp();
            }
        }
    }
    counts
}

/// Usage counts of the transition entries along one path.
pub fn path_transition_counts(labels: &[BioLabel]) -> Array2<f64> {
    let mut counts = Array2::zeros((TRANSITION_ROWS, LABELS));
    if labels.is_empty() {
        return counts;
    }
    counts[[START_ROW, labels[0].index()]] += 1.0;
    for w in labels.windows(2) {
        counts[[1 + w[0].index(), w[1].index()]] += 1.0;
    }
    counts[[STOP_ROW, labels[labels.len() - 1].index()]] += 1.0;
    counts
}

#[derive(Debug, Clone)]
pub struct NllGrad {
    pub nll: f64,
    /// d nll / d emissions (T×3).
    pub emissions: Array2<f64>,
    /// d nll / d transition matrix (5×3); masked entries are zero.
    pub transitions: Array2<f64>,
}

/// −log P(gold | emissions). Infinite when the gold path is masked out.
pub fn nll(emissions: &Array2<f64>, tr: &Transitions, gold: &[BioLabel]) -> Result<f64> {
    check_emissions(emissions)?;
    check_gold(emissions, gold)?;
    Ok(log_partition(emissions, tr)? - sequence_score(emissions, tr, gold))
}

fn check_gold(emissions: &Array2<f64>, gold: &[BioLabel]) -> Result<()> {
    if gold.len() != emissions.nrows() {
        return Err(Error::LengthMismatch {
            expected: emissions.nrows(),
            found: gold.len(),
        });
    }
    Ok(())
}

/// NLL with its gradient: model expectations minus empirical counts.
pub fn nll_with_grad(emissions: &Array2<f64>, tr: &Transitions, gold: &[BioLabel]) -> Result<NllGrad> {
    check_emissions(emissions)?;
    check_gold(emissions, gold)?;
    let emit = rows(emissions);
    let lat = forward_backward(&emit, tr);
    let value = lat.log_z - sequence_score(emissions, tr, gold);
    if !value.is_finite() {
        return Err(Error::NonFinite(
            "CRF negative log-likelihood (gold path excluded by the BIO constraint?)".into(),
        ));
    }
    let mut d_emit = node_marginals(&lat);
    for (t, label) in gold.iter().enumerate() {
        d_emit[[t, label.index()]] -= 1.0;
    }
    let mut d_trans = expected_transition_counts(&emit, tr, &lat) - path_transition_counts(gold);
    for r in 0..TRANSITION_ROWS {
        for c in 0..LABELS {
            if tr.is_masked(r, c) {
                d_trans[[r, c]] = 0.0;
            }
        }
    }
    Ok(NllGrad {
        nll: value,
        emissions: d_emit,
        transitions: d_trans,
    })
}

/// Highest-scoring path and its score. At each backpointer and at the final
/// position, ties go to the lowest label index (O < B < I).
pub fn viterbi(emissions: &Array2<f64>, tr: &Transitions) -> (Vec<BioLabel>, f64) {
    let n = emissions.nrows();
    assert!(n > 0 && emissions.ncols() == LABELS);
    let mut delta: Vec<[f64; LABELS]> = Vec::with_capacity(n);
    let mut back: Vec<[usize; LABELS]> = Vec::with_capacity(n);
    delta.push(std::array::from_fn(|y| tr.start[y] + emissions[[0, y]]));
    back.push([0; LABELS]);
    for t in 1..n {
        let prev = delta[t - 1];
        let mut row = [0.0; LABELS];
        let mut ptr = [0; LABELS];
        for y in 0..LABELS {
            let (mut best, mut arg) = (prev[0] + tr.pair[0][y], 0);
            for p in 1..LABELS {
                let s = prev[p] + tr.pair[p][y];
                if s > best {
                    best = s;
                    arg = p;
                }
            }
            row[y] = best + emissions[[t, y]];
            ptr[y] = arg;
        }
        delta.push(row);
        back.push(ptr);
    }
    let last = delta[n - 1];
    let (mut best, mut arg) = (last[0] + tr.stop[0], 0);
    for y in 1..LABELS {
        let s = last[y] + tr.stop[y];
        if s > best {
            best = s;
            arg = y;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = arg;
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    (path.into_iter().map(BioLabel::from_index).collect(), best)
}

/// Mean toxic (B or I) marginal over positions and its gradient with respect
/// to the emissions.
///
/// The marginals are the gradient of log Z, so the gradient of their sum
/// along a direction v is the Hessian-vector product H·v, which equals the
/// directional derivative of the marginals along v. One dual-number
/// forward-backward pass computes it exactly.
pub fn toxic_mass_with_grad(emissions: &Array2<f64>, tr: &Transitions) -> Result<(f64, Array2<f64>)> {
    check_emissions(emissions)?;
    let n = emissions.nrows();
    let emit: Vec<[Dual; LABELS]> = emissions
        .rows()
        .into_iter()
        .map(|r| {
            std::array::from_fn(|y| Dual {
                v: r[y],
                d: if BioLabel::from_index(y).is_toxic() { 1.0 } else { 0.0 },
            })
        })
        .collect();
    let lat = forward_backward(&emit, tr);
    let mut value = 0.0;
    let mut grad = Array2::zeros((n, LABELS));
    for t in 0..n {
        for y in 0..LABELS {
            let p = lat.alpha[t][y].plus(lat.beta[t][y]).minus(lat.log_z).exp();
            if BioLabel::from_index(y).is_toxic() {
                value += p.val();
            }
            grad[[t, y]] = p.d / n as f64;
        }
    }
    Ok((value / n as f64, grad))
}
