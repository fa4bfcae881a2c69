//! Inter-annotator agreement over token-level BIO labels.
//!
//! Krippendorff's α uses the nominal coincidence-matrix form: a unit with m_u
//! pairable values contributes each ordered pair of values from different
//! annotators with weight 1/(m_u − 1), and
//!
//! ```text
//! α = 1 − (n − 1) · Σ_{c≠k} o_ck / Σ_{c≠k} n_c·n_k
//! ```

use std::fmt::Write as _;

use crate::corpus::{BioLabel, Post};
use crate::error::{Error, Result};

const K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
}

pub fn cohen_kappa(a1: &[BioLabel], a2: &[BioLabel]) -> Result<Kappa> {
    if a1.len() != a2.len() {
        return Err(Error::LengthMismatch {
            expected: a1.len(),
            found: a2.len(),
        });
    }
    if a1.is_empty() {
        return Err(Error::InvalidInput("kappa needs at least one labelled position".into()));
    }
    let n = a1.len() as f64;
    let mut m1 = [0usize; K];
    let mut m2 = [0usize; K];
    let mut agree = 0usize;
    for (x, y) in a1.iter().zip(a2) {
        m1[x.index()] += 1;
        m2[y.index()] += 1;
        agree += usize::from(x == y);
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = (0..K).map(|c| (m1[c] as f64 / n) * (m2[c] as f64 / n)).sum();
    if p_e == 1.0 {
        return Err(Error::UndefinedKappa { p_o });
    }
    Ok(Kappa {
        kappa: (p_o - p_e) / (1.0 - p_e),
        p_o,
        p_e,
    })
}

/// Nominal α. `annotations[a][u]` is annotator a's label for unit u, `None`
/// when missing; shorter rows count as missing at the tail.
pub fn krippendorff_alpha(annotations: &[Vec<Option<BioLabel>>]) -> Result<f64> {
    if annotations.len() < 2 {
        return Err(Error::InvalidInput("alpha needs at least two annotators".into()));
    }
    let units = annotations.iter().map(Vec::len).max().unwrap_or(0);
    let mut o = [[0.0f64; K]; K];
    let mut pairable = 0;
    for u in 0..units {
        let mut counts = [0usize; K];
        for row in annotations {
            if let Some(Some(l)) = row.get(u) {
                counts[l.index()] += 1;
            }
        }
        let m: usize = counts.iter().sum();
        if m < 2 {
            continue;
        }
        pairable += 1;
        let w = 1.0 / (m - 1) as f64;
        for c in 0..K {
            for k in 0..K {
                let pairs = if c == k {
                    counts[c] * counts[c].saturating_sub(1)
                } else {
                    counts[c] * counts[k]
                };
                o[c][k] += pairs as f64 * w;
            }
        }
    }
    if pairable == 0 {
        return Err(Error::NoPairableUnits);
    }
    let n_c: Vec<f64> = (0..K).map(|c| o[c].iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    let (mut d_o, mut d_e) = (0.0, 0.0);
    for c in 0..K {
        for k in 0..K {
            if c != k {
                d_o += o[c][k];
                d_e += n_c[c] * n_c[k];
            }
        }
    }
    if d_e == 0.0 {
        return Err(Error::NoVariation);
    }
    Ok(1.0 - (n - 1.0) * d_o / d_e)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostDisagreement {
    pub post_id: String,
    /// Token indices where at least two present annotations differ.
    pub positions: Vec<usize>,
}

/// Posts with at least one disagreeing token, most disagreements first;
/// ties keep corpus order.
pub fn disagreement_report(posts: &[Post]) -> Vec<PostDisagreement> {
    let mut out: Vec<PostDisagreement> = posts
        .iter()
        .filter_map(|post| {
            let tracks = post.annotator_tracks();
            let positions: Vec<usize> = (0..post.len())
                .filter(|&t| {
                    let mut seen = tracks.iter().filter_map(|tr| tr.get(t).copied().flatten());
                    seen.next().is_some_and(|first| seen.any(|l| l != first))
                })
                .collect();
            (!positions.is_empty()).then(|| PostDisagreement {
                post_id: post.id.clone(),
                positions,
            })
        })
        .collect();
    out.sort_by_key(|d| std::cmp::Reverse(d.positions.len()));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    /// κ between the first two annotator tracks, over tokens both labelled.
    pub kappa: Result<Kappa, String>,
    pub alpha: Result<f64, String>,
    pub disagreements: Vec<PostDisagreement>,
}

impl AgreementReport {
    pub fn compute(posts: &[Post]) -> Self {
        let mut a1 = Vec::new();
        let mut a2 = Vec::new();
        let mut tracks: Vec<Vec<Option<BioLabel>>> = Vec::new();
        let mut offset = 0;
        for post in posts {
            let pt = post.annotator_tracks();
            if let [first, second, ..] = pt.as_slice() {
                for (x, y) in first.iter().zip(second) {
                    if let (Some(x), Some(y)) = (x, y) {
                        a1.push(*x);
                        a2.push(*y);
                    }
                }
            }
            if tracks.len() < pt.len() {
                tracks.resize(pt.len(), Vec::new());
            }
            for (a, track) in tracks.iter_mut().enumerate() {
                track.resize(offset, None);
                if let Some(labels) = pt.get(a) {
                    track.extend(labels.iter().copied());
                }
                track.resize(offset + post.len(), None);
            }
            offset += post.len();
        }
        AgreementReport {
            kappa: cohen_kappa(&a1, &a2).map_err(|e| e.to_string()),
            alpha: krippendorff_alpha(&tracks).map_err(|e| e.to_string()),
            disagreements: disagreement_report(posts),
        }
    }

    /// Plain-text report followed by key=value summary lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "posts with disagreements: {}", self.disagreements.len());
        for d in &self.disagreements {
            let pos: Vec<String> = d.positions.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "  {}\t{}\t{}", d.post_id, d.positions.len(), pos.join(","));
        }
        match &self.kappa {
            Ok(k) => {
                let _ = writeln!(out, "kappa={:.6}", k.kappa);
                let _ = writeln!(out, "p_o={:.6}", k.p_o);
                let _ = writeln!(out, "p_e={:.6}", k.p_e);
            }
            Err(e) => {
                let _ = writeln!(out, "kappa=undefined");
                let _ = writeln!(out, "kappa_error={e}");
            }
        }
        match &self.alpha {
            Ok(a) => {
                let _ = writeln!(out, "alpha={a:.6}");
            }
            Err(e) => {
                let _ = writeln!(out, "alpha=undefined");
                let _ = writeln!(out, "alpha_error={e}");
            }
        }
        out
    }
}
