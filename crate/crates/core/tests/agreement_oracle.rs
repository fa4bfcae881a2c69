//! Agreement statistics against direct pairwise recomputations.

use rand::Rng;
use spanlab::agreement::{cohen_kappa, disagreement_report, krippendorff_alpha, AgreementReport};
use spanlab::corpus::{BioLabel, BioLabel::*, Domain, Post, TagSequence};
use spanlab::rng;
use spanlab::textproc::tokenize;

/// α = 1 − D_o / D_e from explicit value pairs, without a coincidence matrix.
fn pairwise_alpha(annotations: &[Vec<Option<BioLabel>>]) -> f64 {
    let units = annotations.iter().map(Vec::len).max().unwrap();
    let mut pooled = Vec::new();
    let mut within = 0.0;
    for u in 0..units {
        let values: Vec<BioLabel> = annotations.iter().filter_map(|r| r.get(u).copied().flatten()).collect();
        if values.len() < 2 {
            continue;
        }
        let mut diff = 0.0;
        for i in 0..values.len() {
            for j in 0..values.len() {
                if i != j && values[i] != values[j] {
                    diff += 1.0;
                }
            }
        }
        within += diff / (values.len() - 1) as f64;
        pooled.extend(values);
    }
    let n = pooled.len() as f64;
    let mut across = 0.0;
    for i in 0..pooled.len() {
        for j in 0..pooled.len() {
            if i != j && pooled[i] != pooled[j] {
                across += 1.0;
            }
        }
    }
    let d_o = within / n;
    let d_e = across / (n * (n - 1.0));
    1.0 - d_o / d_e
}

#[test]
fn worked_alpha_example() {
    let a = vec![
        vec![Some(O), Some(B), Some(O), Some(B)],
        vec![Some(O), Some(O), Some(B), Some(B)],
    ];
    let oracle = pairwise_alpha(&a);
    assert!((oracle - 0.125).abs() < 1e-12);
    assert!((krippendorff_alpha(&a).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn missing_values_only_contribute_pairable_entries() {
    let a = vec![
        vec![Some(O), Some(B), Some(I), None, Some(O)],
        vec![Some(O), None, Some(I), Some(B), Some(B)],
        vec![None, Some(B), Some(O), Some(B), Some(O)],
    ];
    assert!((krippendorff_alpha(&a).unwrap() - pairwise_alpha(&a)).abs() < 1e-12);
}

#[test]
fn random_alpha_matches_pairwise() {
    let mut rng = rng::stream(21, "agreement.alpha");
    for _ in 0..200 {
        let raters = rng.gen_range(2..5);
        let units = rng.gen_range(2..15);
        let a: Vec<Vec<Option<BioLabel>>> = (0..raters)
            .map(|_| {
                (0..units)
                    .map(|_| rng.gen_bool(0.85).then(|| BioLabel::from_index(rng.gen_range(0..3))))
                    .collect()
            })
            .collect();
        if let Ok(alpha) = krippendorff_alpha(&a) {
            assert!((alpha - pairwise_alpha(&a)).abs() < 1e-12);
        }
    }
}

#[test]
fn identical_annotations_agree_perfectly() {
    let labels = [O, B, I, O, B, O];
    assert_eq!(cohen_kappa(&labels, &labels).unwrap().kappa, 1.0);
    let track: Vec<Option<BioLabel>> = labels.iter().copied().map(Some).collect();
    assert_eq!(krippendorff_alpha(&[track.clone(), track.clone(), track]).unwrap(), 1.0);
}

#[test]
fn kappa_matches_confusion_matrix() {
    let mut rng = rng::stream(22, "agreement.kappa");
    for _ in 0..50 {
        let a1: Vec<BioLabel> = (0..200).map(|_| BioLabel::from_index(rng.gen_range(0..3))).collect();
        let a2: Vec<BioLabel> = a1
            .iter()
            .map(|&l| if rng.gen_bool(0.6) { l } else { BioLabel::from_index(rng.gen_range(0..3)) })
            .collect();
        let mut m = [[0.0f64; 3]; 3];
        for (x, y) in a1.iter().zip(&a2) {
            m[x.index()][y.index()] += 1.0;
        }
        let n: f64 = m.iter().flatten().sum();
        let p_o = (0..3).map(|c| m[c][c]).sum::<f64>() / n;
        let p_e: f64 = (0..3)
            .map(|c| (m[c].iter().sum::<f64>() / n) * ((0..3).map(|r| m[r][c]).sum::<f64>() / n))
            .sum();
        let k = cohen_kappa(&a1, &a2).unwrap();
        assert!((k.kappa - (p_o - p_e) / (1.0 - p_e)).abs() < 1e-12);
    }
}

#[test]
fn report_matches_brute_force_diff() {
    let mut rng = rng::stream(23, "agreement.report");
    let posts: Vec<Post> = (0..20)
        .map(|i| {
            let n = rng.gen_range(2..8);
            let text: Vec<String> = (0..n).map(|t| format!("w{t}")).collect();
            let gold: Vec<BioLabel> = (0..n).map(|_| BioLabel::from_index(rng.gen_range(0..3))).collect();
            let mut post = Post::from_tokens(format!("p{i:02}"), Domain::News, tokenize(&text.join(" ")))
                .with_gold(TagSequence::new(gold.clone()));
            post.annotations.push(
                gold.iter()
                    .map(|&l| if rng.gen_bool(0.8) { Some(l) } else { Some(BioLabel::from_index(rng.gen_range(0..3))) })
                    .collect(),
            );
            post
        })
        .collect();
    let mut expected: Vec<(String, Vec<usize>)> = posts
        .iter()
        .map(|p| {
            let g = &p.gold.as_ref().unwrap().labels;
            let other = &p.annotations[0];
            let diff: Vec<usize> = (0..p.len()).filter(|&t| other[t] != Some(g[t])).collect();
            (p.id.clone(), diff)
        })
        .filter(|(_, d)| !d.is_empty())
        .collect();
    expected.sort_by_key(|e| std::cmp::Reverse(e.1.len()));
    let got: Vec<(String, Vec<usize>)> = disagreement_report(&posts)
        .into_iter()
        .map(|d| (d.post_id, d.positions))
        .collect();
    assert_eq!(got, expected);
    let report = AgreementReport::compute(&posts);
    assert!(report.kappa.is_ok() && report.alpha.is_ok());
    assert!(report.render().contains("alpha="));
}
