//! Straight-line brute-force reimplementations.

use std::collections::BTreeSet;

/// Matching matrix by enumerating every question span `(a, b)` and comparing
/// its space-joined text with each item name.
pub fn matching_matrix(tokens: &[String], item_names: &[String], item_values: &[BTreeSet<String>]) -> Vec<Vec<u8>> {
    let n = tokens.len();
    let mut out = vec![vec![0u8; item_names.len()]; n];
    for (j, name) in item_names.iter().enumerate() {
        let mut covered = vec![false; n];
        for a in 0..n {
            for b in a..n {
                let span = tokens[a..=b].join(" ");
                if &span == name {
                    for c in covered.iter_mut().take(b + 1).skip(a) {
                        *c = true;
                    }
                }
            }
        }
        for i in 0..n {
            let mut score = 0u8;
            if covered[i] {
                score += 1;
            }
            if item_values[j].contains(&tokens[i]) {
                score += 1;
            }
            out[i][j] = score;
        }
    }
    out
}

pub struct Fused {
    pub d_p_norm: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub q_sco: Vec<f64>,
    pub item_scores: Vec<f64>,
}

/// Min–max normalization, relevance fusion, question scores and item scores
/// written as explicit loops.
pub fn fuse(d_p: &[Vec<f64>], m_m: &[Vec<f64>], beta: f64, p: &[f64]) -> Fused {
    let rows = d_p.len();
    let cols = d_p[0].len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in d_p {
        for &v in row {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
    }
    let mut d_p_norm = vec![vec![0.0; cols]; rows];
    let mut r = vec![vec![0.0; cols]; rows];
    for i in 0..rows {
        for j in 0..cols {
            d_p_norm[i][j] = if hi > lo { (d_p[i][j] - lo) / (hi - lo) } else { 0.0 };
            r[i][j] = d_p_norm[i][j] + beta * m_m[i][j];
        }
    }
    let mut q_sco = vec![0.0; rows];
    for i in 0..rows {
        let mut total = 0.0;
        for j in 0..cols {
            total += r[i][j];
        }
        q_sco[i] = (total / cols as f64 + p[i]) / 2.0;
    }
    let mut raw = vec![f64::NEG_INFINITY; cols];
    for j in 0..cols {
        for row in &r {
            if row[j] > raw[j] {
                raw[j] = row[j];
            }
        }
    }
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let item_scores = raw.iter().map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }).collect();
    Fused { d_p_norm, r, q_sco, item_scores }
}

/// Exact cosine top-k: full sort by (similarity desc, id asc).
pub fn knn(vectors: &[(u64, Vec<f32>)], query: &[f32], k: usize) -> Vec<u64> {
    let qn: f64 = query.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, u64)> = vectors
        .iter()
        .map(|(id, v)| {
            let mut dot = 0.0;
            let mut vn = 0.0;
            for (a, b) in query.iter().zip(v) {
                dot += f64::from(*a) * f64::from(*b);
                vn += f64::from(*b) * f64::from(*b);
            }
            (dot / (qn * vn.sqrt()), *id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, id)| id).collect()
}
