//! Question de-semanticization.
//!
//! For a question of `|Q|` tokens and a schema of `|S|` items this builds:
//!
//! - the probe matrix `D_p`: hyperbolic distance between each item's
//!   representation with and without question token `i` masked,
//! - the matching matrix `M_m` with entries in {0, 1, 2} (name span match,
//!   value match, or both),
//! - the fused relevance `R = minmax(D_p) + β · M_m`,
//! - the POS vector `P` (α for nouns and numbers, else 0),
//! - per-token scores `Q_sco_i = ½ (mean_j R_ij + P_i)`.
//!
//! Tokens scoring at least τ become `[MASK]` in the skeleton. Per-item scores
//! for schema filtering are the column maxima of `R`, min–max normalized.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncodeRequest, EncoderBackend, EncoderError, PosTag, MASK_TOKEN};
use crate::hyperbolic::{clip_to_ball, poincare_distance, project_hyperbolic, HyperbolicError, MAX_NORM};
use crate::matrix::Matrix;
use crate::schema::{DatabaseSchema, Example, ValueStore};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelevanceError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceParams {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl Default for RelevanceParams {
    fn default() -> Self {
        RelevanceParams { alpha: 0.9, beta: 0.5, tau: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceBundle {
    pub d_p: Matrix,
    pub d_p_norm: Matrix,
    pub m_m: Matrix,
    pub r: Matrix,
    pub p: Vec<f64>,
    pub q_sco: Vec<f64>,
    pub item_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSkeleton {
    pub tokens: Vec<String>,
    pub masked_positions: Vec<usize>,
    pub source_question: String,
}

impl QuestionSkeleton {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Representations of every schema item, with and without each question
/// token masked, mapped into the ball. Issues exactly `|Q| + 1` encoder calls.
pub fn build_proton_matrix<B: EncoderBackend + ?Sized>(
    question_tokens: &[String],
    schema: &DatabaseSchema,
    backend: &B,
) -> Result<Matrix, RelevanceError> {
    let schema_tokens = schema.item_names();
    let mut req = EncodeRequest {
        question_tokens: question_tokens.to_vec(),
        schema_tokens,
        masked_question_index: None,
    };
    let dim = backend.dim();
    let items = req.schema_tokens.len();
    let full = backend.encode(&req)?;
    full.check(items, dim)?;
    let full_ball = full
        .vectors
        .iter()
        .map(|h| Ok(clip_to_ball(&project_hyperbolic(h)?, MAX_NORM)))
        .collect::<Result<Vec<_>, HyperbolicError>>()?;

    let mut d_p = Matrix::zeros(question_tokens.len(), items);
    for i in 0..question_tokens.len() {
        req.masked_question_index = Some(i);
        let masked = backend.encode(&req)?;
        masked.check(items, dim)?;
        for (j, h) in masked.vectors.iter().enumerate() {
            let m = clip_to_ball(&project_hyperbolic(h)?, MAX_NORM);
            d_p.set(i, j, poincare_distance(&m, &full_ball[j])?);
        }
    }
    Ok(d_p)
}

/// Name/value matching. A token scores a name point when it lies inside a
/// contiguous token span equal to the item's display name, and a value point
/// when it equals one of the item's stored values.
pub fn build_matching_matrix(question_tokens: &[String], schema: &DatabaseSchema, values: &ValueStore) -> Matrix {
    let n = question_tokens.len();
    let mut m = Matrix::zeros(n, schema.len());
    for item in &schema.items {
        let words: Vec<&str> = item.name.split_whitespace().collect();
        let mut name_hit = alloc::vec![false; n];
        if !words.is_empty() && words.len() <= n {
            for start in 0..=n - words.len() {
                if question_tokens[start..start + words.len()].iter().zip(&words).all(|(q, w)| q == w) {
                    name_hit[start..start + words.len()].iter_mut().for_each(|h| *h = true);
                }
            }
        }
        for (i, tok) in question_tokens.iter().enumerate() {
            let value_hit = values.item_contains(schema, item.id, tok);
            m.set(i, item.id, f64::from(u8::from(name_hit[i]) + u8::from(value_hit)));
        }
    }
    m
}

/// Min–max normalization over the whole matrix; a constant matrix maps to
/// all zeros.
pub fn minmax_normalize(d: &Matrix) -> Matrix {
    let (lo, hi) = min_max(d.as_slice());
    if hi > lo {
        d.map(|v| (v - lo) / (hi - lo))
    } else {
        d.map(|_| 0.0)
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Returns `(minmax(d_p), minmax(d_p) + β · m_m)`.
pub fn fuse_relevance(d_p: &Matrix, m_m: &Matrix, beta: f64) -> Result<(Matrix, Matrix), RelevanceError> {
    if d_p.shape() != m_m.shape() {
        return Err(RelevanceError::ShapeMismatch(d_p.shape(), m_m.shape()));
    }
    let norm = minmax_normalize(d_p);
    let mut r = norm.clone();
    for i in 0..r.rows() {
        for j in 0..r.cols() {
            r.set(i, j, norm.get(i, j) + beta * m_m.get(i, j));
        }
    }
    Ok((norm, r))
}

pub fn pos_vector(tags: &[PosTag], alpha: f64) -> Vec<f64> {
    tags.iter().map(|t| if matches!(t, PosTag::Noun | PosTag::Number) { alpha } else { 0.0 }).collect()
}

/// `½ (mean_j R_ij + P_i)` with the mean over all `|S|` items.
pub fn question_scores(r: &Matrix, p: &[f64]) -> Result<Vec<f64>, RelevanceError> {
    if r.rows() != p.len() {
        return Err(RelevanceError::ShapeMismatch(r.shape(), (p.len(), 1)));
    }
    let n = r.cols() as f64;
    Ok((0..r.rows())
        .map(|i| {
            let mean = if r.cols() == 0 { 0.0 } else { r.row(i).iter().sum::<f64>() / n };
            0.5 * (mean + p[i])
        })
        .collect())
}

/// Keeps token `i` when `q_sco[i] < τ`, otherwise replaces it with one
/// `[MASK]`.
pub fn make_skeleton(question: &Example, q_sco: &[f64], tau: f64) -> QuestionSkeleton {
    let mut tokens = Vec::with_capacity(question.question_tokens.len());
    let mut masked_positions = Vec::new();
    for (i, tok) in question.question_tokens.iter().enumerate() {
        if q_sco.get(i).is_some_and(|&s| s >= tau) {
            tokens.push(MASK_TOKEN.to_string());
            masked_positions.push(i);
        } else {
            tokens.push(tok.clone());
        }
    }
    QuestionSkeleton { tokens, masked_positions, source_question: question.question_text.clone() }
}

/// Column maxima of `R`, min–max normalized into [0, 1].
pub fn schema_item_scores(r: &Matrix) -> Vec<f64> {
    if r.rows() == 0 {
        return alloc::vec![0.0; r.cols()];
    }
    let raw: Vec<f64> = (0..r.cols()).map(|j| r.column(j).fold(f64::NEG_INFINITY, f64::max)).collect();
    let (lo, hi) = min_max(&raw);
    if hi > lo {
        raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        alloc::vec![0.0; raw.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Desemanticized {
    pub bundle: RelevanceBundle,
    pub skeleton: QuestionSkeleton,
}

/// Full de-semanticization of one question against its schema.
pub fn desemanticize<B: EncoderBackend + ?Sized>(
    question: &Example,
    schema: &DatabaseSchema,
    values: &ValueStore,
    backend: &B,
    params: &RelevanceParams,
) -> Result<Desemanticized, RelevanceError> {
    let tokens = &question.question_tokens;
    let d_p = build_proton_matrix(tokens, schema, backend)?;
    let m_m = build_matching_matrix(tokens, schema, values);
    let (d_p_norm, r) = fuse_relevance(&d_p, &m_m, params.beta)?;
    let tags = backend.pos_tag(tokens)?;
    if tags.len() != tokens.len() {
        return Err(EncoderError::Protocol(alloc::format!("{} POS tags for {} tokens", tags.len(), tokens.len())).into());
    }
    let p = pos_vector(&tags, params.alpha);
    let q_sco = question_scores(&r, &p)?;
    let item_scores = schema_item_scores(&r);
    let skeleton = make_skeleton(question, &q_sco, params.tau);
    Ok(Desemanticized { bundle: RelevanceBundle { d_p, d_p_norm, m_m, r, p, q_sco, item_scores }, skeleton })
}
