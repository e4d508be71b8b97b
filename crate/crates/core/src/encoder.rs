//! Encoder backends: contextual schema-item representations under question
//! token masking, sentence embeddings, and coarse POS tags.
//!
//! [`ReferenceBackend`] is a deterministic stand-in for a pre-trained encoder.
//! A schema item's vector is the normalized sum of seeded hash embeddings of
//! its character trigrams, plus `overlap(q_i, s_j) · e(q_i)` for every
//! unmasked question token, where `overlap` counts shared trigrams. Masking a
//! token therefore moves exactly the items it shares a trigram with.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tokenize::{trigram_overlap, trigrams};

pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncoderError {
    #[error("encoder backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend returned dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("masked index {index} out of range for {len} question tokens")]
    MaskIndexOutOfRange { index: usize, len: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("backend returned non-finite values")]
    NonFinite,
    #[error("backend protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub question_tokens: Vec<String>,
    pub schema_tokens: Vec<String>,
    pub masked_question_index: Option<usize>,
}

impl EncodeRequest {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.question_tokens.is_empty() || self.schema_tokens.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        match self.masked_question_index {
            Some(index) if index >= self.question_tokens.len() => {
                Err(EncoderError::MaskIndexOutOfRange { index, len: self.question_tokens.len() })
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaRepresentations {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
    pub masked_index: Option<usize>,
}

impl SchemaRepresentations {
    /// Checks the shape and finiteness invariants against an expected item
    /// count and dimension.
    pub fn check(&self, items: usize, dim: usize) -> Result<(), EncoderError> {
        if self.vectors.len() != items {
            return Err(EncoderError::Protocol(alloc::format!(
                "expected {items} schema vectors, got {}",
                self.vectors.len()
            )));
        }
        for v in &self.vectors {
            if v.len() != dim {
                return Err(EncoderError::DimensionMismatch { expected: dim, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EncoderError::NonFinite);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosTag {
    Noun,
    Number,
    Other,
}

pub trait EncoderBackend: Send + Sync {
    /// Vector dimension of `encode` and `sentence_embed` outputs.
    fn dim(&self) -> usize;

    fn encode(&self, req: &EncodeRequest) -> Result<SchemaRepresentations, EncoderError>;

    /// Unit-norm embedding of a whole sentence.
    fn sentence_embed(&self, text: &str) -> Result<Vec<f64>, EncoderError>;

    fn pos_tag(&self, tokens: &[String]) -> Result<Vec<PosTag>, EncoderError>;
}

impl<B: EncoderBackend + ?Sized> EncoderBackend for &B {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn encode(&self, req: &EncodeRequest) -> Result<SchemaRepresentations, EncoderError> {
        (**self).encode(req)
    }
    fn sentence_embed(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        (**self).sentence_embed(text)
    }
    fn pos_tag(&self, tokens: &[String]) -> Result<Vec<PosTag>, EncoderError> {
        (**self).pos_tag(tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceBackend {
    dim: usize,
    seed: u64,
}

impl Default for ReferenceBackend {
    fn default() -> Self {
        ReferenceBackend::new(64, 0)
    }
}

const NS_TRIGRAM: u8 = 1;
const NS_TOKEN: u8 = 2;
const NS_ITEM: u8 = 3;
const NS_WORD: u8 = 4;
const NS_BIGRAM: u8 = 5;

impl ReferenceBackend {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        ReferenceBackend { dim, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seeded pseudo-random vector with entries uniform in [-1, 1).
    fn hash_embedding(&self, namespace: u8, key: &str) -> Vec<f64> {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.seed.to_le_bytes().iter().chain([namespace].iter()).chain(key.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let mut state = h;
        (0..self.dim)
            .map(|_| {
                let r = splitmix64(&mut state);
                (r >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect()
    }

    fn item_base(&self, name: &str) -> Vec<f64> {
        let grams = trigrams(name);
        let mut v = alloc::vec![0.0; self.dim];
        if grams.is_empty() {
            v = self.hash_embedding(NS_ITEM, name);
        } else {
            for g in &grams {
                add_scaled(&mut v, &self.hash_embedding(NS_TRIGRAM, g), 1.0);
            }
        }
        normalize(&mut v);
        v
    }
}

impl EncoderBackend for ReferenceBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, req: &EncodeRequest) -> Result<SchemaRepresentations, EncoderError> {
        req.validate()?;
        let token_vecs: Vec<Vec<f64>> = req.question_tokens.iter().map(|t| self.hash_embedding(NS_TOKEN, t)).collect();
        let vectors = req
            .schema_tokens
            .iter()
            .map(|item| {
                let mut v = self.item_base(item);
                for (i, tok) in req.question_tokens.iter().enumerate() {
                    if Some(i) == req.masked_question_index {
                        continue;
                    }
                    let overlap = trigram_overlap(tok, item);
                    if overlap > 0 {
                        add_scaled(&mut v, &token_vecs[i], overlap as f64);
                    }
                }
                v
            })
            .collect();
        Ok(SchemaRepresentations { vectors, dim: self.dim, masked_index: req.masked_question_index })
    }

    fn sentence_embed(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
        if words.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let mut v = alloc::vec![0.0; self.dim];
        for w in &words {
            add_scaled(&mut v, &self.hash_embedding(NS_WORD, w), 1.0);
        }
        for pair in words.windows(2) {
            let key = alloc::format!("{} {}", pair[0], pair[1]);
            add_scaled(&mut v, &self.hash_embedding(NS_BIGRAM, &key), 1.0);
        }
        normalize(&mut v);
        Ok(v)
    }

    fn pos_tag(&self, tokens: &[String]) -> Result<Vec<PosTag>, EncoderError> {
        if tokens.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        Ok(tokens.iter().map(|t| reference_pos(t)).collect())
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn add_scaled(acc: &mut [f64], v: &[f64], s: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += s * b;
    }
}

fn normalize(v: &mut [f64]) {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Function words, auxiliaries, wh-words, quantifiers and common imperative
/// verbs. Sorted for binary search.
const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before",
    "being", "below", "between", "both", "but", "by", "can", "could", "did", "do", "does", "each", "either",
    "every", "find", "for", "from", "give", "had", "has", "have", "he", "her", "his", "how", "i", "if", "in",
    "into", "is", "it", "its", "least", "less", "list", "many", "me", "more", "most", "much", "my", "neither",
    "no", "nor", "not", "of", "on", "only", "or", "other", "our", "out", "over", "please", "return", "she",
    "show", "so", "some", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this",
    "those", "through", "to", "under", "up", "us", "was", "we", "were", "what", "when", "where", "whether",
    "which", "while", "who", "whom", "whose", "why", "will", "with", "without", "would", "you", "your",
];

fn is_number(tok: &str) -> bool {
    let body = tok.strip_prefix('-').unwrap_or(tok);
    body.chars().next().is_some_and(|c| c.is_ascii_digit())
        && body.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | ':' | '/' | '-'))
}

/// Closed-list tagger: stopwords and punctuation are `Other`, numerals are
/// `Number`, everything else is `Noun`.
pub fn reference_pos(token: &str) -> PosTag {
    let lower = token.to_lowercase();
    if is_number(&lower) {
        PosTag::Number
    } else if token == MASK_TOKEN
        || !lower.chars().any(char::is_alphanumeric)
        || STOPWORDS.binary_search(&lower.as_str()).is_ok()
    {
        PosTag::Other
    } else {
        PosTag::Noun
    }
}
