//! Lightweight SQL text handling: pulling a statement out of a model
//! completion and spotting a top-level `ORDER BY`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no SQL statement found in the completion")]
pub struct ExtractionFailure;

fn is_word_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

fn keyword_at(text: &str, pos: usize, kw: &str) -> bool {
    let bytes = text.as_bytes();
    let end = pos + kw.len();
    end <= bytes.len()
        && text.get(pos..end).is_some_and(|s| s.eq_ignore_ascii_case(kw))
        && (pos == 0 || !is_word_char(bytes[pos - 1]))
        && (end == bytes.len() || !is_word_char(bytes[end]))
}

/// Returns the first statement starting with `SELECT` or `WITH`, cut at the
/// first unquoted `;`, with code fences and `--` comment lines removed.
pub fn extract_sql(raw: &str) -> Result<String, ExtractionFailure> {
    let cleaned: Vec<&str> = raw
        .lines()
        .filter(|l| {
            let t = l.trim_start();
            !t.starts_with("```") && !t.starts_with("--")
        })
        .collect();
    let text = cleaned.join("\n");

    let start = text
        .char_indices()
        .map(|(i, _)| i)
        .find(|&i| {
            keyword_at(&text, i, "select")
                || (keyword_at(&text, i, "with") && text[i..].to_ascii_lowercase().contains("select"))
        })
        .ok_or(ExtractionFailure)?;

    let body = &text[start..];
    let end = find_unquoted(body, b';').unwrap_or(body.len());
    let sql = body[..end].trim();
    if sql.is_empty() {
        Err(ExtractionFailure)
    } else {
        Ok(sql.to_string())
    }
}

/// Byte offset of the first `needle` outside quotes.
fn find_unquoted(s: &str, needle: u8) -> Option<usize> {
    let mut quote: Option<u8> = None;
    for (i, &b) in s.as_bytes().iter().enumerate() {
        match quote {
            Some(q) if b == q => quote = None,
            Some(_) => {}
            None if matches!(b, b'\'' | b'"' | b'`') => quote = Some(b),
            None if b == needle => return Some(i),
            None => {}
        }
    }
    None
}

/// Whether `ORDER BY` appears outside parentheses and quotes.
pub fn has_top_level_order_by(sql: &str) -> bool {
    let bytes = sql.as_bytes();
    let mut depth = 0i32;
    let mut quote: Option<u8> = None;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) => {
                if b == q {
                    quote = None;
                }
            }
            None => match b {
                b'\'' | b'"' | b'`' => quote = Some(b),
                b'(' => depth += 1,
                b')' => depth -= 1,
                _ if depth == 0 && keyword_at(sql, i, "order") => {
                    let rest = sql[i + 5..].trim_start();
                    if keyword_at(rest, 0, "by") {
                        return true;
                    }
                }
                _ => {}
            },
        }
        i += 1;
    }
    false
}
