//! Question tokenizer and character trigrams.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Lowercases, splits on whitespace, and peels leading/trailing punctuation
/// off each word into single-character tokens. No stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && is_punct(chars[start]) {
            start += 1;
        }
        while end > start && is_punct(chars[end - 1]) {
            end -= 1;
        }
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '…')
}

/// Distinct character trigrams of every whitespace-separated word. Words
/// shorter than three characters contribute nothing.
pub fn trigrams(text: &str) -> BTreeSet<String> {
    let mut set = BTreeSet::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        for w in chars.windows(3) {
            set.insert(w.iter().collect());
        }
    }
    set
}

/// Number of distinct trigrams shared by `a` and `b`.
pub fn trigram_overlap(a: &str, b: &str) -> usize {
    let ta = trigrams(a);
    trigrams(b).iter().filter(|t| ta.contains(*t)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_edge_punctuation() {
        assert_eq!(tokenize("Who are not French?"), ["who", "are", "not", "french", "?"]);
        assert_eq!(tokenize("\"France\", please."), ["\"", "france", "\"", ",", "please", "."]);
        assert_eq!(tokenize("singer's 3.5"), ["singer's", "3.5"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn trigram_overlap_counts_shared() {
        assert_eq!(trigram_overlap("names", "name"), 2);
        assert_eq!(trigram_overlap("singers", "singer"), 4);
        assert_eq!(trigram_overlap("of", "singer"), 0);
        assert_eq!(trigram_overlap("song name", "names"), 2);
    }
}
