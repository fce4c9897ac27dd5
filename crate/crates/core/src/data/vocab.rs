use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
pub const RESERVED: [&str; 3] = ["[PAD]", "[CLS]", "[UNK]"];

/// Whitespace-token vocabulary with dense ids; ids 0..3 are reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from words in first-seen order; words are lowercased.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            v.push(r.to_string());
        }
        for w in words {
            let w = w.as_ref().to_lowercase();
            if !v.index.contains_key(&w) {
                v.push(w);
            }
        }
        v
    }

    fn push(&mut self, token: String) {
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `[CLS]` + lowercased whitespace tokens, truncated to `max_len`, padded with `[PAD]`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(max_len);
        out.push(CLS_ID);
        out.extend(
            text.split_whitespace()
                .map(|w| self.id(&w.to_lowercase()))
                .take(max_len.saturating_sub(1)),
        );
        out.truncate(max_len);
        out.resize(max_len, PAD_ID);
        out
    }

    pub fn tokenize_all<S: AsRef<str>>(&self, texts: &[S], max_len: usize) -> Vec<Vec<u32>> {
        texts
            .iter()
            .map(|t| self.tokenize(t.as_ref(), max_len))
            .collect()
    }

    /// One token per line; the line index is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<&str> = text.lines().collect();
        for (i, r) in RESERVED.iter().enumerate() {
            if lines.get(i) != Some(r) {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: format!("expected reserved token {r}"),
                });
            }
        }
        Ok(Self::from_words(&lines[RESERVED.len()..]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::from_words(["hello", "world", "the"])
    }

    #[test]
    fn empty_text_is_cls_then_padding() {
        let t = vocab().tokenize("", 6);
        assert_eq!(t, vec![CLS_ID, PAD_ID, PAD_ID, PAD_ID, PAD_ID, PAD_ID]);
    }

    #[test]
    fn case_folding() {
        let v = vocab();
        let t = v.tokenize("Hello hello", 8);
        assert_eq!(t[1], t[2]);
        assert_eq!(t[1], v.id("hello"));
    }

    #[test]
    fn truncation() {
        let text = vec!["world"; 100].join(" ");
        let t = vocab().tokenize(&text, 32);
        assert_eq!(t.len(), 32);
        assert_eq!(t[0], CLS_ID);
        assert!(t[1..].iter().all(|&id| id == 4));
    }

    #[test]
    fn unknown_words() {
        assert_eq!(vocab().tokenize("zebra", 3), vec![CLS_ID, UNK_ID, PAD_ID]);
    }

    #[test]
    fn single_normalised_words_are_stable() {
        let v = vocab();
        for w in ["hello", "world", "the"] {
            let once = v.tokenize(w, 4);
            let again = v.tokenize(v.token(once[1]).unwrap(), 4);
            assert_eq!(once, again);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        let v = vocab();
        v.save(&p).unwrap();
        assert_eq!(Vocab::load(&p).unwrap(), v);
    }
}
