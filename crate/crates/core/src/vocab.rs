use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token vocabulary with `PAD = 0` and `UNK = 1`, remaining entries ranked
/// by descending frequency with ties in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of `token`, or [`UNK`] when absent.
    pub fn index(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, in index order.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::InvalidArgument(
                "vocabulary file must start with <pad> and <unk>".into(),
            ));
        }
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Builds a vocabulary of at most `max_size` entries (including PAD and UNK)
/// from token streams.
pub fn build_vocab<I, S, T>(streams: I, max_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    if max_size < 3 {
        return Err(Error::InvalidArgument(format!("vocabulary max size {max_size} < 3")));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for stream in streams {
        for tok in stream {
            let tok = tok.as_ref();
            if tok == PAD_TOKEN || tok == UNK_TOKEN {
                continue;
            }
            *counts.entry(tok.to_string()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(ranked.into_iter().take(max_size - 2).map(|(t, _)| t));
    Vocabulary::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<&'static str>> {
        vec!["a a b".split(' ').collect(), "b a".split(' ').collect()]
    }

    #[test]
    fn frequency_ranked() {
        let v = build_vocab(corpus(), 4).unwrap();
        assert_eq!(v.tokens(), [PAD_TOKEN, UNK_TOKEN, "a", "b"]);
        let v = build_vocab(corpus(), 3).unwrap();
        assert_eq!(v.tokens(), [PAD_TOKEN, UNK_TOKEN, "a"]);
        assert_eq!(v.index("b"), UNK);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build_vocab([["y", "x", "z", "z"]], 4).unwrap();
        assert_eq!(v.tokens(), [PAD_TOKEN, UNK_TOKEN, "z", "x"]);
    }

    #[test]
    fn errors() {
        assert!(matches!(build_vocab(corpus(), 2), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_vocab(Vec::<Vec<&str>>::new(), 5), Err(Error::EmptyInput)));
    }

    #[test]
    fn deterministic_and_round_trips() {
        let a = build_vocab(corpus(), 10).unwrap();
        let b = build_vocab(corpus(), 10).unwrap();
        assert_eq!(a, b);
        let again = build_vocab([a.tokens().to_vec()], 10).unwrap();
        assert_eq!(again, a);
        assert_eq!(Vocabulary::from_text(&a.to_text()).unwrap(), a);
        assert!(Vocabulary::from_text("a\nb\n").is_err());
    }
}
