use crate::error::{Error, Result};

/// One syntactic word of a parsed sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepToken {
    pub form: String,
    /// 1-based head position; 0 marks the root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedSentence {
    pub tokens: Vec<DepToken>,
}

impl ParsedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn conllu_error(line: usize, message: impl Into<String>) -> Error {
    Error::Conllu {
        line,
        message: message.into(),
    }
}

fn close_sentence(
    current: &mut Vec<(usize, DepToken)>,
    out: &mut Vec<ParsedSentence>,
) -> Result<()> {
    if current.is_empty() {
        return Ok(());
    }
    let n = current.len();
    let mut roots = 0;
    for (line, tok) in current.iter() {
        if tok.head > n {
            return Err(conllu_error(
                *line,
                format!("HEAD {} out of range for a {n}-token sentence", tok.head),
            ));
        }
        if tok.head == 0 {
            roots += 1;
        }
    }
    if roots != 1 {
        return Err(conllu_error(
            current[0].0,
            format!("sentence has {roots} root tokens, expected exactly one"),
        ));
    }
    out.push(ParsedSentence {
        tokens: current.drain(..).map(|(_, t)| t).collect(),
    });
    Ok(())
}

/// Reads CoNLL-U text. Only ID, FORM, HEAD and DEPREL are used; comments,
/// multiword ranges (`1-2`) and empty nodes (`1.1`) are skipped.
pub fn parse_conllu(text: &str) -> Result<Vec<ParsedSentence>> {
    let mut sentences = Vec::new();
    let mut current: Vec<(usize, DepToken)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let row = raw.trim_end_matches('\r');
        if row.trim().is_empty() {
            close_sentence(&mut current, &mut sentences)?;
            continue;
        }
        if row.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 10 {
            return Err(conllu_error(line, format!("expected 10 columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| conllu_error(line, format!("non-integer ID `{}`", cols[0])))?;
        if id != current.len() + 1 {
            return Err(conllu_error(
                line,
                format!("ID {id} out of sequence, expected {}", current.len() + 1),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| conllu_error(line, format!("non-integer HEAD `{}`", cols[6])))?;
        if head == id {
            return Err(conllu_error(line, "token is its own head"));
        }
        current.push((
            line,
            DepToken {
                form: cols[1].to_string(),
                head,
                deprel: cols[7].to_string(),
            },
        ));
    }
    close_sentence(&mut current, &mut sentences)?;
    Ok(sentences)
}

/// Splits text into word tokens (`[A-Za-z0-9_]+`) and single punctuation
/// characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Parser-free fallback: each token's head is the previous token, with
/// relation `dep`; the first token is the root. Empty text gives an empty
/// sentence.
pub fn linear_parse(text: &str) -> ParsedSentence {
    ParsedSentence {
        tokens: tokenize(text)
            .into_iter()
            .enumerate()
            .map(|(i, form)| DepToken {
                form,
                head: i,
                deprel: if i == 0 { "root".into() } else { "dep".into() },
            })
            .collect(),
    }
}
