use serde::{Deserialize, Serialize};

use super::Token;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Whitespace-separated words are further split at every punctuation
    /// character: `COVID-19` becomes `COVID`, `-`, `19`.
    #[default]
    PunctSplit,
    /// Whitespace-separated words are kept intact.
    Whitespace,
}

impl std::str::FromStr for TokenizerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "punct" | "punct_split" => Ok(TokenizerMode::PunctSplit),
            "whitespace" => Ok(TokenizerMode::Whitespace),
            other => Err(format!("unknown tokenizer mode {other:?} (expected punct or whitespace)")),
        }
    }
}

/// Splits `text` into tokens with byte offsets relative to `text`.
///
/// In both modes the tokens cover every non-whitespace byte exactly once.
/// Under [`TokenizerMode::PunctSplit`] any character that is neither
/// alphanumeric nor whitespace is a token of its own.
pub fn tokenize(text: &str, mode: TokenizerMode) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    let flush = |start: &mut Option<usize>, end: usize, tokens: &mut Vec<Token>| {
        if let Some(s) = start.take() {
            tokens.push(Token { text: text[s..end].to_string(), start: s, end });
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            flush(&mut run_start, i, &mut tokens);
        } else if mode == TokenizerMode::PunctSplit && !c.is_alphanumeric() {
            flush(&mut run_start, i, &mut tokens);
            let end = i + c.len_utf8();
            tokens.push(Token { text: text[i..end].to_string(), start: i, end });
        } else if run_start.is_none() {
            run_start = Some(i);
        }
    }
    flush(&mut run_start, text.len(), &mut tokens);
    tokens
}
