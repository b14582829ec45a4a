//! Line-oriented token text: one `CATEGORY_VALUE` per line. Blank lines and
//! `#` comments are ignored by the token reader; comments of the form
//! `# key: value` are surfaced as metadata.

use std::fmt::Write as _;

use super::token::Token;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenDocument {
    pub tokens: Vec<Token>,
    /// `# key: value` header comments, in file order.
    pub metadata: Vec<(String, String)>,
}

impl TokenDocument {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn parse_token_text(text: &str) -> Result<TokenDocument> {
    let mut doc = TokenDocument::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                let key = key.trim();
                if !key.is_empty() && !key.contains(' ') {
                    doc.metadata.push((key.to_string(), value.trim().to_string()));
                }
            }
            continue;
        }
        let token = line.parse::<Token>().map_err(|e| Error::Parse {
            location: format!("line {}", lineno + 1),
            message: e.to_string(),
        })?;
        doc.tokens.push(token);
    }
    Ok(doc)
}

pub fn write_token_text(doc: &TokenDocument) -> String {
    let mut out = String::new();
    for (key, value) in &doc.metadata {
        let _ = writeln!(out, "# {key}: {value}");
    }
    for token in &doc.tokens {
        let _ = writeln!(out, "{token}");
    }
    out
}
