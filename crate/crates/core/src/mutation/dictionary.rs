//! Token dictionaries ("extras") for the dictionary-driven operators.
//!
//! File format, one token per line:
//!
//! ```text
//! # comment
//! REQUEST
//! "with space\x00and \"escapes\" \\"
//! ```
//!
//! A bare token is taken as raw bytes and may not contain whitespace. A
//! quoted token understands `\xNN`, `\\` and `\"`. Blank lines are skipped.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dictionary {
    tokens: Vec<Vec<u8>>,
}

impl Dictionary {
    /// Builds a dictionary, dropping empty tokens.
    pub fn new<I, T>(tokens: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<Vec<u8>>,
    {
        Dictionary {
            tokens: tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &Vec<u8>| !t.is_empty())
                .collect(),
        }
    }

    pub fn tokens(&self) -> &[Vec<u8>] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &[u8]) -> bool {
        self.tokens.iter().any(|t| t == token)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|(line, msg)| Error::parse(path, line, msg))
    }

    /// Parses dictionary text. Errors carry the 1-based line number.
    pub fn parse(text: &[u8]) -> std::result::Result<Self, (usize, String)> {
        let mut tokens = Vec::new();
        for (i, raw) in text.split(|&b| b == b'\n').enumerate() {
            let line = raw.trim_ascii();
            if line.is_empty() || line[0] == b'#' {
                continue;
            }
            let token = if line[0] == b'"' {
                parse_quoted(line).map_err(|m| (i + 1, m))?
            } else {
                if line.iter().any(u8::is_ascii_whitespace) {
                    return Err((i + 1, "bare token contains whitespace".into()));
                }
                line.to_vec()
            };
            if token.is_empty() {
                return Err((i + 1, "empty token".into()));
            }
            tokens.push(token);
        }
        Ok(Dictionary { tokens })
    }

    /// Serializes every token in quoted form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push('"');
            for &b in t {
                match b {
                    b'"' => out.push_str("\\\""),
                    b'\\' => out.push_str("\\\\"),
                    0x20..=0x7e => out.push(b as char),
                    _ => out.push_str(&format!("\\x{b:02x}")),
                }
            }
            out.push_str("\"\n");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_quoted(line: &[u8]) -> std::result::Result<Vec<u8>, String> {
    if line.len() < 2 || *line.last().unwrap() != b'"' {
        return Err("unterminated quoted token".into());
    }
    let body = &line[1..line.len() - 1];
    let mut out = Vec::with_capacity(body.len());
    let mut i = 0;
    while i < body.len() {
        match body[i] {
            b'\\' => {
                let esc = *body.get(i + 1).ok_or("dangling backslash")?;
                match esc {
                    b'\\' | b'"' => {
                        out.push(esc);
                        i += 2;
                    }
                    b'x' => {
                        let hex = body.get(i + 2..i + 4).ok_or("truncated \\x escape")?;
                        let hex = std::str::from_utf8(hex).map_err(|_| "bad \\x escape")?;
                        let v = u8::from_str_radix(hex, 16)
                            .map_err(|_| format!("bad \\x escape `{hex}`"))?;
                        out.push(v);
                        i += 4;
                    }
                    other => return Err(format!("unknown escape `\\{}`", other as char)),
                }
            }
            b'"' => return Err("unescaped quote inside token".into()),
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bare_quoted_and_comments() {
        let text = b"# keywords\nSEND\n\n  QUERY  \n\"a b\\x00\\\\\\\"\"\r\n";
        let d = Dictionary::parse(text).unwrap();
        assert_eq!(
            d.tokens(),
            &[b"SEND".to_vec(), b"QUERY".to_vec(), b"a b\x00\\\"".to_vec()]
        );
    }

    #[test]
    fn rejects_malformed_lines() {
        assert_eq!(Dictionary::parse(b"ok\nnot ok\n").unwrap_err().0, 2);
        assert!(Dictionary::parse(b"\"open").is_err());
        assert!(Dictionary::parse(b"\"\\q\"").is_err());
        assert!(Dictionary::parse(b"\"\\x4\"").is_err());
        assert!(Dictionary::parse(b"\"\"").is_err());
    }

    #[test]
    fn text_round_trip() {
        let d = Dictionary::new([b"VISUALIZE".to_vec(), vec![0, 255, b'"', b'\\', b' ']]);
        assert_eq!(Dictionary::parse(d.to_text().as_bytes()).unwrap(), d);
    }

    #[test]
    fn new_drops_empty_tokens() {
        let d = Dictionary::new([Vec::new(), b"x".to_vec()]);
        assert_eq!(d.len(), 1);
    }
}
