//! Token vocabularies and their hex-per-line file format.
//!
//! One token per line, each line the token's bytes as lowercase or uppercase
//! hex; an empty line is the empty token. Leading `#special <id>` lines mark
//! tokens (end-of-sequence, padding, ...) that bypass grammar classing.

use std::collections::BTreeSet;
use std::path::Path;

use sha2::{Digest as _, Sha256};

use crate::error::VocabError;

/// SHA-256 content digest.
pub type Digest = [u8; 32];

pub fn sha256(bytes: &[u8]) -> Digest {
    let mut out = [0u8; 32];
    out.copy_from_slice(&Sha256::digest(bytes));
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    specials: BTreeSet<u32>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<Vec<u8>>, specials: impl IntoIterator<Item = u32>) -> Result<Self, VocabError> {
        let specials: BTreeSet<u32> = specials.into_iter().collect();
        if let Some(&id) = specials.iter().find(|&&id| id as usize >= tokens.len()) {
            return Err(VocabError::SpecialOutOfRange { id, len: tokens.len() });
        }
        Ok(Self { tokens, specials })
    }

    pub fn from_tokens<I, T>(tokens: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        Self {
            tokens: tokens.into_iter().map(|t| t.as_ref().to_vec()).collect(),
            specials: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    #[inline]
    pub fn token(&self, id: u32) -> &[u8] {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[Vec<u8>] {
        &self.tokens
    }

    pub fn specials(&self) -> &BTreeSet<u32> {
        &self.specials
    }

    #[inline]
    pub fn is_special(&self, id: u32) -> bool {
        self.specials.contains(&id)
    }

    pub fn parse(text: &str) -> Result<Self, VocabError> {
        let mut lines: Vec<&str> = text.split('\n').collect();
        if text.is_empty() || text.ends_with('\n') {
            lines.pop();
        }
        let mut specials = Vec::new();
        let mut tokens = Vec::new();
        let mut in_header = true;
        for (i, raw) in lines.iter().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            let lineno = i + 1;
            if let Some(rest) = line.strip_prefix('#') {
                if !in_header {
                    return Err(VocabError::Parse {
                        line: lineno,
                        message: "header line after the first token".into(),
                    });
                }
                let mut parts = rest.split_whitespace();
                match (parts.next(), parts.next(), parts.next()) {
                    (Some("special"), Some(id), None) => {
                        let id = id.parse::<u32>().map_err(|_| VocabError::Parse {
                            line: lineno,
                            message: format!("bad special id `{id}`"),
                        })?;
                        specials.push(id);
                    }
                    _ => {
                        return Err(VocabError::Parse {
                            line: lineno,
                            message: "expected `#special <id>`".into(),
                        })
                    }
                }
                continue;
            }
            in_header = false;
            let bytes = hex::decode(line.trim()).map_err(|e| VocabError::Parse {
                line: lineno,
                message: format!("invalid hex: {e}"),
            })?;
            tokens.push(bytes);
        }
        Vocabulary::new(tokens, specials)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| VocabError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Canonical file rendering (lowercase hex, specials first).
    pub fn render(&self) -> String {
        let mut out = String::new();
        for id in &self.specials {
            out.push_str(&format!("#special {id}\n"));
        }
        for t in &self.tokens {
            out.push_str(&hex::encode(t));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }

    /// Digest of the canonical rendering.
    pub fn digest(&self) -> Digest {
        sha256(self.render().as_bytes())
    }
}

/// Printable form of token bytes for reports: ASCII kept, the rest escaped.
pub fn escape_bytes(bytes: &[u8]) -> String {
    bytes.iter().flat_map(|&b| std::ascii::escape_default(b)).map(char::from).collect()
}
