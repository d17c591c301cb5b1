//! Core domain types: latent vectors, padded token sequences, vocabularies,
//! and the evaluated triplets the optimizer accumulates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token id reserved for padding in every vocabulary.
pub const PAD_TOKEN: u16 = 0;

/// A point in the continuous latent space (also doubles as a plain input
/// point for the continuous benchmark, where latent space = input space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent(pub Vec<f64>);

impl Latent {
    pub fn zeros(dim: usize) -> Self {
        Latent(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Euclidean distance to another latent point.
    pub fn distance(&self, other: &Latent) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for Latent {
    fn from(values: Vec<f64>) -> Self {
        Latent(values)
    }
}

impl std::ops::Index<usize> for Latent {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A discrete sequence over a token vocabulary, padded with [`PAD_TOKEN`] to
/// a fixed maximum length. The unpadded prefix runs up to the first pad;
/// positions after the first pad are canonicalized to pad so that sequence
/// identity and hashing are well-defined.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<u16>,
    len: usize,
}

impl TokenSequence {
    /// Builds a sequence from unpadded tokens. Rejects pads inside the body,
    /// out-of-vocabulary ids, and overlong inputs.
    pub fn from_unpadded(tokens: &[u16], max_len: usize, vocab_size: u16) -> Result<Self> {
        if tokens.len() > max_len {
            return Err(Error::Input(format!(
                "sequence length {} exceeds maximum {}",
                tokens.len(),
                max_len
            )));
        }
        for &t in tokens {
            if t == PAD_TOKEN {
                return Err(Error::Input("pad token inside sequence body".into()));
            }
            if t >= vocab_size {
                return Err(Error::Input(format!(
                    "token id {t} outside vocabulary of size {vocab_size}"
                )));
            }
        }
        let mut padded = tokens.to_vec();
        padded.resize(max_len, PAD_TOKEN);
        Ok(TokenSequence {
            tokens: padded,
            len: tokens.len(),
        })
    }

    /// Builds a sequence from a full padded grid (e.g. a decoder argmax),
    /// truncating at the first pad and canonicalizing the tail.
    pub fn from_padded_grid(grid: &[u16]) -> Self {
        let len = grid
            .iter()
            .position(|&t| t == PAD_TOKEN)
            .unwrap_or(grid.len());
        let mut tokens = vec![PAD_TOKEN; grid.len()];
        tokens[..len].copy_from_slice(&grid[..len]);
        TokenSequence { tokens, len }
    }

    pub fn empty(max_len: usize) -> Self {
        TokenSequence {
            tokens: vec![PAD_TOKEN; max_len],
            len: 0,
        }
    }

    /// Unpadded prefix (up to the first pad).
    pub fn unpadded(&self) -> &[u16] {
        &self.tokens[..self.len]
    }

    /// Full padded grid of length `max_len`.
    pub fn padded(&self) -> &[u16] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_len(&self) -> usize {
        self.tokens.len()
    }
}

/// Maps token ids to printable symbols and back. Id 0 is always the pad.
#[derive(Debug, Clone)]
pub struct Vocab {
    symbols: Vec<String>,
}

impl Vocab {
    /// `symbols[0]` is the pad symbol.
    pub fn new(symbols: &[&str]) -> Self {
        Vocab {
            symbols: symbols.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn size(&self) -> u16 {
        self.symbols.len() as u16
    }

    pub fn symbol(&self, id: u16) -> &str {
        &self.symbols[id as usize]
    }

    pub fn id(&self, symbol: &str) -> Option<u16> {
        self.symbols.iter().position(|s| s == symbol).map(|i| i as u16)
    }

    /// Renders the unpadded prefix as space-separated symbols.
    pub fn format(&self, seq: &TokenSequence) -> String {
        seq.unpadded()
            .iter()
            .map(|&t| self.symbol(t))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses space-separated symbols into a sequence.
    pub fn parse(&self, text: &str, max_len: usize) -> Result<TokenSequence> {
        let mut ids = Vec::new();
        for sym in text.split_whitespace() {
            let id = self
                .id(sym)
                .ok_or_else(|| Error::Input(format!("unknown token symbol '{sym}'")))?;
            ids.push(id);
        }
        TokenSequence::from_unpadded(&ids, max_len, self.size())
    }
}

/// One evaluated point: the discrete sequence, its latent code, the observed
/// score, and whether the latent currently decodes back to the sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Triplet {
    pub x: TokenSequence,
    pub z: Latent,
    pub y: f64,
    pub aligned: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_unpadded_pads_to_max_len() {
        let s = TokenSequence::from_unpadded(&[3, 1, 4], 6, 8).unwrap();
        assert_eq!(s.unpadded(), &[3, 1, 4]);
        assert_eq!(s.padded(), &[3, 1, 4, 0, 0, 0]);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn from_unpadded_rejects_bad_tokens() {
        assert!(TokenSequence::from_unpadded(&[0], 4, 8).is_err());
        assert!(TokenSequence::from_unpadded(&[9], 4, 8).is_err());
        assert!(TokenSequence::from_unpadded(&[1; 5], 4, 8).is_err());
    }

    #[test]
    fn padded_grid_canonicalizes_tail() {
        let s = TokenSequence::from_padded_grid(&[2, 0, 5, 1]);
        assert_eq!(s.unpadded(), &[2]);
        assert_eq!(s.padded(), &[2, 0, 0, 0]);
        let t = TokenSequence::from_padded_grid(&[2, 0, 0, 0]);
        assert_eq!(s, t);
    }

    #[test]
    fn vocab_round_trip() {
        let v = Vocab::new(&["_", "a", "b"]);
        let s = v.parse("a b a", 5).unwrap();
        assert_eq!(v.format(&s), "a b a");
        assert!(v.parse("a c", 5).is_err());
    }
}
