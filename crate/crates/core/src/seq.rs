//! Finite-alphabet sequences.
//!
//! Symbols are stored as indices into a declared alphabet; textual
//! alphabets are declared once (per file, at the CLI boundary) and all
//! internal tables stay dense and bit-exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered list of distinct glyphs. Only the order and the size matter
/// to the core algorithms; glyphs are used when reading and printing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    glyphs: Vec<String>,
}

impl Alphabet {
    pub fn new(glyphs: Vec<String>) -> Result<Self> {
        if glyphs.is_empty() {
            return Err(Error::AlphabetTooSmall { min: 1, got: 0 });
        }
        for (i, g) in glyphs.iter().enumerate() {
            if glyphs[..i].contains(g) {
                return Err(Error::InvalidInput(format!("duplicate alphabet glyph {g:?}")));
            }
        }
        Ok(Self { glyphs })
    }

    /// One glyph per character, e.g. `"01"` declares the binary alphabet.
    pub fn from_charset(chars: &str) -> Result<Self> {
        Self::new(chars.chars().map(|c| c.to_string()).collect())
    }

    /// The 256-symbol byte alphabet.
    pub fn bytes() -> Self {
        Self { glyphs: (0..=255u8).map(|b| format!("{b:02x}")).collect() }
    }

    pub fn binary() -> Self {
        Self::from_charset("01").expect("binary alphabet")
    }

    pub fn size(&self) -> usize {
        self.glyphs.len()
    }

    pub fn glyphs(&self) -> &[String] {
        &self.glyphs
    }

    pub fn index_of(&self, glyph: &str) -> Option<usize> {
        self.glyphs.iter().position(|g| g == glyph)
    }
}

/// A plaintext or side-information sequence: alphabet size plus a run of
/// alphabet indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymbolSequence {
    alpha: usize,
    symbols: Vec<u16>,
}

impl SymbolSequence {
    pub fn new(alpha: usize, symbols: Vec<u16>) -> Result<Self> {
        if alpha == 0 {
            return Err(Error::AlphabetTooSmall { min: 1, got: 0 });
        }
        if let Some(&s) = symbols.iter().find(|&&s| (s as usize) >= alpha) {
            return Err(Error::SymbolOutOfRange { symbol: s as usize, alpha });
        }
        Ok(Self { alpha, symbols })
    }

    /// Parse a glyph-per-character string over a single-character alphabet.
    pub fn from_str_binary(s: &str) -> Result<Self> {
        Self::from_glyph_chars(s, &Alphabet::binary())
    }

    /// Parse a string in which every character is one glyph of `alphabet`.
    /// Reports the byte offset of the first unknown character.
    pub fn from_glyph_chars(s: &str, alphabet: &Alphabet) -> Result<Self> {
        let mut symbols = Vec::with_capacity(s.len());
        for (off, c) in s.char_indices() {
            let g = c.to_string();
            match alphabet.index_of(&g) {
                Some(i) => symbols.push(i as u16),
                None => {
                    return Err(Error::InvalidInput(format!(
                        "character {c:?} at byte offset {off} is not in the alphabet"
                    )))
                }
            }
        }
        Self::new(alphabet.size(), symbols)
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self { alpha: 256, symbols: bytes.iter().map(|&b| b as u16).collect() }
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[u16] {
        &self.symbols
    }

    pub fn get(&self, i: usize) -> usize {
        self.symbols[i] as usize
    }

    /// Render with one glyph per symbol (glyphs joined without separator).
    pub fn render(&self, alphabet: &Alphabet) -> Result<String> {
        if alphabet.size() != self.alpha {
            return Err(Error::AlphabetMismatch { expected: self.alpha, got: alphabet.size() });
        }
        Ok(self.symbols.iter().map(|&s| alphabet.glyphs()[s as usize].as_str()).collect())
    }
}

impl std::fmt::Display for SymbolSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &s in &self.symbols {
            if self.alpha <= 10 {
                write!(f, "{s}")?;
            } else {
                write!(f, "{s},")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_symbols() {
        assert!(SymbolSequence::new(2, vec![0, 1, 2]).is_err());
        assert!(SymbolSequence::new(0, vec![]).is_err());
        assert!(SymbolSequence::new(1, vec![0, 0]).is_ok());
    }

    #[test]
    fn rejects_duplicate_glyphs() {
        assert!(Alphabet::from_charset("010").is_err());
        assert!(Alphabet::from_charset("01").is_ok());
    }

    #[test]
    fn parse_reports_offset() {
        let err = SymbolSequence::from_str_binary("01x1").unwrap_err();
        match err {
            Error::InvalidInput(msg) => assert!(msg.contains("offset 2"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_sequence_is_fine() {
        let s = SymbolSequence::from_str_binary("").unwrap();
        assert_eq!(s.len(), 0);
    }
}
