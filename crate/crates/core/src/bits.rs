//! Binary strings and the one-string-per-line dataset format.

use std::fmt;
use std::fs;
use std::io::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BitsError {
    #[error("invalid character {c:?} at position {pos}; expected '0' or '1'")]
    InvalidChar { c: char, pos: usize },
    #[error("line {line}: {source}")]
    InvalidLine { line: usize, source: Box<BitsError> },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A string over the alphabet {0,1}, stored as one byte per symbol.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString(Vec<u8>);

impl BitString {
    /// Wraps raw bits; every element must be 0 or 1.
    pub fn from_bits(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        BitString(bits)
    }

    pub fn as_bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Substring containment over the bit alphabet.
    pub fn contains(&self, needle: &BitString) -> bool {
        contains_sub(&self.0, &needle.0)
    }

    /// The length-`len` prefix.
    pub fn prefix(&self, len: usize) -> BitString {
        BitString(self.0[..len].to_vec())
    }

    /// Enumerates all 2^len strings of the given length in numeric order
    /// (most significant bit first).
    pub fn enumerate_all(len: usize) -> impl Iterator<Item = BitString> {
        assert!(len < 32, "enumeration limited to short strings");
        (0u32..1 << len).map(move |v| {
            BitString((0..len).map(|i| ((v >> (len - 1 - i)) & 1) as u8).collect())
        })
    }
}

/// Naive substring scan; also the comparison point for matcher tests.
pub fn contains_sub(hay: &[u8], needle: &[u8]) -> bool {
    if needle.is_empty() {
        return true;
    }
    if needle.len() > hay.len() {
        return false;
    }
    hay.windows(needle.len()).any(|w| w == needle)
}

impl FromStr for BitString {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, BitsError> {
        let mut bits = Vec::with_capacity(s.len());
        for (pos, c) in s.chars().enumerate() {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                _ => return Err(BitsError::InvalidChar { c, pos }),
            }
        }
        Ok(BitString(bits))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Reads a dataset file: one binary string per line, newline-terminated.
pub fn read_dataset(path: &Path) -> Result<Vec<BitString>, BitsError> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text)
}

/// Parses dataset text (one string per line; empty trailing line allowed).
pub fn parse_dataset(text: &str) -> Result<Vec<BitString>, BitsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.parse().map_err(|e| BitsError::InvalidLine {
                line: i + 1,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Writes a dataset file, one string per line.
pub fn write_dataset(path: &Path, data: &[BitString]) -> Result<(), BitsError> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for s in data {
        writeln!(out, "{s}")?;
    }
    out.flush()?;
    Ok(())
}
