use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::PhonemeSequence;
use crate::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNKNOWN_ID: u32 = 1;
pub const BOUNDARY_ID: u32 = 2;
pub const RESERVED: u32 = 3;

pub const PAD_SYMBOL: &str = "<pad>";
pub const UNKNOWN_SYMBOL: &str = "<unk>";
pub const BOUNDARY_SYMBOL: &str = "<wb>";

const RESERVED_SYMBOLS: [&str; 3] = [PAD_SYMBOL, UNKNOWN_SYMBOL, BOUNDARY_SYMBOL];

/// Bijection between IPA symbols and the contiguous id range
/// `RESERVED..RESERVED + len`. Ids `0..RESERVED` are pad, unknown and
/// word boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeVocabulary {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl PhonemeVocabulary {
    fn from_symbols(symbols: Vec<String>) -> Self {
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32 + RESERVED))
            .collect();
        Self { symbols, index }
    }

    /// Collects every symbol of the corpus; ids follow sorted symbol order.
    pub fn build(sequences: &[PhonemeSequence]) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let set: BTreeSet<&str> = sequences
            .iter()
            .flat_map(|s| s.phonemes.iter().map(String::as_str))
            .filter(|s| !RESERVED_SYMBOLS.contains(s))
            .collect();
        if set.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self::from_symbols(set.into_iter().map(str::to_string).collect()))
    }

    /// Number of real (non-reserved) symbols.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Total id count including reserved ids; the embedding table size.
    pub fn id_count(&self) -> usize {
        self.symbols.len() + RESERVED as usize
    }

    pub fn id(&self, symbol: &str) -> Option<u32> {
        match symbol {
            PAD_SYMBOL => Some(PAD_ID),
            UNKNOWN_SYMBOL => Some(UNKNOWN_ID),
            BOUNDARY_SYMBOL => Some(BOUNDARY_ID),
            _ => self.index.get(symbol).copied(),
        }
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        if id < RESERVED {
            return Some(RESERVED_SYMBOLS[id as usize]);
        }
        self.symbols.get((id - RESERVED) as usize).map(String::as_str)
    }

    /// Real symbols in id order.
    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Fills `ids`; unknown symbols map to [`UNKNOWN_ID`]. Returns the
    /// encoded sequence and the number of unknown symbols.
    pub fn encode(&self, seq: &PhonemeSequence) -> (PhonemeSequence, usize) {
        let mut unknown = 0;
        let ids = seq
            .phonemes
            .iter()
            .map(|p| {
                self.id(p).unwrap_or_else(|| {
                    unknown += 1;
                    UNKNOWN_ID
                })
            })
            .collect();
        let mut out = seq.clone();
        out.ids = ids;
        (out, unknown)
    }

    /// One `symbol<TAB>id` line per id, reserved ids first.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, s) in RESERVED_SYMBOLS.iter().enumerate() {
            out.push_str(&format!("{s}\t{i}\n"));
        }
        for (i, s) in self.symbols.iter().enumerate() {
            out.push_str(&format!("{s}\t{}\n", i as u32 + RESERVED));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let schema = |line: usize, message: String| Error::Schema {
            path: "<vocabulary>".into(),
            line,
            message,
        };
        let mut symbols = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (sym, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| schema(n + 1, "expected `symbol<TAB>id`".into()))?;
            let id: u32 = id
                .parse()
                .map_err(|_| schema(n + 1, format!("invalid id `{id}`")))?;
            if id as usize != n {
                return Err(schema(n + 1, format!("id {id} out of order (expected {n})")));
            }
            if id < RESERVED {
                if sym != RESERVED_SYMBOLS[id as usize] {
                    return Err(schema(n + 1, format!("reserved id {id} must be `{}`", RESERVED_SYMBOLS[id as usize])));
                }
            } else {
                symbols.push(sym.to_string());
            }
        }
        let unique: BTreeSet<&String> = symbols.iter().collect();
        if unique.len() != symbols.len() {
            return Err(schema(0, "duplicate symbols".into()));
        }
        Ok(Self::from_symbols(symbols))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the TSV serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }
}
