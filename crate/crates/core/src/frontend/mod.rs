//! Text to IPA phoneme ids, with per-word span bookkeeping.
//!
//! Text is split on whitespace, punctuation is stripped from each word and
//! every word is phonemized on its own, so each phoneme knows which word it
//! came from. Languages without a phonemizer are routed through a related
//! one (see [`resolve_backend`]).

mod builtin;
mod espeak;
pub mod ipa;
mod language;
mod vocab;

use serde::{Deserialize, Serialize};

pub use builtin::{english_words, BuiltinBackend};
pub use espeak::EspeakBackend;
pub use language::{resolve_backend, Language, LanguageTag, NUM_LANGUAGES};
pub use vocab::{
    PhonemeVocabulary, BOUNDARY_ID, BOUNDARY_SYMBOL, PAD_ID, PAD_SYMBOL, RESERVED, UNKNOWN_ID,
    UNKNOWN_SYMBOL,
};

use crate::{Error, Result};

/// A grapheme-to-phoneme engine working one word at a time.
pub trait PhonemizerBackend: Send + Sync {
    fn name(&self) -> &str;
    fn supports(&self, lang: Language) -> bool;
    /// Phonemes of a single punctuation-free word; `Err` carries the reason.
    fn phonemize_word(&self, word: &str, lang: Language) -> std::result::Result<Vec<String>, String>;
}

/// `len` consecutive phonemes belonging to word `word_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct WordSpan {
    pub word_index: usize,
    pub len: usize,
}

impl From<(usize, usize)> for WordSpan {
    fn from((word_index, len): (usize, usize)) -> Self {
        Self { word_index, len }
    }
}

impl From<WordSpan> for (usize, usize) {
    fn from(s: WordSpan) -> Self {
        (s.word_index, s.len)
    }
}

/// Phoneme symbols, their ids (empty until encoded) and word spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhonemeSequence {
    pub phonemes: Vec<String>,
    pub ids: Vec<u32>,
    pub word_spans: Vec<WordSpan>,
}

impl PhonemeSequence {
    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.word_spans.len()
    }

    /// Index of the word owning each phoneme.
    pub fn phoneme_owners(&self) -> Vec<usize> {
        self.word_spans
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.word_index, s.len))
            .collect()
    }

    pub fn ids_usize(&self) -> Vec<usize> {
        self.ids.iter().map(|&i| i as usize).collect()
    }

    /// Checks the span partition and id-length invariants.
    pub fn check(&self) -> Result<()> {
        let total: usize = self.word_spans.iter().map(|s| s.len).sum();
        if total != self.phonemes.len() {
            return Err(Error::LengthMismatch {
                left: total,
                right: self.phonemes.len(),
            });
        }
        if self.word_spans.iter().enumerate().any(|(i, s)| s.word_index != i) {
            return Err(Error::Config("word spans are not contiguous from 0".into()));
        }
        if !self.ids.is_empty() && self.ids.len() != self.phonemes.len() {
            return Err(Error::LengthMismatch {
                left: self.ids.len(),
                right: self.phonemes.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendOptions {
    /// Emit punctuation characters as phoneme symbols after their word.
    pub keep_punctuation: bool,
    /// Append a word-boundary symbol to every word but the last.
    pub word_boundaries: bool,
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '।' | '॥' | '“' | '”' | '‘' | '’' | '…' | '—' | '–' | '«' | '»' | '¿' | '¡' | '·'
        )
}

/// A whitespace-delimited word with punctuation removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub punctuation: Vec<char>,
}

/// Whitespace segmentation shared by the phonemizer and the context
/// extractor. Tokens that are pure punctuation are dropped.
pub fn split_words(text: &str) -> Vec<Word> {
    text.split_whitespace()
        .filter_map(|tok| {
            let (punct, letters): (Vec<char>, Vec<char>) = tok.chars().partition(|&c| is_punctuation(c));
            if letters.is_empty() {
                None
            } else {
                Some(Word {
                    text: letters.into_iter().collect(),
                    punctuation: punct,
                })
            }
        })
        .collect()
}

/// Phonemizes `text` word by word through `backend` using `tag.backend_code`.
pub fn phonemize(
    text: &str,
    tag: LanguageTag,
    backend: &dyn PhonemizerBackend,
    opts: FrontendOptions,
) -> Result<PhonemeSequence> {
    let words = split_words(text);
    if words.is_empty() {
        return Err(Error::EmptyText);
    }
    if !backend.supports(tag.backend_code) {
        return Err(Error::BackendFailure {
            backend: backend.name().to_string(),
            word: words[0].text.clone(),
            reason: format!("language {} is not supported", tag.backend_code),
        });
    }
    if tag.is_aliased() {
        log::debug!("phonemizing {} text with the {} phonemizer", tag.code, tag.backend_code);
    }
    let mut phonemes = Vec::new();
    let mut word_spans = Vec::with_capacity(words.len());
    let last = words.len() - 1;
    for (i, word) in words.iter().enumerate() {
        let fail = |reason: String| Error::BackendFailure {
            backend: backend.name().to_string(),
            word: word.text.clone(),
            reason,
        };
        let mut ph = backend.phonemize_word(&word.text, tag.backend_code).map_err(fail)?;
        if ph.is_empty() {
            return Err(fail("no phonemes produced".into()));
        }
        if opts.keep_punctuation {
            ph.extend(word.punctuation.iter().map(|c| c.to_string()));
        }
        if opts.word_boundaries && i < last {
            ph.push(BOUNDARY_SYMBOL.to_string());
        }
        word_spans.push(WordSpan {
            word_index: i,
            len: ph.len(),
        });
        phonemes.extend(ph);
    }
    Ok(PhonemeSequence {
        phonemes,
        ids: Vec::new(),
        word_spans,
    })
}
