use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The closed set of supported languages. The discriminant order is the
/// language-ID order used by the model's language embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Bengali,
    Chhattisgarhi,
    English,
    Hindi,
    Kannada,
    Marathi,
    Telugu,
}

pub const NUM_LANGUAGES: usize = 7;

impl Language {
    pub const ALL: [Language; NUM_LANGUAGES] = [
        Language::Bengali,
        Language::Chhattisgarhi,
        Language::English,
        Language::Hindi,
        Language::Kannada,
        Language::Marathi,
        Language::Telugu,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Language::Bengali => "bengali",
            Language::Chhattisgarhi => "chhattisgarhi",
            Language::English => "english",
            Language::Hindi => "hindi",
            Language::Kannada => "kannada",
            Language::Marathi => "marathi",
            Language::Telugu => "telugu",
        }
    }

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Language> {
        Self::ALL.get(id).copied()
    }

    /// Phonemizer language used for this language's text.
    ///
    /// Chhattisgarhi has no phonemizer of its own and is read with the
    /// closely related Hindi rules.
    pub fn phonemizer_language(self) -> Language {
        match self {
            Language::Chhattisgarhi => Language::Hindi,
            other => other,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Language::ALL
            .into_iter()
            .find(|l| l.code() == s)
            .ok_or_else(|| Error::UnsupportedLanguage(s.to_string()))
    }
}

/// A language together with the phonemizer language its text is routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LanguageTag {
    pub code: Language,
    pub backend_code: Language,
}

impl LanguageTag {
    pub fn is_aliased(&self) -> bool {
        self.code != self.backend_code
    }
}

/// Resolves a language code to its tag, applying the phonemizer alias table.
pub fn resolve_backend(code: &str) -> Result<LanguageTag> {
    let code: Language = code.parse()?;
    Ok(LanguageTag {
        code,
        backend_code: code.phonemizer_language(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chhattisgarhi_routes_to_hindi() {
        let tag = resolve_backend("chhattisgarhi").unwrap();
        assert_eq!(tag.code, Language::Chhattisgarhi);
        assert_eq!(tag.backend_code, Language::Hindi);
    }

    #[test]
    fn hindi_is_identity() {
        let tag = resolve_backend("hindi").unwrap();
        assert_eq!((tag.code, tag.backend_code), (Language::Hindi, Language::Hindi));
    }

    #[test]
    fn unknown_codes_are_rejected() {
        let err = resolve_backend("french").unwrap_err();
        assert_eq!(err.kind(), "unsupported-language");
        assert!(resolve_backend("Hindi").is_err());
        assert!(resolve_backend("").is_err());
    }

    #[test]
    fn only_chhattisgarhi_is_aliased() {
        for lang in Language::ALL {
            let tag = resolve_backend(lang.code()).unwrap();
            assert_eq!(tag, resolve_backend(lang.code()).unwrap());
            assert_eq!(tag.is_aliased(), lang == Language::Chhattisgarhi);
        }
    }

    #[test]
    fn ids_are_dense() {
        for (i, lang) in Language::ALL.iter().enumerate() {
            assert_eq!(lang.id(), i);
            assert_eq!(Language::from_id(i), Some(*lang));
        }
        assert_eq!(Language::from_id(7), None);
    }
}
