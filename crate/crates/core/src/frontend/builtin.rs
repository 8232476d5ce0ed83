//! Built-in rule-based grapheme-to-IPA backend.
//!
//! Covers the Devanagari, Bengali, Telugu and Kannada scripts through their
//! shared Unicode block layout (letters sit at the same offset in each
//! block), plus a small English lexicon with letter-to-sound fallback.
//! It exists so tests and desk-scale runs never depend on an external tool.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::{Language, PhonemizerBackend};

const DEVANAGARI: u32 = 0x0900;
const BENGALI: u32 = 0x0980;
const TELUGU: u32 = 0x0C00;
const KANNADA: u32 = 0x0C80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VowelStyle {
    /// Hindi, Marathi (and Chhattisgarhi via Hindi).
    IndoAryan,
    Bengali,
    /// Telugu, Kannada.
    Dravidian,
}

fn style(lang: Language) -> VowelStyle {
    match lang {
        Language::Bengali => VowelStyle::Bengali,
        Language::Telugu | Language::Kannada => VowelStyle::Dravidian,
        _ => VowelStyle::IndoAryan,
    }
}

/// Script block base for a character, if it belongs to a supported Brahmic block.
fn brahmic_offset(c: char) -> Option<u32> {
    let cp = c as u32;
    [DEVANAGARI, BENGALI, TELUGU, KANNADA]
        .into_iter()
        .find(|&base| (base..base + 0x80).contains(&cp))
        .map(|base| cp - base)
}

fn inherent(style: VowelStyle) -> &'static str {
    match style {
        VowelStyle::IndoAryan => "ə",
        VowelStyle::Bengali => "ɔ",
        VowelStyle::Dravidian => "a",
    }
}

/// Vowel for an independent-vowel offset (0x05..=0x14, 0x60..=0x61). Dependent
/// signs map onto these via [`sign_to_vowel`].
fn vowel(offset: u32, style: VowelStyle) -> Option<&'static [&'static str]> {
    use VowelStyle::*;
    let v: &'static [&'static str] = match (offset, style) {
        (0x05, IndoAryan) => &["ə"],
        (0x05, Bengali) => &["ɔ"],
        (0x05, Dravidian) => &["a"],
        (0x06, Bengali) => &["a"],
        (0x06, _) => &["aː"],
        (0x07, IndoAryan) => &["ɪ"],
        (0x07, _) => &["i"],
        (0x08, Bengali) => &["i"],
        (0x08, _) => &["iː"],
        (0x09, IndoAryan) => &["ʊ"],
        (0x09, _) => &["u"],
        (0x0A, Bengali) => &["u"],
        (0x0A, _) => &["uː"],
        (0x0B, Dravidian) => &["r", "u"],
        (0x0B, IndoAryan) => &["r", "ɪ"],
        (0x0B, Bengali) => &["r", "i"],
        (0x0C, _) => &["l", "i"],
        (0x0D, _) => &["æ"],
        (0x0E, _) => &["e"],
        (0x0F, IndoAryan) => &["eː"],
        (0x0F, Bengali) => &["e"],
        (0x0F, Dravidian) => &["eː"],
        (0x10, IndoAryan) => &["ɛː"],
        (0x10, Bengali) => &["o", "i"],
        (0x10, Dravidian) => &["a", "i"],
        (0x11, _) => &["ɔ"],
        (0x12, _) => &["o"],
        (0x13, IndoAryan) => &["oː"],
        (0x13, Bengali) => &["o"],
        (0x13, Dravidian) => &["oː"],
        (0x14, IndoAryan) => &["ɔː"],
        (0x14, Bengali) => &["o", "u"],
        (0x14, Dravidian) => &["a", "u"],
        (0x60, Dravidian) => &["r", "uː"],
        (0x60, _) => &["r", "iː"],
        (0x61, _) => &["l", "iː"],
        _ => return None,
    };
    Some(v)
}

fn sign_to_vowel(offset: u32) -> Option<u32> {
    match offset {
        0x3E..=0x4C => Some(offset - 0x3E + 0x06),
        0x62 => Some(0x0C),
        0x63 => Some(0x61),
        _ => None,
    }
}

fn consonant(offset: u32, style: VowelStyle) -> Option<&'static str> {
    let c = match offset {
        0x15 => "k",
        0x16 => "kʰ",
        0x17 => "ɡ",
        0x18 => "ɡʱ",
        0x19 => "ŋ",
        0x1A => "tʃ",
        0x1B => "tʃʰ",
        0x1C => "dʒ",
        0x1D => "dʒʱ",
        0x1E => "ɲ",
        0x1F => "ʈ",
        0x20 => "ʈʰ",
        0x21 => "ɖ",
        0x22 => "ɖʱ",
        0x23 => "ɳ",
        0x24 => "t̪",
        0x25 => "t̪ʰ",
        0x26 => "d̪",
        0x27 => "d̪ʱ",
        0x28 | 0x29 => "n",
        0x2A => "p",
        0x2B => "pʰ",
        0x2C => "b",
        0x2D => "bʱ",
        0x2E => "m",
        0x2F if style == VowelStyle::Bengali => "dʒ",
        0x2F => "j",
        0x30 | 0x31 => "r",
        0x32 => "l",
        0x33 | 0x34 => "ɭ",
        0x35 => "ʋ",
        0x36 => "ʃ",
        0x37 if style == VowelStyle::IndoAryan => "ʃ",
        0x37 if style == VowelStyle::Bengali => "ʃ",
        0x37 => "ʂ",
        0x38 => "s",
        0x39 => "h",
        0x58 => "q",
        0x59 => "x",
        0x5A => "ɣ",
        0x5B => "z",
        0x5C => "ɽ",
        0x5D => "ɽʱ",
        0x5E => "f",
        0x5F => "j",
        _ => return None,
    };
    Some(c)
}

fn nukta(symbol: &str) -> &'static str {
    match symbol {
        "k" => "q",
        "kʰ" => "x",
        "ɡ" => "ɣ",
        "dʒ" => "z",
        "ɖ" => "ɽ",
        "ɖʱ" => "ɽʱ",
        "pʰ" => "f",
        _ => "",
    }
}

fn homorganic_nasal(next_offset: Option<u32>) -> Option<&'static str> {
    match next_offset? {
        0x15..=0x19 => Some("ŋ"),
        0x1A..=0x1E => Some("ɲ"),
        0x1F..=0x23 => Some("ɳ"),
        0x24..=0x29 => Some("n"),
        0x2A..=0x2E => Some("m"),
        _ => None,
    }
}

fn phonemize_brahmic(word: &[char], lang: Language) -> Result<Vec<String>, String> {
    let style = style(lang);
    let mut out: Vec<String> = Vec::new();
    let mut pending = false;
    let mut vowels_emitted = 0usize;

    fn flush(out: &mut Vec<String>, pending: &mut bool, vowels: &mut usize, style: VowelStyle) {
        if *pending {
            out.push(inherent(style).to_string());
            *vowels += 1;
            *pending = false;
        }
    }

    for (i, &c) in word.iter().enumerate() {
        if matches!(c, '\u{200c}' | '\u{200d}') {
            continue;
        }
        let Some(off) = brahmic_offset(c) else {
            return Err(format!("character {c:?} (U+{:04X}) is not supported", c as u32));
        };
        if let Some(sym) = consonant(off, style) {
            flush(&mut out, &mut pending, &mut vowels_emitted, style);
            out.push(sym.to_string());
            pending = true;
        } else if let Some(v) = sign_to_vowel(off).and_then(|o| vowel(o, style)) {
            if !pending {
                return Err(format!("vowel sign {c:?} without a consonant"));
            }
            pending = false;
            out.extend(v.iter().map(|s| s.to_string()));
            vowels_emitted += 1;
        } else if let Some(v) = vowel(off, style) {
            flush(&mut out, &mut pending, &mut vowels_emitted, style);
            out.extend(v.iter().map(|s| s.to_string()));
            vowels_emitted += 1;
        } else {
            match off {
                // virama
                0x4D => pending = false,
                // nukta
                0x3C => {
                    if let Some(last) = out.last_mut() {
                        let mapped = nukta(last);
                        if !mapped.is_empty() {
                            *last = mapped.to_string();
                        }
                    }
                }
                // candrabindu
                0x01 => {
                    flush(&mut out, &mut pending, &mut vowels_emitted, style);
                    if let Some(last) = out.last_mut() {
                        last.push('\u{0303}');
                    }
                }
                // anusvara
                0x02 => {
                    flush(&mut out, &mut pending, &mut vowels_emitted, style);
                    let next = word.get(i + 1).and_then(|&n| brahmic_offset(n));
                    match (homorganic_nasal(next), style) {
                        (Some(n), _) => out.push(n.to_string()),
                        (None, VowelStyle::IndoAryan) => match out.last_mut() {
                            Some(last) => last.push('\u{0303}'),
                            None => out.push("n".to_string()),
                        },
                        (None, VowelStyle::Bengali) => out.push("ŋ".to_string()),
                        (None, VowelStyle::Dravidian) => out.push("m".to_string()),
                    }
                }
                // visarga
                0x03 => {
                    flush(&mut out, &mut pending, &mut vowels_emitted, style);
                    out.push("h".to_string());
                }
                // avagraha, length marks, au length mark
                0x3D | 0x55 | 0x56 | 0x57 => {}
                _ => {
                    return Err(format!("character {c:?} (U+{:04X}) is not supported", c as u32));
                }
            }
        }
    }
    // Word-final inherent vowel is silent in the Indo-Aryan languages once the
    // word has another vowel.
    if pending {
        let delete = style != VowelStyle::Dravidian && vowels_emitted > 0;
        if !delete {
            out.push(inherent(style).to_string());
        }
    }
    Ok(out)
}

fn english_lexicon() -> &'static HashMap<&'static str, &'static str> {
    static LEXICON: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        [
            ("a", "ə"),
            ("about", "əbaʊt"),
            ("after", "æftɚ"),
            ("all", "ɔːl"),
            ("and", "ænd"),
            ("are", "ɑːɹ"),
            ("bright", "bɹaɪt"),
            ("city", "sɪti"),
            ("clear", "klɪɹ"),
            ("cloning", "kloʊnɪŋ"),
            ("day", "deɪ"),
            ("every", "ɛvɹi"),
            ("few", "fjuː"),
            ("for", "fɔːɹ"),
            ("friend", "fɹɛnd"),
            ("from", "fɹʌm"),
            ("good", "ɡʊd"),
            ("have", "hæv"),
            ("hello", "həloʊ"),
            ("here", "hɪɹ"),
            ("home", "hoʊm"),
            ("is", "ɪz"),
            ("it", "ɪt"),
            ("language", "læŋɡwɪdʒ"),
            ("light", "laɪt"),
            ("many", "mɛni"),
            ("model", "mɑːdəl"),
            ("morning", "mɔːɹnɪŋ"),
            ("music", "mjuːzɪk"),
            ("new", "nuː"),
            ("night", "naɪt"),
            ("of", "ʌv"),
            ("one", "wʌn"),
            ("people", "piːpəl"),
            ("quiet", "kwaɪət"),
            ("rain", "ɹeɪn"),
            ("river", "ɹɪvɚ"),
            ("road", "ɹoʊd"),
            ("school", "skuːl"),
            ("see", "siː"),
            ("small", "smɔːl"),
            ("sound", "saʊnd"),
            ("speaker", "spiːkɚ"),
            ("speech", "spiːtʃ"),
            ("sun", "sʌn"),
            ("teacher", "tiːtʃɚ"),
            ("text", "tɛkst"),
            ("the", "ðə"),
            ("there", "ðɛɹ"),
            ("this", "ðɪs"),
            ("time", "taɪm"),
            ("to", "tuː"),
            ("today", "tədeɪ"),
            ("voice", "vɔɪs"),
            ("water", "wɔːtɚ"),
            ("we", "wiː"),
            ("with", "wɪð"),
            ("world", "wɜːld"),
            ("you", "juː"),
        ]
        .into_iter()
        .collect()
    })
}

/// Words of the built-in English lexicon, sorted.
pub fn english_words() -> Vec<&'static str> {
    let mut words: Vec<&'static str> = english_lexicon().keys().copied().collect();
    words.sort_unstable();
    words
}

fn english_letter_to_sound(word: &str) -> Vec<String> {
    const DIGRAPHS: &[(&str, &[&str])] = &[
        ("tch", &["tʃ"]),
        ("igh", &["aɪ"]),
        ("th", &["θ"]),
        ("sh", &["ʃ"]),
        ("ch", &["tʃ"]),
        ("ng", &["ŋ"]),
        ("ph", &["f"]),
        ("ck", &["k"]),
        ("qu", &["k", "w"]),
        ("wh", &["w"]),
        ("ee", &["iː"]),
        ("ea", &["iː"]),
        ("oo", &["uː"]),
        ("ai", &["eɪ"]),
        ("ay", &["eɪ"]),
        ("oa", &["oʊ"]),
        ("ow", &["aʊ"]),
        ("ou", &["aʊ"]),
        ("oi", &["ɔɪ"]),
        ("oy", &["ɔɪ"]),
        ("er", &["ɚ"]),
        ("ar", &["ɑː", "ɹ"]),
        ("or", &["ɔː", "ɹ"]),
    ];
    let w: Vec<char> = word.chars().collect();
    // silent final e
    let end = if w.len() > 2 && w[w.len() - 1] == 'e' && !"aeiou".contains(w[w.len() - 2]) {
        w.len() - 1
    } else {
        w.len()
    };
    let s: String = w[..end].iter().collect();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < s.len() {
        let rest = &s[i..];
        for (pat, syms) in DIGRAPHS {
            if rest.starts_with(pat) {
                out.extend(syms.iter().map(|x| x.to_string()));
                i += pat.len();
                continue 'outer;
            }
        }
        let c = rest.chars().next().unwrap();
        let syms: &[&str] = match c {
            'a' => &["æ"],
            'b' => &["b"],
            'c' => &["k"],
            'd' => &["d"],
            'e' => &["ɛ"],
            'f' => &["f"],
            'g' => &["ɡ"],
            'h' => &["h"],
            'i' => &["ɪ"],
            'j' => &["dʒ"],
            'k' => &["k"],
            'l' => &["l"],
            'm' => &["m"],
            'n' => &["n"],
            'o' => &["ɑː"],
            'p' => &["p"],
            'q' => &["k"],
            'r' => &["ɹ"],
            's' => &["s"],
            't' => &["t"],
            'u' => &["ʌ"],
            'v' => &["v"],
            'w' => &["w"],
            'x' => &["k", "s"],
            'y' if i == 0 => &["j"],
            'y' => &["i"],
            'z' => &["z"],
            _ => &[],
        };
        out.extend(syms.iter().map(|x| x.to_string()));
        i += c.len_utf8();
    }
    out
}

fn phonemize_latin(word: &str) -> Result<Vec<String>, String> {
    let lower = word.to_lowercase();
    if !lower.chars().all(|c| c.is_ascii_lowercase()) {
        return Err(format!("`{word}` contains characters outside a-z"));
    }
    if let Some(ipa) = english_lexicon().get(lower.as_str()) {
        return Ok(super::ipa::segment(ipa));
    }
    Ok(english_letter_to_sound(&lower))
}

/// Rule-based backend shipped with the crate.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinBackend;

impl PhonemizerBackend for BuiltinBackend {
    fn name(&self) -> &str {
        "builtin"
    }

    fn supports(&self, lang: Language) -> bool {
        lang != Language::Chhattisgarhi
    }

    fn phonemize_word(&self, word: &str, lang: Language) -> Result<Vec<String>, String> {
        let chars: Vec<char> = word.chars().collect();
        if chars.iter().all(|c| c.is_ascii_alphabetic()) {
            return phonemize_latin(word);
        }
        if chars.iter().any(|c| c.is_ascii()) {
            return Err(format!("mixed-script word `{word}`"));
        }
        phonemize_brahmic(&chars, lang)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ph(word: &str, lang: Language) -> Vec<String> {
        BuiltinBackend.phonemize_word(word, lang).unwrap()
    }

    #[test]
    fn hindi_words() {
        // namaste
        assert_eq!(ph("नमस्ते", Language::Hindi), vec!["n", "ə", "m", "ə", "s", "t̪", "eː"]);
        // kamal: final schwa deleted
        assert_eq!(ph("कमल", Language::Hindi), vec!["k", "ə", "m", "ə", "l"]);
        // hindi: anusvara before dental
        assert_eq!(ph("हिंदी", Language::Hindi), vec!["h", "ɪ", "n", "d̪", "iː"]);
        // single consonant keeps its vowel
        assert_eq!(ph("न", Language::Hindi), vec!["n", "ə"]);
    }

    #[test]
    fn nukta_forms() {
        assert_eq!(ph("\u{095B}", Language::Hindi), vec!["z", "ə"]);
        assert_eq!(ph("\u{091C}\u{093C}", Language::Hindi), vec!["z", "ə"]);
    }

    #[test]
    fn dravidian_keeps_final_vowel() {
        // telugu: "amma"
        assert_eq!(ph("అమ్మ", Language::Telugu), vec!["a", "m", "m", "a"]);
        // kannada: "kannada"
        assert_eq!(ph("ಕನ್ನಡ", Language::Kannada), vec!["k", "a", "n", "n", "a", "ɖ", "a"]);
    }

    #[test]
    fn bengali_inherent_vowel() {
        // "bangla"
        assert_eq!(ph("বাংলা", Language::Bengali), vec!["b", "a", "ŋ", "l", "a"]);
        // kamal
        assert_eq!(ph("কমল", Language::Bengali), vec!["k", "ɔ", "m", "ɔ", "l"]);
    }

    #[test]
    fn english_lexicon_and_rules() {
        assert_eq!(ph("hello", Language::English), vec!["h", "ə", "l", "oʊ"]);
        assert_eq!(ph("Hello", Language::English), vec!["h", "ə", "l", "oʊ"]);
        assert_eq!(ph("ship", Language::English), vec!["ʃ", "ɪ", "p"]);
        assert_eq!(ph("make", Language::English), vec!["m", "æ", "k"]);
    }

    #[test]
    fn unsupported_characters_fail() {
        assert!(BuiltinBackend.phonemize_word("日本", Language::Hindi).is_err());
        assert!(BuiltinBackend.phonemize_word("abc१", Language::Hindi).is_err());
        // digits are not normalized
        assert!(BuiltinBackend.phonemize_word("१२", Language::Hindi).is_err());
    }

    #[test]
    fn chhattisgarhi_is_not_a_backend_language() {
        assert!(!BuiltinBackend.supports(Language::Chhattisgarhi));
        assert!(BuiltinBackend.supports(Language::Hindi));
    }
}
