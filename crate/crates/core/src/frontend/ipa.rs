//! Splitting IPA strings into phoneme symbols.

/// Two-character sequences treated as one phoneme.
const DIGRAPHS: &[&str] = &[
    "tʃ", "dʒ", "ts", "dz", "tɕ", "dʑ", "aɪ", "aʊ", "eɪ", "oʊ", "ɔɪ", "əʊ", "eə", "ɪə", "ʊə",
];

/// Characters that modify the preceding symbol instead of standing alone.
fn is_modifier(c: char) -> bool {
    matches!(
        c,
        'ː' | 'ˑ' | 'ʰ' | 'ʱ' | 'ʲ' | 'ʷ' | 'ˠ' | 'ˤ' | '̃' | '̪' | '̥' | '̩' | '̯' | '̆' | '̚' | '̤' | '̰'
    )
}

fn is_dropped(c: char) -> bool {
    c.is_whitespace()
        || matches!(c, 'ˈ' | 'ˌ' | '‿' | '_' | '-' | '\u{200c}' | '\u{200d}')
        || (c.is_ascii_punctuation() && c != '\'')
        || c == '\''
}

/// Segments an IPA string into symbols.
///
/// Stress marks and separators are dropped, length/aspiration marks and
/// combining diacritics attach to the previous symbol, tie bars join the
/// symbols on either side, and known affricates and diphthongs are kept whole.
pub fn segment(ipa: &str) -> Vec<String> {
    let chars: Vec<char> = ipa.chars().collect();
    let mut out: Vec<String> = Vec::new();
    let mut join_next = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\u{0361}' || c == '\u{035c}' {
            join_next = true;
            i += 1;
            continue;
        }
        if is_dropped(c) {
            i += 1;
            continue;
        }
        if is_modifier(c) {
            if let Some(last) = out.last_mut() {
                last.push(c);
            }
            i += 1;
            continue;
        }
        if join_next {
            join_next = false;
            if let Some(last) = out.last_mut() {
                last.push(c);
                i += 1;
                continue;
            }
        }
        if i + 1 < chars.len() {
            let pair: String = [c, chars[i + 1]].iter().collect();
            if DIGRAPHS.contains(&pair.as_str()) {
                out.push(pair);
                i += 2;
                continue;
            }
        }
        out.push(c.to_string());
        i += 1;
    }
    out
}
