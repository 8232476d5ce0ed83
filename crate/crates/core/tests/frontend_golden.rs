//! Frozen phonemizer and encoder outputs. Run with `MMTTS_BLESS=1` to
//! rewrite the golden files after an intentional frontend change.

use std::path::PathBuf;

use mmtts::data::{generate_synthetic_corpus, load_manifest, SyntheticOptions};
use mmtts::frontend::{
    phonemize, resolve_backend, BuiltinBackend, FrontendOptions, PhonemeSequence, PhonemeVocabulary,
    BOUNDARY_ID, PAD_ID, UNKNOWN_ID,
};
use mmtts::pipeline::{FrontendConfig, TextFrontend};
use mmtts::train::build_vocabulary;
use proptest::prelude::*;
use serde::{Deserialize, Serialize};

const SENTENCES: &[(&str, &str)] = &[
    ("english", "hello"),
    ("english", "Hello world, this is a test."),
    ("english", "The quick brown fox jumps over the lazy dog"),
    ("hindi", "नमस्ते दुनिया"),
    ("hindi", "मेरा नाम राम है।"),
    ("chhattisgarhi", "तुमन कइसे हव"),
    ("marathi", "माझे नाव सीता आहे"),
    ("bengali", "আমার সোনার বাংলা"),
    ("kannada", "ನಮಸ್ಕಾರ ಗೆಳೆಯ"),
    ("telugu", "నమస్కారం మిత్రమా"),
];

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Golden {
    lang: String,
    text: String,
    phonemes: Vec<String>,
    word_spans: Vec<(usize, usize)>,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct GoldenIds {
    vocabulary_tsv: String,
    text: String,
    ids: Vec<u32>,
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn blessing() -> bool {
    std::env::var_os("MMTTS_BLESS").is_some()
}

fn check_golden<T: Serialize + for<'de> Deserialize<'de> + PartialEq + std::fmt::Debug>(name: &str, actual: &T) {
    let path = golden_path(name);
    if blessing() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(actual).unwrap() + "\n").unwrap();
        return;
    }
    let frozen: T = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(&frozen, actual, "output differs from {}", path.display());
}

fn run(lang: &str, text: &str) -> PhonemeSequence {
    phonemize(text, resolve_backend(lang).unwrap(), &BuiltinBackend, FrontendOptions::default()).unwrap()
}

#[test]
fn phonemizer_matches_golden_file() {
    let actual: Vec<Golden> = SENTENCES
        .iter()
        .map(|&(lang, text)| {
            let seq = run(lang, text);
            Golden {
                lang: lang.into(),
                text: text.into(),
                phonemes: seq.phonemes.clone(),
                word_spans: seq.word_spans.iter().map(|s| (s.word_index, s.len)).collect(),
            }
        })
        .collect();
    check_golden("phonemes.json", &actual);
}

#[test]
fn hello_is_four_phonemes_in_one_word() {
    let seq = run("english", "hello");
    assert_eq!(seq.phonemes, ["h", "ə", "l", "oʊ"]);
    assert_eq!(seq.word_spans.len(), 1);
    assert_eq!((seq.word_spans[0].word_index, seq.word_spans[0].len), (0, 4));
}

#[test]
fn chhattisgarhi_reads_like_hindi() {
    for text in ["तुमन कइसे हव", "नमस्ते दुनिया"] {
        assert_eq!(run("chhattisgarhi", text), run("hindi", text));
    }
}

#[test]
fn english_sentence_ids_match_golden_file() {
    let corpus: Vec<PhonemeSequence> = SENTENCES.iter().map(|&(l, t)| run(l, t)).collect();
    let vocab = PhonemeVocabulary::build(&corpus).unwrap();
    let text = "The quick brown fox jumps over the lazy dog";
    let (encoded, unknown) = vocab.encode(&run("english", text));
    assert_eq!(unknown, 0);
    let actual = GoldenIds {
        vocabulary_tsv: vocab.to_tsv(),
        text: text.into(),
        ids: encoded.ids,
    };
    check_golden("english_ids.json", &actual);
}

#[test]
fn bundled_corpus_is_closed_under_its_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_synthetic_corpus(dir.path(), 1234, &SyntheticOptions::default()).unwrap();
    let manifest = load_manifest(&path).unwrap();
    assert_eq!(manifest.languages().len(), 7);
    let fe = TextFrontend::new(&FrontendConfig::default(), None).unwrap();
    let vocab = build_vocabulary(&manifest, &fe).unwrap();
    for u in &manifest.utterances {
        let (_, seq) = fe.phonemize(&u.text, u.language.code()).unwrap();
        let (encoded, unknown) = vocab.encode(&seq);
        assert_eq!(unknown, 0, "{}", u.id);
        assert!(encoded.ids.iter().all(|&i| i != PAD_ID && i != UNKNOWN_ID && i != BOUNDARY_ID));
        for (id, sym) in encoded.ids.iter().zip(&seq.phonemes) {
            assert_eq!(vocab.symbol(*id), Some(sym.as_str()));
        }
    }
}

fn hindi_word() -> impl Strategy<Value = String> {
    let consonants: Vec<char> = "कखगघचछजझटठडढतथदधनपफबभमयरलवशसह".chars().collect();
    let signs: Vec<&'static str> = vec!["", "ा", "ि", "ी", "ु", "ू", "े", "ै", "ो", "ौ", "ं", "्"];
    proptest::collection::vec((proptest::sample::select(consonants), proptest::sample::select(signs)), 1..5).prop_map(
        |parts| {
            let mut w: String = parts.iter().map(|(c, s)| format!("{c}{s}")).collect();
            // no word-final virama
            if w.ends_with('्') {
                w.pop();
            }
            w
        },
    )
}

proptest! {
    #[test]
    fn spans_partition_english_text(words in proptest::collection::vec("[a-z]{1,9}", 1..8)) {
        let text = words.join(" ");
        let seq = run("english", &text);
        prop_assert_eq!(seq.word_spans.len(), words.len());
        prop_assert_eq!(seq.word_spans.iter().map(|s| s.len).sum::<usize>(), seq.len());
        for (i, s) in seq.word_spans.iter().enumerate() {
            prop_assert_eq!(s.word_index, i);
        }
        prop_assert!(seq.check().is_ok());
    }

    #[test]
    fn spans_partition_hindi_text(words in proptest::collection::vec(hindi_word(), 1..6)) {
        let text = words.join(" ");
        for lang in ["hindi", "chhattisgarhi", "marathi"] {
            let seq = run(lang, &text);
            prop_assert_eq!(seq.word_spans.len(), words.len());
            prop_assert!(seq.check().is_ok());
        }
    }

    #[test]
    fn encode_preserves_length(words in proptest::collection::vec("[a-z]{1,6}", 1..6)) {
        let seq = run("english", &words.join(" "));
        let vocab = PhonemeVocabulary::build(std::slice::from_ref(&seq)).unwrap();
        let (encoded, unknown) = vocab.encode(&seq);
        prop_assert_eq!(unknown, 0);
        prop_assert_eq!(encoded.ids.len(), seq.len());
        prop_assert!(encoded.ids.iter().all(|&i| i != PAD_ID));
    }
}
