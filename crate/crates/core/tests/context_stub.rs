use mmtts::context::{
    create_extractor, extract_word_features, replicate_to_phonemes, ContextExtractorSpec, ExtractorKind,
};
use mmtts::frontend::{phonemize, resolve_backend, BuiltinBackend, FrontendOptions};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

/// Recomputes a stub feature row from the keying rule, byte by byte.
fn oracle_row(identifier: &str, word: &str, position: u64, dim: u32) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim)
        .map(|k| {
            let mut bytes = Vec::new();
            bytes.extend_from_slice(identifier.as_bytes());
            bytes.push(0x1f);
            bytes.extend_from_slice(word.as_bytes());
            bytes.push(0x1f);
            bytes.extend_from_slice(&position.to_le_bytes());
            bytes.extend_from_slice(&k.to_le_bytes());
            let d = Sha256::digest(&bytes);
            let mut x = 0u64;
            for (i, b) in d[..8].iter().enumerate() {
                x |= (*b as u64) << (8 * i);
            }
            x as f64 / 2f64.powi(64) * 2.0 - 1.0
        })
        .collect();
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| v / n).collect()
}

fn stub(dim: usize) -> ContextExtractorSpec {
    ContextExtractorSpec {
        kind: ExtractorKind::Stub,
        dim,
        identifier: "42".into(),
    }
}

#[test]
fn stub_matches_oracle() {
    let tag = resolve_backend("hindi").unwrap();
    let mut ex = create_extractor(&stub(16)).unwrap();
    let feats = extract_word_features("नमस्ते दुनिया, नमस्ते", tag, ex.as_mut(), 16).unwrap();
    for (p, w) in ["नमस्ते", "दुनिया", "नमस्ते"].iter().enumerate() {
        let want = oracle_row("42", w, p as u64, 16);
        for k in 0..16 {
            assert_eq!(feats.matrix[[p, k]], want[k] as f32, "word {p} component {k}");
        }
    }
}

#[test]
fn frozen_stub_values() {
    // oracle_row("42", "hello", 0, 4), frozen
    let frozen = [-0.414_812_06_f32, -0.025_303_146, -0.855_400_56, -0.309_161_07];
    let tag = resolve_backend("english").unwrap();
    let mut ex = create_extractor(&stub(4)).unwrap();
    let feats = extract_word_features("hello", tag, ex.as_mut(), 4).unwrap();
    let row: Vec<f32> = feats.matrix.row(0).to_vec();
    assert_eq!(row, frozen);
    assert!(((row.iter().map(|v| v * v).sum::<f32>()) - 1.0).abs() < 1e-6);
}

#[test]
fn chhattisgarhi_features_come_from_raw_text() {
    let raw = "कमल पानी";
    let mut ex = create_extractor(&stub(8)).unwrap();
    let c = extract_word_features(raw, resolve_backend("chhattisgarhi").unwrap(), ex.as_mut(), 8).unwrap();
    let h = extract_word_features(raw, resolve_backend("hindi").unwrap(), ex.as_mut(), 8).unwrap();
    assert_eq!(c.matrix, h.matrix);
    assert_eq!(c.matrix.row(1).to_vec(), oracle_row("42", "पानी", 1, 8).iter().map(|&v| v as f32).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn replication_follows_spans(words in proptest::collection::vec(proptest::sample::select(vec![
        "hello", "world", "the", "river", "speech", "voice", "light", "music", "ship", "quiet",
    ]), 1..8)) {
        let text = words.join(" ");
        let tag = resolve_backend("english").unwrap();
        let seq = phonemize(&text, tag, &BuiltinBackend, FrontendOptions::default()).unwrap();
        let mut ex = create_extractor(&stub(6)).unwrap();
        let w = extract_word_features(&text, tag, ex.as_mut(), 6).unwrap();
        let r = replicate_to_phonemes(&w, &seq).unwrap();
        prop_assert_eq!(r.rows(), seq.len());
        let mut i = 0;
        for span in &seq.word_spans {
            for _ in 0..span.len {
                prop_assert_eq!(r.matrix.row(i), w.matrix.row(span.word_index));
                i += 1;
            }
        }
    }
}
