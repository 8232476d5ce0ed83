//! Word-level contextual features, replicated to phoneme rate and fused
//! into the phoneme embeddings ahead of the text encoder.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use mmtts_tensor::nn::Linear;
use mmtts_tensor::{Graph, ParamBuilder, Scalar, Var};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::frontend::{split_words, LanguageTag, PhonemeSequence, Word};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Pretrained,
    Stub,
}

/// Which extractor to use and its output width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextExtractorSpec {
    pub kind: ExtractorKind,
    pub dim: usize,
    /// Model name for `pretrained`, seed string for `stub`.
    pub identifier: String,
}

impl Default for ContextExtractorSpec {
    fn default() -> Self {
        Self {
            kind: ExtractorKind::Stub,
            dim: 32,
            identifier: "42".into(),
        }
    }
}

impl ContextExtractorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("context.dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureLevel {
    Word,
    Phoneme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextFeatures {
    pub level: FeatureLevel,
    pub matrix: Array2<f32>,
}

impl ContextFeatures {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Produces one feature row per word.
pub trait ContextExtractor: Send {
    fn dim(&self) -> usize;
    fn extract(&mut self, words: &[Word], tag: LanguageTag) -> Result<Array2<f32>>;
}

/// Deterministic stand-in for a pretrained encoder.
///
/// Component `k` of the feature of word `w` at position `p` is the first
/// eight bytes (little endian) of `SHA-256(id || 0x1f || w || 0x1f || p as
/// u64 LE || k as u32 LE)` mapped to `[-1, 1)`; each row is then scaled to
/// unit L2 norm.
#[derive(Debug, Clone)]
pub struct StubExtractor {
    identifier: String,
    dim: usize,
}

impl StubExtractor {
    pub fn new(identifier: impl Into<String>, dim: usize) -> Self {
        Self {
            identifier: identifier.into(),
            dim,
        }
    }

    fn row(&self, word: &str, position: usize) -> Vec<f64> {
        let mut prefix = Sha256::new();
        prefix.update(self.identifier.as_bytes());
        prefix.update([0x1f]);
        prefix.update(word.as_bytes());
        prefix.update([0x1f]);
        prefix.update((position as u64).to_le_bytes());
        let mut row: Vec<f64> = (0..self.dim as u32)
            .map(|k| {
                let mut h = prefix.clone();
                h.update(k.to_le_bytes());
                let d = h.finalize();
                let bits = u64::from_le_bytes(d[..8].try_into().unwrap());
                (bits as f64 / 18_446_744_073_709_551_616.0) * 2.0 - 1.0
            })
            .collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
        row
    }
}

impl ContextExtractor for StubExtractor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&mut self, words: &[Word], _tag: LanguageTag) -> Result<Array2<f32>> {
        let mut out = Array2::zeros((words.len(), self.dim));
        for (p, w) in words.iter().enumerate() {
            for (k, v) in self.row(&w.text, p).into_iter().enumerate() {
                out[[p, k]] = v as f32;
            }
        }
        Ok(out)
    }
}

/// Remembers extractor output per `(language, text)` for the process lifetime.
pub struct Memoized<E> {
    inner: E,
    cache: HashMap<(String, String), Array2<f32>>,
}

impl<E: ContextExtractor> Memoized<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: HashMap::new(),
        }
    }
}

impl<E: ContextExtractor> ContextExtractor for Memoized<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn extract(&mut self, words: &[Word], tag: LanguageTag) -> Result<Array2<f32>> {
        let key_text = words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ");
        let key = (tag.code.code().to_string(), key_text);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let out = self.inner.extract(words, tag)?;
        self.cache.insert(key, out.clone());
        Ok(out)
    }
}

pub type PretrainedFactory = fn(identifier: &str, dim: usize) -> Result<Box<dyn ContextExtractor>>;

fn registry() -> &'static Mutex<HashMap<String, PretrainedFactory>> {
    static REGISTRY: OnceLock<Mutex<HashMap<String, PretrainedFactory>>> = OnceLock::new();
    REGISTRY.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Makes a pretrained extractor loadable by its model identifier.
pub fn register_pretrained(identifier: &str, factory: PretrainedFactory) {
    registry()
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(identifier.to_string(), factory);
}

pub fn create_extractor(spec: &ContextExtractorSpec) -> Result<Box<dyn ContextExtractor>> {
    spec.validate()?;
    match spec.kind {
        ExtractorKind::Stub => Ok(Box::new(StubExtractor::new(spec.identifier.clone(), spec.dim))),
        ExtractorKind::Pretrained => {
            let factory = registry()
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .get(&spec.identifier)
                .copied()
                .ok_or_else(|| {
                    Error::ExtractorUnavailable(format!(
                        "no pretrained extractor registered for `{}`",
                        spec.identifier
                    ))
                })?;
            factory(&spec.identifier, spec.dim)
        }
    }
}

/// Mean-pools subword vectors into word vectors. `owners[i]` is the word
/// index of subword row `i`; words with no subwords get a zero row.
pub fn mean_pool_subwords(subwords: &Array2<f32>, owners: &[usize], word_count: usize) -> Result<Array2<f32>> {
    if owners.len() != subwords.nrows() {
        return Err(Error::LengthMismatch {
            left: owners.len(),
            right: subwords.nrows(),
        });
    }
    let mut out = Array2::<f32>::zeros((word_count, subwords.ncols()));
    let mut counts = vec![0usize; word_count];
    for (row, &w) in subwords.axis_iter(Axis(0)).zip(owners) {
        if w >= word_count {
            return Err(Error::OutOfRange {
                what: "word",
                id: w,
                limit: word_count,
            });
        }
        let mut dst = out.row_mut(w);
        dst += &row;
        counts[w] += 1;
    }
    for (mut row, &c) in out.axis_iter_mut(Axis(0)).zip(&counts) {
        if c > 0 {
            row.mapv_inplace(|v| v / c as f32);
        }
    }
    Ok(out)
}

/// Word-level features for `text`, one row per whitespace word.
pub fn extract_word_features(
    text: &str,
    tag: LanguageTag,
    extractor: &mut dyn ContextExtractor,
    expected_dim: usize,
) -> Result<ContextFeatures> {
    let words = split_words(text);
    if words.is_empty() {
        return Err(Error::EmptyText);
    }
    let matrix = extractor.extract(&words, tag)?;
    if matrix.ncols() != expected_dim {
        return Err(Error::DimensionMismatch {
            expected: expected_dim,
            found: matrix.ncols(),
        });
    }
    if matrix.nrows() != words.len() {
        return Err(Error::WordCountMismatch {
            features: matrix.nrows(),
            words: words.len(),
        });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("context features".into()));
    }
    Ok(ContextFeatures {
        level: FeatureLevel::Word,
        matrix,
    })
}

/// Copies each word's row onto every phoneme of that word.
pub fn replicate_to_phonemes(words: &ContextFeatures, seq: &PhonemeSequence) -> Result<ContextFeatures> {
    if words.level != FeatureLevel::Word || words.rows() != seq.word_count() {
        return Err(Error::WordCountMismatch {
            features: words.rows(),
            words: seq.word_count(),
        });
    }
    let owners = seq.phoneme_owners();
    let matrix = words.matrix.select(Axis(0), &owners);
    Ok(ContextFeatures {
        level: FeatureLevel::Phoneme,
        matrix,
    })
}

/// Learned projection of phoneme-level context added to phoneme embeddings.
/// The projection starts at zero, so fusion is initially the identity.
#[derive(Debug, Clone, Copy)]
pub struct ContextFusion {
    pub proj: Linear,
}

impl ContextFusion {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, context_dim: usize, hidden: usize) -> Self {
        Self {
            proj: Linear::zeros(pb, "context_proj", context_dim, hidden),
        }
    }

    pub fn context_dim(&self) -> usize {
        self.proj.in_dim
    }

    /// `embeddings + Linear(context)`; both are `T x H` / `T x dim` graph nodes.
    pub fn fuse<T: Scalar>(&self, g: &mut Graph<'_, T>, embeddings: Var, context: Var) -> Result<Var> {
        let (t, _) = g.shape(embeddings);
        let (tc, dim) = g.shape(context);
        if t != tc {
            return Err(Error::LengthMismatch { left: t, right: tc });
        }
        if dim != self.proj.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.proj.in_dim,
                found: dim,
            });
        }
        let projected = self.proj.forward(g, context);
        Ok(g.add(embeddings, projected))
    }
}

/// Optional fusion: `None` is the context-free pass-through.
pub fn fuse<T: Scalar>(
    fusion: Option<&ContextFusion>,
    g: &mut Graph<'_, T>,
    embeddings: Var,
    context: Option<Var>,
) -> Result<Var> {
    match (fusion, context) {
        (Some(f), Some(c)) => f.fuse(g, embeddings, c),
        (None, None) => Ok(embeddings),
        (fusion, _) => Err(Error::ContextPresence {
            use_context: fusion.is_some(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{resolve_backend, WordSpan};
    use mmtts_tensor::ParamStore;
    use ndarray::array;

    fn tag() -> LanguageTag {
        resolve_backend("english").unwrap()
    }

    fn seq_with_spans(spans: &[usize]) -> PhonemeSequence {
        let total: usize = spans.iter().sum();
        PhonemeSequence {
            phonemes: vec!["a".into(); total],
            ids: Vec::new(),
            word_spans: spans
                .iter()
                .enumerate()
                .map(|(i, &len)| WordSpan { word_index: i, len })
                .collect(),
        }
    }

    #[test]
    fn stub_shape_and_determinism() {
        let mut ex = StubExtractor::new("42", 8);
        let a = extract_word_features("the quiet river", tag(), &mut ex, 8).unwrap();
        assert_eq!(a.matrix.dim(), (3, 8));
        assert!(a.matrix.iter().all(|v| v.is_finite()));
        let b = extract_word_features("the quiet river", tag(), &mut ex, 8).unwrap();
        assert_eq!(a, b);
        // repeated word at another position gets a different row
        let c = extract_word_features("the the", tag(), &mut ex, 8).unwrap();
        assert_ne!(c.matrix.row(0), c.matrix.row(1));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut ex = StubExtractor::new("42", 8);
        let err = extract_word_features("a b", tag(), &mut ex, 16).unwrap_err();
        assert_eq!(err.kind(), "dimension-mismatch");
    }

    #[test]
    fn pretrained_without_plugin_is_unavailable() {
        let spec = ContextExtractorSpec {
            kind: ExtractorKind::Pretrained,
            dim: 768,
            identifier: "ai4bharat/IndicBERTv2-MLM-only".into(),
        };
        assert_eq!(create_extractor(&spec).err().unwrap().kind(), "extractor-unavailable");
    }

    #[test]
    fn registered_pretrained_is_used() {
        fn factory(id: &str, dim: usize) -> Result<Box<dyn ContextExtractor>> {
            Ok(Box::new(StubExtractor::new(format!("plugin:{id}"), dim)))
        }
        register_pretrained("test-model", factory);
        let spec = ContextExtractorSpec {
            kind: ExtractorKind::Pretrained,
            dim: 4,
            identifier: "test-model".into(),
        };
        let mut ex = create_extractor(&spec).unwrap();
        let f = extract_word_features("one two", tag(), ex.as_mut(), 4).unwrap();
        assert_eq!(f.rows(), 2);
    }

    #[test]
    fn memoized_matches_inner() {
        let mut plain = StubExtractor::new("7", 5);
        let mut memo = Memoized::new(StubExtractor::new("7", 5));
        let words = split_words("sun rain sun");
        let a = plain.extract(&words, tag()).unwrap();
        assert_eq!(memo.extract(&words, tag()).unwrap(), a);
        assert_eq!(memo.extract(&words, tag()).unwrap(), a);
    }

    #[test]
    fn replicate_definition() {
        let words = ContextFeatures {
            level: FeatureLevel::Word,
            matrix: array![[1.0, 2.0], [3.0, 4.0]],
        };
        let out = replicate_to_phonemes(&words, &seq_with_spans(&[3, 2])).unwrap();
        assert_eq!(out.level, FeatureLevel::Phoneme);
        assert_eq!(
            out.matrix,
            array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [3.0, 4.0], [3.0, 4.0]]
        );
    }

    #[test]
    fn replicate_single_word() {
        let words = ContextFeatures {
            level: FeatureLevel::Word,
            matrix: array![[0.5, -0.5, 1.0]],
        };
        let out = replicate_to_phonemes(&words, &seq_with_spans(&[4])).unwrap();
        assert_eq!(out.rows(), 4);
        for row in out.matrix.rows() {
            assert_eq!(row, words.matrix.row(0));
        }
    }

    #[test]
    fn replicate_word_count_mismatch() {
        let words = ContextFeatures {
            level: FeatureLevel::Word,
            matrix: Array2::zeros((2, 3)),
        };
        let err = replicate_to_phonemes(&words, &seq_with_spans(&[1, 1, 1])).unwrap_err();
        assert_eq!(err.kind(), "word-count-mismatch");
    }

    #[test]
    fn mean_pooling() {
        let sub = array![[1.0, 0.0], [3.0, 2.0], [5.0, 5.0]];
        let pooled = mean_pool_subwords(&sub, &[0, 0, 1], 2).unwrap();
        assert_eq!(pooled, array![[2.0, 1.0], [5.0, 5.0]]);
        assert!(mean_pool_subwords(&sub, &[0, 2, 1], 2).is_err());
    }

    #[test]
    fn zero_projection_is_identity_and_shape() {
        let mut store = ParamStore::<f32>::new();
        let fusion = ContextFusion::new(&mut ParamBuilder::new(&mut store, 1), 8, 16);
        let emb = Array2::from_shape_fn((5, 16), |(i, j)| (i as f32 * 0.37 - j as f32 * 0.11).sin());
        let ctx = Array2::from_shape_fn((5, 8), |(i, j)| (i * j) as f32 * 0.1 - 0.3);
        let mut g = Graph::new(&store);
        let e = g.constant(emb.clone());
        let c = g.constant(ctx);
        let out = fuse(Some(&fusion), &mut g, e, Some(c)).unwrap();
        assert_eq!(g.shape(out), (5, 16));
        assert_eq!(g.value(out), &emb);
        let passthrough = fuse(None, &mut g, e, None).unwrap();
        assert_eq!(g.value(passthrough), &emb);
    }

    #[test]
    fn fuse_length_and_presence_errors() {
        let mut store = ParamStore::<f32>::new();
        let fusion = ContextFusion::new(&mut ParamBuilder::new(&mut store, 1), 4, 6);
        let mut g = Graph::new(&store);
        let e = g.constant(Array2::zeros((5, 6)));
        let c = g.constant(Array2::zeros((4, 4)));
        assert_eq!(fusion.fuse(&mut g, e, c).unwrap_err().kind(), "length-mismatch");
        assert_eq!(fuse(None, &mut g, e, Some(c)).unwrap_err().kind(), "context-presence-mismatch");
        assert_eq!(fuse(Some(&fusion), &mut g, e, None).unwrap_err().kind(), "context-presence-mismatch");
    }
}
