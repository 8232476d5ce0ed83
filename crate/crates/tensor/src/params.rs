use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::{Result, Scalar, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter matrices, addressed by hierarchical dotted names.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Array2<T>>,
    by_name: BTreeMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    /// Inserts a parameter, replacing the value if the name already exists.
    pub fn insert(&mut self, name: &str, value: Array2<T>) -> ParamId {
        if let Some(&id) = self.by_name.get(name) {
            self.values[id.0] = value;
            return id;
        }
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.values[id.0]
    }

    pub fn get(&self, name: &str) -> Option<&Array2<T>> {
        self.id(name).map(|id| &self.values[id.0])
    }

    /// Replaces a value by name, checking the shape.
    pub fn set(&mut self, name: &str, value: Array2<T>) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        let expected = self.values[id.0].dim();
        if value.dim() != expected {
            return Err(TensorError::ParamShape {
                name: name.to_string(),
                expected,
                found: value.dim(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    /// Parameters in name order.
    pub fn iter_sorted(&self) -> impl Iterator<Item = (&str, &Array2<T>)> + '_ {
        self.by_name
            .iter()
            .map(|(name, id)| (name.as_str(), &self.values[id.0]))
    }

    /// Ids whose name starts with `prefix`.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.ids().filter(move |id| self.names[id.0].starts_with(prefix))
    }

    pub fn num_elements(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

/// Creates parameters under a name prefix with per-name deterministic init.
///
/// The random stream of every parameter is keyed by `(seed, full name)`,
/// so adding or removing one module never perturbs the others.
pub struct ParamBuilder<'a, T: Scalar> {
    store: &'a mut ParamStore<T>,
    prefix: String,
    seed: u64,
}

impl<'a, T: Scalar> ParamBuilder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        Self {
            store,
            prefix: String::new(),
            seed,
        }
    }

    pub fn sub(&mut self, name: &str) -> ParamBuilder<'_, T> {
        let prefix = self.full_name(name);
        ParamBuilder {
            store: self.store,
            prefix,
            seed: self.seed,
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    fn rng_for(&self, full: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(full.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    pub fn zeros(&mut self, name: &str, shape: (usize, usize)) -> ParamId {
        let full = self.full_name(name);
        self.store.insert(&full, Array2::zeros(shape))
    }

    pub fn ones(&mut self, name: &str, shape: (usize, usize)) -> ParamId {
        let full = self.full_name(name);
        self.store.insert(&full, Array2::ones(shape))
    }

    pub fn normal(&mut self, name: &str, shape: (usize, usize), std: f64) -> ParamId {
        let full = self.full_name(name);
        let mut rng = self.rng_for(&full);
        let value = Array2::from_shape_simple_fn(shape, || {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z * std)
        });
        self.store.insert(&full, value)
    }

    pub fn uniform(&mut self, name: &str, shape: (usize, usize), bound: f64) -> ParamId {
        let full = self.full_name(name);
        let mut rng = self.rng_for(&full);
        let value =
            Array2::from_shape_simple_fn(shape, || T::lit(rng.random_range(-bound..bound)));
        self.store.insert(&full, value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_keyed_by_name() {
        let mut a = ParamStore::<f32>::new();
        let mut pb = ParamBuilder::new(&mut a, 7);
        pb.sub("x").normal("w", (3, 3), 1.0);
        pb.sub("y").normal("w", (3, 3), 1.0);

        let mut b = ParamStore::<f32>::new();
        let mut pb = ParamBuilder::new(&mut b, 7);
        pb.sub("y").normal("w", (3, 3), 1.0);

        assert_eq!(a.get("y.w"), b.get("y.w"));
        assert_ne!(a.get("x.w"), a.get("y.w"));
    }

    #[test]
    fn set_checks_shape() {
        let mut s = ParamStore::<f32>::new();
        s.insert("a", Array2::zeros((2, 2)));
        assert!(s.set("a", Array2::zeros((2, 3))).is_err());
        assert!(s.set("b", Array2::zeros((2, 2))).is_err());
        assert!(s.set("a", Array2::ones((2, 2))).is_ok());
    }
}
