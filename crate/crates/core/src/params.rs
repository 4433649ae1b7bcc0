use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::autograd::{Tape, Var};
use crate::tensor::Mat;

/// Named parameter tensors in deterministic (sorted) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Mat) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Mat)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn extend(&mut self, other: ParamStore) {
        self.tensors.extend(other.tensors);
    }

    pub fn num_values(&self, prefix: &str) -> usize {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.data.len())
            .sum()
    }

    /// SHA-256 over names, shapes and exact bit patterns of every tensor whose
    /// name starts with `prefix`.
    pub fn digest(&self, prefix: &str) -> String {
        let mut h = Sha256::new();
        for (name, m) in self.tensors.iter().filter(|(k, _)| k.starts_with(prefix)) {
            h.update(name.as_bytes());
            h.update((m.rows as u64).to_le_bytes());
            h.update((m.cols as u64).to_le_bytes());
            for x in &m.data {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Rounds every value to the nearest `f32`, the storage precision of
    /// checkpoints.
    pub fn round_to_f32(&mut self) {
        for m in self.tensors.values_mut() {
            m.data.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }
}

/// Parameters placed on a tape as leaves.
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Puts every tensor on `tape`; those accepted by `trainable` become
    /// gradient-carrying leaves, the rest constants.
    pub fn new(tape: &mut Tape, store: &ParamStore, trainable: impl Fn(&str) -> bool) -> Self {
        let vars = store
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), trainable(k))))
            .collect();
        Self { vars }
    }

    /// Binds only the tensors whose names start with `prefix`.
    pub fn with_prefix(
        tape: &mut Tape,
        store: &ParamStore,
        prefix: &str,
        trainable: impl Fn(&str) -> bool,
    ) -> Self {
        let vars = store
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), trainable(k))))
            .collect();
        Self { vars }
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}
