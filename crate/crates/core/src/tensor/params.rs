use std::fs;
use std::ops::Index;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Scalar, Tape, Tensor, TensorError, Var};

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_FORMAT: &str = "cagnn-params";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable tensors in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub(crate) fn tensor_mut_at(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.tensors[i]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.tensors.iter()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Squared L2 norm over all parameters.
    pub fn l2_sq(&self) -> T {
        self.tensors.iter().map(Tensor::sq_norm).sum()
    }

    /// Registers every parameter as a differentiable leaf.
    pub fn bind(&self, tape: &Tape<T>) -> Bound {
        Bound(self.tensors.iter().map(|t| tape.leaf(t.clone(), true)).collect())
    }

    /// Registers every parameter as a constant (inference only).
    pub fn bind_frozen(&self, tape: &Tape<T>) -> Bound {
        Bound(self.tensors.iter().map(|t| tape.constant(t.clone())).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(n, t)| ParamEntry {
                    name: n.clone(),
                    shape: t.shape(),
                    values: t.to_f64_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TensorError> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(TensorError::Checkpoint(format!("unexpected format `{}`", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(TensorError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let mut store = Self::new();
        for e in &ck.params {
            store.add(e.name.clone(), Tensor::from_f64(e.shape[0], e.shape[1], &e.values)?);
        }
        Ok(store)
    }

    /// Copies values from `other` by name; shapes and name sets must match.
    pub fn load_values(&mut self, other: &ParamStore<T>) -> Result<(), TensorError> {
        if other.len() != self.len() {
            return Err(TensorError::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.len(),
                other.len()
            )));
        }
        for (name, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            let id = other
                .id(name)
                .ok_or_else(|| TensorError::UnknownParam(name.clone()))?;
            let src = other.get(id);
            if src.shape() != t.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "load_values",
                    lhs: t.shape(),
                    rhs: src.shape(),
                });
            }
            *t = src.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TensorError> {
        let json = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TensorError> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&ck)
    }
}

/// Tape handles for every parameter of a store, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

/// On-disk parameter manifest: name, shape and row-major values per tensor.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: Vec<ParamEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}
