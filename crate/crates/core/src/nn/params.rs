//! Named, layer-tagged parameter tensors shared by the models and the
//! optimizer, plus seeded initialization.

use super::tape::{Data, Gradients, Tape, TensorId};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    /// clipping group, e.g. "enc.l0"
    pub layer: String,
    pub rows: usize,
    pub cols: usize, // 0 for vectors
    pub values: Vec<f64>,
}

impl ParamTensor {
    pub fn to_data(&self) -> Data {
        if self.cols == 0 {
            Data::Vec(Array1::from(self.values.clone()))
        } else {
            Data::Mat(
                Array2::from_shape_vec((self.rows, self.cols), self.values.clone())
                    .expect("shape matches values"),
            )
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// All parameters of one model. Order is fixed at construction, which keeps
/// serialization and optimizer state aligned.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamSet {
    tensors: Vec<ParamTensor>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    /// Rebuilds the name index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.clone(), i))
            .collect();
    }

    pub fn add_matrix<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        layer: &str,
        rows: usize,
        cols: usize,
        init_std: f64,
        rng: &mut R,
    ) -> usize {
        let values = (0..rows * cols)
            .map(|_| {
                let n: f64 = rng.sample(StandardNormal);
                n * init_std
            })
            .collect();
        self.push(ParamTensor {
            name: name.to_string(),
            layer: layer.to_string(),
            rows,
            cols,
            values,
        })
    }

    /// Bias vectors start at zero.
    pub fn add_vector(&mut self, name: &str, layer: &str, len: usize) -> usize {
        self.push(ParamTensor {
            name: name.to_string(),
            layer: layer.to_string(),
            rows: len,
            cols: 0,
            values: vec![0.0; len],
        })
    }

    fn push(&mut self, tensor: ParamTensor) -> usize {
        assert!(
            !self.index.contains_key(&tensor.name),
            "duplicate parameter {}",
            tensor.name
        );
        self.index.insert(tensor.name.clone(), self.tensors.len());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(ParamTensor::len).sum()
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn get(&self, idx: usize) -> &ParamTensor {
        &self.tensors[idx]
    }

    pub fn index_of(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn apply_delta(&mut self, idx: usize, delta: &[f64]) {
        let t = &mut self.tensors[idx];
        assert_eq!(t.values.len(), delta.len());
        for (v, d) in t.values.iter_mut().zip(delta) {
            *v += d;
        }
    }

    pub fn set_values(&mut self, idx: usize, values: Vec<f64>) {
        assert_eq!(self.tensors[idx].values.len(), values.len());
        self.tensors[idx].values = values;
    }

    /// Loads every tensor onto a tape as leaves; the returned binding maps
    /// parameter indices to tape node ids.
    pub fn bind(&self, tape: &mut Tape) -> TapeBinding {
        let ids = self
            .tensors
            .iter()
            .map(|t| match t.to_data() {
                Data::Vec(v) => tape.leaf_vec(v),
                Data::Mat(m) => tape.leaf_mat(m),
            })
            .collect();
        TapeBinding { ids }
    }
}

#[derive(Debug, Clone)]
pub struct TapeBinding {
    ids: Vec<TensorId>,
}

impl TapeBinding {
    pub fn id(&self, param_idx: usize) -> TensorId {
        self.ids[param_idx]
    }

    /// Flattened gradient per parameter tensor; zeros where the loss did not
    /// reach a tensor.
    pub fn collect_gradients(&self, params: &ParamSet, grads: &Gradients) -> Vec<Vec<f64>> {
        self.ids
            .iter()
            .enumerate()
            .map(|(idx, &node)| match grads.get(node) {
                Some(Data::Vec(v)) => v.to_vec(),
                Some(Data::Mat(m)) => m.iter().cloned().collect(),
                None => vec![0.0; params.get(idx).len()],
            })
            .collect()
    }
}
