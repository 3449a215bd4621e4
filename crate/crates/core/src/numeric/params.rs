use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Graph, NumericError, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Registers every parameter on `graph`; the returned vector is indexed
    /// by [`ParamId::index`].
    pub fn bind(&self, graph: &mut Graph) -> BoundParams {
        BoundParams(self.tensors.iter().map(|t| graph.param(t.clone())).collect())
    }

    /// Replaces all values from another set with the same names and shapes.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<(), NumericError> {
        if self.names != other.names {
            return Err(NumericError::ParamLayout(format!(
                "expected {} named tensors, found {}",
                self.names.len(),
                other.names.len()
            )));
        }
        for (i, (mine, theirs)) in self.tensors.iter_mut().zip(&other.tensors).enumerate() {
            if mine.shape() != theirs.shape() {
                return Err(NumericError::ParamLayout(format!(
                    "{}: shape {:?} vs {:?}",
                    self.names[i],
                    mine.shape(),
                    theirs.shape()
                )));
            }
            *mine = theirs.clone();
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BoundParams(Vec<Var>);

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

/// Affine map `y = x W^T + b` with `W: [out x in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Gaussian weights scaled by `1/sqrt(in)`, zero bias.
    pub fn init<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, 1.0 / (in_dim as f64).sqrt()).expect("valid std");
        let w: Vec<f64> = (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect();
        let weight = params.add(
            format!("{name}.weight"),
            Tensor::matrix(out_dim, in_dim, w).expect("shape"),
        );
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, bound: &BoundParams, x: Var) -> Result<Var, NumericError> {
        g.linear(x, bound.var(self.weight), bound.var(self.bias))
    }

    /// Plain evaluation without recording.
    pub fn apply(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor, NumericError> {
        x.matmul_t(params.get(self.weight))?
            .add_row_vector(params.get(self.bias))
    }

    pub fn zero(&self, params: &mut ParamSet) {
        params.get_mut(self.weight).data_mut().fill(0.0);
        params.get_mut(self.bias).data_mut().fill(0.0);
    }
}
