use rand::Rng;

use crate::{Error, Result, Tensor};

/// Index into a [`ParamSet`], stable for the set's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A named, trainable tensor.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

/// An ordered collection of uniquely-named parameters.
///
/// Iteration order is by name, so optimizer updates, gradient accumulation
/// and checkpoints are deterministic regardless of insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    // Sorted by name; ParamIds index `entries` through `by_id`.
    entries: Vec<Parameter>,
    ids: Vec<usize>, // ParamId -> position in `entries`
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a parameter, enforcing name uniqueness.
    pub fn insert(&mut self, name: &str, mut tensor: Tensor) -> Result<ParamId> {
        if self.position(name).is_some() {
            return Err(Error::Contract(format!("duplicate parameter name {name:?}")));
        }
        tensor.requires_grad = true;
        let insert_at = self
            .entries
            .binary_search_by(|p| p.name.as_str().cmp(name))
            .unwrap_err();
        // Positions at or after the insertion point shift right.
        for pos in &mut self.ids {
            if *pos >= insert_at {
                *pos += 1;
            }
        }
        self.entries.insert(
            insert_at,
            Parameter {
                name: name.to_string(),
                tensor,
            },
        );
        let id = ParamId(self.ids.len());
        self.ids.push(insert_at);
        Ok(id)
    }

    /// Xavier-uniform init in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn insert_xavier<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let values: Vec<f64> = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        self.insert(name, Tensor::matrix(rows, cols, values)?)
    }

    pub fn insert_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<ParamId> {
        self.insert(name, Tensor::zeros(shape)?)
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.entries
            .binary_search_by(|p| p.name.as_str().cmp(name))
            .ok()
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        let pos = self.position(name)?;
        self.ids.iter().position(|&p| p == pos).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.entries[self.ids[id.0]]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.entries[self.ids[id.0]]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.position(name).map(|pos| &self.entries[pos])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parameters in name order.
    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.entries.iter_mut()
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.entries {
            p.tensor.clear_grad();
        }
    }

    /// Give parameters that received no gradient an explicit zero gradient.
    pub fn fill_missing_grads(&mut self) {
        for p in &mut self.entries {
            if p.tensor.grad.is_none() {
                p.tensor.grad = Some(vec![0.0; p.tensor.values.len()]);
            }
        }
    }

    /// Euclidean norm over all gradients; zero when no grads are set.
    pub fn grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|p| p.tensor.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}
