use std::collections::HashMap;

use rand::Rng;

use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
    pub grad: Option<Tensor>,
    /// Adam first moment.
    pub m: Tensor,
    /// Adam second moment.
    pub v: Tensor,
}

/// Named parameters with gradients and optimizer moments.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
    step: u64,
}

/// Per-parameter gradients produced by one backward pass, indexed by
/// [`ParamId`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub(crate) fn with_len(n: usize) -> Self {
        Self { grads: vec![None; n] }
    }

    pub(crate) fn slot(&mut self, id: ParamId, rows: usize, cols: usize) -> &mut Tensor {
        self.grads[id.0].get_or_insert_with(|| Tensor::zeros(rows, cols))
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<ParamId, TensorError> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        let id = ParamId(self.params.len());
        let (r, c) = (value.rows(), value.cols());
        self.params.push(Param {
            name: name.to_string(),
            value,
            trainable,
            grad: None,
            m: Tensor::zeros(r, c),
            v: Tensor::zeros(r, c),
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.params[id.0].grad.as_ref()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Adds a backward pass's gradients; trainable parameters the pass did
    /// not reach get an explicit zero gradient.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (i, p) in self.params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let slot = p
                .grad
                .get_or_insert_with(|| Tensor::zeros(p.value.rows(), p.value.cols()));
            if let Some(Some(g)) = grads.grads.get(i) {
                slot.add_assign(g);
            }
        }
    }

    pub fn scale_grads(&mut self, k: f64) {
        for p in &mut self.params {
            if let Some(g) = &mut p.grad {
                g.scale(k);
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.grad.as_ref().is_none_or(Tensor::all_finite))
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Uniform in `[-bound, bound)`.
pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Tensor {
    Tensor::new(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
}

/// Glorot/Xavier uniform: bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows, cols, bound, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(1, 1), true).unwrap();
        assert!(matches!(
            s.add("w", Tensor::zeros(1, 1), true),
            Err(TensorError::DuplicateParam(_))
        ));
    }

    #[test]
    fn accumulate_zero_fills_unreached() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::zeros(2, 2), true).unwrap();
        let b = s.add("b", Tensor::zeros(1, 3), true).unwrap();
        let frozen = s.add("c", Tensor::zeros(1, 1), false).unwrap();
        let mut g = Gradients::with_len(3);
        *g.slot(a, 2, 2) = Tensor::filled(2, 2, 1.5);
        s.accumulate(&g);
        s.accumulate(&g);
        assert_eq!(s.grad(a).unwrap().data(), &[3.0; 4]);
        assert_eq!(s.grad(b).unwrap().data(), &[0.0; 3]);
        assert!(s.grad(frozen).is_none());
    }

    #[test]
    fn xavier_bounds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let t = xavier(10, 20, &mut rng);
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(t.data().iter().all(|x| x.abs() <= bound));
    }
}
