use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Matrix;

/// A trainable tensor with its gradient accumulator. Vectors are stored as
/// single-column matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Matrix::zeros(r, c),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Matrix::zeros(rows, cols))
    }

    pub fn bias(len: usize) -> Self {
        Self::zeros(len, 1)
    }

    pub fn uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::new(Matrix::uniform_fan_in(rows, cols, rng))
    }

    pub fn len(&self) -> usize {
        self.value.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything that owns trainable parameters in a fixed, documented order.
///
/// The order of [`Parameterized::params`] and [`Parameterized::params_mut`]
/// must agree; optimizers and checkpoints rely on it.
pub trait Parameterized {
    fn params(&self) -> Vec<(String, &Param)>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_weights(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }
}

/// Prefixes every name produced by `inner` with `prefix.`.
pub(crate) fn prefixed<'a>(
    prefix: &str,
    inner: Vec<(String, &'a Param)>,
) -> impl Iterator<Item = (String, &'a Param)> + 'a {
    let prefix = prefix.to_string();
    inner
        .into_iter()
        .map(move |(n, p)| (format!("{prefix}.{n}"), p))
}
