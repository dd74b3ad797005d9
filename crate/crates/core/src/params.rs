//! Named parameters with gradient accumulators.

use crate::matrix::TokenMatrix;

/// A learnable tensor plus its gradient accumulator of the same shape.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: TokenMatrix,
    pub grad: TokenMatrix,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: TokenMatrix) -> Self {
        let grad = TokenMatrix::zeros(value.rows(), value.cols());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// value -= lr * grad
    pub fn step(&mut self, lr: f64) {
        for (v, g) in self
            .value
            .data_mut()
            .iter_mut()
            .zip(self.grad.data().iter())
        {
            *v -= lr * g;
        }
    }
}

/// A collection of parameters that can be enumerated in a fixed order.
///
/// The order of `visit` calls must be deterministic and identical between
/// `visit` and `visit_mut`; the gradient checker and the optimizer both
/// address entries by (group index, element index).
pub trait ParamSet {
    fn visit(&self, f: &mut dyn FnMut(&Parameter));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter));

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    fn sgd_step(&mut self, lr: f64) {
        self.visit_mut(&mut |p| p.step(lr));
    }

    fn num_entries(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.value.len());
        n
    }

    /// (name, element count) for every group, in visit order.
    fn group_sizes(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push((p.name.clone(), p.value.len())));
        out
    }

    /// Adds `delta` to one element, addressed by group and element index.
    fn nudge(&mut self, group: usize, elem: usize, delta: f64) {
        let mut i = 0;
        self.visit_mut(&mut |p| {
            if i == group {
                p.value.data_mut()[elem] += delta;
            }
            i += 1;
        });
    }

    /// Copies all gradients out, in visit order.
    fn collect_grads(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(p.grad.data().to_vec()));
        out
    }
}
