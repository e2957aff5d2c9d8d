use serde::{Deserialize, Serialize};

/// A block of learnable values with its gradient buffer.
///
/// The effective step for the block is `global_lr * lr_scale`, and
/// `l2_coeff * sum(values^2)` is added to the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub grads: Vec<f64>,
    pub lr_scale: f64,
    pub l2_coeff: f64,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let grads = vec![0.0; values.len()];
        ParamGroup { name: name.into(), values, grads, lr_scale: 1.0, l2_coeff: 0.0 }
    }

    pub fn with_lr_scale(mut self, scale: f64) -> Self {
        self.lr_scale = scale;
        self
    }

    pub fn with_l2(mut self, coeff: f64) -> Self {
        self.l2_coeff = coeff;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.grads.resize(self.values.len(), 0.0);
    }

    pub fn l2_penalty(&self) -> f64 {
        if self.l2_coeff == 0.0 {
            return 0.0;
        }
        self.l2_coeff * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    /// Adds the penalty gradient `2 * l2_coeff * value` into `grads`.
    pub fn add_l2_grad(&mut self) {
        if self.l2_coeff != 0.0 {
            for (g, v) in self.grads.iter_mut().zip(&self.values) {
                *g += 2.0 * self.l2_coeff * v;
            }
        }
    }
}

/// Plain SGD: `value -= global_lr * lr_scale * grad` for every group.
pub fn sgd_step(groups: &mut [ParamGroup], global_lr: f64) {
    for g in groups {
        let step = global_lr * g.lr_scale;
        for (v, d) in g.values.iter_mut().zip(&g.grads) {
            *v -= step * d;
        }
    }
}
