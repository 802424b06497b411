use crate::{NnError, Real, Result};

/// RMSProp hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every step.
    pub decay_factor: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self { learning_rate: 1e-4, decay_factor: 1.0 - 1e-4, rho: 0.9, epsilon: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T: Real = f32> {
    /// Second-moment accumulators, one per parameter slice.
    pub accumulators: Vec<Vec<T>>,
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub rho: f64,
    pub epsilon_opt: f64,
    pub steps: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(shapes: &[usize], hyper: RmsProp) -> Result<Self> {
        if !(hyper.learning_rate > 0.0) {
            return Err(NnError::Config(format!("learning rate {} must be > 0", hyper.learning_rate)));
        }
        if !(hyper.decay_factor > 0.0 && hyper.decay_factor <= 1.0) {
            return Err(NnError::Config(format!("decay factor {} outside (0, 1]", hyper.decay_factor)));
        }
        Ok(Self {
            accumulators: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            learning_rate: hyper.learning_rate,
            decay_factor: hyper.decay_factor,
            rho: hyper.rho,
            epsilon_opt: hyper.epsilon,
            steps: 0,
        })
    }

    /// One RMSProp update followed by one learning-rate decay.
    pub fn step(&mut self, mut params: Vec<&mut [T]>, grads: Vec<&[T]>) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.accumulators.len() {
            return Err(NnError::Shape(format!(
                "optimizer expects {} parameter slices, got {} params / {} grads",
                self.accumulators.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), v) in params.iter().zip(&grads).zip(&self.accumulators) {
            if p.len() != g.len() || p.len() != v.len() {
                return Err(NnError::Shape(format!(
                    "slice lengths differ: param {} grad {} accumulator {}",
                    p.len(),
                    g.len(),
                    v.len()
                )));
            }
        }
        let rho = T::lit(self.rho);
        let one_minus_rho = T::lit(1.0 - self.rho);
        let lr = T::lit(self.learning_rate);
        let eps = T::lit(self.epsilon_opt);
        for ((p, g), v) in params.iter_mut().zip(&grads).zip(&mut self.accumulators) {
            for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vi = rho * *vi + one_minus_rho * gi * gi;
                *pi = *pi - lr * gi / (vi.sqrt() + eps);
            }
        }
        self.learning_rate *= self.decay_factor;
        self.steps += 1;
        Ok(())
    }
}
