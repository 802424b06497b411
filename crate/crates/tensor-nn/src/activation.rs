use crate::{Real, TensorBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

pub fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    // Branch keeps exp() from overflowing for large |x|.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl Activation {
    pub fn apply<T: Real>(self, input: &TensorBuffer<T>) -> TensorBuffer<T> {
        match self {
            Activation::Relu => input.map(relu),
            Activation::Sigmoid => input.map(sigmoid),
        }
    }

    /// `grad_in` from the forward *output* and `grad_out`.
    pub fn backward<T: Real>(self, output: &TensorBuffer<T>, grad_out: &TensorBuffer<T>) -> TensorBuffer<T> {
        let mut grad = grad_out.clone();
        for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
            *g = match self {
                Activation::Relu => {
                    if y > T::zero() {
                        *g
                    } else {
                        T::zero()
                    }
                }
                Activation::Sigmoid => *g * y * (T::one() - y),
            };
        }
        grad
    }
}
