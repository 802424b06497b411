//! Layer stack with a recorded forward tape and analytic backward pass.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::batchnorm::{BatchStats, BnCache, BnGrad};
use crate::conv::ConvGrad;
use crate::pool::Argmax;
use crate::{Activation, BatchNormLayer, BnMode, ConvLayer, MaxPool, NnError, Real, Result, TensorBuffer};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T: Real = f32> {
    Conv(ConvLayer<T>),
    BatchNorm(BatchNormLayer<T>),
    Activation(Activation),
    MaxPool(MaxPool),
}

impl<T: Real> Layer<T> {
    fn cast<U: Real>(&self) -> Layer<U> {
        match self {
            Layer::Conv(c) => Layer::Conv(ConvLayer {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                groups: c.groups,
                weights: c.weights.cast(),
                bias: c.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
            }),
            Layer::BatchNorm(b) => {
                let cv = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
                Layer::BatchNorm(BatchNormLayer {
                    gamma: cv(&b.gamma),
                    beta: cv(&b.beta),
                    running_mean: cv(&b.running_mean),
                    running_var: cv(&b.running_var),
                    epsilon: U::lit(b.epsilon.as_f64()),
                    momentum: U::lit(b.momentum.as_f64()),
                })
            }
            Layer::Activation(a) => Layer::Activation(*a),
            Layer::MaxPool(p) => Layer::MaxPool(*p),
        }
    }
}

#[derive(Debug)]
enum TapeEntry<T: Real> {
    Conv { input: TensorBuffer<T> },
    BatchNorm(BnCache<T>),
    Activation { output: TensorBuffer<T> },
    MaxPool { input_dims: Vec<usize>, argmax: Argmax },
}

/// Activations recorded by a train-mode forward pass.
#[derive(Debug)]
pub struct Tape<T: Real = f32> {
    network_id: u64,
    generation: u64,
    entries: Vec<TapeEntry<T>>,
    output_dims: Vec<usize>,
}

impl<T: Real> Tape<T> {
    pub fn output_dims(&self) -> &[usize] {
        &self.output_dims
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerGrad<T: Real> {
    Conv(ConvGrad<T>),
    BatchNorm(BnGrad<T>),
    None,
}

/// Parameter gradients for every layer of a [`Sequential`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T: Real = f32> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Real> Gradients<T> {
    /// Flat slices in parameter declaration order, matching
    /// [`Sequential::params_mut`].
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for g in &self.layers {
            match g {
                LayerGrad::Conv(c) => {
                    out.push(c.weights.as_slice());
                    out.push(c.bias.as_slice());
                }
                LayerGrad::BatchNorm(b) => {
                    out.push(b.gamma.as_slice());
                    out.push(b.beta.as_slice());
                }
                LayerGrad::None => {}
            }
        }
        out
    }
}

#[derive(Debug)]
pub struct Sequential<T: Real = f32> {
    pub layers: Vec<Layer<T>>,
    id: u64,
    generation: u64,
}

impl<T: Real> Clone for Sequential<T> {
    fn clone(&self) -> Self {
        Self::new(self.layers.clone())
    }
}

impl<T: Real> PartialEq for Sequential<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers, id: NEXT_ID.fetch_add(1, Ordering::Relaxed), generation: 0 }
    }

    pub fn cast<U: Real>(&self) -> Sequential<U> {
        Sequential::new(self.layers.iter().map(Layer::cast).collect())
    }

    /// Trainable reals: conv weights and biases, batch-norm gamma and beta.
    pub fn trainable_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.param_count(),
                Layer::BatchNorm(b) => 2 * b.channels(),
                _ => 0,
            })
            .sum()
    }

    /// Trainable reals plus batch-norm running statistics.
    pub fn stored_count(&self) -> usize {
        self.trainable_count()
            + self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::BatchNorm(b) => 2 * b.channels(),
                    _ => 0,
                })
                .sum::<usize>()
    }

    /// Mutable parameter slices in declaration order. Invalidates any
    /// outstanding [`Tape`].
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.generation += 1;
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(c.weights.data_mut());
                    out.push(c.bias.as_mut_slice());
                }
                Layer::BatchNorm(b) => {
                    out.push(b.gamma.as_mut_slice());
                    out.push(b.beta.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(c.weights.data());
                    out.push(c.bias.as_slice());
                }
                Layer::BatchNorm(b) => {
                    out.push(b.gamma.as_slice());
                    out.push(b.beta.as_slice());
                }
                _ => {}
            }
        }
        out
    }

    /// Forward pass. Infer mode uses running statistics and records nothing.
    pub fn forward(&self, input: &TensorBuffer<T>, mode: BnMode) -> Result<TensorBuffer<T>> {
        match mode {
            BnMode::Infer => {
                let mut x = input.clone();
                for layer in &self.layers {
                    x = match layer {
                        Layer::Conv(c) => c.forward(&x)?,
                        Layer::BatchNorm(b) => b.forward_infer(&x)?,
                        Layer::Activation(a) => a.apply(&x),
                        Layer::MaxPool(p) => p.forward(&x)?.0,
                    };
                }
                Ok(x)
            }
            BnMode::Train => Ok(self.forward_recorded(input)?.0),
        }
    }

    /// Train-mode forward that records a tape and returns the batch
    /// statistics of every batch-norm layer without applying them.
    pub fn forward_recorded(
        &self,
        input: &TensorBuffer<T>,
    ) -> Result<(TensorBuffer<T>, Tape<T>, Vec<BatchStats<T>>)> {
        let mut entries = Vec::with_capacity(self.layers.len());
        let mut stats = Vec::new();
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => {
                    let out = c.forward(&x)?;
                    entries.push(TapeEntry::Conv { input: x });
                    out
                }
                Layer::BatchNorm(b) => {
                    let (out, cache, s) = b.forward_train(&x)?;
                    entries.push(TapeEntry::BatchNorm(cache));
                    stats.push(s);
                    out
                }
                Layer::Activation(a) => {
                    let out = a.apply(&x);
                    entries.push(TapeEntry::Activation { output: out.clone() });
                    out
                }
                Layer::MaxPool(p) => {
                    let (out, argmax) = p.forward(&x)?;
                    entries.push(TapeEntry::MaxPool { input_dims: x.dims().to_vec(), argmax });
                    out
                }
            };
        }
        let tape = Tape {
            network_id: self.id,
            generation: self.generation,
            entries,
            output_dims: x.dims().to_vec(),
        };
        Ok((x, tape, stats))
    }

    /// Train-mode forward; running statistics are blended in place.
    pub fn forward_train(&mut self, input: &TensorBuffer<T>) -> Result<(TensorBuffer<T>, Tape<T>)> {
        let (out, tape, stats) = self.forward_recorded(input)?;
        let mut it = stats.iter();
        for layer in &mut self.layers {
            if let Layer::BatchNorm(b) = layer {
                b.update_running(it.next().expect("one stats entry per batch-norm layer"));
            }
        }
        Ok((out, tape))
    }

    /// Parameter gradients for `loss_gradient = dL/d(output)` of the forward
    /// pass recorded in `tape`.
    pub fn backward(&self, tape: &Tape<T>, loss_gradient: &TensorBuffer<T>) -> Result<Gradients<T>> {
        if tape.network_id != self.id || tape.generation != self.generation {
            return Err(NnError::TapeMismatch(
                "tape was recorded on a different network or before a parameter update".into(),
            ));
        }
        if tape.entries.len() != self.layers.len() {
            return Err(NnError::TapeMismatch("layer count differs".into()));
        }
        if loss_gradient.dims() != tape.output_dims.as_slice() {
            return Err(NnError::TapeMismatch(format!(
                "loss gradient {:?} does not match recorded output {:?}",
                loss_gradient.dims(),
                tape.output_dims
            )));
        }
        let mut grads = vec![LayerGrad::None; self.layers.len()];
        let mut g = loss_gradient.clone();
        // The first conv never needs an input gradient.
        let first_param = self.layers.iter().position(|l| matches!(l, Layer::Conv(_) | Layer::BatchNorm(_)));
        for (idx, (layer, entry)) in self.layers.iter().zip(&tape.entries).enumerate().rev() {
            let need_input = first_param.map_or(true, |f| idx > f);
            g = match (layer, entry) {
                (Layer::Conv(c), TapeEntry::Conv { input }) => {
                    let (dx, cg) = c.backward(input, &g, need_input)?;
                    grads[idx] = LayerGrad::Conv(cg);
                    match dx {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                (Layer::BatchNorm(b), TapeEntry::BatchNorm(cache)) => {
                    let (dx, bg) = b.backward(cache, &g)?;
                    grads[idx] = LayerGrad::BatchNorm(bg);
                    dx
                }
                (Layer::Activation(a), TapeEntry::Activation { output }) => a.backward(output, &g),
                (Layer::MaxPool(p), TapeEntry::MaxPool { input_dims, argmax }) => {
                    p.backward(input_dims, argmax, &g)?
                }
                _ => return Err(NnError::TapeMismatch(format!("layer {idx} kind differs"))),
            };
        }
        Ok(Gradients { layers: grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn small_net() -> Sequential<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        Sequential::new(vec![
            Layer::Conv(ConvLayer::init(2, 4, 1, &mut rng).unwrap()),
            Layer::BatchNorm(BatchNormLayer::new(4)),
            Layer::Activation(Activation::Relu),
            Layer::MaxPool(MaxPool::new(2).unwrap()),
            Layer::Conv(ConvLayer::init(4, 2, 2, &mut rng).unwrap()),
            Layer::Activation(Activation::Sigmoid),
        ])
    }

    fn input() -> TensorBuffer<f64> {
        TensorBuffer::from_vec(&[2, 2, 4, 4], (0..64).map(|i| ((i as f64) * 0.37).sin()).collect()).unwrap()
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradients() {
        let mut net = small_net();
        let (out, tape) = net.forward_train(&input()).unwrap();
        let zero = TensorBuffer::zeros(out.dims()).unwrap();
        let grads = net.backward(&tape, &zero).unwrap();
        assert!(grads.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn stale_or_foreign_tape_is_rejected() {
        let mut net = small_net();
        let (out, tape) = net.forward_train(&input()).unwrap();
        let ones = TensorBuffer::full(out.dims(), 1.0).unwrap();
        let other = small_net();
        assert!(matches!(other.backward(&tape, &ones), Err(NnError::TapeMismatch(_))));
        let wrong = TensorBuffer::full(&[1, 2, 2, 2], 1.0).unwrap();
        assert!(net.backward(&tape, &wrong).is_err());
        net.params_mut()[0][0] += 0.1;
        assert!(matches!(net.backward(&tape, &ones), Err(NnError::TapeMismatch(_))));
    }

    #[test]
    fn param_slices_align_with_gradients() {
        let mut net = small_net();
        let (out, tape) = net.forward_train(&input()).unwrap();
        let ones = TensorBuffer::full(out.dims(), 1.0).unwrap();
        let grads = net.backward(&tape, &ones).unwrap();
        let p: Vec<usize> = net.params().iter().map(|s| s.len()).collect();
        let g: Vec<usize> = grads.slices().iter().map(|s| s.len()).collect();
        assert_eq!(p, g);
        assert_eq!(net.trainable_count(), p.iter().sum::<usize>());
    }
}
