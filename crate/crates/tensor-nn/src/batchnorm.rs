use crate::{NnError, Real, Result, TensorBuffer};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and blend them into the running ones.
    Train,
    /// Normalize with the running statistics only.
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer<T: Real = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    pub momentum: T,
}

/// Per-channel statistics of one training batch.
#[derive(Clone, Debug)]
pub struct BatchStats<T: Real> {
    pub mean: Vec<T>,
    /// Biased (population) variance, used for normalization.
    pub var: Vec<T>,
    pub population: usize,
}

/// What the backward pass needs from a train-mode forward.
#[derive(Clone, Debug)]
pub struct BnCache<T: Real> {
    pub x_hat: TensorBuffer<T>,
    pub inv_std: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnGrad<T: Real> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> BatchNormLayer<T> {
    /// gamma 1, beta 0, running mean 0, running var 1.
    pub fn new(channels: usize) -> Self {
        Self::with_hyper(channels, T::lit(DEFAULT_EPSILON), T::lit(DEFAULT_MOMENTUM))
    }

    pub fn with_hyper(channels: usize, epsilon: T, momentum: T) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon,
            momentum,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &TensorBuffer<T>) -> Result<(usize, usize, usize)> {
        let (n, c, h, w) = input.nchw();
        if c != self.channels() {
            return Err(NnError::Shape(format!(
                "batch norm expects {} channels, got {c}",
                self.channels()
            )));
        }
        Ok((n, c, h * w))
    }

    /// Spec-level entry point: normalizes and, in train mode, updates the
    /// running statistics in place.
    pub fn forward(&mut self, input: &TensorBuffer<T>, mode: BnMode) -> Result<TensorBuffer<T>> {
        match mode {
            BnMode::Infer => self.forward_infer(input),
            BnMode::Train => {
                let (out, cache, stats) = self.forward_train(input)?;
                drop(cache);
                self.update_running(&stats);
                Ok(out)
            }
        }
    }

    pub fn forward_infer(&self, input: &TensorBuffer<T>) -> Result<TensorBuffer<T>> {
        let (n, c, hw) = self.check(input)?;
        let mut out = input.clone();
        for ch in 0..c {
            let inv = T::one() / (self.running_var[ch] + self.epsilon).sqrt();
            let scale = self.gamma[ch] * inv;
            let shift = self.beta[ch] - self.running_mean[ch] * scale;
            for b in 0..n {
                for v in &mut out.data_mut()[(b * c + ch) * hw..][..hw] {
                    *v = *v * scale + shift;
                }
            }
        }
        Ok(out)
    }

    /// Train-mode normalization without touching the running statistics.
    pub fn forward_train(
        &self,
        input: &TensorBuffer<T>,
    ) -> Result<(TensorBuffer<T>, BnCache<T>, BatchStats<T>)> {
        let (n, c, hw) = self.check(input)?;
        let population = n * hw;
        if population < 2 {
            return Err(NnError::DegenerateBatch(population));
        }
        let mut x_hat = input.clone();
        let mut out = input.clone();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        let mut inv_std = vec![T::zero(); c];
        for ch in 0..c {
            let mut sum = 0.0f64;
            for b in 0..n {
                sum += lane_sum(&input.data()[(b * c + ch) * hw..][..hw], |v| v.as_f64());
            }
            let mu = sum / population as f64;
            let mut sq = 0.0f64;
            for b in 0..n {
                sq += lane_sum(&input.data()[(b * c + ch) * hw..][..hw], |v| {
                    let d = v.as_f64() - mu;
                    d * d
                });
            }
            let sigma2 = sq / population as f64;
            let inv = 1.0 / (sigma2 + self.epsilon.as_f64()).sqrt();
            mean[ch] = T::lit(mu);
            var[ch] = T::lit(sigma2);
            inv_std[ch] = T::lit(inv);
            let (g, be) = (self.gamma[ch], self.beta[ch]);
            let (mu_t, inv_t) = (T::lit(mu), T::lit(inv));
            for b in 0..n {
                let range = (b * c + ch) * hw..(b * c + ch + 1) * hw;
                for (xh, o) in x_hat.data_mut()[range.clone()].iter_mut().zip(&mut out.data_mut()[range]) {
                    let v = (*xh - mu_t) * inv_t;
                    *xh = v;
                    *o = g * v + be;
                }
            }
        }
        Ok((out, BnCache { x_hat, inv_std }, BatchStats { mean, var, population }))
    }

    /// Momentum blend; the running variance uses the unbiased batch estimate.
    pub fn update_running(&mut self, stats: &BatchStats<T>) {
        let m = self.momentum;
        let n = T::lit(stats.population as f64);
        let unbias = n / (n - T::one());
        for ch in 0..self.channels() {
            self.running_mean[ch] = (T::one() - m) * self.running_mean[ch] + m * stats.mean[ch];
            self.running_var[ch] =
                (T::one() - m) * self.running_var[ch] + m * stats.var[ch] * unbias;
        }
    }

    pub fn backward(
        &self,
        cache: &BnCache<T>,
        grad_out: &TensorBuffer<T>,
    ) -> Result<(TensorBuffer<T>, BnGrad<T>)> {
        if grad_out.dims() != cache.x_hat.dims() {
            return Err(NnError::Shape(format!(
                "batch norm grad_out {:?} does not match cached {:?}",
                grad_out.dims(),
                cache.x_hat.dims()
            )));
        }
        let (n, c, hw) = self.check(grad_out)?;
        let m = (n * hw) as f64;
        let mut dx = grad_out.clone();
        let mut grad = BnGrad { gamma: vec![T::zero(); c], beta: vec![T::zero(); c] };
        for ch in 0..c {
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xh = 0.0f64;
            for b in 0..n {
                let off = (b * c + ch) * hw;
                let dy = &grad_out.data()[off..off + hw];
                sum_dy += lane_sum(dy, |v| v.as_f64());
                sum_dy_xh += lane_dot(dy, &cache.x_hat.data()[off..off + hw]);
            }
            grad.gamma[ch] = T::lit(sum_dy_xh);
            grad.beta[ch] = T::lit(sum_dy);
            let scale = T::lit(self.gamma[ch].as_f64() * cache.inv_std[ch].as_f64() / m);
            let mean_dy = T::lit(sum_dy);
            let mean_dy_xh = T::lit(sum_dy_xh);
            let count = T::lit(m);
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for (d, xh) in dx.data_mut()[off..off + hw].iter_mut().zip(&cache.x_hat.data()[off..off + hw]) {
                    *d = scale * (count * *d - mean_dy - *xh * mean_dy_xh);
                }
            }
        }
        Ok((dx, grad))
    }
}

const LANES: usize = 8;

/// f64 sum of `f(x)` with independent lane accumulators.
fn lane_sum<T: Real>(xs: &[T], f: impl Fn(T) -> f64) -> f64 {
    let mut acc = [0.0f64; LANES];
    let chunks = xs.chunks_exact(LANES);
    let tail = chunks.remainder();
    for chunk in chunks {
        for (a, &x) in acc.iter_mut().zip(chunk) {
            *a += f(x);
        }
    }
    acc.iter().sum::<f64>() + tail.iter().map(|&x| f(x)).sum::<f64>()
}

fn lane_dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x.as_f64() * y.as_f64()).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += x[i].as_f64() * y[i].as_f64();
        }
    }
    acc.iter().sum::<f64>() + tail
}
