//! Grouped 3x3 convolution, stride 1, zero padding 1, dilation 1.
//!
//! Each sample and group is lowered to a GEMM over an im2col buffer:
//! `out_g (cout_g x HW) = W_g (cout_g x cin_g*9) * col (cin_g*9 x HW)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::{NnError, Real, Result, TensorBuffer};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T: Real = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub groups: usize,
    /// Shape `(out_channels, in_channels / groups, 3, 3)`.
    pub weights: TensorBuffer<T>,
    pub bias: Vec<T>,
}

/// Parameter gradients of one convolution, laid out like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrad<T: Real> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

fn check_groups(in_channels: usize, out_channels: usize, groups: usize) -> Result<()> {
    if in_channels == 0 || out_channels == 0 || groups == 0 {
        return Err(NnError::Config("channel and group counts must be positive".into()));
    }
    if in_channels % groups != 0 || out_channels % groups != 0 {
        return Err(NnError::Config(format!(
            "groups {groups} must divide in_channels {in_channels} and out_channels {out_channels}"
        )));
    }
    Ok(())
}

impl<T: Real> ConvLayer<T> {
    /// Zero weights and bias.
    pub fn zeros(in_channels: usize, out_channels: usize, groups: usize) -> Result<Self> {
        check_groups(in_channels, out_channels, groups)?;
        Ok(Self {
            in_channels,
            out_channels,
            groups,
            weights: TensorBuffer::zeros(&[out_channels, in_channels / groups, KERNEL, KERNEL])?,
            bias: vec![T::zero(); out_channels],
        })
    }

    /// He-style init: zero-mean normal with `std = sqrt(2 / (fan_in * 9))`
    /// where `fan_in` is the per-group input channel count. Bias starts at 0.
    pub fn init<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        groups: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_channels, out_channels, groups)?;
        let fan_in = (in_channels / groups) as f64;
        let normal = Normal::new(0.0, (2.0 / (fan_in * TAPS as f64)).sqrt())
            .map_err(|e| NnError::Config(e.to_string()))?;
        for w in layer.weights.data_mut() {
            *w = T::lit(normal.sample(rng));
        }
        Ok(layer)
    }

    pub fn from_parts(
        in_channels: usize,
        out_channels: usize,
        groups: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        check_groups(in_channels, out_channels, groups)?;
        let weights =
            TensorBuffer::from_vec(&[out_channels, in_channels / groups, KERNEL, KERNEL], weights)?;
        if bias.len() != out_channels {
            return Err(NnError::Shape(format!(
                "bias length {} != out_channels {out_channels}",
                bias.len()
            )));
        }
        Ok(Self { in_channels, out_channels, groups, weights, bias })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn cin_g(&self) -> usize {
        self.in_channels / self.groups
    }

    fn cout_g(&self) -> usize {
        self.out_channels / self.groups
    }

    fn check_input(&self, input: &TensorBuffer<T>) -> Result<(usize, usize, usize)> {
        if input.rank() != 4 {
            return Err(NnError::Shape(format!("conv expects rank 4, got {:?}", input.dims())));
        }
        let (n, c, h, w) = input.nchw();
        if c != self.in_channels {
            return Err(NnError::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        Ok((n, h, w))
    }

    pub fn forward(&self, input: &TensorBuffer<T>) -> Result<TensorBuffer<T>> {
        let (n, h, w) = self.check_input(input)?;
        let hw = h * w;
        let (cin_g, cout_g) = (self.cin_g(), self.cout_g());
        let k = cin_g * TAPS;
        let mut out = TensorBuffer::zeros(&[n, self.out_channels, h, w])?;
        let weights = self.weights.data();
        out.data_mut()
            .par_chunks_mut(self.out_channels * hw)
            .zip(input.data().par_chunks(self.in_channels * hw))
            .for_each(|(out_item, in_item)| {
                let mut col = vec![T::zero(); k * hw];
                for g in 0..self.groups {
                    im2col(&in_item[g * cin_g * hw..(g + 1) * cin_g * hw], cin_g, h, w, &mut col);
                    let out_g = &mut out_item[g * cout_g * hw..(g + 1) * cout_g * hw];
                    for (o, plane) in out_g.chunks_mut(hw).enumerate() {
                        plane.fill(self.bias[g * cout_g + o]);
                    }
                    T::gemm(
                        cout_g,
                        k,
                        hw,
                        T::one(),
                        &weights[g * cout_g * k..(g + 1) * cout_g * k],
                        k as isize,
                        1,
                        &col,
                        hw as isize,
                        1,
                        T::one(),
                        out_g,
                        hw as isize,
                        1,
                    );
                }
            });
        Ok(out)
    }

    /// Gradients of a scalar loss given `grad_out = dL/d(output)` for the
    /// forward pass over `input`. The input gradient is only computed when
    /// `need_input_grad` is set.
    pub fn backward(
        &self,
        input: &TensorBuffer<T>,
        grad_out: &TensorBuffer<T>,
        need_input_grad: bool,
    ) -> Result<(Option<TensorBuffer<T>>, ConvGrad<T>)> {
        let (n, h, w) = self.check_input(input)?;
        if grad_out.dims() != [n, self.out_channels, h, w] {
            return Err(NnError::Shape(format!(
                "conv grad_out {:?} does not match output [{n}, {}, {h}, {w}]",
                grad_out.dims(),
                self.out_channels
            )));
        }
        let hw = h * w;
        let (cin_g, cout_g) = (self.cin_g(), self.cout_g());
        let k = cin_g * TAPS;
        let weights = self.weights.data();

        let per_item: Vec<(Option<Vec<T>>, Vec<T>, Vec<T>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let in_item = input.item(i);
                let go_item = grad_out.item(i);
                let mut dw = vec![T::zero(); self.weights.len()];
                let mut db = vec![T::zero(); self.out_channels];
                let mut dx = need_input_grad.then(|| vec![T::zero(); self.in_channels * hw]);
                let mut col = vec![T::zero(); k * hw];
                for g in 0..self.groups {
                    let go_g = &go_item[g * cout_g * hw..(g + 1) * cout_g * hw];
                    for (o, plane) in go_g.chunks(hw).enumerate() {
                        db[g * cout_g + o] = plane.iter().copied().sum();
                    }
                    im2col(&in_item[g * cin_g * hw..(g + 1) * cin_g * hw], cin_g, h, w, &mut col);
                    // dW_g = dY_g * col^T
                    T::gemm(
                        cout_g,
                        hw,
                        k,
                        T::one(),
                        go_g,
                        hw as isize,
                        1,
                        &col,
                        1,
                        hw as isize,
                        T::zero(),
                        &mut dw[g * cout_g * k..(g + 1) * cout_g * k],
                        k as isize,
                        1,
                    );
                    if let Some(dx) = dx.as_mut() {
                        // dcol = W_g^T * dY_g, then scatter back.
                        T::gemm(
                            k,
                            cout_g,
                            hw,
                            T::one(),
                            &weights[g * cout_g * k..(g + 1) * cout_g * k],
                            1,
                            k as isize,
                            go_g,
                            hw as isize,
                            1,
                            T::zero(),
                            &mut col,
                            hw as isize,
                            1,
                        );
                        col2im(&col, cin_g, h, w, &mut dx[g * cin_g * hw..(g + 1) * cin_g * hw]);
                    }
                }
                (dx, dw, db)
            })
            .collect();

        let mut grad = ConvGrad {
            weights: vec![T::zero(); self.weights.len()],
            bias: vec![T::zero(); self.out_channels],
        };
        let mut dx_all = need_input_grad.then(|| Vec::with_capacity(input.len()));
        // Sequential reduction keeps results independent of the thread count.
        for (dx, dw, db) in per_item {
            add_into(&mut grad.weights, &dw);
            add_into(&mut grad.bias, &db);
            if let (Some(all), Some(dx)) = (dx_all.as_mut(), dx) {
                all.extend_from_slice(&dx);
            }
        }
        let dx = match dx_all {
            Some(data) => Some(TensorBuffer::from_vec(input.dims(), data)?),
            None => None,
        };
        Ok((dx, grad))
    }
}

fn add_into<T: Real>(acc: &mut [T], v: &[T]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a = *a + b;
    }
}

/// Row `c*9 + ky*3 + kx` of `col` holds input channel `c` shifted by
/// `(ky-1, kx-1)`, zero outside the image.
fn im2col<T: Real>(input: &[T], channels: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    for c in 0..channels {
        let plane = &input[c * hw..(c + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut col[(c * TAPS + ky * KERNEL + kx) * hw..][..hw];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match dx {
                        0 => dst.copy_from_slice(src),
                        -1 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `col` rows back into `out`.
fn col2im<T: Real>(col: &[T], channels: usize, h: usize, w: usize, out: &mut [T]) {
    let hw = h * w;
    for c in 0..channels {
        let plane = &mut out[c * hw..(c + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[(c * TAPS + ky * KERNEL + kx) * hw..][..hw];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match dx {
                        0 => add_into(dst, src),
                        -1 => add_into(&mut dst[..w - 1], &src[1..]),
                        _ => add_into(&mut dst[1..], &src[..w - 1]),
                    }
                }
            }
        }
    }
}
