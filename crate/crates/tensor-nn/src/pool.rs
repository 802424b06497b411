use crate::{NnError, Real, Result, TensorBuffer};

/// Non-overlapping `factor x factor` max pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool {
    pub factor: usize,
}

/// Flat input index of the maximum for each output element.
pub type Argmax = Vec<u32>;

impl MaxPool {
    pub fn new(factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(NnError::Config("pooling factor must be positive".into()));
        }
        Ok(Self { factor })
    }

    pub fn forward<T: Real>(&self, input: &TensorBuffer<T>) -> Result<(TensorBuffer<T>, Argmax)> {
        let f = self.factor;
        let (n, c, h, w) = input.nchw();
        if input.rank() != 4 || h % f != 0 || w % f != 0 {
            return Err(NnError::Shape(format!(
                "max pool factor {f} does not divide spatial dims of {:?}",
                input.dims()
            )));
        }
        if f == 1 {
            let idx = (0..input.len() as u32).collect();
            return Ok((input.clone(), idx));
        }
        let (oh, ow) = (h / f, w / f);
        let mut out = TensorBuffer::zeros(&[n, c, oh, ow])?;
        let mut argmax = vec![0u32; out.len()];
        let src = input.data();
        if f == 2 {
            let dst = out.data_mut();
            for plane in 0..n * c {
                let base = plane * h * w;
                for oy in 0..oh {
                    let r0 = base + 2 * oy * w;
                    let r1 = r0 + w;
                    let o_row = (plane * oh + oy) * ow;
                    for ox in 0..ow {
                        let i = 2 * ox;
                        // Scan order: (0,0) (0,1) (1,0) (1,1); strict '>' keeps the first maximum.
                        let mut best = r0 + i;
                        for cand in [r0 + i + 1, r1 + i, r1 + i + 1] {
                            if src[cand] > src[best] {
                                best = cand;
                            }
                        }
                        dst[o_row + ox] = src[best];
                        argmax[o_row + ox] = best as u32;
                    }
                }
            }
            return Ok((out, argmax));
        }
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * f * w + ox * f;
                    for dy in 0..f {
                        let row = base + (oy * f + dy) * w + ox * f;
                        for i in row..row + f {
                            // Strict '>' keeps the first maximum in scan order.
                            if src[i] > src[best] {
                                best = i;
                            }
                        }
                    }
                    let o = (plane * oh + oy) * ow + ox;
                    out.data_mut()[o] = src[best];
                    argmax[o] = best as u32;
                }
            }
        }
        Ok((out, argmax))
    }

    /// Routes each output gradient to its argmax input position.
    pub fn backward<T: Real>(
        &self,
        input_dims: &[usize],
        argmax: &Argmax,
        grad_out: &TensorBuffer<T>,
    ) -> Result<TensorBuffer<T>> {
        if argmax.len() != grad_out.len() {
            return Err(NnError::Shape("max pool argmax does not match grad_out".into()));
        }
        let mut grad = TensorBuffer::zeros(input_dims)?;
        let g = grad.data_mut();
        for (&i, &d) in argmax.iter().zip(grad_out.data()) {
            g[i as usize] = g[i as usize] + d;
        }
        Ok(grad)
    }
}
