use crate::{NnError, Real, Result};

/// Dense array of rank 1 to 4 in channel-major planar layout.
///
/// For rank 4 the dims are `(batch, channels, height, width)`; each channel is
/// a row-major `height x width` plane, planes are concatenated per channel and
/// channels per batch item.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorBuffer<T: Real = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > 4 {
        return Err(NnError::Shape(format!("rank {} outside 1..=4", dims.len())));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(NnError::Shape(format!("zero extent in {dims:?}")));
    }
    Ok(dims.iter().product())
}

impl<T: Real> TensorBuffer<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: &[usize], value: T) -> Result<Self> {
        let len = check_dims(dims)?;
        Ok(Self { dims: dims.to_vec(), data: vec![value; len] })
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_dims(dims)?;
        if data.len() != len {
            return Err(NnError::Shape(format!(
                "data length {} does not match dims {dims:?} ({len})",
                data.len()
            )));
        }
        Ok(Self { dims: dims.to_vec(), data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// `(batch, channels, height, width)`; lower ranks are padded on the left
    /// with ones, so an `(H, W)` map reads as `(1, 1, H, W)`.
    pub fn nchw(&self) -> (usize, usize, usize, usize) {
        let mut d = [1usize; 4];
        let off = 4 - self.dims.len();
        d[off..].copy_from_slice(&self.dims);
        (d[0], d[1], d[2], d[3])
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let len = check_dims(dims)?;
        if len != self.data.len() {
            return Err(NnError::Shape(format!("cannot reshape {:?} into {dims:?}", self.dims)));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { dims: self.dims.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Real>(&self) -> TensorBuffer<U> {
        TensorBuffer {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Plane `(n, c)` of a rank-4 (or padded) tensor.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let (_, ch, h, w) = self.nchw();
        let start = (n * ch + c) * h * w;
        &self.data[start..start + h * w]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let (_, ch, h, w) = self.nchw();
        let start = (n * ch + c) * h * w;
        &mut self.data[start..start + h * w]
    }

    /// All channels of batch item `n`.
    pub fn item(&self, n: usize) -> &[T] {
        let (_, c, h, w) = self.nchw();
        let size = c * h * w;
        &self.data[n * size..(n + 1) * size]
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        let (_, ch, h, w) = self.nchw();
        self.data[((n * ch + c) * h + y) * w + x]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let (_, ch, h, w) = self.nchw();
        self.data[((n * ch + c) * h + y) * w + x] = v;
    }

    /// Concatenates rank-4 tensors with identical `(C, H, W)` along the batch axis.
    pub fn stack(items: &[&TensorBuffer<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| NnError::Shape("empty stack".into()))?;
        let (_, c, h, w) = first.nchw();
        let mut data = Vec::with_capacity(items.iter().map(|t| t.len()).sum());
        let mut n = 0;
        for t in items {
            let (tn, tc, th, tw) = t.nchw();
            if (tc, th, tw) != (c, h, w) {
                return Err(NnError::Shape(format!(
                    "cannot stack {:?} with {:?}",
                    t.dims(),
                    first.dims()
                )));
            }
            data.extend_from_slice(t.data());
            n += tn;
        }
        Self::from_vec(&[n, c, h, w], data)
    }

    /// Batch item `n` as a `(1, C, H, W)` tensor.
    pub fn slice_item(&self, n: usize) -> Self {
        let (_, c, h, w) = self.nchw();
        Self { dims: vec![1, c, h, w], data: self.item(n).to_vec() }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }
}
