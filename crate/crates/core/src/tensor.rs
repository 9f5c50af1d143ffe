//! Dense rank-4 real arrays and the padding, cropping and flipping helpers
//! the convolution paths are built from.
//!
//! Layout is row-major with the batch (or output-map) index outermost and the
//! column index innermost, so every `(batch, map)` plane is one contiguous
//! `rows * cols` slice.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Feature maps or their gradients: `batch x maps x rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor4<T> {
    batch: usize,
    maps: usize,
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> RealTensor4<T> {
    pub fn zeros(batch: usize, maps: usize, rows: usize, cols: usize) -> Result<Self> {
        check_dims(&[batch, maps, rows, cols])?;
        Ok(RealTensor4 { batch, maps, rows, cols, data: vec![T::zero(); batch * maps * rows * cols] })
    }

    pub fn from_vec(batch: usize, maps: usize, rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dims(&[batch, maps, rows, cols])?;
        if data.len() != batch * maps * rows * cols {
            return Err(Error::Size(format!("data length {} does not match {batch}x{maps}x{rows}x{cols}", data.len())));
        }
        Ok(RealTensor4 { batch, maps, rows, cols, data })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn maps(&self) -> usize {
        self.maps
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(batch, maps, rows, cols)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.batch, self.maps, self.rows, self.cols)
    }

    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn planes(&self) -> usize {
        self.batch * self.maps
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

    pub fn plane(&self, b: usize, m: usize) -> &[T] {
        let len = self.plane_len();
        let start = (b * self.maps + m) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, b: usize, m: usize) -> &mut [T] {
        let len = self.plane_len();
        let start = (b * self.maps + m) * len;
        &mut self.data[start..start + len]
    }

    #[inline]
    pub fn index(&self, b: usize, m: usize, i: usize, j: usize) -> usize {
        ((b * self.maps + m) * self.rows + i) * self.cols + j
    }

    #[inline]
    pub fn get(&self, b: usize, m: usize, i: usize, j: usize) -> T {
        self.data[self.index(b, m, i, j)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, m: usize, i: usize, j: usize, v: T) {
        let idx = self.index(b, m, i, j);
        self.data[idx] = v;
    }

    /// Zero-extends every plane to `rows x cols`, keeping the original block at the top-left.
    pub fn pad_to(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows < self.rows || cols < self.cols {
            return Err(Error::Size(format!("cannot pad {}x{} planes to smaller {rows}x{cols}", self.rows, self.cols)));
        }
        let mut out = RealTensor4::zeros(self.batch, self.maps, rows, cols)?;
        for (src, dst) in self.data.chunks_exact(self.plane_len()).zip(out.data.chunks_exact_mut(rows * cols)) {
            for (srow, drow) in src.chunks_exact(self.cols).zip(dst.chunks_exact_mut(cols)) {
                drow[..self.cols].copy_from_slice(srow);
            }
        }
        Ok(out)
    }

    /// Extracts the `rows x cols` window starting at `(row0, col0)` of every plane.
    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || row0 + rows > self.rows || col0 + cols > self.cols {
            return Err(Error::Size(format!(
                "window {rows}x{cols} at ({row0},{col0}) exceeds {}x{} planes",
                self.rows, self.cols
            )));
        }
        let mut out = RealTensor4::zeros(self.batch, self.maps, rows, cols)?;
        for (src, dst) in self.data.chunks_exact(self.plane_len()).zip(out.data.chunks_exact_mut(rows * cols)) {
            for (i, drow) in dst.chunks_exact_mut(cols).enumerate() {
                let s = (row0 + i) * self.cols + col0;
                drow.copy_from_slice(&src[s..s + cols]);
            }
        }
        Ok(out)
    }

    /// Inner product over all elements, accumulated in `f64`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!("dot of {:?} and {:?}", self.dims(), other.dims())));
        }
        Ok(dot_slices(&self.data, &other.data))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    /// Elementwise conversion to another precision.
    pub fn cast<U: Real>(&self) -> RealTensor4<U> {
        RealTensor4 {
            batch: self.batch,
            maps: self.maps,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
        }
    }
}

/// Convolution kernels or their gradients: `out_maps x in_maps x k x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor4<T> {
    out_maps: usize,
    in_maps: usize,
    k: usize,
    data: Vec<T>,
}

impl<T: Real> WeightTensor4<T> {
    pub fn zeros(out_maps: usize, in_maps: usize, k: usize) -> Result<Self> {
        check_dims(&[out_maps, in_maps, k])?;
        Ok(WeightTensor4 { out_maps, in_maps, k, data: vec![T::zero(); out_maps * in_maps * k * k] })
    }

    pub fn from_vec(out_maps: usize, in_maps: usize, k: usize, data: Vec<T>) -> Result<Self> {
        check_dims(&[out_maps, in_maps, k])?;
        if data.len() != out_maps * in_maps * k * k {
            return Err(Error::Size(format!("data length {} does not match {out_maps}x{in_maps}x{k}x{k}", data.len())));
        }
        Ok(WeightTensor4 { out_maps, in_maps, k, data })
    }

    pub fn out_maps(&self) -> usize {
        self.out_maps
    }

    pub fn in_maps(&self) -> usize {
        self.in_maps
    }

    /// Kernel width (kernels are square).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.out_maps, self.in_maps, self.k, self.k)
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

    pub fn kernel(&self, o: usize, i: usize) -> &[T] {
        let len = self.k * self.k;
        let start = (o * self.in_maps + i) * len;
        &self.data[start..start + len]
    }

    pub fn kernel_mut(&mut self, o: usize, i: usize) -> &mut [T] {
        let len = self.k * self.k;
        let start = (o * self.in_maps + i) * len;
        &mut self.data[start..start + len]
    }

    #[inline]
    pub fn index(&self, o: usize, i: usize, u: usize, v: usize) -> usize {
        ((o * self.in_maps + i) * self.k + u) * self.k + v
    }

    #[inline]
    pub fn get(&self, o: usize, i: usize, u: usize, v: usize) -> T {
        self.data[self.index(o, i, u, v)]
    }

    /// Rotates every kernel by 180 degrees: `out[o,i,u,v] = w[o,i,k-1-u,k-1-v]`.
    pub fn flip_spatial(&self) -> Self {
        let len = self.k * self.k;
        let mut data = Vec::with_capacity(self.data.len());
        for kernel in self.data.chunks_exact(len) {
            data.extend(kernel.iter().rev().copied());
        }
        WeightTensor4 { out_maps: self.out_maps, in_maps: self.in_maps, k: self.k, data }
    }

    /// Views the kernels as an `out_maps x in_maps x k x k` feature-map tensor.
    pub fn as_maps(&self) -> RealTensor4<T> {
        RealTensor4 { batch: self.out_maps, maps: self.in_maps, rows: self.k, cols: self.k, data: self.data.clone() }
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!("dot of {:?} and {:?}", self.dims(), other.dims())));
        }
        Ok(dot_slices(&self.data, &other.data))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn cast<U: Real>(&self) -> WeightTensor4<U> {
        WeightTensor4 {
            out_maps: self.out_maps,
            in_maps: self.in_maps,
            k: self.k,
            data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
        }
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Size(format!("all dimensions must be at least 1, got {dims:?}")));
    }
    Ok(())
}

fn dot_slices<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.as_f64() * y.as_f64()).sum()
}

/// Largest absolute elementwise difference divided by the largest magnitude
/// in `reference`. Returns the plain absolute difference when the reference
/// is identically zero.
pub fn max_rel_error<T: Real>(actual: &[T], reference: &[T]) -> f64 {
    assert_eq!(actual.len(), reference.len(), "length mismatch in error comparison");
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (a, r) in actual.iter().zip(reference) {
        diff = diff.max((a.as_f64() - r.as_f64()).abs());
        scale = scale.max(r.as_f64().abs());
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
