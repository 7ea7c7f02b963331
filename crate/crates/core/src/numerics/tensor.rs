use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage precision of a tensor.
///
/// Values are always held as `f64`; in `F32` mode every operation rounds its
/// output through `f32`, so results match a single-precision pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    #[inline]
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::F32 => v as f32 as f64,
            Precision::F64 => v,
        }
    }

    /// The coarser of two precisions.
    pub fn join(self, other: Precision) -> Precision {
        if self == Precision::F32 || other == Precision::F32 {
            Precision::F32
        } else {
            Precision::F64
        }
    }
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
    precision: Precision,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::dim("data length", expected, data.len()));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
            precision: Precision::F64,
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
            precision: Precision::F64,
        }
    }

    pub fn filled(dims: &[usize], value: f64) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![value; dims.iter().product()],
            precision: Precision::F64,
        }
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: (0..n).map(&mut f).collect(),
            precision: Precision::F64,
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            dims: vec![data.len()],
            data,
            precision: Precision::F64,
        }
    }

    /// Square identity matrix.
    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
    }

    /// Builds an operation result, applying precision rounding and the
    /// debug-mode finiteness check.
    pub(crate) fn from_op(dims: Vec<usize>, mut data: Vec<f64>, precision: Precision) -> Self {
        if precision == Precision::F32 {
            for v in &mut data {
                *v = precision.round(*v);
            }
        }
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value produced by tensor op"
        );
        Self {
            dims,
            data,
            precision,
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        if precision == Precision::F32 {
            for v in &mut self.data {
                *v = precision.round(*v);
            }
        }
        self
    }

    pub fn precision(&self) -> Precision {
        self.precision
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.dims[axis]
    }

    pub fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.dims.len() != rank {
            return Err(Error::dim(format!("{what} rank"), rank, self.dims.len()));
        }
        Ok(())
    }

    pub fn expect_dims(&self, dims: &[usize], what: &str) -> Result<()> {
        self.expect_rank(dims.len(), what)?;
        for (axis, (&want, &got)) in dims.iter().zip(&self.dims).enumerate() {
            if want != got {
                return Err(Error::dim(format!("{what} axis {axis}"), want, got));
            }
        }
        Ok(())
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return Err(Error::dim("reshape element count", self.data.len(), n));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data: self.data.clone(),
            precision: self.precision,
        })
    }

    /// Swaps the two leading axes of a rank-3 tensor: `[a, b, c] -> [b, a, c]`.
    ///
    /// This is the `(f, h*w, c) <-> (h*w, f, c)` regrouping used by the
    /// temporal layers.
    pub fn swap_leading(&self) -> Result<Tensor> {
        self.expect_rank(3, "swap_leading input")?;
        let (a, b, c) = (self.dims[0], self.dims[1], self.dims[2]);
        let mut out = vec![0.0; self.data.len()];
        for i in 0..a {
            for j in 0..b {
                let src = (i * b + j) * c;
                let dst = (j * a + i) * c;
                out[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        Ok(Tensor {
            dims: vec![b, a, c],
            data: out,
            precision: self.precision,
        })
    }

    /// Row `i` along the leading axis, as a slice.
    pub fn slab(&self, i: usize) -> &[f64] {
        let stride = self.data.len() / self.dims[0].max(1);
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn slab_mut(&mut self, i: usize) -> &mut [f64] {
        let stride = self.data.len() / self.dims[0].max(1);
        &mut self.data[i * stride..(i + 1) * stride]
    }

    /// Sub-tensor at index `i` of the leading axis.
    pub fn index(&self, i: usize) -> Tensor {
        Tensor {
            dims: self.dims[1..].to_vec(),
            data: self.slab(i).to_vec(),
            precision: self.precision,
        }
    }

    /// Gathers leading-axis slabs in the given order.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor> {
        let n = self.dims[0];
        let mut data = Vec::with_capacity(indices.len() * self.data.len() / n.max(1));
        for &i in indices {
            if i >= n {
                return Err(Error::dim("gather index", n, i));
            }
            data.extend_from_slice(self.slab(i));
        }
        let mut dims = self.dims.clone();
        dims[0] = indices.len();
        Ok(Tensor {
            dims,
            data,
            precision: self.precision,
        })
    }

    /// Concatenates tensors along the leading axis.
    pub fn concat_leading(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyInput("concat of zero tensors".into()))?;
        let tail = &first.dims[1..];
        let mut lead = 0;
        let mut data = Vec::new();
        let mut precision = first.precision;
        for p in parts {
            if &p.dims[1..] != tail {
                return Err(Error::dim("concat trailing dims", tail.iter().product(), p.dims[1..].iter().product()));
            }
            lead += p.dims[0];
            data.extend_from_slice(&p.data);
            precision = precision.join(p.precision);
        }
        let mut dims = vec![lead];
        dims.extend_from_slice(tail);
        Ok(Tensor::from_op(dims, data, precision))
    }

    fn zip_with(&self, other: &Tensor, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.dims != other.dims {
            return Err(Error::dim(
                format!("{what} element count"),
                self.len(),
                other.len(),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::from_op(
            self.dims.clone(),
            data,
            self.precision.join(other.precision),
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor::from_op(
            self.dims.clone(),
            self.data.iter().map(|v| v * s).collect(),
            self.precision,
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_op(
            self.dims.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
            self.precision,
        )
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::dim("add_assign element count", self.len(), other.len()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.expect_rank(2, "matmul lhs")?;
        other.expect_rank(2, "matmul rhs")?;
        let (n, k) = (self.dims[0], self.dims[1]);
        let (k2, m) = (other.dims[0], other.dims[1]);
        if k != k2 {
            return Err(Error::dim("matmul inner", k, k2));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(&self.data, &other.data, &mut out, n, k, m);
        Ok(Tensor::from_op(
            vec![n, m],
            out,
            self.precision.join(other.precision),
        ))
    }

    /// `self · otherᵀ` for rank-2 tensors.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor> {
        self.expect_rank(2, "matmul_t lhs")?;
        other.expect_rank(2, "matmul_t rhs")?;
        let (n, k) = (self.dims[0], self.dims[1]);
        let (m, k2) = (other.dims[0], other.dims[1]);
        if k != k2 {
            return Err(Error::dim("matmul_t inner", k, k2));
        }
        let mut out = vec![0.0; n * m];
        matmul_t_into(&self.data, &other.data, &mut out, n, k, m);
        Ok(Tensor::from_op(
            vec![n, m],
            out,
            self.precision.join(other.precision),
        ))
    }

    /// `selfᵀ · other` for rank-2 tensors.
    pub fn t_matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.expect_rank(2, "t_matmul lhs")?;
        other.expect_rank(2, "t_matmul rhs")?;
        let (k, n) = (self.dims[0], self.dims[1]);
        let (k2, m) = (other.dims[0], other.dims[1]);
        if k != k2 {
            return Err(Error::dim("t_matmul inner", k, k2));
        }
        let mut out = vec![0.0; n * m];
        for r in 0..k {
            let a = &self.data[r * n..(r + 1) * n];
            let b = &other.data[r * m..(r + 1) * m];
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                let row = &mut out[i * m..(i + 1) * m];
                for (o, &bj) in row.iter_mut().zip(b) {
                    *o += ai * bj;
                }
            }
        }
        Ok(Tensor::from_op(
            vec![n, m],
            out,
            self.precision.join(other.precision),
        ))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        self.expect_rank(2, "transpose input")?;
        let (n, m) = (self.dims[0], self.dims[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Ok(Tensor {
            dims: vec![m, n],
            data: out,
            precision: self.precision,
        })
    }

    /// Mean over the leading axis.
    pub fn mean_leading(&self) -> Result<Tensor> {
        let n = *self
            .dims
            .first()
            .ok_or_else(|| Error::EmptyInput("mean of a scalar".into()))?;
        if n == 0 {
            return Err(Error::EmptyInput("mean over zero-length axis".into()));
        }
        let stride = self.data.len() / n;
        let mut out = vec![0.0; stride];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(self.slab(i)) {
                *o += v;
            }
        }
        let inv = n as f64;
        for o in &mut out {
            *o /= inv;
        }
        Ok(Tensor::from_op(self.dims[1..].to_vec(), out, self.precision))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `out[n×m] += a[n×k] · b[k×m]`
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[n×m] += a[n×k] · b[m×k]ᵀ`
pub(crate) fn matmul_t_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * m + j] += acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(matches!(
            Tensor::new(&[2, 3], vec![0.0; 5]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::new(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::new(&[3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.data(), &[58., 64., 139., 154.]);
        let bt = b.transpose().unwrap();
        assert_eq!(a.matmul_t(&bt).unwrap(), ab);
        let at = a.transpose().unwrap();
        assert_eq!(at.t_matmul(&b).unwrap(), ab);
    }

    #[test]
    fn swap_leading_round_trips() {
        let t = Tensor::from_fn(&[3, 4, 2], |i| i as f64);
        let s = t.swap_leading().unwrap();
        assert_eq!(s.dims(), &[4, 3, 2]);
        // element (i=1, j=2, c=1) moves to (j=2, i=1, c=1)
        assert_eq!(s.data()[(2 * 3 + 1) * 2 + 1], t.data()[(4 + 2) * 2 + 1]);
        assert_eq!(s.swap_leading().unwrap(), t);
    }

    #[test]
    fn f32_mode_rounds_results() {
        let a = Tensor::vector(vec![0.1]).with_precision(Precision::F32);
        let b = Tensor::vector(vec![0.2]);
        let c = a.add(&b).unwrap();
        assert_eq!(c.precision(), Precision::F32);
        assert_eq!(c.data()[0], (c.data()[0] as f32) as f64);
    }

    #[test]
    fn mean_leading_of_empty_axis_errors() {
        let t = Tensor::zeros(&[0, 3]);
        assert!(matches!(t.mean_leading(), Err(Error::EmptyInput(_))));
    }
}
