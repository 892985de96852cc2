//! Dense 2-D tensors over f32 (training default) or f64 (verification runs).

use crate::error::{Error, Result};

/// Scalar type used throughout the numeric kernel. Everything is generic so
/// the same code path runs in single precision for training and in double
/// precision for gradient verification.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssignOps
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self {
        num_traits::cast(x).expect("finite f64 converts")
    }
    fn as_f64(self) -> f64 {
        num_traits::cast(self).expect("real converts to f64")
    }
    fn from_f32(x: f32) -> Self {
        num_traits::cast(x).expect("finite f32 converts")
    }
    fn as_f32(self) -> f32 {
        num_traits::ToPrimitive::to_f32(&self).unwrap_or(f32::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Row-major dense matrix. Scalars are `[1, 1]`, per-row reductions `[m, 1]`,
/// biases `[1, n]`.
#[derive(Clone, PartialEq)]
pub struct Tensor<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> std::fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl<F: Real> Tensor<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn full(rows: usize, cols: usize, value: F) -> Self {
        Tensor { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn scalar(value: F) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![value] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "tensor data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        Ok(Tensor { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Tensor<F>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| G::from_f64(x.as_f64())).collect(),
        }
    }

    /// Lossy round-trip through f32, for checkpoint serialization.
    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|x| x.as_f32()).collect()
    }

    pub fn from_f32_slice(rows: usize, cols: usize, data: &[f32]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&x| F::from_f32(x)).collect())
    }
}

/// `a @ b` with optional transposes; the workhorse behind the matmul op and
/// its vector-Jacobian products.
pub fn matmul<F: Real>(a: &Tensor<F>, b: &Tensor<F>, ta: bool, tb: bool) -> Result<Tensor<F>> {
    let (m, ka) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    if ka != kb {
        return Err(Error::invalid(format!(
            "matmul inner dims differ: {ka} vs {kb} (a {}x{}{}, b {}x{}{})",
            a.rows,
            a.cols,
            if ta { "^T" } else { "" },
            b.rows,
            b.cols,
            if tb { "^T" } else { "" },
        )));
    }
    let mut out = Tensor::zeros(m, n);
    for i in 0..m {
        for l in 0..ka {
            let aval = if ta { a.get(l, i) } else { a.get(i, l) };
            if aval == F::zero() {
                continue;
            }
            let orow = out.row_mut(i);
            if tb {
                for (j, o) in orow.iter_mut().enumerate() {
                    *o += aval * b.get(j, l);
                }
            } else {
                let brow = b.row(l);
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += aval * bv;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_shapes_and_values() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = matmul(&a, &b, false, false).unwrap();
        assert_eq!(c.shape(), (2, 2));
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
        // (a@b)^T == b^T @ a^T
        let ct = matmul(&b, &a, true, true).unwrap();
        assert_eq!(ct.get(0, 0), c.get(0, 0));
        assert_eq!(ct.get(1, 0), c.get(0, 1));
        assert!(matmul(&a, &a, false, false).is_err());
    }
}
