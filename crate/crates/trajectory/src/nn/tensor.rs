//! Dense row-major 2-D tensor and the three matmul kernels the tape needs.
//! Element type is generic so models run in f32 while gradient verification
//! can rerun in f64.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Floating point element. `from_f64`/`to_f64` keep constant handling terse.
pub trait Scalar:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + Default + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Work size (m*k*n) above which matmul kernels fan out over rows. Each
/// output row is still filled by one task in a fixed order, so results do
/// not depend on the thread count.
const PAR_WORK: usize = 1 << 17;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D<F> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Tensor2D<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2D {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "flat data does not fill {rows}x{cols}");
        Tensor2D { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor2D { rows, cols, data }
    }

    pub fn scalar(v: F) -> Self {
        Tensor2D::from_flat(1, 1, vec![v])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(F) -> F + Sync) -> Self {
        Tensor2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Errors out on the first non-finite value; `what` names the tensor in
    /// the error message.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numerics(format!(
                    "{what}[{},{}] = {v}",
                    i / self.cols.max(1),
                    i % self.cols.max(1)
                )));
            }
        }
        Ok(())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|&v| Scalar::to_f64(v)).collect()
    }
}

/// out += a @ b
pub fn matmul_acc<F: Scalar>(a: &Tensor2D<F>, b: &Tensor2D<F>, out: &mut Tensor2D<F>) {
    assert_eq!(a.cols, b.rows, "matmul inner dims {} vs {}", a.cols, b.rows);
    assert_eq!((out.rows, out.cols), (a.rows, b.cols), "matmul out shape");
    let (k, n) = (a.cols, b.cols);
    let row_body = |i: usize, orow: &mut [F]| {
        let arow = a.row(i);
        for l in 0..k {
            let ail = arow[l];
            if ail == F::zero() {
                continue;
            }
            let brow = b.row(l);
            for j in 0..n {
                orow[j] = orow[j] + ail * brow[j];
            }
        }
    };
    if a.rows * k * n >= PAR_WORK && a.rows > 1 {
        out.data
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, orow)| row_body(i, orow));
    } else {
        for i in 0..a.rows {
            row_body(i, out.row_mut(i));
        }
    }
}

/// out += a @ b^T  (a: m x k, b: n x k, out: m x n)
pub fn matmul_nt_acc<F: Scalar>(a: &Tensor2D<F>, b: &Tensor2D<F>, out: &mut Tensor2D<F>) {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dims");
    assert_eq!((out.rows, out.cols), (a.rows, b.rows), "matmul_nt out shape");
    let k = a.cols;
    let row_body = |i: usize, orow: &mut [F]| {
        let arow = a.row(i);
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = b.row(j);
            let mut acc = F::zero();
            for l in 0..k {
                acc = acc + arow[l] * brow[l];
            }
            *o = *o + acc;
        }
    };
    if a.rows * k * b.rows >= PAR_WORK && a.rows > 1 {
        out.data
            .par_chunks_mut(b.rows)
            .enumerate()
            .for_each(|(i, orow)| row_body(i, orow));
    } else {
        for i in 0..a.rows {
            row_body(i, out.row_mut(i));
        }
    }
}

/// out += a^T @ b  (a: m x k, b: m x n, out: k x n)
pub fn matmul_tn_acc<F: Scalar>(a: &Tensor2D<F>, b: &Tensor2D<F>, out: &mut Tensor2D<F>) {
    assert_eq!(a.rows, b.rows, "matmul_tn inner dims");
    assert_eq!((out.rows, out.cols), (a.cols, b.cols), "matmul_tn out shape");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m * k * n >= PAR_WORK && k > 1 {
        out.data.par_chunks_mut(n).enumerate().for_each(|(p, orow)| {
            for i in 0..m {
                let aip = a.data[i * k + p];
                if aip == F::zero() {
                    continue;
                }
                let brow = b.row(i);
                for j in 0..n {
                    orow[j] = orow[j] + aip * brow[j];
                }
            }
        });
    } else {
        for i in 0..m {
            let arow = a.row(i);
            let brow = b.row(i);
            for (p, &aip) in arow.iter().enumerate() {
                if aip == F::zero() {
                    continue;
                }
                let orow = out.row_mut(p);
                for j in 0..n {
                    orow[j] = orow[j] + aip * brow[j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor2D<f64> {
        Tensor2D::from_flat(rows, cols, v.to_vec())
    }

    #[test]
    fn matmul_small() {
        let a = t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(3, 2, &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let mut out = Tensor2D::zeros(2, 2);
        matmul_acc(&a, &b, &mut out);
        assert_eq!(out.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_kernels_agree_with_plain() {
        let a = t(3, 2, &[1.0, -2.0, 0.5, 3.0, -1.0, 4.0]);
        let b = t(3, 4, &[1.0, 0.0, 2.0, -1.0, 3.0, 1.0, 0.0, 2.0, -2.0, 1.5, 1.0, 0.0]);
        // a^T @ b
        let mut tn = Tensor2D::zeros(2, 4);
        matmul_tn_acc(&a, &b, &mut tn);
        let at = Tensor2D::from_fn(2, 3, |i, j| a.get(j, i));
        let mut plain = Tensor2D::zeros(2, 4);
        matmul_acc(&at, &b, &mut plain);
        assert_eq!(tn.data(), plain.data());
        // a @ (b^T rows as k) : use b2 with matching cols
        let b2 = t(5, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 1.0, 0.0, -2.0, 2.0, 2.0]);
        let mut nt = Tensor2D::zeros(3, 5);
        matmul_nt_acc(&a, &b2, &mut nt);
        let b2t = Tensor2D::from_fn(2, 5, |i, j| b2.get(j, i));
        let mut plain2 = Tensor2D::zeros(3, 5);
        matmul_acc(&a, &b2t, &mut plain2);
        assert_eq!(nt.data(), plain2.data());
    }

    #[test]
    fn finite_check_flags_nan() {
        let mut x: Tensor2D<f32> = Tensor2D::zeros(2, 2);
        x.set(1, 0, f32::NAN);
        assert!(x.ensure_finite("x").is_err());
        x.set(1, 0, 1.0);
        assert!(x.ensure_finite("x").is_ok());
    }
}
