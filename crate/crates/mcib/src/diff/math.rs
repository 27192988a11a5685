//! Shared forward kernels.
//!
//! Both the recording tape and the plain (inference) evaluation path call
//! these functions, so the two paths produce bitwise-identical values for
//! the same inputs and parameters.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Variance stabilizer used by layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        detail: format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.rows() {
        return Err(shape_err("matmul", a, b));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(m, n);
    for i in 0..m {
        for p in 0..k {
            let aip = a.get(i, p);
            if aip == 0.0 {
                continue;
            }
            for j in 0..n {
                out.set(i, j, out.get(i, j) + aip * b.get(p, j));
            }
        }
    }
    Ok(out)
}

pub fn transpose(a: &Tensor) -> Tensor {
    Tensor::from_fn(a.cols(), a.rows(), |r, c| a.get(c, r))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.same_shape(b) {
        return Err(shape_err("add", a, b));
    }
    zip_map(a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.same_shape(b) {
        return Err(shape_err("sub", a, b));
    }
    zip_map(a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.same_shape(b) {
        return Err(shape_err("mul", a, b));
    }
    zip_map(a, b, |x, y| x * y)
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.rows(), a.cols(), data)
}

pub fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(a.rows(), a.cols(), a.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

/// Adds a 1xN row vector to every row of an MxN matrix.
pub fn add_row(a: &Tensor, row: &Tensor) -> Result<Tensor> {
    if row.rows() != 1 || row.cols() != a.cols() {
        return Err(shape_err("add_row", a, row));
    }
    Ok(Tensor::from_fn(a.rows(), a.cols(), |r, c| {
        a.get(r, c) + row.get(0, c)
    }))
}

/// Multiplies every row of an MxN matrix elementwise by a 1xN row vector.
pub fn mul_row(a: &Tensor, row: &Tensor) -> Result<Tensor> {
    if row.rows() != 1 || row.cols() != a.cols() {
        return Err(shape_err("mul_row", a, row));
    }
    Ok(Tensor::from_fn(a.rows(), a.cols(), |r, c| {
        a.get(r, c) * row.get(0, c)
    }))
}

pub fn slice_cols(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    if start + len > a.cols() || len == 0 {
        return Err(Error::Shape {
            op: "slice_cols",
            detail: format!("cols {}..{} of {}x{}", start, start + len, a.rows(), a.cols()),
        });
    }
    Ok(Tensor::from_fn(a.rows(), len, |r, c| a.get(r, start + c)))
}

pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::usage("concat_cols needs at least one input"));
    }
    let rows = parts[0].rows();
    if parts.iter().any(|p| p.rows() != rows) {
        return Err(Error::Shape {
            op: "concat_cols",
            detail: format!(
                "row counts differ: {:?}",
                parts.iter().map(|p| p.rows()).collect::<Vec<_>>()
            ),
        });
    }
    let total: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Tensor::zeros(rows, total);
    for r in 0..rows {
        let mut offset = 0;
        for p in parts {
            for c in 0..p.cols() {
                out.set(r, offset + c, p.get(r, c));
            }
            offset += p.cols();
        }
    }
    Ok(out)
}

/// Row-wise softmax with the max subtracted before exponentiation.
pub fn softmax(a: &Tensor) -> Tensor {
    rowwise(a, |row, out| {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &x) in out.iter_mut().zip(row) {
            *o = (x - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    })
}

pub fn log_softmax(a: &Tensor) -> Tensor {
    rowwise(a, |row, out| {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
        for (o, &x) in out.iter_mut().zip(row) {
            *o = x - log_sum;
        }
    })
}

/// Row-wise normalization to zero mean and unit variance (pre-affine).
pub fn layer_norm(a: &Tensor, eps: f64) -> Tensor {
    rowwise(a, |row, out| {
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for (o, &x) in out.iter_mut().zip(row) {
            *o = (x - mean) * inv;
        }
    })
}

fn rowwise(a: &Tensor, f: impl Fn(&[f64], &mut [f64])) -> Tensor {
    let mut out = Tensor::zeros(a.rows(), a.cols());
    let cols = a.cols();
    for r in 0..a.rows() {
        let row = &a.data()[r * cols..(r + 1) * cols];
        f(row, &mut out.data_mut()[r * cols..(r + 1) * cols]);
    }
    out
}

/// Mean over rows: MxN -> 1xN.
pub fn mean_rows(a: &Tensor) -> Tensor {
    let m = a.rows() as f64;
    let mut out = Tensor::zeros(1, a.cols());
    for c in 0..a.cols() {
        let mut s = 0.0;
        for r in 0..a.rows() {
            s += a.get(r, c);
        }
        out.set(0, c, s / m);
    }
    out
}

pub fn sum_all(a: &Tensor) -> f64 {
    a.data().iter().sum()
}

pub fn clamp(a: &Tensor, lo: f64, hi: f64) -> Tensor {
    map(a, |x| x.clamp(lo, hi))
}

/// Mean negative log-likelihood of the true labels under row-wise log-probabilities.
pub fn nll_mean(logp: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.len() != logp.rows() {
        return Err(Error::Shape {
            op: "nll_mean",
            detail: format!("{} labels for {} rows", labels.len(), logp.rows()),
        });
    }
    let mut s = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= logp.cols() {
            return Err(Error::data(format!(
                "label {y} out of range for {} classes (row {r})",
                logp.cols()
            )));
        }
        s -= logp.get(r, y);
    }
    Ok(s / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_returns_input() {
        let a = Tensor::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = matmul(&Tensor::eye(3), &a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_shape_error_names_dims() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
        assert!(err.to_string().contains("2x3"));
    }

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let s = softmax(&Tensor::row(vec![0.0, 0.0, 0.0]));
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let out = layer_norm(&Tensor::row(vec![4.2, 4.2, 4.2, 4.2]), LAYER_NORM_EPS);
        for &v in out.data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn log_softmax_matches_softmax_log() {
        let x = Tensor::new(2, 3, vec![0.3, -1.2, 2.0, 0.0, 0.1, -0.7]).unwrap();
        let a = log_softmax(&x);
        let b = softmax(&x);
        for (la, sb) in a.data().iter().zip(b.data()) {
            assert!((la.exp() - sb).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let a = Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(2, 1, vec![5.0, 6.0]).unwrap();
        let cat = concat_cols(&[&a, &b]).unwrap();
        assert_eq!(slice_cols(&cat, 0, 2).unwrap(), a);
        assert_eq!(slice_cols(&cat, 2, 1).unwrap(), b);
    }
}
