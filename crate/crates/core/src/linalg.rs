//! Dense symmetric solves backed by nalgebra.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Cholesky factor of a symmetric positive definite matrix.
pub(crate) struct SpdFactor(nalgebra::Cholesky<f64, nalgebra::Dyn>);

impl SpdFactor {
    pub(crate) fn new(a: &Array2<f64>) -> Result<Self> {
        nalgebra::Cholesky::new(to_na(a))
            .map(SpdFactor)
            .ok_or_else(|| Error::Singular(format!("{0}x{0} system", a.nrows())))
    }

    pub(crate) fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let x = self.0.solve(&DVector::from_iterator(b.len(), b.iter().copied()));
        Array1::from_iter(x.iter().copied())
    }

    pub(crate) fn inverse(&self) -> Array2<f64> {
        let mut inv = from_na(&self.0.inverse());
        symmetrize(&mut inv);
        inv
    }
}

pub(crate) fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// `trace(A B)` without forming the product.
pub(crate) fn trace_product(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut t = 0.0;
    for i in 0..n {
        for k in 0..n {
            t += a[[i, k]] * b[[k, i]];
        }
    }
    t
}
