//! Array arithmetic for tensor-product designs.
//!
//! For a design `X = B_s (x) B_u` acting on column-stacked coefficients, the
//! inner products needed by IWLS follow from the marginal bases alone:
//! `X' W X` is a rearrangement of `T_u' W T_s`, where `T_u` and `T_s` are the
//! row tensors of the marginal bases, and `X' vec(M) = vec(B_u' M B_s)`.

use ndarray::{Array1, Array2, ArrayView2};

/// Row tensor `T[i, l + c*l2] = B[i, l] * B[i, l2]`.
pub fn row_tensor(b: ArrayView2<f64>) -> Array2<f64> {
    let (n, c) = b.dim();
    let mut t = Array2::zeros((n, c * c));
    for i in 0..n {
        for l2 in 0..c {
            let v2 = b[[i, l2]];
            if v2 == 0.0 {
                continue;
            }
            for l in 0..c {
                t[[i, l + c * l2]] = b[[i, l]] * v2;
            }
        }
    }
    t
}

/// `vec(B_u' M B_s)` with the `u` index running fastest.
pub fn glam_vec(bu: ArrayView2<f64>, bs: ArrayView2<f64>, m: ArrayView2<f64>) -> Array1<f64> {
    let prod = bu.t().dot(&m).dot(&bs);
    vec_cols(prod.view())
}

/// Column-stacks a matrix.
pub fn vec_cols(m: ArrayView2<f64>) -> Array1<f64> {
    m.t().iter().copied().collect()
}

/// Inverse of [`vec_cols`].
pub fn unvec_cols(v: &Array1<f64>, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(l, m)| v[l + rows * m])
}

/// Weighted Gram matrix `X' W X` for the tensor design, from precomputed
/// row tensors.
pub(crate) fn glam_gram(
    tu: ArrayView2<f64>,
    ts: ArrayView2<f64>,
    w: ArrayView2<f64>,
    c_u: usize,
    c_s: usize,
) -> Array2<f64> {
    let m = tu.t().dot(&w).dot(&ts);
    let n = c_u * c_s;
    let mut g = Array2::zeros((n, n));
    for m2 in 0..c_s {
        for m1 in 0..c_s {
            let col = m1 + c_s * m2;
            for l2 in 0..c_u {
                for l1 in 0..c_u {
                    g[[l1 + c_u * m1, l2 + c_u * m2]] = m[[l1 + c_u * l2, col]];
                }
            }
        }
    }
    g
}

/// `(X' W X, X' W r)` for the design `B_s (x) B_u`, where `W` and `r` are
/// `n_u x n_s` arrays of weights and working values.
pub fn glam_products(
    bu: ArrayView2<f64>,
    bs: ArrayView2<f64>,
    w: ArrayView2<f64>,
    r: ArrayView2<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let tu = row_tensor(bu);
    let ts = row_tensor(bs);
    let gram = glam_gram(tu.view(), ts.view(), w, bu.ncols(), bs.ncols());
    let wr = &w * &r;
    (gram, glam_vec(bu, bs, wr.view()))
}
