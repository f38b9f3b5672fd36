//! Marginal B-spline bases, difference operators and the anisotropic
//! two-dimensional penalty.
//!
//! Coefficients of the tensor-product surface are held in a `c_u x c_s`
//! matrix `A`. Wherever it is flattened, columns are stacked with the
//! `u` index running fastest: entry `(l, m)` lives at `l + c_u * m`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when checking that a point lies in the domain.
const DOMAIN_SLACK: f64 = 1e-10;

/// Equally spaced B-spline basis on `[domain_min, domain_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalBasis {
    domain_min: f64,
    domain_max: f64,
    nseg: usize,
    bdeg: usize,
    knots: Vec<f64>,
}

impl MarginalBasis {
    pub fn new(domain_min: f64, domain_max: f64, nseg: usize, bdeg: usize) -> Result<Self> {
        if nseg < 1 {
            return Err(Error::InvalidSpec("number of segments must be at least 1".into()));
        }
        if !(domain_min.is_finite() && domain_max.is_finite()) || domain_max <= domain_min {
            return Err(Error::InvalidSpec(format!(
                "basis domain [{domain_min}, {domain_max}] is empty or not finite"
            )));
        }
        let dx = (domain_max - domain_min) / nseg as f64;
        let knots = (0..=nseg + 2 * bdeg)
            .map(|k| domain_min + (k as f64 - bdeg as f64) * dx)
            .collect();
        Ok(Self { domain_min, domain_max, nseg, bdeg, knots })
    }

    pub fn domain_min(&self) -> f64 {
        self.domain_min
    }

    pub fn domain_max(&self) -> f64 {
        self.domain_max
    }

    pub fn nseg(&self) -> usize {
        self.nseg
    }

    pub fn bdeg(&self) -> usize {
        self.bdeg
    }

    /// Number of basis functions, `nseg + bdeg`.
    pub fn n_basis(&self) -> usize {
        self.nseg + self.bdeg
    }

    /// Extended knot vector: `nseg + 1` domain knots plus `bdeg` on each side.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = DOMAIN_SLACK * (self.domain_max - self.domain_min);
        x >= self.domain_min - slack && x <= self.domain_max + slack
    }

    /// Nonzero basis values at `x`: returns the index of the first nonzero
    /// function and the `bdeg + 1` values starting there.
    pub fn eval_sparse(&self, x: f64) -> Result<(usize, Vec<f64>)> {
        if !x.is_finite() || !self.contains(x) {
            return Err(Error::OutOfDomain { value: x, min: self.domain_min, max: self.domain_max });
        }
        let x = x.clamp(self.domain_min, self.domain_max);
        let dx = (self.domain_max - self.domain_min) / self.nseg as f64;
        // x == domain_max belongs to the last segment.
        let seg = (((x - self.domain_min) / dx).floor() as usize).min(self.nseg - 1);
        let p = self.bdeg;
        let span = seg + p;
        let t = &self.knots;

        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for r in 1..=p {
            left[r] = x - t[span + 1 - r];
            right[r] = t[span + r] - x;
            let mut saved = 0.0;
            for k in 0..r {
                let tmp = values[k] / (right[k + 1] + left[r - k]);
                values[k] = saved + right[k + 1] * tmp;
                saved = left[r - k] * tmp;
            }
            values[r] = saved;
        }
        Ok((seg, values))
    }

    /// Dense basis matrix, one row per point.
    pub fn design(&self, x: &[f64]) -> Result<Array2<f64>> {
        let mut b = Array2::zeros((x.len(), self.n_basis()));
        for (i, &xi) in x.iter().enumerate() {
            let (first, values) = self.eval_sparse(xi)?;
            for (k, v) in values.into_iter().enumerate() {
                b[[i, first + k]] = v;
            }
        }
        Ok(b)
    }
}

/// Evaluates `basis` at every point of `x`.
pub fn bspline_basis(basis: &MarginalBasis, x: &[f64]) -> Result<Array2<f64>> {
    basis.design(x)
}

/// Difference order and the two smoothing parameters on the log10 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub pord: usize,
    pub log10_rho_u: f64,
    pub log10_rho_s: f64,
}

impl PenaltySpec {
    pub fn new(pord: usize, log10_rho_u: f64, log10_rho_s: f64) -> Self {
        Self { pord, log10_rho_u, log10_rho_s }
    }

    pub fn rho_u(&self) -> f64 {
        10f64.powf(self.log10_rho_u)
    }

    pub fn rho_s(&self) -> f64 {
        10f64.powf(self.log10_rho_s)
    }

    pub fn validate(&self, c_u: usize, c_s: usize) -> Result<()> {
        if self.pord < 1 {
            return Err(Error::InvalidSpec("penalty order must be at least 1".into()));
        }
        if self.pord >= c_u.min(c_s) {
            return Err(Error::InvalidSpec(format!(
                "penalty order {} must be smaller than the number of coefficients per axis ({})",
                self.pord,
                c_u.min(c_s)
            )));
        }
        if !(self.log10_rho_u.is_finite() && self.log10_rho_s.is_finite()) {
            return Err(Error::InvalidSpec("smoothing parameters must be finite".into()));
        }
        Ok(())
    }
}

/// `pord`-th order forward-difference operator of shape `(c - pord) x c`.
pub fn difference_matrix(c: usize, pord: usize) -> Result<Array2<f64>> {
    if pord >= c {
        return Err(Error::InvalidSpec(format!(
            "difference order {pord} must be smaller than the number of coefficients {c}"
        )));
    }
    let mut d = Array2::<f64>::eye(c);
    for _ in 0..pord {
        let rows = d.nrows() - 1;
        let next = Array2::from_shape_fn((rows, c), |(i, j)| d[[i + 1, j]] - d[[i, j]]);
        d = next;
    }
    Ok(d)
}

/// `D^T D` for the marginal difference operator.
pub(crate) fn marginal_penalty(c: usize, pord: usize) -> Result<Array2<f64>> {
    let d = difference_matrix(c, pord)?;
    Ok(d.t().dot(&d))
}

/// `rho_u (I_cs (x) Du'Du) + rho_s (Ds'Ds (x) I_cu)` for column-stacked `A`.
pub fn penalty_2d(spec: &PenaltySpec, c_u: usize, c_s: usize) -> Result<Array2<f64>> {
    spec.validate(c_u, c_s)?;
    let pu = marginal_penalty(c_u, spec.pord)?;
    let ps = marginal_penalty(c_s, spec.pord)?;
    Ok(assemble_penalty(spec.rho_u(), pu.view(), spec.rho_s(), ps.view()))
}

pub(crate) fn assemble_penalty(
    rho_u: f64,
    pu: ArrayView2<f64>,
    rho_s: f64,
    ps: ArrayView2<f64>,
) -> Array2<f64> {
    let (c_u, c_s) = (pu.nrows(), ps.nrows());
    let n = c_u * c_s;
    let mut p = Array2::zeros((n, n));
    for m in 0..c_s {
        for l in 0..c_u {
            for l2 in 0..c_u {
                p[[l + c_u * m, l2 + c_u * m]] += rho_u * pu[[l, l2]];
            }
        }
    }
    for m in 0..c_s {
        for m2 in 0..c_s {
            let w = rho_s * ps[[m, m2]];
            if w == 0.0 {
                continue;
            }
            for l in 0..c_u {
                p[[l + c_u * m, l + c_u * m2]] += w;
            }
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook recursive Cox-de Boor definition on the extended knot vector.
    fn cox_de_boor(t: &[f64], i: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            return if t[i] <= x && x < t[i + 1] { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = t[i + p] - t[i];
        if d1 > 0.0 {
            v += (x - t[i]) / d1 * cox_de_boor(t, i, p - 1, x);
        }
        let d2 = t[i + p + 1] - t[i + 1];
        if d2 > 0.0 {
            v += (t[i + p + 1] - x) / d2 * cox_de_boor(t, i + 1, p - 1, x);
        }
        v
    }

    fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let (ar, ac) = a.dim();
        let (br, bc) = b.dim();
        Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| {
            a[[i / br, j / bc]] * b[[i % br, j % bc]]
        })
    }

    #[test]
    fn degree_zero_is_indicator() {
        let b = MarginalBasis::new(0.0, 1.0, 2, 0).unwrap();
        let row = bspline_basis(&b, &[0.25]).unwrap();
        assert_eq!(row.row(0).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn linear_hat_at_midpoint() {
        let b = MarginalBasis::new(0.0, 1.0, 1, 1).unwrap();
        let row = bspline_basis(&b, &[0.5]).unwrap();
        assert_eq!(row.row(0).to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn rotterdam_u_basis_has_fifteen_columns() {
        let b = MarginalBasis::new(24.0, 90.0, 12, 3).unwrap();
        let mids: Vec<f64> = (0..66).map(|i| 24.5 + i as f64).collect();
        let m = bspline_basis(&b, &mids).unwrap();
        assert_eq!(m.ncols(), 15);
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_recursive_oracle() {
        let b = MarginalBasis::new(0.0, 1.0, 4, 3).unwrap();
        let row = bspline_basis(&b, &[0.3]).unwrap();
        for j in 0..b.n_basis() {
            let expected = cox_de_boor(b.knots(), j, 3, 0.3);
            assert!((row[[0, j]] - expected).abs() < 1e-14, "column {j}");
        }
    }

    #[test]
    fn right_edge_belongs_to_last_segment() {
        let b = MarginalBasis::new(0.0, 2.0, 4, 3).unwrap();
        let m = bspline_basis(&b, &[2.0]).unwrap();
        assert!((m.row(0).sum() - 1.0).abs() < 1e-12);
        assert!(m[[0, b.n_basis() - 1]] > 0.0);
    }

    #[test]
    fn rejects_points_outside_domain() {
        let b = MarginalBasis::new(0.0, 1.0, 4, 3).unwrap();
        match bspline_basis(&b, &[0.5, 1.5]) {
            Err(Error::OutOfDomain { value, .. }) => assert_eq!(value, 1.5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(MarginalBasis::new(0.0, 1.0, 0, 3), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn knots_equally_spaced() {
        let b = MarginalBasis::new(24.0, 90.0, 12, 3).unwrap();
        let k = b.knots();
        assert_eq!(k.len(), 12 + 1 + 6);
        let dx = k[1] - k[0];
        for w in k.windows(2) {
            assert!(w[1] > w[0]);
            assert!(((w[1] - w[0]) - dx).abs() / dx < 1e-12);
        }
    }

    #[test]
    fn difference_examples() {
        let d1 = difference_matrix(3, 1).unwrap();
        assert_eq!(d1, ndarray::array![[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0]]);
        let d2 = difference_matrix(4, 2).unwrap();
        assert_eq!(d2, ndarray::array![[1.0, -2.0, 1.0, 0.0], [0.0, 1.0, -2.0, 1.0]]);
        assert!(matches!(difference_matrix(3, 3), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn third_differences_compose_first_differences() {
        let d = difference_matrix(7, 3).unwrap();
        let composed = difference_matrix(5, 1)
            .unwrap()
            .dot(&difference_matrix(6, 1).unwrap())
            .dot(&difference_matrix(7, 1).unwrap());
        assert_eq!(d, composed);
    }

    #[test]
    fn zero_rho_gives_zero_penalty() {
        // log10(0) is not finite; assemble directly with zero weights.
        let pu = marginal_penalty(5, 2).unwrap();
        let ps = marginal_penalty(4, 2).unwrap();
        let p = assemble_penalty(0.0, pu.view(), 0.0, ps.view());
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn penalty_matches_dense_kronecker() {
        let (c_u, c_s) = (4, 3);
        let spec = PenaltySpec::new(1, 2f64.log10(), 5f64.log10());
        let p = penalty_2d(&spec, c_u, c_s).unwrap();
        let du = difference_matrix(c_u, 1).unwrap();
        let ds = difference_matrix(c_s, 1).unwrap();
        let expected = kron(&Array2::eye(c_s), &du.t().dot(&du)) * 2.0
            + kron(&ds.t().dot(&ds), &Array2::eye(c_u)) * 5.0;
        for (a, b) in p.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn second_order_penalty_annihilates_bilinear_arrays() {
        let (c_u, c_s) = (7, 6);
        let p = penalty_2d(&PenaltySpec::new(2, 3.0, -1.0), c_u, c_s).unwrap();
        let (a0, b0, g0, d0) = (0.3, -1.2, 0.7, 0.05);
        let v = ndarray::Array1::from_shape_fn(c_u * c_s, |k| {
            let (l, m) = ((k % c_u) as f64, (k / c_u) as f64);
            a0 + b0 * l + g0 * m + d0 * l * m
        });
        let r = p.dot(&v);
        assert!(r.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-10);
    }

    #[test]
    fn penalty_symmetric_with_pord_squared_null_space() {
        use nalgebra::DMatrix;
        let (c_u, c_s, pord) = (6, 5, 2);
        let p = penalty_2d(&PenaltySpec::new(pord, 0.5, 1.5), c_u, c_s).unwrap();
        let n = c_u * c_s;
        let m = DMatrix::from_fn(n, n, |i, j| p[[i, j]]);
        assert!((&m - m.transpose()).amax() < 1e-12);
        let eig = m.symmetric_eigenvalues();
        let scale = eig.amax();
        assert!(eig.min() >= -1e-10);
        let null = eig.iter().filter(|&&e| e.abs() < 1e-9 * scale).count();
        assert_eq!(null, pord * pord);
    }

    #[test]
    fn rejects_pord_too_large() {
        assert!(penalty_2d(&PenaltySpec::new(3, 0.0, 0.0), 3, 8).is_err());
        assert!(penalty_2d(&PenaltySpec::new(0, 0.0, 0.0), 5, 5).is_err());
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_local_support(
            nseg in 1usize..20, bdeg in 0usize..5, frac in 0.0f64..=1.0,
            lo in -50.0f64..50.0, width in 0.1f64..100.0,
        ) {
            let b = MarginalBasis::new(lo, lo + width, nseg, bdeg).unwrap();
            let x = lo + frac * width;
            let row = bspline_basis(&b, &[x]).unwrap();
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().filter(|v| **v != 0.0).count() <= bdeg + 1);
            prop_assert!(row.iter().all(|v| *v >= -1e-15));
        }

        #[test]
        fn differences_annihilate_low_degree_polynomials(
            c in 4usize..15, pord in 1usize..4, coefs in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            prop_assume!(pord < c);
            let d = difference_matrix(c, pord).unwrap();
            let v = ndarray::Array1::from_shape_fn(c, |i| {
                (0..pord).map(|k| coefs[k] * (i as f64).powi(k as i32)).sum::<f64>()
            });
            let r = d.dot(&v);
            prop_assert!(r.iter().all(|x| x.abs() < 1e-8));
        }
    }
}
