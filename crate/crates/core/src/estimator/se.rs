//! Standard errors of the fitted coefficients.

use ndarray::{Array1, Array2};

use super::FittedModel;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSe {
    /// Standard errors of the spline coefficients, `c_u x c_s`.
    pub se_alpha: Array2<f64>,
    pub se_beta: Array1<f64>,
    pub hazard_ratio: Array1<f64>,
    /// Delta-method interval `HR +- 1.96 HR se(beta)`.
    pub hr_lower: Array1<f64>,
    pub hr_upper: Array1<f64>,
    /// Some diagonal entry of the covariance was negative and set to zero.
    pub clipped: bool,
}

/// Square roots of the covariance diagonal, negative entries clipped to 0.
pub(crate) fn diag_se(v: &Array2<f64>) -> (Array1<f64>, bool) {
    let mut clipped = false;
    let se = v
        .diag()
        .mapv(|d| {
            if d < 0.0 {
                clipped = true;
                0.0
            } else {
                d.sqrt()
            }
        });
    (se, clipped)
}

pub fn coefficient_se(model: &FittedModel) -> CoefficientSe {
    let (c_u, c_s) = (model.c_u(), model.c_s());
    let n_a = c_u * c_s;
    let (se, clipped) = diag_se(&model.covariance);
    let se_alpha = Array2::from_shape_fn((c_u, c_s), |(l, m)| se[l + c_u * m]);
    let se_beta = se.slice(ndarray::s![n_a..]).to_owned();
    let hr = model.beta.mapv(f64::exp);
    let half = &hr * &se_beta * Z95;
    let lower = &hr - &half;
    let upper = &hr + &half;
    CoefficientSe { se_alpha, se_beta, hazard_ratio: hr, hr_lower: lower, hr_upper: upper, clipped }
}
