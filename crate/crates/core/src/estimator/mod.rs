//! Penalized Poisson estimation of the two-dimensional hazard.
//!
//! The log-hazard of individual `i` on the bin grid is
//! `B_u A B_s' + z_i' beta`; expected counts are exposure times hazard.
//! Coefficients are found by penalized IWLS, the smoothing parameters by
//! AIC or BIC over a grid or by Nelder-Mead on the log10 scale.

mod glam;
mod iwls;
mod onets;
pub(crate) mod se;
mod select;
mod summary;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::basis::{MarginalBasis, PenaltySpec};
use crate::binning::BinGrid;
use crate::error::Result;

pub use glam::{glam_products, glam_vec, row_tensor, unvec_cols, vec_cols};
pub use iwls::{fit_at_rho, FitProblem, IwlsOutcome};
pub use onets::{fit_1ts, Fitted1d, Smoothing1d};
pub use se::{coefficient_se, CoefficientSe};
pub use select::{
    nelder_mead, select_rho_grid, select_rho_numeric, NelderMeadOptions, NelderMeadResult,
};
pub use summary::summarize_fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub basis_u: MarginalBasis,
    pub basis_s: MarginalBasis,
    pub penalty: PenaltySpec,
    pub has_covariates: bool,
}

impl ModelSpec {
    /// Bases spanning the full range of `grid`, with starting smoothing
    /// parameters of 1 on both axes.
    pub fn for_grid(
        grid: &BinGrid,
        nseg_u: usize,
        nseg_s: usize,
        bdeg: usize,
        pord: usize,
        has_covariates: bool,
    ) -> Result<Self> {
        let (lu, hu) = grid.range_u();
        let (ls, hs) = grid.range_s();
        Ok(Self {
            basis_u: MarginalBasis::new(lu, hu, nseg_u, bdeg)?,
            basis_s: MarginalBasis::new(ls, hs, nseg_s, bdeg)?,
            penalty: PenaltySpec::new(pord, 0.0, 0.0),
            has_covariates,
        })
    }

    pub fn c_u(&self) -> usize {
        self.basis_u.n_basis()
    }

    pub fn c_s(&self) -> usize {
        self.basis_s.n_basis()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

/// Sample size entering the BIC penalty `log(n) * ED`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BicSampleSize {
    /// Number of Poisson observations with positive exposure.
    #[default]
    NonzeroCells,
    /// Total number of events.
    Events,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop when no coefficient moves by more than this.
    pub coef_tol: f64,
    /// Stop when the penalized deviance changes by less than this, relatively.
    pub dev_tol: f64,
    pub bic_sample_size: BicSampleSize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 50, coef_tol: 1e-7, dev_tol: 1e-8, bic_sample_size: BicSampleSize::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitWarnings {
    /// Numerical search stopped at its evaluation cap.
    pub optimizer_cap_reached: bool,
    /// A negative variance was clipped to zero.
    pub se_clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub log10_rho_u: f64,
    pub log10_rho_s: f64,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub ed: Option<f64>,
    pub error: Option<String>,
}

/// Every smoothing-parameter pair visited during selection, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub criterion: Criterion,
    pub entries: Vec<SelectionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub grid: BinGrid,
    /// Spline coefficients, `c_u x c_s`.
    pub alpha: Array2<f64>,
    pub beta: Array1<f64>,
    pub covariate_names: Vec<String>,
    /// `(X'WX + P)^-1` for `(vec A, beta)`.
    pub covariance: Array2<f64>,
    pub log10_rho_u: f64,
    pub log10_rho_s: f64,
    pub ed: f64,
    pub deviance: f64,
    pub aic: f64,
    pub bic: f64,
    pub bic_sample_size: BicSampleSize,
    pub n_events: f64,
    /// Poisson observations with positive exposure.
    pub n_obs: usize,
    pub iterations: usize,
    /// Bins of the grid with positive aggregated exposure.
    pub support: Array2<bool>,
    pub warnings: FitWarnings,
    pub selection: Option<SelectionTable>,
}

impl FittedModel {
    pub fn c_u(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn c_s(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn rho_u(&self) -> f64 {
        10f64.powf(self.log10_rho_u)
    }

    pub fn rho_s(&self) -> f64 {
        10f64.powf(self.log10_rho_s)
    }

    pub fn criterion(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }

    /// BIC under either sample-size convention.
    pub fn bic_with(&self, n: BicSampleSize) -> f64 {
        let size = match n {
            BicSampleSize::NonzeroCells => self.n_obs as f64,
            BicSampleSize::Events => self.n_events,
        };
        self.deviance + size.ln() * self.ed
    }

    pub fn hazard_ratios(&self) -> Array1<f64> {
        self.beta.mapv(f64::exp)
    }

    /// Baseline log-hazard at the bin midpoints, `n_u x n_s`.
    pub fn bin_log_hazard(&self) -> Result<Array2<f64>> {
        let bu = self.spec.basis_u.design(&self.grid.midpoints_u)?;
        let bs = self.spec.basis_s.design(&self.grid.midpoints_s)?;
        Ok(bu.dot(&self.alpha).dot(&bs.t()))
    }

    /// Variance block of the spline coefficients.
    pub fn alpha_covariance(&self) -> ndarray::ArrayView2<'_, f64> {
        let n = self.c_u() * self.c_s();
        self.covariance.slice(ndarray::s![..n, ..n])
    }
}
