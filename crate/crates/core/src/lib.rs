//! Smooth hazard surfaces over two time scales.
//!
//! Individual follow-up records are binned on a Lexis-type grid spanned by a
//! fixed entry time `u` and a running time `s`. The log-hazard over `(u, s)`
//! is a tensor product of B-splines with anisotropic difference penalties,
//! optionally shifted by proportional-hazards covariate effects, and is
//! estimated by penalized Poisson IWLS using array (GLAM) arithmetic.
//! Fitted models can be evaluated on arbitrary grids, integrated along `s`,
//! and combined across causes into cumulative incidence functions.

pub mod basis;
pub mod binning;
pub mod competing;
mod error;
mod fmt;
pub mod estimator;
mod linalg;
pub mod surface;

pub use basis::{bspline_basis, difference_matrix, penalty_2d, MarginalBasis, PenaltySpec};
pub use binning::{
    bin_records, make_grid, summarize, BinGrid, BinnedData, CovariateValue, IndividualRecord,
    PrepConfig,
};
pub use competing::{
    bootstrap_cif, cuminc, overall_survival, BootstrapConfig, CausePlan, CauseSurface, CifBands,
    CifSet, CifTarget, CompetingRecord, Resampling,
};
pub use error::{Error, Result};
pub use estimator::{
    coefficient_se, fit_1ts, fit_at_rho, glam_products, select_rho_grid, select_rho_numeric,
    summarize_fit, BicSampleSize, CoefficientSe, Criterion, FitOptions, FitProblem, Fitted1d,
    FittedModel, ModelSpec, NelderMeadOptions, Smoothing1d,
};
pub use surface::{
    cumulate, cumulate_model, evaluate_surface, mask_unsupported, predict_rows, s_axis, slices,
    to_ts_plane, BandType, Plane, PredictionInput, PredictionRow, Slice, SliceAxis, Support,
    SurfaceGrid,
};
