//! Evaluation of fitted hazard surfaces: point predictions, grids with
//! delta-method standard errors, cumulative hazards and slices.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::basis::MarginalBasis;
use crate::binning::BinGrid;
use crate::error::{Error, Result};
use crate::estimator::se::Z95;
use crate::estimator::FittedModel;

/// Coordinate system of a [`SurfaceGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    /// Rows indexed by `u`, columns by `s`.
    Us,
    /// Same cells placed at `(t, s) = (u + s, s)`.
    Ts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub u_values: Vec<f64>,
    pub s_values: Vec<f64>,
    pub loghazard: Array2<f64>,
    pub hazard: Array2<f64>,
    pub se_loghazard: Array2<f64>,
    pub se_hazard: Array2<f64>,
    pub cumhazard: Option<Array2<f64>>,
    pub survival: Option<Array2<f64>>,
    /// False for masked cells.
    pub present: Array2<bool>,
    pub plane: Plane,
}

impl SurfaceGrid {
    /// A grid carrying a known hazard and no uncertainty.
    pub fn from_hazard(u_values: Vec<f64>, s_values: Vec<f64>, hazard: Array2<f64>) -> Result<Self> {
        if hazard.dim() != (u_values.len(), s_values.len()) {
            return Err(Error::InvalidGrid(format!(
                "hazard is {:?} but the axes have {} and {} points",
                hazard.dim(),
                u_values.len(),
                s_values.len()
            )));
        }
        if hazard.iter().any(|&h| !(h >= 0.0)) {
            return Err(Error::InvalidGrid("hazard values must be non-negative".into()));
        }
        let dim = hazard.dim();
        Ok(Self {
            u_values,
            s_values,
            loghazard: hazard.mapv(f64::ln),
            hazard,
            se_loghazard: Array2::zeros(dim),
            se_hazard: Array2::zeros(dim),
            cumhazard: None,
            survival: None,
            present: Array2::from_elem(dim, true),
            plane: Plane::Us,
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.hazard.dim()
    }

    /// Position of cell `(i, j)` in the grid's plane.
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        let (u, s) = (self.u_values[i], self.s_values[j]);
        match self.plane {
            Plane::Us => (u, s),
            Plane::Ts => (u + s, s),
        }
    }

    pub fn n_masked(&self) -> usize {
        self.present.iter().filter(|p| !**p).count()
    }

    /// Spacing of the `s` axis, if uniform.
    pub fn uniform_ds(&self) -> Result<f64> {
        uniform_step(&self.s_values)
    }
}

fn uniform_step(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InvalidGrid("at least two s values are needed".into()));
    }
    let step = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::InvalidGrid("s values must increase".into()));
    }
    for w in x.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-6 * step {
            return Err(Error::InvalidGrid(format!(
                "s values are not uniformly spaced (step {} vs {step})",
                w[1] - w[0]
            )));
        }
    }
    Ok(step)
}

/// Sparse tensor-product row of the design at `(u, s)`: flat coefficient
/// indices and weights.
fn tensor_row(bu: &MarginalBasis, bs: &MarginalBasis, u: f64, s: f64) -> Result<Vec<(usize, f64)>> {
    let c_u = bu.n_basis();
    let (fu, vu) = bu.eval_sparse(u)?;
    let (fs, vs) = bs.eval_sparse(s)?;
    let mut row = Vec::with_capacity(vu.len() * vs.len());
    for (b, ws) in vs.iter().enumerate() {
        for (a, wu) in vu.iter().enumerate() {
            let w = wu * ws;
            if w != 0.0 {
                row.push(((fu + a) + c_u * (fs + b), w));
            }
        }
    }
    Ok(row)
}

fn quad_form(row: &[(usize, f64)], v: ArrayView2<f64>) -> f64 {
    let mut q = 0.0;
    for &(k, wk) in row {
        for &(l, wl) in row {
            q += wk * wl * v[[k, l]];
        }
    }
    q
}

fn dot_alpha(row: &[(usize, f64)], alpha: &Array2<f64>) -> f64 {
    let c_u = alpha.nrows();
    row.iter().map(|&(k, w)| w * alpha[[k % c_u, k / c_u]]).sum()
}

/// Baseline log-hazard and its standard error on `u_grid x s_grid`.
pub fn evaluate_surface(model: &FittedModel, u_grid: &[f64], s_grid: &[f64]) -> Result<SurfaceGrid> {
    let (bu, bs) = (&model.spec.basis_u, &model.spec.basis_s);
    let v = model.alpha_covariance();
    let dim = (u_grid.len(), s_grid.len());
    let mut loghazard = Array2::zeros(dim);
    let mut se_loghazard = Array2::zeros(dim);
    for (i, &u) in u_grid.iter().enumerate() {
        for (j, &s) in s_grid.iter().enumerate() {
            let row = tensor_row(bu, bs, u, s)?;
            loghazard[[i, j]] = dot_alpha(&row, &model.alpha);
            se_loghazard[[i, j]] = quad_form(&row, v).max(0.0).sqrt();
        }
    }
    let hazard = loghazard.mapv(f64::exp);
    let se_hazard = &hazard * &se_loghazard;
    Ok(SurfaceGrid {
        u_values: u_grid.to_vec(),
        s_values: s_grid.to_vec(),
        loghazard,
        hazard,
        se_loghazard,
        se_hazard,
        cumhazard: None,
        survival: None,
        present: Array2::from_elem(dim, true),
        plane: Plane::Us,
    })
}

/// Observed-data region of a fit: its bin grid and which bins had exposure.
#[derive(Debug, Clone, Copy)]
pub struct Support<'a> {
    pub grid: &'a BinGrid,
    pub present: &'a Array2<bool>,
}

impl<'a> Support<'a> {
    pub fn of(model: &'a FittedModel) -> Self {
        Self { grid: &model.grid, present: &model.support }
    }

    fn covers(&self, u: f64, s: f64) -> bool {
        match (self.grid.u_bin(u), self.grid.s_bin(s)) {
            (Some(i), Some(j)) => self.present[[i, j]],
            _ => false,
        }
    }
}

/// Moves a `(u, s)` grid to the `(t, s)` plane, masking cells with
/// `u + s > t_max` and, if `support` is given, cells outside the data.
pub fn to_ts_plane(grid: &SurfaceGrid, t_max: Option<f64>, support: Option<Support>) -> Result<SurfaceGrid> {
    if grid.plane != Plane::Us {
        return Err(Error::InvalidGrid("grid is already on the (t, s) plane".into()));
    }
    let mut out = grid.clone();
    out.plane = Plane::Ts;
    for ((i, j), p) in out.present.indexed_iter_mut() {
        let (u, s) = (grid.u_values[i], grid.s_values[j]);
        if t_max.is_some_and(|t| u + s > t) || support.is_some_and(|sup| !sup.covers(u, s)) {
            *p = false;
        }
    }
    Ok(out)
}

/// Masks cells of a `(u, s)` grid that fall outside the data support.
pub fn mask_unsupported(grid: &mut SurfaceGrid, support: Support) {
    for ((i, j), p) in grid.present.indexed_iter_mut() {
        if !support.covers(grid.u_values[i], grid.s_values[j]) {
            *p = false;
        }
    }
}

/// Left-rectangle cumulative sums along `s`, counting the first cell.
fn cumulative(hazard: &Array2<f64>, ds: f64) -> Array2<f64> {
    let mut out = hazard.clone();
    for mut row in out.rows_mut() {
        let mut acc = 0.0;
        for v in row.iter_mut() {
            acc += *v * ds;
            *v = acc;
        }
    }
    out
}

/// Adds the cumulative hazard and survival along a uniform `s` axis.
pub fn cumulate(grid: &SurfaceGrid) -> Result<SurfaceGrid> {
    let ds = grid.uniform_ds()?;
    let mut out = grid.clone();
    let cum = cumulative(&grid.hazard, ds);
    out.survival = Some(cum.mapv(|c| (-c).exp()));
    out.cumhazard = Some(cum);
    Ok(out)
}

/// Points from `min` in steps of `ds` not beyond `max`.
pub fn s_axis(min: f64, max: f64, ds: f64) -> Result<Vec<f64>> {
    if !(ds > 0.0) || !(max > min) {
        return Err(Error::InvalidGrid(format!("cannot step from {min} to {max} by {ds}")));
    }
    let n = ((max - min) / ds + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| min + k as f64 * ds).collect())
}

/// Baseline surface on `u_grid` and an `s` axis starting at the basis
/// minimum with step `ds`, with cumulative hazard and survival.
pub fn cumulate_model(model: &FittedModel, u_grid: &[f64], ds: f64) -> Result<SurfaceGrid> {
    let bs = &model.spec.basis_s;
    let s = s_axis(bs.domain_min(), bs.domain_max(), ds)?;
    cumulate(&evaluate_surface(model, u_grid, &s)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    /// Fix `u`, curves over `s`.
    U,
    /// Fix `s`, curves over `u`.
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandType {
    /// `hazard * exp(+-1.96 se(log hazard))`, always positive.
    #[default]
    LogScale,
    /// `hazard +- 1.96 se(hazard)`.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub at: f64,
    /// Coordinates along the free axis.
    pub x: Vec<f64>,
    pub hazard: Vec<f64>,
    pub se_hazard: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Cross-sections of a `(u, s)` grid at the given cut points, linearly
/// interpolated between grid lines.
pub fn slices(grid: &SurfaceGrid, axis: SliceAxis, at: &[f64], band: BandType) -> Result<Vec<Slice>> {
    if grid.plane != Plane::Us {
        return Err(Error::InvalidGrid("slices need a (u, s) grid".into()));
    }
    let (cut_axis, free_axis) = match axis {
        SliceAxis::U => (&grid.u_values, &grid.s_values),
        SliceAxis::S => (&grid.s_values, &grid.u_values),
    };
    let (lo, hi) = (cut_axis[0], cut_axis[cut_axis.len() - 1]);
    at.iter()
        .map(|&c| {
            if !(c >= lo && c <= hi) {
                return Err(Error::InvalidGrid(format!("cut point {c} is outside [{lo}, {hi}]")));
            }
            let k = cut_axis.partition_point(|&v| v <= c).clamp(1, cut_axis.len()) - 1;
            let (k2, w) = if cut_axis[k] == c || k + 1 == cut_axis.len() {
                (k, 0.0)
            } else {
                (k + 1, (c - cut_axis[k]) / (cut_axis[k + 1] - cut_axis[k]))
            };
            let pick = |m: &Array2<f64>, idx: usize, f: usize| match axis {
                SliceAxis::U => m[[idx, f]],
                SliceAxis::S => m[[f, idx]],
            };
            let interp = |m: &Array2<f64>, f: usize| {
                let a = pick(m, k, f);
                if w == 0.0 { a } else { (1.0 - w) * a + w * pick(m, k2, f) }
            };
            let n = free_axis.len();
            let hazard: Vec<f64> = (0..n).map(|f| interp(&grid.hazard, f)).collect();
            let se_hazard: Vec<f64> = (0..n).map(|f| interp(&grid.se_hazard, f)).collect();
            let se_log: Vec<f64> = (0..n).map(|f| interp(&grid.se_loghazard, f)).collect();
            let (lower, upper) = match band {
                BandType::Symmetric => (
                    hazard.iter().zip(&se_hazard).map(|(h, s)| h - Z95 * s).collect(),
                    hazard.iter().zip(&se_hazard).map(|(h, s)| h + Z95 * s).collect(),
                ),
                BandType::LogScale => (
                    hazard.iter().zip(&se_log).map(|(h, s)| h * (-Z95 * s).exp()).collect(),
                    hazard.iter().zip(&se_log).map(|(h, s)| h * (Z95 * s).exp()).collect(),
                ),
            };
            Ok(Slice { at: c, x: free_axis.clone(), hazard, se_hazard, lower, upper })
        })
        .collect()
}

/// A point at which to predict, with covariate values keyed by the model's
/// coded covariate names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInput {
    pub u: f64,
    pub s: f64,
    #[serde(default)]
    pub covariates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub u: f64,
    pub s: f64,
    pub covariates: Vec<f64>,
    pub hazard: f64,
    pub cumhazard: f64,
    pub se_hazard: f64,
    pub survival: f64,
    pub basehazard: f64,
    pub se_basehazard: f64,
}

fn covariate_vector(model: &FittedModel, input: &PredictionInput) -> Result<Array1<f64>> {
    if let Some(unknown) = input.covariates.keys().find(|k| !model.covariate_names.contains(k)) {
        return Err(Error::Schema(format!(
            "unknown covariate '{unknown}'; the model has {:?}",
            model.covariate_names
        )));
    }
    model
        .covariate_names
        .iter()
        .map(|name| {
            input
                .covariates
                .get(name)
                .copied()
                .ok_or_else(|| Error::Schema(format!("missing value for covariate '{name}'")))
        })
        .collect()
}

/// Hazard, cumulative hazard and survival at each input point. The
/// cumulative hazard sums the covariate-adjusted hazard along `s` from the
/// start of the `s` domain in steps of `ds`, including the first step.
pub fn predict_rows(model: &FittedModel, rows: &[PredictionInput], ds: f64) -> Result<Vec<PredictionRow>> {
    if !(ds > 0.0) {
        return Err(Error::InvalidGrid(format!("integration step must be positive, got {ds}")));
    }
    let (bu, bs) = (&model.spec.basis_u, &model.spec.basis_s);
    let n_a = model.c_u() * model.c_s();
    let v = &model.covariance;
    rows.iter()
        .map(|input| {
            let z = covariate_vector(model, input)?;
            let row = tensor_row(bu, bs, input.u, input.s)?;
            let eta0 = dot_alpha(&row, &model.alpha);
            let lin = z.dot(&model.beta);
            let basehazard = eta0.exp();
            let hazard = (eta0 + lin).exp();

            let var_base = quad_form(&row, model.alpha_covariance());
            let mut var = var_base;
            for (q, zq) in z.iter().enumerate() {
                let cross: f64 = row.iter().map(|&(k, w)| w * v[[k, n_a + q]]).sum();
                var += 2.0 * zq * cross;
                for (r, zr) in z.iter().enumerate() {
                    var += zq * zr * v[[n_a + q, n_a + r]];
                }
            }

            let s0 = bs.domain_min();
            let steps = ((input.s - s0) / ds + 1e-9).floor().max(0.0) as usize;
            let mut cum = 0.0;
            for k in 0..=steps {
                let sk = (s0 + k as f64 * ds).min(bs.domain_max());
                let r = tensor_row(bu, bs, input.u, sk)?;
                cum += (dot_alpha(&r, &model.alpha) + lin).exp() * ds;
            }

            Ok(PredictionRow {
                u: input.u,
                s: input.s,
                covariates: z.to_vec(),
                hazard,
                cumhazard: cum,
                se_hazard: hazard * var.max(0.0).sqrt(),
                survival: (-cum).exp(),
                basehazard,
                se_basehazard: basehazard * var_base.max(0.0).sqrt(),
            })
        })
        .collect()
}
