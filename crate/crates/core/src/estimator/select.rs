//! Smoothing-parameter selection by grid search or Nelder-Mead.

use rayon::prelude::*;

use super::iwls::FitProblem;
use super::{Criterion, FitOptions, FittedModel, ModelSpec, SelectionEntry, SelectionTable};
use crate::binning::BinnedData;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Offset of the initial simplex vertices along each axis.
    pub step: f64,
    /// Stop when the spread of values over the simplex falls below this.
    pub tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { step: 1.0, tol: 1e-4, max_evals: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Derivative-free minimization with the standard reflection, expansion,
/// contraction and shrink moves. Non-finite values count as `+inf`.
pub fn nelder_mead<F>(mut f: F, start: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let n = start.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> Option<f64> {
        if *evals >= opts.max_evals {
            return None;
        }
        *evals += 1;
        let v = f(x);
        Some(if v.is_finite() { v } else { f64::INFINITY })
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut capped = false;
    for k in 0..=n {
        let mut x = start.to_vec();
        if k > 0 {
            x[k - 1] += opts.step;
        }
        match eval(&x, &mut evals) {
            Some(v) => simplex.push((x, v)),
            None => {
                capped = true;
                break;
            }
        }
    }

    let mut converged = false;
    while !capped {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if simplex.len() == n + 1 && (worst - best).abs() < opts.tol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|(x, _)| x[d]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64, toward: &[f64]| -> Vec<f64> {
            centroid.iter().zip(toward).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = along(-REFLECT, &simplex[n].0);
        let Some(fr) = eval(&xr, &mut evals) else { break };

        if fr < best {
            let xe = along(-EXPAND, &simplex[n].0);
            let Some(fe) = eval(&xe, &mut evals) else {
                simplex[n] = (xr, fr);
                break;
            };
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, accept_below) = if fr < worst {
            (along(CONTRACT, &xr), fr)
        } else {
            (along(CONTRACT, &simplex[n].0), worst)
        };
        let Some(fc) = eval(&xc, &mut evals) else { break };
        if fc < accept_below || (fr < worst && fc <= fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let xs: Vec<f64> = x0.iter().zip(&vertex.0).map(|(a, b)| a + SHRINK * (b - a)).collect();
            match eval(&xs, &mut evals) {
                Some(v) => *vertex = (xs, v),
                None => {
                    capped = true;
                    break;
                }
            }
        }
    }

    let (x, fx) = simplex
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((start.to_vec(), f64::INFINITY));
    NelderMeadResult { x, fx, evals, converged }
}

fn entry(lu: f64, ls: f64, fit: &Result<FittedModel>) -> SelectionEntry {
    match fit {
        Ok(m) => SelectionEntry {
            log10_rho_u: lu,
            log10_rho_s: ls,
            aic: Some(m.aic),
            bic: Some(m.bic),
            ed: Some(m.ed),
            error: None,
        },
        Err(e) => SelectionEntry {
            log10_rho_u: lu,
            log10_rho_s: ls,
            aic: None,
            bic: None,
            ed: None,
            error: Some(e.to_string()),
        },
    }
}

/// Fits every pair of `grid_u x grid_s` and keeps the criterion minimizer.
/// Failed fits are recorded in the table and skipped.
pub fn select_rho_grid(
    binned: &BinnedData,
    spec: &ModelSpec,
    grid_u: &[f64],
    grid_s: &[f64],
    criterion: Criterion,
    options: &FitOptions,
) -> Result<FittedModel> {
    if grid_u.is_empty() || grid_s.is_empty() {
        return Err(Error::InvalidSpec("smoothing grids must not be empty".into()));
    }
    let problem = FitProblem::new(binned, spec, options)?;
    let pairs: Vec<(f64, f64)> =
        grid_u.iter().flat_map(|&u| grid_s.iter().map(move |&s| (u, s))).collect();
    let fits: Vec<Result<FittedModel>> =
        pairs.par_iter().map(|&(u, s)| problem.fit(u, s)).collect();

    let entries = pairs.iter().zip(&fits).map(|(&(u, s), f)| entry(u, s, f)).collect();
    let mut best: Option<FittedModel> = None;
    for fit in fits.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| fit.criterion(criterion) < b.criterion(criterion)) {
            best = Some(fit);
        }
    }
    let mut model = best.ok_or_else(|| Error::Search("every grid point failed to fit".into()))?;
    model.selection = Some(SelectionTable { criterion, entries });
    Ok(model)
}

/// Minimizes the criterion over `(log10 rho_u, log10 rho_s)` with
/// Nelder-Mead from `start`. Hitting the evaluation cap returns the best
/// fit so far with `warnings.optimizer_cap_reached` set.
pub fn select_rho_numeric(
    binned: &BinnedData,
    spec: &ModelSpec,
    start: (f64, f64),
    criterion: Criterion,
    options: &FitOptions,
    nm: &NelderMeadOptions,
) -> Result<FittedModel> {
    if !(start.0.is_finite() && start.1.is_finite()) {
        return Err(Error::InvalidSpec("starting smoothing parameters must be finite".into()));
    }
    let problem = FitProblem::new(binned, spec, options)?;
    let mut entries = Vec::new();
    let mut best: Option<FittedModel> = None;
    let result = nelder_mead(
        |x| {
            let fit = problem.fit(x[0], x[1]);
            entries.push(entry(x[0], x[1], &fit));
            match fit {
                Ok(m) => {
                    let value = m.criterion(criterion);
                    if best.as_ref().is_none_or(|b| value < b.criterion(criterion)) {
                        best = Some(m);
                    }
                    value
                }
                Err(_) => f64::INFINITY,
            }
        },
        &[start.0, start.1],
        nm,
    );
    let mut model = best.ok_or_else(|| Error::Search("no smoothing parameters could be fitted".into()))?;
    model.warnings.optimizer_cap_reached = !result.converged;
    model.selection = Some(SelectionTable { criterion, entries });
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::make_grid;
    use ndarray::Array2;

    fn rosen_quadratic(x: &[f64]) -> f64 {
        // Convex, anisotropic, with a cross term; minimizer (1.3, -0.7).
        let (a, b) = (x[0] - 1.3, x[1] + 0.7);
        3.0 * a * a + 0.8 * a * b + 0.5 * b * b + 10.0
    }

    #[test]
    fn recovers_quadratic_minimizer() {
        let opts = NelderMeadOptions { tol: 1e-10, ..Default::default() };
        let r = nelder_mead(rosen_quadratic, &[-2.0, 3.0], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.3).abs() < 1e-3 && (r.x[1] + 0.7).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn start_at_minimum_keeps_value() {
        let r = nelder_mead(rosen_quadratic, &[1.3, -0.7], &NelderMeadOptions::default());
        assert_eq!(r.fx, 10.0);
        assert_eq!(r.x, vec![1.3, -0.7]);
    }

    #[test]
    fn evaluation_cap_is_respected() {
        let opts = NelderMeadOptions { tol: 0.0, max_evals: 17, ..Default::default() };
        let r = nelder_mead(rosen_quadratic, &[5.0, 5.0], &opts);
        assert_eq!(r.evals, 17);
        assert!(!r.converged);
    }

    fn toy() -> (BinnedData, ModelSpec) {
        let grid = make_grid(0.0, 8.0, 1.0, 0.0, 6.0, 1.0).unwrap();
        let exposure = Array2::from_shape_fn((8, 6), |(i, j)| 20.0 + (i * 3 + j) as f64);
        let events = Array2::from_shape_fn((8, 6), |(i, j)| ((i + 2 * j) % 5) as f64);
        let binned = BinnedData {
            grid: grid.clone(),
            exposure,
            events,
            individuals: None,
            z: None,
            covariate_names: Vec::new(),
        };
        let spec = ModelSpec::for_grid(&grid, 4, 4, 3, 2, false).unwrap();
        (binned, spec)
    }

    #[test]
    fn singleton_grid_equals_direct_fit() {
        let (b, spec) = toy();
        let opts = FitOptions::default();
        let g = select_rho_grid(&b, &spec, &[0.5], &[1.5], Criterion::Aic, &opts).unwrap();
        let d = super::super::fit_at_rho(&b, &spec, 0.5, 1.5, &opts).unwrap();
        assert_eq!(g.alpha, d.alpha);
        assert_eq!(g.aic, d.aic);
        assert_eq!(g.selection.as_ref().unwrap().entries.len(), 1);
    }

    #[test]
    fn grid_table_is_reproducible_and_minimal() {
        let (b, spec) = toy();
        let opts = FitOptions::default();
        let grid = [-1.0, 0.0, 1.0, 2.0];
        let a = select_rho_grid(&b, &spec, &grid, &grid, Criterion::Bic, &opts).unwrap();
        let c = select_rho_grid(&b, &spec, &grid, &grid, Criterion::Bic, &opts).unwrap();
        assert_eq!(a.selection, c.selection);
        let table = a.selection.unwrap();
        assert_eq!(table.entries.len(), 16);
        let min = table.entries.iter().filter_map(|e| e.bic).fold(f64::INFINITY, f64::min);
        assert_eq!(a.bic, min);
    }

    #[test]
    fn numeric_search_improves_on_start() {
        let (b, spec) = toy();
        let opts = FitOptions::default();
        let start = super::super::fit_at_rho(&b, &spec, 3.0, 3.0, &opts).unwrap();
        let m = select_rho_numeric(&b, &spec, (3.0, 3.0), Criterion::Aic, &opts, &Default::default())
            .unwrap();
        assert!(m.aic <= start.aic);
        assert!(m.selection.unwrap().entries.len() <= 200);
    }
}
