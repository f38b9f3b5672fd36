//! Penalized Poisson hazard over a single time scale.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::select::{nelder_mead, NelderMeadOptions};
use super::{BicSampleSize, Criterion, FitOptions};
use crate::basis::{marginal_penalty, MarginalBasis};
use crate::error::{Error, Result};
use crate::linalg::{trace_product, SpdFactor};

/// How the smoothing parameter of a one-dimensional fit is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Smoothing1d {
    Fixed(f64),
    Grid { values: Vec<f64>, criterion: Criterion },
    Numeric { start: f64, criterion: Criterion },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitted1d {
    pub basis: MarginalBasis,
    pub pord: usize,
    pub alpha: Array1<f64>,
    pub covariance: Array2<f64>,
    pub log10_rho: f64,
    pub ed: f64,
    pub deviance: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_events: f64,
    pub n_obs: usize,
    pub iterations: usize,
    pub optimizer_cap_reached: bool,
}

impl Fitted1d {
    pub fn criterion(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }

    pub fn log_hazard(&self, x: &[f64]) -> Result<Array1<f64>> {
        Ok(self.basis.design(x)?.dot(&self.alpha))
    }

    pub fn hazard(&self, x: &[f64]) -> Result<Array1<f64>> {
        Ok(self.log_hazard(x)?.mapv(f64::exp))
    }

    /// Delta-method standard errors of the log-hazard.
    pub fn se_log_hazard(&self, x: &[f64]) -> Result<Array1<f64>> {
        let b = self.basis.design(x)?;
        let bv = b.dot(&self.covariance);
        Ok((&bv * &b).sum_axis(ndarray::Axis(1)).mapv(|v| v.max(0.0).sqrt()))
    }
}

struct Problem1d {
    b: Array2<f64>,
    exposure: Array1<f64>,
    events: Array1<f64>,
    dtd: Array2<f64>,
    basis: MarginalBasis,
    pord: usize,
    options: FitOptions,
}

fn deviance(y: &Array1<f64>, mu: &Array1<f64>) -> f64 {
    y.iter()
        .zip(mu.iter())
        .map(|(&y, &m)| if y > 0.0 { 2.0 * (y * (y / m).ln() - (y - m)) } else { 2.0 * m })
        .sum()
}

impl Problem1d {
    fn new(
        exposure: &[f64],
        events: &[f64],
        midpoints: &[f64],
        basis: &MarginalBasis,
        pord: usize,
        options: &FitOptions,
    ) -> Result<Self> {
        if exposure.len() != events.len() || exposure.len() != midpoints.len() {
            return Err(Error::InvalidSpec(format!(
                "exposure, events and midpoints have lengths {}, {}, {}",
                exposure.len(),
                events.len(),
                midpoints.len()
            )));
        }
        if pord == 0 || pord >= basis.n_basis() {
            return Err(Error::InvalidSpec(format!(
                "penalty order {pord} needs between 1 and {} basis functions",
                basis.n_basis() - 1
            )));
        }
        let keep: Vec<usize> = (0..exposure.len()).filter(|&i| exposure[i] > 0.0).collect();
        if keep.is_empty() {
            return Err(Error::DegenerateData("all exposures are zero".into()));
        }
        let x: Vec<f64> = keep.iter().map(|&i| midpoints[i]).collect();
        let events = Array1::from_iter(keep.iter().map(|&i| events[i]));
        if events.sum() <= 0.0 {
            return Err(Error::DegenerateData("no events in cells with exposure".into()));
        }
        Ok(Self {
            b: basis.design(&x)?,
            exposure: Array1::from_iter(keep.iter().map(|&i| exposure[i])),
            events,
            dtd: marginal_penalty(basis.n_basis(), pord)?,
            basis: basis.clone(),
            pord,
            options: *options,
        })
    }

    fn mu(&self, alpha: &Array1<f64>) -> Array1<f64> {
        &self.exposure * &self.b.dot(alpha).mapv(f64::exp)
    }

    fn objective(&self, alpha: &Array1<f64>, pen: &Array2<f64>) -> f64 {
        deviance(&self.events, &self.mu(alpha)) + alpha.dot(&pen.dot(alpha))
    }

    fn information(&self, mu: &Array1<f64>) -> Array2<f64> {
        let bw = &self.b * &mu.view().insert_axis(ndarray::Axis(1));
        self.b.t().dot(&bw)
    }

    fn fit(&self, log10_rho: f64) -> Result<Fitted1d> {
        if !log10_rho.is_finite() {
            return Err(Error::InvalidSpec("smoothing parameter must be finite".into()));
        }
        let pen = &self.dtd * 10f64.powf(log10_rho);

        let mean_y = self.events.mean().unwrap_or(0.0);
        let eta0 = ndarray::Zip::from(&self.events)
            .and(&self.exposure)
            .map_collect(|&y, &r| ((y + 0.5 * mean_y) / r).ln());
        let mut g = self.b.t().dot(&self.b) + &pen;
        let ridge = 1e-8 * (1.0 + g.diag().iter().cloned().fold(0.0, f64::max));
        g.diag_mut().mapv_inplace(|v| v + ridge);
        let mut alpha = SpdFactor::new(&g)?.solve(&self.b.t().dot(&eta0));

        let newton = |alpha: &Array1<f64>| -> Result<Array1<f64>> {
            let mu = self.mu(alpha);
            let h = self.information(&mu) + &pen;
            let grad = self.b.t().dot(&(&self.events - &mu)) - pen.dot(alpha);
            Ok(SpdFactor::new(&h)?.solve(&grad))
        };

        let mut obj = self.objective(&alpha, &pen);
        let mut iterations = 0;
        loop {
            iterations += 1;
            if iterations > self.options.max_iter {
                return Err(Error::Convergence {
                    iterations: self.options.max_iter,
                    deviance: deviance(&self.events, &self.mu(&alpha)),
                });
            }
            let delta = newton(&alpha)?;
            let mut step = 1.0;
            let (cand, cand_obj) = loop {
                let cand = &alpha + &(&delta * step);
                let value = self.objective(&cand, &pen);
                if value.is_finite() && value <= obj + 1e-12 * obj.abs() {
                    break (cand, value);
                }
                step *= 0.5;
                if step < 1e-6 {
                    break (alpha.clone(), obj);
                }
            };
            let max_change = (&cand - &alpha).iter().fold(0.0f64, |m, d| m.max(d.abs()));
            let rel_change = (obj - cand_obj).abs() / (cand_obj.abs() + 0.1);
            alpha = cand;
            obj = cand_obj;
            if max_change < self.options.coef_tol || rel_change < self.options.dev_tol {
                let polished = &alpha + &newton(&alpha)?;
                if self.objective(&polished, &pen) <= obj + 1e-12 * obj.abs() {
                    alpha = polished;
                }
                break;
            }
        }

        let mu = self.mu(&alpha);
        let info = self.information(&mu);
        let covariance = SpdFactor::new(&(&info + &pen))?.inverse();
        let ed = trace_product(&covariance, &info);
        let dev = deviance(&self.events, &mu);
        let n_events = self.events.sum();
        let n_obs = self.events.len();
        let bic_n = match self.options.bic_sample_size {
            BicSampleSize::NonzeroCells => n_obs as f64,
            BicSampleSize::Events => n_events,
        };
        Ok(Fitted1d {
            basis: self.basis.clone(),
            pord: self.pord,
            alpha,
            covariance,
            log10_rho,
            ed,
            deviance: dev,
            aic: dev + 2.0 * ed,
            bic: dev + bic_n.ln() * ed,
            n_events,
            n_obs,
            iterations,
            optimizer_cap_reached: false,
        })
    }
}

/// Fits a P-spline log-hazard to binned exposures and event counts along
/// one time axis, with penalty `rho * D'D` on the coefficients.
pub fn fit_1ts(
    exposure: &[f64],
    events: &[f64],
    midpoints: &[f64],
    basis: &MarginalBasis,
    pord: usize,
    smoothing: &Smoothing1d,
    options: &FitOptions,
) -> Result<Fitted1d> {
    let problem = Problem1d::new(exposure, events, midpoints, basis, pord, options)?;
    match smoothing {
        Smoothing1d::Fixed(lr) => problem.fit(*lr),
        Smoothing1d::Grid { values, criterion } => {
            if values.is_empty() {
                return Err(Error::InvalidSpec("smoothing grid must not be empty".into()));
            }
            values
                .iter()
                .filter_map(|&lr| problem.fit(lr).ok())
                .min_by(|a, b| a.criterion(*criterion).total_cmp(&b.criterion(*criterion)))
                .ok_or_else(|| Error::Search("every grid point failed to fit".into()))
        }
        Smoothing1d::Numeric { start, criterion } => {
            if !start.is_finite() {
                return Err(Error::InvalidSpec("starting smoothing parameter must be finite".into()));
            }
            let mut best: Option<Fitted1d> = None;
            let result = nelder_mead(
                |x| match problem.fit(x[0]) {
                    Ok(m) => {
                        let v = m.criterion(*criterion);
                        if best.as_ref().is_none_or(|b| v < b.criterion(*criterion)) {
                            best = Some(m);
                        }
                        v
                    }
                    Err(_) => f64::INFINITY,
                },
                &[*start],
                &NelderMeadOptions::default(),
            );
            let mut model =
                best.ok_or_else(|| Error::Search("no smoothing parameter could be fitted".into()))?;
            model.optimizer_cap_reached = !result.converged;
            Ok(model)
        }
    }
}
