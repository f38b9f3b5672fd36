//! Penalized Poisson IWLS on the binned arrays.

use ndarray::{s, Array1, Array2, ArrayView1};

use super::glam::{glam_gram, glam_vec, row_tensor, unvec_cols, vec_cols};
use super::{BicSampleSize, FitOptions, FitWarnings, FittedModel, ModelSpec};
use crate::basis::{assemble_penalty, marginal_penalty};
use crate::binning::BinnedData;
use crate::error::{Error, Result};
use crate::linalg::{trace_product, SpdFactor};

/// Poisson observations with positive exposure. Without covariates these
/// are the aggregated bins; with covariates, the per-individual cells.
struct Observations {
    u_bin: Vec<usize>,
    s_bin: Vec<usize>,
    exposure: Vec<f64>,
    events: Vec<f64>,
    /// Row of `z` for each observation.
    zrow: Vec<usize>,
    z: Array2<f64>,
}

impl Observations {
    fn from_binned(binned: &BinnedData, has_covariates: bool) -> Result<Self> {
        let mut obs = Observations {
            u_bin: Vec::new(),
            s_bin: Vec::new(),
            exposure: Vec::new(),
            events: Vec::new(),
            zrow: Vec::new(),
            z: Array2::zeros((1, 0)),
        };
        if has_covariates {
            let layers = binned.individuals.as_ref().ok_or_else(|| {
                Error::InvalidSpec("covariate model needs individual-level arrays".into())
            })?;
            let z = binned
                .z
                .as_ref()
                .filter(|z| z.ncols() > 0)
                .ok_or_else(|| Error::InvalidSpec("covariate model needs a covariate matrix".into()))?;
            for (i, layer) in layers.iter().enumerate() {
                for (k, &e) in layer.exposure.iter().enumerate() {
                    if e <= 0.0 {
                        continue;
                    }
                    let s_bin = layer.first_s_bin + k;
                    obs.u_bin.push(layer.u_bin);
                    obs.s_bin.push(s_bin);
                    obs.exposure.push(e);
                    obs.events.push(if layer.event_bin == Some(s_bin) { 1.0 } else { 0.0 });
                    obs.zrow.push(i);
                }
            }
            obs.z = z.clone();
        } else {
            for ((i, j), &e) in binned.exposure.indexed_iter() {
                if e > 0.0 {
                    obs.u_bin.push(i);
                    obs.s_bin.push(j);
                    obs.exposure.push(e);
                    obs.events.push(binned.events[[i, j]]);
                    obs.zrow.push(0);
                }
            }
        }
        if obs.exposure.is_empty() {
            return Err(Error::DegenerateData("all exposures are zero".into()));
        }
        if obs.events.iter().sum::<f64>() <= 0.0 {
            return Err(Error::DegenerateData("no events in cells with exposure".into()));
        }
        Ok(obs)
    }

    fn len(&self) -> usize {
        self.exposure.len()
    }

    fn p(&self) -> usize {
        self.z.ncols()
    }
}

/// Poisson deviance contribution of one observation.
fn deviance_term(y: f64, mu: f64) -> f64 {
    if y > 0.0 {
        2.0 * (y * (y / mu).ln() - (y - mu))
    } else {
        2.0 * mu
    }
}

/// Sufficient statistics of one IWLS step.
struct Working {
    deviance: f64,
    /// Aggregated weights `sum_i mu`, `n_u x n_s`.
    w: Array2<f64>,
    /// Aggregated residuals `sum_i (y - mu)`.
    res: Array2<f64>,
    /// Aggregated `sum_i mu z_iq`, one array per covariate.
    wz: Vec<Array2<f64>>,
    zwz: Array2<f64>,
    zres: Array1<f64>,
}

/// A binned data set prepared for repeated fits at different smoothing
/// parameters.
pub struct FitProblem<'a> {
    binned: &'a BinnedData,
    spec: ModelSpec,
    options: FitOptions,
    obs: Observations,
    bu: Array2<f64>,
    bs: Array2<f64>,
    tu: Array2<f64>,
    ts: Array2<f64>,
    pu: Array2<f64>,
    ps: Array2<f64>,
}

/// Result of a converged IWLS run, before packaging.
pub struct IwlsOutcome {
    pub theta: Array1<f64>,
    pub iterations: usize,
    /// Penalized deviance after each accepted step, starting value first.
    pub objective_trace: Vec<f64>,
}

impl<'a> FitProblem<'a> {
    pub fn new(binned: &'a BinnedData, spec: &ModelSpec, options: &FitOptions) -> Result<Self> {
        let grid = &binned.grid;
        if binned.exposure.dim() != (grid.n_u(), grid.n_s()) {
            return Err(Error::InvalidSpec("exposure array does not match the bin grid".into()));
        }
        let (c_u, c_s) = (spec.c_u(), spec.c_s());
        spec.penalty.validate(c_u, c_s)?;
        let obs = Observations::from_binned(binned, spec.has_covariates)?;
        let bu = spec.basis_u.design(&grid.midpoints_u)?;
        let bs = spec.basis_s.design(&grid.midpoints_s)?;
        Ok(Self {
            tu: row_tensor(bu.view()),
            ts: row_tensor(bs.view()),
            pu: marginal_penalty(c_u, spec.penalty.pord)?,
            ps: marginal_penalty(c_s, spec.penalty.pord)?,
            bu,
            bs,
            binned,
            spec: spec.clone(),
            options: *options,
            obs,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn options(&self) -> &FitOptions {
        &self.options
    }

    fn n_alpha(&self) -> usize {
        self.spec.c_u() * self.spec.c_s()
    }

    pub fn n_params(&self) -> usize {
        self.n_alpha() + self.obs.p()
    }

    pub fn n_obs(&self) -> usize {
        self.obs.len()
    }

    fn penalty(&self, log10_rho_u: f64, log10_rho_s: f64) -> Array2<f64> {
        assemble_penalty(
            10f64.powf(log10_rho_u),
            self.pu.view(),
            10f64.powf(log10_rho_s),
            self.ps.view(),
        )
    }

    fn linear_predictors(&self, theta: ArrayView1<f64>) -> Vec<f64> {
        let n_a = self.n_alpha();
        let alpha = unvec_cols(&theta.slice(s![..n_a]).to_owned(), self.spec.c_u(), self.spec.c_s());
        let base = self.bu.dot(&alpha).dot(&self.bs.t());
        let beta = theta.slice(s![n_a..]);
        let zb: Vec<f64> = if beta.is_empty() {
            vec![0.0]
        } else {
            self.obs.z.rows().into_iter().map(|row| row.dot(&beta)).collect()
        };
        (0..self.obs.len())
            .map(|k| base[[self.obs.u_bin[k], self.obs.s_bin[k]]] + zb[self.obs.zrow[k]])
            .collect()
    }

    /// Poisson deviance at `theta`.
    pub fn deviance(&self, theta: ArrayView1<f64>) -> f64 {
        let eta = self.linear_predictors(theta);
        eta.iter()
            .enumerate()
            .map(|(k, e)| deviance_term(self.obs.events[k], self.obs.exposure[k] * e.exp()))
            .sum()
    }

    /// Deviance plus the quadratic penalty `theta' P theta`.
    pub fn penalized_deviance(&self, theta: ArrayView1<f64>, log10_rho_u: f64, log10_rho_s: f64) -> f64 {
        let n_a = self.n_alpha();
        let a = theta.slice(s![..n_a]);
        let pen = self.penalty(log10_rho_u, log10_rho_s);
        self.deviance(theta) + a.dot(&pen.dot(&a))
    }

    fn working(&self, theta: ArrayView1<f64>) -> Working {
        let (n_u, n_s) = self.binned.exposure.dim();
        let p = self.obs.p();
        let eta = self.linear_predictors(theta);
        let mut wk = Working {
            deviance: 0.0,
            w: Array2::zeros((n_u, n_s)),
            res: Array2::zeros((n_u, n_s)),
            wz: vec![Array2::zeros((n_u, n_s)); p],
            zwz: Array2::zeros((p, p)),
            zres: Array1::zeros(p),
        };
        for (k, e) in eta.iter().enumerate() {
            let (i, j) = (self.obs.u_bin[k], self.obs.s_bin[k]);
            let y = self.obs.events[k];
            let mu = self.obs.exposure[k] * e.exp();
            wk.deviance += deviance_term(y, mu);
            wk.w[[i, j]] += mu;
            wk.res[[i, j]] += y - mu;
            if p > 0 {
                let z = self.obs.z.row(self.obs.zrow[k]);
                for q in 0..p {
                    wk.wz[q][[i, j]] += mu * z[q];
                    wk.zres[q] += (y - mu) * z[q];
                    for r in 0..p {
                        wk.zwz[[q, r]] += mu * z[q] * z[r];
                    }
                }
            }
        }
        wk
    }

    /// Unpenalized information `X'WX` for the full parameter vector.
    fn information(&self, wk: &Working) -> Array2<f64> {
        let (c_u, c_s) = (self.spec.c_u(), self.spec.c_s());
        let n_a = self.n_alpha();
        let p = self.obs.p();
        let mut h = Array2::zeros((n_a + p, n_a + p));
        h.slice_mut(s![..n_a, ..n_a])
            .assign(&glam_gram(self.tu.view(), self.ts.view(), wk.w.view(), c_u, c_s));
        for q in 0..p {
            let cross = glam_vec(self.bu.view(), self.bs.view(), wk.wz[q].view());
            h.slice_mut(s![..n_a, n_a + q]).assign(&cross);
            h.slice_mut(s![n_a + q, ..n_a]).assign(&cross);
        }
        h.slice_mut(s![n_a.., n_a..]).assign(&wk.zwz);
        h
    }

    fn score(&self, wk: &Working, theta: ArrayView1<f64>, pen: &Array2<f64>) -> Array1<f64> {
        let n_a = self.n_alpha();
        let mut g = Array1::zeros(self.n_params());
        let a = theta.slice(s![..n_a]);
        let ga = glam_vec(self.bu.view(), self.bs.view(), wk.res.view()) - pen.dot(&a);
        g.slice_mut(s![..n_a]).assign(&ga);
        g.slice_mut(s![n_a..]).assign(&wk.zres);
        g
    }

    /// Penalized score `X'(y - mu) - P theta` at `theta`.
    pub fn penalized_score(&self, theta: ArrayView1<f64>, log10_rho_u: f64, log10_rho_s: f64) -> Array1<f64> {
        let pen = self.penalty(log10_rho_u, log10_rho_s);
        self.score(&self.working(theta), theta, &pen)
    }

    /// Starting values: a penalized least-squares fit to the crude log rates.
    fn initial_theta(&self, pen: &Array2<f64>) -> Result<Array1<f64>> {
        let (c_u, c_s) = (self.spec.c_u(), self.spec.c_s());
        let r = &self.binned.exposure;
        let y = &self.binned.events;
        let positive: Vec<f64> = r
            .iter()
            .zip(y.iter())
            .filter(|(r, _)| **r > 0.0)
            .map(|(_, y)| *y)
            .collect();
        let mean_y = positive.iter().sum::<f64>() / positive.len() as f64;
        let ind = r.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let eta0 = ndarray::Zip::from(r)
            .and(y)
            .map_collect(|&r, &y| if r > 0.0 { ((y + 0.5 * mean_y) / r).ln() } else { 0.0 });
        let mut g = glam_gram(self.tu.view(), self.ts.view(), ind.view(), c_u, c_s) + pen;
        let ridge = 1e-8 * (1.0 + g.diag().iter().cloned().fold(0.0, f64::max));
        g.diag_mut().mapv_inplace(|v| v + ridge);
        let rhs = glam_vec(self.bu.view(), self.bs.view(), eta0.view());
        let a = SpdFactor::new(&g)?.solve(&rhs);
        let mut theta = Array1::zeros(self.n_params());
        theta.slice_mut(s![..self.n_alpha()]).assign(&a);
        Ok(theta)
    }

    /// Runs IWLS at fixed smoothing parameters.
    pub fn iwls(&self, log10_rho_u: f64, log10_rho_s: f64) -> Result<IwlsOutcome> {
        if !(log10_rho_u.is_finite() && log10_rho_s.is_finite()) {
            return Err(Error::InvalidSpec("smoothing parameters must be finite".into()));
        }
        let n_a = self.n_alpha();
        let pen = self.penalty(log10_rho_u, log10_rho_s);
        let objective = |theta: &Array1<f64>| {
            let a = theta.slice(s![..n_a]);
            self.deviance(theta.view()) + a.dot(&pen.dot(&a))
        };

        let newton = |theta: &Array1<f64>| -> Result<Array1<f64>> {
            let wk = self.working(theta.view());
            let mut h = self.information(&wk);
            h.slice_mut(s![..n_a, ..n_a]).zip_mut_with(&pen, |x, p| *x += p);
            let grad = self.score(&wk, theta.view(), &pen);
            Ok(SpdFactor::new(&h)?.solve(&grad))
        };

        let mut theta = self.initial_theta(&pen)?;
        let mut obj = objective(&theta);
        let mut trace = vec![obj];
        for iter in 1..=self.options.max_iter {
            let delta = newton(&theta)?;

            // Newton step, halved until the penalized deviance does not rise.
            let mut step = 1.0;
            let (candidate, cand_obj) = loop {
                let cand = &theta + &(&delta * step);
                let value = objective(&cand);
                if value.is_finite() && value <= obj + 1e-12 * obj.abs() {
                    break (cand, value);
                }
                step *= 0.5;
                if step < 1e-6 {
                    // No descent left: numerically at the optimum.
                    break (theta.clone(), obj);
                }
            };
            let max_change = (&candidate - &theta).iter().fold(0.0f64, |m, d| m.max(d.abs()));
            let rel_change = (obj - cand_obj).abs() / (cand_obj.abs() + 0.1);
            theta = candidate;
            obj = cand_obj;
            trace.push(obj);
            if max_change < self.options.coef_tol || rel_change < self.options.dev_tol {
                // One more full step; inside the quadratic region it takes
                // the coefficients to machine precision.
                let polished = &theta + &newton(&theta)?;
                let value = objective(&polished);
                if value.is_finite() && value <= obj + 1e-12 * obj.abs() {
                    theta = polished;
                    trace.push(value);
                }
                return Ok(IwlsOutcome { theta, iterations: iter, objective_trace: trace });
            }
        }
        Err(Error::Convergence { iterations: self.options.max_iter, deviance: self.deviance(theta.view()) })
    }

    /// Fits and packages the model with diagnostics.
    pub fn fit(&self, log10_rho_u: f64, log10_rho_s: f64) -> Result<FittedModel> {
        let outcome = self.iwls(log10_rho_u, log10_rho_s)?;
        self.package(outcome, log10_rho_u, log10_rho_s)
    }

    fn package(&self, outcome: IwlsOutcome, log10_rho_u: f64, log10_rho_s: f64) -> Result<FittedModel> {
        let (c_u, c_s) = (self.spec.c_u(), self.spec.c_s());
        let n_a = self.n_alpha();
        let theta = outcome.theta;
        let pen = self.penalty(log10_rho_u, log10_rho_s);
        let wk = self.working(theta.view());
        let info = self.information(&wk);
        let mut h = info.clone();
        h.slice_mut(s![..n_a, ..n_a]).zip_mut_with(&pen, |x, p| *x += p);
        let covariance = SpdFactor::new(&h)?.inverse();
        let ed = trace_product(&covariance, &info);

        let n_events: f64 = self.obs.events.iter().sum();
        let n_obs = self.obs.len();
        let deviance = wk.deviance;
        let bic_n = match self.options.bic_sample_size {
            BicSampleSize::NonzeroCells => n_obs as f64,
            BicSampleSize::Events => n_events,
        };
        let mut spec = self.spec.clone();
        spec.penalty.log10_rho_u = log10_rho_u;
        spec.penalty.log10_rho_s = log10_rho_s;
        Ok(FittedModel {
            alpha: unvec_cols(&theta.slice(s![..n_a]).to_owned(), c_u, c_s),
            beta: theta.slice(s![n_a..]).to_owned(),
            covariate_names: if spec.has_covariates { self.binned.covariate_names.clone() } else { Vec::new() },
            covariance,
            log10_rho_u,
            log10_rho_s,
            ed,
            deviance,
            aic: deviance + 2.0 * ed,
            bic: deviance + bic_n.ln() * ed,
            bic_sample_size: self.options.bic_sample_size,
            n_events,
            n_obs,
            iterations: outcome.iterations,
            support: self.binned.exposure.mapv(|e| e > 0.0),
            warnings: FitWarnings::default(),
            selection: None,
            spec,
            grid: self.binned.grid.clone(),
        })
    }

    /// Flattened `(vec A, beta)` of a fitted model.
    pub fn theta_of(model: &FittedModel) -> Array1<f64> {
        let mut theta = vec_cols(model.alpha.view()).to_vec();
        theta.extend(model.beta.iter());
        Array1::from(theta)
    }
}

/// Fits the model at fixed `(log10 rho_u, log10 rho_s)`.
pub fn fit_at_rho(
    binned: &BinnedData,
    spec: &ModelSpec,
    log10_rho_u: f64,
    log10_rho_s: f64,
    options: &FitOptions,
) -> Result<FittedModel> {
    FitProblem::new(binned, spec, options)?.fit(log10_rho_u, log10_rho_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::{bin_records, make_grid, CovariateValue, IndividualRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_binned(n_u: usize, n_s: usize, e: f64, y: f64) -> BinnedData {
        let grid = make_grid(0.0, n_u as f64, 1.0, 0.0, n_s as f64, 1.0).unwrap();
        BinnedData {
            grid,
            exposure: Array2::from_elem((n_u, n_s), e),
            events: Array2::from_elem((n_u, n_s), y),
            individuals: None,
            z: None,
            covariate_names: Vec::new(),
        }
    }

    fn random_binned(seed: u64, n_u: usize, n_s: usize) -> BinnedData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = flat_binned(n_u, n_s, 1.0, 0.0);
        for ((i, j), r) in b.exposure.indexed_iter_mut() {
            *r = rng.random_range(5.0..50.0);
            let rate = 0.05 * (1.0 + 0.3 * (i as f64 * 0.7).sin() + 0.2 * (j as f64 * 0.5).cos());
            let mean = *r * rate;
            b.events[[i, j]] = (mean + rng.random_range(-1.0..1.0) * mean.sqrt()).round().max(0.0);
        }
        b
    }

    #[test]
    fn constant_data_gives_flat_hazard() {
        let b = flat_binned(6, 5, 20.0, 3.0);
        let spec = ModelSpec::for_grid(&b.grid, 4, 4, 3, 2, false).unwrap();
        for (lu, ls) in [(-2.0, -2.0), (0.0, 3.0), (4.0, 1.0)] {
            let m = fit_at_rho(&b, &spec, lu, ls, &FitOptions::default()).unwrap();
            let eta = m.bin_log_hazard().unwrap();
            for v in eta.iter() {
                assert!((v.exp() - 0.15).abs() < 1e-6, "{}", v.exp());
            }
        }
    }

    #[test]
    fn ed_tends_to_pord_squared() {
        let b = random_binned(1, 8, 7);
        let spec = ModelSpec::for_grid(&b.grid, 5, 4, 3, 2, false).unwrap();
        let m = fit_at_rho(&b, &spec, 8.0, 8.0, &FitOptions::default()).unwrap();
        assert!((m.ed - 4.0).abs() < 0.05, "ED = {}", m.ed);
    }

    #[test]
    fn ed_monotone_in_rho() {
        let b = random_binned(2, 8, 8);
        let spec = ModelSpec::for_grid(&b.grid, 5, 5, 3, 2, false).unwrap();
        let problem = FitProblem::new(&b, &spec, &FitOptions::default()).unwrap();
        let mut last = f64::INFINITY;
        for lr in [-3.0, -1.0, 0.0, 1.0, 2.0, 4.0] {
            let ed = problem.fit(lr, 0.5).unwrap().ed;
            assert!(ed <= last + 1e-6);
            last = ed;
        }
        let mut last = f64::INFINITY;
        for lr in [-3.0, -1.0, 0.0, 1.0, 2.0, 4.0] {
            let ed = problem.fit(0.5, lr).unwrap().ed;
            assert!(ed <= last + 1e-6);
            last = ed;
        }
    }

    #[test]
    fn penalized_score_vanishes_and_objective_decreases() {
        let b = random_binned(3, 8, 6);
        let spec = ModelSpec::for_grid(&b.grid, 5, 4, 3, 2, false).unwrap();
        let problem = FitProblem::new(&b, &spec, &FitOptions::default()).unwrap();
        let out = problem.iwls(1.0, -0.5).unwrap();
        for w in out.objective_trace[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].abs());
        }
        let score = problem.penalized_score(out.theta.view(), 1.0, -0.5);
        let ymax = b.events.iter().cloned().fold(0.0, f64::max);
        assert!(score.iter().all(|g| g.abs() < 1e-6 * (1.0 + ymax)));
    }

    #[test]
    fn finite_difference_gradient_vanishes_at_optimum() {
        let b = random_binned(4, 7, 7);
        let spec = ModelSpec::for_grid(&b.grid, 4, 4, 3, 2, false).unwrap();
        let problem = FitProblem::new(&b, &spec, &FitOptions::default()).unwrap();
        let theta = problem.iwls(0.0, 0.0).unwrap().theta;
        let h = 1e-5;
        for k in 0..theta.len() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[k] += h;
            minus[k] -= h;
            // Penalized log-likelihood is -1/2 of the penalized deviance.
            let g = -0.5 * (problem.penalized_deviance(plus.view(), 0.0, 0.0)
                - problem.penalized_deviance(minus.view(), 0.0, 0.0))
                / (2.0 * h);
            assert!(g.abs() < 1e-4, "component {k}: {g}");
        }
    }

    #[test]
    fn exposure_scaling_shifts_log_hazard() {
        let g = make_grid(0.0, 4.0, 1.0, 0.0, 3.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let recs: Vec<IndividualRecord> = (0..300)
            .map(|_| {
                let grp = if rng.random_bool(0.5) { "b" } else { "a" };
                IndividualRecord::new(rng.random_range(0.0..4.0), rng.random_range(0.1..3.0), rng.random_bool(0.4))
                    .with_covariate("grp", CovariateValue::Categorical(grp.into()))
            })
            .collect();
        let b1 = bin_records(&recs, &g, true, &["grp".to_string()]).unwrap();
        let k = 3.7;
        let mut b2 = b1.clone();
        b2.exposure.mapv_inplace(|e| e * k);
        for layer in b2.individuals.as_mut().unwrap() {
            layer.exposure.iter_mut().for_each(|e| *e *= k);
        }
        let spec = ModelSpec::for_grid(&g, 4, 4, 3, 2, true).unwrap();
        let m1 = fit_at_rho(&b1, &spec, 0.5, 0.5, &FitOptions::default()).unwrap();
        let m2 = fit_at_rho(&b2, &spec, 0.5, 0.5, &FitOptions::default()).unwrap();
        assert!((m1.beta[0] - m2.beta[0]).abs() < 1e-8);
        let (e1, e2) = (m1.bin_log_hazard().unwrap(), m2.bin_log_hazard().unwrap());
        for (a, b) in e1.iter().zip(e2.iter()) {
            assert!((a - k.ln() - b).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_exposure_is_degenerate() {
        let b = flat_binned(4, 4, 0.0, 0.0);
        let spec = ModelSpec::for_grid(&b.grid, 3, 3, 3, 2, false).unwrap();
        assert!(matches!(
            fit_at_rho(&b, &spec, 0.0, 0.0, &FitOptions::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_convergence_error() {
        let b = random_binned(5, 6, 6);
        let spec = ModelSpec::for_grid(&b.grid, 4, 4, 3, 2, false).unwrap();
        let opts = FitOptions { max_iter: 1, coef_tol: 0.0, dev_tol: 0.0, ..Default::default() };
        match fit_at_rho(&b, &spec, 0.0, 0.0, &opts) {
            Err(Error::Convergence { iterations, deviance }) => {
                assert_eq!(iterations, 1);
                assert!(deviance.is_finite());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn covariance_symmetric_and_ed_bounded() {
        let b = random_binned(6, 8, 8);
        let spec = ModelSpec::for_grid(&b.grid, 5, 5, 3, 2, false).unwrap();
        let m = fit_at_rho(&b, &spec, -1.0, -1.0, &FitOptions::default()).unwrap();
        let v = &m.covariance;
        for i in 0..v.nrows() {
            for j in 0..v.ncols() {
                assert!((v[[i, j]] - v[[j, i]]).abs() < 1e-9);
            }
        }
        assert!(m.ed > 0.0 && m.ed <= 64.0);
        assert!((m.bic_with(BicSampleSize::NonzeroCells) - m.bic).abs() < 1e-9);
    }
}
