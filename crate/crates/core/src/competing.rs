//! Cumulative incidence from cause-specific hazard surfaces, with
//! bootstrap percentile bands.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{bin_records, BinGrid, CovariateValue, IndividualRecord};
use crate::error::{Error, Result};
use crate::estimator::{fit_at_rho, FitOptions, ModelSpec};
use crate::surface::{cumulate, cumulate_model, SurfaceGrid};

/// Hazard of one cause on a `(u, s)` grid, with its cumulative hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseSurface {
    pub cause: String,
    pub grid: SurfaceGrid,
}

impl CauseSurface {
    /// Wraps a grid, cumulating it along `s` if that has not been done.
    pub fn new(cause: impl Into<String>, grid: SurfaceGrid) -> Result<Self> {
        let grid = if grid.cumhazard.is_some() { grid } else { cumulate(&grid)? };
        Ok(Self { cause: cause.into(), grid })
    }

    fn cumhazard(&self) -> &Array2<f64> {
        self.grid.cumhazard.as_ref().expect("cumulated on construction")
    }
}

fn check_aligned(causes: &[CauseSurface]) -> Result<f64> {
    let first = causes.first().ok_or_else(|| Error::Alignment("no causes given".into()))?;
    let mut names = BTreeSet::new();
    for c in causes {
        if !names.insert(c.cause.as_str()) {
            return Err(Error::Alignment(format!("cause '{}' appears more than once", c.cause)));
        }
        if c.grid.u_values != first.grid.u_values || c.grid.s_values != first.grid.s_values {
            return Err(Error::Alignment(format!(
                "cause '{}' is on a different grid from '{}'",
                c.cause, first.cause
            )));
        }
        if c.cumhazard().dim() != c.grid.dim() {
            return Err(Error::Alignment(format!("cumulative hazard of '{}' has the wrong shape", c.cause)));
        }
    }
    first.grid.uniform_ds()
}

/// `exp(-sum_k Lambda_k)` over the shared grid.
pub fn overall_survival(causes: &[CauseSurface]) -> Result<Array2<f64>> {
    check_aligned(causes)?;
    let mut total = Array2::<f64>::zeros(causes[0].grid.dim());
    for c in causes {
        total += c.cumhazard();
    }
    Ok(total.mapv(|v| (-v).exp()))
}

/// Pointwise percentile bands over bootstrap replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CifBands {
    pub level: f64,
    /// Replicates that entered the bands.
    pub n_reps: usize,
    pub n_dropped: usize,
    /// One matrix per cause, in the order of [`CifSet::causes`].
    pub lower: Vec<Array2<f64>>,
    pub upper: Vec<Array2<f64>>,
    /// Smoothing parameters were held at their original values.
    pub fixed_smoothing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CifSet {
    pub causes: Vec<String>,
    pub u_values: Vec<f64>,
    pub s_values: Vec<f64>,
    pub survival: Array2<f64>,
    pub cif: Vec<Array2<f64>>,
    pub bands: Option<CifBands>,
}

impl CifSet {
    pub fn cif_of(&self, cause: &str) -> Option<&Array2<f64>> {
        self.causes.iter().position(|c| c == cause).map(|k| &self.cif[k])
    }
}

/// Cumulative incidence of each cause: rectangle sums of the cause hazard
/// times overall survival at the left end of each step.
pub fn cuminc(causes: &[CauseSurface]) -> Result<CifSet> {
    let ds = check_aligned(causes)?;
    let survival = overall_survival(causes)?;
    let (n_u, n_s) = survival.dim();
    let cif = causes
        .iter()
        .map(|c| {
            let mut out = Array2::zeros((n_u, n_s));
            for i in 0..n_u {
                let mut acc = 0.0;
                let mut s_prev = 1.0;
                for j in 0..n_s {
                    acc += c.grid.hazard[[i, j]] * s_prev * ds;
                    out[[i, j]] = acc;
                    s_prev = survival[[i, j]];
                }
            }
            out
        })
        .collect();
    Ok(CifSet {
        causes: causes.iter().map(|c| c.cause.clone()).collect(),
        u_values: causes[0].grid.u_values.clone(),
        s_values: causes[0].grid.s_values.clone(),
        survival,
        cif,
        bands: None,
    })
}

/// One follow-up record ending in one of several causes, or censored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetingRecord {
    pub u: f64,
    pub s_in: f64,
    pub s_out: f64,
    pub cause: Option<String>,
    #[serde(default)]
    pub covariates: BTreeMap<String, CovariateValue>,
}

impl CompetingRecord {
    /// The record seen from one cause: other causes count as censoring.
    pub fn for_cause(&self, cause: &str) -> IndividualRecord {
        IndividualRecord {
            u: self.u,
            s_in: self.s_in,
            s_out: self.s_out,
            event: self.cause.as_deref() == Some(cause),
            covariates: self.covariates.clone(),
        }
    }
}

/// Model for one cause at fixed smoothing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausePlan {
    pub cause: String,
    /// Bases, penalty order and the smoothing parameters to use.
    pub spec: ModelSpec,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    #[default]
    WithReplacement,
    /// Every replicate is the original sample.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_reps: usize,
    pub seed: u64,
    pub level: f64,
    pub resampling: Resampling,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { n_reps: 200, seed: 1, level: 0.95, resampling: Resampling::default() }
    }
}

/// Evaluation settings shared by the point estimate and every replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct CifTarget<'a> {
    pub grid: &'a BinGrid,
    pub u_values: &'a [f64],
    pub ds: f64,
    pub options: FitOptions,
}

fn cif_for(records: &[CompetingRecord], plans: &[CausePlan], target: &CifTarget) -> Result<CifSet> {
    let surfaces = plans
        .iter()
        .map(|plan| {
            let recs: Vec<IndividualRecord> = records.iter().map(|r| r.for_cause(&plan.cause)).collect();
            let individual = plan.spec.has_covariates;
            let binned = bin_records(&recs, target.grid, individual, &plan.covariates)?;
            let model = fit_at_rho(
                &binned,
                &plan.spec,
                plan.spec.penalty.log10_rho_u,
                plan.spec.penalty.log10_rho_s,
                &target.options,
            )?;
            CauseSurface::new(plan.cause.clone(), cumulate_model(&model, target.u_values, target.ds)?)
        })
        .collect::<Result<Vec<_>>>()?;
    cuminc(&surfaces)
}

/// Type-7 sample quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn resample(n: usize, seed: u64, replicate: usize, how: Resampling) -> Vec<usize> {
    match how {
        Resampling::Identity => (0..n).collect(),
        Resampling::WithReplacement => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(replicate as u64);
            (0..n).map(|_| rng.random_range(0..n)).collect()
        }
    }
}

/// Point estimate of the CIFs with pointwise percentile bands from
/// resampling individuals and refitting every cause at its fixed
/// smoothing parameters. Replicates that fail to fit are dropped; more than
/// 10% dropped is an error.
pub fn bootstrap_cif(
    records: &[CompetingRecord],
    plans: &[CausePlan],
    target: &CifTarget,
    config: &BootstrapConfig,
) -> Result<CifSet> {
    if config.n_reps < 2 {
        return Err(Error::InvalidSpec("the bootstrap needs at least 2 replicates".into()));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::InvalidSpec(format!("band level {} is not in (0, 1)", config.level)));
    }
    let mut estimate = cif_for(records, plans, target)?;

    let replicates: Vec<Option<Vec<Array2<f64>>>> = (0..config.n_reps)
        .into_par_iter()
        .map(|r| {
            let idx = resample(records.len(), config.seed, r, config.resampling);
            let sample: Vec<CompetingRecord> = idx.iter().map(|&i| records[i].clone()).collect();
            cif_for(&sample, plans, target).ok().map(|set| set.cif)
        })
        .collect();
    let kept: Vec<&Vec<Array2<f64>>> = replicates.iter().flatten().collect();
    let n_dropped = config.n_reps - kept.len();
    if n_dropped * 10 > config.n_reps || kept.len() < 2 {
        return Err(Error::Bootstrap(format!("{n_dropped} of {} replicates failed to fit", config.n_reps)));
    }

    let (p_lo, p_hi) = ((1.0 - config.level) / 2.0, (1.0 + config.level) / 2.0);
    let dim = estimate.survival.dim();
    let mut lower = Vec::with_capacity(plans.len());
    let mut upper = Vec::with_capacity(plans.len());
    let mut values = vec![0.0; kept.len()];
    for k in 0..plans.len() {
        let mut lo = Array2::zeros(dim);
        let mut hi = Array2::zeros(dim);
        for i in 0..dim.0 {
            for j in 0..dim.1 {
                for (v, rep) in values.iter_mut().zip(&kept) {
                    *v = rep[k][[i, j]];
                }
                values.sort_by(f64::total_cmp);
                lo[[i, j]] = quantile(&values, p_lo);
                hi[[i, j]] = quantile(&values, p_hi);
            }
        }
        lower.push(lo);
        upper.push(hi);
    }
    estimate.bands = Some(CifBands {
        level: config.level,
        n_reps: kept.len(),
        n_dropped,
        lower,
        upper,
        fixed_smoothing: true,
    });
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::make_grid;
    use crate::surface::s_axis;

    fn constant(cause: &str, rate: f64, u: &[f64], s: &[f64]) -> CauseSurface {
        let h = Array2::from_elem((u.len(), s.len()), rate);
        CauseSurface::new(cause, SurfaceGrid::from_hazard(u.to_vec(), s.to_vec(), h).unwrap()).unwrap()
    }

    fn smooth(cause: &str, phase: f64, u: &[f64], s: &[f64]) -> CauseSurface {
        let h = Array2::from_shape_fn((u.len(), s.len()), |(i, j)| {
            0.05 + 0.04 * (phase + 0.3 * u[i] + 0.7 * s[j]).sin().powi(2)
        });
        CauseSurface::new(cause, SurfaceGrid::from_hazard(u.to_vec(), s.to_vec(), h).unwrap()).unwrap()
    }

    #[test]
    fn single_cause_survival() {
        let s = s_axis(0.0, 5.0, 0.1).unwrap();
        let c = smooth("a", 0.0, &[1.0, 2.0], &s);
        assert_eq!(overall_survival(std::slice::from_ref(&c)).unwrap(), c.grid.survival.clone().unwrap());
    }

    #[test]
    fn survival_is_product_of_cause_survivals() {
        let s = s_axis(0.0, 5.0, 0.05).unwrap();
        let u = [0.0, 1.5, 3.0];
        let (a, b) = (smooth("a", 0.1, &u, &s), smooth("b", 1.9, &u, &s));
        let total = overall_survival(&[a.clone(), b.clone()]).unwrap();
        let prod = a.grid.survival.unwrap() * b.grid.survival.unwrap();
        assert!(total.iter().zip(prod.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn two_constant_hazards_match_closed_form() {
        let ds = 0.01;
        let s = s_axis(0.0, 10.0, ds).unwrap();
        let (l1, l2) = (0.1, 0.1);
        let set = cuminc(&[constant("a", l1, &[0.0], &s), constant("b", l2, &[0.0], &s)]).unwrap();
        for (j, &sj) in s.iter().enumerate() {
            let exact = l1 / (l1 + l2) * (1.0 - (-(l1 + l2) * sj).exp());
            assert!((set.cif[0][[0, j]] - exact).abs() <= 2.0 * ds);
            assert!((set.survival[[0, j]] - (-(l1 + l2) * sj).exp()).abs() <= 2.0 * ds);
            let total = set.survival[[0, j]] + set.cif[0][[0, j]] + set.cif[1][[0, j]];
            assert!((total - 1.0).abs() <= 2.0 * ds);
        }
    }

    #[test]
    fn first_step_is_one_rectangle() {
        let s = [0.0, 0.5];
        let set = cuminc(&[constant("a", 0.3, &[0.0], &s), constant("b", 0.2, &[0.0], &s)]).unwrap();
        assert_eq!(set.cif[0][[0, 0]], 0.3 * 0.5);
    }

    #[test]
    fn zero_hazard_cause_changes_nothing() {
        let s = s_axis(0.0, 4.0, 0.1).unwrap();
        let u = [0.0, 2.0];
        let base = cuminc(&[smooth("a", 0.0, &u, &s), smooth("b", 1.0, &u, &s)]).unwrap();
        let more = cuminc(&[smooth("a", 0.0, &u, &s), smooth("b", 1.0, &u, &s), constant("z", 0.0, &u, &s)])
            .unwrap();
        assert!(more.cif_of("z").unwrap().iter().all(|&v| v == 0.0));
        for k in 0..2 {
            assert!(base.cif[k].iter().zip(more.cif[k].iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        assert!(base.survival.iter().zip(more.survival.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn cif_properties_on_smooth_hazards() {
        let ds = 0.05;
        let s = s_axis(0.0, 8.0, ds).unwrap();
        let u = [0.0, 1.0, 2.5];
        let set = cuminc(&[smooth("a", 0.2, &u, &s), smooth("b", 2.2, &u, &s)]).unwrap();
        for i in 0..u.len() {
            for k in 0..2 {
                let row = set.cif[k].row(i);
                assert!(row.windows(2).into_iter().all(|w| w[1] >= w[0] - 1e-12));
                // The lagged rectangle rule overshoots 1 - S by at most its
                // quadrature error.
                for j in 0..s.len() {
                    assert!(row[j] >= 0.0);
                    assert!(row[j] <= 1.0 - set.survival[[i, j]] + 2.0 * ds);
                }
            }
            let last = s.len() - 1;
            let total = set.survival[[i, last]] + set.cif[0][[i, last]] + set.cif[1][[i, last]];
            assert!((total - 1.0).abs() <= 2.0 * ds);
        }
    }

    #[test]
    fn larger_hazard_gives_larger_cif() {
        let s = s_axis(0.0, 5.0, 0.1).unwrap();
        let u = [0.0, 1.0];
        let a = smooth("a", 0.4, &u, &s);
        let mut b = a.clone();
        b.cause = "b".into();
        b.grid.hazard.mapv_inplace(|h| 0.7 * h);
        let b = CauseSurface::new("b", SurfaceGrid::from_hazard(u.to_vec(), s.clone(), b.grid.hazard).unwrap()).unwrap();
        let set = cuminc(&[a, b]).unwrap();
        assert!(set.cif[0].iter().zip(set.cif[1].iter()).all(|(x, y)| x >= y));
    }

    #[test]
    fn misaligned_and_duplicate_causes_are_rejected() {
        let s = s_axis(0.0, 1.0, 0.1).unwrap();
        let a = constant("a", 0.1, &[0.0], &s);
        let b = constant("b", 0.1, &[1.0], &s);
        assert!(matches!(cuminc(&[a.clone(), b]), Err(Error::Alignment(_))));
        assert!(matches!(cuminc(&[a.clone(), a]), Err(Error::Alignment(_))));
    }

    #[test]
    fn quantile_type7() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 4.0);
        assert!((quantile(&x, 0.25) - 1.75).abs() < 1e-15);
    }

    fn simulated(n: usize, seed: u64) -> Vec<CompetingRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u = rng.random_range(0.0..4.0);
                let t1 = -rng.random::<f64>().ln() / 0.15;
                let t2 = -rng.random::<f64>().ln() / 0.1;
                let c = rng.random_range(2.0..6.0);
                let (s_out, cause) = if t1.min(t2) > c {
                    (c, None)
                } else if t1 < t2 {
                    (t1, Some("a".to_string()))
                } else {
                    (t2, Some("b".to_string()))
                };
                CompetingRecord { u, s_in: 0.0, s_out, cause, covariates: BTreeMap::new() }
            })
            .collect()
    }

    fn plans(grid: &BinGrid) -> Vec<CausePlan> {
        ["a", "b"]
            .iter()
            .map(|c| {
                let mut spec = ModelSpec::for_grid(grid, 4, 4, 3, 2, false).unwrap();
                spec.penalty.log10_rho_u = 3.0;
                spec.penalty.log10_rho_s = 3.0;
                CausePlan { cause: c.to_string(), spec, covariates: vec![] }
            })
            .collect()
    }

    #[test]
    fn identity_resampling_gives_zero_width_bands() {
        let records = simulated(300, 5);
        let grid = make_grid(0.0, 4.0, 1.0, 0.0, 6.0, 1.0).unwrap();
        let target = CifTarget { grid: &grid, u_values: &[0.5, 2.5], ds: 0.5, options: FitOptions::default() };
        let cfg = BootstrapConfig { n_reps: 2, seed: 1, level: 0.95, resampling: Resampling::Identity };
        let set = bootstrap_cif(&records, &plans(&grid), &target, &cfg).unwrap();
        let bands = set.bands.unwrap();
        for k in 0..2 {
            assert_eq!(bands.lower[k], bands.upper[k]);
            assert_eq!(bands.lower[k], set.cif[k]);
        }
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let records = simulated(300, 6);
        let grid = make_grid(0.0, 4.0, 1.0, 0.0, 6.0, 1.0).unwrap();
        let target = CifTarget { grid: &grid, u_values: &[0.5, 2.5], ds: 0.5, options: FitOptions::default() };
        let cfg = BootstrapConfig { n_reps: 8, seed: 42, ..Default::default() };
        let a = bootstrap_cif(&records, &plans(&grid), &target, &cfg).unwrap();
        let b = bootstrap_cif(&records, &plans(&grid), &target, &cfg).unwrap();
        assert_eq!(a, b);
        let other = bootstrap_cif(&records, &plans(&grid), &target, &BootstrapConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.bands, other.bands);
    }

    #[test]
    fn bootstrap_rejects_too_few_replicates() {
        let grid = make_grid(0.0, 4.0, 1.0, 0.0, 6.0, 1.0).unwrap();
        let target = CifTarget { grid: &grid, u_values: &[0.5], ds: 0.5, options: FitOptions::default() };
        let cfg = BootstrapConfig { n_reps: 1, ..Default::default() };
        assert!(matches!(
            bootstrap_cif(&simulated(50, 1), &plans(&grid), &target, &cfg),
            Err(Error::InvalidSpec(_))
        ));
    }
}
