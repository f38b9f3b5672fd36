//! Binning of individual follow-up onto a two-dimensional `(u, s)` grid.
//!
//! Every record spends its whole follow-up inside a single `u` bin and
//! contributes exposure to each `s` bin it crosses. Bins are half-open
//! `[lower, upper)` with the final bin closed on the right. An event is
//! counted in the `s` bin where the record's exposure ends, so an exit time
//! lying exactly on an interior edge is attributed to the bin on its left.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::signif;

fn signif7(x: f64) -> String {
    signif(x, 7)
}

/// Tolerance used when turning a range and a width into a bin count.
const COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovariateValue {
    Numeric(f64),
    Categorical(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    /// Fixed difference between the two time scales.
    pub u: f64,
    pub s_in: f64,
    pub s_out: f64,
    pub event: bool,
    pub covariates: BTreeMap<String, CovariateValue>,
}

impl IndividualRecord {
    pub fn new(u: f64, s_out: f64, event: bool) -> Self {
        Self { u, s_in: 0.0, s_out, event, covariates: BTreeMap::new() }
    }

    pub fn with_entry(mut self, s_in: f64) -> Self {
        self.s_in = s_in;
        self
    }

    pub fn with_covariate(mut self, name: impl Into<String>, value: CovariateValue) -> Self {
        self.covariates.insert(name.into(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub edges_u: Vec<f64>,
    pub edges_s: Vec<f64>,
    pub midpoints_u: Vec<f64>,
    pub midpoints_s: Vec<f64>,
}

fn axis_edges(min: f64, max: f64, width: f64, axis: &str) -> Result<Vec<f64>> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidSpec(format!("bin width over {axis} must be positive")));
    }
    if !(min.is_finite() && max.is_finite()) || max <= min {
        return Err(Error::InvalidSpec(format!(
            "range over {axis} must satisfy min < max (got [{min}, {max}])"
        )));
    }
    let n = (((max - min) / width) - COUNT_SLACK).ceil().max(1.0) as usize;
    Ok((0..=n).map(|k| min + k as f64 * width).collect())
}

fn midpoints(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Builds `ceil((max - min) / width)` equal bins per axis starting at `min`.
pub fn make_grid(min_u: f64, max_u: f64, du: f64, min_s: f64, max_s: f64, ds: f64) -> Result<BinGrid> {
    let edges_u = axis_edges(min_u, max_u, du, "u")?;
    let edges_s = axis_edges(min_s, max_s, ds, "s")?;
    Ok(BinGrid {
        midpoints_u: midpoints(&edges_u),
        midpoints_s: midpoints(&edges_s),
        edges_u,
        edges_s,
    })
}

impl BinGrid {
    pub fn n_u(&self) -> usize {
        self.midpoints_u.len()
    }

    pub fn n_s(&self) -> usize {
        self.midpoints_s.len()
    }

    pub fn range_u(&self) -> (f64, f64) {
        (self.edges_u[0], *self.edges_u.last().unwrap())
    }

    pub fn range_s(&self) -> (f64, f64) {
        (self.edges_s[0], *self.edges_s.last().unwrap())
    }

    pub fn du(&self) -> f64 {
        self.edges_u[1] - self.edges_u[0]
    }

    pub fn ds(&self) -> f64 {
        self.edges_s[1] - self.edges_s[0]
    }

    /// Bin `[lower, upper)` holding `u`; the last bin is closed.
    pub fn u_bin(&self, u: f64) -> Option<usize> {
        closed_left_bin(&self.edges_u, u)
    }

    /// Bin `[lower, upper)` holding `s`; the last bin is closed.
    pub fn s_bin(&self, s: f64) -> Option<usize> {
        closed_left_bin(&self.edges_s, s)
    }

    /// Bin `(lower, upper]` holding `s`; the first bin is closed.
    fn s_bin_closed_right(&self, s: f64) -> Option<usize> {
        let e = &self.edges_s;
        if !(s >= e[0] && s <= e[e.len() - 1]) {
            return None;
        }
        Some(e.partition_point(|&x| x < s).saturating_sub(1).min(e.len() - 2))
    }
}

fn closed_left_bin(edges: &[f64], x: f64) -> Option<usize> {
    if !(x >= edges[0] && x <= edges[edges.len() - 1]) {
        return None;
    }
    Some((edges.partition_point(|&e| e <= x) - 1).min(edges.len() - 2))
}

/// Grid construction settings; absent limits are taken from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub ds: f64,
    /// Defaults to `ds`.
    pub du: Option<f64>,
    pub min_u: Option<f64>,
    pub max_u: Option<f64>,
    pub min_s: Option<f64>,
    pub max_s: Option<f64>,
}

impl PrepConfig {
    pub fn new(ds: f64) -> Self {
        Self { ds, du: None, min_u: None, max_u: None, min_s: None, max_s: None }
    }

    pub fn grid_for<'a, I>(&self, records: I) -> Result<BinGrid>
    where
        I: IntoIterator<Item = (f64, f64, f64)> + Clone + 'a,
    {
        let mut lim = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for (u, s_in, s_out) in records {
            lim[0] = lim[0].min(u);
            lim[1] = lim[1].max(u);
            lim[2] = lim[2].min(s_in);
            lim[3] = lim[3].max(s_out);
        }
        let min_u = self.min_u.unwrap_or(lim[0]);
        let max_u = self.max_u.unwrap_or(lim[1]);
        let min_s = self.min_s.unwrap_or(lim[2]);
        let max_s = self.max_s.unwrap_or(lim[3]);
        if !min_u.is_finite() || !min_s.is_finite() {
            return Err(Error::DegenerateData("no records to bin".into()));
        }
        // A single distinct u value still needs one bin.
        let max_u = if max_u <= min_u { min_u + self.du.unwrap_or(self.ds) } else { max_u };
        make_grid(min_u, max_u, self.du.unwrap_or(self.ds), min_s, max_s, self.ds)
    }

    pub fn grid_for_records(&self, records: &[IndividualRecord]) -> Result<BinGrid> {
        self.grid_for(records.iter().map(|r| (r.u, r.s_in, r.s_out)))
    }
}

/// One individual's slice of the `n_u x n_s x n` exposure and event arrays.
/// Only the contiguous run of `s` bins with exposure is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualLayer {
    pub u_bin: usize,
    pub first_s_bin: usize,
    pub exposure: Vec<f64>,
    pub event_bin: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedData {
    pub grid: BinGrid,
    /// Aggregated exposure, `n_u x n_s`.
    pub exposure: Array2<f64>,
    /// Aggregated event counts, `n_u x n_s`.
    pub events: Array2<f64>,
    pub individuals: Option<Vec<IndividualLayer>>,
    /// Covariate matrix, `n x p`, present with individual layers.
    pub z: Option<Array2<f64>>,
    pub covariate_names: Vec<String>,
}

impl BinnedData {
    pub fn total_exposure(&self) -> f64 {
        self.exposure.sum()
    }

    pub fn total_events(&self) -> f64 {
        self.events.sum()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Dense per-individual exposure and event arrays, each `n_u x n_s` per record.
    pub fn individual_arrays(&self) -> Option<Vec<(Array2<f64>, Array2<f64>)>> {
        let layers = self.individuals.as_ref()?;
        let (n_u, n_s) = (self.grid.n_u(), self.grid.n_s());
        Some(
            layers
                .iter()
                .map(|layer| {
                    let mut r = Array2::zeros((n_u, n_s));
                    let mut y = Array2::zeros((n_u, n_s));
                    for (k, e) in layer.exposure.iter().enumerate() {
                        r[[layer.u_bin, layer.first_s_bin + k]] = *e;
                    }
                    if let Some(k) = layer.event_bin {
                        y[[layer.u_bin, k]] = 1.0;
                    }
                    (r, y)
                })
                .collect(),
        )
    }
}

fn compare_levels(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
        _ => a.cmp(b),
    }
}

/// Builds `Z` with reference coding: the first level of every factor, in
/// sorted order, is dropped.
fn covariate_matrix(
    records: &[IndividualRecord],
    covariate_names: &[String],
) -> Result<(Array2<f64>, Vec<String>)> {
    enum Column {
        Numeric(String),
        Dummy(String, String, String),
    }
    let mut columns = Vec::new();
    for name in covariate_names {
        if !records.iter().any(|r| r.covariates.contains_key(name)) {
            return Err(Error::Schema(format!("unknown covariate '{name}'")));
        }
        let mut levels = BTreeSet::new();
        let mut categorical = None;
        for (i, r) in records.iter().enumerate() {
            let value = r.covariates.get(name).ok_or_else(|| {
                Error::Schema(format!("record {i} has no value for covariate '{name}'"))
            })?;
            let is_cat = matches!(value, CovariateValue::Categorical(_));
            if *categorical.get_or_insert(is_cat) != is_cat {
                return Err(Error::Schema(format!(
                    "covariate '{name}' mixes numeric and categorical values"
                )));
            }
            if let CovariateValue::Categorical(level) = value {
                levels.insert(level.clone());
            }
        }
        if categorical == Some(true) {
            let mut levels: Vec<String> = levels.into_iter().collect();
            levels.sort_by(|a, b| compare_levels(a, b));
            for level in levels.into_iter().skip(1) {
                columns.push(Column::Dummy(format!("{name}_{level}"), name.clone(), level));
            }
        } else {
            columns.push(Column::Numeric(name.clone()));
        }
    }

    let mut z = Array2::zeros((records.len(), columns.len()));
    for (i, r) in records.iter().enumerate() {
        for (p, col) in columns.iter().enumerate() {
            z[[i, p]] = match col {
                Column::Numeric(name) => match &r.covariates[name] {
                    CovariateValue::Numeric(v) => *v,
                    CovariateValue::Categorical(_) => unreachable!(),
                },
                Column::Dummy(_, name, level) => match &r.covariates[name] {
                    CovariateValue::Categorical(v) if v == level => 1.0,
                    _ => 0.0,
                },
            };
        }
    }
    let names = columns
        .into_iter()
        .map(|c| match c {
            Column::Numeric(n) | Column::Dummy(n, _, _) => n,
        })
        .collect();
    Ok((z, names))
}

/// Bins individual records onto `grid`.
///
/// With `individual` set, per-record layers are kept and the covariate
/// matrix is built; covariates are only meaningful at the individual level.
pub fn bin_records(
    records: &[IndividualRecord],
    grid: &BinGrid,
    individual: bool,
    covariate_names: &[String],
) -> Result<BinnedData> {
    if !individual && !covariate_names.is_empty() {
        return Err(Error::InvalidSpec(
            "covariates require individual-level arrays".into(),
        ));
    }
    let (n_u, n_s) = (grid.n_u(), grid.n_s());
    let mut exposure = Array2::zeros((n_u, n_s));
    let mut events = Array2::zeros((n_u, n_s));
    let mut layers = Vec::with_capacity(if individual { records.len() } else { 0 });

    let (lo_u, hi_u) = grid.range_u();
    let (lo_s, hi_s) = grid.range_s();
    for (index, r) in records.iter().enumerate() {
        let out_of_range = |reason: String| Error::OutOfRange { index, reason };
        if !(r.s_out > r.s_in) {
            return Err(out_of_range(format!(
                "exit time {} must exceed entry time {}",
                r.s_out, r.s_in
            )));
        }
        let u_bin = grid
            .u_bin(r.u)
            .ok_or_else(|| out_of_range(format!("u = {} not in [{lo_u}, {hi_u}]", r.u)))?;
        let first = grid
            .s_bin(r.s_in)
            .ok_or_else(|| out_of_range(format!("s_in = {} not in [{lo_s}, {hi_s}]", r.s_in)))?;
        let last = grid
            .s_bin_closed_right(r.s_out)
            .ok_or_else(|| out_of_range(format!("s_out = {} not in [{lo_s}, {hi_s}]", r.s_out)))?;

        let mut layer = IndividualLayer {
            u_bin,
            first_s_bin: first,
            exposure: Vec::with_capacity(last + 1 - first),
            event_bin: None,
        };
        for k in first..=last {
            let lo = grid.edges_s[k].max(r.s_in);
            let hi = grid.edges_s[k + 1].min(r.s_out);
            let e = (hi - lo).max(0.0);
            exposure[[u_bin, k]] += e;
            layer.exposure.push(e);
        }
        if r.event {
            events[[u_bin, last]] += 1.0;
            layer.event_bin = Some(last);
        }
        if individual {
            layers.push(layer);
        }
    }

    let (z, names) = if individual && !covariate_names.is_empty() {
        let (z, names) = covariate_matrix(records, covariate_names)?;
        (Some(z), names)
    } else if individual {
        (Some(Array2::zeros((records.len(), 0))), Vec::new())
    } else {
        (None, Vec::new())
    };

    Ok(BinnedData {
        grid: grid.clone(),
        exposure,
        events,
        individuals: individual.then_some(layers),
        z,
        covariate_names: names,
    })
}

/// Plain-text overview of binned data.
pub fn summarize(binned: &BinnedData) -> String {
    let mut out = String::new();
    let g = &binned.grid;
    let (lu, hu) = g.range_u();
    let (ls, hs) = g.range_s();
    let _ = writeln!(out, "Binned data over two time scales");
    let _ = writeln!(out);
    let _ = writeln!(out, "Range covered by the bins:");
    let _ = writeln!(out, "  bins_u: {} {}", signif7(lu), signif7(hu));
    let _ = writeln!(out, "  bins_s: {} {}", signif7(ls), signif7(hs));
    let _ = writeln!(out);
    let _ = writeln!(out, "Number of bins:");
    let _ = writeln!(out, "  nu = {}", g.n_u());
    let _ = writeln!(out, "  ns = {}", g.n_s());
    let _ = writeln!(out);
    let _ = writeln!(out, "Overview of the binned data:");
    let _ = writeln!(out, "  Total exposure time: {}", signif7(binned.total_exposure()));
    let _ = writeln!(out, "  Total number of events: {}", signif7(binned.total_events()));
    if let Some(layers) = &binned.individuals {
        let _ = writeln!(out, "  Individuals: {}", layers.len());
    }
    if !binned.covariate_names.is_empty() {
        let quoted: Vec<String> = binned.covariate_names.iter().map(|n| format!("\"{n}\"")).collect();
        let _ = writeln!(out, "  Covariates: {}", quoted.join(" "));
    }
    out
}
