//! The `prepare`, `fit`, `predict` and `cif` workflows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use twoscale::estimator::select_rho_grid;
use twoscale::{
    bin_records, bootstrap_cif, cuminc, cumulate_model, evaluate_surface, mask_unsupported, predict_rows,
    s_axis, select_rho_numeric, summarize, summarize_fit, BinGrid, BinnedData, BootstrapConfig, CausePlan,
    CauseSurface, CifTarget, Error, IndividualRecord, Plane, PredictionInput, Support,
};

use crate::config::{Method, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{read_competing, read_json, read_records, write_file, write_json, GridFile, ModelArtifact, Table};

fn bin(config: &RunConfig, records: &[IndividualRecord]) -> Result<BinnedData> {
    let grid = config.prep()?.grid_for_records(records)?;
    let covariates = &config.columns.covariates;
    Ok(bin_records(records, &grid, !covariates.is_empty(), covariates)?)
}

fn read_and_bin(config: &RunConfig) -> Result<BinnedData> {
    let table = Table::read(config.input()?)?;
    bin(config, &read_records(&table, &config.columns)?)
}

/// Output axes: the bin midpoints, or evenly spaced points over the grid
/// range when a surface step is configured.
fn surface_axes(config: &RunConfig, grid: &BinGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    let axis = |step: Option<f64>, (lo, hi): (f64, f64), mids: &[f64]| match step {
        Some(d) => s_axis(lo, hi, d),
        None => Ok(mids.to_vec()),
    };
    Ok((
        axis(config.surface_du, grid.range_u(), &grid.midpoints_u)?,
        axis(config.surface_ds, grid.range_s(), &grid.midpoints_s)?,
    ))
}

/// Bins the input and writes `binned.json` with exposure and event grids.
pub fn prepare(config: &RunConfig) -> Result<String> {
    let binned = read_and_bin(config)?;
    let out = &config.out;
    write_json(&out.join("binned.json"), &binned)?;
    let g = &binned.grid;
    let support = binned.exposure.mapv(|r| r > 0.0);
    GridFile::new("exposure", Plane::Us, &g.midpoints_u, &g.midpoints_s, binned.exposure.clone(), support.clone())
        .write(out, "exposure")?;
    GridFile::new("events", Plane::Us, &g.midpoints_u, &g.midpoints_s, binned.events.clone(), support)
        .write(out, "events")?;
    let summary = summarize(&binned);
    write_file(&out.join("data_summary.txt"), &summary)?;
    Ok(summary)
}

/// Selects the smoothing parameters, then writes `model.json`,
/// `summary.txt` and the fitted hazard grid.
pub fn fit(config: &RunConfig, binned: Option<&Path>) -> Result<String> {
    let binned: BinnedData = match binned {
        Some(path) => read_json(path)?,
        None => read_and_bin(config)?,
    };
    let spec = config.model_spec(&binned.grid, binned.n_covariates() > 0)?;
    let options = config.fit_options();
    let model = match config.method {
        Method::Numeric => select_rho_numeric(
            &binned,
            &spec,
            (config.start[0], config.start[1]),
            config.criterion,
            &options,
            &Default::default(),
        )?,
        Method::Grid => {
            if config.grid_u.is_empty() || config.grid_s.is_empty() {
                return Err(CliError::Config("the grid method needs grid_u and grid_s".into()));
            }
            select_rho_grid(&binned, &spec, &config.grid_u, &config.grid_s, config.criterion, &options)?
        }
    };
    let summary = summarize_fit(&model);
    let out = &config.out;
    let (u, s) = surface_axes(config, &model.grid)?;
    let mut surface = evaluate_surface(&model, &u, &s)?;
    mask_unsupported(&mut surface, Support::of(&model));
    GridFile::new("hazard", Plane::Us, &u, &s, surface.hazard.clone(), surface.present.clone()).write(out, "hazard")?;
    GridFile::new("se_hazard", Plane::Us, &u, &s, surface.se_hazard, surface.present).write(out, "se_hazard")?;
    write_json(&out.join("model.json"), &ModelArtifact::new(&config.columns, model))?;
    write_file(&out.join("summary.txt"), &summary)?;
    Ok(summary)
}

/// Where to read points for prediction and where to write the results.
pub struct PredictArgs<'a> {
    pub model: &'a Path,
    pub newdata: &'a Path,
    pub u_col: Option<String>,
    pub s_col: Option<String>,
    pub output: Option<PathBuf>,
}

/// Hazard, cumulative hazard and survival at every row of the new data, in
/// input order.
pub fn predict(config: &RunConfig, args: PredictArgs) -> Result<PathBuf> {
    let artifact = ModelArtifact::read(args.model)?;
    let model = &artifact.model;
    let table = Table::read(args.newdata)?;
    let u_name = args.u_col.unwrap_or_else(|| artifact.columns.u.clone());
    let s_name = args.s_col.unwrap_or_else(|| artifact.columns.s_out.clone());
    let (cu, cs) = (table.column(&u_name)?, table.column(&s_name)?);
    let covs: Vec<(String, usize)> =
        model.covariate_names.iter().map(|n| Ok((n.clone(), table.column(n)?))).collect::<Result<_>>()?;
    let inputs: Vec<PredictionInput> = (0..table.rows.len())
        .map(|row| {
            let covariates: BTreeMap<String, f64> =
                covs.iter().map(|(n, c)| Ok((n.clone(), table.number(row, *c)?))).collect::<Result<_>>()?;
            Ok(PredictionInput { u: table.number(row, cu)?, s: table.number(row, cs)?, covariates })
        })
        .collect::<Result<_>>()?;
    let rows = predict_rows(model, &inputs, config.predict_ds)?;

    let mut csv = String::new();
    let header: Vec<&str> = [u_name.as_str(), s_name.as_str()]
        .into_iter()
        .chain(covs.iter().map(|(n, _)| n.as_str()))
        .chain(["hazard", "cumhazard", "se_hazard", "survival", "basehazard", "se_basehazard"])
        .collect();
    let _ = writeln!(csv, "{}", header.join(","));
    for r in &rows {
        let mut fields: Vec<String> = vec![r.u.to_string(), r.s.to_string()];
        fields.extend(r.covariates.iter().map(f64::to_string));
        fields.extend(
            [r.hazard, r.cumhazard, r.se_hazard, r.survival, r.basehazard, r.se_basehazard].iter().map(f64::to_string),
        );
        let _ = writeln!(csv, "{}", fields.join(","));
    }
    let path = args.output.unwrap_or_else(|| config.out.join("predictions.csv"));
    write_file(&path, &csv)?;
    Ok(path)
}

/// Cause name of a model: its event label, else the file stem.
fn cause_name(artifact: &ModelArtifact, path: &Path) -> String {
    artifact
        .cause
        .clone()
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

/// Cumulative incidence of every cause, overall survival and, with
/// `n_reps > 0`, bootstrap bands refitted from the input records.
pub fn cif(config: &RunConfig, model_paths: &[PathBuf]) -> Result<String> {
    if model_paths.len() < 2 {
        return Err(CliError::Config("cif needs a model file for each of at least two causes".into()));
    }
    let artifacts: Vec<ModelArtifact> = model_paths.iter().map(|p| ModelArtifact::read(p)).collect::<Result<_>>()?;
    let names: Vec<String> = artifacts.iter().zip(model_paths).map(|(a, p)| cause_name(a, p)).collect();
    let grid = &artifacts[0].model.grid;
    for (a, name) in artifacts.iter().zip(&names) {
        if a.model.grid != *grid {
            return Err(Error::Alignment(format!("model for '{name}' was fitted on a different bin grid")).into());
        }
    }
    let u_values = match config.surface_du {
        Some(du) => s_axis(grid.range_u().0, grid.range_u().1, du)?,
        None => grid.midpoints_u.clone(),
    };
    let ds = config.surface_ds.unwrap_or_else(|| grid.ds());

    let mut present: Option<Array2<bool>> = None;
    let surfaces = artifacts
        .iter()
        .zip(&names)
        .map(|(a, name)| {
            let mut g = cumulate_model(&a.model, &u_values, ds)?;
            mask_unsupported(&mut g, Support::of(&a.model));
            present = Some(match present.take() {
                Some(p) => &p & &g.present,
                None => g.present.clone(),
            });
            Ok(CauseSurface::new(name.clone(), g)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let present = present.expect("at least two causes");
    let mut set = cuminc(&surfaces)?;

    if config.n_reps > 0 {
        let columns = crate::config::Columns { event_value: None, ..artifacts[0].columns.clone() };
        let table = Table::read(config.input()?)?;
        let causes: BTreeSet<String> = names.iter().cloned().collect();
        let records = read_competing(&table, &columns, &causes)?;
        let plans: Vec<CausePlan> = artifacts
            .iter()
            .zip(&names)
            .map(|(a, name)| {
                let mut spec = a.model.spec.clone();
                spec.penalty.log10_rho_u = a.model.log10_rho_u;
                spec.penalty.log10_rho_s = a.model.log10_rho_s;
                CausePlan { cause: name.clone(), spec, covariates: a.columns.covariates.clone() }
            })
            .collect();
        let target = CifTarget { grid, u_values: &u_values, ds, options: config.fit_options() };
        let boot = BootstrapConfig { n_reps: config.n_reps, seed: config.seed, level: config.level, ..Default::default() };
        set.bands = bootstrap_cif(&records, &plans, &target, &boot)?.bands;
    }

    let out = &config.out;
    let (u, s) = (&set.u_values, &set.s_values);
    GridFile::new("survival", Plane::Us, u, s, set.survival.clone(), present.clone()).write(out, "survival")?;
    let mut report = String::new();
    let _ = writeln!(report, "Cumulative incidence over {} x {} grid points", u.len(), s.len());
    for (k, name) in set.causes.iter().enumerate() {
        let stem = format!("cif_{name}");
        GridFile::new(&stem, Plane::Us, u, s, set.cif[k].clone(), present.clone()).write(out, &stem)?;
        let last = set.cif[k].column(s.len() - 1);
        let (lo, hi) = last.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let _ = writeln!(report, "  {name}: CIF at s = {} ranges over [{lo:.4}, {hi:.4}]", s[s.len() - 1]);
        if let Some(bands) = &set.bands {
            for (suffix, m) in [("lower", &bands.lower[k]), ("upper", &bands.upper[k])] {
                let stem = format!("cif_{name}_{suffix}");
                GridFile::new(&stem, Plane::Us, u, s, m.clone(), present.clone()).write(out, &stem)?;
            }
        }
    }
    if let Some(b) = &set.bands {
        let _ = writeln!(
            report,
            "Bootstrap: {} replicates kept, {} dropped, {:.0}% percentile bands at fixed smoothing",
            b.n_reps,
            b.n_dropped,
            100.0 * b.level
        );
    }
    write_file(&out.join("cif_summary.txt"), &report)?;
    Ok(report)
}
