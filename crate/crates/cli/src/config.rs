//! Run configuration: a JSON document whose fields can each be overridden
//! from the command line.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use twoscale::{BicSampleSize, Criterion, FitOptions, ModelSpec, PrepConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grid,
    #[default]
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Columns {
    pub u: String,
    /// Entry time on the `s` scale; 0 for everyone when absent.
    pub s_in: Option<String>,
    pub s_out: String,
    pub event: String,
    /// When set, a record has an event if its `event` field equals this
    /// label; otherwise the field is read as 0/1.
    pub event_value: Option<String>,
    pub covariates: Vec<String>,
    /// Covariates read as factors and dummy coded.
    pub categorical: Vec<String>,
}

impl Default for Columns {
    fn default() -> Self {
        Self {
            u: "u".into(),
            s_in: None,
            s_out: "s".into(),
            event: "event".into(),
            event_value: None,
            covariates: Vec::new(),
            categorical: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub columns: Columns,
    pub du: Option<f64>,
    pub ds: Option<f64>,
    pub min_u: Option<f64>,
    pub max_u: Option<f64>,
    pub min_s: Option<f64>,
    pub max_s: Option<f64>,
    pub nseg_u: usize,
    pub nseg_s: usize,
    pub bdeg: usize,
    pub pord: usize,
    pub method: Method,
    pub criterion: Criterion,
    /// Starting `log10` smoothing parameters for the numerical search.
    pub start: [f64; 2],
    /// `log10` smoothing values searched by the grid method.
    pub grid_u: Vec<f64>,
    pub grid_s: Vec<f64>,
    pub bic_sample_size: BicSampleSize,
    pub out: PathBuf,
    pub seed: u64,
    /// Bootstrap replicates for CIF bands; 0 skips the bootstrap.
    pub n_reps: usize,
    pub level: f64,
    /// Output grid steps; the bin widths when absent.
    pub surface_du: Option<f64>,
    pub surface_ds: Option<f64>,
    /// Step along `s` for cumulating predicted hazards.
    pub predict_ds: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            columns: Columns::default(),
            du: None,
            ds: None,
            min_u: None,
            max_u: None,
            min_s: None,
            max_s: None,
            nseg_u: 10,
            nseg_s: 10,
            bdeg: 3,
            pord: 2,
            method: Method::Numeric,
            criterion: Criterion::Aic,
            start: [0.0, 0.0],
            grid_u: Vec::new(),
            grid_s: Vec::new(),
            bic_sample_size: BicSampleSize::default(),
            out: PathBuf::from("out"),
            seed: 1,
            n_reps: 0,
            level: 0.95,
            surface_du: None,
            surface_ds: None,
            predict_ds: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Aic,
    Bic,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Aic => Criterion::Aic,
            CriterionArg::Bic => Criterion::Bic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BicNArg {
    Cells,
    Events,
}

/// Command-line overrides; every flag replaces the matching config field.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for resampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Input CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub u_col: Option<String>,
    #[arg(long)]
    pub s_in_col: Option<String>,
    #[arg(long)]
    pub s_out_col: Option<String>,
    #[arg(long)]
    pub event_col: Option<String>,
    #[arg(long)]
    pub event_value: Option<String>,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Comma-separated covariates to treat as categorical.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Option<Vec<String>>,
    #[arg(long)]
    pub du: Option<f64>,
    #[arg(long)]
    pub ds: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub min_u: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub max_u: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub min_s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub max_s: Option<f64>,
    #[arg(long)]
    pub nseg_u: Option<usize>,
    #[arg(long)]
    pub nseg_s: Option<usize>,
    #[arg(long)]
    pub bdeg: Option<usize>,
    #[arg(long)]
    pub pord: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, value_enum)]
    pub criterion: Option<CriterionArg>,
    /// Starting log10 smoothing parameters as `U,S`.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    pub start: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub grid_u: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub grid_s: Option<Vec<f64>>,
    /// Sample size in the BIC penalty.
    #[arg(long, value_enum)]
    pub bic_n: Option<BicNArg>,
    #[arg(long)]
    pub n_reps: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub surface_du: Option<f64>,
    #[arg(long)]
    pub surface_ds: Option<f64>,
    #[arg(long)]
    pub predict_ds: Option<f64>,
}

macro_rules! set {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value {
            $target = v;
        }
    };
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Reads the configured file, if any, and applies the flags on top.
    pub fn resolve(flags: &Overrides) -> Result<Self> {
        let mut config = match &flags.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        config.apply(flags.clone());
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: Overrides) {
        set!(self.out, o.out);
        set!(self.seed, o.seed);
        self.input = o.input.or(self.input.take());
        set!(self.columns.u, o.u_col);
        self.columns.s_in = o.s_in_col.or(self.columns.s_in.take());
        set!(self.columns.s_out, o.s_out_col);
        set!(self.columns.event, o.event_col);
        self.columns.event_value = o.event_value.or(self.columns.event_value.take());
        // An empty list on the command line clears the field.
        let names = |v: Vec<String>| v.into_iter().filter(|n| !n.is_empty()).collect();
        set!(self.columns.covariates, o.covariates.map(names));
        set!(self.columns.categorical, o.categorical.map(names));
        let covariates = &self.columns.covariates;
        self.columns.categorical.retain(|c| covariates.contains(c));
        self.du = o.du.or(self.du);
        self.ds = o.ds.or(self.ds);
        self.min_u = o.min_u.or(self.min_u);
        self.max_u = o.max_u.or(self.max_u);
        self.min_s = o.min_s.or(self.min_s);
        self.max_s = o.max_s.or(self.max_s);
        set!(self.nseg_u, o.nseg_u);
        set!(self.nseg_s, o.nseg_s);
        set!(self.bdeg, o.bdeg);
        set!(self.pord, o.pord);
        set!(self.method, o.method);
        set!(self.criterion, o.criterion.map(Criterion::from));
        set!(self.start, o.start.map(|v| [v[0], v[1]]));
        set!(self.grid_u, o.grid_u);
        set!(self.grid_s, o.grid_s);
        set!(
            self.bic_sample_size,
            o.bic_n.map(|n| match n {
                BicNArg::Cells => BicSampleSize::NonzeroCells,
                BicNArg::Events => BicSampleSize::Events,
            })
        );
        set!(self.n_reps, o.n_reps);
        set!(self.level, o.level);
        self.surface_du = o.surface_du.or(self.surface_du);
        self.surface_ds = o.surface_ds.or(self.surface_ds);
        set!(self.predict_ds, o.predict_ds);
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("du", self.du),
            ("ds", self.ds),
            ("surface_du", self.surface_du),
            ("surface_ds", self.surface_ds),
            ("predict_ds", Some(self.predict_ds)),
        ];
        for (name, value) in positive {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        for c in &self.columns.categorical {
            if !self.columns.covariates.contains(c) {
                return Err(CliError::Config(format!("categorical column '{c}' is not among the covariates")));
            }
        }
        Ok(())
    }

    pub fn input(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| CliError::Config("no input file given".into()))
    }

    pub fn prep(&self) -> Result<PrepConfig> {
        let ds = self.ds.ok_or_else(|| CliError::Config("bin width ds is required".into()))?;
        Ok(PrepConfig {
            du: self.du,
            min_u: self.min_u,
            max_u: self.max_u,
            min_s: self.min_s,
            max_s: self.max_s,
            ..PrepConfig::new(ds)
        })
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions { bic_sample_size: self.bic_sample_size, ..FitOptions::default() }
    }

    pub fn model_spec(&self, grid: &twoscale::BinGrid, has_covariates: bool) -> Result<ModelSpec> {
        Ok(ModelSpec::for_grid(grid, self.nseg_u, self.nseg_s, self.bdeg, self.pord, has_covariates)?)
    }
}
