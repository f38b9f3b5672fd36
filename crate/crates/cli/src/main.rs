//! Command-line workflow for two-time-scale hazard smoothing.

mod commands;
mod config;
mod error;
mod io;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twoscale::Plane;

use crate::commands::PredictArgs;
use crate::config::{Overrides, RunConfig};
use crate::error::Result;
use crate::io::{write_file, GridFile};
use crate::render::{render_svg, Palette, RenderOptions};

#[derive(Debug, Parser)]
#[command(name = "twoscale", version, about = "Smooth hazards over two time scales")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum PlaneArg {
    Us,
    Ts,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bin individual records and summarise the binned data.
    Prepare {
        #[command(flatten)]
        flags: Overrides,
    },
    /// Fit the hazard surface and select its smoothing parameters.
    Fit {
        #[command(flatten)]
        flags: Overrides,
        /// Binned data written by `prepare`, instead of the input CSV.
        #[arg(long)]
        binned: Option<PathBuf>,
    },
    /// Predict hazards, cumulative hazards and survival at new points.
    Predict {
        #[command(flatten)]
        flags: Overrides,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        newdata: PathBuf,
        /// Output CSV; `<out>/predictions.csv` by default.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cumulative incidence from cause-specific models.
    Cif {
        #[command(flatten)]
        flags: Overrides,
        /// One model file per cause.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
    },
    /// Draw a grid file as an SVG heatmap.
    Render {
        /// Grid CSV; its JSON sidecar is used when present.
        grid: PathBuf,
        /// Output SVG; the grid path with an `.svg` extension by default.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        palette: Palette,
        /// Comma-separated contour levels.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        levels: Vec<f64>,
        /// Number of evenly spaced contour levels when none are given.
        #[arg(long, default_value_t = 6)]
        n_levels: usize,
        #[arg(long, value_enum)]
        plane: Option<PlaneArg>,
        /// Hide cells with `u + s` beyond this.
        #[arg(long)]
        tmax: Option<f64>,
        /// Also draw cells outside the data support.
        #[arg(long)]
        keep_extrapolated: bool,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        xlab: Option<String>,
        #[arg(long)]
        ylab: Option<String>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { flags } => {
            print!("{}", commands::prepare(&RunConfig::resolve(&flags)?)?);
        }
        Command::Fit { flags, binned } => {
            print!("{}", commands::fit(&RunConfig::resolve(&flags)?, binned.as_deref())?);
        }
        Command::Predict { flags, model, newdata, output } => {
            let config = RunConfig::resolve(&flags)?;
            let args = PredictArgs { model: &model, newdata: &newdata, u_col: flags.u_col, s_col: flags.s_out_col, output };
            println!("{}", commands::predict(&config, args)?.display());
        }
        Command::Cif { flags, models } => {
            print!("{}", commands::cif(&RunConfig::resolve(&flags)?, &models)?);
        }
        Command::Render { grid, output, palette, levels, n_levels, plane, tmax, keep_extrapolated, title, xlab, ylab } => {
            let file = GridFile::read(&grid)?;
            let options = RenderOptions {
                palette,
                levels,
                n_levels,
                plane: plane.map(|p| match p {
                    PlaneArg::Us => Plane::Us,
                    PlaneArg::Ts => Plane::Ts,
                }),
                t_max: tmax,
                cut_extrapolated: !keep_extrapolated,
                title,
                x_label: xlab,
                y_label: ylab,
            };
            let path = output.unwrap_or_else(|| grid.with_extension("svg"));
            write_file(&path, &render_svg(&file, &options)?)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
