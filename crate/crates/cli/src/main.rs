//! `ztmeta`: fit zero-truncated rate models to a meta-analysis data set and
//! estimate how many zero-event studies were left out.
//!
//! ```text
//! ztmeta fit
//! ztmeta gof --tail-threshold 4
//! ztmeta population --strata default
//! ztmeta bootstrap --b 2000 --seed 1
//! ztmeta report --out results --format csv
//! ```
//!
//! Without `--input` the bundled data set is used. The bootstrap runs on all
//! cores; `RAYON_NUM_THREADS` caps the thread count without changing results.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ztmeta::{BootstrapConfig, Family, LinearPredictor, ModelSpec, SubPopulation};

use commands::{Inputs, ReportConfig, Strata};
use render::Format;

#[derive(Parser)]
#[command(
    name = "ztmeta",
    version,
    about = "Zero-truncated rate models for meta-analyses"
)]
struct Cli {
    /// Input CSV (id,person_years,prop_women,country,suicides); defaults to the bundled data.
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model family; omit together with --lp to use the BIC-best count model.
    #[arg(long, requires = "lp")]
    family: Option<Family>,

    /// Linear predictor, 1 to 5.
    #[arg(long, requires = "family", value_parser = clap::value_parser!(u8).range(1..=5))]
    lp: Option<u8>,

    /// Fit the zero-truncated form of the model.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    truncated: bool,
}

impl ModelArgs {
    fn spec(&self) -> Result<Option<ModelSpec>> {
        let (Some(family), Some(lp)) = (self.family, self.lp) else {
            return Ok(None);
        };
        Ok(Some(ModelSpec {
            family,
            truncated: self.truncated,
            lp: LinearPredictor::new(lp)?,
        }))
    }
}

#[derive(Args, Clone)]
struct BootstrapArgs {
    /// Number of bootstrap replicates.
    #[arg(long, default_value_t = 25_000)]
    b: usize,

    #[arg(long, default_value_t = 20_130_527)]
    seed: u64,

    /// Confidence level for the Wald and percentile intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,

    #[arg(long, value_enum, default_value_t = Strata::Default)]
    strata: Strata,
}

impl BootstrapArgs {
    fn config(&self) -> BootstrapConfig {
        BootstrapConfig {
            b: self.b,
            seed: self.seed,
            subpopulations: SubPopulation::defaults(),
            strata: self.strata.defs(),
            confidence_level: self.level,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fill in missing prop_women values.
    Impute,
    /// Fit one model, or with no model options the full model grid.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Observed versus fitted event-count frequencies and a chi-square test.
    Gof {
        #[command(flatten)]
        model: ModelArgs,
        /// Counts at or above this value share one bin.
        #[arg(long, default_value_t = 4)]
        tail_threshold: u64,
    },
    /// Horvitz-Thompson estimates of the number of excluded studies.
    Population {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = Strata::Default)]
        strata: Strata,
    },
    /// Model-averaged parametric bootstrap intervals.
    Bootstrap {
        #[command(flatten)]
        boot: BootstrapArgs,
    },
    /// Run every stage and write report.json (plus per-table CSVs with --format csv).
    Report {
        #[command(flatten)]
        boot: BootstrapArgs,
        #[arg(long, default_value_t = 4)]
        tail_threshold: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String> {
    let inputs: Inputs = commands::load(cli.input.as_deref()).context("stage load")?;
    let output = match &cli.command {
        Command::Impute => commands::impute(&inputs),
        Command::Fit { model } => match model.spec()? {
            Some(spec) => commands::fit_one(&inputs, spec).context("stage fit")?,
            None => commands::fit_all(&inputs).context("stage fit")?.0,
        },
        Command::Gof {
            model,
            tail_threshold,
        } => {
            let fit = commands::chosen_fit(&inputs, model.spec()?).context("stage fit")?;
            commands::gof(&inputs, &fit, *tail_threshold).context("stage gof")?
        }
        Command::Population { model, strata } => {
            let fit = commands::chosen_fit(&inputs, model.spec()?).context("stage fit")?;
            commands::population(&inputs, &fit, &strata.defs())
                .context("stage population")?
                .0
        }
        Command::Bootstrap { boot } => {
            let fits =
                ztmeta::fit_grid(&inputs.data, &ModelSpec::count_grid()).context("stage fit")?;
            commands::bootstrap(&inputs, &fits, &boot.config())
                .context("stage bootstrap")?
                .0
        }
        Command::Report {
            boot,
            tail_threshold,
            out,
        } => {
            let cfg = ReportConfig {
                tail_threshold: *tail_threshold,
                strata: boot.strata.defs(),
                bootstrap: boot.config(),
            };
            let report = commands::report(&inputs, &cfg)?;
            let written = commands::write_report(&report, out, cli.format == Format::Csv)
                .context("stage write")?;
            for path in &written {
                eprintln!("wrote {}", path.display());
            }
            report
        }
    };
    Ok(output.render(cli.format))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
