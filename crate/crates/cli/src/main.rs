use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::warn;
use rayon::prelude::*;

use presstopo::config::parse_override_value;
use presstopo::export::export_gradients;
use presstopo::{export, library, load_config, run, Error, ExportFormat, ProblemSpec, RunOptions, RunResult};

mod sweep;

#[derive(Parser)]
#[command(
    name = "presstopo",
    version,
    about = "Topology optimization under design-dependent pressure loads"
)]
struct Cli {
    /// Log progress (-v) or every iteration (-vv).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a problem given as a JSON file or a bundled name.
    Run {
        config: String,
        /// Override the iteration budget.
        #[arg(long)]
        iters: Option<usize>,
        /// Leave the pressure-load terms out of the gradient.
        #[arg(long)]
        no_load_sens: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated list of vtk, csv, img.
        #[arg(long, value_delimiter = ',', default_value = "vtk,csv,img")]
        export: Vec<String>,
        /// `key=v1,v2,...` with a dotted key; repeated flags are zipped.
        #[arg(long)]
        sweep: Vec<String>,
        /// Run a study defined in the problem file.
        #[arg(long, conflicts_with = "sweep")]
        study: Option<String>,
        /// Also write per-iteration gradient norms.
        #[arg(long)]
        diagnostics: bool,
    },
    /// List bundled problems and their studies.
    List,
    /// Print a bundled problem as JSON.
    Show { name: String },
}

fn resolve(config: &str) -> Result<ProblemSpec, Error> {
    let path = PathBuf::from(config);
    if path.is_file() {
        load_config(&path)
    } else if library::source(config).is_some() {
        library::load(config)
    } else {
        Err(Error::Config {
            path: config.to_string(),
            message: format!(
                "neither a readable file nor a bundled problem (bundled: {})",
                library::names().collect::<Vec<_>>().join(", ")
            ),
        })
    }
}

fn summarize(r: &RunResult, seconds: f64) {
    let a = &r.final_analysis;
    let delta = a.delta.map(|d| format!("  delta {:.4e} m", d)).unwrap_or_default();
    println!(
        "{:<24} objective {:>12.5e}  volume {:.4}  F ({:.3e}, {:.3e}){}  [{:.1} s]",
        r.name, a.objective, a.volume, a.resultant[0], a.resultant[1], delta, seconds
    );
}

fn configure_threads() {
    if let Ok(v) = std::env::var("PRESSTOPO_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    warn!("could not size the thread pool: {e}");
                }
            }
            _ => warn!("ignoring PRESSTOPO_THREADS={v}: expected a positive integer"),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: &str,
    iters: Option<usize>,
    no_load_sens: bool,
    out: PathBuf,
    export_list: &[String],
    sweeps: &[String],
    study: Option<&str>,
    diagnostics: bool,
) -> Result<(), Error> {
    let base = resolve(config)?;
    let formats = export_list
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<ExportFormat>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Error::Config {
            path: "--export".into(),
            message: e.to_string(),
        })?;
    if iters == Some(0) {
        return Err(Error::Config {
            path: "--iters".into(),
            message: "must be at least 1".into(),
        });
    }
    let mut specs = if let Some(name) = study {
        base.study(name)?.into_iter().map(|(_, s)| s).collect()
    } else if !sweeps.is_empty() {
        let axes = sweeps.iter().map(|s| sweep::parse(s)).collect::<Result<Vec<_>, _>>()?;
        sweep::expand(&base, &axes, parse_override_value)?
    } else {
        vec![base]
    };
    if no_load_sens {
        for s in &mut specs {
            s.name.push_str("_noload");
        }
    }
    let options = RunOptions {
        include_load_sensitivities: !no_load_sens,
        iterations: iters,
    };

    let outcomes: Vec<Result<(), Error>> = specs
        .par_iter()
        .map(|spec| {
            let start = Instant::now();
            let result = run(spec, &options).inspect_err(|e| {
                if specs.len() > 1 {
                    eprintln!("{}: failed: {e}", spec.name);
                }
            })?;
            summarize(&result, start.elapsed().as_secs_f64());
            export(&result, &formats, &out)?;
            if diagnostics {
                export_gradients(&result, &out)?;
            }
            Ok(())
        })
        .collect();
    outcomes.into_iter().collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    configure_threads();

    let outcome = match cli.command {
        Command::List => {
            for name in library::names() {
                let spec = library::load(name).expect("bundled problems are valid");
                let studies: Vec<&str> = spec.studies.keys().map(String::as_str).collect();
                let studies = if studies.is_empty() {
                    String::new()
                } else {
                    format!("  studies: {}", studies.join(", "))
                };
                println!("{name:<14} {}{studies}", spec.description);
            }
            Ok(())
        }
        Command::Show { name } => match library::source(&name) {
            Some(text) => {
                print!("{text}");
                Ok(())
            }
            None => {
                resolve(&name).map(|s| println!("{}", serde_json::to_string_pretty(&s.to_value()).expect("serializes")))
            }
        },
        Command::Run {
            config,
            iters,
            no_load_sens,
            out,
            export,
            sweep,
            study,
            diagnostics,
        } => cmd_run(
            &config,
            iters,
            no_load_sens,
            out,
            &export,
            &sweep,
            study.as_deref(),
            diagnostics,
        ),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                2
            } else if e.is_numerical() {
                3
            } else {
                1
            })
        }
    }
}
