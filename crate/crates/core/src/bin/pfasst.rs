use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pfasst::cli::{emit_csv, emit_json, run_experiment, CliError, RunConfig};

/// Runs PFASST / PFASST-ER experiments and writes per-cell counters.
///
/// Exit status: 0 when every cell converged, 2 when any cell did not
/// converge or failed during the run, 1 on configuration errors.
#[derive(Parser, Debug)]
#[command(name = "pfasst", version)]
struct Args {
    /// Config file with one `key = value` pair per line.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key; may be repeated.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// 256/128 mesh and 24 steps instead of the desk-scale profile.
    #[arg(long)]
    full_profile: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write the detailed JSON record.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

fn load(args: &Args) -> Result<RunConfig, Box<CliError>> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Box::new(e.into()))?,
        None => String::new(),
    };
    let mut overrides = Vec::new();
    if args.full_profile {
        overrides.push("profile=full".to_string());
    }
    overrides.extend(args.set.iter().cloned());
    RunConfig::parse_with_overrides(&text, &overrides).map_err(|e| Box::new(e.into()))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(1);
        }
    };
    if args.print_config {
        print!("{}", cfg.emit());
        return ExitCode::SUCCESS;
    }
    let exp = match run_experiment(&cfg) {
        Ok(e) => e,
        Err(CliError::Config(e)) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let csv = emit_csv(&exp);
    let written = match &args.csv {
        Some(p) => std::fs::write(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
    .and_then(|()| match &args.json {
        Some(p) => std::fs::write(p, emit_json(&exp)),
        None => Ok(()),
    });
    if let Err(e) = written {
        eprintln!("i/o error: {e}");
        return ExitCode::from(1);
    }
    if exp.all_converged() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
