mod commands;
mod config;
mod fieldspec;
mod record;

use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fraclab_core::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

use commands::*;
use config::{merge, read_config, Common, Format, RunConfig, Settings};
use record::Output;

#[derive(Parser)]
#[command(name = "fraclab", version, about = "Numerical experiments for the fractional p-Laplacian")]
#[command(after_help = "Exit codes: 0 success, 1 numerical or verification failure, 2 usage error.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct With<O: Args> {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    opts: O,
}

#[derive(Subcommand)]
enum Command {
    /// Liouville regime of (n, s, p, q) and the critical exponent
    #[command(after_help = "CSV columns: op,n,s,p,q,regime,q_star")]
    Classify(With<NoOpts>),
    /// The constant c* of the fundamental solution
    #[command(after_help = "CSV columns: op,n,s,p,value,error,evals,seed,version")]
    Constant(With<ConstantOpts>),
    /// Pointwise principal value of the operator
    #[command(after_help = concat!("CSV columns: op,n,s,p,field,x,value,error,evals,seed,version\n\n", "Fields are written kind[:value][@x1,x2,...]:\n  fundamental, normalized, perturbed, constant:C, cutoff:R, gaussian:W, power:BETA\nor @file.json with a profile descriptor {kind, n, params, extra}."))]
    Apply(With<ApplyOpts>),
    /// Weak-form pairing of a field with a test function
    #[command(after_help = concat!("CSV columns: op,n,s,p,u,phi,value,error,evals,seed,version\n\n", "Fields are written kind[:value][@x1,x2,...]:\n  fundamental, normalized, perturbed, constant:C, cutoff:R, gaussian:W, power:BETA\nor @file.json with a profile descriptor {kind, n, params, extra}."))]
    Bracket(With<BracketOpts>),
    /// Build and verify the explicit positive supersolution (needs q above q*)
    #[command(after_help = "CSV columns: r,G,R,stderr (the growth-ratio scan)")]
    Supersolution(With<NoOpts>),
    /// Discrete nonlocal Dirichlet problem on a uniform grid
    #[command(after_help = "CSV columns: x0[,x1],value,interior (one row per node)")]
    Dirichlet(With<DirichletOpts>),
    /// Sweep q across the critical exponent
    #[command(name = "scan-q", after_help = "CSV columns: q,regime,q_star,sigma_max,feasible,verified")]
    ScanQ(With<ScanOpts>),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    /// output was produced but the run did not succeed
    Partial(Output, Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// Input problems exit with 2, numerical failures with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_)
        | Error::MissingParameter(_)
        | Error::Regime(_)
        | Error::Singularity(_)
        | Error::Divergence(_)
        | Error::Regularity(_)
        | Error::InvalidDescriptor(_)
        | Error::EmptyRegion => 2,
        _ => 1,
    }
}

fn prepare<O>(name: &str, w: &With<O>) -> Result<(RunConfig, O), CliError>
where
    O: Args + Serialize + DeserializeOwned,
{
    let file = match &w.common.config {
        Some(path) => read_config(path)?,
        None => Default::default(),
    };
    let common: Common = merge(&w.common, &file)?;
    let opts: O = merge(&w.opts, &file)?;
    let settings = Settings::resolve(&common);
    let args = serde_json::to_value(&opts).expect("options serialize");
    Ok((RunConfig { command: name.to_string(), settings, args }, opts))
}

fn execute<O>(
    name: &str,
    w: &With<O>,
    run: fn(&Settings, &O) -> Result<Output, CliError>,
) -> Result<(Output, Settings), (CliError, Option<Settings>)>
where
    O: Args + Serialize + DeserializeOwned,
{
    let (rc, opts) = prepare(name, w).map_err(|e| (e, None))?;
    if let Some(t) = rc.settings.threads {
        // ignore the error when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match run(&rc.settings, &opts) {
        Ok(out) => Ok((out, rc.settings)),
        Err(e) => Err((e, Some(rc.settings))),
    }
}

fn write_output(out: &Output, settings: &Settings) -> std::io::Result<()> {
    let text = match settings.format {
        Format::Json => out.json_lines(),
        Format::Csv => out.csv.clone(),
    };
    match &settings.out {
        Some(path) => std::fs::write(path, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Classify(w) => execute("classify", w, run_classify),
        Command::Constant(w) => execute("constant", w, run_constant),
        Command::Apply(w) => execute("apply", w, run_apply),
        Command::Bracket(w) => execute("bracket", w, run_bracket),
        Command::Supersolution(w) => execute("supersolution", w, run_supersolution),
        Command::Dirichlet(w) => execute("dirichlet", w, run_dirichlet),
        Command::ScanQ(w) => execute("scan-q", w, run_scan),
    };
    let (out, settings, failure) = match result {
        Ok((out, settings)) => (Some(out), Some(settings), None),
        Err((CliError::Partial(out, e), settings)) => (Some(out), settings, Some(CliError::Core(e))),
        Err((e, settings)) => (None, settings, Some(e)),
    };
    if let (Some(out), Some(settings)) = (&out, &settings) {
        if let Err(e) = write_output(out, settings) {
            eprintln!("error: cannot write output: {e}");
            return ExitCode::from(1);
        }
    }
    match failure {
        None => ExitCode::SUCCESS,
        Some(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Some(CliError::Core(e)) | Some(CliError::Partial(_, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
