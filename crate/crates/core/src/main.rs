use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opconvex::cli::{
    emit_report, error_status, load_operands, parse_check_list, run_check, run_classify, DimRange, Report, RunConfig,
};
use opconvex::criteria::X0Variant;
use opconvex::hermitian::Interval;
use opconvex::Result;

#[derive(Parser)]
#[command(name = "opconvex", version, about = "Randomized certification of (strong) operator convexity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the convex, operator-convex and strongly-operator-convex batteries.
    Classify(Common),
    /// Evaluate one inequality on operands read from a JSON file.
    Check {
        #[command(flatten)]
        common: Common,
        /// Operand file, in the same format as report witnesses.
        #[arg(long)]
        operands: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Function spec, e.g. "resolvent_above(2)" or "rep{c=0;below=[];above=[(2,1)]}".
    #[arg(long = "fn")]
    fn_spec: String,
    /// Interval "a,b", "[a,b]" or "(a,b)"; intersected with the function's domain.
    #[arg(long, allow_hyphen_values = true)]
    interval: Option<Interval>,
    /// Dimension range lo..hi (inclusive).
    #[arg(long, default_value = "1..6")]
    dims: DimRange,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Comma-separated check ids; all checks when omitted.
    #[arg(long)]
    checks: Option<String>,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_x0, default_value = "as_printed")]
    x0_variant: X0Variant,
    /// Evaluate the Jensen-type bound at s² instead of s²·∫x dμ.
    #[arg(long)]
    j15_literal: bool,
    /// Record wall-clock seconds in the report (reports then differ run to run).
    #[arg(long)]
    timing: bool,
}

fn parse_x0(s: &str) -> std::result::Result<X0Variant, String> {
    s.parse().map_err(|e: opconvex::Error| e.to_string())
}

impl Common {
    fn config(&self, operands: Option<&Path>) -> Result<RunConfig> {
        Ok(RunConfig {
            fn_spec: self.fn_spec.clone(),
            interval: self.interval.unwrap_or_else(Interval::real_line),
            dims: self.dims,
            trials: self.trials,
            seed: self.seed,
            tol: self.tol,
            checks: self.checks.as_deref().map(parse_check_list).transpose()?,
            out_path: self.out.as_ref().map(|p| p.display().to_string()),
            x0_variant: self.x0_variant,
            j15_literal: self.j15_literal,
            operands_path: operands.map(|p| p.display().to_string()),
            timing: self.timing,
        })
    }
}

fn execute(command: &Command) -> Result<Report> {
    let report = match command {
        Command::Classify(common) => run_classify(&common.config(None)?)?,
        Command::Check { common, operands } => {
            let config = common.config(Some(operands))?;
            let ops = load_operands(operands)?;
            run_check(&config, &ops)?
        }
    };
    if let Some(path) = &report.config.out_path {
        emit_report(&report, Path::new(path))?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(report) => {
            let mut out = io::stdout().lock();
            for line in report.text_lines() {
                if writeln!(out, "{line}").is_err() {
                    return ExitCode::from(3);
                }
            }
            ExitCode::from(report.exit_status() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_status(&e) as u8)
        }
    }
}
