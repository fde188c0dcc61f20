use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use vacflip_core::config::{parse_config, RawConfig, SimulationConfig};
use vacflip_core::output::to_json_17;
use vacflip_core::report::render_report;
use vacflip_core::runner::{self, RunSummary, SUMMARY_FILE, SWEEP_FILE};
use vacflip_core::verify::{self, Suite, VerifyReport};

/// Spin-½ vacuum decay simulator and verification suites.
#[derive(Parser)]
#[command(name = "vacflip", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Geometry,
    Kernel,
    Shift,
    Rr,
    Oracle,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Geometry => Suite::Geometry,
            SuiteArg::Kernel => Suite::Kernel,
            SuiteArg::Shift => Suite::Shift,
            SuiteArg::Rr => Suite::Rr,
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the engines named in a config file and write its artifacts.
    Run { config: PathBuf },
    /// Run an invariant suite and print its JSON report; exits non-zero on any failed check.
    Verify {
        #[arg(value_enum)]
        suite: SuiteArg,
        /// Seed for the randomized parameter draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the JSON report to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// One run per value of a numeric config key, summarised in sweep.csv.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
    /// Pretty-print a run summary and its published-claim comparison.
    Report { summary: PathBuf },
}

fn load(path: &PathBuf) -> Result<(String, SimulationConfig)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text)?;
    cfg.apply_env_overrides()?;
    Ok((text, cfg))
}

fn print_ladder(report: &VerifyReport) {
    let Some(l) = &report.rr_ladder else { return };
    eprintln!("epsilon ladder at t = {} (omega_char = {})", l.t, l.omega_char);
    eprintln!("{:>12} {:>14} {:>20}", "epsilon", "rel diff local", "rel diff (pi/2) local");
    for r in &l.rungs {
        eprintln!("{:>12.4e} {:>14.6e} {:>20.6e}", r.epsilon, r.rel_diff_local, r.rel_diff_half_pi);
    }
    eprintln!(
        "order vs local {:.4}, order vs (pi/2) local {:.4}, final |spectral|/|local| {:.6}",
        l.order_vs_local, l.order_vs_half_pi, l.final_ratio
    );
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config } => {
            let (_, cfg) = load(&config)?;
            let s = runner::run(&cfg)?;
            println!("wrote {}", cfg.output_dir.join(SUMMARY_FILE).display());
            print!("{}", render_report(&s));
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, seed, output } => {
            let report = verify::verify(suite.into(), seed);
            let json = to_json_17(&report)?;
            print!("{json}");
            if let Some(path) = output {
                std::fs::write(&path, &json).with_context(|| format!("writing {}", path.display()))?;
            }
            print_ladder(&report);
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAIL {}/{}: achieved {:e}, tolerance {:?}", c.suite.name(), c.name, c.achieved, c.tolerance);
            }
            let total = report.checks.len();
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            eprintln!("{} of {total} checks passed", total - failed);
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Sweep { config, axis, values } => {
            let (text, cfg) = load(&config)?;
            let raw = RawConfig::parse(&text);
            let rows = runner::sweep(&raw, &axis, &values, &cfg.output_dir)?;
            println!("wrote {}", cfg.output_dir.join(SWEEP_FILE).display());
            for r in &rows {
                match (&r.summary, &r.error) {
                    (Some(s), _) => println!("{axis} = {:e}: beta = {:e}", r.value, s.beta_analytic),
                    (None, Some(e)) => println!("{axis} = {:e}: error: {}", r.value, e.replace('\n', " ")),
                    (None, None) => bail!("row {} has neither a result nor an error", r.index),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { summary } => {
            let s = RunSummary::read(&summary)?;
            print!("{}", render_report(&s));
            Ok(ExitCode::SUCCESS)
        }
    }
}
