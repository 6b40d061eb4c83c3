//! `cwexp` command-line front end.
//!
//! Every command resolves its configuration (flags > `--config` JSON >
//! built-in defaults), computes everything in memory, and only then writes
//! its files together with a `manifest.json` echoing the resolved config.
//! Exit codes: 0 pass, 1 fail, 2 inconclusive, 64 configuration error.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

use commands::{Failure, Outcome};
use config::{parse_length, CommonFlags, ConfigError, ExtraFlags, FileConfig, RunConfig};

pub const EXIT_CONFIG: i32 = 64;
pub const THREADS_ENV: &str = "CWEXP_THREADS";

#[derive(Parser, Debug)]
#[command(name = "cwexp", version, about = "Continuum-wise expansivity toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Forward images of the trapping region of da / pda.
    RenderAttractor {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// E_α, cw-expansivity and almost cw-expansivity probes.
    Probe {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long, value_parser = parse_length)]
        e_alpha: Option<f64>,
        #[arg(long)]
        expansivity: bool,
        #[arg(long, value_parser = parse_length)]
        almost_cwexp: Option<f64>,
        /// Point-iterate budget; a probe that runs out without a witness
        /// is inconclusive.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Boundary preprocessing and cell-twist transversalization of two
    /// builtin decompositions of the unit disk.
    Transversality {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        q: Option<String>,
        /// Displacement bound.
        #[arg(long, value_parser = parse_length)]
        delta: Option<f64>,
    },
    /// α-small-continuum partition and its semiconjugacy residual.
    Quotient {
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Almost cw-expansivity of the sphere bouquet.
    Bouquet {
        #[command(flatten)]
        common: CommonFlags,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::RenderAttractor { .. } => "render-attractor",
            Command::Probe { .. } => "probe",
            Command::Transversality { .. } => "transversality",
            Command::Quotient { .. } => "quotient",
            Command::Bouquet { .. } => "bouquet",
        }
    }

    fn flags(&self) -> (&CommonFlags, ExtraFlags) {
        match self {
            Command::RenderAttractor { common, max_iter } => (
                common,
                ExtraFlags {
                    max_iter: *max_iter,
                    ..Default::default()
                },
            ),
            Command::Probe {
                common,
                e_alpha,
                expansivity,
                almost_cwexp,
                budget,
            } => (
                common,
                ExtraFlags {
                    e_alpha: *e_alpha,
                    expansivity: *expansivity,
                    almost_cwexp: *almost_cwexp,
                    budget: *budget,
                    ..Default::default()
                },
            ),
            Command::Transversality { common, p, q, delta } => (
                common,
                ExtraFlags {
                    p: p.clone(),
                    q: q.clone(),
                    delta: *delta,
                    ..Default::default()
                },
            ),
            Command::Quotient { common } | Command::Bouquet { common } => (common, ExtraFlags::default()),
        }
    }
}

/// Cap the global rayon pool from `CWEXP_THREADS`. The pool can only be
/// built once per process; later calls keep the first setting.
fn configure_threads() -> Result<(), ConfigError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn execute(cli: &Cli) -> Result<(Outcome, RunConfig, std::path::PathBuf), Failure> {
    configure_threads()?;
    let name = cli.command.name();
    let (common, extra) = cli.command.flags();
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let (cfg, out) = RunConfig::resolve(common, &extra, &file, &commands::defaults(name))?;
    let outcome = match cli.command {
        Command::RenderAttractor { .. } => commands::cmd_render_attractor(&cfg)?,
        Command::Probe { .. } => commands::cmd_probe(&cfg)?,
        Command::Transversality { .. } => commands::cmd_transversality(&cfg)?,
        Command::Quotient { .. } => commands::cmd_quotient(&cfg)?,
        Command::Bouquet { .. } => commands::cmd_bouquet(&cfg)?,
    };
    Ok((outcome, cfg, out))
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli) {
        Ok((mut outcome, cfg, dir)) => {
            if let Err(e) = output::commit(&dir, cli.command.name(), &cfg, &mut outcome.outputs) {
                eprintln!("error: writing {}: {e}", dir.display());
                return 1;
            }
            for flag in &outcome.outputs.flags {
                eprintln!("flagged: {flag}");
            }
            println!(
                "{}: {} — {} (outputs in {})",
                cli.command.name(),
                outcome.verdict.as_str(),
                outcome.summary,
                dir.display()
            );
            outcome.verdict.exit_code()
        }
        Err(Failure::Config(e)) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
