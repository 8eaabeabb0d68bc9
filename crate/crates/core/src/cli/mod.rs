//! Command-line front end: flag and config-file resolution, then dispatch.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::moments::Mode;
use crate::numerics::TolerancePolicy;
use crate::polyfam::PolyFamily;

#[derive(Debug, Parser)]
#[command(name = "cauchy-ckp", version, about = "Cauchy-Jacobi biorthogonal polynomials and the dCKP lattice")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Quadrature and exact-arithmetic sanity checks
    Selfcheck,
    /// Build the tau lattice, propagate it along t and export it
    Lattice,
    /// Run the identity suite and write one record per line
    Verify,
    /// Dump polynomial coefficient vectors
    Polys,
    /// Operator compatibility, eigen-relations and the six equations
    Lax,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Selfcheck => "selfcheck",
            Command::Lattice => "lattice",
            Command::Verify => "verify",
            Command::Polys => "polys",
            Command::Lax => "lax",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// jacobi, synthetic-generic or synthetic-structured
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Working precision in decimal digits
    #[arg(long, global = true)]
    pub precision: Option<u32>,
    /// Guard digits; the pass threshold is 10^-(precision - guard)
    #[arg(long, global = true)]
    pub guard: Option<u32>,
    /// Largest n
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Largest s
    #[arg(long, global = true)]
    pub s: Option<u32>,
    /// Largest t
    #[arg(long, global = true)]
    pub t: Option<u32>,
    /// Seed for synthetic tables
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Finest quadrature level
    #[arg(long = "quad-level", global = true)]
    #[serde(rename = "quad_level")]
    pub quad_level: Option<u32>,
    /// Output file; standard output when absent
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Comma-separated identity ids (verify)
    #[arg(long, global = true)]
    pub identities: Option<String>,
    /// Comma-separated polynomial families (polys)
    #[arg(long, global = true)]
    pub families: Option<String>,
    /// Moment-table extent; for lax, the operator truncation size
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Where verify writes its summary JSON
    #[arg(long, global = true)]
    pub summary: Option<PathBuf>,
    /// JSON file with any of these settings; flags win
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Flags {
    fn or(self, file: Flags) -> Flags {
        Flags {
            mode: self.mode.or(file.mode),
            precision: self.precision.or(file.precision),
            guard: self.guard.or(file.guard),
            n: self.n.or(file.n),
            s: self.s.or(file.s),
            t: self.t.or(file.t),
            seed: self.seed.or(file.seed),
            quad_level: self.quad_level.or(file.quad_level),
            out: self.out.or(file.out),
            format: self.format.or(file.format),
            jobs: self.jobs.or(file.jobs),
            identities: self.identities.or(file.identities),
            families: self.families.or(file.families),
            k: self.k.or(file.k),
            summary: self.summary.or(file.summary),
            config: self.config,
        }
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub mode: Mode,
    pub policy: TolerancePolicy,
    pub nmax: usize,
    pub smax: u32,
    pub tmax: u32,
    pub seed: u64,
    pub quad_level: u32,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub jobs: Option<usize>,
    pub identities: Option<String>,
    pub families: Vec<PolyFamily>,
    pub k: Option<usize>,
    pub summary: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(command: Command, flags: Flags) -> Result<Self> {
        let flags = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let file: Flags =
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                flags.or(file)
            }
            None => flags,
        };
        let mode = match flags.mode.as_deref() {
            Some(m) => Mode::from_str(m).map_err(|_| Error::Config(format!("unknown mode {m:?}")))?,
            None => Mode::JacobiFloat,
        };
        let precision = flags.precision.unwrap_or(120);
        let policy = match flags.guard {
            Some(g) => TolerancePolicy::new(precision, g),
            None => TolerancePolicy::with_default_guard(precision),
        }?;
        let format = flags.format.unwrap_or(Format::Json);
        if format == Format::Csv && command != Command::Lattice {
            return Err(Error::Config(format!("csv output is only offered by lattice, not {}", command.name())));
        }
        if flags.jobs == Some(0) {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        let families = match flags.families.as_deref() {
            Some(list) => list
                .split(',')
                .map(|f| PolyFamily::from_str(f.trim()).map_err(|e| Error::Config(e.to_string())))
                .collect::<Result<Vec<_>>>()?,
            None => vec![PolyFamily::P, PolyFamily::Q, PolyFamily::R],
        };
        let cfg = RunConfig {
            command,
            mode,
            policy,
            nmax: flags.n.unwrap_or(4),
            smax: flags.s.unwrap_or(2),
            tmax: flags.t.unwrap_or(2),
            seed: flags.seed.unwrap_or(42),
            quad_level: flags.quad_level.unwrap_or(8),
            out: flags.out,
            format,
            jobs: flags.jobs,
            identities: flags.identities,
            families,
            k: flags.k,
            summary: flags.summary,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.command == Command::Verify {
            let ids = crate::identities::parse_filter(self.identities.as_deref())?;
            if !ids.is_empty() && !ids.iter().any(|id| crate::identities::gates(self.mode, id)) {
                return Err(Error::Config(format!(
                    "none of the selected identities gates in {} mode; pick one of e1, e2, e3, e4, dckp",
                    self.mode.as_str()
                )));
            }
        }
        if self.command == Command::Lax && self.k.is_some_and(|k| k < 2) {
            return Err(Error::Config("lax needs --k >= 2".into()));
        }
        if self.quad_level < 3 {
            return Err(Error::Config(format!("--quad-level {} < 3", self.quad_level)));
        }
        Ok(())
    }
}

/// Exit code for an error: 2 for anything the caller got wrong, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Precondition(_) => 2,
        _ => 1,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match RunConfig::resolve(cli.command, cli.flags) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let result = match cfg.jobs {
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
            Ok(pool) => pool.install(|| commands::dispatch(&cfg)),
            Err(e) => Err(Error::Config(e.to_string())),
        },
        None => commands::dispatch(&cfg),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Writes `text` to the configured output, or standard output.
fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}
