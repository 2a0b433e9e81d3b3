//! `pi-forge` command-line tool.
//!
//! Every command computes its outputs in memory, then moves them into the
//! `--out` directory together with a `manifest.json`. Errors end the process
//! with exit code 1 (usage), 2 (data or units) or 3 (numerical failure) and
//! a single JSON line on stderr.

mod args;
mod config;
mod discover;
mod error;
mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use pi_forge::datagen::{self, SystemSpec};
use pi_forge::nullspace::{enumerate_candidates, rational_nullspace};
use pi_forge::pitransform::PiExponents;
use pi_forge::units::Registry;
use pi_forge::Rational;
use serde::Serialize;

use crate::args::{Cli, ColumnSet, Command, NullspaceArgs, SimulateArgs, System};
use crate::error::CliError;
use crate::output::{digest_inputs, now_unix_ms, sha256_hex, to_json, FileDigest, RunManifest, Staged};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Invocation-wide settings.
pub struct Ctx {
    pub argv: Vec<String>,
    pub seed_flag: Option<u64>,
    pub jobs: usize,
    pub started: u128,
}

impl Ctx {
    /// `--seed`, then `PI_FORGE_SEED`, then the config value, then 0.
    pub fn resolve_seed(&self, config: Option<u64>) -> Result<(u64, &'static str), CliError> {
        if let Some(s) = self.seed_flag {
            return Ok((s, "flag"));
        }
        if let Ok(text) = std::env::var("PI_FORGE_SEED") {
            let s = text
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("PI_FORGE_SEED=`{text}` is not an unsigned integer")))?;
            return Ok((s, "env"));
        }
        Ok(match config {
            Some(s) => (s, "config"),
            None => (0, "default"),
        })
    }

    /// Adds the manifest and moves everything into `out`.
    pub fn finish(
        &self,
        mut staged: Staged,
        out: &Path,
        config_json: &[u8],
        seed: (u64, &'static str),
        inputs: Vec<FileDigest>,
    ) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.argv.clone(),
            config_hash: sha256_hex(config_json),
            seed: seed.0,
            seed_source: seed.1,
            version: VERSION,
            jobs: self.jobs,
            started_unix_ms: self.started,
            finished_unix_ms: now_unix_ms(),
            inputs,
            outputs: staged.digests(),
        };
        staged.add("manifest.json", to_json(&manifest));
        staged.commit(out)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or_default();
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.to_line());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_line());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = match cli.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be >= 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let ctx = Ctx {
        argv: std::env::args().skip(1).collect(),
        seed_flag: cli.seed,
        jobs,
        started: now_unix_ms(),
    };
    pool.install(|| match cli.command {
        Command::Nullspace(a) => cmd_nullspace(&ctx, &a),
        Command::Simulate(a) => cmd_simulate(&ctx, &a),
        Command::Discover(a) => discover::cmd_discover(&ctx, &a),
        Command::ExportPlot(a) => plot::cmd_export_plot(&ctx, &a),
    })
}

pub fn rational_text(r: &Rational) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[derive(Serialize)]
struct NullspaceReport {
    columns: Vec<String>,
    base: Vec<String>,
    /// Rows of the units matrix.
    matrix: Vec<Vec<String>>,
    rank: usize,
    pi_count: usize,
    basis: Vec<Vec<String>>,
    integer_basis: Vec<Vec<i64>>,
    groups: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidates: Option<pi_forge::nullspace::CandidateSet>,
}

fn cmd_nullspace(ctx: &Ctx, a: &NullspaceArgs) -> Result<(), CliError> {
    let reg = Registry::load(&a.units)?;
    let full = reg.units_matrix()?;
    let d = match a.columns {
        ColumnSet::All => full,
        ColumnSet::Inputs => full.d_p(),
        ColumnSet::Parameters => full.parameters(),
    };
    let basis = rational_nullspace(&d);
    let integer_basis = basis.integer_basis();
    let candidates = match a.bound {
        Some(b) => {
            let time = match a.columns {
                ColumnSet::Parameters => reg.time_dimension().ok(),
                _ => None,
            };
            Some(enumerate_candidates(&basis, b, time.as_ref())?)
        }
        None => None,
    };
    let report = NullspaceReport {
        columns: d.names().to_vec(),
        base: d.base().names().to_vec(),
        matrix: d.rows().iter().map(|r| r.iter().map(rational_text).collect()).collect(),
        rank: basis.rank(),
        pi_count: basis.pi_count(),
        basis: basis.basis().iter().map(|v| v.iter().map(rational_text).collect()).collect(),
        groups: integer_basis
            .iter()
            .map(|v| PiExponents::from_ints(d.names().iter().cloned(), v).display_product())
            .collect(),
        integer_basis,
        candidates,
    };
    let bytes = to_json(&report);
    print!("{}", String::from_utf8_lossy(&bytes));
    let Some(out) = &a.out else {
        return Ok(());
    };
    let config = serde_json::json!({ "columns": format!("{:?}", a.columns), "bound": a.bound });
    let mut staged = Staged::default();
    staged.add("nullspace.json", bytes);
    ctx.finish(
        staged,
        out,
        config.to_string().as_bytes(),
        (0, "default"),
        digest_inputs(&a.units)?,
    )
}

fn default_spec(system: System) -> SystemSpec {
    match system {
        System::Pendulum => SystemSpec::Pendulum(Default::default()),
        System::Hoop => SystemSpec::Hoop(datagen::HoopSpec::dsindy()),
        System::Blasius => SystemSpec::Blasius(Default::default()),
        System::Landau => SystemSpec::Landau(Default::default()),
    }
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    let mut spec = match &a.spec {
        Some(path) => {
            inputs = digest_inputs(path)?;
            SystemSpec::from_toml_str(&std::fs::read_to_string(path)?)?
        }
        None => default_spec(a.system),
    };
    let matches = matches!(
        (&spec, a.system),
        (SystemSpec::Pendulum(_), System::Pendulum)
            | (SystemSpec::Hoop(_), System::Hoop)
            | (SystemSpec::Blasius(_), System::Blasius)
            | (SystemSpec::Landau(_), System::Landau)
    );
    if !matches {
        return Err(CliError::Usage(format!(
            "spec file describes a different system than --system {:?}",
            a.system
        )));
    }
    let seed_slot: &mut u64 = match &mut spec {
        SystemSpec::Pendulum(s) => &mut s.sampler.seed,
        SystemSpec::Hoop(s) => &mut s.sampler.seed,
        SystemSpec::Blasius(s) => &mut s.seed,
        SystemSpec::Landau(s) => &mut s.seed,
    };
    let config_seed = a.spec.as_ref().map(|_| *seed_slot);
    let seed = ctx.resolve_seed(config_seed)?;
    *seed_slot = seed.0;

    let mut staged = Staged::default();
    match &spec {
        SystemSpec::Pendulum(s) => {
            let data = datagen::gen_pendulum(s)?;
            staged.add("units.toml", Registry::pendulum().to_toml_string().into_bytes());
            staged.add("data.csv", csv_bytes(|w| data.write_csv(w))?);
        }
        SystemSpec::Blasius(s) => {
            let field = datagen::gen_blasius(s)?;
            staged.add("units.toml", Registry::blasius().to_toml_string().into_bytes());
            staged.add("train.csv", csv_bytes(|w| field.training().write_csv(w))?);
            staged.add("field.csv", csv_bytes(|w| field.field.write_csv(w))?);
        }
        SystemSpec::Hoop(s) => {
            let runs = datagen::gen_hoop(s)?;
            for (name, bytes) in datagen::run_files(&runs, &Registry::hoop())? {
                staged.add(name, bytes);
            }
        }
        SystemSpec::Landau(s) => {
            let runs = datagen::gen_landau(s)?;
            for (name, bytes) in datagen::run_files(&runs, &Registry::rayleigh_benard())? {
                staged.add(name, bytes);
            }
        }
    }
    let spec_text = spec.to_toml_string();
    staged.add("spec.toml", spec_text.clone().into_bytes());
    ctx.finish(staged, &a.out, spec_text.as_bytes(), seed, inputs)
}

pub fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> pi_forge::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

pub fn path_text(p: &Path) -> String {
    PathBuf::from(p).display().to_string()
}
