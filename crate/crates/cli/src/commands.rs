//! The batch subcommands: run, verify, sweep and compare.

use crate::args::ConfigArgs;
use hypmap_core::error::Error;
use hypmap_core::flow::{convergence_constants, run_runner, FlowRun, FlowRunner, Method};
use hypmap_core::pipeline::{Pipeline, RunConfig};
use hypmap_core::snapshot::{header_line, SnapshotHeader, SnapshotRecord};
use hypmap_verify::suites::select;
use hypmap_verify::{method_comparison, stepsize_sweep};
use std::io::Write;
use std::path::Path;

/// Success.
pub const EXIT_OK: i32 = 0;
/// A pipeline stage failed, a run did not converge, or a check failed.
pub const EXIT_FAILURE: i32 = 1;
/// Bad command line (unknown suite, empty stepsize list, ...).
pub const EXIT_USAGE: i32 = 2;
/// The run configuration failed validation; nothing was computed.
pub const EXIT_INVALID_CONFIG: i32 = 3;

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub enum CommandError {
    InvalidConfig(Error),
    Pipeline(Error),
    Usage(String),
    Io(std::io::Error),
    /// The command ran but its outcome is a failure (non-convergence,
    /// failed suite).
    Failed(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::InvalidConfig(_) => EXIT_INVALID_CONFIG,
            CommandError::Usage(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CommandError::InvalidConfig(e) | CommandError::Pipeline(e) => write!(f, "{}: {e}", e.name()),
            CommandError::Usage(m) => write!(f, "usage: {m}"),
            CommandError::Io(e) => write!(f, "io: {e}"),
            CommandError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> CommandError {
        CommandError::Io(e)
    }
}

pub type CommandResult = std::result::Result<(), CommandError>;

pub fn resolve(args: &ConfigArgs) -> std::result::Result<RunConfig, CommandError> {
    args.resolve().map_err(CommandError::InvalidConfig)
}

/// Outcome of [`run_to_file`].
#[derive(Debug)]
pub struct RunSummary {
    pub run: FlowRun,
    pub records: usize,
    pub q: f64,
}

/// Runs the pipeline and flow, streaming header and records into `out`.
pub fn run_to_writer(config: &RunConfig, out: &mut impl Write) -> std::result::Result<RunSummary, CommandError> {
    run_pipeline(&Pipeline::build(config).map_err(CommandError::Pipeline)?, out)
}

/// [`run_to_writer`] on an already built pipeline.
pub fn run_pipeline(p: &Pipeline, out: &mut impl Write) -> std::result::Result<RunSummary, CommandError> {
    let config = &p.config;
    let runner =
        FlowRunner::new(p.problem.clone(), config.flow_config(), p.initial.clone()).map_err(CommandError::Pipeline)?;
    writeln!(out, "{}", header_line(&SnapshotHeader::new(p, runner.alpha, runner.beta)))?;
    let mut records = 0;
    let mut io_error = None;
    let run = run_runner(runner, |s| {
        records += 1;
        if io_error.is_none() {
            if let Err(e) = writeln!(out, "{}", SnapshotRecord::from_state(s).to_line()) {
                io_error = Some(e);
            }
        }
    })
    .map_err(CommandError::Pipeline)?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    // a stepsize above 1/β carries no rate guarantee
    let t = config.stepsize.unwrap_or(1.0 / run.beta);
    let q = match convergence_constants(p.problem.stats(), run.energies[0], run.final_state.energy, t) {
        Ok(k) => k.q,
        Err(Error::StepsizeOutOfRange { .. }) => f64::NAN,
        Err(e) => return Err(CommandError::Pipeline(e)),
    };
    Ok(RunSummary { run, records, q })
}

/// Runs into a snapshot file and returns the summary. The mesh export goes
/// to `mesh_out` when given.
pub fn run_to_file(
    config: &RunConfig,
    path: &Path,
    mesh_out: Option<&Path>,
) -> std::result::Result<RunSummary, CommandError> {
    let p = Pipeline::build(config).map_err(CommandError::Pipeline)?;
    if let Some(m) = mesh_out {
        std::fs::write(m, p.mesh.to_text())?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let s = run_pipeline(&p, &mut w)?;
    w.flush()?;
    Ok(s)
}

pub fn summary_text(s: &RunSummary, path: &Path) -> String {
    let f = &s.run.final_state;
    format!(
        "method {}\niterations {}\nconverged {}\nfinal energy {:.12}\ntension norm {:.3e}\nalpha {:.6e}\nbeta {:.6e}\nq {:.12}\nrecords {} -> {}\n",
        f.method,
        f.iteration,
        s.run.converged,
        f.energy,
        f.tension_norm,
        s.run.alpha,
        s.run.beta,
        s.q,
        s.records,
        path.display()
    )
}

pub fn cmd_run(args: &ConfigArgs, out: &mut impl Write) -> CommandResult {
    let config = resolve(args)?;
    let path = config.output.clone().unwrap_or_else(|| crate::args::DEFAULT_OUTPUT.into());
    let s = run_to_file(&config, &path, args.mesh_out.as_deref())?;
    write!(out, "{}", summary_text(&s, &path))?;
    if !s.run.converged {
        let e = Error::FlowNotConverged { iterations: s.run.iterations(), tension: s.run.final_state.tension_norm };
        return Err(CommandError::Pipeline(e));
    }
    Ok(())
}

pub fn cmd_verify(suite: &str, seed: u64, out: &mut impl Write) -> CommandResult {
    let ids = select(suite).ok_or_else(|| {
        CommandError::Usage(format!(
            "unknown suite `{suite}` (all, geometry, {})",
            hypmap_verify::suites::CriterionId::ALL.map(|c| c.name()).join(", ")
        ))
    })?;
    let mut failed = 0;
    for id in &ids {
        let c = id.run(seed);
        writeln!(out, "{}", c.line())?;
        out.flush()?;
        failed += usize::from(!c.passed);
    }
    writeln!(out, "verify: {} passed, {} failed", ids.len() - failed, failed)?;
    if failed > 0 {
        return Err(CommandError::Failed(format!("{failed} suite(s) failed")));
    }
    Ok(())
}

pub fn cmd_sweep(args: &ConfigArgs, ells: &[f64], stepsizes: &str, out: &mut impl Write) -> CommandResult {
    let factors = crate::args::parse_stepsizes(stepsizes).map_err(CommandError::Usage)?;
    if ells.is_empty() {
        return Err(CommandError::Usage("empty target family".into()));
    }
    let config = resolve(args)?;
    let r = stepsize_sweep(&config, ells, &factors).map_err(CommandError::Pipeline)?;
    write!(out, "{}", r.table().render())?;
    let mut fits = hypmap_verify::Table::new(&["ell", "max_stepsize", "c1", "c2", "r_squared", "monotone"]);
    for (f, tmax) in r.fits.iter().zip(&r.max_stepsize) {
        fits.push(vec![
            format!("{}", f.ell),
            format!("{tmax:.6e}"),
            format!("{:.6e}", f.c1),
            format!("{:.6e}", f.c2),
            format!("{:.6}", f.r_squared),
            f.monotone.to_string(),
        ]);
    }
    write!(out, "\n{}", fits.render())?;
    Ok(())
}

pub fn cmd_compare(args: &ConfigArgs, ells: &[f64], methods: &[Method], out: &mut impl Write) -> CommandResult {
    if ells.is_empty() || methods.is_empty() {
        return Err(CommandError::Usage("empty target family or method list".into()));
    }
    let config = resolve(args)?;
    let r = method_comparison(&config, ells, methods).map_err(CommandError::Pipeline)?;
    write!(out, "{}", r.table().render())?;
    let mut spread = hypmap_verify::Table::new(&["ell", "max_pairwise_distance"]);
    for (ell, d) in ells.iter().zip(&r.max_pairwise_distance) {
        spread.push(vec![format!("{ell}"), format!("{d:.3e}")]);
    }
    write!(out, "\n{}", spread.render())?;
    Ok(())
}
