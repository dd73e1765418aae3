//! Command-line grammar and the merge of flags over a config file.

use clap::{Args, Parser, Subcommand};
use hypmap_core::error::Result;
use hypmap_core::flow::Method;
use hypmap_core::pipeline::RunConfig;
use hypmap_core::surface::FnCoordinates;
use std::path::PathBuf;

pub const DEFAULT_PORT: u16 = 8750;
pub const DEFAULT_OUTPUT: &str = "snapshots.jsonl";

#[derive(Debug, Parser)]
#[command(name = "hypmap", version, about = "Discrete equivariant harmonic maps between hyperbolic surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the pipeline, run the flow and write a snapshot file.
    Run(ConfigArgs),
    /// Run acceptance suites: all, geometry, or a single suite name.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fixed-step iteration counts over a stepsize list for a family of targets.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Third target length of each family member.
        #[arg(long, value_delimiter = ',', default_values_t = hypmap_verify::FAMILY_ELLS)]
        ells: Vec<f64>,
        /// Relative stepsizes; the largest is mapped to 1/β.
        #[arg(long, default_value = "0.01,0.02,0.03,0.04,0.05")]
        stepsizes: String,
    },
    /// Iteration counts of each method for a family of targets.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = hypmap_verify::FAMILY_ELLS)]
        ells: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "fixed,optimal,karcher-com,cosh-com")]
        methods: Vec<Method>,
    },
    /// Serve the live flow over HTTP.
    Serve(ConfigArgs),
}

/// Run-configuration flags. Each one given overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run-configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub genus: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub domain_lengths: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub domain_twists: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub target_lengths: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub target_twists: Option<Vec<f64>>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Steiner points per polygon side.
    #[arg(long)]
    pub steiner: Option<usize>,
    #[arg(long)]
    pub method: Option<Method>,
    /// Fixed stepsize (default 1/β).
    #[arg(long)]
    pub stepsize: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Record every n-th iteration.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accept non-positive edge weights.
    #[arg(long)]
    pub force: bool,
    /// Also write the mesh in its text export format (run only).
    #[arg(long)]
    pub mesh_out: Option<PathBuf>,
}

impl ConfigArgs {
    /// The config file (or the reference configuration) with flags applied,
    /// validated.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::reference(),
        };
        if let Some(g) = self.genus {
            c.genus = g;
        }
        overlay(&mut c.domain, &self.domain_lengths, &self.domain_twists);
        overlay(&mut c.target, &self.target_lengths, &self.target_twists);
        if let Some(d) = self.depth {
            c.depth = d;
        }
        if let Some(s) = self.steiner {
            c.steiner_per_side = s;
        }
        if let Some(m) = self.method {
            c.method = m;
        }
        if self.stepsize.is_some() {
            c.stepsize = self.stepsize;
        }
        if let Some(t) = self.tol {
            c.tolerance = t;
        }
        if let Some(n) = self.max_iter {
            c.max_iterations = n;
        }
        if let Some(s) = self.stride {
            c.stride = s;
        }
        if self.out.is_some() {
            c.output = self.out.clone();
        }
        if self.port.is_some() {
            c.port = self.port;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.force |= self.force;
        c.validate()?;
        Ok(c)
    }
}

fn overlay(fn_coords: &mut FnCoordinates, lengths: &Option<Vec<f64>>, twists: &Option<Vec<f64>>) {
    if let Some(l) = lengths {
        fn_coords.lengths = l.clone();
    }
    if let Some(t) = twists {
        fn_coords.twists = t.clone();
    }
}

/// Parses a comma-separated stepsize list; empty lists are rejected.
pub fn parse_stepsizes(s: &str) -> std::result::Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<f64>().map_err(|e| format!("bad stepsize `{x}`: {e}")))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    if v.is_empty() {
        return Err("empty stepsize list".into());
    }
    if let Some(bad) = v.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(format!("stepsize {bad} is not positive"));
    }
    Ok(v)
}
