mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::{BoundsConfig, ClockJob, CurveConfig, FileConfig, FreqJob, OptimizeJob, OqiConfig, SelftestConfig};
use output::{OutputDir, RunManifest, MANIFEST_FILE};

#[derive(Parser, Debug)]
#[command(name = "varsense", version, about = "Variational Ramsey interferometry: costs, bounds, optimization and virtual experiments")]
struct Cli {
    /// TOML file with one table per command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "VARSENSE_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Shots per scan node (optimize) or per sample (freq-exp).
    #[arg(long, global = true)]
    shots: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Δφ/δφ against prior width for optimized circuits, with bounds.
    Curve,
    /// Search circuit angles with DIRECT against the simulator or virtual lab.
    Optimize,
    /// SQL, Heisenberg and phase-slip limits.
    Bounds,
    /// Optimal quantum interferometer along a width grid.
    Oqi,
    /// Normalized Allan deviation and gains over the classical sequence.
    Clock,
    /// Frequency reconstruction with injected detunings.
    FreqExp,
    /// Quick consistency checks.
    Selftest,
    /// Re-run the command recorded in a manifest and compare output digests.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
enum Job {
    Curve(CurveConfig),
    Optimize(OptimizeJob),
    Bounds(BoundsConfig),
    Oqi(OqiConfig),
    Clock(ClockJob),
    FreqExp(FreqJob),
    Selftest(SelftestConfig),
}

impl Job {
    fn resolve(command: &Command, file: FileConfig, seed: Option<u64>, shots: Option<usize>) -> Result<Self> {
        let mut job = match command {
            Command::Curve => Job::Curve(file.curve.unwrap_or_default()),
            Command::Optimize => Job::Optimize(file.optimize.unwrap_or_default()),
            Command::Bounds => Job::Bounds(file.bounds.unwrap_or_default()),
            Command::Oqi => Job::Oqi(file.oqi.unwrap_or_default()),
            Command::Clock => Job::Clock(file.clock.unwrap_or_default()),
            Command::FreqExp => Job::FreqExp(file.freq_exp.unwrap_or_default()),
            Command::Selftest => Job::Selftest(file.selftest.unwrap_or_default()),
            Command::Replay { .. } => unreachable!("replay carries its own job"),
        };
        if let Some(s) = seed {
            match &mut job {
                Job::Curve(c) => c.seed = s,
                Job::Optimize(c) => c.seed = s,
                Job::Oqi(c) => c.seed = s,
                Job::Clock(c) => c.seed = s,
                Job::FreqExp(c) => c.experiment.seed = s,
                Job::Selftest(c) => c.seed = s,
                Job::Bounds(_) => bail!("--seed does not apply to bounds"),
            }
        }
        if let Some(n) = shots {
            match &mut job {
                Job::Optimize(c) => c.scan.shots_per_node = n,
                Job::FreqExp(c) => c.experiment.shots_per_sample = n,
                _ => bail!("--shots applies to optimize and freq-exp only"),
            }
        }
        Ok(job)
    }

    fn name(&self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v["command"].as_str().map(str::to_string)).unwrap_or_default()
    }

    fn seed(&self) -> u64 {
        match self {
            Job::Curve(c) => c.seed,
            Job::Optimize(c) => c.seed,
            Job::Oqi(c) => c.seed,
            Job::Clock(c) => c.seed,
            Job::FreqExp(c) => c.experiment.seed,
            Job::Selftest(c) => c.seed,
            Job::Bounds(_) => 0,
        }
    }

    /// Runs the job into `dir` and writes its manifest.
    fn execute(&self, dir: &Path, threads: Option<usize>) -> Result<RunManifest> {
        let started_at = chrono::Utc::now().to_rfc3339();
        let mut out = OutputDir::create(dir)?;
        let mut passed = true;
        match self {
            Job::Curve(c) => commands::curve(c, &mut out)?,
            Job::Optimize(c) => commands::optimize_cmd(c, &mut out)?,
            Job::Bounds(c) => commands::bounds(c, &mut out)?,
            Job::Oqi(c) => commands::oqi(c, &mut out)?,
            Job::Clock(c) => commands::clock(c, &mut out)?,
            Job::FreqExp(c) => commands::freq_exp(c, &mut out)?,
            Job::Selftest(c) => passed = commands::selftest(c, &mut out)?,
        }
        let value = serde_json::to_value(self)?;
        let manifest = RunManifest {
            command: self.name(),
            config: value["config"].clone(),
            seed: self.seed(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            outputs: out.records()?,
        };
        manifest.save(out.root())?;
        if !passed {
            bail!("selftest failed; see {}", out.root().join("selftest.csv").display());
        }
        Ok(manifest)
    }

    fn from_manifest(m: &RunManifest) -> Result<Self> {
        let v = serde_json::json!({ "command": m.command, "config": m.config });
        serde_json::from_value(v).with_context(|| format!("manifest holds an invalid {} configuration", m.command))
    }
}

fn replay(path: &Path, out: Option<PathBuf>, threads: Option<usize>) -> Result<()> {
    let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let recorded = RunManifest::load(&path)?;
    let job = Job::from_manifest(&recorded)?;
    let dir = out.unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("replay"));
    let fresh = job.execute(&dir, threads)?;
    let mut mismatches = 0;
    for r in &recorded.outputs {
        let now = fresh.outputs.iter().find(|o| o.file == r.file);
        let same = now.is_some_and(|o| o.sha256 == r.sha256);
        println!("{} {}", if same { "match" } else { "MISMATCH" }, r.file);
        mismatches += usize::from(!same);
    }
    if mismatches > 0 {
        bail!("{mismatches} output(s) differ from the manifest");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, cli.out, cli.threads);
    }
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let job = Job::resolve(&cli.command, file, cli.seed, cli.shots)?;
    let dir = cli.out.unwrap_or_else(|| PathBuf::from("varsense-out"));
    let m = job.execute(&dir, cli.threads)?;
    for o in &m.outputs {
        println!("wrote {}", dir.join(&o.file).display());
    }
    Ok(())
}
