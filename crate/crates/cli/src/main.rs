//! `hda`: generate synthetic descent imagery, run hazard detection on it,
//! sweep the observability Monte Carlo and profile stage timings.
//!
//! Exit codes: 0 on success (for `run`, at least one safe site), 2 when
//! `run` finds no safe site, 1 on any error.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hda_core::experiment::{self, parse_json, Experiment, ExperimentSpec};
use hda_core::montecarlo::{sweep, McConfig};
use hda_core::pipeline::HdaStatus;

#[derive(Parser)]
#[command(name = "hda", version, about = "Hazard detection and avoidance from two descent images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON spec file; built-in defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory (overrides the spec).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the spec).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render an image pair with navigation records and ground truth.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Run hazard detection on an image pair.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write quadtree, per-ROI and point-cloud dumps.
        #[arg(long)]
        debug_dumps: bool,
    },
    /// Slope error versus baseline and pixel noise.
    Mc {
        #[command(flatten)]
        common: Common,
    },
    /// Per-stage timing over repeated runs.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Repetitions per pair (overrides the spec).
        #[arg(long)]
        reps: Option<usize>,
    },
}

fn load_experiment(c: &Common) -> Result<(Experiment, PathBuf)> {
    let exp = match &c.spec {
        Some(p) => Experiment::load(p)?,
        None => Experiment::from_spec(ExperimentSpec::default(), Path::new("."))?,
    };
    let exp = match c.seed {
        Some(s) => exp.with_seed(s),
        None => exp,
    };
    let out = exp.output_dir(c.out.as_deref());
    Ok((exp, out))
}

fn generate(c: &Common) -> Result<ExitCode> {
    let (exp, out) = load_experiment(c)?;
    let pair = experiment::generate(&exp, &out)?;
    let baseline = (pair.nav[1].pose.position - pair.nav[0].pose.position).norm();
    println!(
        "wrote {}x{} pair to {} (baseline {:.2} m, dt {:.2} s)",
        pair.image1.width(),
        pair.image1.height(),
        out.display(),
        baseline,
        pair.nav[1].time - pair.nav[0].time
    );
    Ok(ExitCode::SUCCESS)
}

fn run(c: &Common, debug_dumps: bool) -> Result<ExitCode> {
    let (exp, out) = load_experiment(c)?;
    let r = experiment::run(&exp, &out, debug_dumps)?;
    println!(
        "status {}: {} ROIs processed, {} skipped, {:.3} s",
        r.status.name(),
        r.rois_processed,
        r.rois_skipped,
        r.timing.total_s
    );
    if let Some(best) = r.best() {
        println!(
            "best site: roi {} slope {:.2} deg roughness {:.3} m area {:.1} m2 ({} points)",
            best.roi, best.slope_deg, best.roughness_m, best.area_m2, best.n_points
        );
    }
    match &r.status {
        HdaStatus::Failed(reason) => {
            eprintln!("hda run failed: {reason}");
            Ok(ExitCode::from(1))
        }
        _ if r.best().is_some() => Ok(ExitCode::SUCCESS),
        _ => {
            eprintln!("no safe landing site found");
            Ok(ExitCode::from(2))
        }
    }
}

fn mc(c: &Common) -> Result<ExitCode> {
    let mut cfg: McConfig = match &c.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_json(&text, &p.display().to_string())?
        }
        None => McConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let result = sweep(&cfg).map_err(anyhow::Error::msg).context("invalid Monte Carlo config")?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("mc.csv");
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    result.write_csv(BufWriter::new(f))?;
    println!("wrote {} cells to {}", result.cells.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn profile(c: &Common, reps: Option<usize>) -> Result<ExitCode> {
    let (exp, out) = load_experiment(c)?;
    let rows = experiment::profile(&exp, &out, reps)?;
    for r in &rows {
        let q = hda_core::pipeline::summarize(&r.quadtree_s);
        let s = hda_core::pipeline::summarize(&r.sfm_s);
        println!("{}: quadtree median {:.3} s, sfm median {:.3} s", r.pair, q.1, s.1);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Generate { common } => generate(common),
        Command::Run { common, debug_dumps } => run(common, *debug_dumps),
        Command::Mc { common } => mc(common),
        Command::Profile { common, reps } => profile(common, *reps),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
