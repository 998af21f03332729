//! `mags`: run synthetic multi-agent scenarios, replay message streams,
//! inspect pose graphs and evaluate trajectories.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use mags_core::coordinator::{
    ate_rmse, run_scenario, run_stream, write_artifacts, Alignment, ArtifactOptions, RunConfig,
    RunOutput,
};
use mags_core::posegraph::{EdgeKind, GraphExport};
use mags_core::simworld::{generate_scenario, parse_tum, GroundTruth, ScenarioConfig};

const LOG_ENV: &str = "MAGS_LOG_LEVEL";
const LOG_LEVELS: [&str; 4] = ["error", "warn", "info", "debug"];

#[derive(Parser)]
#[command(name = "mags", version, about = "Multi-agent Sim(3) submap alignment and map fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario, run it and write all artifacts.
    Run {
        /// Scenario file of `key=value` lines.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Abort on the first malformed message.
        #[arg(long)]
        strict: bool,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize an exported graph.
    Inspect {
        #[arg(long)]
        graph: PathBuf,
    },
    /// ATE RMSE between two TUM trajectories, in centimeters.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value = "sim3")]
        mode: Alignment,
    },
    /// Re-run a serialized message stream.
    Replay {
        #[arg(long)]
        stream: PathBuf,
        /// Ground truth JSON; defaults to `ground_truth.json` beside the stream.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Output directory; defaults to `replay` beside the stream.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

fn init_logging() -> Result<()> {
    let level = std::env::var(LOG_ENV).unwrap_or_else(|_| "warn".into());
    let level = level.trim().to_ascii_lowercase();
    if !LOG_LEVELS.contains(&level.as_str()) {
        bail!("{LOG_ENV}={level} is not one of {}", LOG_LEVELS.join(", "));
    }
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();
    Ok(())
}

fn print_summary(out: &RunOutput) {
    let r = &out.report;
    println!(
        "messages: {} summaries, {} pgba reports, {} map data, {} skipped",
        r.messages.summary, r.messages.pgba_report, r.messages.map_data, r.messages.skipped
    );
    println!(
        "graph: {} nodes, {} temporal edges, {} verified edges, {} invalid, cost {:.4e}",
        r.graph.nodes,
        r.graph.temporal_edges,
        r.graph.verified_edges,
        r.graph.invalid_edges,
        r.graph.total_cost + 0.0
    );
    let opt = |v: Option<f64>, digits: usize| match v {
        Some(v) => format!("{v:.digits$}"),
        None => "-".into(),
    };
    for a in &r.agents {
        println!(
            "agent {}: {} submaps, ATE sim3 {} cm, relative scale {} (injected {})",
            a.agent,
            a.submaps,
            opt(a.ate_sim3_cm, 3),
            opt(a.relative_scale, 4),
            opt(a.injected_relative_scale, 4)
        );
    }
    if let Some(g) = &r.fusion.global {
        println!(
            "global map: {} gaussians, {} borrowed retained, duplicate fraction {:.4}, coverage {}",
            g.gaussians,
            g.retained_borrowed,
            g.duplicate_fraction,
            opt(g.coverage, 4)
        );
    }
}

fn run(scenario: &Path, out: &Path, strict: bool, threads: usize, seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(scenario)
        .with_context(|| format!("reading scenario {}", scenario.display()))?;
    let mut config = ScenarioConfig::parse(&text)
        .with_context(|| format!("parsing scenario {}", scenario.display()))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let start = Instant::now();
    let sc = generate_scenario(&config);
    info!("generated scenario in {:.2?}", start.elapsed());
    let run_config = RunConfig {
        strict,
        threads,
        ..Default::default()
    };
    let (output, stream) = run_scenario(&sc, &run_config)?;
    info!("run finished in {:.2?}", start.elapsed());
    let files = write_artifacts(
        out,
        &output,
        ArtifactOptions {
            truth: Some(&sc.ground_truth),
            stream: Some(&stream),
        },
    )?;
    print_summary(&output);
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let g: GraphExport = serde_json::from_str(&text).context("parsing graph JSON")?;
    let gauge = g.nodes.iter().find(|n| n.gauge);
    println!("nodes: {}", g.nodes.len());
    match gauge {
        Some(n) => println!("gauge: {}:{}", n.agent, n.index),
        None => println!("gauge: none"),
    }
    let mut agents: Vec<u32> = g.nodes.iter().map(|n| n.agent).collect();
    agents.dedup();
    for a in agents {
        let scales: Vec<f64> = g
            .nodes
            .iter()
            .filter(|n| n.agent == a)
            .map(|n| n.correction[0])
            .collect();
        let mean = scales.iter().map(|s| s.ln()).sum::<f64>() / scales.len() as f64;
        println!(
            "agent {a}: {} nodes, geometric-mean correction scale {:.5}",
            scales.len(),
            mean.exp()
        );
    }
    for kind in [EdgeKind::Temporal, EdgeKind::Verified] {
        let edges: Vec<_> = g.edges.iter().filter(|e| e.kind == kind).collect();
        let valid = edges.iter().filter(|e| e.valid).count();
        let worst = edges
            .iter()
            .filter(|e| e.valid)
            .map(|e| e.residual_norm)
            .fold(0.0, f64::max);
        println!(
            "{kind:?} edges: {} ({} valid), max residual norm {:.3e}",
            edges.len(),
            valid,
            worst
        );
    }
    println!("total cost: {:.6e}", g.total_cost);
    Ok(())
}

fn eval(est: &Path, gt: &Path, mode: Alignment) -> Result<()> {
    let read = |p: &Path| -> Result<_> {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        parse_tum(&text).with_context(|| format!("parsing {}", p.display()))
    };
    let ate = ate_rmse(&read(est)?, &read(gt)?, mode)?;
    println!("ATE RMSE ({mode}): {ate:.4} cm");
    Ok(())
}

fn replay(
    stream: &Path,
    gt: Option<PathBuf>,
    out: Option<PathBuf>,
    strict: bool,
    threads: usize,
) -> Result<()> {
    let bytes = fs::read(stream).with_context(|| format!("reading {}", stream.display()))?;
    let dir = stream.parent().unwrap_or(Path::new("."));
    let gt_path = gt.or_else(|| {
        let p = dir.join("ground_truth.json");
        p.exists().then_some(p)
    });
    let truth: Option<GroundTruth> = match gt_path {
        Some(p) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            Some(serde_json::from_str(&text).context("parsing ground truth")?)
        }
        None => None,
    };
    let config = RunConfig {
        strict,
        threads,
        ..Default::default()
    };
    let output = run_stream(&bytes, &config, truth.as_ref())?;
    let out = out.unwrap_or_else(|| dir.join("replay"));
    let files = write_artifacts(&out, &output, ArtifactOptions::default())?;
    print_summary(&output);
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    init_logging()?;
    match Cli::parse().command {
        Command::Run {
            scenario,
            out,
            strict,
            threads,
            seed,
        } => run(&scenario, &out, strict, threads, seed),
        Command::Inspect { graph } => inspect(&graph),
        Command::Eval { est, gt, mode } => eval(&est, &gt, mode),
        Command::Replay {
            stream,
            gt,
            out,
            strict,
            threads,
        } => replay(&stream, gt, out, strict, threads),
    }
}
