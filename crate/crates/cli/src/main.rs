//! `attn-dyn`: run experiment stages from a JSON config.

use std::path::PathBuf;
use std::process::ExitCode;

use attn_dyn::experiments::{parse_seeds, ExperimentReport, ExperimentSpec, ExperimentTag, Pipeline, StageOutcome};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "attn-dyn",
    version,
    about = "Single-layer attention models of dynamical systems"
)]
struct Cli {
    #[command(subcommand)]
    stage: Stage,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Experiment config (JSON with a "tag" field), or a bare experiment tag for its defaults.
    #[arg(long)]
    spec: String,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed list, `a..b` inclusive or comma-separated.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads for per-seed jobs.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Stage {
    /// Simulate and write the observed datasets.
    Generate(Common),
    /// Train every variant for every seed.
    Train(Common),
    /// Measure every trained model.
    Analyze(Common),
    /// Aggregate analyses; exits with 2 when an acceptance verdict fails.
    Report(Common),
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load_spec(c: &Common) -> attn_dyn::Result<(ExperimentSpec, PathBuf)> {
    let path = PathBuf::from(&c.spec);
    let mut spec = if path.exists() {
        ExperimentSpec::from_json(&std::fs::read_to_string(&path)?)?
    } else if let Ok(tag) = c.spec.parse::<ExperimentTag>() {
        ExperimentSpec::default_for(tag)
    } else {
        return Err(attn_dyn::Error::MissingArtifact(c.spec.clone()));
    };
    if let Some(s) = &c.seeds {
        spec.seeds = parse_seeds(s)?;
    }
    let out = c
        .out
        .clone()
        .or_else(|| spec.output_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| attn_dyn::Error::InvalidArgument("no output directory (--out or output_dir)".into()))?;
    spec.output_dir = Some(out.display().to_string());
    spec.validate()?;
    Ok((spec, out))
}

fn print_outcome(stage: &str, o: StageOutcome) {
    println!("{stage}: {} job(s) run, {} up to date", o.ran, o.skipped);
}

fn print_report(r: &ExperimentReport) {
    println!("report: {}", r.tag);
    for v in &r.variants {
        if let Some(d) = &v.test_mse {
            println!(
                "  {:<22} test MSE median {:.3e} [{:.3e}, {:.3e}]",
                v.name, d.median, d.min, d.max
            );
        } else if let Some(d) = &v.val_mse {
            println!(
                "  {:<22} val MSE median {:.3e} [{:.3e}, {:.3e}]",
                v.name, d.median, d.min, d.max
            );
        }
    }
    for v in &r.verdicts {
        println!("  {} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
}

fn run(cli: Cli) -> attn_dyn::Result<bool> {
    let (name, common) = match &cli.stage {
        Stage::Generate(c) => ("generate", c),
        Stage::Train(c) => ("train", c),
        Stage::Analyze(c) => ("analyze", c),
        Stage::Report(c) => ("report", c),
    };
    let (spec, out) = load_spec(common)?;
    let p = Pipeline::new(spec, out, common.jobs)?;
    match name {
        "generate" => print_outcome(name, p.generate()?),
        "train" => print_outcome(name, p.train()?),
        "analyze" => print_outcome(name, p.analyze()?),
        _ => {
            let r = p.report()?;
            print_report(&r);
            return Ok(r.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    // Usage errors exit with 1; 2 is reserved for failed acceptance verdicts.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
