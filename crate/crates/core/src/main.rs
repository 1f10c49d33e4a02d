use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use formation_cp::harness::{
    report, run_calibration_campaign, run_evaluation, run_pipeline, summarize, CalibrationArtifacts,
    EvaluationRun, ExperimentConfig, Method,
};
use formation_cp::oracle::{run_qp_oracle, run_quantile_oracle};
use formation_cp::{Error, Result};

#[derive(Parser)]
#[command(name = "formation-cp", version, about = "Risk-aware conformal safety filtering for leader-follower formations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate calibration runs and write the quantile table and baselines.
    Calibrate(Common),
    /// Evaluate methods against a calibration and write per-trial outcomes.
    Run(Common),
    /// Summarize outcome files into per-method summaries.
    Evaluate(Common),
    /// Render summaries into tables, time series and metadata.
    Report(Common),
    /// Calibrate, run, evaluate and report in one go.
    Pipeline(Common),
    /// Run the brute-force QP and quantile reference checks.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Method name, or `all`.
    #[arg(long)]
    method: Option<String>,
    /// Trial count: calibration runs for `calibrate`, trials per method for
    /// `run` and `pipeline`, QP instances for `oracle`.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Directory holding the calibration artifacts; defaults to `--out`.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(m) = &self.method {
            if m != "all" {
                cfg.run.method = m.parse()?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn methods(&self, cfg: &ExperimentConfig) -> Result<Vec<Method>> {
        match self.method.as_deref() {
            None => Ok(vec![cfg.run.method]),
            Some("all") => Ok(Method::ALL.to_vec()),
            Some(m) => Ok(vec![m.parse()?]),
        }
    }

    fn methods_or_all(&self) -> Result<Vec<Method>> {
        match self.method.as_deref() {
            None | Some("all") => Ok(Method::ALL.to_vec()),
            Some(m) => Ok(vec![m.parse()?]),
        }
    }

    fn calibration_dir(&self) -> &Path {
        self.calibration.as_deref().unwrap_or(&self.out)
    }
}

fn calibrate(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    let n = args.trials.unwrap_or(cfg.run.calibration_runs);
    let cal = run_calibration_campaign(&cfg, n, args.threads)?;
    cal.save(&args.out)?;
    for w in &cal.table.warnings {
        eprintln!("warning: {w}");
    }
    println!("config_hash {}", cal.table.config_hash);
    for (g, (q, c)) in cal.table.quantiles.iter().zip(&cal.table.counts).enumerate() {
        println!("B{} n={c} q={q}", g + 1);
    }
    println!("global_low {} global_high {}", cal.baselines.global_low, cal.baselines.global_high);
    Ok(())
}

fn run(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    let (table, baselines) = CalibrationArtifacts::load(args.calibration_dir())?;
    let n = args.trials.unwrap_or(cfg.run.trials);
    for method in args.methods(&cfg)? {
        let run = run_evaluation(&cfg, &table, &baselines, method, n, args.threads)?;
        run.save(&args.out)?;
        let ok = run.outcomes.iter().filter(|o| o.success).count();
        println!("{method}: {ok}/{} successful", run.outcomes.len());
    }
    Ok(())
}

fn evaluate(args: &Common) -> Result<()> {
    let mut found = false;
    for method in args.methods_or_all()? {
        let path = args.out.join(EvaluationRun::file_name(method));
        if !path.exists() {
            continue;
        }
        found = true;
        let summary = summarize(&EvaluationRun::load(&path)?);
        report::save_summary(&summary, &args.out)?;
        println!(
            "{method}: success {:.3} [{:.3}, {:.3}] over {} trials",
            summary.success_rate, summary.wilson_low, summary.wilson_high, summary.trials
        );
    }
    if !found {
        return Err(Error::Config(format!("no outcome files in {}", args.out.display())));
    }
    Ok(())
}

fn render(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    let hash = cfg.hash();
    let mut summaries = Vec::new();
    for method in args.methods_or_all()? {
        let path = args.out.join(report::summary_file_name(method));
        if !path.exists() {
            continue;
        }
        let s = report::load_summary(&path)?;
        if s.config_hash != hash {
            return Err(Error::HashMismatch {
                expected: s.config_hash,
                found: hash,
            });
        }
        summaries.push(s);
    }
    report::write_report(&summaries, &cfg, &args.out)?;
    print!("{}", report::summary_table(&summaries));
    Ok(())
}

fn pipeline(args: &Common) -> Result<()> {
    let mut cfg = args.config()?;
    if let Some(n) = args.trials {
        cfg.run.trials = n;
    }
    let summaries = run_pipeline(&cfg, &args.out, args.threads)?;
    print!("{}", report::summary_table(&summaries));
    Ok(())
}

/// Returns whether every check passed.
fn oracle(args: &Common) -> Result<bool> {
    let seed = args.seed.unwrap_or(0);
    let qp = run_qp_oracle(args.trials.unwrap_or(1000), seed);
    let quantile = run_quantile_oracle(10_000, seed.wrapping_add(1));
    let json = serde_json::json!({ "qp": qp, "quantile": quantile });
    let text = serde_json::to_string_pretty(&json).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.display().to_string(),
        source: e,
    })?;
    let path = args.out.join("oracle.json");
    std::fs::write(&path, format!("{text}\n")).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    println!("{text}");
    Ok(qp.passes() && quantile.passes())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } => 2,
        Error::EmptyGroup { .. } | Error::EmptyScores => 3,
        Error::HashMismatch { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Run(a) => run(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => render(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Oracle(a) => match oracle(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: oracle disagreement");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
