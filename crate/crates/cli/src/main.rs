//! Command-line front end: synthetic data generation, staged scoring and
//! calibration with resumable intermediates, and full pipeline runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fusecal_core::calibration::{
    apply_calibrator, fit_calibrator, CalibrationMethod, Calibrator,
};
use fusecal_core::data::{build_pair_labels, ScoreMatrix};
use fusecal_core::error::{Error, Result};
use fusecal_core::fusion::{default_config, fuse, FusionInput};
use fusecal_core::io::{
    build_report, emit_report, generate_synthetic, load_config, read_score_file,
    write_score_file, BudgetPoint, ConfigOverrides, SynthParams,
};
use fusecal_core::pipeline::{
    run_pipeline, MuPolicy, PipelineInputs, PipelineOptions, PipelineOutcome,
};
use fusecal_core::retrieval::{
    rank_top1, shortlist_rerank, subsample_calibration_set, tune_mu, Budget, MuTuneOutcome,
};
use fusecal_core::seeds::derive_seed;
use fusecal_core::similarity::{global_score_matrix, local_score_matrix, MatchThreshold};

#[derive(Parser)]
#[command(
    name = "fusecal",
    version,
    about = "Calibrated similarity-score fusion for identity retrieval"
)]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "FUSECAL_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Pipeline config file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for artifacts (intermediates, calibrators, reports).
    #[arg(long)]
    out: PathBuf,
    /// Root seed override; replaces the config's split seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed local-match threshold override.
    #[arg(long)]
    mu: Option<f64>,
    /// Shortlist budget override (expensive evaluations per query).
    #[arg(long)]
    budget: Option<usize>,
    /// Calibration method override: isotonic | platt.
    #[arg(long, value_parser = parse_method)]
    calibration: Option<CalibrationMethod>,
    /// Directory of pre-fitted calibrators; enables zero-shot mode.
    #[arg(long = "zero-shot")]
    zero_shot: Option<PathBuf>,
}

fn parse_method(s: &str) -> std::result::Result<CalibrationMethod, String> {
    CalibrationMethod::parse(s).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset plus a ready-to-run config.
    Synth {
        /// Output directory for the dataset files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        identities: usize,
        /// Items per identity, split between database and query sets.
        #[arg(long, default_value_t = 8)]
        items: usize,
        #[arg(long, default_value_t = 16)]
        dims: usize,
        /// Embedding noise level.
        #[arg(long, default_value_t = 0.25)]
        sigma: f64,
        /// Width of the gap between match-confidence bands.
        #[arg(long, default_value_t = 0.3)]
        delta: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run the full pipeline and write calibrators plus a report.
    Run(CommonArgs),
    /// Compute raw global score matrices.
    ScoreGlobal(CommonArgs),
    /// Compute raw local score matrices at the resolved threshold.
    ScoreLocal(CommonArgs),
    /// Grid-search the local-match threshold on the validation split.
    TuneMu(CommonArgs),
    /// Fit calibrators on validation pairs and persist them.
    Calibrate(CommonArgs),
    /// Produce the fused score matrix.
    Fuse(CommonArgs),
    /// Evaluate test-split accuracy and write the report.
    Evaluate(CommonArgs),
    /// Budgeted shortlist re-ranking with a budget sweep report.
    Shortlist(CommonArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        // Ignore re-initialization; the pool can only be set once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            identities,
            items,
            dims,
            sigma,
            delta,
            seed,
        } => {
            let params = SynthParams {
                n_identities: identities,
                items_per_identity: items,
                dims,
                noise_sigma: sigma,
                separation_delta: delta,
                seed,
            };
            let paths = generate_synthetic(&params, &out)?;
            println!("wrote dataset and config to {}", out.display());
            let _ = paths;
            Ok(())
        }
        Command::Run(args) => cmd_run(&args),
        Command::ScoreGlobal(args) => cmd_score_global(&args),
        Command::ScoreLocal(args) => cmd_score_local(&args),
        Command::TuneMu(args) => cmd_tune_mu(&args),
        Command::Calibrate(args) => cmd_calibrate(&args),
        Command::Fuse(args) => cmd_fuse(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Shortlist(args) => cmd_shortlist(&args),
    }
}

/// Assembled pipeline state shared by the stage commands.
struct Stage {
    inputs: PipelineInputs,
    options: PipelineOptions,
    out: PathBuf,
}

fn assemble(args: &CommonArgs) -> Result<Stage> {
    let (config, base) = load_config(&args.config)?;
    let overrides = ConfigOverrides {
        seed: args.seed,
        mu: args.mu,
        budget: args.budget,
        calibration: args.calibration,
        zero_shot_dir: args.zero_shot.clone(),
    };
    let (inputs, options) = config.assemble(&base, &overrides)?;
    std::fs::create_dir_all(&args.out)?;
    Ok(Stage {
        inputs,
        options,
        out: args.out.clone(),
    })
}

fn raw_global_path(out: &Path, name: &str) -> PathBuf {
    out.join(format!("raw_global_{name}.fscm"))
}

fn raw_local_path(out: &Path, name: &str, mu: f64) -> PathBuf {
    let tag = format!("{mu:.4}").replace('.', "_");
    out.join(format!("raw_local_{name}_mu{tag}.fscm"))
}

fn calibrator_path(out: &Path, name: &str) -> PathBuf {
    out.join("calibrators").join(format!("{name}.calib.json"))
}

fn mu_file_path(out: &Path) -> PathBuf {
    out.join("mu.json")
}

fn read_mu_file(out: &Path) -> Result<BTreeMap<String, MuTuneOutcome>> {
    let path = mu_file_path(out);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "mu",
        message: e.to_string(),
    })
}

fn write_mu_file(out: &Path, map: &BTreeMap<String, MuTuneOutcome>) -> Result<()> {
    let text = serde_json::to_string_pretty(map).map_err(|e| Error::Format {
        what: "mu",
        message: e.to_string(),
    })?;
    std::fs::write(mu_file_path(out), text + "\n")?;
    Ok(())
}

/// Validation items used for fitting, honoring the subsample setting.
fn calibration_items(stage: &Stage) -> Result<Vec<usize>> {
    match stage.options.subsample_items {
        Some(n) => subsample_calibration_set(
            &stage.inputs.query_catalog,
            &stage.inputs.db_catalog,
            stage.inputs.split.validation(),
            n,
            derive_seed(stage.options.seed, "subsample"),
        ),
        None => Ok(stage.inputs.split.validation().to_vec()),
    }
}

/// Resolve the threshold per local source: fixed policy uses the value,
/// tuned policy reuses a persisted mu.json or tunes now and persists.
fn resolve_mu(stage: &Stage) -> Result<BTreeMap<String, f64>> {
    let mut resolved = BTreeMap::new();
    match &stage.options.mu {
        MuPolicy::Fixed(value) => {
            for local in &stage.inputs.locals {
                resolved.insert(local.name.clone(), *value);
            }
        }
        MuPolicy::Tuned { grid } => {
            let mut persisted = read_mu_file(&stage.out)?;
            let items = calibration_items(stage)?;
            let mut dirty = false;
            for local in &stage.inputs.locals {
                if !persisted.contains_key(&local.name) {
                    let grid_values = grid
                        .clone()
                        .unwrap_or_else(fusecal_core::retrieval::default_mu_grid);
                    let outcome = tune_mu(
                        &local.records,
                        &stage.inputs.query_catalog,
                        &stage.inputs.db_catalog,
                        &items,
                        &grid_values,
                        stage.options.calibration,
                    )?;
                    persisted.insert(local.name.clone(), outcome);
                    dirty = true;
                }
                resolved.insert(local.name.clone(), persisted[&local.name].best_mu);
            }
            if dirty {
                write_mu_file(&stage.out, &persisted)?;
            }
        }
    }
    Ok(resolved)
}

/// Load persisted raw matrices or compute and persist them.
fn raw_matrices(
    stage: &Stage,
    mu: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, ScoreMatrix>> {
    let mut raw = BTreeMap::new();
    for g in &stage.inputs.globals {
        let path = raw_global_path(&stage.out, &g.name);
        let matrix = if path.exists() {
            read_score_file(&path)?
        } else {
            let m = global_score_matrix(&g.query, &g.database)?;
            write_score_file(&path, &m)?;
            m
        };
        raw.insert(g.name.clone(), matrix);
    }
    for l in &stage.inputs.locals {
        let path = raw_local_path(&stage.out, &l.name, mu[&l.name]);
        let matrix = if path.exists() {
            read_score_file(&path)?
        } else {
            let m = local_score_matrix(
                &l.records,
                MatchThreshold::new(mu[&l.name])?,
                stage.inputs.query_catalog.len(),
                stage.inputs.db_catalog.len(),
            )?;
            write_score_file(&path, &m)?;
            m
        };
        raw.insert(l.name.clone(), matrix);
    }
    Ok(raw)
}

/// Load persisted calibrators, import zero-shot ones, or fit on
/// validation pairs and persist.
fn calibrators(
    stage: &Stage,
    raw: &BTreeMap<String, ScoreMatrix>,
) -> Result<BTreeMap<String, Calibrator>> {
    let mut out = BTreeMap::new();
    if let Some(imported) = &stage.options.zero_shot {
        for name in raw.keys() {
            let cal = imported.get(name).cloned().ok_or_else(|| {
                Error::Config(format!("zero-shot mode lacks a calibrator for '{name}'"))
            })?;
            out.insert(name.clone(), cal);
        }
        return Ok(out);
    }
    std::fs::create_dir_all(stage.out.join("calibrators"))?;
    let items = calibration_items(stage)?;
    for (name, matrix) in raw {
        let path = calibrator_path(&stage.out, name);
        let cal = if path.exists() {
            Calibrator::load(&path)?
        } else {
            let pairs = build_pair_labels(
                matrix,
                &stage.inputs.query_catalog,
                &stage.inputs.db_catalog,
                &items,
            )?;
            let fit = fit_calibrator(stage.options.calibration, &pairs)?;
            for w in &fit.warnings {
                eprintln!("warning: {name}: {w}");
            }
            fit.calibrator.save(&path)?;
            fit.calibrator
        };
        out.insert(name.clone(), cal);
    }
    Ok(out)
}

/// Load the persisted fused matrix or build it from the earlier stages.
fn fused_matrix(stage: &Stage) -> Result<ScoreMatrix> {
    let path = stage.out.join("fused.fscm");
    if path.exists() {
        return read_score_file(&path);
    }
    let mu = resolve_mu(stage)?;
    let raw = raw_matrices(stage, &mu)?;
    let cals = calibrators(stage, &raw)?;
    let mut calibrated = BTreeMap::new();
    for (name, matrix) in &raw {
        calibrated.insert(name.clone(), apply_calibrator(&cals[name], matrix)?);
    }
    let names: Vec<String> = calibrated.keys().cloned().collect();
    let config = match &stage.options.fusion {
        Some(cfg) => cfg.clone(),
        None => default_config(&names)?,
    };
    let inputs: Vec<FusionInput> = calibrated
        .iter()
        .map(|(name, matrix)| FusionInput {
            name,
            matrix,
            flagged_decreasing: cals[name].is_decreasing(),
        })
        .collect();
    let fused = fuse(&inputs, &config)?;
    write_score_file(&path, &fused)?;
    Ok(fused)
}

/// Test-split accuracy of a full prediction list.
fn test_accuracy(stage: &Stage, predictions: &[fusecal_core::retrieval::Prediction]) -> f64 {
    let test = stage.inputs.split.test();
    if test.is_empty() {
        return 0.0;
    }
    let correct = test
        .iter()
        .filter(|&&q| {
            stage.inputs.db_catalog.identity(predictions[q].db_index)
                == stage.inputs.query_catalog.identity(q)
        })
        .count();
    correct as f64 / test.len() as f64
}

fn cmd_score_global(args: &CommonArgs) -> Result<()> {
    let stage = assemble(args)?;
    for g in &stage.inputs.globals {
        let path = raw_global_path(&stage.out, &g.name);
        if !path.exists() {
            write_score_file(&path, &global_score_matrix(&g.query, &g.database)?)?;
        }
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_score_local(args: &CommonArgs) -> Result<()> {
    let stage = assemble(args)?;
    let mu = resolve_mu(&stage)?;
    for l in &stage.inputs.locals {
        let path = raw_local_path(&stage.out, &l.name, mu[&l.name]);
        if !path.exists() {
            let m = local_score_matrix(
                &l.records,
                MatchThreshold::new(mu[&l.name])?,
                stage.inputs.query_catalog.len(),
                stage.inputs.db_catalog.len(),
            )?;
            write_score_file(&path, &m)?;
        }
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_tune_mu(args: &CommonArgs) -> Result<()> {
    let stage = assemble(args)?;
    if stage.inputs.locals.is_empty() {
        return Err(Error::Config("config lists no local scores to tune".into()));
    }
    let items = calibration_items(&stage)?;
    let grid = match &stage.options.mu {
        MuPolicy::Tuned { grid: Some(g) } => g.clone(),
        _ => fusecal_core::retrieval::default_mu_grid(),
    };
    let mut persisted = read_mu_file(&stage.out)?;
    for local in &stage.inputs.locals {
        let outcome = tune_mu(
            &local.records,
            &stage.inputs.query_catalog,
            &stage.inputs.db_catalog,
            &items,
            &grid,
            stage.options.calibration,
        )?;
        println!("{}: best mu {}", local.name, outcome.best_mu);
        persisted.insert(local.name.clone(), outcome);
    }
    write_mu_file(&stage.out, &persisted)?;
    Ok(())
}

fn cmd_calibrate(args: &CommonArgs) -> Result<()> {
    let stage = assemble(args)?;
    let mu = resolve_mu(&stage)?;
    let raw = raw_matrices(&stage, &mu)?;
    let cals = calibrators(&stage, &raw)?;
    for name in cals.keys() {
        println!("{}", calibrator_path(&stage.out, name).display());
    }
    Ok(())
}

fn cmd_fuse(args: &CommonArgs) -> Result<()> {
    let stage = assemble(args)?;
    fused_matrix(&stage)?;
    println!("{}", stage.out.join("fused.fscm").display());
    Ok(())
}

fn cmd_run(args: &CommonArgs) -> Result<()> {
    let stage = assemble(args)?;
    let outcome = run_pipeline(&stage.inputs, &stage.options)?;
    persist_outcome(&stage, &outcome, None)?;
    println!("fused test accuracy: {:.4}", outcome.fused_accuracy);
    Ok(())
}

fn cmd_evaluate(args: &CommonArgs) -> Result<()> {
    let stage = assemble(args)?;
    let fused = fused_matrix(&stage)?;
    let predictions = rank_top1(&fused, &stage.inputs.db_catalog)?;
    let accuracy = test_accuracy(&stage, &predictions);
    // The full pipeline rebuild supplies per-score diagnostics for the
    // report; the fused matrix above came from the persisted stages.
    let outcome = run_pipeline(&stage.inputs, &stage.options)?;
    persist_outcome(&stage, &outcome, None)?;
    println!("fused test accuracy: {accuracy:.4}");
    Ok(())
}

fn cmd_shortlist(args: &CommonArgs) -> Result<()> {
    let stage = assemble(args)?;
    let budget = stage.options.budget.ok_or_else(|| {
        Error::Config("shortlist needs --budget or a config shortlist section".into())
    })?;
    let outcome = run_pipeline(&stage.inputs, &stage.options)?;

    let cheap_name = stage
        .inputs
        .globals
        .iter()
        .map(|g| g.name.clone())
        .min()
        .ok_or_else(|| {
            Error::Config("shortlist needs a global score as the cheap stage".into())
        })?;
    let fused = fused_matrix(&stage)?;
    let mu = resolve_mu(&stage)?;
    let raw = raw_matrices(&stage, &mu)?;
    let cals = calibrators(&stage, &raw)?;
    let cheap = apply_calibrator(&cals[&cheap_name], &raw[&cheap_name])?;

    // Budget sweep for the report curve: standard points capped at the
    // database size, plus the requested budget and the full database.
    let d = stage.inputs.db_catalog.len();
    let mut budgets: Vec<usize> = [1usize, 2, 5, 10, 20, 50, 100, 200, 500, 1000]
        .into_iter()
        .filter(|&b| b <= d)
        .collect();
    budgets.push(budget.value().min(d));
    budgets.push(d);
    budgets.sort_unstable();
    budgets.dedup();

    let mut curve = Vec::with_capacity(budgets.len());
    for b in budgets {
        let shortlist = shortlist_rerank(
            &cheap,
            |q, di| Ok(fused.get(q, di)),
            Budget::new(b)?,
            &stage.inputs.db_catalog,
        )?;
        curve.push(BudgetPoint {
            budget: b,
            accuracy: test_accuracy(&stage, &shortlist.predictions),
        });
    }
    persist_outcome(&stage, &outcome, Some(curve))?;
    println!(
        "fused test accuracy at budget {}: {:.4}",
        budget.value(),
        outcome.fused_accuracy
    );
    Ok(())
}

fn persist_outcome(
    stage: &Stage,
    outcome: &PipelineOutcome,
    budget_curve: Option<Vec<BudgetPoint>>,
) -> Result<()> {
    if stage.options.zero_shot.is_none() {
        std::fs::create_dir_all(stage.out.join("calibrators"))?;
        for (name, cal) in &outcome.calibrators {
            cal.save(&calibrator_path(&stage.out, name))?;
        }
    }
    let report = build_report(
        outcome,
        &stage.inputs.split,
        stage.options.seed,
        stage.options.calibration.name(),
        budget_curve,
    );
    emit_report(
        &report,
        outcome,
        &stage.inputs.query_catalog,
        &stage.inputs.db_catalog,
        &stage.out,
    )?;
    Ok(())
}
