//! `fpinn` — reference integration, two-phase network training, and
//! evaluation of non-Markovian open-quantum-dynamics benchmarks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fpinn::autodiff::Architecture;
use fpinn::error::Error;
use fpinn::io::csvio;
use fpinn::io::{
    create_run_dir, file_sha256, load_checkpoint, render_line_plot, save_checkpoint, tool_version,
    write_metadata, ExperimentConfig, RunMetadata, Series,
};
use fpinn::oracle::{integrate_system, Trajectory};
use fpinn::training::{
    avg_fidelity, avg_frobenius_error, compare_architectures, operator_trajectories,
    rho_trajectory, train_operators, train_rho,
};

#[derive(Parser)]
#[command(name = "fpinn", version, about = "Forked-PINN solver suite for non-Markovian open quantum dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output run directory; must not already contain files.
    #[arg(long)]
    out: PathBuf,
    /// Override the run seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Apply `key.path=value` overrides onto the config JSON.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Force deterministic single-order evaluation (the default).
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the coupled reference dynamics and write trajectory CSVs.
    Oracle(CommonArgs),
    /// Phase 1: train the auxiliary-operator network.
    TrainOperators {
        #[command(flatten)]
        common: CommonArgs,
        /// Oracle run directory for error reporting.
        #[arg(long)]
        oracle_dir: Option<PathBuf>,
        /// Fan out over a comma-separated seed list into subdirectories.
        #[arg(long, value_delimiter = ',')]
        sweep_seeds: Vec<u64>,
    },
    /// Phase 2: train the density-matrix network against operator priors.
    TrainRho {
        #[command(flatten)]
        common: CommonArgs,
        /// Prior source: an operator checkpoint file, or a run directory
        /// containing O/Q trajectory CSVs (oracle or trained).
        #[arg(long)]
        priors: PathBuf,
        /// Oracle run directory for the fidelity report.
        #[arg(long)]
        oracle_dir: Option<PathBuf>,
    },
    /// Train forked, unified, and separated networks at matched capacity.
    CompareArchitectures {
        #[command(flatten)]
        common: CommonArgs,
        /// Seeds (one run per architecture per seed).
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Metrics of a trained checkpoint against an oracle run.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        oracle_dir: PathBuf,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render CSV columns as a deterministic SVG line plot.
    Plot {
        /// Input CSV files; series from later files overlay earlier ones.
        #[arg(long = "file", required = true)]
        files: Vec<PathBuf>,
        /// Columns to draw, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        columns: Vec<String>,
        /// Column providing x values.
        #[arg(long, default_value = "t")]
        x: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonFinite { .. }
        | Error::TrainingAborted { .. }
        | Error::NoConvergence { .. }
        | Error::NegativeEigenvalue { .. }
        | Error::NotHermitian { .. }
        | Error::TapeConsumed => 2,
        _ => 1,
    }
}

fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut all = overrides.to_vec();
    if let Some(s) = seed {
        all.push(format!("network.seed={s}"));
        all.push(format!("train.seed={s}"));
    }
    ExperimentConfig::from_json_with_overrides(&text, &all)
}

fn metadata_for(
    command: &str,
    config: &ExperimentConfig,
    seeds: Vec<u64>,
    input_hashes: Vec<(String, String)>,
) -> Result<RunMetadata, Error> {
    Ok(RunMetadata {
        tool_version: tool_version(),
        command: command.to_string(),
        config: serde_json::to_value(config)?,
        seeds,
        input_hashes,
    })
}

fn cmd_oracle(args: &CommonArgs) -> Result<(), Error> {
    let config = load_config(&args.config, &args.overrides, args.seed)?;
    let spec = config.system.build_spec()?;
    let grid = config.grid.build()?;
    let rho0 = config.system.build_rho0(spec.dim)?;
    let dir = create_run_dir(&args.out)?;

    let (o, q, rho) = integrate_system(&spec, &rho0, &grid, config.substeps)?;
    csvio::write_operator_csv(&dir.join("oracle_O.csv"), &o, &spec, 'O')?;
    csvio::write_operator_csv(&dir.join("oracle_Q.csv"), &q, &spec, 'Q')?;
    csvio::write_density_csv(&dir.join("oracle_rho.csv"), &rho, &spec)?;
    csvio::write_observables_csv(&dir.join("oracle_observables.csv"), &rho, &spec, None)?;
    write_metadata(&dir, &metadata_for("oracle", &config, vec![], vec![])?)?;
    println!("oracle run written to {}", dir.display());
    Ok(())
}

fn read_prior_trajectories(
    path: &Path,
    spec: &fpinn::models::SystemSpec,
    grid: &fpinn::oracle::TimeGrid,
) -> Result<(Trajectory, Trajectory, Vec<(String, String)>), Error> {
    if path.is_dir() {
        let mut hashes = Vec::new();
        let pick = |name_a: &str, name_b: &str| -> Result<PathBuf, Error> {
            let a = path.join(name_a);
            if a.exists() {
                return Ok(a);
            }
            let b = path.join(name_b);
            if b.exists() {
                return Ok(b);
            }
            Err(Error::InvalidConfig(format!(
                "no {name_a} or {name_b} in {}",
                path.display()
            )))
        };
        let o_path = pick("oracle_O.csv", "pred_O.csv")?;
        let q_path = pick("oracle_Q.csv", "pred_Q.csv")?;
        hashes.push((o_path.display().to_string(), file_sha256(&o_path)?));
        hashes.push((q_path.display().to_string(), file_sha256(&q_path)?));
        let o = csvio::read_operator_csv(&o_path, spec, 'O')?;
        let q = csvio::read_operator_csv(&q_path, spec, 'Q')?;
        Ok((o, q, hashes))
    } else {
        let (network, params) = load_checkpoint(path)?;
        let (o, q) = operator_trajectories(&network, &params, spec, grid)?;
        let hash = file_sha256(path)?;
        Ok((o, q, vec![(path.display().to_string(), hash)]))
    }
}

fn run_train_operators(
    config: &ExperimentConfig,
    dir: &Path,
    oracle_dir: Option<&Path>,
) -> Result<(), Error> {
    let spec = config.system.build_spec()?;
    let grid = config.grid.build()?;
    let mut record_hashes = Vec::new();

    let trained = train_operators(&spec, &config.network, &config.train, &grid)?;
    let ckpt_path = dir.join("operators.ckpt");
    save_checkpoint(&ckpt_path, &config.network, &trained.params)?;
    let mut record = trained.record;
    record.checkpoint = Some("operators.ckpt".into());

    csvio::write_loss_csv(&dir.join("loss.csv"), &record.history, &["o", "q"])?;
    let (o, q) = operator_trajectories(&trained.network, &trained.params, &spec, &grid)?;
    csvio::write_operator_csv(&dir.join("pred_O.csv"), &o, &spec, 'O')?;
    csvio::write_operator_csv(&dir.join("pred_Q.csv"), &q, &spec, 'Q')?;

    let mut report = serde_json::json!({
        "final_loss": record.history.last().map(|h| h.total),
        "variant": if config.train.lambda_er == 0.0 { "no-ER" } else { "with-ER" },
    });
    if let Some(oracle) = oracle_dir {
        let o_path = oracle.join("oracle_O.csv");
        let q_path = oracle.join("oracle_Q.csv");
        let o_ref = csvio::read_operator_csv(&o_path, &spec, 'O')?;
        let q_ref = csvio::read_operator_csv(&q_path, &spec, 'Q')?;
        record_hashes.push((o_path.display().to_string(), file_sha256(&o_path)?));
        record_hashes.push((q_path.display().to_string(), file_sha256(&q_path)?));
        report["eps_o"] = avg_frobenius_error(&o, &o_ref)?.into();
        report["eps_q"] = avg_frobenius_error(&q, &q_ref)?.into();
    }
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(dir.join("run_record.json"), serde_json::to_string_pretty(&record)?)?;
    write_metadata(
        dir,
        &metadata_for("train-operators", config, vec![config.train.seed], record_hashes)?,
    )?;
    println!("operator run written to {}: {}", dir.display(), report);
    Ok(())
}

fn cmd_train_operators(
    args: &CommonArgs,
    oracle_dir: Option<&Path>,
    sweep_seeds: &[u64],
) -> Result<(), Error> {
    let config = load_config(&args.config, &args.overrides, args.seed)?;
    let dir = create_run_dir(&args.out)?;
    if sweep_seeds.is_empty() {
        run_train_operators(&config, &dir, oracle_dir)
    } else {
        // Independent seeds run in isolated subdirectories.
        let results: Vec<Result<(), Error>> = std::thread::scope(|scope| {
            let handles: Vec<_> = sweep_seeds
                .iter()
                .map(|&seed| {
                    let mut cfg = config.clone();
                    cfg.network.seed = seed;
                    cfg.train.seed = seed;
                    let sub = dir.join(format!("seed-{seed}"));
                    scope.spawn(move || {
                        create_run_dir(&sub)?;
                        run_train_operators(&cfg, &sub, oracle_dir)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("no panics")).collect()
        });
        for r in results {
            r?;
        }
        Ok(())
    }
}

fn cmd_train_rho(
    args: &CommonArgs,
    priors: &Path,
    oracle_dir: Option<&Path>,
) -> Result<(), Error> {
    let config = load_config(&args.config, &args.overrides, args.seed)?;
    let spec = config.system.build_spec()?;
    let grid = config.grid.build()?;
    let rho0 = config.system.build_rho0(spec.dim)?;
    let dir = create_run_dir(&args.out)?;

    let (o_prior, q_prior, mut hashes) = read_prior_trajectories(priors, &spec, &grid)?;
    let net_config = config.rho_network_config(&spec);
    let train_config = config.rho_train_config();
    let trained = train_rho(&spec, &rho0, &o_prior, &q_prior, &net_config, &train_config, &grid)?;

    save_checkpoint(&dir.join("rho.ckpt"), &net_config, &trained.params)?;
    let mut record = trained.record;
    record.checkpoint = Some("rho.ckpt".into());
    csvio::write_loss_csv(&dir.join("loss.csv"), &record.history, &["rho"])?;
    let rho = rho_trajectory(&trained.network, &trained.params, &spec, &grid)?;
    csvio::write_density_csv(&dir.join("pred_rho.csv"), &rho, &spec)?;

    let mut report = serde_json::json!({
        "final_loss": record.history.last().map(|h| h.total),
    });
    let reference = match oracle_dir {
        Some(oracle) => {
            let rho_path = oracle.join("oracle_rho.csv");
            let rho_ref = csvio::read_density_csv(&rho_path, &spec)?;
            hashes.push((rho_path.display().to_string(), file_sha256(&rho_path)?));
            report["avg_fidelity"] = avg_fidelity(&rho, &rho_ref)?.into();
            report["eps_rho"] = avg_frobenius_error(&rho, &rho_ref)?.into();
            Some(rho_ref)
        }
        None => None,
    };
    csvio::write_observables_csv(&dir.join("pred_observables.csv"), &rho, &spec, reference.as_ref())?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(dir.join("run_record.json"), serde_json::to_string_pretty(&record)?)?;
    write_metadata(&dir, &metadata_for("train-rho", &config, vec![train_config.seed], hashes)?)?;
    println!("density run written to {}: {}", dir.display(), report);
    Ok(())
}

fn cmd_compare(args: &CommonArgs, seeds: &[u64]) -> Result<(), Error> {
    let config = load_config(&args.config, &args.overrides, args.seed)?;
    let spec = config.system.build_spec()?;
    let grid = config.grid.build()?;
    let rho0 = config.system.build_rho0(spec.dim)?;
    let dir = create_run_dir(&args.out)?;

    let (o_ref, q_ref, _) = integrate_system(&spec, &rho0, &grid, config.substeps)?;
    let base_width = *config
        .network
        .shared_layers
        .first()
        .ok_or_else(|| Error::InvalidConfig("network needs layer widths".into()))?;
    let report = compare_architectures(
        &spec,
        &[Architecture::Forked, Architecture::Unified, Architecture::Separated],
        base_width,
        config.network.dropout_rate,
        config.network.layer_norm,
        &config.train,
        &grid,
        seeds,
        &o_ref,
        &q_ref,
    )?;

    println!("{:<12} {:>6} {:>12} {:>10} {:>10}", "architecture", "seed", "L_tot", "eps_O", "eps_Q");
    for r in &report.runs {
        println!(
            "{:<12} {:>6} {:>12.3e} {:>10.5} {:>10.5}",
            format!("{:?}", r.architecture).to_lowercase(),
            r.seed,
            r.final_total,
            r.eps_o,
            r.eps_q
        );
    }
    println!("medians:");
    for s in &report.summaries {
        println!(
            "{:<12} {:>6} {:>12.3e} {:>10.5} {:>10.5}",
            format!("{:?}", s.architecture).to_lowercase(),
            "-",
            s.median_total,
            s.median_eps_o,
            s.median_eps_q
        );
    }
    std::fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(&report)?)?;
    write_metadata(&dir, &metadata_for("compare-architectures", &config, seeds.to_vec(), vec![])?)?;
    Ok(())
}

fn cmd_evaluate(
    config_path: &Path,
    overrides: &[String],
    checkpoint: &Path,
    oracle_dir: &Path,
    out: Option<&Path>,
) -> Result<(), Error> {
    let config = load_config(config_path, overrides, None)?;
    let spec = config.system.build_spec()?;
    let grid = config.grid.build()?;
    let (network, params) = load_checkpoint(checkpoint)?;

    let mut report = serde_json::json!({
        "checkpoint": checkpoint.display().to_string(),
        "checkpoint_sha256": file_sha256(checkpoint)?,
    });
    if network.n_heads() == 2 {
        let (o, q) = operator_trajectories(&network, &params, &spec, &grid)?;
        let o_ref = csvio::read_operator_csv(&oracle_dir.join("oracle_O.csv"), &spec, 'O')?;
        let q_ref = csvio::read_operator_csv(&oracle_dir.join("oracle_Q.csv"), &spec, 'Q')?;
        report["eps_o"] = avg_frobenius_error(&o, &o_ref)?.into();
        report["eps_q"] = avg_frobenius_error(&q, &q_ref)?.into();
    } else {
        let rho = rho_trajectory(&network, &params, &spec, &grid)?;
        let rho_ref = csvio::read_density_csv(&oracle_dir.join("oracle_rho.csv"), &spec)?;
        report["eps_rho"] = avg_frobenius_error(&rho, &rho_ref)?.into();
        report["avg_fidelity"] = avg_fidelity(&rho, &rho_ref)?.into();
    }
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn cmd_plot(files: &[PathBuf], columns: &[String], x: &str, out: &Path) -> Result<(), Error> {
    if columns.is_empty() {
        return Err(Error::InvalidConfig("no columns requested".into()));
    }
    let mut series = Vec::new();
    for file in files {
        let table = csvio::CsvTable::read(file)?;
        let xs = table.column(x)?;
        let stem = file.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
        for col in columns {
            let ys = table.column(col)?;
            let label =
                if files.len() > 1 { format!("{stem}:{col}") } else { col.clone() };
            series.push(Series { label, points: xs.iter().cloned().zip(ys).collect() });
        }
    }
    let svg = render_line_plot(&series, x, "value")?;
    std::fs::write(out, svg)?;
    println!("plot written to {}", out.display());
    Ok(())
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Oracle(args) => cmd_oracle(args),
        Command::TrainOperators { common, oracle_dir, sweep_seeds } => {
            cmd_train_operators(common, oracle_dir.as_deref(), sweep_seeds)
        }
        Command::TrainRho { common, priors, oracle_dir } => {
            cmd_train_rho(common, priors, oracle_dir.as_deref())
        }
        Command::CompareArchitectures { common, seeds } => cmd_compare(common, seeds),
        Command::Evaluate { config, overrides, checkpoint, oracle_dir, out } => {
            cmd_evaluate(config, overrides, checkpoint, oracle_dir, out.as_deref())
        }
        Command::Plot { files, columns, x, out } => cmd_plot(files, columns, x, out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
