//! Two-phase training: auxiliary operators first, then the density matrix
//! against the trained operator priors.

use serde::{Deserialize, Serialize};

use crate::autodiff::{build_network, epoch_seed, Architecture, Mode, Network, NetworkConfig, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::models::SystemSpec;
use crate::oracle::{TimeGrid, Trajectory};
use crate::training::losses::{record_operator_loss, record_rho_loss};
use crate::training::metrics::avg_frobenius_error;
use crate::training::optimizer::{adamw_step, cosine_lr, AdamState, TrainConfig};

/// Loss decomposition of one epoch; `total` is exactly the sum of the parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub mod_terms: Vec<f64>,
    pub ini_terms: Vec<f64>,
    pub er_terms: Vec<f64>,
}

/// Config snapshot plus per-epoch loss history of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub system: String,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub grid_points: usize,
    pub t_total: f64,
    /// The dynamics loss is the mean over all grid points.
    pub loss_normalization: String,
    pub history: Vec<LossBreakdown>,
    pub wall_time_secs: f64,
    /// Filled in by the front end once the checkpoint lands on disk.
    pub checkpoint: Option<String>,
}

/// Outcome of a training phase: the record plus the trained network.
pub struct Trained {
    pub record: RunRecord,
    pub params: ParamStore,
    pub network: Network,
}

fn check_grid_for_training(grid: &TimeGrid, t_max: usize) -> Result<()> {
    if t_max > 0 && grid.len() < 2 {
        return Err(Error::TrajectoryTooShort { need: 2, got: grid.len() });
    }
    Ok(())
}

/// Train the two auxiliary-operator heads (full batch, cosine schedule,
/// cross-head values detached inside the residuals).
pub fn train_operators(
    spec: &SystemSpec,
    net_config: &NetworkConfig,
    train_config: &TrainConfig,
    grid: &TimeGrid,
) -> Result<Trained> {
    train_config.validate()?;
    check_grid_for_training(grid, train_config.t_max)?;
    let expected = vec![spec.o_layout.n_features(), spec.q_layout.n_features()];
    if net_config.out_features != expected {
        return Err(Error::InvalidConfig(format!(
            "operator network must output {expected:?} features, config has {:?}",
            net_config.out_features
        )));
    }
    if matches!(net_config.architecture, Architecture::Plain) {
        return Err(Error::InvalidConfig("operator phase needs a two-head architecture".into()));
    }

    let started = std::time::Instant::now();
    let (mut params, network) = build_network(net_config)?;
    let mut state = AdamState::new(&params);
    let mut history = Vec::with_capacity(train_config.t_max);

    for epoch in 0..train_config.t_max {
        let lr = cosine_lr(epoch, train_config)?;
        let mut tape = Tape::new();
        let graph = record_operator_loss(
            &mut tape,
            &network,
            &params,
            spec,
            grid.times(),
            Mode::Train { epoch_seed: epoch_seed(train_config.seed, epoch) },
            train_config.lambda_er,
            train_config.tau,
            true,
        )?;
        let total = tape.scalar(graph.total);
        if !total.is_finite() {
            return Err(Error::TrainingAborted { epoch, reason: "non-finite loss".into() });
        }
        history.push(LossBreakdown {
            epoch,
            lr,
            total,
            mod_terms: vec![tape.scalar(graph.mod_o), tape.scalar(graph.mod_q)],
            ini_terms: vec![tape.scalar(graph.ini_o), tape.scalar(graph.ini_q)],
            er_terms: vec![tape.scalar(graph.er_o), tape.scalar(graph.er_q)],
        });
        let grads = tape.backward(graph.total, &params)?;
        adamw_step(&mut params, &grads, &mut state, lr, train_config);
    }

    let record = RunRecord {
        label: "operators".into(),
        system: spec.name.clone(),
        network: net_config.clone(),
        train: train_config.clone(),
        grid_points: grid.len(),
        t_total: grid.t_total(),
        loss_normalization: "mean-over-grid".into(),
        history,
        wall_time_secs: started.elapsed().as_secs_f64(),
        checkpoint: None,
    };
    Ok(Trained { record, params, network })
}

/// Train the density-matrix head against fixed operator priors.
pub fn train_rho(
    spec: &SystemSpec,
    rho0: &ComplexMatrix,
    o_prior: &Trajectory,
    q_prior: &Trajectory,
    net_config: &NetworkConfig,
    train_config: &TrainConfig,
    grid: &TimeGrid,
) -> Result<Trained> {
    train_config.validate()?;
    check_grid_for_training(grid, train_config.t_max)?;
    if !o_prior.grid.matches(grid) || !q_prior.grid.matches(grid) {
        return Err(Error::GridMismatch { reason: "operator priors must live on the training grid".into() });
    }
    if net_config.out_features != vec![spec.rho_layout.n_features()] {
        return Err(Error::InvalidConfig(format!(
            "density network must output {} features, config has {:?}",
            spec.rho_layout.n_features(),
            net_config.out_features
        )));
    }
    if rho0.dim() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: rho0.dim() });
    }

    let started = std::time::Instant::now();
    let (mut params, network) = build_network(net_config)?;
    let mut state = AdamState::new(&params);
    let mut history = Vec::with_capacity(train_config.t_max);

    for epoch in 0..train_config.t_max {
        let lr = cosine_lr(epoch, train_config)?;
        let mut tape = Tape::new();
        let graph = record_rho_loss(
            &mut tape,
            &network,
            &params,
            spec,
            grid.times(),
            Mode::Train { epoch_seed: epoch_seed(train_config.seed, epoch) },
            rho0,
            &o_prior.values,
            &q_prior.values,
            train_config.lambda_er,
            train_config.tau,
        )?;
        let total = tape.scalar(graph.total);
        if !total.is_finite() {
            return Err(Error::TrainingAborted { epoch, reason: "non-finite loss".into() });
        }
        history.push(LossBreakdown {
            epoch,
            lr,
            total,
            mod_terms: vec![tape.scalar(graph.mod_rho)],
            ini_terms: vec![tape.scalar(graph.ini_rho)],
            er_terms: vec![tape.scalar(graph.er_rho)],
        });
        let grads = tape.backward(graph.total, &params)?;
        adamw_step(&mut params, &grads, &mut state, lr, train_config);
    }

    let record = RunRecord {
        label: "rho".into(),
        system: spec.name.clone(),
        network: net_config.clone(),
        train: train_config.clone(),
        grid_points: grid.len(),
        t_total: grid.t_total(),
        loss_normalization: "mean-over-grid".into(),
        history,
        wall_time_secs: started.elapsed().as_secs_f64(),
        checkpoint: None,
    };
    Ok(Trained { record, params, network })
}

/// Eval-mode operator predictions on the grid.
pub fn operator_trajectories(
    network: &Network,
    params: &ParamStore,
    spec: &SystemSpec,
    grid: &TimeGrid,
) -> Result<(Trajectory, Trajectory)> {
    let outputs = network.eval_grid(params, grid.times())?;
    let layouts = [&spec.o_layout, &spec.q_layout];
    let mut trajectories = Vec::with_capacity(2);
    for (head, layout) in outputs.iter().zip(layouts) {
        let (features, _) = head;
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.len() {
            let col: Vec<f64> = features.column(j).to_vec();
            values.push(layout.to_matrix(&col)?);
        }
        trajectories.push(Trajectory::new(grid.clone(), values)?);
    }
    let q = trajectories.pop().expect("two heads");
    let o = trajectories.pop().expect("two heads");
    Ok((o, q))
}

/// Eval-mode density-matrix predictions on the grid.
pub fn rho_trajectory(
    network: &Network,
    params: &ParamStore,
    spec: &SystemSpec,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let outputs = network.eval_grid(params, grid.times())?;
    let (features, _) = &outputs[0];
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let col: Vec<f64> = features.column(j).to_vec();
        values.push(spec.rho_layout.to_matrix(&col)?);
    }
    Trajectory::new(grid.clone(), values)
}

/// Matched-capacity configs for the architecture comparison: trunk width W
/// for the forked/unified nets, W/2 for branches and separated subnetworks.
pub fn comparison_config(
    architecture: Architecture,
    base_width: usize,
    out_features: Vec<usize>,
    dropout_rate: f64,
    layer_norm: bool,
    seed: u64,
) -> NetworkConfig {
    let half = (base_width / 2).max(1);
    let (shared, branch) = match architecture {
        Architecture::Forked => (vec![base_width; 3], vec![half]),
        Architecture::Unified => (vec![base_width; 4], vec![]),
        Architecture::Separated => (vec![half; 4], vec![]),
        Architecture::Plain => (vec![base_width; 3], vec![]),
    };
    NetworkConfig {
        architecture,
        shared_layers: shared,
        branch_layers: branch,
        out_features,
        activation: crate::autodiff::Activation::Silu,
        dropout_rate,
        layer_norm,
        output_init_scale: 1.0,
        dropout_per_point: false,
        seed,
    }
}

/// One row of the architecture-comparison report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRun {
    pub architecture: Architecture,
    pub seed: u64,
    pub final_total: f64,
    pub eps_o: f64,
    pub eps_q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub architecture: Architecture,
    pub median_total: f64,
    pub median_eps_o: f64,
    pub median_eps_q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: Vec<ComparisonRun>,
    pub summaries: Vec<ComparisonSummary>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Train every requested architecture over the seed list with matched
/// capacity and report converged losses plus errors against the oracle.
#[allow(clippy::too_many_arguments)]
pub fn compare_architectures(
    spec: &SystemSpec,
    architectures: &[Architecture],
    base_width: usize,
    dropout_rate: f64,
    layer_norm: bool,
    train_config: &TrainConfig,
    grid: &TimeGrid,
    seeds: &[u64],
    oracle_o: &Trajectory,
    oracle_q: &Trajectory,
) -> Result<ComparisonReport> {
    if architectures.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig("comparison needs architectures and seeds".into()));
    }
    let out_features = vec![spec.o_layout.n_features(), spec.q_layout.n_features()];
    let mut runs = Vec::new();
    for &arch in architectures {
        for &seed in seeds {
            let net_config =
                comparison_config(arch, base_width, out_features.clone(), dropout_rate, layer_norm, seed);
            let mut cfg = train_config.clone();
            cfg.seed = seed;
            let trained = train_operators(spec, &net_config, &cfg, grid)?;
            let (o, q) = operator_trajectories(&trained.network, &trained.params, spec, grid)?;
            runs.push(ComparisonRun {
                architecture: arch,
                seed,
                final_total: trained.record.history.last().map_or(f64::NAN, |h| h.total),
                eps_o: avg_frobenius_error(&o, oracle_o)?,
                eps_q: avg_frobenius_error(&q, oracle_q)?,
            });
        }
    }
    let summaries = architectures
        .iter()
        .map(|&arch| {
            let pick = |f: fn(&ComparisonRun) -> f64| {
                median(runs.iter().filter(|r| r.architecture == arch).map(f).collect())
            };
            ComparisonSummary {
                architecture: arch,
                median_total: pick(|r| r.final_total),
                median_eps_o: pick(|r| r.eps_o),
                median_eps_q: pick(|r| r.eps_q),
            }
        })
        .collect();
    Ok(ComparisonReport { runs, summaries })
}
