use fpinn::autodiff::{Activation, Architecture, NetworkConfig};
use fpinn::linalg::ComplexMatrix;
use fpinn::models::{spin_boson_spec, BathParams};
use fpinn::oracle::{integrate_system, TimeGrid};
use fpinn::training::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gamma: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let width: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(64);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1);
    let lambda_er: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let dropout: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let eta0: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(5e-3);
    let ln: bool = args.get(8).map_or(true, |s| s == "1");
    let out_scale: f64 = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let per_point: bool = args.get(10).map_or(false, |s| s == "1");

    let spec = spin_boson_spec(BathParams::new(0.1, gamma, 20.0).unwrap());
    let grid = TimeGrid::new(201, 6.0).unwrap();
    let rho0 = ComplexMatrix::diag(&[1.0, 0.0]);
    let (o_ref, q_ref, _) = integrate_system(&spec, &rho0, &grid, 8).unwrap();

    let net = NetworkConfig {
        architecture: Architecture::Forked,
        shared_layers: vec![width; 3],
        branch_layers: vec![(width / 2).max(1)],
        out_features: vec![4, 4],
        activation: Activation::Silu,
        dropout_rate: dropout,
        layer_norm: ln,
        output_init_scale: 1.0,
        dropout_per_point: per_point,
        seed,
    };
    let cfg = TrainConfig {
        eta0, eta_min: 1e-5, t_max: epochs,
        weight_decay: 1e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8,
        lambda_er, tau: 0.002, seed, determinism: true,
    };
    let t0 = std::time::Instant::now();
    let mut net2 = net.clone();
    net2.output_init_scale = out_scale;
    let trained = train_operators(&spec, &net2, &cfg, &grid).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let (o, q) = operator_trajectories(&trained.network, &trained.params, &spec, &grid).unwrap();
    let eps_o = avg_frobenius_error(&o, &o_ref).unwrap();
    let eps_q = avg_frobenius_error(&q, &q_ref).unwrap();
    let hist = &trained.record.history;
    println!(
        "g={gamma} s={seed} lam={lambda_er} dr={dropout} w={width} ep={epochs} lr={eta0}: {dt:.1}s  eps_o={eps_o:.5} eps_q={eps_q:.5}  L0={:.4} Lend={:.6} mod_end={:.2e}/{:.2e} er_end={:.2e}",
        hist[0].total, hist.last().unwrap().total,
        hist.last().unwrap().mod_terms[0], hist.last().unwrap().mod_terms[1],
        hist.last().unwrap().er_terms[0]
    );
}
