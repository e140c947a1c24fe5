use fpinn::autodiff::{Activation, Architecture, NetworkConfig};
use fpinn::models::{spin_boson_spec, BathParams};
use fpinn::oracle::TimeGrid;
use fpinn::training::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let eta0: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5e-3);
    let lam: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let drop: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let spec = spin_boson_spec(BathParams::new(0.1, 0.3, 20.0).unwrap());
    let grid = TimeGrid::new(201, 6.0).unwrap();
    let net = NetworkConfig {
        architecture: Architecture::Forked,
        shared_layers: vec![64; 3],
        branch_layers: vec![32],
        out_features: vec![4, 4],
        activation: Activation::Silu,
        dropout_rate: drop,
        layer_norm: true,
        output_init_scale: 1.0,
        dropout_per_point: false,
        seed,
    };
    let cfg = TrainConfig {
        eta0, eta_min: 1e-5, t_max: 5000,
        weight_decay: 1e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8,
        lambda_er: lam, tau: 0.002, seed, determinism: true,
    };
    let trained = train_operators(&spec, &net, &cfg, &grid).unwrap();
    for h in trained.record.history.iter().step_by(250) {
        println!("ep {:4}: tot {:10.4} mod {:9.4}/{:9.4} ini {:.2e}/{:.2e} er {:.2e}", h.epoch, h.total,
            h.mod_terms[0], h.mod_terms[1], h.ini_terms[0], h.ini_terms[1], h.er_terms[0]);
    }
}
