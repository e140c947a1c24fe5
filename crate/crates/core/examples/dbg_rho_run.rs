use fpinn::autodiff::{Activation, Architecture, NetworkConfig};
use fpinn::linalg::ComplexMatrix;
use fpinn::models::{spin_boson_spec, BathParams};
use fpinn::oracle::{integrate_system, TimeGrid};
use fpinn::training::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gamma: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let oracle_priors: bool = args.get(4).map_or(false, |s| s == "1");
    let lam: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.01);

    let spec = spin_boson_spec(BathParams::new(0.1, gamma, 20.0).unwrap());
    let grid = TimeGrid::new(201, 6.0).unwrap();
    let rho0 = ComplexMatrix::diag(&[1.0, 0.0]);
    let (o_ref, q_ref, rho_ref) = integrate_system(&spec, &rho0, &grid, 8).unwrap();

    let cfg = |s: u64, l: f64| TrainConfig {
        eta0: 5e-3, eta_min: 1e-5, t_max: epochs,
        weight_decay: 1e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8,
        lambda_er: l, tau: 0.002, seed: s, determinism: true,
    };

    let (o_prior, q_prior) = if oracle_priors {
        (o_ref.clone(), q_ref.clone())
    } else {
        let net = NetworkConfig {
            architecture: Architecture::Forked,
            shared_layers: vec![64; 3],
            branch_layers: vec![32],
            out_features: vec![4, 4],
            activation: Activation::Silu,
            dropout_rate: 0.0,
            layer_norm: false,
            output_init_scale: 1.0,
            dropout_per_point: false,
            seed,
        };
        let trained = train_operators(&spec, &net, &cfg(seed, if gamma >= 0.9 { 0.001 } else { 0.01 }), &grid).unwrap();
        operator_trajectories(&trained.network, &trained.params, &spec, &grid).unwrap()
    };
    let eps_o = avg_frobenius_error(&o_prior, &o_ref).unwrap();

    let rho_net = NetworkConfig {
        architecture: Architecture::Plain,
        shared_layers: vec![64; 3],
        branch_layers: vec![],
        out_features: vec![3],
        activation: Activation::Silu,
        dropout_rate: 0.0,
        layer_norm: false,
        output_init_scale: 1.0,
        dropout_per_point: false,
        seed,
    };
    let t0 = std::time::Instant::now();
    let trained = train_rho(&spec, &rho0, &o_prior, &q_prior, &rho_net, &cfg(seed, lam), &grid).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let rho = rho_trajectory(&trained.network, &trained.params, &spec, &grid).unwrap();
    let mut min_eig = f64::INFINITY;
    for m in &rho.values {
        let spectrum = fpinn::linalg::hermitian_eigendecompose(m).unwrap();
        for &l in &spectrum.eigenvalues { min_eig = min_eig.min(l); }
    }
    println!("min eigenvalue along trained trajectory: {min_eig:.3e}");
    let fid = avg_fidelity(&rho, &rho_ref).unwrap_or(f64::NAN);
    let eps_rho = avg_frobenius_error(&rho, &rho_ref).unwrap();
    println!(
        "g={gamma} s={seed} ep={epochs} oracle_priors={oracle_priors}: {dt:.1}s eps_o(prior)={eps_o:.5} fidelity={fid:.6} eps_rho={eps_rho:.5} Lend={:.2e}",
        trained.record.history.last().map_or(f64::NAN, |h| h.total)
    );
}
