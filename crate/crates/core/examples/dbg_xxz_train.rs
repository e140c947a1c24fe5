use fpinn::autodiff::{Activation, Architecture, NetworkConfig};
use fpinn::linalg::ComplexMatrix;
use fpinn::models::{xxz_spec, BathParams};
use fpinn::oracle::{integrate_system, TimeGrid};
use fpinn::training::*;
use num_complex::Complex64;

fn bell() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(4);
    for (i, j) in [(0usize, 0usize), (0, 3), (3, 0), (3, 3)] {
        m.set(i, j, Complex64::new(0.5, 0.0));
    }
    m
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let lam_op: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let rho_epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(epochs);

    let spec = xxz_spec(2.0, 0.5, BathParams::new(0.1, 0.4, 20.0).unwrap());
    let grid = TimeGrid::new(401, 6.0).unwrap();
    let cfg = |l: f64| TrainConfig {
        eta0: 5e-3, eta_min: 1e-5, t_max: epochs,
        weight_decay: 1e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8,
        lambda_er: l, tau: 0.002, seed, determinism: true,
    };
    let op_net = NetworkConfig {
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
    let t0 = std::time::Instant::now();
    let trained_ops = train_operators(&spec, &op_net, &cfg(lam_op), &grid).unwrap();
    let (o, q) = operator_trajectories(&trained_ops.network, &trained_ops.params, &spec, &grid).unwrap();
    let bell0 = bell();
    let (o_ref, q_ref, _) = integrate_system(&spec, &bell0, &grid, 8).unwrap();
    println!(
        "operators: {:.0}s eps_o={:.5} eps_q={:.5} Lend={:.2e}",
        t0.elapsed().as_secs_f64(),
        avg_frobenius_error(&o, &o_ref).unwrap(),
        avg_frobenius_error(&q, &q_ref).unwrap(),
        trained_ops.record.history.last().unwrap().total
    );

    for (name, rho0) in [("bell", bell0.clone()), ("ket00", ComplexMatrix::diag(&[1.0, 0.0, 0.0, 0.0]))] {
        let (_, _, rho_ref) = integrate_system(&spec, &rho0, &grid, 8).unwrap();
        let rho_net = NetworkConfig {
            architecture: Architecture::Plain,
            shared_layers: vec![64; 3],
            branch_layers: vec![],
            out_features: vec![16],
            activation: Activation::Silu,
            dropout_rate: 0.0,
            layer_norm: false,
            output_init_scale: 1.0,
            dropout_per_point: false,
            seed,
        };
        let t1 = std::time::Instant::now();
        let mut rcfg = cfg(0.0); rcfg.t_max = rho_epochs;
        let trained = train_rho(&spec, &rho0, &o, &q, &rho_net, &rcfg, &grid).unwrap();
        let rho = rho_trajectory(&trained.network, &trained.params, &spec, &grid).unwrap();
        let mut max_cerr = 0.0f64;
        let mut min_eig = f64::INFINITY;
        for (p, r) in rho.values.iter().zip(&rho_ref.values) {
            let cp = concurrence(p).unwrap_or(f64::NAN);
            let cr = concurrence(r).unwrap();
            max_cerr = max_cerr.max((cp - cr).abs());
            let spectrum = fpinn::linalg::hermitian_eigendecompose(&p.add(&p.adjoint()).unwrap().scale(Complex64::new(0.5,0.0))).unwrap();
            min_eig = min_eig.min(*spectrum.eigenvalues.last().unwrap());
        }
        let fid = avg_fidelity(&rho, &rho_ref).unwrap_or(f64::NAN);
        println!(
            "rho[{name}]: {:.0}s eps_rho={:.5} fid={:.6} max|dC|={:.4} min_eig={:.2e} Lend={:.2e}",
            t1.elapsed().as_secs_f64(),
            avg_frobenius_error(&rho, &rho_ref).unwrap(),
            fid, max_cerr, min_eig,
            trained.record.history.last().unwrap().total
        );
    }
}
