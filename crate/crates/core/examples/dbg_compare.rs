use fpinn::autodiff::Architecture;
use fpinn::linalg::ComplexMatrix;
use fpinn::models::{spin_boson_spec, BathParams};
use fpinn::oracle::{integrate_system, TimeGrid};
use fpinn::training::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let width: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(64);
    let spec = spin_boson_spec(BathParams::new(0.1, 0.3, 20.0).unwrap());
    let grid = TimeGrid::new(201, 6.0).unwrap();
    let rho0 = ComplexMatrix::diag(&[1.0, 0.0]);
    let (o_ref, q_ref, _) = integrate_system(&spec, &rho0, &grid, 8).unwrap();
    let cfg = TrainConfig {
        eta0: 5e-3, eta_min: 1e-5, t_max: epochs,
        weight_decay: 1e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8,
        lambda_er: 0.01, tau: 0.002, seed: 0, determinism: true,
    };
    let t0 = std::time::Instant::now();
    let report = compare_architectures(
        &spec,
        &[Architecture::Forked, Architecture::Unified, Architecture::Separated],
        width, 0.0, false, &cfg, &grid, &[1, 2, 3], &o_ref, &q_ref,
    )
    .unwrap();
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
    for r in &report.runs {
        println!("  {:?} seed {}: L_tot {:.3e} eps_o {:.5} eps_q {:.5}", r.architecture, r.seed, r.final_total, r.eps_o, r.eps_q);
    }
    for s in &report.summaries {
        println!("{:?}: median L_tot {:.3e} median eps {:.5}/{:.5}", s.architecture, s.median_total, s.median_eps_o, s.median_eps_q);
    }
}
