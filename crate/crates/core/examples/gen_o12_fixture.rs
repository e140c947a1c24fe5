//! Regenerates fixtures/spin_boson_fig2_o12.csv: reference values of the
//! Ō matrix element (1,2) at t ∈ {1, 3, 6} for the standard spin-boson
//! benchmark (Γ = 0.1, γ = 0.3, T = 20), integrated on a 601-point grid
//! with 64 RK4 sub-steps per interval.

use fpinn::linalg::ComplexMatrix;
use fpinn::models::{spin_boson_spec, BathParams};
use fpinn::oracle::{integrate_system, TimeGrid};

fn main() {
    let spec = spin_boson_spec(BathParams::new(0.1, 0.3, 20.0).unwrap());
    let rho0 = ComplexMatrix::diag(&[1.0, 0.0]);
    let grid = TimeGrid::new(601, 6.0).unwrap();
    let (o, _, _) = integrate_system(&spec, &rho0, &grid, 64).unwrap();

    let mut out = String::new();
    out.push_str("# generated by: cargo run -p fpinn --example gen_o12_fixture\n");
    out.push_str("# spin-boson Gamma=0.1 gamma=0.3 T=20, grid 601 x [0,6], substeps=64\n");
    out.push_str("t,re_O12,im_O12\n");
    for (i, t) in grid.times().iter().enumerate() {
        let is_target = [1.0f64, 3.0, 6.0].iter().any(|want| (t - want).abs() < 1e-12);
        if is_target {
            let entry = o.values[i].get(0, 1);
            out.push_str(&format!("{t},{:.17e},{:.17e}\n", entry.re, entry.im));
        }
    }
    std::fs::create_dir_all("crates/core/fixtures").unwrap();
    std::fs::write("crates/core/fixtures/spin_boson_fig2_o12.csv", out).unwrap();
    println!("fixture written");
}
