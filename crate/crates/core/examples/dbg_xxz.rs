use fpinn::linalg::ComplexMatrix;
use fpinn::models::{xxz_spec, BathParams};
use fpinn::oracle::{integrate_system, TimeGrid};
use fpinn::training::{coherence_l1, concurrence};
use num_complex::Complex64;

fn bell() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(4);
    for (i, j) in [(0usize, 0usize), (0, 3), (3, 0), (3, 3)] {
        m.set(i, j, Complex64::new(0.5, 0.0));
    }
    m
}

fn main() {
    let spec = xxz_spec(2.0, 0.5, BathParams::new(0.1, 0.4, 20.0).unwrap());
    let grid = TimeGrid::new(401, 6.0).unwrap();
    for (name, rho0) in [("bell", bell()), ("ket00", ComplexMatrix::diag(&[1.0, 0.0, 0.0, 0.0]))] {
        let (o, q, rho) = integrate_system(&spec, &rho0, &grid, 8).unwrap();
        let conc: Vec<f64> = rho.values.iter().map(|m| concurrence(m).unwrap()).collect();
        let coh: Vec<f64> = rho.values.iter().map(coherence_l1).collect();
        let extrema: Vec<(usize, f64)> = (1..conc.len() - 1)
            .filter(|&i| (conc[i] - conc[i - 1]) * (conc[i + 1] - conc[i]) < 0.0)
            .map(|i| (i, conc[i]))
            .collect();
        println!(
            "{name}: C(0)={:.9} C(end)={:.4} maxC={:.4} extrema(first 6)={:?}",
            conc[0], conc.last().unwrap(),
            conc.iter().cloned().fold(0.0f64, f64::max),
            &extrema.iter().take(6).collect::<Vec<_>>(),
        );
        println!("   coherence: start {:.4} max {:.4} end {:.4}", coh[0], coh.iter().cloned().fold(0.0f64, f64::max), coh.last().unwrap());
        // operator feature TV for tau sanity on the finer grid
        let of: Vec<Vec<f64>> = o.values.iter().map(|m| spec.o_layout.to_features(m).unwrap()).collect();
        let tv: f64 = (1..of.len()).map(|i| of[i].iter().zip(&of[i-1]).map(|(a,b)| (a-b).abs()).sum::<f64>()).sum::<f64>() / (of.len()-1) as f64;
        println!("   O-feature TV on 401 grid: {tv:.5}; O max |entry| {:.4}, Q max {:.4}",
            o.values.iter().flat_map(|m| m.entries().iter().map(|c| c.norm())).fold(0.0f64, f64::max),
            q.values.iter().flat_map(|m| m.entries().iter().map(|c| c.norm())).fold(0.0f64, f64::max));
    }
}
