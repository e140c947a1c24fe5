//! Evaluation metrics: average Frobenius error, Uhlmann fidelity, l₁
//! coherence, two-qubit concurrence, and observable expectations.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigendecompose, hermitian_sqrt, kron, ComplexMatrix};
use crate::oracle::Trajectory;

/// Eigenvalues below this floor mark a genuinely unphysical state; anything
/// between the floor and zero is treated as round-off and clamped.
const EIGENVALUE_FLOOR: f64 = -1e-6;

/// (1/f)·Σ_i ‖pred(t_i) − ref(t_i)‖_F over all sample points.
pub fn avg_frobenius_error(pred: &Trajectory, reference: &Trajectory) -> Result<f64> {
    if !pred.grid.matches(&reference.grid) {
        return Err(Error::GridMismatch { reason: "trajectories live on different grids".into() });
    }
    let n = pred.len();
    let mut acc = 0.0;
    for (p, r) in pred.values.iter().zip(&reference.values) {
        acc += p.sub(r)?.frobenius_norm();
    }
    Ok(acc / n as f64)
}

/// Clamp round-off negatives, renormalize to unit trace, and rebuild.
fn sanitize_density(rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    let herm = rho.add(&rho.adjoint())?.scale(Complex64::new(0.5, 0.0));
    let spectrum = hermitian_eigendecompose(&herm)?;
    let mut clamped = Vec::with_capacity(spectrum.eigenvalues.len());
    for &lambda in &spectrum.eigenvalues {
        if lambda < EIGENVALUE_FLOOR {
            return Err(Error::NegativeEigenvalue { value: lambda });
        }
        clamped.push(lambda.max(0.0));
    }
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidConfig("density matrix has no positive weight".into()));
    }
    let d = herm.dim();
    let v = &spectrum.eigenvectors;
    let mut out = ComplexMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &lambda) in clamped.iter().enumerate() {
                acc += v.get(i, k) * (lambda / total) * v.get(j, k).conj();
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// Uhlmann fidelity [tr √(√p q √p)]² of two density matrices.
pub fn fidelity(p: &ComplexMatrix, q: &ComplexMatrix) -> Result<f64> {
    let p = sanitize_density(p)?;
    let q = sanitize_density(q)?;
    let sp = hermitian_sqrt(&p)?;
    let inner = sp.matmul(&q)?.matmul(&sp)?;
    let spectrum = hermitian_eigendecompose(&inner)?;
    let root_sum: f64 = spectrum.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    Ok(root_sum * root_sum)
}

/// Mean fidelity along two density-matrix trajectories.
pub fn avg_fidelity(pred: &Trajectory, reference: &Trajectory) -> Result<f64> {
    if !pred.grid.matches(&reference.grid) {
        return Err(Error::GridMismatch { reason: "trajectories live on different grids".into() });
    }
    let mut acc = 0.0;
    for (p, r) in pred.values.iter().zip(&reference.values) {
        acc += fidelity(p, r)?;
    }
    Ok(acc / pred.len() as f64)
}

/// l₁ coherence Σ_{i≠j} |ρ_ij|.
pub fn coherence_l1(rho: &ComplexMatrix) -> f64 {
    let d = rho.dim();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                acc += rho.get(i, j).norm();
            }
        }
    }
    acc
}

/// Two-qubit concurrence max(0, √λ₁ − √λ₂ − √λ₃ − √λ₄) from the spectrum of
/// ρ·(σ_y⊗σ_y)ρ*(σ_y⊗σ_y), computed through the Hermitian similarity
/// √ρ·ρ̃·√ρ so the eigensolver only ever sees Hermitian input.
pub fn concurrence(rho: &ComplexMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
    }
    let rho = sanitize_density(rho)?;
    let yy = kron(&ComplexMatrix::pauli_y(), &ComplexMatrix::pauli_y())?;
    let rho_tilde = yy.matmul(&rho.conjugate())?.matmul(&yy)?;
    let sqrt_rho = hermitian_sqrt(&rho)?;
    let m = sqrt_rho.matmul(&rho_tilde)?.matmul(&sqrt_rho)?;
    let spectrum = hermitian_eigendecompose(&m)?;
    let roots: Vec<f64> = spectrum.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let c = roots[0] - roots[1] - roots[2] - roots[3];
    Ok(c.max(0.0))
}

/// Re tr(ρ·obs); errors if the imaginary part betrays non-Hermitian inputs.
pub fn expectation(rho: &ComplexMatrix, observable: &ComplexMatrix) -> Result<f64> {
    let tr = rho.matmul(observable)?.trace();
    if tr.im.abs() > 1e-10 {
        return Err(Error::NotHermitian { residual: tr.im.abs() });
    }
    Ok(tr.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::TimeGrid;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bell_state() -> ComplexMatrix {
        // (|00⟩ + |11⟩)/√2 as a density matrix.
        let mut m = ComplexMatrix::zeros(4);
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            m.set(i, j, c(0.5, 0.0));
        }
        m
    }

    fn ket00() -> ComplexMatrix {
        ComplexMatrix::diag(&[1.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn avg_frobenius_error_examples() {
        let grid = TimeGrid::new(5, 1.0).unwrap();
        let values: Vec<ComplexMatrix> = (0..5)
            .map(|i| ComplexMatrix::diag(&[i as f64, 1.0 - i as f64]))
            .collect();
        let a = Trajectory::new(grid.clone(), values.clone()).unwrap();
        let b = Trajectory::new(grid.clone(), values.clone()).unwrap();
        assert_eq!(avg_frobenius_error(&a, &b).unwrap(), 0.0);

        let eps = 1e-3;
        let shifted: Vec<ComplexMatrix> = values
            .iter()
            .map(|m| m.add(&ComplexMatrix::identity(2).scale(c(eps, 0.0))).unwrap())
            .collect();
        let s = Trajectory::new(grid, shifted).unwrap();
        let got = avg_frobenius_error(&s, &a).unwrap();
        assert!((got - eps * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        let ket0 = ComplexMatrix::diag(&[1.0, 0.0]);
        let ket1 = ComplexMatrix::diag(&[0.0, 1.0]);
        let mixed = ComplexMatrix::diag(&[0.5, 0.5]);
        assert!((fidelity(&ket0, &ket0).unwrap() - 1.0).abs() < 1e-10);
        assert!(fidelity(&ket0, &ket1).unwrap() < 1e-12);
        assert!((fidelity(&ket0, &mixed).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fidelity_rejects_unphysical_states() {
        let bad = ComplexMatrix::diag(&[1.5, -0.5]);
        assert!(matches!(fidelity(&bad, &bad), Err(Error::NegativeEigenvalue { .. })));
    }

    #[test]
    fn coherence_examples() {
        assert_eq!(coherence_l1(&ComplexMatrix::diag(&[0.3, 0.7])), 0.0);
        assert!((coherence_l1(&bell_state()) - 1.0).abs() < 1e-15);
        let plus = ComplexMatrix::from_parts(2, &[(0.5, 0.0), (0.5, 0.0), (0.5, 0.0), (0.5, 0.0)])
            .unwrap();
        assert!((coherence_l1(&plus) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn concurrence_examples() {
        assert!((concurrence(&bell_state()).unwrap() - 1.0).abs() < 1e-8);
        assert!(concurrence(&ket00()).unwrap() < 1e-8);
        let mixed = ComplexMatrix::identity(4).scale(c(0.25, 0.0));
        assert!(concurrence(&mixed).unwrap() < 1e-8);
    }

    #[test]
    fn expectation_examples() {
        let sz = ComplexMatrix::pauli_z();
        assert_eq!(expectation(&ComplexMatrix::diag(&[1.0, 0.0]), &sz).unwrap(), 1.0);
        assert_eq!(expectation(&ComplexMatrix::diag(&[0.5, 0.5]), &sz).unwrap(), 0.0);
        let plus = ComplexMatrix::from_parts(2, &[(0.5, 0.0), (0.5, 0.0), (0.5, 0.0), (0.5, 0.0)])
            .unwrap();
        assert!((expectation(&plus, &ComplexMatrix::pauli_x()).unwrap() - 1.0).abs() < 1e-15);
    }

    fn arb_density(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_map(move |parts| {
            // B†B + εI normalized: always a valid density matrix.
            let b = ComplexMatrix::from_parts(dim, &parts).unwrap();
            let psd = b.adjoint().matmul(&b).unwrap();
            let reg = psd.add(&ComplexMatrix::identity(dim).scale(c(1e-3, 0.0))).unwrap();
            let tr = reg.trace().re;
            reg.scale(c(1.0 / tr, 0.0))
        })
    }

    fn random_single_qubit_unitary(angles: (f64, f64, f64)) -> ComplexMatrix {
        let (a, b, g) = angles;
        // Rz(a)·Ry(b)·Rz(g) Euler form.
        let (ca, sa) = ((a / 2.0).cos(), (a / 2.0).sin());
        let (cb, sb) = ((b / 2.0).cos(), (b / 2.0).sin());
        let (cg, sg) = ((g / 2.0).cos(), (g / 2.0).sin());
        let rz1 = ComplexMatrix::from_entries(
            2,
            vec![c(ca, -sa), c(0.0, 0.0), c(0.0, 0.0), c(ca, sa)],
        )
        .unwrap();
        let ry = ComplexMatrix::from_entries(2, vec![c(cb, 0.0), c(-sb, 0.0), c(sb, 0.0), c(cb, 0.0)])
            .unwrap();
        let rz2 = ComplexMatrix::from_entries(
            2,
            vec![c(cg, -sg), c(0.0, 0.0), c(0.0, 0.0), c(cg, sg)],
        )
        .unwrap();
        rz1.matmul(&ry).unwrap().matmul(&rz2).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fidelity_is_symmetric_and_bounded(p in arb_density(2), q in arb_density(2)) {
            let fpq = fidelity(&p, &q).unwrap();
            let fqp = fidelity(&q, &p).unwrap();
            prop_assert!((fpq - fqp).abs() <= 1e-9);
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&fpq));
            prop_assert!((fidelity(&p, &p).unwrap() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn concurrence_is_invariant_under_local_unitaries(
            rho in arb_density(4),
            a1 in (0.0f64..6.28, 0.0f64..3.14, 0.0f64..6.28),
            a2 in (0.0f64..6.28, 0.0f64..3.14, 0.0f64..6.28),
        ) {
            let u = kron(&random_single_qubit_unitary(a1), &random_single_qubit_unitary(a2)).unwrap();
            let rotated = u.matmul(&rho).unwrap().matmul(&u.adjoint()).unwrap();
            let c0 = concurrence(&rho).unwrap();
            let c1 = concurrence(&rotated).unwrap();
            prop_assert!((c0 - c1).abs() <= 1e-8, "C changed {c0} -> {c1}");
        }
    }
}
