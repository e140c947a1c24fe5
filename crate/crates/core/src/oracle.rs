//! Fourth-order Runge–Kutta reference integration of the coupled system
//! (Ō, Q̄, ρ). Every error metric in the crate is measured against these
//! trajectories.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigendecompose, ComplexMatrix};
use crate::models::{rhs_o, rhs_q, rhs_rho, SystemSpec};

/// Uniform sampling grid t_i = i·T_tot/(N_t−1) on [0, T_tot].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    n_points: usize,
    t_total: f64,
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(n_points: usize, t_total: f64) -> Result<Self> {
        if n_points == 0 {
            return Err(Error::InvalidConfig("time grid needs at least one point".into()));
        }
        if !(t_total > 0.0) {
            return Err(Error::InvalidConfig(format!("total time must be positive, got {t_total}")));
        }
        let times = if n_points == 1 {
            vec![0.0]
        } else {
            (0..n_points).map(|i| i as f64 * t_total / (n_points - 1) as f64).collect()
        };
        Ok(Self { n_points, t_total, times })
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_total(&self) -> f64 {
        self.t_total
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Spacing between adjacent samples (zero for a single-point grid).
    pub fn step(&self) -> f64 {
        if self.n_points < 2 { 0.0 } else { self.t_total / (self.n_points - 1) as f64 }
    }

    pub fn matches(&self, other: &TimeGrid) -> bool {
        self.n_points == other.n_points && (self.t_total - other.t_total).abs() <= 1e-12 * self.t_total.max(1.0)
    }
}

/// Matrix-valued quantity sampled on a time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub values: Vec<ComplexMatrix>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, values: Vec<ComplexMatrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                reason: format!("{} values on a {}-point grid", values.len(), grid.len()),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Catmull-Rom interpolation at an arbitrary time inside the grid span.
    /// Ghost points beyond the ends are cubic-extrapolated so the boundary
    /// intervals keep the interior order instead of dropping to quadratic.
    pub fn sample_catmull_rom(&self, t: f64) -> ComplexMatrix {
        let n = self.values.len();
        if n == 1 {
            return self.values[0].clone();
        }
        let h = self.grid.step();
        let u = (t / h).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        let x = u - i as f64;
        let ghost = |a: &ComplexMatrix, b: &ComplexMatrix, c: &ComplexMatrix, d: &ComplexMatrix| {
            // 4a − 6b + 4c − d: exact for cubics.
            a.scale(Complex64::new(4.0, 0.0))
                .sub(&b.scale(Complex64::new(6.0, 0.0)))
                .and_then(|m| m.add(&c.scale(Complex64::new(4.0, 0.0))))
                .and_then(|m| m.sub(d))
                .expect("same dim")
        };
        let grab = |k: isize| -> ComplexMatrix {
            if k < 0 && n >= 4 {
                ghost(&self.values[0], &self.values[1], &self.values[2], &self.values[3])
            } else if k > (n - 1) as isize && n >= 4 {
                ghost(&self.values[n - 1], &self.values[n - 2], &self.values[n - 3], &self.values[n - 4])
            } else {
                self.values[k.clamp(0, (n - 1) as isize) as usize].clone()
            }
        };
        let (p0, p1, p2, p3) = (grab(i as isize - 1), grab(i as isize), grab(i as isize + 1), grab(i as isize + 2));
        let (p0, p1, p2, p3) = (&p0, &p1, &p2, &p3);
        let dim = p1.dim();
        let mut out = ComplexMatrix::zeros(dim);
        let (x2, x3) = (x * x, x * x * x);
        for r in 0..dim {
            for c in 0..dim {
                let (a0, a1, a2, a3) = (p0.get(r, c), p1.get(r, c), p2.get(r, c), p3.get(r, c));
                let v = 0.5
                    * (2.0 * a1
                        + (a2 - a0) * x
                        + (2.0 * a0 - 5.0 * a1 + 4.0 * a2 - a3) * x2
                        + (3.0 * a1 - a0 - 3.0 * a2 + a3) * x3);
                out.set(r, c, v);
            }
        }
        out
    }
}

fn check_finite(state: &[ComplexMatrix], t: f64) -> Result<()> {
    for m in state {
        if !m.is_finite() {
            return Err(Error::NonFinite { context: format!("RK4 state at t = {t:.6}") });
        }
    }
    Ok(())
}

/// One classical RK4 update of a stacked matrix-valued state.
pub fn rk4_step<F>(state: &[ComplexMatrix], t: f64, dt: f64, rhs: &F) -> Result<Vec<ComplexMatrix>>
where
    F: Fn(f64, &[ComplexMatrix]) -> Result<Vec<ComplexMatrix>>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("RK4 step requires dt > 0, got {dt}")));
    }
    let half = Complex64::new(dt / 2.0, 0.0);
    let full = Complex64::new(dt, 0.0);
    let k1 = rhs(t, state)?;
    let mid1: Vec<ComplexMatrix> =
        state.iter().zip(&k1).map(|(y, k)| y.add(&k.scale(half)).expect("same dim")).collect();
    let k2 = rhs(t + dt / 2.0, &mid1)?;
    let mid2: Vec<ComplexMatrix> =
        state.iter().zip(&k2).map(|(y, k)| y.add(&k.scale(half)).expect("same dim")).collect();
    let k3 = rhs(t + dt / 2.0, &mid2)?;
    let end: Vec<ComplexMatrix> =
        state.iter().zip(&k3).map(|(y, k)| y.add(&k.scale(full)).expect("same dim")).collect();
    let k4 = rhs(t + dt, &end)?;

    let sixth = Complex64::new(dt / 6.0, 0.0);
    let two = Complex64::new(2.0, 0.0);
    let mut next = Vec::with_capacity(state.len());
    for i in 0..state.len() {
        let incr = k1[i]
            .add(&k2[i].scale(two))
            .and_then(|s| s.add(&k3[i].scale(two)))
            .and_then(|s| s.add(&k4[i]))
            .expect("same dim");
        next.push(state[i].add(&incr.scale(sixth)).expect("same dim"));
    }
    check_finite(&next, t + dt)?;
    Ok(next)
}

const RHO0_TOL: f64 = 1e-10;
const PSD_WARN_FLOOR: f64 = -1e-6;

fn validate_initial_density(rho0: &ComplexMatrix) -> Result<()> {
    let residual = rho0.hermiticity_residual();
    if residual > RHO0_TOL {
        return Err(Error::NotHermitian { residual });
    }
    let tr = rho0.trace();
    if (tr - Complex64::new(1.0, 0.0)).norm() > RHO0_TOL {
        return Err(Error::InvalidConfig(format!("initial state must have unit trace, got {tr}")));
    }
    let spectrum = hermitian_eigendecompose(rho0)?;
    if let Some(&min) = spectrum.eigenvalues.last() {
        if min < -RHO0_TOL {
            return Err(Error::NegativeEigenvalue { value: min });
        }
    }
    Ok(())
}

fn warn_if_not_psd(rho: &ComplexMatrix, t: f64, warned: &mut bool) {
    if *warned {
        return;
    }
    if let Ok(spectrum) = hermitian_eigendecompose(&rho.add(&rho.adjoint()).expect("same dim").scale(Complex64::new(0.5, 0.0))) {
        if let Some(&min) = spectrum.eigenvalues.last() {
            if min < PSD_WARN_FLOOR {
                eprintln!(
                    "warning: density matrix eigenvalue {min:.3e} below {PSD_WARN_FLOOR:.0e} at t = {t:.4}; \
                     the weak-coupling master equation is not guaranteed completely positive"
                );
                *warned = true;
            }
        }
    }
}

/// Default RK4 sub-intervals per grid interval.
pub const DEFAULT_SUBSTEPS: usize = 8;

/// Jointly integrate (Ō, Q̄, ρ) from Ō(0) = Q̄(0) = 0 and ρ(0) = rho0,
/// recording values at the grid points.
pub fn integrate_system(
    spec: &SystemSpec,
    rho0: &ComplexMatrix,
    grid: &TimeGrid,
    substeps: usize,
) -> Result<(Trajectory, Trajectory, Trajectory)> {
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    validate_initial_density(rho0)?;
    if rho0.dim() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: rho0.dim() });
    }

    let rhs = |_t: f64, state: &[ComplexMatrix]| -> Result<Vec<ComplexMatrix>> {
        let (o, q, rho) = (&state[0], &state[1], &state[2]);
        Ok(vec![rhs_o(o, q, spec)?, rhs_q(o, q, spec)?, rhs_rho(rho, o, q, spec)?])
    };

    let zero = ComplexMatrix::zeros(spec.dim);
    let mut state = vec![zero.clone(), zero, rho0.clone()];
    let mut o_values = vec![state[0].clone()];
    let mut q_values = vec![state[1].clone()];
    let mut rho_values = vec![state[2].clone()];
    let mut warned = false;

    for i in 1..grid.len() {
        let t_start = grid.times()[i - 1];
        let dt = (grid.times()[i] - t_start) / substeps as f64;
        for s in 0..substeps {
            state = rk4_step(&state, t_start + s as f64 * dt, dt, &rhs)?;
        }
        warn_if_not_psd(&state[2], grid.times()[i], &mut warned);
        o_values.push(state[0].clone());
        q_values.push(state[1].clone());
        rho_values.push(state[2].clone());
    }

    Ok((
        Trajectory::new(grid.clone(), o_values)?,
        Trajectory::new(grid.clone(), q_values)?,
        Trajectory::new(grid.clone(), rho_values)?,
    ))
}

/// Integrate the master equation alone, reading Ō and Q̄ from prior
/// trajectories by cubic interpolation. Mirrors the two-phase network
/// pipeline where operator predictions feed the density-matrix stage.
pub fn integrate_rho_with_priors(
    spec: &SystemSpec,
    rho0: &ComplexMatrix,
    o_prior: &Trajectory,
    q_prior: &Trajectory,
    grid: &TimeGrid,
    substeps: usize,
) -> Result<Trajectory> {
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    validate_initial_density(rho0)?;
    if !o_prior.grid.matches(grid) || !q_prior.grid.matches(grid) {
        return Err(Error::GridMismatch {
            reason: "prior trajectories must live on the integration grid".into(),
        });
    }

    let rhs = |t: f64, state: &[ComplexMatrix]| -> Result<Vec<ComplexMatrix>> {
        let o = o_prior.sample_catmull_rom(t);
        let q = q_prior.sample_catmull_rom(t);
        Ok(vec![rhs_rho(&state[0], &o, &q, spec)?])
    };

    let mut state = vec![rho0.clone()];
    let mut values = vec![state[0].clone()];
    for i in 1..grid.len() {
        let t_start = grid.times()[i - 1];
        let dt = (grid.times()[i] - t_start) / substeps as f64;
        for s in 0..substeps {
            state = rk4_step(&state, t_start + s as f64 * dt, dt, &rhs)?;
        }
        values.push(state[0].clone());
    }
    Trajectory::new(grid.clone(), values)
}

/// Tr(ρσ_z)-style real expectation used by oracle diagnostics.
pub fn real_expectation(rho: &ComplexMatrix, observable: &ComplexMatrix) -> Result<f64> {
    let tr = rho.matmul(observable)?.trace();
    Ok(tr.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{spin_boson_spec, BathParams};

    fn fig2_spec() -> SystemSpec {
        spin_boson_spec(BathParams::new(0.1, 0.3, 20.0).unwrap())
    }

    fn ket0() -> ComplexMatrix {
        ComplexMatrix::diag(&[1.0, 0.0])
    }

    #[test]
    fn rk4_scalar_exponential_step() {
        // dy/dt = y, y₀ = 1, dt = 0.1: k₁ = 1, k₂ = 1.05, k₃ = 1.0525,
        // k₄ = 1.10525, so y₁ = 1 + 6.31025/60.
        let y0 = vec![ComplexMatrix::from_parts(1, &[(1.0, 0.0)]).unwrap()];
        let rhs = |_t: f64, s: &[ComplexMatrix]| Ok(vec![s[0].clone()]);
        let y1 = rk4_step(&y0, 0.0, 0.1, &rhs).unwrap();
        let got = y1[0].get(0, 0).re;
        assert!((got - (1.0 + 6.31025 / 60.0)).abs() < 1e-15);
        assert!((got - 1.1051708333333334).abs() < 1e-15);
    }

    #[test]
    fn rk4_zero_rhs_keeps_state() {
        let y0 = vec![ComplexMatrix::pauli_x()];
        let rhs = |_t: f64, s: &[ComplexMatrix]| Ok(vec![ComplexMatrix::zeros(s[0].dim())]);
        let y1 = rk4_step(&y0, 0.0, 0.5, &rhs).unwrap();
        assert!(y1[0].sub(&y0[0]).unwrap().frobenius_norm() == 0.0);
    }

    #[test]
    fn rk4_constant_rhs_is_exact() {
        let y0 = vec![ComplexMatrix::zeros(2)];
        let c = ComplexMatrix::from_parts(2, &[(0.3, -0.1), (0.0, 1.0), (2.0, 0.0), (0.0, 0.0)])
            .unwrap();
        let rhs = |_t: f64, _s: &[ComplexMatrix]| Ok(vec![c.clone()]);
        let y1 = rk4_step(&y0, 0.0, 0.25, &rhs).unwrap();
        let want = c.scale(Complex64::new(0.25, 0.0));
        assert!(y1[0].sub(&want).unwrap().frobenius_norm() < 1e-16);
    }

    #[test]
    fn rk4_rejects_nonpositive_dt() {
        let y0 = vec![ComplexMatrix::zeros(1)];
        let rhs = |_t: f64, s: &[ComplexMatrix]| Ok(s.to_vec());
        assert!(rk4_step(&y0, 0.0, 0.0, &rhs).is_err());
    }

    #[test]
    fn single_point_grid_returns_initial_values() {
        let grid = TimeGrid::new(1, 6.0).unwrap();
        let (o, q, rho) = integrate_system(&fig2_spec(), &ket0(), &grid, 8).unwrap();
        assert_eq!(o.len(), 1);
        assert_eq!(q.len(), 1);
        assert_eq!(o.values[0].frobenius_norm(), 0.0);
        assert_eq!(q.values[0].frobenius_norm(), 0.0);
        assert!(rho.values[0].sub(&ket0()).unwrap().frobenius_norm() == 0.0);
    }

    #[test]
    fn auxiliary_operators_start_at_exact_zero() {
        let grid = TimeGrid::new(11, 1.0).unwrap();
        let (o, q, _) = integrate_system(&fig2_spec(), &ket0(), &grid, 4).unwrap();
        assert_eq!(o.values[0].frobenius_norm(), 0.0);
        assert_eq!(q.values[0].frobenius_norm(), 0.0);
    }

    #[test]
    fn oracle_preserves_trace_and_hermiticity() {
        let grid = TimeGrid::new(201, 6.0).unwrap();
        let (_, _, rho) = integrate_system(&fig2_spec(), &ket0(), &grid, 8).unwrap();
        for m in &rho.values {
            assert!((m.trace() - Complex64::new(1.0, 0.0)).norm() <= 1e-9);
            assert!(m.sub(&m.adjoint()).unwrap().frobenius_norm() <= 1e-9);
        }
    }

    #[test]
    fn sigma_z_expectation_oscillates_and_damps() {
        let grid = TimeGrid::new(201, 6.0).unwrap();
        let (_, _, rho) = integrate_system(&fig2_spec(), &ket0(), &grid, 8).unwrap();
        let sz = ComplexMatrix::pauli_z();
        let curve: Vec<f64> =
            rho.values.iter().map(|m| real_expectation(m, &sz).unwrap()).collect();
        assert!(curve[0] == 1.0);
        // Information backflow: the relaxation is non-monotone, with several
        // local extrema whose amplitude shrinks over time.
        let extrema: Vec<(usize, f64)> = (1..curve.len() - 1)
            .filter(|&i| {
                (curve[i] - curve[i - 1]) * (curve[i + 1] - curve[i]) < 0.0
            })
            .map(|i| (i, curve[i]))
            .collect();
        assert!(extrema.len() >= 2, "expected backflow extrema, got {}", extrema.len());
        // Overall decay: the curve ends well below its initial value.
        assert!(curve[curve.len() - 1] < 0.5);
    }

    #[test]
    fn joint_and_prior_based_integration_agree() {
        let grid = TimeGrid::new(201, 6.0).unwrap();
        let spec = fig2_spec();
        let (o, q, rho_joint) = integrate_system(&spec, &ket0(), &grid, 16).unwrap();
        let rho_prior = integrate_rho_with_priors(&spec, &ket0(), &o, &q, &grid, 16).unwrap();
        for (a, b) in rho_joint.values.iter().zip(&rho_prior.values) {
            assert!(a.sub(b).unwrap().frobenius_norm() <= 1e-6);
        }
    }

    #[test]
    fn zero_priors_give_unitary_evolution() {
        let grid = TimeGrid::new(51, 2.0).unwrap();
        let spec = fig2_spec();
        let zeros = Trajectory::new(grid.clone(), vec![ComplexMatrix::zeros(2); grid.len()]).unwrap();
        // Maximally mixed state commutes with σ_z: constant trajectory.
        let mixed = ComplexMatrix::diag(&[0.5, 0.5]);
        let rho = integrate_rho_with_priors(&spec, &mixed, &zeros, &zeros, &grid, 8).unwrap();
        for m in &rho.values {
            assert!(m.sub(&mixed).unwrap().frobenius_norm() <= 1e-13);
        }
    }

    #[test]
    fn prior_grid_mismatch_errors() {
        let grid = TimeGrid::new(51, 2.0).unwrap();
        let other = TimeGrid::new(41, 2.0).unwrap();
        let spec = fig2_spec();
        let zeros = Trajectory::new(other.clone(), vec![ComplexMatrix::zeros(2); other.len()]).unwrap();
        let err = integrate_rho_with_priors(&spec, &ket0(), &zeros, &zeros, &grid, 8);
        assert!(matches!(err, Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn o12_regression_fixture() {
        // The fixture was produced by a fine-step (substeps = 64) oracle run
        // before the training stack was built; the content hash fails loudly
        // if the file is ever regenerated with different dynamics.
        let raw = include_str!("../fixtures/spin_boson_fig2_o12.csv");
        let digest = {
            use sha2::{Digest, Sha256};
            let mut h = Sha256::new();
            h.update(raw.as_bytes());
            format!("{:x}", h.finalize())
        };
        assert_eq!(digest, "099c5098f7b4eb6082d9f491d938737dc4ce88871a28219235a70aab7cfde993");

        let mut expected = Vec::new();
        for line in raw.lines() {
            if line.starts_with('#') || line.starts_with('t') || line.is_empty() {
                continue;
            }
            let cols: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            expected.push((cols[0], Complex64::new(cols[1], cols[2])));
        }
        assert_eq!(expected.len(), 3);

        let grid = TimeGrid::new(601, 6.0).unwrap();
        let (o, _, _) = integrate_system(&fig2_spec(), &ket0(), &grid, 64).unwrap();
        for (t, want) in expected {
            let i = grid.times().iter().position(|x| (x - t).abs() < 1e-12).unwrap();
            let got = o.values[i].get(0, 1);
            assert!(
                (got - want).norm() < 1e-12,
                "O12({t}) = {got} drifted from fixture {want}"
            );
        }
    }

    #[test]
    fn halving_substeps_shows_fourth_order() {
        let grid = TimeGrid::new(21, 6.0).unwrap();
        let spec = fig2_spec();
        let reference = integrate_system(&spec, &ket0(), &grid, 128).unwrap();
        let endpoint_err = |substeps: usize| -> f64 {
            let (o, q, rho) = integrate_system(&spec, &ket0(), &grid, substeps).unwrap();
            let last = grid.len() - 1;
            o.values[last].sub(&reference.0.values[last]).unwrap().frobenius_norm()
                + q.values[last].sub(&reference.1.values[last]).unwrap().frobenius_norm()
                + rho.values[last].sub(&reference.2.values[last]).unwrap().frobenius_norm()
        };
        let ratio = endpoint_err(4) / endpoint_err(8);
        assert!(
            (12.0..=20.0).contains(&ratio),
            "expected ~16x error reduction per halving, got {ratio:.2}"
        );
    }
}
