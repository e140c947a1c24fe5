//! Benchmark quantum systems and the right-hand sides of the coupled
//! evolution equations.
//!
//! Two systems are provided: a two-level spin-boson model and a dissipative
//! two-qubit XXZ chain. Each carries the maps between real network feature
//! vectors and the complex operators / density matrices they parameterize.
//!
//! Conventions: |0⟩ = (1, 0) with σ_z|0⟩ = +|0⟩; the two-qubit basis is
//! ordered |00⟩, |01⟩, |10⟩, |11⟩; σ⁻ = |1⟩⟨0| lowers the σ_z eigenvalue.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{commutator, kron, ComplexMatrix};

/// Bath parameters of the non-Markovian environment (ħ = k_B = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathParams {
    /// System–bath coupling strength Γ.
    pub coupling: f64,
    /// Bath characteristic frequency γ; 1/γ is the environmental memory time.
    pub char_freq: f64,
    /// Bath temperature T.
    pub temperature: f64,
}

impl BathParams {
    pub fn new(coupling: f64, char_freq: f64, temperature: f64) -> Result<Self> {
        if !(coupling > 0.0 && char_freq > 0.0 && temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bath parameters must be positive: Gamma={coupling}, gamma={char_freq}, T={temperature}"
            )));
        }
        Ok(Self { coupling, char_freq, temperature })
    }

    /// Coefficient (ΓTγ/2 − iΓγ²/2) multiplying L in the Ō equation.
    pub fn o_source_coefficient(&self) -> Complex64 {
        Complex64::new(
            self.coupling * self.temperature * self.char_freq / 2.0,
            -self.coupling * self.char_freq * self.char_freq / 2.0,
        )
    }

    /// Coefficient ΓTγ/2 multiplying L† in the Q̄ equation.
    pub fn q_source_coefficient(&self) -> Complex64 {
        Complex64::new(self.coupling * self.temperature * self.char_freq / 2.0, 0.0)
    }
}

/// One matrix position fed by a (re, im) feature pair. Tied positions repeat
/// the same feature indices at several (row, col) slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub row: usize,
    pub col: usize,
    pub re_feature: usize,
    pub im_feature: usize,
}

/// Real-linear map between a feature vector and a complex operator.
/// Entries not named by any placement are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    dim: usize,
    n_features: usize,
    placements: Vec<Placement>,
}

impl FeatureLayout {
    pub fn new(dim: usize, n_features: usize, placements: Vec<Placement>) -> Result<Self> {
        let mut used = vec![false; n_features];
        for p in &placements {
            if p.row >= dim || p.col >= dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.row.max(p.col) + 1 });
            }
            if p.re_feature >= n_features || p.im_feature >= n_features {
                return Err(Error::LayoutMismatch {
                    expected: n_features,
                    got: p.re_feature.max(p.im_feature) + 1,
                });
            }
            used[p.re_feature] = true;
            used[p.im_feature] = true;
        }
        if !used.iter().all(|&u| u) {
            return Err(Error::InvalidConfig("layout leaves some features unused".into()));
        }
        Ok(Self { dim, n_features, placements })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    /// Reconstruct the operator from a feature vector.
    pub fn to_matrix(&self, features: &[f64]) -> Result<ComplexMatrix> {
        if features.len() != self.n_features {
            return Err(Error::LayoutMismatch { expected: self.n_features, got: features.len() });
        }
        let mut m = ComplexMatrix::zeros(self.dim);
        for p in &self.placements {
            m.set(p.row, p.col, Complex64::new(features[p.re_feature], features[p.im_feature]));
        }
        Ok(m)
    }

    /// Read features back off a matrix (first placement of each feature wins).
    pub fn to_features(&self, m: &ComplexMatrix) -> Result<Vec<f64>> {
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: m.dim() });
        }
        let mut features = vec![0.0; self.n_features];
        let mut seen = vec![false; self.n_features];
        for p in &self.placements {
            let entry = m.get(p.row, p.col);
            if !seen[p.re_feature] {
                features[p.re_feature] = entry.re;
                seen[p.re_feature] = true;
            }
            if !seen[p.im_feature] {
                features[p.im_feature] = entry.im;
                seen[p.im_feature] = true;
            }
        }
        Ok(features)
    }

    /// Column labels per feature index, e.g. `re_12` for Re of entry (1,2)
    /// in 1-based row/column numbering.
    pub fn labels(&self) -> Vec<String> {
        let mut labels = vec![String::new(); self.n_features];
        for p in &self.placements {
            if labels[p.re_feature].is_empty() {
                labels[p.re_feature] = format!("re_{}{}", p.row + 1, p.col + 1);
            }
            if labels[p.im_feature].is_empty() {
                labels[p.im_feature] = format!("im_{}{}", p.row + 1, p.col + 1);
            }
        }
        labels
    }

    /// Write the reconstruction into an interleaved real buffer
    /// [re₀₀, im₀₀, re₀₁, …] of length 2·dim².
    pub fn apply_interleaved(&self, features: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), 2 * self.dim * self.dim);
        out.fill(0.0);
        for p in &self.placements {
            let base = 2 * (p.row * self.dim + p.col);
            out[base] = features[p.re_feature];
            out[base + 1] = features[p.im_feature];
        }
    }

    /// Transpose of `apply_interleaved`: accumulate a matrix-space gradient
    /// back onto feature space.
    pub fn accumulate_transposed(&self, grad_matrix: &[f64], grad_features: &mut [f64]) {
        debug_assert_eq!(grad_matrix.len(), 2 * self.dim * self.dim);
        for p in &self.placements {
            let base = 2 * (p.row * self.dim + p.col);
            grad_features[p.re_feature] += grad_matrix[base];
            grad_features[p.im_feature] += grad_matrix[base + 1];
        }
    }
}

/// Density-matrix parametrizations. Both produce exactly Hermitian,
/// trace-one matrices by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityMode {
    /// Two-level triplet {ρ₁₁, Re ρ₁₂, Im ρ₁₂}.
    TwoLevelTriplet,
    /// d = 4: four diagonal features (mean-shifted onto trace 1) plus
    /// re/im of the six upper-triangle entries.
    HermitianTraceNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DensityLayout {
    pub mode: DensityMode,
}

impl DensityLayout {
    pub fn dim(&self) -> usize {
        match self.mode {
            DensityMode::TwoLevelTriplet => 2,
            DensityMode::HermitianTraceNormalized => 4,
        }
    }

    pub fn n_features(&self) -> usize {
        match self.mode {
            DensityMode::TwoLevelTriplet => 3,
            DensityMode::HermitianTraceNormalized => 16,
        }
    }

    /// Upper-triangle entry order used by the 16-feature mode.
    fn upper_pairs() -> [(usize, usize); 6] {
        [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    }

    pub fn labels(&self) -> Vec<String> {
        match self.mode {
            DensityMode::TwoLevelTriplet => {
                vec!["rho11".into(), "re_rho12".into(), "im_rho12".into()]
            }
            DensityMode::HermitianTraceNormalized => {
                let mut labels: Vec<String> = (1..=4).map(|i| format!("diag{i}")).collect();
                for (i, j) in Self::upper_pairs() {
                    labels.push(format!("re_rho{}{}", i + 1, j + 1));
                    labels.push(format!("im_rho{}{}", i + 1, j + 1));
                }
                labels
            }
        }
    }

    /// Reconstruct a density matrix; the trace is exactly one bitwise for
    /// any diagonal budget within (−1, 2], and Hermiticity holds bitwise by
    /// mirrored construction.
    pub fn to_matrix(&self, features: &[f64]) -> Result<ComplexMatrix> {
        if features.len() != self.n_features() {
            return Err(Error::LayoutMismatch { expected: self.n_features(), got: features.len() });
        }
        match self.mode {
            DensityMode::TwoLevelTriplet => {
                let (p, x, y) = (features[0], features[1], features[2]);
                // Evaluate 1 − p so that the two diagonal entries sum to
                // exactly 1.0 in floating point.
                let (d11, d22) = if p >= 0.5 {
                    (p, 1.0 - p)
                } else {
                    let d22 = 1.0 - p;
                    (1.0 - d22, d22)
                };
                let mut m = ComplexMatrix::zeros(2);
                m.set(0, 0, Complex64::new(d11, 0.0));
                m.set(1, 1, Complex64::new(d22, 0.0));
                m.set(0, 1, Complex64::new(x, y));
                m.set(1, 0, Complex64::new(x, -y));
                Ok(m)
            }
            DensityMode::HermitianTraceNormalized => {
                let d = &features[..4];
                let mean = (d[0] + d[1] + d[2] + d[3]) / 4.0;
                let e1 = d[0] - mean + 0.25;
                let e2 = d[1] - mean + 0.25;
                let e3 = d[2] - mean + 0.25;
                // Same real value as d[3] − mean + 1/4, but evaluated so
                // the diagonal sums to exactly 1.0 in floating point.
                let e4 = 1.0 - ((e1 + e2) + e3);
                let mut m = ComplexMatrix::zeros(4);
                for (i, &e) in [e1, e2, e3, e4].iter().enumerate() {
                    m.set(i, i, Complex64::new(e, 0.0));
                }
                for (k, (i, j)) in Self::upper_pairs().iter().enumerate() {
                    let re = features[4 + 2 * k];
                    let im = features[4 + 2 * k + 1];
                    m.set(*i, *j, Complex64::new(re, im));
                    m.set(*j, *i, Complex64::new(re, -im));
                }
                Ok(m)
            }
        }
    }

    /// Canonical features of a (Hermitian, trace-one) matrix; inverse of
    /// `to_matrix` on physical states.
    pub fn to_features(&self, m: &ComplexMatrix) -> Result<Vec<f64>> {
        if m.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: m.dim() });
        }
        match self.mode {
            DensityMode::TwoLevelTriplet => {
                Ok(vec![m.get(0, 0).re, m.get(0, 1).re, m.get(0, 1).im])
            }
            DensityMode::HermitianTraceNormalized => {
                let mut f: Vec<f64> = (0..4).map(|i| m.get(i, i).re).collect();
                for (i, j) in Self::upper_pairs() {
                    f.push(m.get(i, j).re);
                    f.push(m.get(i, j).im);
                }
                Ok(f)
            }
        }
    }

    /// Affine form of the reconstruction on interleaved storage, used by the
    /// differentiation tape (the ulp-level trace correction above is skipped;
    /// the map here is exactly linear plus a constant offset).
    pub fn apply_interleaved(&self, features: &[f64], out: &mut [f64]) {
        let dim = self.dim();
        debug_assert_eq!(out.len(), 2 * dim * dim);
        out.fill(0.0);
        match self.mode {
            DensityMode::TwoLevelTriplet => {
                out[0] = features[0]; // re ρ11
                out[2 * 3] = 1.0 - features[0]; // re ρ22
                out[2] = features[1]; // re ρ12
                out[3] = features[2]; // im ρ12
                out[2 * 2] = features[1]; // re ρ21
                out[2 * 2 + 1] = -features[2]; // im ρ21
            }
            DensityMode::HermitianTraceNormalized => {
                let d = &features[..4];
                let mean = (d[0] + d[1] + d[2] + d[3]) / 4.0;
                for i in 0..4 {
                    out[2 * (i * 4 + i)] = d[i] - mean + 0.25;
                }
                for (k, (i, j)) in Self::upper_pairs().iter().enumerate() {
                    let re = features[4 + 2 * k];
                    let im = features[4 + 2 * k + 1];
                    out[2 * (i * 4 + j)] = re;
                    out[2 * (i * 4 + j) + 1] = im;
                    out[2 * (j * 4 + i)] = re;
                    out[2 * (j * 4 + i) + 1] = -im;
                }
            }
        }
    }

    /// Linear part of `apply_interleaved` (offsets dropped); this is the map
    /// that carries feature tangents onto dρ/dt.
    pub fn apply_linear_interleaved(&self, features: &[f64], out: &mut [f64]) {
        let dim = self.dim();
        debug_assert_eq!(out.len(), 2 * dim * dim);
        out.fill(0.0);
        match self.mode {
            DensityMode::TwoLevelTriplet => {
                out[0] = features[0];
                out[2 * 3] = -features[0];
                out[2] = features[1];
                out[3] = features[2];
                out[2 * 2] = features[1];
                out[2 * 2 + 1] = -features[2];
            }
            DensityMode::HermitianTraceNormalized => {
                let d = &features[..4];
                let mean = (d[0] + d[1] + d[2] + d[3]) / 4.0;
                for i in 0..4 {
                    out[2 * (i * 4 + i)] = d[i] - mean;
                }
                for (k, (i, j)) in Self::upper_pairs().iter().enumerate() {
                    let re = features[4 + 2 * k];
                    let im = features[4 + 2 * k + 1];
                    out[2 * (i * 4 + j)] = re;
                    out[2 * (i * 4 + j) + 1] = im;
                    out[2 * (j * 4 + i)] = re;
                    out[2 * (j * 4 + i) + 1] = -im;
                }
            }
        }
    }

    /// Transpose of the linear part of `apply_interleaved`.
    pub fn accumulate_transposed(&self, grad_matrix: &[f64], grad_features: &mut [f64]) {
        match self.mode {
            DensityMode::TwoLevelTriplet => {
                grad_features[0] += grad_matrix[0] - grad_matrix[2 * 3];
                grad_features[1] += grad_matrix[2] + grad_matrix[2 * 2];
                grad_features[2] += grad_matrix[3] - grad_matrix[2 * 2 + 1];
            }
            DensityMode::HermitianTraceNormalized => {
                let diag_grads: Vec<f64> = (0..4).map(|i| grad_matrix[2 * (i * 4 + i)]).collect();
                let gsum: f64 = diag_grads.iter().sum();
                for i in 0..4 {
                    grad_features[i] += diag_grads[i] - gsum / 4.0;
                }
                for (k, (i, j)) in Self::upper_pairs().iter().enumerate() {
                    grad_features[4 + 2 * k] +=
                        grad_matrix[2 * (i * 4 + j)] + grad_matrix[2 * (j * 4 + i)];
                    grad_features[4 + 2 * k + 1] +=
                        grad_matrix[2 * (i * 4 + j) + 1] - grad_matrix[2 * (j * 4 + i) + 1];
                }
            }
        }
    }
}

/// A benchmark system: Hamiltonian, Lindblad operator, bath, and the feature
/// layouts of its auxiliary operators and density matrix.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    pub dim: usize,
    pub hamiltonian: ComplexMatrix,
    pub lindblad: ComplexMatrix,
    pub bath: BathParams,
    pub o_layout: FeatureLayout,
    pub q_layout: FeatureLayout,
    pub rho_layout: DensityLayout,
}

const HAMILTONIAN_HERMITICITY_TOL: f64 = 1e-12;

impl SystemSpec {
    pub fn new(
        name: impl Into<String>,
        hamiltonian: ComplexMatrix,
        lindblad: ComplexMatrix,
        bath: BathParams,
        o_layout: FeatureLayout,
        q_layout: FeatureLayout,
        rho_layout: DensityLayout,
    ) -> Result<Self> {
        let dim = hamiltonian.dim();
        let residual = hamiltonian.hermiticity_residual();
        if residual > HAMILTONIAN_HERMITICITY_TOL {
            return Err(Error::NotHermitian { residual });
        }
        for (got, what) in [
            (lindblad.dim(), "lindblad"),
            (o_layout.dim(), "o_layout"),
            (q_layout.dim(), "q_layout"),
            (rho_layout.dim(), "rho_layout"),
        ] {
            if got != dim {
                return Err(Error::InvalidConfig(format!(
                    "{what} dimension {got} does not match Hamiltonian dimension {dim}"
                )));
            }
        }
        Ok(Self { name: name.into(), dim, hamiltonian, lindblad, bath, o_layout, q_layout, rho_layout })
    }

    fn check_dim(&self, m: &ComplexMatrix) -> Result<()> {
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: m.dim() });
        }
        Ok(())
    }
}

/// σ⁻ = |1⟩⟨0| in the σ_z|0⟩ = +|0⟩ convention.
pub fn sigma_minus() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m.set(1, 0, Complex64::new(1.0, 0.0));
    m
}

/// Two-level spin-boson system: H_s = σ_z, L = σ_x.
pub fn spin_boson_spec(bath: BathParams) -> SystemSpec {
    let placements = vec![
        Placement { row: 0, col: 1, re_feature: 0, im_feature: 1 },
        Placement { row: 1, col: 0, re_feature: 2, im_feature: 3 },
    ];
    let o_layout = FeatureLayout::new(2, 4, placements.clone()).expect("valid layout");
    let q_layout = FeatureLayout::new(2, 4, placements).expect("valid layout");
    SystemSpec::new(
        "spin-boson",
        ComplexMatrix::pauli_z(),
        ComplexMatrix::pauli_x(),
        bath,
        o_layout,
        q_layout,
        DensityLayout { mode: DensityMode::TwoLevelTriplet },
    )
    .expect("spin-boson spec is always valid")
}

/// Two-qubit XXZ chain with a collective lowering Lindblad operator:
/// H = J(σ_x¹σ_x² + σ_y¹σ_y²) + Δ σ_z¹σ_z², L = σ⁻⊗I + I⊗σ⁻.
pub fn xxz_spec(j: f64, delta: f64, bath: BathParams) -> SystemSpec {
    let i2 = ComplexMatrix::identity(2);
    let (sx, sy, sz) = (ComplexMatrix::pauli_x(), ComplexMatrix::pauli_y(), ComplexMatrix::pauli_z());
    let xx = kron(&sx, &sx).expect("2x2 kron");
    let yy = kron(&sy, &sy).expect("2x2 kron");
    let zz = kron(&sz, &sz).expect("2x2 kron");
    let hamiltonian = xx
        .add(&yy)
        .expect("same dim")
        .scale(Complex64::new(j, 0.0))
        .add(&zz.scale(Complex64::new(delta, 0.0)))
        .expect("same dim");
    let sm = sigma_minus();
    let lindblad = kron(&sm, &i2).expect("2x2 kron").add(&kron(&i2, &sm).expect("2x2 kron")).expect("same dim");

    // Ō inhabits the "one extra down-spin" sector with swap-symmetric ties;
    // Q̄ mirrors it one sector up.
    let o_placements = vec![
        Placement { row: 1, col: 0, re_feature: 0, im_feature: 1 },
        Placement { row: 2, col: 0, re_feature: 0, im_feature: 1 },
        Placement { row: 3, col: 1, re_feature: 2, im_feature: 3 },
        Placement { row: 3, col: 2, re_feature: 2, im_feature: 3 },
    ];
    let q_placements = vec![
        Placement { row: 0, col: 1, re_feature: 0, im_feature: 1 },
        Placement { row: 0, col: 2, re_feature: 0, im_feature: 1 },
        Placement { row: 1, col: 3, re_feature: 2, im_feature: 3 },
        Placement { row: 2, col: 3, re_feature: 2, im_feature: 3 },
    ];
    SystemSpec::new(
        "xxz",
        hamiltonian,
        lindblad,
        bath,
        FeatureLayout::new(4, 4, o_placements).expect("valid layout"),
        FeatureLayout::new(4, 4, q_placements).expect("valid layout"),
        DensityLayout { mode: DensityMode::HermitianTraceNormalized },
    )
    .expect("xxz spec is always valid")
}

/// Drift operator −iH − (L†Ō + LQ̄) entering both auxiliary commutators.
pub fn drift_operator(o: &ComplexMatrix, q: &ComplexMatrix, spec: &SystemSpec) -> Result<ComplexMatrix> {
    let l = &spec.lindblad;
    let ld = l.adjoint();
    let minus_ih = spec.hamiltonian.scale(Complex64::new(0.0, -1.0));
    minus_ih.sub(&ld.matmul(o)?.add(&l.matmul(q)?)?)
}

/// F_O(Ō, Q̄) = (ΓTγ/2 − iΓγ²/2)L − γŌ + [−iH − (L†Ō + LQ̄), Ō].
pub fn rhs_o(o: &ComplexMatrix, q: &ComplexMatrix, spec: &SystemSpec) -> Result<ComplexMatrix> {
    spec.check_dim(o)?;
    spec.check_dim(q)?;
    let source = spec.lindblad.scale(spec.bath.o_source_coefficient());
    let decay = o.scale(Complex64::new(spec.bath.char_freq, 0.0));
    let drift = drift_operator(o, q, spec)?;
    source.sub(&decay)?.add(&commutator(&drift, o)?)
}

/// F_Q(Ō, Q̄) = (ΓTγ/2)L† − γQ̄ + [−iH − (L†Ō + LQ̄), Q̄].
pub fn rhs_q(o: &ComplexMatrix, q: &ComplexMatrix, spec: &SystemSpec) -> Result<ComplexMatrix> {
    spec.check_dim(o)?;
    spec.check_dim(q)?;
    let source = spec.lindblad.adjoint().scale(spec.bath.q_source_coefficient());
    let decay = q.scale(Complex64::new(spec.bath.char_freq, 0.0));
    let drift = drift_operator(o, q, spec)?;
    source.sub(&decay)?.add(&commutator(&drift, q)?)
}

/// F_ρ(ρ, Ō, Q̄) = −i[H, ρ] + [L, ρŌ†] − [L†, Ōρ] + [L†, ρQ̄†] − [L, Q̄ρ].
pub fn rhs_rho(
    rho: &ComplexMatrix,
    o: &ComplexMatrix,
    q: &ComplexMatrix,
    spec: &SystemSpec,
) -> Result<ComplexMatrix> {
    spec.check_dim(rho)?;
    spec.check_dim(o)?;
    spec.check_dim(q)?;
    let l = &spec.lindblad;
    let ld = l.adjoint();
    let unitary = commutator(&spec.hamiltonian, rho)?.scale(Complex64::new(0.0, -1.0));
    let t1 = commutator(l, &rho.matmul(&o.adjoint())?)?;
    let t2 = commutator(&ld, &o.matmul(rho)?)?;
    let t3 = commutator(&ld, &rho.matmul(&q.adjoint())?)?;
    let t4 = commutator(l, &q.matmul(rho)?)?;
    unitary.add(&t1)?.sub(&t2)?.add(&t3)?.sub(&t4)
}

/// Reconstruct an operator from features; alias over the layout method.
pub fn features_to_operator(features: &[f64], layout: &FeatureLayout) -> Result<ComplexMatrix> {
    layout.to_matrix(features)
}

/// Reconstruct a density matrix from features; alias over the layout method.
pub fn features_to_density(features: &[f64], layout: &DensityLayout) -> Result<ComplexMatrix> {
    layout.to_matrix(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fig2_bath() -> BathParams {
        BathParams::new(0.1, 0.3, 20.0).unwrap()
    }

    #[test]
    fn spin_boson_matrices() {
        let spec = spin_boson_spec(fig2_bath());
        assert_eq!(spec.dim, 2);
        assert!(spec.hamiltonian.sub(&ComplexMatrix::diag(&[1.0, -1.0])).unwrap().frobenius_norm() < 1e-15);
        assert!(spec.lindblad.sub(&ComplexMatrix::pauli_x()).unwrap().frobenius_norm() < 1e-15);
    }

    #[test]
    fn spin_boson_o_layout_reconstruction() {
        let spec = spin_boson_spec(fig2_bath());
        let m = spec.o_layout.to_matrix(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.get(0, 1), c(1.0, 2.0));
        assert_eq!(m.get(1, 0), c(3.0, 4.0));
        assert_eq!(m.get(0, 0), c(0.0, 0.0));
        assert_eq!(m.get(1, 1), c(0.0, 0.0));

        let zero = spec.o_layout.to_matrix(&[0.0; 4]).unwrap();
        assert_eq!(zero.frobenius_norm(), 0.0);
    }

    #[test]
    fn xxz_hamiltonian_entries() {
        let spec = xxz_spec(2.0, 0.5, BathParams::new(0.1, 0.4, 20.0).unwrap());
        let h = &spec.hamiltonian;
        for (i, want) in [0.5, -0.5, -0.5, 0.5].iter().enumerate() {
            assert!((h.get(i, i) - c(*want, 0.0)).norm() < 1e-15);
        }
        assert!((h.get(1, 2) - c(4.0, 0.0)).norm() < 1e-15);
        assert!((h.get(2, 1) - c(4.0, 0.0)).norm() < 1e-15);
        // Everything else vanishes.
        for i in 0..4 {
            for j in 0..4 {
                if i != j && !((i, j) == (1, 2) || (i, j) == (2, 1)) {
                    assert_eq!(h.get(i, j), c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn xxz_lindblad_is_collective_lowering() {
        let spec = xxz_spec(2.0, 0.5, fig2_bath());
        let l = &spec.lindblad;
        for (i, j) in [(1, 0), (2, 0), (3, 1), (3, 2)] {
            assert_eq!(l.get(i, j), c(1.0, 0.0));
        }
        assert_eq!(l.frobenius_norm(), 2.0);
    }

    #[test]
    fn xxz_o_layout_ties() {
        let spec = xxz_spec(2.0, 0.5, fig2_bath());
        let m = spec.o_layout.to_matrix(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.get(1, 0), c(1.0, 2.0));
        assert_eq!(m.get(2, 0), c(1.0, 2.0));
        assert_eq!(m.get(3, 1), c(3.0, 4.0));
        assert_eq!(m.get(3, 2), c(3.0, 4.0));
        let named: usize = 4;
        let nonzero = m.entries().iter().filter(|e| e.norm() > 0.0).count();
        assert_eq!(nonzero, named);

        // Q mirrors in the raised sector.
        let q = spec.q_layout.to_matrix(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(q.get(0, 1), c(1.0, 2.0));
        assert_eq!(q.get(0, 2), c(1.0, 2.0));
        assert_eq!(q.get(1, 3), c(3.0, 4.0));
        assert_eq!(q.get(2, 3), c(3.0, 4.0));
    }

    #[test]
    fn density_triplet_examples() {
        let layout = DensityLayout { mode: DensityMode::TwoLevelTriplet };
        let ket0 = layout.to_matrix(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(ket0.get(0, 0), c(1.0, 0.0));
        assert_eq!(ket0.get(1, 1), c(0.0, 0.0));

        let plus = layout.to_matrix(&[0.5, 0.5, 0.0]).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(plus.get(i, j), c(0.5, 0.0));
        }
    }

    #[test]
    fn density_xxz_zero_features_give_maximally_mixed() {
        let layout = DensityLayout { mode: DensityMode::HermitianTraceNormalized };
        let m = layout.to_matrix(&[0.0; 16]).unwrap();
        let err = m.sub(&ComplexMatrix::identity(4).scale(c(0.25, 0.0))).unwrap().frobenius_norm();
        assert!(err < 1e-15);
    }

    #[test]
    fn rhs_o_zero_operators_reduce_to_source() {
        let spec = spin_boson_spec(fig2_bath());
        let zero = ComplexMatrix::zeros(2);
        let got = rhs_o(&zero, &zero, &spec).unwrap();
        // ΓTγ/2 = 0.3, Γγ²/2 = 0.0045.
        let want = ComplexMatrix::pauli_x().scale(c(0.3, -0.0045));
        assert!(got.sub(&want).unwrap().frobenius_norm() < 1e-15);
    }

    #[test]
    fn rhs_q_zero_operators_reduce_to_source() {
        let spec = spin_boson_spec(fig2_bath());
        let zero = ComplexMatrix::zeros(2);
        let got = rhs_q(&zero, &zero, &spec).unwrap();
        let want = ComplexMatrix::pauli_x().scale(c(0.3, 0.0));
        assert!(got.sub(&want).unwrap().frobenius_norm() < 1e-15);

        // XXZ with the same bath: 0.3·(σ⁺⊗I + I⊗σ⁺).
        let xspec = xxz_spec(2.0, 0.5, fig2_bath());
        let zero4 = ComplexMatrix::zeros(4);
        let got = rhs_q(&zero4, &zero4, &xspec).unwrap();
        let want = xspec.lindblad.adjoint().scale(c(0.3, 0.0));
        assert!(got.sub(&want).unwrap().frobenius_norm() < 1e-15);
    }

    #[test]
    fn rhs_o_perturbed_matches_symbolic_expansion() {
        // Hand expansion of the Ō equation at Ō = 0.01·σ_x, Q̄ = 0,
        // cross-checked against an independent symbolic evaluation:
        // result = [[0, 0.297 − 0.0245i], [0.297 + 0.0155i, 0]].
        let spec = spin_boson_spec(fig2_bath());
        let o = ComplexMatrix::pauli_x().scale(c(0.01, 0.0));
        let q = ComplexMatrix::zeros(2);
        let got = rhs_o(&o, &q, &spec).unwrap();
        let want = ComplexMatrix::from_parts(
            2,
            &[(0.0, 0.0), (0.297, -0.0245), (0.297, 0.0155), (0.0, 0.0)],
        )
        .unwrap();
        assert!(got.sub(&want).unwrap().frobenius_norm() < 1e-14);

        // Same perturbation through the Q̄ equation: the commutator term
        // vanishes because Q̄ = 0, leaving exactly the source 0.3·σ_x.
        let got_q = rhs_q(&o, &q, &spec).unwrap();
        let want_q = ComplexMatrix::pauli_x().scale(c(0.3, 0.0));
        assert!(got_q.sub(&want_q).unwrap().frobenius_norm() < 1e-14);
    }

    #[test]
    fn rhs_rho_examples() {
        let spec = spin_boson_spec(fig2_bath());
        let zero = ComplexMatrix::zeros(2);

        // |0⟩⟨0| commutes with σ_z, so the zero-operator derivative vanishes.
        let ket0 = ComplexMatrix::diag(&[1.0, 0.0]);
        let got = rhs_rho(&ket0, &zero, &zero, &spec).unwrap();
        assert!(got.frobenius_norm() < 1e-15);

        // −i[σ_z, |+⟩⟨+|] = σ_y (hand computation, symbolically checked).
        let plus = ComplexMatrix::from_parts(2, &[(0.5, 0.0), (0.5, 0.0), (0.5, 0.0), (0.5, 0.0)])
            .unwrap();
        let got = rhs_rho(&plus, &zero, &zero, &spec).unwrap();
        assert!(got.sub(&ComplexMatrix::pauli_y()).unwrap().frobenius_norm() < 1e-15);
    }

    fn arb_matrix(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
        proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), dim * dim).prop_map(move |parts| {
            ComplexMatrix::from_parts(dim, &parts).unwrap()
        })
    }

    proptest! {
        #[test]
        fn rhs_rho_is_traceless(rho in arb_matrix(2), o in arb_matrix(2), q in arb_matrix(2)) {
            let spec = spin_boson_spec(fig2_bath());
            let out = rhs_rho(&rho, &o, &q, &spec).unwrap();
            prop_assert!(out.trace().norm() <= 1e-12 * f64::max(1.0, out.frobenius_norm()));
        }

        #[test]
        fn rhs_rho_hermitian_when_q_is_o_dagger(rho_seed in arb_matrix(2), o in arb_matrix(2)) {
            let spec = spin_boson_spec(fig2_bath());
            let rho = rho_seed.add(&rho_seed.adjoint()).unwrap().scale(c(0.5, 0.0));
            let q = o.adjoint();
            let out = rhs_rho(&rho, &o, &q, &spec).unwrap();
            prop_assert!(out.hermiticity_residual() <= 1e-12);
        }

        #[test]
        fn operator_reconstruction_is_real_linear(
            u in proptest::collection::vec(-2.0f64..2.0, 4),
            v in proptest::collection::vec(-2.0f64..2.0, 4),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let spec = xxz_spec(2.0, 0.5, fig2_bath());
            let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = spec.o_layout.to_matrix(&combo).unwrap();
            let rhs = spec.o_layout.to_matrix(&u).unwrap().scale(c(a, 0.0))
                .add(&spec.o_layout.to_matrix(&v).unwrap().scale(c(b, 0.0))).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().frobenius_norm() <= 1e-12 * f64::max(1.0, rhs.frobenius_norm()));
        }

        #[test]
        fn tied_entries_are_bit_identical(f in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let spec = xxz_spec(2.0, 0.5, fig2_bath());
            let m = spec.o_layout.to_matrix(&f).unwrap();
            prop_assert_eq!(m.get(1, 0), m.get(2, 0));
            prop_assert_eq!(m.get(3, 1), m.get(3, 2));
        }

        #[test]
        fn density_trace_is_exactly_one_triplet(p in -0.5f64..1.5, x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let layout = DensityLayout { mode: DensityMode::TwoLevelTriplet };
            let m = layout.to_matrix(&[p, x, y]).unwrap();
            prop_assert_eq!(m.trace(), c(1.0, 0.0));
            prop_assert_eq!(m.get(0, 1).conj(), m.get(1, 0));
        }

        #[test]
        fn density_trace_is_exactly_one_xxz(f in proptest::collection::vec(-0.3f64..0.3, 16)) {
            let layout = DensityLayout { mode: DensityMode::HermitianTraceNormalized };
            let m = layout.to_matrix(&f).unwrap();
            prop_assert_eq!(m.trace(), c(1.0, 0.0));
            prop_assert!(m.hermiticity_residual() == 0.0);
        }

        #[test]
        fn density_features_round_trip(p in 0.0f64..1.0, x in -0.5f64..0.5, y in -0.5f64..0.5) {
            let layout = DensityLayout { mode: DensityMode::TwoLevelTriplet };
            let m = layout.to_matrix(&[p, x, y]).unwrap();
            let f = layout.to_features(&m).unwrap();
            prop_assert!((f[0] - p).abs() <= 1e-15);
            prop_assert_eq!(f[1], x);
            prop_assert_eq!(f[2], y);
        }
    }
}
