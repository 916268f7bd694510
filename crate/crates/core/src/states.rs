//! Reference statevectors, reduced density matrices and qubit mutual information.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{
    annihilate, create, determinant_state_index, PauliHamiltonian, SparseOperator,
    SpinOrbitalOrder,
};
use crate::linalg::lanczos_lowest;
use crate::meanfield::AmplitudeSet;

/// Eigenvalues at or below this contribute nothing to an entropy.
pub const ENTROPY_CLAMP: f64 = 1e-14;
/// Residual-norm target for the sector eigensolver.
pub const FCI_RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum StatesError {
    #[error("qubit indices must differ and lie below {n}: got ({i}, {j})")]
    QubitIndex { i: usize, j: usize, n: usize },
    #[error("density matrix trace {0} deviates from 1")]
    Trace(f64),
    #[error("no basis states with {n_elec} electrons and MS2 = {ms2} on {n_qubits} qubits")]
    EmptySector {
        n_elec: usize,
        ms2: i32,
        n_qubits: usize,
    },
    #[error("{0} qubits exceed the statevector limit")]
    TooLarge(usize),
    #[error("statevector has {got} amplitudes, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("zero vector cannot be normalized")]
    ZeroNorm,
    #[error("{0}")]
    Encoding(#[from] crate::encoding::EncodingError),
    #[error("malformed QMI table: {0}")]
    Csv(String),
}

/// A pure state on `n` qubits; bit `q` of an amplitude's index is qubit `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// Wraps and normalizes raw amplitudes.
    pub fn new(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self, StatesError> {
        if n_qubits > 30 {
            return Err(StatesError::TooLarge(n_qubits));
        }
        if amps.len() != 1 << n_qubits {
            return Err(StatesError::Length {
                got: amps.len(),
                expected: 1 << n_qubits,
            });
        }
        let mut s = Self { n_qubits, amps };
        s.normalize()?;
        Ok(s)
    }

    pub fn from_real(n_qubits: usize, amps: &[f64]) -> Result<Self, StatesError> {
        Self::new(
            n_qubits,
            amps.iter().map(|&a| Complex64::new(a, 0.0)).collect(),
        )
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> Result<(), StatesError> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(StatesError::ZeroNorm);
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(())
    }

    pub fn inner(&self, other: &Statevector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `⟨ψ|A|ψ⟩` for a real symmetric operator.
    pub fn expectation(&self, op: &SparseOperator) -> f64 {
        op.expectation_complex(&self.amps).re
    }

    /// `⟨N̂⟩`: mean Hamming weight.
    pub fn particle_number(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(b, a)| a.norm_sqr() * b.count_ones() as f64)
            .sum()
    }

    pub fn max_imaginary(&self) -> f64 {
        self.amps.iter().map(|a| a.im.abs()).fold(0.0, f64::max)
    }
}

fn reference_bits(n_qubits: usize, n_elec: usize, order: SpinOrbitalOrder) -> Vec<usize> {
    let m = n_qubits / 2;
    let n_alpha = n_elec.div_ceil(2);
    let n_beta = n_elec / 2;
    (0..n_alpha)
        .map(|p| order.qubit(m, p, false))
        .chain((0..n_beta).map(|p| order.qubit(m, p, true)))
        .collect()
}

/// Closed-shell reference determinant: the lowest `N/2` spatial orbitals
/// occupied in each spin block.
pub fn hf_statevector(n_qubits: usize, n_elec: usize, order: SpinOrbitalOrder) -> Statevector {
    assert!(n_elec <= n_qubits, "{n_elec} electrons on {n_qubits} qubits");
    let occ = reference_bits(n_qubits, n_elec, order);
    let (index, _) = determinant_state_index(&occ, order).expect("distinct reference orbitals");
    Statevector::basis(n_qubits, index)
}

/// Unnormalized first-order doubles wavefunction `Σ t_ij^ab a†_a a†_b a_j a_i |Φ_HF⟩`
/// over stored classes (equivalently `¼ Σ` over all index orders).
pub fn mp2_first_order(a: &AmplitudeSet, order: SpinOrbitalOrder) -> Vec<Complex64> {
    let n = a.n_so();
    let (hf, _) = determinant_state_index(a.occupied(), order).expect("distinct occupied orbitals");
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    for x in a.amplitudes() {
        let mut bits = hf as u64;
        let mut sign = 1.0;
        for (op_create, p) in [(false, x.i), (false, x.j), (true, x.b), (true, x.a)] {
            let step = if op_create {
                create(bits, p)
            } else {
                annihilate(bits, p)
            };
            let (next, s) = step.expect("valid excitation from the reference");
            bits = next;
            sign *= s;
        }
        amps[bits as usize] += Complex64::new(sign * x.t, 0.0);
    }
    amps
}

/// Normalized `|Φ_HF⟩ + |ψ⁽¹⁾⟩`.
pub fn mp2_statevector(a: &AmplitudeSet, order: SpinOrbitalOrder) -> Statevector {
    let n = a.n_so();
    let mut amps = mp2_first_order(a, order);
    let (hf, phase) = determinant_state_index(a.occupied(), order).expect("distinct occupied");
    amps[hf] += Complex64::new(phase, 0.0);
    Statevector::new(n, amps).expect("reference amplitude keeps the norm nonzero")
}

/// Basis indices with `n_alpha` bits in the α block and `n_beta` in the β block.
pub fn sector_basis(n_qubits: usize, n_elec: usize, ms2: i32) -> Vec<usize> {
    let m = n_qubits / 2;
    let twice_alpha = n_elec as i64 + ms2 as i64;
    if twice_alpha < 0 || twice_alpha % 2 != 0 || twice_alpha > 2 * n_elec as i64 {
        return Vec::new();
    }
    let n_alpha = (twice_alpha / 2) as u32;
    let n_beta = n_elec as u32 - n_alpha;
    let low = (1usize << m) - 1;
    (0..1usize << n_qubits)
        .filter(|&b| (b & low).count_ones() == n_alpha && (b >> m).count_ones() == n_beta)
        .collect()
}

/// Lowest eigenpair of the Hamiltonian inside the `(N, MS2)` sector.
pub fn fci_ground_state(
    h: &PauliHamiltonian,
    n_elec: usize,
    ms2: i32,
) -> Result<(f64, Statevector), StatesError> {
    let op = h.to_sparse()?;
    fci_ground_state_sparse(&op, h.n_qubits(), n_elec, ms2)
}

/// As [`fci_ground_state`] for an already assembled sparse Hamiltonian.
pub fn fci_ground_state_sparse(
    op: &SparseOperator,
    n_qubits: usize,
    n_elec: usize,
    ms2: i32,
) -> Result<(f64, Statevector), StatesError> {
    let sector = sector_basis(n_qubits, n_elec, ms2);
    if sector.is_empty() {
        return Err(StatesError::EmptySector {
            n_elec,
            ms2,
            n_qubits,
        });
    }
    let dim = op.dim();
    let apply = |x: &[f64], y: &mut [f64]| {
        let mut full = vec![0.0; dim];
        for (&b, &v) in sector.iter().zip(x) {
            full[b] = v;
        }
        let mut out = vec![0.0; dim];
        op.apply(&full, &mut out);
        for (&b, yi) in sector.iter().zip(y.iter_mut()) {
            *yi = out[b];
        }
    };
    let start = vec![1.0; sector.len()];
    let res = lanczos_lowest(apply, &start, FCI_RESIDUAL_TOLERANCE, 300);
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    for (&b, &v) in sector.iter().zip(&res.vector) {
        amps[b] = Complex64::new(v, 0.0);
    }
    Ok((res.value, Statevector::new(n_qubits, amps)?))
}

/// Single-qubit reduced density matrix.
pub fn one_qubit_rdm(psi: &Statevector, i: usize) -> Matrix2<Complex64> {
    let mut rho = Matrix2::zeros();
    let bit = 1usize << i;
    for b in (0..psi.amps.len()).filter(|b| b & bit == 0) {
        let a = [psi.amps[b], psi.amps[b | bit]];
        for r in 0..2 {
            for c in 0..2 {
                rho[(r, c)] += a[r] * a[c].conj();
            }
        }
    }
    rho
}

/// Reduced density matrix of qubits `(i, j)`; local basis index `2·bit_i + bit_j`.
pub fn two_qubit_rdm(psi: &Statevector, i: usize, j: usize) -> Result<Matrix4<Complex64>, StatesError> {
    let n = psi.n_qubits;
    if i == j || i >= n || j >= n {
        return Err(StatesError::QubitIndex { i, j, n });
    }
    let (bi, bj) = (1usize << i, 1usize << j);
    let mut rho = Matrix4::zeros();
    for b in (0..psi.amps.len()).filter(|b| b & (bi | bj) == 0) {
        let a = [
            psi.amps[b],
            psi.amps[b | bj],
            psi.amps[b | bi],
            psi.amps[b | bi | bj],
        ];
        for r in 0..4 {
            if a[r] == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..4 {
                rho[(r, c)] += a[r] * a[c].conj();
            }
        }
    }
    Ok(rho)
}

/// `−Σ λ ln λ` over the eigenvalues of a Hermitian, unit-trace matrix.
pub fn von_neumann_entropy(rho: &DMatrix<Complex64>) -> Result<f64, StatesError> {
    let trace = rho.trace();
    if (trace.re - 1.0).abs() > 1e-8 || trace.im.abs() > 1e-8 {
        return Err(StatesError::Trace(trace.re));
    }
    let herm = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    Ok(eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > ENTROPY_CLAMP)
        .map(|&l| -l * l.ln())
        .sum())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Divide by the largest off-diagonal entry.
    #[default]
    MaxOffDiagonal,
    /// Divide by `2 ln 2`, the largest QMI two qubits can share.
    TwoLn2,
    /// Values read back from a table without normalization metadata.
    Imported,
}

/// Pairwise qubit mutual information `I(i,j) = S(i) + S(j) − S(i,j)` in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct QmiMatrix {
    n: usize,
    raw: DMatrix<f64>,
    normalized: DMatrix<f64>,
    mode: NormalizationMode,
}

impl QmiMatrix {
    pub fn from_raw(raw: DMatrix<f64>, mode: NormalizationMode) -> Self {
        let n = raw.nrows();
        let mut raw = raw;
        for i in 0..n {
            raw[(i, i)] = 0.0;
            for j in 0..i {
                let v = (0.5 * (raw[(i, j)] + raw[(j, i)])).max(0.0);
                raw[(i, j)] = v;
                raw[(j, i)] = v;
            }
        }
        let scale = match mode {
            NormalizationMode::TwoLn2 => 2.0 * std::f64::consts::LN_2,
            _ => raw.max(),
        };
        let normalized = if scale > 0.0 {
            raw.map(|v| (v / scale).min(1.0))
        } else {
            DMatrix::zeros(n, n)
        };
        Self {
            n,
            raw,
            normalized,
            mode,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn raw(&self) -> &DMatrix<f64> {
        &self.raw
    }

    pub fn normalized(&self) -> &DMatrix<f64> {
        &self.normalized
    }

    pub fn mode(&self) -> NormalizationMode {
        self.mode
    }

    pub fn renormalized(&self, mode: NormalizationMode) -> Self {
        Self::from_raw(self.raw.clone(), mode)
    }

    /// Number of unordered pairs with normalized value strictly above `mu`.
    pub fn count_above(&self, mu: f64) -> usize {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.normalized[(i, j)] > mu)
            .count()
    }

    /// `i,j,raw,normalized` rows for every pair `i < j`, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,raw,normalized\n");
        for i in 0..self.n {
            for j in i + 1..self.n {
                let _ = writeln!(
                    out,
                    "{i},{j},{:.11e},{:.11e}",
                    self.raw[(i, j)],
                    self.normalized[(i, j)]
                );
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, StatesError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "i,j,raw,normalized" => {}
            other => return Err(StatesError::Csv(format!("unexpected header {other:?}"))),
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(StatesError::Csv(format!("row {}: expected 4 columns", k + 2)));
            }
            let bad = |_| StatesError::Csv(format!("row {}: unparsable field", k + 2));
            let i: usize = f[0].parse().map_err(|_| StatesError::Csv(format!("row {}: bad i", k + 2)))?;
            let j: usize = f[1].parse().map_err(|_| StatesError::Csv(format!("row {}: bad j", k + 2)))?;
            let raw: f64 = f[2].parse().map_err(bad)?;
            let norm: f64 = f[3].parse().map_err(bad)?;
            if i >= j {
                return Err(StatesError::Csv(format!("row {}: requires i < j", k + 2)));
            }
            rows.push((i, j, raw, norm));
        }
        let n = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let mut raw = DMatrix::zeros(n, n);
        let mut normalized = DMatrix::zeros(n, n);
        for (i, j, r, v) in rows {
            raw[(i, j)] = r;
            raw[(j, i)] = r;
            normalized[(i, j)] = v;
            normalized[(j, i)] = v;
        }
        Ok(Self {
            n,
            raw,
            normalized,
            mode: NormalizationMode::Imported,
        })
    }
}

/// Pair values below this many nats are treated as exact zeros.
pub const QMI_NOISE_FLOOR: f64 = 1e-12;

/// Mutual-information matrix of every qubit pair.
pub fn qmi_matrix(psi: &Statevector, mode: NormalizationMode) -> QmiMatrix {
    let n = psi.n_qubits;
    let single: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let rho = one_qubit_rdm(psi, i);
            von_neumann_entropy(&DMatrix::from_iterator(2, 2, rho.iter().copied()))
                .expect("reduced state of a normalized vector has unit trace")
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let rho = two_qubit_rdm(psi, i, j).expect("distinct in-range qubits");
            let s = von_neumann_entropy(&DMatrix::from_iterator(4, 4, rho.iter().copied()))
                .expect("reduced state of a normalized vector has unit trace");
            single[i] + single[j] - s
        })
        .collect();
    let mut raw = DMatrix::zeros(n, n);
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        // Entropy roundoff would otherwise be stretched to 1 by max-normalization.
        let v = if v < QMI_NOISE_FLOOR { 0.0 } else { v };
        raw[(i, j)] = v;
        raw[(j, i)] = v;
    }
    QmiMatrix::from_raw(raw, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::DoubleAmplitude;
    use std::f64::consts::LN_2;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn bell(n: usize, i: usize, j: usize) -> Statevector {
        let mut amps = vec![c(0.0); 1 << n];
        amps[0] = c(1.0);
        amps[(1 << i) | (1 << j)] = c(1.0);
        Statevector::new(n, amps).unwrap()
    }

    #[test]
    fn hf_indices() {
        let b = SpinOrbitalOrder::Blocked;
        assert_eq!(hf_statevector(2, 2, b).amplitude(3), c(1.0));
        assert_eq!(hf_statevector(8, 2, b).amplitude(17), c(1.0));
        assert_eq!(hf_statevector(4, 0, b).amplitude(0), c(1.0));
        assert_eq!(hf_statevector(8, 4, b).amplitude(0b0011_0011), c(1.0));
    }

    #[test]
    fn mp2_state_without_amplitudes_is_hf() {
        let a = AmplitudeSet::from_parts(2, vec![0, 2], vec![-1.0, 1.0, -1.0, 1.0], vec![]);
        let b = SpinOrbitalOrder::Blocked;
        assert_eq!(mp2_statevector(&a, b), hf_statevector(4, 2, b));
    }

    #[test]
    fn mp2_state_single_excitation_class() {
        let a = AmplitudeSet::from_parts(
            2,
            vec![0, 2],
            vec![-1.0, 1.0, -1.0, 1.0],
            vec![DoubleAmplitude {
                i: 0,
                j: 2,
                a: 1,
                b: 3,
                t: 1.0,
            }],
        );
        let psi = mp2_statevector(&a, SpinOrbitalOrder::Blocked);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((psi.amplitude(0b0101).re - h).abs() < 1e-15);
        // a†_1 a†_3 a_2 a_0 |0101⟩: no occupied orbital sits below any acted-on index.
        assert!((psi.amplitude(0b1010).re - h).abs() < 1e-15);
        assert!((psi.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn product_state_rdm() {
        let psi = Statevector::basis(3, 0);
        let rho = two_qubit_rdm(&psi, 0, 2).unwrap();
        assert_eq!(rho[(0, 0)], c(1.0));
        assert!(rho.iter().skip(1).all(|z| *z == c(0.0)));
        assert_eq!(
            two_qubit_rdm(&psi, 1, 1).unwrap_err(),
            StatesError::QubitIndex { i: 1, j: 1, n: 3 }
        );
    }

    #[test]
    fn bell_rdm_is_projector() {
        let psi = bell(4, 1, 3);
        let rho = two_qubit_rdm(&psi, 1, 3).unwrap();
        for (r, col) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert!((rho[(r, col)].re - 0.5).abs() < 1e-15);
        }
        assert!((rho.trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn entropies() {
        let pure = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(0.0)]));
        assert_eq!(von_neumann_entropy(&pure).unwrap(), 0.0);
        let mixed2 = DMatrix::from_diagonal_element(2, 2, c(0.5));
        assert!((von_neumann_entropy(&mixed2).unwrap() - LN_2).abs() < 1e-15);
        let mixed4 = DMatrix::from_diagonal_element(4, 4, c(0.25));
        assert!((von_neumann_entropy(&mixed4).unwrap() - 2.0 * LN_2).abs() < 1e-14);
        let bad = DMatrix::from_diagonal_element(2, 2, c(0.6));
        assert!(matches!(von_neumann_entropy(&bad), Err(StatesError::Trace(_))));
    }

    #[test]
    fn qmi_of_basis_state_is_zero() {
        let q = qmi_matrix(&Statevector::basis(5, 0b10110), NormalizationMode::MaxOffDiagonal);
        assert!(q.raw().iter().all(|&v| v == 0.0));
        assert!(q.normalized().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn qmi_of_bell_pair() {
        let q = qmi_matrix(&bell(4, 0, 1), NormalizationMode::MaxOffDiagonal);
        assert!((q.raw()[(0, 1)] - 2.0 * LN_2).abs() < 1e-14);
        assert_eq!(q.normalized()[(0, 1)], 1.0);
        assert_eq!(q.normalized()[(1, 0)], 1.0);
        for i in 0..4 {
            for j in 0..4 {
                if (i, j) != (0, 1) && (i, j) != (1, 0) {
                    assert!(q.raw()[(i, j)].abs() < 1e-14);
                }
            }
        }
        let q2 = q.renormalized(NormalizationMode::TwoLn2);
        assert!((q2.normalized()[(0, 1)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ghz_pairs_share_ln2() {
        let mut amps = vec![c(0.0); 8];
        amps[0] = c(1.0);
        amps[7] = c(1.0);
        let q = qmi_matrix(&Statevector::new(3, amps).unwrap(), NormalizationMode::MaxOffDiagonal);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((q.raw()[(i, j)] - LN_2).abs() < 1e-14);
        }
    }

    #[test]
    fn csv_round_trip() {
        let q = qmi_matrix(&bell(3, 0, 2), NormalizationMode::MaxOffDiagonal);
        let text = q.to_csv();
        assert!(text.starts_with("i,j,raw,normalized\n0,1,"));
        let back = QmiMatrix::from_csv(&text).unwrap();
        assert_eq!(back.n(), 3);
        assert_eq!(back.normalized()[(0, 2)], 1.0);
        assert!((back.raw()[(0, 2)] - q.raw()[(0, 2)]).abs() < 1e-11);
    }

    #[test]
    fn sectors() {
        assert_eq!(sector_basis(4, 2, 0), vec![0b0101, 0b0110, 0b1001, 0b1010]);
        assert_eq!(sector_basis(8, 4, 0).len(), 36);
        assert!(sector_basis(4, 5, 0).is_empty());
        assert!(sector_basis(4, 2, 1).is_empty());
    }
}
