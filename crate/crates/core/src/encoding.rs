//! Jordan-Wigner encoding of the electronic Hamiltonian.
//!
//! Basis-state integer `b` has bit `p` set when spin orbital `p` is occupied;
//! qubit 0 is the least significant bit. The annihilator maps to
//! `a_p = Z_0 ⋯ Z_{p−1} (X_p + iY_p)/2`, so creating an electron in orbital
//! `p` on `|b⟩` yields the sign `(−1)^{#occupied below p}`.
//!
//! Pauli words print qubit 0 first: `"XZI"` is `X_0 Z_1 I_2`.

use std::collections::BTreeMap;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fcidump::IntegralSet;

/// Terms whose coefficient magnitude falls below this are dropped.
pub const PRUNE_TOLERANCE: f64 = 1e-14;
/// Largest imaginary residue tolerated on a Hamiltonian coefficient.
pub const IMAGINARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("spin orbital {index} outside a {n}-qubit register")]
    Range { index: usize, n: usize },
    #[error("spin orbital {0} occupied twice")]
    Exclusion(usize),
    #[error("coefficient of {word} has imaginary part {imag:.3e}")]
    ImaginaryCoefficient { word: String, imag: f64 },
    #[error("invalid Pauli word {0:?}")]
    BadWord(String),
    #[error("register of {0} qubits is too large")]
    TooManyQubits(usize),
}

/// Spin-orbital to qubit layout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinOrbitalOrder {
    /// All α spin orbitals first, then all β: qubit `p` is `pα`, qubit `M + p` is `pβ`.
    #[default]
    Blocked,
}

impl SpinOrbitalOrder {
    pub fn qubit(self, n_orb: usize, spatial: usize, beta: bool) -> usize {
        match self {
            SpinOrbitalOrder::Blocked => spatial + if beta { n_orb } else { 0 },
        }
    }

    /// Inverse of [`SpinOrbitalOrder::qubit`]: `(spatial, beta)`.
    pub fn spin_orbital(self, n_orb: usize, qubit: usize) -> (usize, bool) {
        match self {
            SpinOrbitalOrder::Blocked => (qubit % n_orb, qubit >= n_orb),
        }
    }
}

/// Applies `a_p` to a basis state, returning the new state and fermionic sign.
#[inline]
pub fn annihilate(bits: u64, p: usize) -> Option<(u64, f64)> {
    if bits & (1 << p) == 0 {
        return None;
    }
    Some((bits ^ (1 << p), parity_sign(bits, p)))
}

/// Applies `a†_p` to a basis state, returning the new state and fermionic sign.
#[inline]
pub fn create(bits: u64, p: usize) -> Option<(u64, f64)> {
    if bits & (1 << p) != 0 {
        return None;
    }
    Some((bits | (1 << p), parity_sign(bits, p)))
}

#[inline]
fn parity_sign(bits: u64, p: usize) -> f64 {
    if (bits & ((1u64 << p) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// A tensor product of single-qubit Paulis stored as X and Z bit masks
/// (a qubit with both bits set carries `Y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliWord {
    pub x: u64,
    pub z: u64,
}

impl PauliWord {
    pub const IDENTITY: PauliWord = PauliWord { x: 0, z: 0 };

    pub fn single(qubit: usize, pauli: char) -> Self {
        let bit = 1u64 << qubit;
        match pauli {
            'X' => PauliWord { x: bit, z: 0 },
            'Y' => PauliWord { x: bit, z: bit },
            'Z' => PauliWord { x: 0, z: bit },
            _ => PauliWord::IDENTITY,
        }
    }

    pub fn z_string(qubits: std::ops::Range<usize>) -> Self {
        let z = qubits.fold(0u64, |acc, q| acc | (1 << q));
        PauliWord { x: 0, z }
    }

    /// Number of `Y` factors.
    pub fn y_count(self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// `self · other = i^k · word`; returns `(k mod 4, word)`.
    pub fn mul(self, other: PauliWord) -> (u32, PauliWord) {
        // P(x,z) = i^{|x∧z|} X^x Z^z and Z^{z1} X^{x2} = (−1)^{|z1∧x2|} X^{x2} Z^{z1}.
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        let k = self.y_count() + other.y_count() + 2 * (self.z & other.x).count_ones()
            + 4 * 64
            - (x & z).count_ones();
        (k % 4, PauliWord { x, z })
    }

    /// Matrix element `⟨b ⊕ x| P |b⟩ = i^{|x∧z|} (−1)^{|z∧b|}`.
    #[inline]
    pub fn phase_on(self, b: u64) -> Complex64 {
        let k = (self.y_count() + 2 * (self.z & b).count_ones()) % 4;
        I_POWERS[k as usize]
    }

    pub fn to_string_n(self, n: usize) -> String {
        (0..n)
            .map(|q| match ((self.x >> q) & 1, (self.z >> q) & 1) {
                (0, 0) => 'I',
                (1, 0) => 'X',
                (1, 1) => 'Y',
                _ => 'Z',
            })
            .collect()
    }
}

impl FromStr for PauliWord {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() > 64 {
            return Err(EncodingError::TooManyQubits(s.len()));
        }
        let mut w = PauliWord::IDENTITY;
        for (q, c) in s.chars().enumerate() {
            match c {
                'I' => {}
                'X' | 'Y' | 'Z' => {
                    let p = PauliWord::single(q, c);
                    w.x |= p.x;
                    w.z |= p.z;
                }
                _ => return Err(EncodingError::BadWord(s.to_string())),
            }
        }
        Ok(w)
    }
}

const I_POWERS: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

/// A complex linear combination of Pauli words, kept in canonical word order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: BTreeMap<PauliWord, Complex64>,
}

impl PauliSum {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n_qubits: usize, c: Complex64) -> Self {
        let mut s = Self::new(n_qubits);
        s.add(PauliWord::IDENTITY, c);
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn add(&mut self, word: PauliWord, c: Complex64) {
        *self.terms.entry(word).or_default() += c;
    }

    pub fn add_scaled(&mut self, other: &PauliSum, c: Complex64) {
        for (&w, &v) in &other.terms {
            self.add(w, v * c);
        }
    }

    pub fn mul(&self, other: &PauliSum) -> PauliSum {
        let mut out = PauliSum::new(self.n_qubits.max(other.n_qubits));
        for (&a, &ca) in &self.terms {
            for (&b, &cb) in &other.terms {
                let (k, w) = a.mul(b);
                out.add(w, ca * cb * I_POWERS[k as usize]);
            }
        }
        out
    }

    /// Hermitian adjoint.
    pub fn adjoint(&self) -> PauliSum {
        PauliSum {
            n_qubits: self.n_qubits,
            terms: self.terms.iter().map(|(&w, &c)| (w, c.conj())).collect(),
        }
    }

    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.norm() >= tol);
    }

    pub fn terms(&self) -> impl Iterator<Item = (PauliWord, Complex64)> + '_ {
        self.terms.iter().map(|(&w, &c)| (w, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Dense `2^n × 2^n` matrix. Intended for small registers.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for (&w, &c) in &self.terms {
            for b in 0..dim as u64 {
                m[((b ^ w.x) as usize, b as usize)] += c * w.phase_on(b);
            }
        }
        m
    }
}

/// `a†_p` (when `dagger`) or `a_p` as a two-term Pauli sum on `n` qubits.
pub fn jw_ladder_operator(p: usize, n: usize, dagger: bool) -> Result<PauliSum, EncodingError> {
    if p >= n {
        return Err(EncodingError::Range { index: p, n });
    }
    if n > 64 {
        return Err(EncodingError::TooManyQubits(n));
    }
    let z = PauliWord::z_string(0..p);
    let x = PauliWord::single(p, 'X');
    let y = PauliWord::single(p, 'Y');
    let (_, zx) = z.mul(x);
    let (_, zy) = z.mul(y);
    // Z commutes past disjoint qubits, so the products carry no phase.
    let y_coeff = if dagger { -0.5 } else { 0.5 };
    let mut s = PauliSum::new(n);
    s.add(zx, Complex64::new(0.5, 0.0));
    s.add(zy, Complex64::new(0.0, y_coeff));
    Ok(s)
}

/// Real-coefficient qubit Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliHamiltonian {
    n_qubits: usize,
    terms: Vec<(f64, PauliWord)>,
}

impl PauliHamiltonian {
    /// Converts a Pauli sum, rejecting imaginary residues above tolerance.
    pub fn from_sum(sum: &PauliSum) -> Result<Self, EncodingError> {
        let mut terms = Vec::with_capacity(sum.len());
        for (w, c) in sum.terms() {
            if c.im.abs() > IMAGINARY_TOLERANCE {
                return Err(EncodingError::ImaginaryCoefficient {
                    word: w.to_string_n(sum.n_qubits()),
                    imag: c.im,
                });
            }
            if c.re.abs() >= PRUNE_TOLERANCE {
                terms.push((c.re, w));
            }
        }
        Ok(Self {
            n_qubits: sum.n_qubits(),
            terms,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliWord)] {
        &self.terms
    }

    /// Terms as `(coefficient, word string)`.
    pub fn labelled_terms(&self) -> Vec<(f64, String)> {
        self.terms
            .iter()
            .map(|&(c, w)| (c, w.to_string_n(self.n_qubits)))
            .collect()
    }

    pub fn identity_coefficient(&self) -> f64 {
        self.terms
            .iter()
            .find(|(_, w)| *w == PauliWord::IDENTITY)
            .map_or(0.0, |t| t.0)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut s = PauliSum::new(self.n_qubits);
        for &(c, w) in &self.terms {
            s.add(w, Complex64::new(c, 0.0));
        }
        s.to_dense()
    }

    /// Real sparse matrix over the full `2^n` space.
    pub fn to_sparse(&self) -> Result<SparseOperator, EncodingError> {
        if self.n_qubits > 30 {
            return Err(EncodingError::TooManyQubits(self.n_qubits));
        }
        let mut groups: BTreeMap<u64, Vec<(f64, PauliWord)>> = BTreeMap::new();
        for &(c, w) in &self.terms {
            if w.y_count() % 2 == 1 {
                return Err(EncodingError::ImaginaryCoefficient {
                    word: w.to_string_n(self.n_qubits),
                    imag: c,
                });
            }
            groups.entry(w.x).or_default().push((c, w));
        }
        let dim = 1usize << self.n_qubits;
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in 0..dim as u64 {
            for (&x, group) in &groups {
                let col = row ^ x;
                let v: f64 = group.iter().map(|&(c, w)| c * w.phase_on(col).re).sum();
                if v.abs() >= PRUNE_TOLERANCE {
                    cols.push(col as u32);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(SparseOperator {
            dim,
            row_ptr,
            cols,
            vals,
        })
    }
}

/// Real square matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols: Vec<u32> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c as u32);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `out = A · x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (r, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *o = acc;
        }
    }

    pub fn apply_complex(&self, x: &[Complex64], out: &mut [Complex64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in lo..hi {
                acc += x[self.cols[k] as usize] * self.vals[k];
            }
            *o = acc;
        }
    }

    /// `⟨x|A|x⟩` for real `x`.
    pub fn expectation(&self, x: &[f64]) -> f64 {
        (0..self.dim)
            .map(|r| {
                let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
                let row: f64 = (lo..hi)
                    .map(|k| self.vals[k] * x[self.cols[k] as usize])
                    .sum();
                x[r] * row
            })
            .sum()
    }

    pub fn expectation_complex(&self, x: &[Complex64]) -> Complex64 {
        let mut tmp = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply_complex(x, &mut tmp);
        x.iter().zip(&tmp).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.row_ptr[r]..self.row_ptr[r + 1])
            .find(|&k| self.cols[k] as usize == c)
            .map_or(0.0, |k| self.vals[k])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k] as usize)] += self.vals[k];
            }
        }
        m
    }
}

/// Jordan-Wigner image of the second-quantized electronic Hamiltonian
/// `E_core + Σ h_pq a†_p a_q + ½ Σ (pq|rs) a†_p a†_r a_s a_q` (spin-summed).
pub fn build_hamiltonian(
    s: &IntegralSet,
    order: SpinOrbitalOrder,
) -> Result<PauliHamiltonian, EncodingError> {
    let m = s.n_orb();
    let n = 2 * m;
    if n > 64 {
        return Err(EncodingError::TooManyQubits(n));
    }
    let mut creators = Vec::with_capacity(n);
    let mut annihilators = Vec::with_capacity(n);
    for q in 0..n {
        creators.push(jw_ladder_operator(q, n, true)?);
        annihilators.push(jw_ladder_operator(q, n, false)?);
    }
    let so = |p: usize, beta: bool| order.qubit(m, p, beta);

    let mut h = PauliSum::identity(n, Complex64::new(s.core_energy(), 0.0));
    for p in 0..m {
        for q in 0..m {
            let v = s.h(p, q);
            if v == 0.0 {
                continue;
            }
            for beta in [false, true] {
                let term = creators[so(p, beta)].mul(&annihilators[so(q, beta)]);
                h.add_scaled(&term, Complex64::new(v, 0.0));
            }
        }
    }

    // a†_p a†_r and a_t a_q products, cached per spin-orbital pair.
    let mut cc: Vec<Option<PauliSum>> = vec![None; n * n];
    let mut aa: Vec<Option<PauliSum>> = vec![None; n * n];
    for p in 0..m {
        for q in 0..m {
            for r in 0..m {
                for t in 0..m {
                    let v = s.eri(p, q, r, t);
                    if v == 0.0 {
                        continue;
                    }
                    for sigma in [false, true] {
                        for tau in [false, true] {
                            let (ps, qs) = (so(p, sigma), so(q, sigma));
                            let (rs, ts) = (so(r, tau), so(t, tau));
                            if ps == rs || qs == ts {
                                continue;
                            }
                            let left = cc[ps * n + rs]
                                .get_or_insert_with(|| creators[ps].mul(&creators[rs]));
                            let right = aa[ts * n + qs]
                                .get_or_insert_with(|| annihilators[ts].mul(&annihilators[qs]));
                            h.add_scaled(&left.mul(right), Complex64::new(0.5 * v, 0.0));
                        }
                    }
                }
            }
        }
    }
    h.prune(PRUNE_TOLERANCE);
    PauliHamiltonian::from_sum(&h)
}

/// Basis index of a determinant and the sign of `a†_{q1} ⋯ a†_{qk} |vac⟩`
/// relative to `+|index⟩` (the creation string is applied right to left).
pub fn determinant_state_index(
    occupied: &[usize],
    order: SpinOrbitalOrder,
) -> Result<(usize, f64), EncodingError> {
    let SpinOrbitalOrder::Blocked = order;
    let mut bits = 0u64;
    let mut phase = 1.0;
    for &q in occupied.iter().rev() {
        if q >= 64 {
            return Err(EncodingError::Range { index: q, n: 64 });
        }
        match create(bits, q) {
            Some((next, sign)) => {
                bits = next;
                phase *= sign;
            }
            None => return Err(EncodingError::Exclusion(q)),
        }
    }
    Ok((bits as usize, phase))
}
