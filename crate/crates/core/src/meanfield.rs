//! Restricted closed-shell Hartree-Fock quantities and spin-orbital MP2.
//!
//! The integral set is assumed to already be expressed in molecular orbitals,
//! with the lowest `N/2` spatial orbitals doubly occupied. Spin orbitals use
//! the blocked layout: `p < M` is spatial orbital `p` with spin α and
//! `M + p` is the same spatial orbital with spin β.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::fcidump::IntegralSet;

/// Largest Fock off-diagonal tolerated when computing MP2 amplitudes.
pub const CANONICAL_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum MeanFieldError {
    #[error("closed-shell reference requires an even electron count, got {0}")]
    OddElectronCount(usize),
    #[error("closed-shell reference requires MS2 = 0, got {0}")]
    OpenShell(i32),
    #[error(
        "orbitals are not canonical: |F[{p}][{q}]| = {value:.3e} exceeds {CANONICAL_TOLERANCE:e}; \
         semicanonicalize the orbitals before running MP2"
    )]
    NonCanonical { p: usize, q: usize, value: f64 },
    #[error("singular MP2 denominator for excitation ({i},{j}) -> ({a},{b})")]
    SingularDenominator {
        i: usize,
        j: usize,
        a: usize,
        b: usize,
    },
    #[error("amplitudes do not belong to this integral set: {0}")]
    Mismatch(String),
}

fn closed_shell_occupied(s: &IntegralSet) -> Result<usize, MeanFieldError> {
    if !s.n_elec().is_multiple_of(2) {
        return Err(MeanFieldError::OddElectronCount(s.n_elec()));
    }
    if s.ms2() != 0 {
        return Err(MeanFieldError::OpenShell(s.ms2()));
    }
    Ok(s.n_elec() / 2)
}

/// Closed-shell Fock matrix `F = h + Σ_i [2(pq|ii) − (pi|iq)]`.
pub fn fock_matrix(s: &IntegralSet) -> Result<DMatrix<f64>, MeanFieldError> {
    let n_occ = closed_shell_occupied(s)?;
    let m = s.n_orb();
    Ok(DMatrix::from_fn(m, m, |p, q| {
        let mut f = s.h(p, q);
        for i in 0..n_occ {
            f += 2.0 * s.eri(p, q, i, i) - s.eri(p, i, i, q);
        }
        f
    }))
}

/// Closed-shell Hartree-Fock energy including the core energy.
pub fn hf_energy(s: &IntegralSet) -> Result<f64, MeanFieldError> {
    let n_occ = closed_shell_occupied(s)?;
    let mut e = s.core_energy();
    for i in 0..n_occ {
        e += 2.0 * s.h(i, i);
        for j in 0..n_occ {
            e += 2.0 * s.eri(i, i, j, j) - s.eri(i, j, j, i);
        }
    }
    Ok(e)
}

/// Antisymmetrized physicists' integral `⟨pq||rs⟩` over blocked spin orbitals.
pub fn antisym_integral(s: &IntegralSet, p: usize, q: usize, r: usize, t: usize) -> f64 {
    let m = s.n_orb();
    let (sp, sq, sr, st) = (p / m, q / m, r / m, t / m);
    let (p0, q0, r0, t0) = (p % m, q % m, r % m, t % m);
    let direct = if sp == sr && sq == st {
        s.eri(p0, r0, q0, t0)
    } else {
        0.0
    };
    let exchange = if sp == st && sq == sr {
        s.eri(p0, t0, q0, r0)
    } else {
        0.0
    };
    direct - exchange
}

/// One stored amplitude `t_ij^ab` with `i < j` occupied and `a < b` virtual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleAmplitude {
    pub i: usize,
    pub j: usize,
    pub a: usize,
    pub b: usize,
    pub t: f64,
}

/// First-order doubles amplitudes in the spin-orbital basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSet {
    n_orb: usize,
    n_occ_so: usize,
    /// Spin-orbital energies (Fock diagonal, replicated per spin block).
    eps: Vec<f64>,
    occupied: Vec<usize>,
    virtuals: Vec<usize>,
    amplitudes: Vec<DoubleAmplitude>,
}

impl AmplitudeSet {
    pub fn n_orb(&self) -> usize {
        self.n_orb
    }

    pub fn n_so(&self) -> usize {
        2 * self.n_orb
    }

    pub fn n_occ_so(&self) -> usize {
        self.n_occ_so
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    /// Occupied spin orbitals of the reference determinant, ascending.
    pub fn occupied(&self) -> &[usize] {
        &self.occupied
    }

    pub fn virtuals(&self) -> &[usize] {
        &self.virtuals
    }

    /// Nonzero amplitude classes in ascending `(i, j, a, b)` order.
    pub fn amplitudes(&self) -> &[DoubleAmplitude] {
        &self.amplitudes
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// `t_ij^ab` for arbitrary index order, expanded by antisymmetry.
    pub fn get(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        if i == j || a == b {
            return 0.0;
        }
        let sign = if (i > j) != (a > b) { -1.0 } else { 1.0 };
        let (i, j) = (i.min(j), i.max(j));
        let (a, b) = (a.min(b), a.max(b));
        self.amplitudes
            .binary_search_by(|x| (x.i, x.j, x.a, x.b).cmp(&(i, j, a, b)))
            .map(|k| sign * self.amplitudes[k].t)
            .unwrap_or(0.0)
    }

    /// Builds an amplitude set by hand; entries are canonicalized and sorted.
    pub fn from_parts(
        n_orb: usize,
        occupied: Vec<usize>,
        eps: Vec<f64>,
        mut amplitudes: Vec<DoubleAmplitude>,
    ) -> Self {
        let n_so = 2 * n_orb;
        let virtuals = (0..n_so).filter(|p| !occupied.contains(p)).collect();
        for x in &mut amplitudes {
            if x.i > x.j {
                std::mem::swap(&mut x.i, &mut x.j);
                x.t = -x.t;
            }
            if x.a > x.b {
                std::mem::swap(&mut x.a, &mut x.b);
                x.t = -x.t;
            }
        }
        amplitudes.sort_by_key(|x| (x.i, x.j, x.a, x.b));
        Self {
            n_orb,
            n_occ_so: occupied.len(),
            eps,
            occupied,
            virtuals,
            amplitudes,
        }
    }
}

/// Spin-orbital MP2 amplitudes `t_ij^ab = ⟨ij||ab⟩ / (ε_i + ε_j − ε_a − ε_b)`.
pub fn mp2_amplitudes(s: &IntegralSet) -> Result<AmplitudeSet, MeanFieldError> {
    let n_occ = closed_shell_occupied(s)?;
    let fock = fock_matrix(s)?;
    let m = s.n_orb();
    for p in 0..m {
        for q in 0..p {
            let value = fock[(p, q)];
            if value.abs() >= CANONICAL_TOLERANCE {
                return Err(MeanFieldError::NonCanonical { p, q, value });
            }
        }
    }
    let eps: Vec<f64> = (0..2 * m).map(|p| fock[(p % m, p % m)]).collect();
    let occupied: Vec<usize> = (0..n_occ).chain(m..m + n_occ).collect();
    let virtuals: Vec<usize> = (n_occ..m).chain(m + n_occ..2 * m).collect();

    let mut amplitudes = Vec::new();
    for (x, &i) in occupied.iter().enumerate() {
        for &j in &occupied[x + 1..] {
            for (y, &a) in virtuals.iter().enumerate() {
                for &b in &virtuals[y + 1..] {
                    let v = antisym_integral(s, i, j, a, b);
                    if v == 0.0 {
                        continue;
                    }
                    let denom = eps[i] + eps[j] - eps[a] - eps[b];
                    if denom.abs() < 1e-12 {
                        return Err(MeanFieldError::SingularDenominator { i, j, a, b });
                    }
                    amplitudes.push(DoubleAmplitude {
                        i,
                        j,
                        a,
                        b,
                        t: v / denom,
                    });
                }
            }
        }
    }
    // Occupied α then β keeps (i, j) ascending but a β-virtual block can
    // precede an α-occupied index, so sort explicitly.
    amplitudes.sort_by_key(|x| (x.i, x.j, x.a, x.b));
    Ok(AmplitudeSet {
        n_orb: m,
        n_occ_so: 2 * n_occ,
        eps,
        occupied,
        virtuals,
        amplitudes,
    })
}

/// MP2 correlation energy `¼ Σ t_ij^ab ⟨ij||ab⟩`.
pub fn mp2_energy(a: &AmplitudeSet, s: &IntegralSet) -> Result<f64, MeanFieldError> {
    if a.n_orb != s.n_orb() {
        return Err(MeanFieldError::Mismatch(format!(
            "amplitudes span {} orbitals, integrals {}",
            a.n_orb,
            s.n_orb()
        )));
    }
    if a.n_occ_so != s.n_elec() {
        return Err(MeanFieldError::Mismatch(format!(
            "amplitudes have {} occupied spin orbitals, integrals {} electrons",
            a.n_occ_so,
            s.n_elec()
        )));
    }
    // Each stored class stands for the four index orderings of the full sum.
    Ok(a
        .amplitudes
        .iter()
        .map(|x| x.t * antisym_integral(s, x.i, x.j, x.a, x.b))
        .sum())
}
