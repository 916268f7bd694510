//! Natural orbitals, integral transformation and orbital rotation of states.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::encoding::{annihilate, create, SparseOperator, SpinOrbitalOrder};
use crate::fcidump::IntegralSet;
use crate::linalg::expm_action;
use crate::states::Statevector;

const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;
const KRYLOV_TOLERANCE: f64 = 1e-12;
const KRYLOV_MAX_BASIS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum NatorbError {
    #[error("density matrix is not symmetric (max asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("rotation is {got}x{got}, integrals have {expected} orbitals")]
    Dimension { got: usize, expected: usize },
    #[error("matrix is not orthogonal (max |UᵀU − I| = {0:.3e})")]
    NotOrthogonal(f64),
    #[error("rotation has determinant {0:.6}, expected +1")]
    Determinant(f64),
    #[error("logarithm of the rotation is not real antisymmetric: {0}")]
    Logarithm(String),
    #[error("state has {got} qubits, rotation needs {expected}")]
    Register { got: usize, expected: usize },
}

/// Orthogonal change of orbital basis; column `k` of `u` is new orbital `k`
/// expanded in the old orbitals.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalRotation {
    u: DMatrix<f64>,
    occupations: Vec<f64>,
}

impl OrbitalRotation {
    /// Validates orthogonality and `det = +1`; occupations are left empty.
    pub fn new(u: DMatrix<f64>) -> Result<Self, NatorbError> {
        let m = u.nrows();
        if u.ncols() != m {
            return Err(NatorbError::Dimension {
                got: u.ncols(),
                expected: m,
            });
        }
        let dev = (u.transpose() * &u - DMatrix::identity(m, m)).amax();
        if dev > ORTHOGONALITY_TOLERANCE {
            return Err(NatorbError::NotOrthogonal(dev));
        }
        let det = u.determinant();
        if (det - 1.0).abs() > 1e-8 {
            return Err(NatorbError::Determinant(det));
        }
        Ok(Self {
            u,
            occupations: Vec::new(),
        })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            u: DMatrix::identity(m, m),
            occupations: Vec::new(),
        }
    }

    /// Rotation by `theta` in the `(p, q)` plane.
    pub fn givens(m: usize, p: usize, q: usize, theta: f64) -> Self {
        let mut u = DMatrix::identity(m, m);
        let (s, c) = theta.sin_cos();
        u[(p, p)] = c;
        u[(q, q)] = c;
        u[(q, p)] = s;
        u[(p, q)] = -s;
        Self {
            u,
            occupations: Vec::new(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Occupation numbers in descending order (natural orbitals only).
    pub fn occupations(&self) -> &[f64] {
        &self.occupations
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }
}

/// Spin-summed one-body density matrix `D_pq = Σ_σ ⟨a†_{pσ} a_{qσ}⟩`.
pub fn one_body_rdm_spatial(psi: &Statevector, order: SpinOrbitalOrder) -> DMatrix<f64> {
    let n = psi.n_qubits();
    let m = n / 2;
    let amps = psi.amplitudes();
    let mut d = DMatrix::<Complex64>::zeros(m, m);
    for (b, &a) in amps.iter().enumerate() {
        if a == Complex64::new(0.0, 0.0) {
            continue;
        }
        for beta in [false, true] {
            for q in 0..m {
                let Some((mid, s1)) = annihilate(b as u64, order.qubit(m, q, beta)) else {
                    continue;
                };
                for p in 0..m {
                    if let Some((out, s2)) = create(mid, order.qubit(m, p, beta)) {
                        d[(p, q)] += amps[out as usize].conj() * a * (s1 * s2);
                    }
                }
            }
        }
    }
    d.map(|z| z.re)
}

/// Diagonalizes a spin-summed density matrix into natural orbitals.
///
/// Columns are sorted by descending occupation; near-equal occupations
/// (within 1e-10) are ordered by the index of each vector's dominant
/// component. Each column's largest-magnitude entry is made positive, then
/// the last column is flipped if needed so that `det U = +1`.
pub fn natural_orbitals(d: &DMatrix<f64>) -> Result<OrbitalRotation, NatorbError> {
    let m = d.nrows();
    let asym = (d - d.transpose()).amax();
    if asym > 1e-8 {
        return Err(NatorbError::Asymmetric(asym));
    }
    let sym = (d + d.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let dominant = |k: usize| -> usize {
        let col = eig.eigenvectors.column(k);
        let max = col.amax();
        (0..m).find(|&i| col[i].abs() >= max - 1e-12).unwrap_or(0)
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    // Tie-break runs of (near-)degenerate occupations.
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && (eig.eigenvalues[order[start]] - eig.eigenvalues[order[end]]).abs() < 1e-10 {
            end += 1;
        }
        order[start..end].sort_by_key(|&k| dominant(k));
        start = end;
    }

    let mut u = DMatrix::zeros(m, m);
    for (new, &k) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(k).into_owned();
        if col[dominant(k)] < 0.0 {
            col = -col;
        }
        u.set_column(new, &col);
    }
    if m > 0 && u.determinant() < 0.0 {
        let last = -u.column(m - 1).into_owned();
        u.set_column(m - 1, &last);
    }
    Ok(OrbitalRotation {
        u,
        occupations: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
    })
}

/// Expresses the integrals in the rotated orbitals: `h' = Uᵀ h U` and the
/// two-electron tensor transformed one index at a time.
pub fn transform_integrals(s: &IntegralSet, r: &OrbitalRotation) -> Result<IntegralSet, NatorbError> {
    let m = s.n_orb();
    if r.dim() != m {
        return Err(NatorbError::Dimension {
            got: r.dim(),
            expected: m,
        });
    }
    let u = &r.u;
    let h = DMatrix::from_row_slice(m, m, s.h_matrix());
    let h_new = u.transpose() * h * u;
    let h_vec: Vec<f64> = (0..m * m).map(|k| h_new[(k / m, k % m)]).collect();

    let mut t = s.eri_dense();
    let mut next = vec![0.0; t.len()];
    // Each pass rotates one index position; strides select it.
    for stride in [m * m * m, m * m, m, 1] {
        next.iter_mut().for_each(|v| *v = 0.0);
        for idx in 0..t.len() {
            let v = t[idx];
            if v == 0.0 {
                continue;
            }
            let k = (idx / stride) % m;
            let base = idx - k * stride;
            for a in 0..m {
                next[base + a * stride] += u[(k, a)] * v;
            }
        }
        std::mem::swap(&mut t, &mut next);
    }
    let mut out = s.with_dense_eri(h_vec, &t);
    out.clear_orbsym();
    let label = format!("{} NO", s.source_label());
    out.set_source_label(label.trim());
    Ok(out)
}

/// Principal logarithm of a special orthogonal matrix.
///
/// With `S = (U + Uᵀ)/2` and `A = (U − Uᵀ)/2` commuting, `log U = g(S)·A`
/// where `g(c) = arccos(c)/√(1 − c²)`. Rotation angles of exactly π (where
/// `A` vanishes) are paired up explicitly.
pub fn orthogonal_log(u: &DMatrix<f64>) -> Result<DMatrix<f64>, NatorbError> {
    let m = u.nrows();
    let s = (u + u.transpose()) * 0.5;
    let a = (u - u.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let g = |c: f64| -> f64 {
        let c = c.clamp(-1.0, 1.0);
        let x = 1.0 - c;
        if x < 1e-8 {
            1.0 + x / 3.0
        } else {
            c.acos() / (1.0 - c * c).sqrt()
        }
    };
    let mut gdiag = DMatrix::zeros(m, m);
    let mut flipped = Vec::new();
    for k in 0..m {
        let c = eig.eigenvalues[k];
        if c < -1.0 + 1e-8 {
            flipped.push(k);
        } else {
            gdiag[(k, k)] = g(c);
        }
    }
    let w = &eig.eigenvectors;
    let gs = w * gdiag * w.transpose();
    let mut kappa = gs * a;
    if flipped.len() % 2 != 0 {
        return Err(NatorbError::Logarithm(
            "odd number of inverted directions (det = −1)".into(),
        ));
    }
    for pair in flipped.chunks(2) {
        let (w1, w2) = (w.column(pair[0]), w.column(pair[1]));
        kappa += (w2 * w1.transpose() - w1 * w2.transpose()) * std::f64::consts::PI;
    }
    let asym = (&kappa + kappa.transpose()).amax();
    if asym > 1e-8 {
        return Err(NatorbError::Logarithm(format!(
            "symmetric residue {asym:.3e}"
        )));
    }
    let back = (kappa.clone()).exp();
    let dev = (back - u).amax();
    if dev > 1e-8 {
        return Err(NatorbError::Logarithm(format!(
            "exp(log U) deviates from U by {dev:.3e}"
        )));
    }
    Ok(kappa)
}

/// Real antisymmetric Fock-space operator `Σ_{pq,σ} κ_pq a†_{pσ} a_{qσ}`.
pub fn one_body_operator(kappa: &DMatrix<f64>, order: SpinOrbitalOrder) -> SparseOperator {
    let m = kappa.nrows();
    let n = 2 * m;
    let dim = 1usize << n;
    let mut triplets = Vec::new();
    for b in 0..dim as u64 {
        for beta in [false, true] {
            for q in 0..m {
                let Some((mid, s1)) = annihilate(b, order.qubit(m, q, beta)) else {
                    continue;
                };
                for p in 0..m {
                    let k = kappa[(p, q)];
                    if k == 0.0 {
                        continue;
                    }
                    if let Some((out, s2)) = create(mid, order.qubit(m, p, beta)) {
                        triplets.push((out as usize, b as usize, k * s1 * s2));
                    }
                }
            }
        }
    }
    SparseOperator::from_triplets(dim, triplets)
}

/// Re-expresses `ψ` in the rotated orbital basis: `ψ' = exp(−K) ψ` with `K`
/// the Fock-space lift of `log U`.
pub fn rotate_statevector(
    psi: &Statevector,
    r: &OrbitalRotation,
    order: SpinOrbitalOrder,
) -> Result<Statevector, NatorbError> {
    let m = r.dim();
    if psi.n_qubits() != 2 * m {
        return Err(NatorbError::Register {
            got: psi.n_qubits(),
            expected: 2 * m,
        });
    }
    let kappa = orthogonal_log(&r.u)?;
    if kappa.amax() == 0.0 {
        return Ok(psi.clone());
    }
    let k_op = one_body_operator(&kappa, order);
    let apply = |x: &[Complex64], y: &mut [Complex64]| {
        k_op.apply_complex(x, y);
        y.iter_mut().for_each(|v| *v = -*v);
    };
    let out = expm_action(apply, psi.amplitudes(), KRYLOV_TOLERANCE, KRYLOV_MAX_BASIS);
    Ok(Statevector::new(psi.n_qubits(), out).expect("rotation preserves the norm"))
}
