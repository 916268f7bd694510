//! Small iterative eigensolvers and Krylov propagators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of [`lanczos_lowest`].
#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Lowest eigenpair of a real symmetric operator by Lanczos iteration with
/// full reorthogonalization, restarted from the current Ritz vector until
/// `‖Ax − λx‖ < tol`.
pub fn lanczos_lowest<F>(apply: F, start: &[f64], tol: f64, max_basis: usize) -> LanczosResult
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = start.len();
    let max_basis = max_basis.clamp(1, dim.max(1));
    let mut x = start.to_vec();
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);

    let mut total = 0;
    let mut best = LanczosResult {
        value: f64::NAN,
        vector: x.clone(),
        residual: f64::INFINITY,
        iterations: 0,
    };
    for _restart in 0..50 {
        let mut basis: Vec<Vec<f64>> = vec![x.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![0.0; dim];
        let y: DVector<f64> = loop {
            let k = basis.len() - 1;
            apply(&basis[k], &mut w);
            total += 1;
            let alpha = dot(&basis[k], &w);
            alphas.push(alpha);
            // Two passes of classical Gram-Schmidt against the whole basis.
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let beta = norm(&w);

            let m = alphas.len();
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alphas[i]
                } else if i + 1 == j {
                    betas[i]
                } else if j + 1 == i {
                    betas[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let (imin, _) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            let y = eig.eigenvectors.column(imin).into_owned();
            let estimate = beta * y[m - 1].abs();
            if estimate < tol * 0.1 || beta < 1e-14 || m >= max_basis {
                break y;
            }
            betas.push(beta);
            basis.push(w.iter().map(|v| v / beta).collect());
        };
        let mut next = vec![0.0; dim];
        for (v, &c) in basis.iter().zip(y.iter()) {
            next.iter_mut().zip(v).for_each(|(ni, vi)| *ni += c * vi);
        }
        let nn = norm(&next);
        next.iter_mut().for_each(|v| *v /= nn);
        apply(&next, &mut w);
        total += 1;
        let value = dot(&next, &w);
        let residual = w
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - value * b).powi(2))
            .sum::<f64>()
            .sqrt();
        best = LanczosResult {
            value,
            vector: next.clone(),
            residual,
            iterations: total,
        };
        if residual < tol {
            break;
        }
        x = next;
    }
    best
}

/// `exp(A) v` for a real operator `A` acting on complex vectors, by Arnoldi
/// projection with adaptive time stepping. Each substep stops growing its
/// Krylov basis once the a-posteriori error estimate drops below `tol`.
pub fn expm_action<F>(apply: F, v: &[Complex64], tol: f64, max_basis: usize) -> Vec<Complex64>
where
    F: Fn(&[Complex64], &mut [Complex64]),
{
    let dim = v.len();
    let mut out = v.to_vec();
    let mut remaining = 1.0f64;
    let mut step = 1.0f64;
    let cdot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    };
    let cnorm = |a: &[Complex64]| a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();

    while remaining > 0.0 {
        let dt = step.min(remaining);
        let beta0 = cnorm(&out);
        if beta0 == 0.0 {
            return out;
        }
        let mut basis: Vec<Vec<Complex64>> = vec![out.iter().map(|x| x / beta0).collect()];
        let mut hess = DMatrix::<Complex64>::zeros(max_basis + 1, max_basis + 1);
        let mut w = vec![Complex64::new(0.0, 0.0); dim];
        let mut accepted: Option<Vec<Complex64>> = None;
        for k in 0..max_basis {
            apply(&basis[k], &mut w);
            w.iter_mut().for_each(|x| *x *= dt);
            for _ in 0..2 {
                for (i, vi) in basis.iter().enumerate() {
                    let c = cdot(vi, &w);
                    hess[(i, k)] += c;
                    w.iter_mut().zip(vi).for_each(|(wi, v)| *wi -= c * v);
                }
            }
            let h_next = cnorm(&w);
            let m = k + 1;
            let small = hess.view((0, 0), (m, m)).into_owned().exp();
            let coeffs: Vec<Complex64> = (0..m).map(|i| small[(i, 0)]).collect();
            let err = beta0 * h_next * coeffs[m - 1].norm();
            if err < tol || h_next < 1e-14 {
                let mut next = vec![Complex64::new(0.0, 0.0); dim];
                for (vi, &c) in basis.iter().zip(&coeffs) {
                    next.iter_mut().zip(vi).for_each(|(n, v)| *n += c * beta0 * v);
                }
                accepted = Some(next);
                break;
            }
            hess[(m, k)] = Complex64::new(h_next, 0.0);
            basis.push(w.iter().map(|x| x / h_next).collect());
        }
        match accepted {
            Some(next) => {
                out = next;
                remaining -= dt;
            }
            None => {
                step = dt / 2.0;
                assert!(step > 1e-12, "Krylov exponential failed to converge");
            }
        }
    }
    out
}
