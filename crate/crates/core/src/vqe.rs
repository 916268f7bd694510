//! Real statevector simulation of R_Y/CNOT circuits and quasi-Newton VQE.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::ansatz::{CircuitSpec, Gate};
use crate::encoding::SparseOperator;
use crate::states::Statevector;

/// Runs whose `⟨N̂⟩` deviates from the target by more than this are flagged.
pub const PARTICLE_NUMBER_FLAG: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum VqeError {
    #[error("expected {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error("circuit acts on {circuit} qubits but the Hamiltonian has dimension {dim}")]
    Dimension { circuit: usize, dim: usize },
    #[error("restart count must be at least 1")]
    NoRestarts,
    #[error("malformed runs CSV at line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

fn apply_ry(psi: &mut [f64], q: usize, theta: f64) {
    let (s, c) = (theta * 0.5).sin_cos();
    let bit = 1usize << q;
    let dim = psi.len();
    let mut base = 0;
    while base < dim {
        for i in base..base + bit {
            let (a, b) = (psi[i], psi[i | bit]);
            psi[i] = c * a - s * b;
            psi[i | bit] = s * a + c * b;
        }
        base += bit << 1;
    }
}

fn apply_cnot(psi: &mut [f64], control: usize, target: usize) {
    let (cb, tb) = (1usize << control, 1usize << target);
    for i in 0..psi.len() {
        if i & cb != 0 && i & tb == 0 {
            psi.swap(i, i | tb);
        }
    }
}

fn check(c: &CircuitSpec, params: &[f64], h: Option<&SparseOperator>) -> Result<(), VqeError> {
    if params.len() != c.parameter_count() {
        return Err(VqeError::ParameterCount {
            expected: c.parameter_count(),
            got: params.len(),
        });
    }
    if let Some(h) = h {
        if h.dim() != 1usize << c.n_qubits() {
            return Err(VqeError::Dimension {
                circuit: c.n_qubits(),
                dim: h.dim(),
            });
        }
    }
    Ok(())
}

fn forward(c: &CircuitSpec, params: &[f64]) -> Vec<f64> {
    let mut psi = vec![0.0; 1usize << c.n_qubits()];
    psi[0] = 1.0;
    for g in c.gates() {
        match *g {
            Gate::Ry { qubit, param } => apply_ry(&mut psi, qubit, params[param]),
            Gate::Cnot { control, target } => apply_cnot(&mut psi, control, target),
        }
    }
    psi
}

/// Real amplitudes of the circuit applied to `|0…0⟩`.
pub fn simulate_real(c: &CircuitSpec, params: &[f64]) -> Result<Vec<f64>, VqeError> {
    check(c, params, None)?;
    Ok(forward(c, params))
}

pub fn simulate(c: &CircuitSpec, params: &[f64]) -> Result<Statevector, VqeError> {
    let psi = simulate_real(c, params)?;
    Ok(Statevector::from_real(c.n_qubits(), &psi).expect("circuit output is normalized"))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn energy_unchecked(c: &CircuitSpec, params: &[f64], h: &SparseOperator) -> f64 {
    h.expectation(&forward(c, params))
}

pub fn energy(c: &CircuitSpec, params: &[f64], h: &SparseOperator) -> Result<f64, VqeError> {
    check(c, params, Some(h))?;
    Ok(energy_unchecked(c, params, h))
}

/// Energy and its exact gradient by a reverse (adjoint) sweep.
fn energy_and_gradient_unchecked(c: &CircuitSpec, params: &[f64], h: &SparseOperator) -> (f64, Vec<f64>) {
    let mut phi = forward(c, params);
    let mut lambda = vec![0.0; phi.len()];
    h.apply(&phi, &mut lambda);
    let e = dot(&phi, &lambda);
    let mut grad = vec![0.0; params.len()];
    let mut mu = vec![0.0; phi.len()];
    for g in c.gates().iter().rev() {
        match *g {
            Gate::Ry { qubit, param } => {
                let theta = params[param];
                apply_ry(&mut phi, qubit, -theta);
                // dR_Y(θ)/dθ = R_Y(θ + π) / 2
                mu.copy_from_slice(&phi);
                apply_ry(&mut mu, qubit, theta + PI);
                grad[param] += dot(&lambda, &mu);
                apply_ry(&mut lambda, qubit, -theta);
            }
            Gate::Cnot { control, target } => {
                apply_cnot(&mut phi, control, target);
                apply_cnot(&mut lambda, control, target);
            }
        }
    }
    (e, grad)
}

pub fn energy_and_gradient(
    c: &CircuitSpec,
    params: &[f64],
    h: &SparseOperator,
) -> Result<(f64, Vec<f64>), VqeError> {
    check(c, params, Some(h))?;
    Ok(energy_and_gradient_unchecked(c, params, h))
}

pub fn gradient(c: &CircuitSpec, params: &[f64], h: &SparseOperator) -> Result<Vec<f64>, VqeError> {
    Ok(energy_and_gradient(c, params, h)?.1)
}

/// `⟨N̂⟩` of a real statevector in the occupation-number basis.
pub fn particle_number(psi: &[f64]) -> f64 {
    psi.iter()
        .enumerate()
        .map(|(b, a)| a * a * b.count_ones() as f64)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqeOptions {
    pub max_iterations: usize,
    pub energy_tolerance: f64,
    pub gradient_tolerance: f64,
}

impl Default for VqeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            energy_tolerance: 1e-9,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqeRun {
    pub seed: u64,
    pub initial_params: Vec<f64>,
    pub final_params: Vec<f64>,
    pub final_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A non-finite energy or gradient was encountered; the last finite
    /// iterate is reported.
    pub failed: bool,
    pub particle_number_expectation: f64,
    pub energy_trace: Vec<f64>,
}

impl VqeRun {
    /// True when `|⟨N̂⟩ − n_elec|` exceeds [`PARTICLE_NUMBER_FLAG`].
    pub fn particle_number_flagged(&self, n_elec: usize) -> bool {
        (self.particle_number_expectation - n_elec as f64).abs() > PARTICLE_NUMBER_FLAG
    }
}

/// Initial angles uniform in `[−π, π)` from ChaCha8 seeded with `seed`.
pub fn initial_parameters(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen_range(-PI..PI)).collect()
}

pub fn minimize(c: &CircuitSpec, h: &SparseOperator, seed: u64) -> Result<VqeRun, VqeError> {
    minimize_with(c, h, seed, &VqeOptions::default())
}

/// BFGS with Armijo backtracking from random initial angles.
pub fn minimize_with(
    c: &CircuitSpec,
    h: &SparseOperator,
    seed: u64,
    opts: &VqeOptions,
) -> Result<VqeRun, VqeError> {
    let initial = initial_parameters(c.parameter_count(), seed);
    check(c, &initial, Some(h))?;
    let n = initial.len();
    let mut x = DVector::from_vec(initial.clone());
    let (mut f, g0) = energy_and_gradient_unchecked(c, x.as_slice(), h);
    let mut g = DVector::from_vec(g0);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![f];
    let mut converged = false;
    let mut failed = !f.is_finite() || g.iter().any(|v| !v.is_finite());
    let mut iterations = 0;
    let mut fresh = true;

    if !failed && g.amax() < opts.gradient_tolerance {
        converged = true;
    }
    while !failed && !converged && iterations < opts.max_iterations {
        let mut p = -(&hinv * &g);
        let mut slope = g.dot(&p);
        if slope >= 0.0 {
            hinv.fill_with_identity();
            fresh = true;
            p = -g.clone();
            slope = g.dot(&p);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &p * alpha;
            let ft = energy_unchecked(c, trial.as_slice(), h);
            if !ft.is_finite() {
                failed = true;
                break;
            }
            if ft <= f + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if !failed && !fresh {
                // Curvature model went stale; retry along the gradient.
                hinv.fill_with_identity();
                fresh = true;
                continue;
            }
            break;
        };
        let (_, g_new) = energy_and_gradient_unchecked(c, x_new.as_slice(), h);
        let g_new = DVector::from_vec(g_new);
        if g_new.iter().any(|v| !v.is_finite()) {
            failed = true;
            break;
        }
        iterations += 1;
        trace.push(f_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-14 {
            if fresh {
                hinv *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let df = (f - f_new).abs();
        x = x_new;
        f = f_new;
        g = g_new;
        if df < opts.energy_tolerance || g.amax() < opts.gradient_tolerance {
            converged = true;
        }
    }

    let psi = forward(c, x.as_slice());
    Ok(VqeRun {
        seed,
        initial_params: initial,
        final_params: x.as_slice().to_vec(),
        final_energy: f,
        iterations,
        converged,
        failed,
        particle_number_expectation: particle_number(&psi),
        energy_trace: trace,
    })
}

/// Restarts with seeds `base_seed..base_seed + n_restarts`, ordered by seed.
pub fn run_batch(
    c: &CircuitSpec,
    h: &SparseOperator,
    n_restarts: usize,
    base_seed: u64,
) -> Result<Vec<VqeRun>, VqeError> {
    run_batch_with(c, h, n_restarts, base_seed, &VqeOptions::default())
}

pub fn run_batch_with(
    c: &CircuitSpec,
    h: &SparseOperator,
    n_restarts: usize,
    base_seed: u64,
    opts: &VqeOptions,
) -> Result<Vec<VqeRun>, VqeError> {
    if n_restarts == 0 {
        return Err(VqeError::NoRestarts);
    }
    (0..n_restarts as u64)
        .into_par_iter()
        .map(|k| minimize_with(c, h, base_seed + k, opts))
        .collect()
}

/// One exported row of a runs table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub final_energy: f64,
    pub pct_corr: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_expectation: f64,
}

pub const RUNS_CSV_HEADER: &str = "seed,final_energy,pct_corr,iterations,converged,n_expectation";

impl RunRecord {
    /// `pct_corr = 100 (E − E_HF) / (E_FCI − E_HF)`.
    pub fn from_run(run: &VqeRun, e_hf: f64, e_fci: f64) -> Self {
        Self {
            seed: run.seed,
            final_energy: run.final_energy,
            pct_corr: 100.0 * (run.final_energy - e_hf) / (e_fci - e_hf),
            iterations: run.iterations,
            converged: run.converged,
            n_expectation: run.particle_number_expectation,
        }
    }
}

pub fn runs_to_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(RUNS_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{:.11e},{:.11e},{},{},{:.11e}\n",
            r.seed, r.final_energy, r.pct_corr, r.iterations, r.converged, r.n_expectation
        ));
    }
    out
}

pub fn runs_from_csv(text: &str) -> Result<Vec<RunRecord>, VqeError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == RUNS_CSV_HEADER => {}
        _ => {
            return Err(VqeError::Csv {
                line: 1,
                msg: format!("expected header `{RUNS_CSV_HEADER}`"),
            })
        }
    }
    lines
        .map(|(k, line)| {
            let err = |msg: String| VqeError::Csv { line: k + 1, msg };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s}: {e}")));
            Ok(RunRecord {
                seed: f[0].parse().map_err(|e| err(format!("{}: {e}", f[0])))?,
                final_energy: num(f[1])?,
                pct_corr: num(f[2])?,
                iterations: f[3].parse().map_err(|e| err(format!("{}: {e}", f[3])))?,
                converged: f[4].parse().map_err(|e| err(format!("{}: {e}", f[4])))?,
                n_expectation: num(f[5])?,
            })
        })
        .collect()
}
