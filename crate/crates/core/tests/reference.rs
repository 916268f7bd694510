mod common;

use common::{load, reference, FIXTURES, HARTREE_TO_KCAL};
use qida_core::encoding::{build_hamiltonian, SpinOrbitalOrder};
use qida_core::fcidump::{parse_fcidump, write_fcidump};
use qida_core::meanfield::{fock_matrix, hf_energy, mp2_amplitudes, mp2_energy};
use qida_core::states::{fci_ground_state, hf_statevector, mp2_first_order, mp2_statevector};

const ORDER: SpinOrbitalOrder = SpinOrbitalOrder::Blocked;

#[test]
fn fixtures_parse_to_reference_sizes() {
    for name in FIXTURES.iter().chain(&["h2_sto3g"]) {
        let s = load(name);
        let r = reference(name);
        assert_eq!((s.n_orb(), s.n_elec()), (r.n_orb, r.n_elec), "{name}");
    }
    let h2 = load("h2_631g");
    assert_eq!((h2.n_orb(), h2.n_elec(), h2.n_qubits()), (4, 2, 8));
}

#[test]
fn eri_0000_matches_generator() {
    for name in FIXTURES.iter().chain(&["h2_sto3g"]) {
        let s = load(name);
        assert!((s.eri_get(0, 0, 0, 0).unwrap() - reference(name).eri_0000).abs() < 1e-12, "{name}");
    }
}

#[test]
fn h2o_round_trip_is_exact() {
    let s = load("h2o_sto3g");
    let back = parse_fcidump(&write_fcidump(&s)).unwrap();
    let dev = s
        .eri_dense()
        .iter()
        .zip(back.eri_dense())
        .map(|(a, b)| (a - b).abs())
        .chain(s.h_matrix().iter().zip(back.h_matrix()).map(|(a, b)| (a - b).abs()))
        .fold((s.core_energy() - back.core_energy()).abs(), f64::max);
    assert!(dev < 1e-14, "{dev}");
}

#[test]
fn fock_diagonal_matches_orbital_energies() {
    for name in FIXTURES {
        let f = fock_matrix(&load(name)).unwrap();
        for (p, e) in reference(name).orbital_energies.iter().enumerate() {
            assert!((f[(p, p)] - e).abs() < 1e-8, "{name} orbital {p}: {} vs {e}", f[(p, p)]);
        }
    }
}

#[test]
fn hf_energy_matches_generator() {
    for name in FIXTURES {
        let e = hf_energy(&load(name)).unwrap();
        assert!((e - reference(name).e_hf).abs() < 1e-8, "{name}: {e}");
    }
}

#[test]
fn mp2_energy_matches_generator() {
    for name in FIXTURES {
        let s = load(name);
        let e = mp2_energy(&mp2_amplitudes(&s).unwrap(), &s).unwrap();
        assert!((e - reference(name).e_mp2_corr).abs() < 1e-8, "{name}: {e}");
    }
}

/// `E_MP2 = ⟨Φ_HF|(H − E_HF)|ψ⁽¹⁾⟩` with the first-order doubles state.
#[test]
fn hylleraas_identity() {
    for name in FIXTURES {
        let s = load(name);
        let a = mp2_amplitudes(&s).unwrap();
        let e2 = mp2_energy(&a, &s).unwrap();
        let h = build_hamiltonian(&s, ORDER).unwrap().to_sparse().unwrap();
        let psi1: Vec<f64> = mp2_first_order(&a, ORDER).iter().map(|c| c.re).collect();
        let mut h_psi1 = vec![0.0; psi1.len()];
        h.apply(&psi1, &mut h_psi1);
        let hf = hf_statevector(s.n_qubits(), s.n_elec(), ORDER);
        let (idx, amp) = hf.amplitudes().iter().enumerate().find(|(_, c)| c.norm() > 0.5).unwrap();
        // ⟨Φ|ψ⁽¹⁾⟩ = 0, so the E_HF term drops out.
        assert_eq!(psi1[idx], 0.0);
        let coupling = amp.re * h_psi1[idx];
        assert!((coupling - e2).abs() < 1e-10, "{name}: {coupling} vs {e2}");
    }
}

#[test]
fn fci_matches_generator_and_correlation_table() {
    let table = [("h2_631g", 15.636, 0.05), ("lih_sto3g", 12.6446, 0.05), ("h2o_sto3g", 31.006, 0.1), ("nh3_sto3g", 41.287, 0.1)];
    for (name, kcal, tol) in table {
        let s = load(name);
        let r = reference(name);
        let h = build_hamiltonian(&s, ORDER).unwrap();
        let (e, psi) = fci_ground_state(&h, s.n_elec(), s.ms2()).unwrap();
        assert!((e - r.e_fci).abs() < 1e-8, "{name}: {e} vs {}", r.e_fci);
        assert!((psi.norm() - 1.0).abs() < 1e-10);
        let ec = (e - hf_energy(&s).unwrap()) * HARTREE_TO_KCAL;
        assert!((ec + kcal).abs() <= tol, "{name}: {ec} kcal/mol");
    }
}

#[test]
fn dense_spectrum_agrees_with_sector_solver() {
    let s = load("h2_sto3g");
    let h = build_hamiltonian(&s, ORDER).unwrap();
    let dense = h.to_dense();
    let real = dense.map(|c| c.re);
    let lowest = real.symmetric_eigen().eigenvalues.min();
    let (e, _) = fci_ground_state(&h, 2, 0).unwrap();
    assert!((lowest - e).abs() < 1e-10);
    assert!((e - reference("h2_sto3g").e_fci).abs() < 1e-8);
}

#[test]
fn mp2_state_energy_is_sandwiched() {
    let s = load("h2_631g");
    let r = reference("h2_631g");
    let h = build_hamiltonian(&s, ORDER).unwrap().to_sparse().unwrap();
    let psi = mp2_statevector(&mp2_amplitudes(&s).unwrap(), ORDER);
    let e = psi.expectation(&h);
    assert!(r.e_fci < e && e < r.e_hf, "{e}");
}
