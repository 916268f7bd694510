mod common;

use qida_core::encoding::{build_hamiltonian, SparseOperator, SpinOrbitalOrder};
use qida_core::fcidump::IntegralSet;
use qida_core::meanfield::mp2_amplitudes;
use qida_core::natorb::{
    natural_orbitals, one_body_rdm_spatial, rotate_statevector, transform_integrals, OrbitalRotation,
};
use qida_core::states::{fci_ground_state_sparse, hf_statevector, mp2_statevector, Statevector};

const ORDER: SpinOrbitalOrder = SpinOrbitalOrder::Blocked;

fn hamiltonian(s: &IntegralSet) -> SparseOperator {
    build_hamiltonian(s, ORDER).unwrap().to_sparse().unwrap()
}

fn fci_energy(s: &IntegralSet) -> f64 {
    fci_ground_state_sparse(&hamiltonian(s), s.n_qubits(), s.n_elec(), s.ms2()).unwrap().0
}

fn mp2_no(s: &IntegralSet) -> (Statevector, OrbitalRotation) {
    let psi = mp2_statevector(&mp2_amplitudes(s).unwrap(), ORDER);
    let r = natural_orbitals(&one_body_rdm_spatial(&psi, ORDER)).unwrap();
    (psi, r)
}

#[test]
fn mp2_rdm_trace_and_occupations() {
    for name in common::FIXTURES {
        let s = common::load(name);
        let psi = mp2_statevector(&mp2_amplitudes(&s).unwrap(), ORDER);
        let d = one_body_rdm_spatial(&psi, ORDER);
        assert!((d.trace() - s.n_elec() as f64).abs() < 1e-12, "{name}");
        let r = natural_orbitals(&d).unwrap();
        let occ = r.occupations();
        assert!((occ.iter().sum::<f64>() - s.n_elec() as f64).abs() < 1e-12);
        assert!(occ.iter().all(|&o| o > 0.0 && o < 2.0), "{name}: {occ:?}");
        // LiH has a degenerate π pair; H2 must be strictly ordered.
        assert!(occ.windows(2).all(|w| w[0] >= w[1] - 1e-12), "{name}: {occ:?}");
        if name == "h2_631g" {
            assert!(occ.windows(2).all(|w| w[0] > w[1]), "{occ:?}");
        }
        let u = r.matrix();
        assert!((u.transpose() * u - nalgebra::DMatrix::identity(u.nrows(), u.nrows())).amax() < 1e-12);
        assert!((u.determinant() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn fci_energy_is_basis_invariant() {
    for name in ["h2_631g", "h2o_sto3g"] {
        let s = common::load(name);
        let (_, r) = mp2_no(&s);
        let t = transform_integrals(&s, &r).unwrap();
        let (a, b) = (fci_energy(&s), fci_energy(&t));
        assert!((a - b).abs() < 1e-8, "{name}: {a} vs {b}");
        let g = OrbitalRotation::givens(s.n_orb(), 0, s.n_orb() - 1, 0.3);
        let c = fci_energy(&transform_integrals(&s, &g).unwrap());
        assert!((a - c).abs() < 1e-8, "{name}: {a} vs {c}");
    }
}

#[test]
fn rotated_states_keep_their_energy() {
    for name in ["h2_631g", "h2o_sto3g"] {
        let s = common::load(name);
        let (psi, r) = mp2_no(&s);
        let t = transform_integrals(&s, &r).unwrap();
        let (h, h_no) = (hamiltonian(&s), hamiltonian(&t));
        let rotated = rotate_statevector(&psi, &r, ORDER).unwrap();
        assert!((rotated.norm() - 1.0).abs() < 1e-12);
        assert!(rotated.max_imaginary() < 1e-10);
        let (a, b) = (psi.expectation(&h), rotated.expectation(&h_no));
        assert!((a - b).abs() < 1e-8, "{name}: {a} vs {b}");
        assert!((rotated.particle_number() - s.n_elec() as f64).abs() < 1e-10);

        let hf = hf_statevector(s.n_qubits(), s.n_elec(), ORDER);
        let hf_rot = rotate_statevector(&hf, &r, ORDER).unwrap();
        assert!((hf.expectation(&h) - hf_rot.expectation(&h_no)).abs() < 1e-8);
    }
}

#[test]
fn rotated_fci_state_is_the_transformed_ground_state() {
    let s = common::load("h2_631g");
    let (_, r) = mp2_no(&s);
    let t = transform_integrals(&s, &r).unwrap();
    let (_, g) = fci_ground_state_sparse(&hamiltonian(&s), 8, 2, 0).unwrap();
    let (_, g_no) = fci_ground_state_sparse(&hamiltonian(&t), 8, 2, 0).unwrap();
    let overlap = rotate_statevector(&g, &r, ORDER).unwrap().inner(&g_no).norm();
    assert!((overlap - 1.0).abs() < 1e-8, "{overlap}");
}
