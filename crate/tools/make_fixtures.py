"""Regenerate the FCIDUMP fixtures and their reference energies.

Requires PySCF. Writes into crates/core/tests/fixtures/.
"""
import json
import os

import numpy as np

from pyscf import ao2mo, gto, mcscf, mp, scf
from pyscf.tools import fcidump

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "fixtures")

SYSTEMS = {
    "h2_sto3g": ("H 0 0 0; H 0 0 0.74", "sto-3g", 0),
    "h2_631g": ("H 0 0 0; H 0 0 0.74", "6-31g", 0),
    "lih_sto3g": ("Li 0 0 0; H 0 0 1.595", "sto-3g", 1),
    "h2o_sto3g": ("O 0 0 0; H 0.757 0.586 0; H -0.757 0.586 0", "sto-3g", 1),
    "nh3_sto3g": (
        "N 0 0 0.1211; H 0 0.9306 -0.2826; H 0.8059 -0.4653 -0.2826; H -0.8059 -0.4653 -0.2826",
        "sto-3g",
        1,
    ),
}


def main():
    os.makedirs(OUT, exist_ok=True)
    for name, (atom, basis, n_frozen) in SYSTEMS.items():
        mol = gto.M(atom=atom, basis=basis, unit="Angstrom", verbose=0)
        mf = scf.RHF(mol)
        mf.conv_tol = 1e-12
        mf.conv_tol_grad = 1e-10
        mf.kernel()
        # Diagonal of the Fock matrix built from the final density, not the
        # eigenvalues of the previous iteration's Fock matrix.
        fock = mf.mo_coeff.T @ mf.get_fock() @ mf.mo_coeff
        eps = np.diag(fock)
        n_mo = mf.mo_coeff.shape[1]
        n_act = n_mo - n_frozen
        n_elec = mol.nelectron - 2 * n_frozen

        cas = mcscf.CASCI(mf, n_act, n_elec)
        cas.fcisolver.conv_tol = 1e-13
        e_fci = cas.kernel()[0]
        h1, e_core = cas.get_h1eff()
        h2 = ao2mo.restore(8, cas.get_h2eff(), n_act)

        mp2 = mp.MP2(mf, frozen=n_frozen if n_frozen else None)
        e_mp2 = mp2.kernel()[0]

        fcidump.from_integrals(
            os.path.join(OUT, f"{name}.fcidump"),
            h1,
            h2,
            n_act,
            n_elec,
            nuc=e_core,
            ms=0,
            tol=1e-15,
            float_format=" %.17e",
        )
        ref = {
            "name": name,
            "atom": atom,
            "basis": basis,
            "n_frozen": n_frozen,
            "n_orb": n_act,
            "n_elec": n_elec,
            "e_hf": mf.e_tot,
            "e_fci": e_fci,
            "e_mp2_corr": e_mp2,
            "orbital_energies": [float(e) for e in eps[n_frozen:]],
            "eri_0000": float(ao2mo.restore(1, h2, n_act)[0, 0, 0, 0]),
        }
        with open(os.path.join(OUT, f"{name}.ref.json"), "w") as f:
            json.dump(ref, f, indent=2)
            f.write("\n")
        print(name, n_act, n_elec, e_fci - mf.e_tot)


if __name__ == "__main__":
    main()
