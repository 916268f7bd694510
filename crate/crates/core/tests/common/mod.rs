#![allow(dead_code)]

use std::path::PathBuf;

use qida_core::fcidump::IntegralSet;

pub const FIXTURES: [&str; 4] = ["h2_631g", "lih_sto3g", "h2o_sto3g", "nh3_sto3g"];
pub const HARTREE_TO_KCAL: f64 = 627.509_474_063_1;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(format!("{name}.fcidump"))
}

pub fn load(name: &str) -> IntegralSet {
    IntegralSet::from_path(fixture_path(name)).unwrap()
}

/// Values recorded by the quantum-chemistry package that generated the fixture.
pub struct Reference {
    pub n_orb: usize,
    pub n_elec: usize,
    pub e_hf: f64,
    pub e_fci: f64,
    pub e_mp2_corr: f64,
    pub orbital_energies: Vec<f64>,
    pub eri_0000: f64,
}

pub fn reference(name: &str) -> Reference {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(format!("{name}.ref.json"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let f = |k: &str| v[k].as_f64().unwrap();
    Reference {
        n_orb: v["n_orb"].as_u64().unwrap() as usize,
        n_elec: v["n_elec"].as_u64().unwrap() as usize,
        e_hf: f("e_hf"),
        e_fci: f("e_fci"),
        e_mp2_corr: f("e_mp2_corr"),
        orbital_energies: v["orbital_energies"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect(),
        eri_0000: f("eri_0000"),
    }
}
