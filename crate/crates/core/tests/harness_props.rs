mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use qida_core::ansatz::{reduce_first_spot, threshold_pairs, OrbitalBasis, QmiState};
use qida_core::harness::{
    load_archive, prepare_system, resource_surface, run_experiment, run_experiment_in_memory, summarize,
    AnsatzFamily, ExperimentConfig, FamilyRuns, ResourceGrid, SigmaRuns,
};
use qida_core::states::NormalizationMode;
use qida_core::vqe::RunRecord;

fn quiet(_: usize, _: usize) {}

fn minimal_h2(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(common::fixture_path("h2_631g"));
    cfg.permutations = 2;
    cfg.restarts = 3;
    cfg.depths = vec![1];
    cfg.ansatze = vec![AnsatzFamily::Qida, AnsatzFamily::Ladder, AnsatzFamily::Random];
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn assert_monotone(grid: &ResourceGrid) {
    for (a, &x) in grid.x.iter().enumerate() {
        for (b, &y) in grid.y.iter().enumerate() {
            let Some(v) = grid.get(x, y).unwrap().value else { continue };
            if b + 1 < grid.y.len() {
                if let Some(w) = grid.get(x, grid.y[b + 1]).unwrap().value {
                    assert!(w >= v - 1e-9, "y: ({x},{y}) {v} > {w}");
                }
            }
            if a + 1 < grid.x.len() {
                if let Some(w) = grid.get(grid.x[a + 1], y).unwrap().value {
                    assert!(w >= v - 1e-9, "x: ({x},{y}) {v} > {w}");
                }
            }
        }
    }
}

#[test]
fn minimal_h2_archive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = minimal_h2(dir.path());
    let res = run_experiment(&cfg, &quiet).unwrap();
    let (manifest, families) = load_archive(dir.path()).unwrap();
    assert_eq!(manifest, res.manifest);
    let count = |label: &str| families.iter().find(|f| f.label == label).unwrap().depths[&1].len();
    assert_eq!(count("qida-mu0.5"), 2 * 3);
    assert_eq!(count("ladder"), 3);
    assert_eq!(count("random"), 2 * 3);
    for f in ["qmi/mp2_no.csv", "sequences/qida-mu0.5.json", "summary.csv", "resource_grid.csv", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert_eq!(manifest.n_qubits, 8);
    assert!(manifest.e_fci < manifest.e_hf);
    let qida = manifest.families.iter().find(|f| f.label == "qida-mu0.5").unwrap();
    assert_eq!(qida.blocks.iter().map(|b| b.block_seed).collect::<Vec<_>>(), vec![Some(0), Some(1)]);
    assert_eq!(qida.blocks[1].vqe_base_seed, manifest.seed_stride);
    for fam in &families {
        for r in &fam.depths[&1] {
            assert!(r.final_energy >= manifest.e_fci - 1e-7);
        }
    }
    assert_monotone(&res.grid);
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&minimal_h2(a.path()), &quiet).unwrap();
    let mut cfg = minimal_h2(b.path());
    cfg.jobs = Some(2);
    run_experiment(&cfg, &quiet).unwrap();
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        if k != "manifest.json" {
            assert!(v == &tb[k], "{k} differs");
        }
    }
    // The manifest differs only in where it was written and the worker cap.
    let (ma, mb) = (load_archive(a.path()).unwrap().0, load_archive(b.path()).unwrap().0);
    let mut cb = mb.clone();
    cb.config.output_dir = ma.config.output_dir.clone();
    cb.config.jobs = None;
    assert_eq!(ma, cb);
}

fn family(label: &str, cnots: usize, pct: &[(usize, Vec<f64>)]) -> FamilyRuns {
    FamilyRuns {
        label: label.into(),
        cnots_per_block: cnots,
        depths: pct
            .iter()
            .map(|(d, v)| {
                let runs = v
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| RunRecord {
                        seed: k as u64,
                        final_energy: -1.0,
                        pct_corr: p,
                        iterations: 1,
                        converged: true,
                        n_expectation: 2.0,
                    })
                    .collect();
                (*d, runs)
            })
            .collect(),
    }
}

#[test]
fn summary_edge_cases() {
    let same = family("a", 2, &[(1, vec![40.0; 7])]);
    let rows = summarize(&[same], 2);
    assert_eq!(rows[0].within30_pct, 100.0);
    assert_eq!(rows[0].max_pct, rows[0].mean_pct);
    let single = family("b", 2, &[(3, vec![12.5])]);
    let rows = summarize(&[single], 2);
    assert_eq!((rows[0].max_pct, rows[0].mean_pct, rows[0].cnots), (12.5, 12.5, 6));
}

fn sigma_strategy() -> impl Strategy<Value = Vec<SigmaRuns>> {
    let one = (1usize..6, 1usize..5, 1usize..8).prop_flat_map(|(cnots, depths, runs)| {
        prop::collection::vec(prop::collection::vec(-50.0f64..100.0, runs), depths).prop_map(move |t| SigmaRuns {
            label: format!("s{cnots}"),
            cnots_per_block: cnots,
            pct_by_depth: t.into_iter().enumerate().map(|(d, v)| (d + 1, v)).collect(),
        })
    });
    prop::collection::vec(one, 1..4)
}

proptest! {
    #[test]
    fn resource_grid_is_monotone(sigmas in sigma_strategy()) {
        let x: Vec<usize> = (1..=20).collect();
        let y: Vec<usize> = (1..=8).collect();
        let grid = resource_surface(&sigmas, &x, &y);
        assert_monotone(&grid);
        for c in &grid.cells {
            prop_assert_eq!(c.value.is_some(), c.winner.is_some());
        }
    }
}

#[test]
fn h2o_sequence_sizes_follow_the_qmi() {
    let s = common::load("h2o_sto3g");
    let sys = prepare_system(&s, OrbitalBasis::No).unwrap();
    let q = sys.qmi(QmiState::Mp2, NormalizationMode::MaxOffDiagonal);
    let mut cfg = ExperimentConfig::new(common::fixture_path("h2o_sto3g"));
    cfg.mu = vec![0.5, 0.7];
    cfg.ansatze = vec![AnsatzFamily::Qida];
    cfg.permutations = 1;
    cfg.restarts = 1;
    let res = run_experiment_in_memory(&cfg, &quiet).unwrap();
    assert_eq!(res.qmi, q);
    let sizes: Vec<usize> = res.sequences.iter().map(|(_, s)| s.len()).collect();
    assert_eq!(sizes, vec![q.count_above(0.5), q.count_above(0.7)]);
    assert_eq!(res.sequences[0].1, threshold_pairs(&q, 0.5).unwrap().with_provenance(res.sequences[0].1.provenance().unwrap()));
    assert!(reduce_first_spot(&q, 0.5).unwrap().len() <= sizes[0]);
}

/// Reduced QIDA against the ladder on water: cheap QIDA circuits already beat
/// the 44-CNOT ladder on average, and the ladder only pays off with both many
/// CNOTs and many repetitions.
#[test]
fn h2o_reduced_qida_against_ladder() {
    let mut qida = ExperimentConfig::new(common::fixture_path("h2o_sto3g"));
    qida.reduced = true;
    qida.ansatze = vec![AnsatzFamily::Qida];
    qida.depths = (1..=7).collect();
    qida.permutations = 10;
    qida.restarts = 3;
    let mut lad = qida.clone();
    lad.ansatze = vec![AnsatzFamily::Ladder];
    lad.depths = (1..=4).collect();
    lad.ladder_restarts = Some(30);

    let q = run_experiment_in_memory(&qida, &quiet).unwrap();
    let l = run_experiment_in_memory(&lad, &quiet).unwrap();
    let (qf, lf) = (&q.families[0], &l.families[0]);
    assert_eq!(qf.cnots_per_block, 6);
    assert_eq!(lf.cnots_per_block, 11);
    let (q2, l4) = (qf.mean(2).unwrap(), lf.mean(4).unwrap());
    assert!(q2 > l4, "QIDA depth 2 mean {q2} vs ladder depth 4 mean {l4}");

    let sigmas = vec![SigmaRuns::from(qf), SigmaRuns::from(lf)];
    let x = [6, 12, 24, 33, 44];
    let y = [1, 2, 5, 10, 30];
    let grid = resource_surface(&sigmas, &x, &y);
    assert_monotone(&grid);
    let winner = |x, y| grid.get(x, y).unwrap().winner.clone().unwrap();
    assert_eq!(winner(24, 1), qf.label);
    for &yy in &y {
        assert_eq!(winner(6, yy), qf.label);
        assert_eq!(winner(12, yy), qf.label);
    }
    assert_eq!(winner(44, 1), qf.label);
    assert_eq!(winner(44, 30), lf.label, "{:?}", grid.get(44, 30));
}
