use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use qida_core::ansatz::ParentSequence;
use qida_core::harness::ResourceGrid;
use qida_core::states::QmiMatrix;
use qida_core::vqe::{runs_from_csv, RUNS_CSV_HEADER};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn qida(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qida"))
        .args(args)
        .env_remove("QIDA_OUT_DIR")
        .output()
        .expect("spawn qida")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "qida failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn info_reports_register_size() {
    let h2 = fixture("h2_631g.fcidump");
    let stdout = ok(&qida(&["info", h2.to_str().unwrap()]));
    assert!(stdout.contains("8 qubits"), "{stdout}");
    assert!(stdout.contains("orbitals:        4"), "{stdout}");
    assert!(stdout.contains("electrons:       2"));

    let small = fixture("h2_sto3g.fcidump");
    let stdout = ok(&qida(&["info", small.to_str().unwrap()]));
    assert!(stdout.contains("pauli terms:     15"), "{stdout}");
}

const TOY: &str = "&FCI NORB=1,NELEC=2,MS2=0,\n ORBSYM=1,\n ISYM=1,\n&END\n 0.5 1 1 1 1\n -1.0 1 1 0 0\n 0.0 0 0 0 0\n";

#[test]
fn closed_shell_toy_gives_zero_qmi_and_empty_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let toy = d.join("toy.fcidump");
    fs::write(&toy, TOY).unwrap();
    let csv = d.join("q.csv");
    let rotated = d.join("toy_no.fcidump");
    ok(&qida(&[
        "qmi",
        toy.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--integrals-out",
        rotated.to_str().unwrap(),
    ]));
    let q = QmiMatrix::from_csv(&fs::read_to_string(&csv).unwrap()).unwrap();
    assert!(q.normalized().iter().all(|&v| v == 0.0));

    let stdout = ok(&qida(&["info", rotated.to_str().unwrap()]));
    assert!(stdout.contains("label:           NO"), "{stdout}");

    let seq = d.join("s.json");
    ok(&qida(&["ansatz", csv.to_str().unwrap(), "--out", seq.to_str().unwrap()]));
    let s = ParentSequence::from_json(&fs::read_to_string(&seq).unwrap()).unwrap();
    assert!(s.is_empty());
}

#[test]
fn single_pair_qmi_gives_single_pair_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("q.csv");
    fs::write(&csv, "i,j,raw,normalized\n0,1,0.0,0.0\n0,2,0.3,1.0\n1,2,0.0,0.0\n").unwrap();
    let seq = dir.path().join("s.json");
    ok(&qida(&["ansatz", csv.to_str().unwrap(), "--reduce", "--out", seq.to_str().unwrap()]));
    let s = ParentSequence::from_json(&fs::read_to_string(&seq).unwrap()).unwrap();
    assert_eq!(s.pairs(), &[(0, 2)]);
    assert!(s.reduced());
}

#[test]
fn empty_fcidump_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("empty.fcidump");
    fs::write(&f, "").unwrap();
    let out = qida(&["info", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse"));
}

#[test]
fn qmi_ansatz_vqe_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let h2 = fixture("h2_631g.fcidump");
    let qmi = d.join("q.csv");
    let seq = d.join("s.json");
    let runs = d.join("r.csv");

    let stdout = ok(&qida(&["qmi", h2.to_str().unwrap(), "--out", qmi.to_str().unwrap()]));
    assert!(stdout.contains("pairs above 0.5: 6"), "{stdout}");
    let text = fs::read_to_string(&qmi).unwrap();
    assert!(text.starts_with("i,j,raw,normalized\n"));
    let q = QmiMatrix::from_csv(&text).unwrap();
    assert_eq!(q.n(), 8);
    assert!(stdout.contains("vs FCI/NO"));

    ok(&qida(&["ansatz", qmi.to_str().unwrap(), "--mu", "0.5", "--out", seq.to_str().unwrap()]));
    let s = ParentSequence::from_json(&fs::read_to_string(&seq).unwrap()).unwrap();
    assert_eq!(s.len(), 6);
    assert_eq!(s.provenance().unwrap().to_string(), "MP2/NO");

    let stdout = ok(&qida(&[
        "--jobs",
        "1",
        "vqe",
        h2.to_str().unwrap(),
        seq.to_str().unwrap(),
        "--restarts",
        "3",
        "--seed",
        "7",
        "--out",
        runs.to_str().unwrap(),
    ]));
    assert!(stdout.contains("6 CNOTs"), "{stdout}");
    let text = fs::read_to_string(&runs).unwrap();
    let again = d.join("r2.csv");
    ok(&qida(&[
        "vqe",
        h2.to_str().unwrap(),
        seq.to_str().unwrap(),
        "--restarts",
        "3",
        "--seed",
        "7",
        "--out",
        again.to_str().unwrap(),
    ]));
    assert_eq!(text, fs::read_to_string(&again).unwrap());
    assert!(text.starts_with(RUNS_CSV_HEADER));
    let recs = runs_from_csv(&text).unwrap();
    assert_eq!(recs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![7, 8, 9]);
    assert!(recs.iter().all(|r| r.pct_corr <= 100.0 + 1e-6));
}

#[test]
fn default_outputs_follow_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let h2 = fixture("h2_sto3g.fcidump");
    let out = Command::new(env!("CARGO_BIN_EXE_qida"))
        .args(["qmi", h2.to_str().unwrap(), "--state", "fci", "--basis", "hfco"])
        .env("QIDA_OUT_DIR", dir.path())
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("qmi_fci_hfco.csv").exists());
}

#[test]
fn sweep_then_resources_reproduces_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        format!(
            "fcidump = {:?}\ndepths = [1, 2]\npermutations = 2\nrestarts = 3\nansatze = [\"qida\", \"ladder\"]\noutput_dir = \"archive\"\n",
            fixture("h2_sto3g.fcidump")
        ),
    )
    .unwrap();
    let stdout = ok(&qida(&["sweep", cfg.to_str().unwrap()]));
    assert!(stdout.contains("qida-mu0.5"), "{stdout}");
    let archive = dir.path().join("archive");
    let files = ["manifest.json", "summary.csv", "resource_grid.csv", "runs/qida-mu0.5/1.csv"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(archive.join(f)).unwrap()).collect();
    ok(&qida(&["sweep", cfg.to_str().unwrap()]));
    for (f, a) in files.iter().zip(&first) {
        assert!(*a == fs::read(archive.join(f)).unwrap(), "{f} differs between reruns");
    }
    for f in ["manifest.json", "summary.csv", "resource_grid.csv", "qmi/mp2_no.csv", "runs/ladder/2.csv"] {
        assert!(archive.join(f).exists(), "missing {f}");
    }
    let summary = fs::read_to_string(archive.join("summary.csv")).unwrap();
    assert!(summary.starts_with("ansatz,depth,cnots,runs,max_pct,mean_pct,within30_pct,flagged\n"));

    let original = fs::read_to_string(archive.join("resource_grid.csv")).unwrap();
    let again = dir.path().join("grid.csv");
    ok(&qida(&["resources", archive.to_str().unwrap(), "--out", again.to_str().unwrap()]));
    let a = ResourceGrid::from_csv(&original).unwrap();
    let b = ResourceGrid::from_csv(&fs::read_to_string(&again).unwrap()).unwrap();
    assert_eq!(a.cells.len(), b.cells.len());
    for (p, q) in a.cells.iter().zip(&b.cells) {
        assert_eq!((p.x, p.y, &p.winner), (q.x, q.y, &q.winner));
        match (p.value, q.value) {
            (Some(u), Some(v)) => assert!((u - v).abs() < 1e-8, "{u} vs {v}"),
            (None, None) => {}
            other => panic!("cell mismatch {other:?}"),
        }
    }
}

#[test]
fn errors_exit_nonzero_with_stage() {
    let out = qida(&["info", "/nonexistent/file.fcidump"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("qida: "));

    let dir = tempfile::tempdir().unwrap();
    let qmi = dir.path().join("q.csv");
    let h2 = fixture("h2_sto3g.fcidump");
    ok(&qida(&["qmi", h2.to_str().unwrap(), "--out", qmi.to_str().unwrap()]));
    let out = qida(&["ansatz", qmi.to_str().unwrap(), "--mu", "1.5", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ansatz"));

    let out = qida(&["--jobs", "0", "info", h2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
