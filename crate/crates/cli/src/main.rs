use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use qida_core::ansatz::{
    build_circuit_with, permute, reduce_first_spot, threshold_pairs, OrbitalBasis, ParentSequence, Provenance,
    QmiState, RotationPlacement,
};
use qida_core::encoding::{build_hamiltonian, SpinOrbitalOrder};
use qida_core::fcidump::IntegralSet;
use qida_core::harness::{
    default_grid_axes, load_archive, prepare_system, resource_surface, run_experiment, ExperimentConfig,
    SigmaRuns,
};
use qida_core::meanfield::hf_energy;
use qida_core::states::{NormalizationMode, QmiMatrix};
use qida_core::vqe::{run_batch_with, runs_to_csv, RunRecord, VqeOptions};

/// Mutual-information driven ansatz construction and VQE for small molecules.
///
/// Outputs default to the directory in $QIDA_OUT_DIR (or the current
/// directory). Every command is deterministic given its inputs and seeds.
#[derive(Parser)]
#[command(name = "qida", version)]
struct Cli {
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "QIDA_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    /// Worker threads for VQE batches (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateArg {
    Mp2,
    Fci,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Hfco,
    No,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    /// Divide by the largest off-diagonal entry.
    Max,
    /// Divide by 2 ln 2.
    TwoLn2,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    /// R_Y after each block only on qubits its CNOTs touch.
    Touched,
    /// R_Y after each block on every qubit.
    AllQubits,
}

impl From<StateArg> for QmiState {
    fn from(s: StateArg) -> Self {
        match s {
            StateArg::Mp2 => QmiState::Mp2,
            StateArg::Fci => QmiState::Fci,
        }
    }
}

impl From<BasisArg> for OrbitalBasis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Hfco => OrbitalBasis::Hfco,
            BasisArg::No => OrbitalBasis::No,
        }
    }
}

impl From<NormArg> for NormalizationMode {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Max => NormalizationMode::MaxOffDiagonal,
            NormArg::TwoLn2 => NormalizationMode::TwoLn2,
        }
    }
}

impl From<PlacementArg> for RotationPlacement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Touched => RotationPlacement::Touched,
            PlacementArg::AllQubits => RotationPlacement::AllQubits,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Summarize an FCIDUMP file: orbitals, electrons, qubits, core energy,
    /// integral and Pauli term counts.
    Info {
        /// FCIDUMP file.
        fcidump: PathBuf,
    },
    /// Compute the qubit mutual-information matrix of the MP2 or FCI state.
    ///
    /// Writes a CSV with header `i,j,raw,normalized` (one row per pair i<j,
    /// raw values in nats).
    Qmi {
        /// FCIDUMP file in canonical Hartree-Fock orbitals.
        fcidump: PathBuf,
        #[arg(long, value_enum, default_value = "mp2")]
        state: StateArg,
        /// `no` rotates into MP2 natural orbitals first.
        #[arg(long, value_enum, default_value = "no")]
        basis: BasisArg,
        #[arg(long, value_enum, default_value = "max")]
        normalization: NormArg,
        /// Output CSV [default: <out-dir>/qmi_<state>_<basis>.csv].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the working-basis integrals as FCIDUMP.
        #[arg(long)]
        integrals_out: Option<PathBuf>,
    },
    /// Build a parent sequence from a QMI CSV.
    ///
    /// Writes a JSON document with keys n_qubits, mu, reduced, provenance
    /// and pairs (list of [i, j] with i < j).
    Ansatz {
        /// QMI CSV as written by `qida qmi`.
        qmi: PathBuf,
        /// Threshold in [0, 1); pairs with normalized QMI strictly above it are kept.
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        /// Keep only the first above-threshold pair in each row.
        #[arg(long)]
        reduce: bool,
        /// State the QMI was computed from (recorded as provenance).
        #[arg(long, value_enum, default_value = "mp2")]
        state: StateArg,
        /// Basis the QMI was computed in (recorded as provenance; selects the
        /// Hamiltonian basis for `qida vqe`).
        #[arg(long, value_enum, default_value = "no")]
        basis: BasisArg,
        /// Output JSON [default: <out-dir>/sequence.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run batched VQE for one ordering of a parent sequence.
    ///
    /// Writes a CSV with header
    /// `seed,final_energy,pct_corr,iterations,converged,n_expectation`.
    Vqe {
        /// FCIDUMP file in canonical Hartree-Fock orbitals.
        fcidump: PathBuf,
        /// Parent-sequence JSON from `qida ansatz`.
        sequence: PathBuf,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        /// Seed of the CNOT ordering drawn from the sequence.
        #[arg(long, default_value_t = 0)]
        perm_seed: u64,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// First VQE seed; restarts use consecutive seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "touched")]
        placement: PlacementArg,
        #[arg(long, default_value_t = 5000)]
        max_iterations: usize,
        /// Output CSV [default: <out-dir>/runs.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment described by a TOML config and write an archive
    /// (manifest.json, qmi/, sequences/, runs/<ansatz>/<depth>.csv,
    /// summary.csv, resource_grid.csv).
    Sweep {
        /// Experiment TOML.
        config: PathBuf,
        /// Archive directory [default: output_dir from the config].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the resource grid (`x,y,value,winner`) of an archive.
    Resources {
        /// Archive directory written by `qida sweep`.
        archive: PathBuf,
        /// CNOT budgets, comma separated [default: derived from the runs].
        #[arg(long, value_delimiter = ',')]
        x: Vec<usize>,
        /// VQE repetition budgets, comma separated [default: derived].
        #[arg(long, value_delimiter = ',')]
        y: Vec<usize>,
        /// Output CSV [default: <archive>/resource_grid.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("create {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("write {}", path.display()))
}

fn load_integrals(path: &Path) -> Result<IntegralSet> {
    IntegralSet::from_path(path).with_context(|| format!("parse {}", path.display()))
}

fn cmd_info(path: &Path) -> Result<()> {
    let s = load_integrals(path)?;
    let m = s.n_orb();
    let one_body = (0..m).flat_map(|p| (0..=p).map(move |q| (p, q))).filter(|&(p, q)| s.h(p, q) != 0.0).count();
    let mut two_body = 0;
    for p in 0..m {
        for q in 0..=p {
            for r in 0..=p {
                let top = if r == p { q } else { r };
                for t in 0..=top {
                    if s.eri(p, q, r, t) != 0.0 {
                        two_body += 1;
                    }
                }
            }
        }
    }
    let pauli = build_hamiltonian(&s, SpinOrbitalOrder::Blocked).context("hamiltonian")?;
    println!("orbitals:        {m}");
    println!("electrons:       {}", s.n_elec());
    println!("ms2:             {}", s.ms2());
    println!("qubits:          {} qubits", s.n_qubits());
    println!("core energy:     {:.12}", s.core_energy());
    println!("one-body terms:  {one_body}");
    println!("two-body terms:  {two_body}");
    println!("pauli terms:     {}", pauli.terms().len());
    if let Ok(e) = hf_energy(&s) {
        println!("E_HF:            {e:.12}");
    }
    if !s.source_label().is_empty() {
        println!("label:           {}", s.source_label());
    }
    Ok(())
}

fn max_abs_difference(a: &QmiMatrix, b: &QmiMatrix) -> f64 {
    a.normalized()
        .iter()
        .zip(b.normalized().iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn cmd_qmi(
    cli: &Cli,
    path: &Path,
    state: StateArg,
    basis: BasisArg,
    norm: NormArg,
    out: Option<&Path>,
    integrals_out: Option<&Path>,
) -> Result<()> {
    let s = load_integrals(path)?;
    let sys = prepare_system(&s, basis.into())?;
    let state: QmiState = state.into();
    let q = sys.qmi(state, norm.into());
    let other = match state {
        QmiState::Mp2 => QmiState::Fci,
        QmiState::Fci => QmiState::Mp2,
    };
    let q_other = sys.qmi(other, norm.into());
    let prov = Provenance {
        state,
        basis: basis.into(),
    };
    let default = cli.out_dir.join(format!("qmi_{}.csv", prov.to_string().to_lowercase().replace('/', "_")));
    let out = out.map(Path::to_path_buf).unwrap_or(default);
    write_output(&out, &q.to_csv())?;
    if let Some(p) = integrals_out {
        sys.integrals
            .write_path(p)
            .with_context(|| format!("write {}", p.display()))?;
    }
    println!("{prov} QMI on {} qubits written to {}", q.n(), out.display());
    if let Some(r) = &sys.rotation {
        let occ: Vec<String> = r.occupations().iter().map(|o| format!("{o:.6}")).collect();
        println!("natural occupations: {}", occ.join(" "));
    }
    println!("max raw QMI: {:.6e} nats", q.raw().max());
    for mu in [0.5, 0.7] {
        println!("pairs above {mu}: {}", q.count_above(mu));
    }
    println!(
        "max |Δ normalized| vs {}: {:.4}",
        Provenance { state: other, basis: basis.into() },
        max_abs_difference(&q, &q_other)
    );
    Ok(())
}

fn cmd_ansatz(
    cli: &Cli,
    path: &Path,
    mu: f64,
    reduce: bool,
    state: StateArg,
    basis: BasisArg,
    out: Option<&Path>,
) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    let q = QmiMatrix::from_csv(&text).with_context(|| format!("parse {}", path.display()))?;
    let seq = if reduce { reduce_first_spot(&q, mu) } else { threshold_pairs(&q, mu) }
        .context("ansatz")?
        .with_provenance(Provenance {
            state: state.into(),
            basis: basis.into(),
        });
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cli.out_dir.join("sequence.json"));
    write_output(&out, &seq.to_json())?;
    let pairs: Vec<String> = seq.pairs().iter().map(|(i, j)| format!("({i},{j})")).collect();
    println!("{} pairs: {}", seq.len(), pairs.join(" "));
    println!("written to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_vqe(
    cli: &Cli,
    fcidump: &Path,
    sequence: &Path,
    depth: usize,
    perm_seed: u64,
    restarts: usize,
    seed: u64,
    placement: PlacementArg,
    max_iterations: usize,
    out: Option<&Path>,
) -> Result<()> {
    let text = fs::read_to_string(sequence).with_context(|| format!("read {}", sequence.display()))?;
    let seq = ParentSequence::from_json(&text).with_context(|| format!("parse {}", sequence.display()))?;
    let basis = seq.provenance().map(|p| p.basis).unwrap_or_default();
    let s = load_integrals(fcidump)?;
    if seq.n_qubits() != s.n_qubits() {
        bail!(
            "ansatz: sequence is for {} qubits but {} has {}",
            seq.n_qubits(),
            fcidump.display(),
            s.n_qubits()
        );
    }
    let sys = prepare_system(&s, basis)?;
    let block = permute(&seq, perm_seed).context("ansatz")?;
    let circuit = build_circuit_with(&block, depth, sys.n_qubits(), placement.into()).context("ansatz")?;
    let opts = VqeOptions {
        max_iterations,
        ..VqeOptions::default()
    };
    let runs = with_jobs(cli.jobs, || run_batch_with(&circuit, &sys.hamiltonian, restarts, seed, &opts))?
        .context("vqe")?;
    let records: Vec<RunRecord> = runs.iter().map(|r| RunRecord::from_run(r, sys.e_hf, sys.e_fci)).collect();
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cli.out_dir.join("runs.csv"));
    write_output(&out, &runs_to_csv(&records))?;

    let violations = runs.iter().filter(|r| r.final_energy < sys.e_fci - 1e-7).count();
    let flagged = runs.iter().filter(|r| r.particle_number_flagged(sys.n_elec())).count();
    let best = records.iter().map(|r| r.pct_corr).fold(f64::NEG_INFINITY, f64::max);
    let mean = records.iter().map(|r| r.pct_corr).sum::<f64>() / records.len() as f64;
    println!("block: {}", block.label());
    println!(
        "{} CNOTs, {} parameters, {} runs",
        circuit.cnot_count(),
        circuit.parameter_count(),
        runs.len()
    );
    println!("E_HF {:.10}  E_FCI {:.10}", sys.e_hf, sys.e_fci);
    println!("best %E_c {best:.3}  mean %E_c {mean:.3}");
    println!("particle-number flagged runs: {flagged}");
    println!("written to {}", out.display());
    if violations > 0 {
        bail!("vqe: {violations} runs fall below E_FCI (variational bound violated)");
    }
    Ok(())
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(j) => Ok(rayon::ThreadPoolBuilder::new().num_threads(j).build()?.install(f)),
        None => Ok(f()),
    }
}

fn cmd_sweep(cli: &Cli, config: &Path, out: Option<&Path>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_path(config)?;
    if let Some(o) = out {
        cfg.output_dir = o.to_path_buf();
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    let step = std::sync::atomic::AtomicUsize::new(0);
    let progress = |done: usize, total: usize| {
        let pct = done * 20 / total.max(1);
        if done == total || pct > step.fetch_max(pct, std::sync::atomic::Ordering::Relaxed) {
            eprintln!("vqe runs: {done}/{total}");
        }
    };
    let res = run_experiment(&cfg, &progress)?;
    println!("E_HF {:.10}  E_FCI {:.10}", res.manifest.e_hf, res.manifest.e_fci);
    for r in &res.summary {
        println!(
            "{:<20} depth {:<2} cnots {:<3} runs {:<4} max {:8.3}  mean {:8.3}  within30 {:5.1}%",
            r.ansatz, r.depth, r.cnots, r.runs, r.max_pct, r.mean_pct, r.within30_pct
        );
    }
    println!("archive written to {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_resources(archive: &Path, x: &[usize], y: &[usize], out: Option<&Path>) -> Result<()> {
    let (_, families) = load_archive(archive)?;
    let sigmas: Vec<SigmaRuns> = families.iter().map(SigmaRuns::from).collect();
    let (dx, dy) = default_grid_axes(&sigmas);
    let xs = if x.is_empty() { dx } else { x.to_vec() };
    let ys = if y.is_empty() { dy } else { y.to_vec() };
    let grid = resource_surface(&sigmas, &xs, &ys);
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| archive.join("resource_grid.csv"));
    write_output(&out, &grid.to_csv())?;
    for c in &grid.cells {
        match (&c.value, &c.winner) {
            (Some(v), Some(w)) => println!("x={:<4} y={:<4} {v:8.3}  {w}", c.x, c.y),
            _ => println!("x={:<4} y={:<4} missing", c.x, c.y),
        }
    }
    println!("written to {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Info { fcidump } => cmd_info(fcidump),
        Command::Qmi {
            fcidump,
            state,
            basis,
            normalization,
            out,
            integrals_out,
        } => cmd_qmi(
            cli,
            fcidump,
            *state,
            *basis,
            *normalization,
            out.as_deref(),
            integrals_out.as_deref(),
        ),
        Command::Ansatz {
            qmi,
            mu,
            reduce,
            state,
            basis,
            out,
        } => cmd_ansatz(cli, qmi, *mu, *reduce, *state, *basis, out.as_deref()),
        Command::Vqe {
            fcidump,
            sequence,
            depth,
            perm_seed,
            restarts,
            seed,
            placement,
            max_iterations,
            out,
        } => cmd_vqe(
            cli,
            fcidump,
            sequence,
            *depth,
            *perm_seed,
            *restarts,
            *seed,
            *placement,
            *max_iterations,
            out.as_deref(),
        ),
        Command::Sweep { config, out } => cmd_sweep(cli, config, out.as_deref()),
        Command::Resources { archive, x, y, out } => cmd_resources(archive, x, y, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs == Some(0) {
        eprintln!("qida: --jobs must be at least 1");
        return ExitCode::FAILURE;
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qida: {e:#}");
            ExitCode::FAILURE
        }
    }
}
