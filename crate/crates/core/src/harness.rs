//! Experiment orchestration: system preparation, batched VQE over ansatz
//! families, correlation statistics and resource surfaces.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::{
    build_circuit_with, enumerate_permutations, ladder, permute, random_entangler, reduce_first_spot,
    threshold_pairs, EntanglerBlock, OrbitalBasis, ParentSequence, Provenance, QmiState,
    RotationPlacement,
};
use crate::encoding::{build_hamiltonian, SparseOperator, SpinOrbitalOrder};
use crate::fcidump::IntegralSet;
use crate::meanfield::{hf_energy, mp2_amplitudes};
use crate::natorb::{natural_orbitals, one_body_rdm_spatial, rotate_statevector, transform_integrals, OrbitalRotation};
use crate::states::{fci_ground_state_sparse, mp2_statevector, qmi_matrix, NormalizationMode, QmiMatrix, Statevector};
use crate::vqe::{minimize_with, runs_from_csv, runs_to_csv, RunRecord, VqeOptions, PARTICLE_NUMBER_FLAG};

/// Offset between the VQE base seeds of consecutive blocks within a family.
pub const SEED_STRIDE: u64 = 100_000;

const WITHIN30_DEFINITION: &str =
    "run counts if pct_corr >= max_pct - 0.3*|max_pct| (i.e. >= 0.7*max for positive max); \
     absolute-energy alternative: E - E_best <= 0.3*|E_best - E_HF|";

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("{stage}: {msg}")]
    Stage { stage: &'static str, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("E_FCI ({e_fci}) must lie below E_HF ({e_hf})")]
    DegenerateReference { e_hf: f64, e_fci: f64 },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

fn stage<E: Display>(stage: &'static str) -> impl Fn(E) -> HarnessError {
    move |e| HarnessError::Stage {
        stage,
        msg: e.to_string(),
    }
}

fn io<E: Display>(path: &Path) -> impl Fn(E) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// `100 (E − E_HF) / (E_FCI − E_HF)`.
pub fn correlation_fraction(e: f64, e_hf: f64, e_fci: f64) -> Result<f64, HarnessError> {
    if e_fci >= e_hf {
        return Err(HarnessError::DegenerateReference { e_hf, e_fci });
    }
    Ok(100.0 * (e - e_hf) / (e_fci - e_hf))
}

/// Largest depth whose CNOT count fits in the budget `x`; 0 if none does.
pub fn f_sigma(sigma_cnots: usize, x: usize) -> usize {
    x.checked_div(sigma_cnots).unwrap_or(0)
}

/// Everything derived from one FCIDUMP before any circuit is built.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    /// Integrals in the working basis.
    pub integrals: IntegralSet,
    pub basis: OrbitalBasis,
    pub rotation: Option<OrbitalRotation>,
    /// Qubit Hamiltonian in the working basis.
    pub hamiltonian: SparseOperator,
    /// Canonical RHF energy.
    pub e_hf: f64,
    pub e_fci: f64,
    /// MP2 state expressed in the working basis.
    pub mp2_state: Statevector,
    pub fci_state: Statevector,
}

impl PreparedSystem {
    pub fn n_qubits(&self) -> usize {
        self.integrals.n_qubits()
    }

    pub fn n_elec(&self) -> usize {
        self.integrals.n_elec()
    }

    pub fn state(&self, which: QmiState) -> &Statevector {
        match which {
            QmiState::Mp2 => &self.mp2_state,
            QmiState::Fci => &self.fci_state,
        }
    }

    pub fn qmi(&self, which: QmiState, mode: NormalizationMode) -> QmiMatrix {
        qmi_matrix(self.state(which), mode)
    }
}

/// RHF and MP2 in the canonical basis, optional rotation to MP2 natural
/// orbitals, Hamiltonian assembly and the sector FCI reference.
pub fn prepare_system(s: &IntegralSet, basis: OrbitalBasis) -> Result<PreparedSystem, HarnessError> {
    let order = SpinOrbitalOrder::Blocked;
    let e_hf = hf_energy(s).map_err(stage("meanfield"))?;
    let amps = mp2_amplitudes(s).map_err(stage("mp2"))?;
    let mp2 = mp2_statevector(&amps, order);
    let (integrals, rotation, mp2_state) = match basis {
        OrbitalBasis::Hfco => (s.clone(), None, mp2),
        OrbitalBasis::No => {
            let r = natural_orbitals(&one_body_rdm_spatial(&mp2, order)).map_err(stage("natorb"))?;
            let t = transform_integrals(s, &r).map_err(stage("natorb"))?;
            let psi = rotate_statevector(&mp2, &r, order).map_err(stage("natorb"))?;
            (t, Some(r), psi)
        }
    };
    let hamiltonian = build_hamiltonian(&integrals, order)
        .and_then(|h| h.to_sparse())
        .map_err(stage("hamiltonian"))?;
    let (e_fci, fci_state) =
        fci_ground_state_sparse(&hamiltonian, integrals.n_qubits(), integrals.n_elec(), integrals.ms2())
            .map_err(stage("fci"))?;
    Ok(PreparedSystem {
        integrals,
        basis,
        rotation,
        hamiltonian,
        e_hf,
        e_fci,
        mp2_state,
        fci_state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzFamily {
    Qida,
    Ladder,
    Random,
}

fn default_mu() -> Vec<f64> {
    vec![0.5]
}
fn default_ansatze() -> Vec<AnsatzFamily> {
    vec![AnsatzFamily::Qida, AnsatzFamily::Ladder]
}
fn default_depths() -> Vec<usize> {
    vec![1]
}
fn default_permutations() -> usize {
    20
}
fn default_restarts() -> usize {
    10
}
fn default_max_iterations() -> usize {
    5000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("qida-out")
}

/// Experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub fcidump: PathBuf,
    #[serde(default)]
    pub basis: OrbitalBasis,
    #[serde(default)]
    pub state: QmiState,
    #[serde(default)]
    pub normalization: NormalizationMode,
    #[serde(default = "default_mu")]
    pub mu: Vec<f64>,
    /// Applies the first-spot reduction to every threshold in `mu`.
    #[serde(default)]
    pub reduced: bool,
    #[serde(default = "default_ansatze")]
    pub ansatze: Vec<AnsatzFamily>,
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    /// Blocks per QIDA sequence and number of random entanglers.
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub permutation_seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Restarts for the single ladder block; defaults to `restarts`.
    #[serde(default)]
    pub ladder_restarts: Option<usize>,
    #[serde(default)]
    pub random_seed: u64,
    #[serde(default)]
    pub vqe_seed: u64,
    #[serde(default)]
    pub rotation_placement: RotationPlacement,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub jobs: Option<usize>,
    /// CNOT budgets of the resource grid; derived from the runs when empty.
    #[serde(default)]
    pub resource_x: Vec<usize>,
    /// Repetition budgets of the resource grid; derived when empty.
    #[serde(default)]
    pub resource_y: Vec<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Configuration with defaults for everything but the integrals.
    pub fn new(fcidump: impl Into<PathBuf>) -> Self {
        Self {
            fcidump: fcidump.into(),
            basis: OrbitalBasis::default(),
            state: QmiState::default(),
            normalization: NormalizationMode::default(),
            mu: default_mu(),
            reduced: false,
            ansatze: default_ansatze(),
            depths: default_depths(),
            permutations: default_permutations(),
            permutation_seed: 0,
            restarts: default_restarts(),
            ladder_restarts: None,
            random_seed: 0,
            vqe_seed: 0,
            rotation_placement: RotationPlacement::default(),
            max_iterations: default_max_iterations(),
            jobs: None,
            resource_x: Vec::new(),
            resource_y: Vec::new(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; relative paths inside it resolve against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io(path))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.fcidump.is_relative() {
            cfg.fcidump = base.join(&cfg.fcidump);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.depths.is_empty() || self.depths.contains(&0) {
            return bad("depths must be nonempty and at least 1");
        }
        if self.permutations == 0 {
            return bad("permutations must be at least 1");
        }
        if self.restarts == 0 || self.ladder_restarts == Some(0) {
            return bad("restarts must be at least 1");
        }
        if self.ansatze.is_empty() {
            return bad("no ansatz families selected");
        }
        if self.ansatze.contains(&AnsatzFamily::Qida) && self.mu.is_empty() {
            return bad("qida needs at least one mu");
        }
        if let Some(mu) = self.mu.iter().find(|m| !(0.0..1.0).contains(*m)) {
            return Err(HarnessError::Config(format!("mu {mu} outside [0, 1)")));
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        Ok(())
    }

    fn ladder_restart_count(&self) -> usize {
        self.ladder_restarts.unwrap_or(self.restarts)
    }
}

/// One block of a family with its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    /// Seed that produced the ordering; absent when all orderings were enumerated.
    pub block_seed: Option<u64>,
    pub vqe_base_seed: u64,
    pub cnots: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyManifest {
    pub label: String,
    pub kind: AnsatzFamily,
    pub cnots_per_block: usize,
    pub restarts: usize,
    pub depths: Vec<usize>,
    pub sequence: Option<String>,
    pub blocks: Vec<BlockRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub source_label: String,
    pub n_qubits: usize,
    pub n_elec: usize,
    pub e_hf: f64,
    pub e_fci: f64,
    pub seed_stride: u64,
    pub within30_definition: String,
    pub families: Vec<FamilyManifest>,
    pub flagged_runs: usize,
    pub failed_runs: usize,
}

/// Pooled runs of one ansatz family, keyed by depth; within a depth runs are
/// ordered by block, then seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyRuns {
    pub label: String,
    pub cnots_per_block: usize,
    pub depths: BTreeMap<usize, Vec<RunRecord>>,
}

impl FamilyRuns {
    pub fn pct_by_depth(&self) -> BTreeMap<usize, Vec<f64>> {
        self.depths
            .iter()
            .map(|(&d, runs)| (d, runs.iter().map(|r| r.pct_corr).collect()))
            .collect()
    }

    pub fn best(&self, depth: usize) -> Option<f64> {
        self.depths.get(&depth).and_then(|r| r.iter().map(|x| x.pct_corr).reduce(f64::max))
    }

    pub fn mean(&self, depth: usize) -> Option<f64> {
        let r = self.depths.get(&depth)?;
        (!r.is_empty()).then(|| r.iter().map(|x| x.pct_corr).sum::<f64>() / r.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub ansatz: String,
    pub depth: usize,
    pub cnots: usize,
    pub runs: usize,
    pub max_pct: f64,
    pub mean_pct: f64,
    /// Percentage of runs within 30% of the family's best at this depth.
    pub within30_pct: f64,
    pub flagged: usize,
}

pub const SUMMARY_CSV_HEADER: &str = "ansatz,depth,cnots,runs,max_pct,mean_pct,within30_pct,flagged";

/// Max, mean and within-30%-of-max frequency per family and depth.
pub fn summarize(families: &[FamilyRuns], n_elec: usize) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for f in families {
        for (&depth, runs) in &f.depths {
            if runs.is_empty() {
                continue;
            }
            let max = runs.iter().map(|r| r.pct_corr).fold(f64::NEG_INFINITY, f64::max);
            let mean = runs.iter().map(|r| r.pct_corr).sum::<f64>() / runs.len() as f64;
            let cut = max - 0.3 * max.abs();
            let within = runs.iter().filter(|r| r.pct_corr >= cut).count();
            let flagged = runs
                .iter()
                .filter(|r| (r.n_expectation - n_elec as f64).abs() > PARTICLE_NUMBER_FLAG)
                .count();
            rows.push(SummaryRow {
                ansatz: f.label.clone(),
                depth,
                cnots: depth * f.cnots_per_block,
                runs: runs.len(),
                max_pct: max,
                mean_pct: mean,
                within30_pct: 100.0 * within as f64 / runs.len() as f64,
                flagged,
            });
        }
    }
    rows
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.11e},{:.11e},{:.11e},{}\n",
            r.ansatz, r.depth, r.cnots, r.runs, r.max_pct, r.mean_pct, r.within30_pct, r.flagged
        ));
    }
    out
}

/// Runs of one ansatz family reduced to what the resource surface needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaRuns {
    pub label: String,
    pub cnots_per_block: usize,
    pub pct_by_depth: BTreeMap<usize, Vec<f64>>,
}

impl From<&FamilyRuns> for SigmaRuns {
    fn from(f: &FamilyRuns) -> Self {
        Self {
            label: f.label.clone(),
            cnots_per_block: f.cnots_per_block,
            pct_by_depth: f.pct_by_depth(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceCell {
    pub x: usize,
    pub y: usize,
    /// `None` when the stored runs cannot support the cell.
    pub value: Option<f64>,
    pub winner: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    /// Row-major over `x`, then `y`.
    pub cells: Vec<ResourceCell>,
}

pub const RESOURCE_CSV_HEADER: &str = "x,y,value,winner";

impl ResourceGrid {
    pub fn get(&self, x: usize, y: usize) -> Option<&ResourceCell> {
        self.cells.iter().find(|c| c.x == x && c.y == y)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{RESOURCE_CSV_HEADER}\n");
        for c in &self.cells {
            let value = c.value.map(|v| format!("{v:.11e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.x,
                c.y,
                value,
                c.winner.as_deref().unwrap_or("")
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let bad = |m: String| HarnessError::Stage { stage: "resources", msg: m };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(RESOURCE_CSV_HEADER) {
            return Err(bad(format!("expected header `{RESOURCE_CSV_HEADER}`")));
        }
        let mut cells = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(format!("bad row `{line}`")));
            }
            let int = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(format!("{s}: {e}")));
            let value = match f[2].trim() {
                "" => None,
                v => Some(v.parse::<f64>().map_err(|e| bad(format!("{v}: {e}")))?),
            };
            let winner = Some(f[3].trim()).filter(|w| !w.is_empty()).map(String::from);
            cells.push(ResourceCell {
                x: int(f[0])?,
                y: int(f[1])?,
                value,
                winner,
            });
        }
        let mut x: Vec<usize> = cells.iter().map(|c| c.x).collect();
        let mut y: Vec<usize> = cells.iter().map(|c| c.y).collect();
        x.sort_unstable();
        x.dedup();
        y.sort_unstable();
        y.dedup();
        Ok(Self { x, y, cells })
    }
}

/// Expected maximum of a uniformly random `y`-subset (without replacement)
/// of `values`: `Σ_i v_(i) C(i−1, y−1) / C(n, y)` over the sorted values.
pub fn expected_max(values: &[f64], y: usize) -> Option<f64> {
    let n = values.len();
    if y == 0 || y > n {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    // Weight of the i-th smallest (1-based) value, built up by the ratio
    // C(i−1, y−1)/C(i−2, y−1) = (i−1)/(i−y) to stay in floating range.
    let mut w = 1.0;
    let mut acc = 0.0;
    let mut total = 0.0;
    for i in y..=n {
        if i > y {
            w *= (i - 1) as f64 / (i - y) as f64;
        }
        acc += w * v[i - 1];
        total += w;
    }
    Some(acc / total)
}

/// Expected best %E_c reachable with at most `x` CNOTs and `y` VQE runs,
/// maximized over ansatz families.
///
/// For family σ the runs at depths `1..=f_σ(x)` are paired by index `k`,
/// each index contributes `max_δ pct[δ][k]`, and the expectation of the
/// maximum over `y` of those is taken exactly over all `y`-subsets. A cell is
/// missing when an affordable family lacks a required depth or has fewer
/// than `y` runs, or when no family fits in `x`.
pub fn resource_surface(sigmas: &[SigmaRuns], x_grid: &[usize], y_grid: &[usize]) -> ResourceGrid {
    let mut cells = Vec::with_capacity(x_grid.len() * y_grid.len());
    for &x in x_grid {
        // Per-run best over affordable depths, or None if data is missing.
        let per_sigma: Vec<Option<Option<Vec<f64>>>> = sigmas
            .iter()
            .map(|s| {
                let d = f_sigma(s.cnots_per_block, x);
                if d == 0 {
                    return None;
                }
                let cols: Option<Vec<&Vec<f64>>> = (1..=d).map(|k| s.pct_by_depth.get(&k)).collect();
                Some(cols.map(|cols| {
                    let n = cols.iter().map(|c| c.len()).min().unwrap_or(0);
                    (0..n)
                        .map(|k| cols.iter().map(|c| c[k]).fold(f64::NEG_INFINITY, f64::max))
                        .collect()
                }))
            })
            .collect();
        for &y in y_grid {
            let mut best: Option<(f64, &str)> = None;
            let mut missing = per_sigma.iter().all(Option::is_none);
            for (s, entry) in sigmas.iter().zip(&per_sigma) {
                let Some(data) = entry else { continue };
                match data.as_deref().and_then(|w| expected_max(w, y)) {
                    Some(v) => {
                        if best.is_none_or(|(b, _)| v > b) {
                            best = Some((v, &s.label));
                        }
                    }
                    None => missing = true,
                }
            }
            let (value, winner) = match (missing, best) {
                (false, Some((v, w))) => (Some(v), Some(w.to_string())),
                _ => (None, None),
            };
            cells.push(ResourceCell { x, y, value, winner });
        }
    }
    ResourceGrid {
        x: x_grid.to_vec(),
        y: y_grid.to_vec(),
        cells,
    }
}

/// Default budgets: every `depth × cnots` of the stored families, and
/// repetition counts 1, 2, 3, 5, 10, 20, 50, 100, … up to the largest pool.
pub fn default_grid_axes(sigmas: &[SigmaRuns]) -> (Vec<usize>, Vec<usize>) {
    let mut x: Vec<usize> = sigmas
        .iter()
        .flat_map(|s| s.pct_by_depth.keys().map(move |d| d * s.cnots_per_block))
        .filter(|&v| v > 0)
        .collect();
    x.sort_unstable();
    x.dedup();
    let max_n = sigmas
        .iter()
        .flat_map(|s| s.pct_by_depth.values().map(Vec::len))
        .max()
        .unwrap_or(0);
    let mut y = vec![3];
    let mut p = 1;
    while p <= max_n {
        y.extend([p, 2 * p, 5 * p]);
        p *= 10;
    }
    y.retain(|&v| v <= max_n);
    y.sort_unstable();
    y.dedup();
    (x, y)
}

/// Complete in-memory result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub manifest: Manifest,
    pub qmi: QmiMatrix,
    pub sequences: Vec<(String, ParentSequence)>,
    pub families: Vec<FamilyRuns>,
    pub summary: Vec<SummaryRow>,
    pub grid: ResourceGrid,
}

struct PlannedFamily {
    manifest: FamilyManifest,
    blocks: Vec<EntanglerBlock>,
}

fn qida_label(mu: f64, reduced: bool) -> String {
    format!("qida-mu{mu}{}", if reduced { "-red" } else { "" })
}

fn factorial_at_most(k: usize, limit: usize) -> bool {
    let mut f = 1usize;
    for i in 2..=k {
        f = match f.checked_mul(i) {
            Some(v) if v <= limit => v,
            _ => return false,
        };
    }
    f <= limit
}

fn plan_families(
    cfg: &ExperimentConfig,
    n_qubits: usize,
    qmi: &QmiMatrix,
    provenance: Provenance,
) -> Result<(Vec<PlannedFamily>, Vec<(String, ParentSequence)>), HarnessError> {
    let mut families = Vec::new();
    let mut sequences = Vec::new();
    let depths = {
        let mut d = cfg.depths.clone();
        d.sort_unstable();
        d.dedup();
        d
    };
    let base_seeds = |count: usize| (0..count as u64).map(|b| cfg.vqe_seed + b * SEED_STRIDE);
    let mut kinds = cfg.ansatze.clone();
    kinds.sort_unstable();
    kinds.dedup();
    for kind in kinds {
        match kind {
            AnsatzFamily::Qida => {
                for &mu in &cfg.mu {
                    let seq = if cfg.reduced {
                        reduce_first_spot(qmi, mu)
                    } else {
                        threshold_pairs(qmi, mu)
                    }
                    .map_err(stage("ansatz"))?
                    .with_provenance(provenance);
                    let label = qida_label(mu, cfg.reduced);
                    let (blocks, seeds): (Vec<EntanglerBlock>, Vec<Option<u64>>) =
                        if factorial_at_most(seq.len(), cfg.permutations) {
                            let all = enumerate_permutations(&seq, cfg.permutations).map_err(stage("ansatz"))?;
                            let n = all.len();
                            (all, vec![None; n])
                        } else {
                            let seeds: Vec<u64> =
                                (0..cfg.permutations as u64).map(|b| cfg.permutation_seed + b).collect();
                            let blocks = seeds
                                .iter()
                                .map(|&s| permute(&seq, s))
                                .collect::<Result<_, _>>()
                                .map_err(stage("ansatz"))?;
                            (blocks, seeds.into_iter().map(Some).collect())
                        };
                    let records = blocks
                        .iter()
                        .zip(seeds)
                        .zip(base_seeds(blocks.len()))
                        .map(|((b, s), v)| BlockRecord {
                            block_seed: s,
                            vqe_base_seed: v,
                            cnots: b.cnots().iter().map(|&(c, t)| [c, t]).collect(),
                        })
                        .collect();
                    families.push(PlannedFamily {
                        manifest: FamilyManifest {
                            label: label.clone(),
                            kind,
                            cnots_per_block: seq.len(),
                            restarts: cfg.restarts,
                            depths: depths.clone(),
                            sequence: Some(format!("sequences/{label}.json")),
                            blocks: records,
                        },
                        blocks,
                    });
                    sequences.push((label, seq));
                }
            }
            AnsatzFamily::Ladder => {
                let block = ladder(n_qubits).map_err(stage("ansatz"))?;
                families.push(PlannedFamily {
                    manifest: FamilyManifest {
                        label: "ladder".into(),
                        kind,
                        cnots_per_block: block.len(),
                        restarts: cfg.ladder_restart_count(),
                        depths: depths.clone(),
                        sequence: None,
                        blocks: vec![BlockRecord {
                            block_seed: None,
                            vqe_base_seed: cfg.vqe_seed,
                            cnots: block.cnots().iter().map(|&(c, t)| [c, t]).collect(),
                        }],
                    },
                    blocks: vec![block],
                });
            }
            AnsatzFamily::Random => {
                let seeds: Vec<u64> = (0..cfg.permutations as u64).map(|b| cfg.random_seed + b).collect();
                let blocks: Vec<EntanglerBlock> = seeds
                    .iter()
                    .map(|&s| random_entangler(n_qubits, s))
                    .collect::<Result<_, _>>()
                    .map_err(stage("ansatz"))?;
                let records = blocks
                    .iter()
                    .zip(&seeds)
                    .zip(base_seeds(blocks.len()))
                    .map(|((b, &s), v)| BlockRecord {
                        block_seed: Some(s),
                        vqe_base_seed: v,
                        cnots: b.cnots().iter().map(|&(c, t)| [c, t]).collect(),
                    })
                    .collect();
                families.push(PlannedFamily {
                    manifest: FamilyManifest {
                        label: "random".into(),
                        kind,
                        cnots_per_block: n_qubits - 1,
                        restarts: cfg.restarts,
                        depths: depths.clone(),
                        sequence: None,
                        blocks: records,
                    },
                    blocks,
                });
            }
        }
    }
    Ok((families, sequences))
}

/// Runs the whole pipeline in memory. `progress` receives `(done, total)`
/// after each VQE run.
pub fn run_experiment_in_memory(
    cfg: &ExperimentConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let integrals = IntegralSet::from_path(&cfg.fcidump).map_err(stage("parse"))?;
    let sys = prepare_system(&integrals, cfg.basis)?;
    let qmi = sys.qmi(cfg.state, cfg.normalization);
    let provenance = Provenance {
        state: cfg.state,
        basis: cfg.basis,
    };
    let (planned, sequences) = plan_families(cfg, sys.n_qubits(), &qmi, provenance)?;

    // (family, depth, block, seed) in canonical order.
    let mut tasks = Vec::new();
    for (fi, fam) in planned.iter().enumerate() {
        for &depth in &fam.manifest.depths {
            for (bi, rec) in fam.manifest.blocks.iter().enumerate() {
                for r in 0..fam.manifest.restarts as u64 {
                    tasks.push((fi, depth, bi, rec.vqe_base_seed + r));
                }
            }
        }
    }
    let mut circuits = BTreeMap::new();
    for (fi, fam) in planned.iter().enumerate() {
        for &depth in &fam.manifest.depths {
            for (bi, block) in fam.blocks.iter().enumerate() {
                let c = build_circuit_with(block, depth, sys.n_qubits(), cfg.rotation_placement)
                    .map_err(stage("ansatz"))?;
                circuits.insert((fi, depth, bi), c);
            }
        }
    }
    let opts = VqeOptions {
        max_iterations: cfg.max_iterations,
        ..VqeOptions::default()
    };
    let total = tasks.len();
    let done = AtomicUsize::new(0);
    let work = || {
        tasks
            .par_iter()
            .map(|&(fi, depth, bi, seed)| {
                let run = minimize_with(&circuits[&(fi, depth, bi)], &sys.hamiltonian, seed, &opts);
                progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
                run.map(|r| (r.failed, RunRecord::from_run(&r, sys.e_hf, sys.e_fci)))
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let results = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(stage("vqe"))?
            .install(work),
        None => work(),
    }
    .map_err(stage("vqe"))?;

    let mut families: Vec<FamilyRuns> = planned
        .iter()
        .map(|p| FamilyRuns {
            label: p.manifest.label.clone(),
            cnots_per_block: p.manifest.cnots_per_block,
            depths: p.manifest.depths.iter().map(|&d| (d, Vec::new())).collect(),
        })
        .collect();
    let mut failed_runs = 0;
    for (&(fi, depth, _, _), (failed, rec)) in tasks.iter().zip(results) {
        failed_runs += failed as usize;
        families[fi].depths.get_mut(&depth).unwrap().push(rec);
    }
    let summary = summarize(&families, sys.n_elec());
    let flagged_runs = summary.iter().map(|r| r.flagged).sum();
    let sigmas: Vec<SigmaRuns> = families.iter().map(SigmaRuns::from).collect();
    let (dx, dy) = default_grid_axes(&sigmas);
    let xs = if cfg.resource_x.is_empty() { dx } else { cfg.resource_x.clone() };
    let ys = if cfg.resource_y.is_empty() { dy } else { cfg.resource_y.clone() };
    let grid = resource_surface(&sigmas, &xs, &ys);

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        source_label: integrals.source_label().to_string(),
        n_qubits: sys.n_qubits(),
        n_elec: sys.n_elec(),
        e_hf: sys.e_hf,
        e_fci: sys.e_fci,
        seed_stride: SEED_STRIDE,
        within30_definition: WITHIN30_DEFINITION.to_string(),
        families: planned.into_iter().map(|p| p.manifest).collect(),
        flagged_runs,
        failed_runs,
    };
    Ok(ExperimentResult {
        manifest,
        qmi,
        sequences,
        families,
        summary,
        grid,
    })
}

fn qmi_file_name(state: QmiState, basis: OrbitalBasis) -> String {
    let p = Provenance { state, basis }.to_string().to_lowercase().replace('/', "_");
    format!("qmi/{p}.csv")
}

fn write(dir: &Path, rel: &str, text: &str) -> Result<(), HarnessError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(&path, text).map_err(io(&path))
}

/// Persists an experiment under `dir`.
pub fn write_archive(dir: &Path, res: &ExperimentResult) -> Result<(), HarnessError> {
    let cfg = &res.manifest.config;
    write(dir, &qmi_file_name(cfg.state, cfg.basis), &res.qmi.to_csv())?;
    for (label, seq) in &res.sequences {
        write(dir, &format!("sequences/{label}.json"), &seq.to_json())?;
    }
    for fam in &res.families {
        for (depth, runs) in &fam.depths {
            write(dir, &format!("runs/{}/{depth}.csv", fam.label), &runs_to_csv(runs))?;
        }
    }
    write(dir, "summary.csv", &summary_to_csv(&res.summary))?;
    write(dir, "resource_grid.csv", &res.grid.to_csv())?;
    let manifest = serde_json::to_string_pretty(&res.manifest).map_err(stage("archive"))?;
    write(dir, "manifest.json", &manifest)
}

/// Runs the experiment and writes the archive to `cfg.output_dir`. Stage
/// outputs already written are kept if a later stage fails.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ExperimentResult, HarnessError> {
    let res = run_experiment_in_memory(cfg, progress)?;
    write_archive(&cfg.output_dir, &res)?;
    Ok(res)
}

/// Reads the manifest and run tables back from an archive directory.
pub fn load_archive(dir: &Path) -> Result<(Manifest, Vec<FamilyRuns>), HarnessError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(io(&path))?;
    let mut families = Vec::new();
    for f in &manifest.families {
        let mut depths = BTreeMap::new();
        for &d in &f.depths {
            let p = dir.join(format!("runs/{}/{d}.csv", f.label));
            let text = fs::read_to_string(&p).map_err(io(&p))?;
            depths.insert(d, runs_from_csv(&text).map_err(io(&p))?);
        }
        families.push(FamilyRuns {
            label: f.label.clone(),
            cnots_per_block: f.cnots_per_block,
            depths,
        });
    }
    Ok((manifest, families))
}
