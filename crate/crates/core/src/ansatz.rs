//! Entangler topologies from QMI matrices and their expansion into circuits.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::states::QmiMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum AnsatzError {
    #[error("threshold {0} outside [0, 1)")]
    Threshold(f64),
    #[error("parent sequence is empty")]
    EmptySequence,
    #[error("{pairs}! orderings exceed the limit {limit}; sample with permute instead")]
    TooManyOrderings { pairs: usize, limit: usize },
    #[error("need at least 2 qubits, got {0}")]
    TooFewQubits(usize),
    #[error("qubit {qubit} out of range for {n_qubits} qubits")]
    QubitRange { qubit: usize, n_qubits: usize },
    #[error("depth must be at least 1")]
    Depth,
    #[error("invalid pair ({0}, {1})")]
    InvalidPair(usize, usize),
    #[error("duplicate pair ({0}, {1})")]
    DuplicatePair(usize, usize),
    #[error("reduced sequence has more than one pair in row {0}")]
    ReducedRow(usize),
    #[error("malformed sequence document: {0}")]
    Document(String),
}

/// Wavefunction used for the QMI analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QmiState {
    #[default]
    Mp2,
    Fci,
}

/// Orbital basis the state is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitalBasis {
    Hfco,
    #[default]
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub state: QmiState,
    pub basis: OrbitalBasis,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let state = match self.state {
            QmiState::Mp2 => "MP2",
            QmiState::Fci => "FCI",
        };
        let basis = match self.basis {
            OrbitalBasis::Hfco => "HFCO",
            OrbitalBasis::No => "NO",
        };
        write!(f, "{state}/{basis}")
    }
}

/// Unordered set of qubit pairs `(i, j)`, `i < j`, selected from a QMI matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SequenceDocument", into = "SequenceDocument")]
pub struct ParentSequence {
    n_qubits: usize,
    mu: f64,
    reduced: bool,
    provenance: Option<Provenance>,
    pairs: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct SequenceDocument {
    n_qubits: usize,
    mu: f64,
    reduced: bool,
    #[serde(default)]
    provenance: Option<Provenance>,
    pairs: Vec<[usize; 2]>,
}

impl TryFrom<SequenceDocument> for ParentSequence {
    type Error = AnsatzError;

    fn try_from(d: SequenceDocument) -> Result<Self, Self::Error> {
        let pairs = d.pairs.iter().map(|p| (p[0], p[1])).collect();
        let mut seq = ParentSequence::new(d.n_qubits, d.mu, d.reduced, pairs)?;
        seq.provenance = d.provenance;
        Ok(seq)
    }
}

impl From<ParentSequence> for SequenceDocument {
    fn from(p: ParentSequence) -> Self {
        Self {
            n_qubits: p.n_qubits,
            mu: p.mu,
            reduced: p.reduced,
            provenance: p.provenance,
            pairs: p.pairs.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl ParentSequence {
    /// Validates and sorts the pairs.
    pub fn new(
        n_qubits: usize,
        mu: f64,
        reduced: bool,
        mut pairs: Vec<(usize, usize)>,
    ) -> Result<Self, AnsatzError> {
        check_mu(mu)?;
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            if w[0] == w[1] {
                return Err(AnsatzError::DuplicatePair(w[0].0, w[0].1));
            }
            if reduced && w[0].0 == w[1].0 {
                return Err(AnsatzError::ReducedRow(w[0].0));
            }
        }
        for &(i, j) in &pairs {
            if i >= j {
                return Err(AnsatzError::InvalidPair(i, j));
            }
            if j >= n_qubits {
                return Err(AnsatzError::QubitRange { qubit: j, n_qubits });
            }
        }
        Ok(Self {
            n_qubits,
            mu,
            reduced,
            provenance: None,
            pairs,
        })
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn reduced(&self) -> bool {
        self.reduced
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.provenance
    }

    /// Pairs in ascending lexicographic order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sequence serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AnsatzError> {
        serde_json::from_str(text).map_err(|e| AnsatzError::Document(e.to_string()))
    }
}

fn check_mu(mu: f64) -> Result<(), AnsatzError> {
    if (0.0..1.0).contains(&mu) {
        Ok(())
    } else {
        Err(AnsatzError::Threshold(mu))
    }
}

/// All pairs with normalized QMI strictly above `mu`.
pub fn threshold_pairs(q: &QmiMatrix, mu: f64) -> Result<ParentSequence, AnsatzError> {
    check_mu(mu)?;
    let n = q.n();
    let w = q.normalized();
    let pairs = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| w[(i, j)] > mu)
        .collect();
    ParentSequence::new(n, mu, false, pairs)
}

/// Keeps, for each row, only the first above-threshold pair to its right.
pub fn reduce_first_spot(q: &QmiMatrix, mu: f64) -> Result<ParentSequence, AnsatzError> {
    check_mu(mu)?;
    let n = q.n();
    let w = q.normalized();
    let pairs = (0..n)
        .filter_map(|i| (i + 1..n).find(|&j| w[(i, j)] > mu).map(|j| (i, j)))
        .collect();
    ParentSequence::new(n, mu, true, pairs)
}

/// Ordered list of CNOTs as `(control, target)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntanglerBlock {
    cnots: Vec<(usize, usize)>,
}

impl EntanglerBlock {
    pub fn new(cnots: Vec<(usize, usize)>) -> Result<Self, AnsatzError> {
        if let Some(&(c, t)) = cnots.iter().find(|(c, t)| c == t) {
            return Err(AnsatzError::InvalidPair(c, t));
        }
        Ok(Self { cnots })
    }

    pub fn cnots(&self) -> &[(usize, usize)] {
        &self.cnots
    }

    pub fn len(&self) -> usize {
        self.cnots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cnots.is_empty()
    }

    /// Distinct qubits acted on by the block, ascending.
    pub fn touched(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.cnots.iter().flat_map(|&(c, t)| [c, t]).collect();
        set.into_iter().collect()
    }

    /// Compact `c-t c-t ...` label.
    pub fn label(&self) -> String {
        self.cnots
            .iter()
            .map(|(c, t)| format!("{c}-{t}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Uniformly random ordering of the parent pairs; control is the smaller index.
pub fn permute(p: &ParentSequence, seed: u64) -> Result<EntanglerBlock, AnsatzError> {
    if p.is_empty() {
        return Err(AnsatzError::EmptySequence);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cnots = p.pairs.clone();
    cnots.shuffle(&mut rng);
    Ok(EntanglerBlock { cnots })
}

/// Every ordering of the parent pairs, in lexicographic order.
pub fn enumerate_permutations(
    p: &ParentSequence,
    limit: usize,
) -> Result<Vec<EntanglerBlock>, AnsatzError> {
    if p.is_empty() {
        return Err(AnsatzError::EmptySequence);
    }
    let k = p.len();
    let mut total = 1usize;
    for f in 2..=k {
        total = match total.checked_mul(f) {
            Some(t) if t <= limit => t,
            _ => return Err(AnsatzError::TooManyOrderings { pairs: k, limit }),
        };
    }
    if total > limit {
        return Err(AnsatzError::TooManyOrderings { pairs: k, limit });
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut out = Vec::with_capacity(total);
    loop {
        out.push(EntanglerBlock {
            cnots: idx.iter().map(|&i| p.pairs[i]).collect(),
        });
        // Next permutation in lexicographic order.
        let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| idx[i] < idx[i + 1]) else {
            break;
        };
        let j = (i + 1..k).rev().find(|&j| idx[j] > idx[i]).unwrap();
        idx.swap(i, j);
        idx[i + 1..].reverse();
    }
    Ok(out)
}

/// CNOTs between consecutive qubits: `(0,1), (1,2), …, (n−2, n−1)`.
pub fn ladder(n: usize) -> Result<EntanglerBlock, AnsatzError> {
    if n < 2 {
        return Err(AnsatzError::TooFewQubits(n));
    }
    Ok(EntanglerBlock {
        cnots: (0..n - 1).map(|i| (i, i + 1)).collect(),
    })
}

/// `n − 1` distinct top-down CNOTs: target uniform in `1..n`, control uniform
/// below the target; repeated draws are rejected.
pub fn random_entangler(n: usize, seed: u64) -> Result<EntanglerBlock, AnsatzError> {
    if n < 2 {
        return Err(AnsatzError::TooFewQubits(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut cnots = Vec::with_capacity(n - 1);
    while cnots.len() < n - 1 {
        let t = rng.gen_range(1..n);
        let c = rng.gen_range(0..t);
        if seen.insert((c, t)) {
            cnots.push((c, t));
        }
    }
    Ok(EntanglerBlock { cnots })
}

/// Which qubits receive an R_Y after each entangler block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationPlacement {
    /// Only the qubits touched by the block's CNOTs.
    #[default]
    Touched,
    /// Every qubit.
    AllQubits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Ry { qubit: usize, param: usize },
    Cnot { control: usize, target: usize },
}

/// Depth-repeated circuit: an initial R_Y layer on every qubit, then `depth`
/// copies of (block CNOTs, R_Y layer), each with fresh parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    n_qubits: usize,
    depth: usize,
    block: EntanglerBlock,
    placement: RotationPlacement,
    rotated: Vec<usize>,
    gates: Vec<Gate>,
}

impl CircuitSpec {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn block(&self) -> &EntanglerBlock {
        &self.block
    }

    pub fn placement(&self) -> RotationPlacement {
        self.placement
    }

    /// Qubits rotated after each block, ascending.
    pub fn rotated_qubits(&self) -> &[usize] {
        &self.rotated
    }

    pub fn parameter_count(&self) -> usize {
        self.n_qubits + self.depth * self.rotated.len()
    }

    pub fn cnot_count(&self) -> usize {
        self.depth * self.block.len()
    }

    /// Gate sequence in application order.
    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }
}

pub fn build_circuit(b: &EntanglerBlock, depth: usize, n: usize) -> Result<CircuitSpec, AnsatzError> {
    build_circuit_with(b, depth, n, RotationPlacement::Touched)
}

pub fn build_circuit_with(
    b: &EntanglerBlock,
    depth: usize,
    n: usize,
    placement: RotationPlacement,
) -> Result<CircuitSpec, AnsatzError> {
    if depth == 0 {
        return Err(AnsatzError::Depth);
    }
    if let Some(q) = b.touched().into_iter().find(|&q| q >= n) {
        return Err(AnsatzError::QubitRange { qubit: q, n_qubits: n });
    }
    let rotated = match placement {
        RotationPlacement::Touched => b.touched(),
        RotationPlacement::AllQubits => (0..n).collect(),
    };
    let mut gates = Vec::with_capacity(n + depth * (b.len() + rotated.len()));
    let mut param = 0;
    for qubit in 0..n {
        gates.push(Gate::Ry { qubit, param });
        param += 1;
    }
    for _ in 0..depth {
        gates.extend(b.cnots.iter().map(|&(control, target)| Gate::Cnot { control, target }));
        for &qubit in &rotated {
            gates.push(Gate::Ry { qubit, param });
            param += 1;
        }
    }
    Ok(CircuitSpec {
        n_qubits: n,
        depth,
        block: b.clone(),
        placement,
        rotated,
        gates,
    })
}
