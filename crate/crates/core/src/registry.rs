//! Name-keyed registries of completion and search strategies. Front ends
//! pick a strategy by name at runtime; each strategy owns its choice of
//! constraint sets and starting point.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::dr::{DrConfig, SharedSet, Status};
use crate::error::{ensure_square, Error, Result};
use crate::hadamard::{
    circulant_hadamard_search, hadamard_search, skew_hadamard_search, skew_hadamard_search_three_set, CertificateKind,
    CirculantMode, Formulation, SearchStats,
};
use crate::matrix::{random_symmetric_init, random_uniform, seeded_rng, DenseMatrix, PartialMatrix};
use crate::sets::{ColSumOne, EdmKnown, EdmPsdBlock, FixedEntries, NonNegative, Psd, RowSumOne};
use crate::solvers::{min_rank_search, solve, FeasibilityProblem};

/// Strategies registered under their names.
pub struct Registry<T: ?Sized> {
    entries: BTreeMap<&'static str, Box<T>>,
}

impl<T: ?Sized> Default for Registry<T> {
    fn default() -> Self {
        Registry { entries: BTreeMap::new() }
    }
}

impl<T: ?Sized> Registry<T> {
    /// Replaces any strategy already registered under `name`.
    pub fn register(&mut self, name: &'static str, strategy: Box<T>) -> &mut Self {
        self.entries.insert(name, strategy);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown strategy {name:?}; expected one of {}", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionParams {
    pub cfg: DrConfig,
    /// Noise level for the noisy EDM kind.
    pub eps: f64,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            cfg: DrConfig::default(),
            eps: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionOutcome {
    pub matrix: DenseMatrix,
    pub status: Status,
    pub iterations: usize,
    pub residual: Option<f64>,
    /// Minimum-rank searches only.
    pub min_rank: Option<usize>,
    pub rank_ladder: Option<BTreeMap<usize, bool>>,
}

pub trait Completer: Send + Sync {
    fn name(&self) -> &'static str;
    fn complete(&self, p: &PartialMatrix, params: &CompletionParams) -> Result<CompletionOutcome>;
}

fn run_problem(sets: Vec<SharedSet>, shape: (usize, usize), x0: &DenseMatrix, cfg: &DrConfig) -> Result<CompletionOutcome> {
    let problem = FeasibilityProblem::new(sets, shape)?;
    let run = solve(&problem, x0, cfg)?;
    Ok(CompletionOutcome {
        residual: run.final_residual(),
        status: run.status,
        iterations: run.iterations_done,
        matrix: run.shadow,
        min_rank: None,
        rank_ladder: None,
    })
}

fn require_symmetric(p: &PartialMatrix) -> Result<usize> {
    let n = ensure_square(p.shape())?;
    if !p.is_symmetric() {
        return Err(Error::InvalidArgument("this completion needs a symmetric partial matrix".into()));
    }
    Ok(n)
}

/// Known entries and the PSD cone.
pub struct PsdCompletion;

impl Completer for PsdCompletion {
    fn name(&self) -> &'static str {
        "psd"
    }
    fn complete(&self, p: &PartialMatrix, params: &CompletionParams) -> Result<CompletionOutcome> {
        let n = require_symmetric(p)?;
        let sets: Vec<SharedSet> = vec![Arc::new(FixedEntries::new(p.clone())), Arc::new(Psd)];
        run_problem(sets, (n, n), &random_symmetric_init(n, params.cfg.seed), &params.cfg)
    }
}

/// PSD completion with the diagonal pinned to one.
pub struct CorrelationCompletion;

impl Completer for CorrelationCompletion {
    fn name(&self) -> &'static str {
        "correlation"
    }
    fn complete(&self, p: &PartialMatrix, params: &CompletionParams) -> Result<CompletionOutcome> {
        let n = require_symmetric(p)?;
        let mut known = p.clone();
        for i in 0..n {
            match known.get(i, i) {
                Some(v) if v != 1.0 => {
                    return Err(Error::InvalidArgument(format!("diagonal entry {i} is {v}, not 1")));
                }
                _ => known.set(i, i, 1.0)?,
            }
        }
        let sets: Vec<SharedSet> = vec![Arc::new(FixedEntries::new(known)), Arc::new(Psd)];
        run_problem(sets, (n, n), &random_symmetric_init(n, params.cfg.seed), &params.cfg)
    }
}

/// Known entries, unit column sums, unit row sums and nonnegativity,
/// through the product space.
pub struct DoublyStochasticCompletion;

impl Completer for DoublyStochasticCompletion {
    fn name(&self) -> &'static str {
        "doubly-stochastic"
    }
    fn complete(&self, p: &PartialMatrix, params: &CompletionParams) -> Result<CompletionOutcome> {
        let n = ensure_square(p.shape())?;
        let sets: Vec<SharedSet> = vec![
            Arc::new(FixedEntries::new(p.clone())),
            Arc::new(ColSumOne),
            Arc::new(RowSumOne),
            Arc::new(NonNegative),
        ];
        let x0 = random_uniform(n, n, &mut seeded_rng(params.cfg.seed, 0));
        run_problem(sets, (n, n), &x0, &params.cfg)
    }
}

/// Distance matrices through given squared distances, exactly or within
/// `eps`, against the PSD hat-block set.
pub struct EdmCompletion {
    pub noisy: bool,
}

impl Completer for EdmCompletion {
    fn name(&self) -> &'static str {
        if self.noisy {
            "edm-noise"
        } else {
            "edm"
        }
    }
    fn complete(&self, p: &PartialMatrix, params: &CompletionParams) -> Result<CompletionOutcome> {
        let n = require_symmetric(p)?;
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two points".into()));
        }
        let known = if self.noisy {
            EdmKnown::with_noise(p.clone(), params.eps)
        } else {
            EdmKnown::exact(p.clone())
        };
        let sets: Vec<SharedSet> = vec![Arc::new(known), Arc::new(EdmPsdBlock)];
        run_problem(sets, (n, n), &random_symmetric_init(n, params.cfg.seed), &params.cfg)
    }
}

/// Binary search over rank bounds.
pub struct MinRankCompletion;

impl Completer for MinRankCompletion {
    fn name(&self) -> &'static str {
        "min-rank"
    }
    fn complete(&self, p: &PartialMatrix, params: &CompletionParams) -> Result<CompletionOutcome> {
        let res = min_rank_search(p, &params.cfg)?;
        Ok(CompletionOutcome {
            matrix: res.completion,
            // Some rank bound always admits a completion.
            status: Status::Solved,
            iterations: 0,
            residual: None,
            min_rank: Some(res.min_rank),
            rank_ladder: Some(res.per_rank_outcomes),
        })
    }
}

pub fn completers() -> Registry<dyn Completer> {
    let mut r: Registry<dyn Completer> = Registry::default();
    let all: Vec<Box<dyn Completer>> = vec![
        Box::new(PsdCompletion),
        Box::new(CorrelationCompletion),
        Box::new(DoublyStochasticCompletion),
        Box::new(EdmCompletion { noisy: false }),
        Box::new(EdmCompletion { noisy: true }),
        Box::new(MinRankCompletion),
    ];
    for c in all {
        r.register(c.name(), c);
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    pub order: usize,
    pub formulation: Formulation,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub circulant_mode: CirculantMode,
}

pub trait SearchStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn certificate(&self) -> CertificateKind;
    fn search(&self, params: &SearchParams) -> Result<SearchStats>;
}

pub struct PlainSearch;

impl SearchStrategy for PlainSearch {
    fn name(&self) -> &'static str {
        "plain"
    }
    fn certificate(&self) -> CertificateKind {
        CertificateKind::Hadamard
    }
    fn search(&self, p: &SearchParams) -> Result<SearchStats> {
        hadamard_search(p.order, p.formulation, p.restarts, p.max_iterations, p.seed)
    }
}

pub struct SkewSearch;

impl SearchStrategy for SkewSearch {
    fn name(&self) -> &'static str {
        "skew"
    }
    fn certificate(&self) -> CertificateKind {
        CertificateKind::SkewHadamard
    }
    fn search(&self, p: &SearchParams) -> Result<SearchStats> {
        skew_hadamard_search(p.order, p.formulation, p.restarts, p.max_iterations, p.seed)
    }
}

pub struct SkewThreeSetSearch;

impl SearchStrategy for SkewThreeSetSearch {
    fn name(&self) -> &'static str {
        "skew-three-set"
    }
    fn certificate(&self) -> CertificateKind {
        CertificateKind::SkewHadamard
    }
    fn search(&self, p: &SearchParams) -> Result<SearchStats> {
        skew_hadamard_search_three_set(p.order, p.formulation, p.restarts, p.max_iterations, p.seed)
    }
}

pub struct CirculantSearch;

impl SearchStrategy for CirculantSearch {
    fn name(&self) -> &'static str {
        "circulant"
    }
    fn certificate(&self) -> CertificateKind {
        CertificateKind::CirculantHadamard
    }
    fn search(&self, p: &SearchParams) -> Result<SearchStats> {
        circulant_hadamard_search(p.order, p.restarts, p.max_iterations, p.seed, p.circulant_mode)
    }
}

pub fn search_strategies() -> Registry<dyn SearchStrategy> {
    let mut r: Registry<dyn SearchStrategy> = Registry::default();
    let all: Vec<Box<dyn SearchStrategy>> = vec![
        Box::new(PlainSearch),
        Box::new(SkewSearch),
        Box::new(SkewThreeSetSearch),
        Box::new(CirculantSearch),
    ];
    for s in all {
        r.register(s.name(), s);
    }
    r
}
