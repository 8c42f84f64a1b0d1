//! Problem-level drivers: N-set feasibility, minimum-rank binary search,
//! correlation matrix sampling, and the restart engine behind the
//! randomized experiments.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dr::{dr_solve, product_embed, DrConfig, DrRun, SharedSet};
use crate::error::{ensure_same_shape, Error, Result};
use crate::matrix::{random_uniform, round_signs, seeded_rng, symmetrize, DenseMatrix, PartialMatrix};
use crate::dr::Certificate;
use crate::sets::{FixedEntries, Psd, RankAtMost, RankBound};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    TwoSet,
    ProductSpace,
}

/// Find `X` in the intersection of `sets`.
#[derive(Debug, Clone)]
pub struct FeasibilityProblem {
    sets: Vec<SharedSet>,
    shape: (usize, usize),
    mode: Mode,
}

impl FeasibilityProblem {
    /// Two sets run directly; more go through the product space.
    pub fn new(sets: Vec<SharedSet>, shape: (usize, usize)) -> Result<Self> {
        let mode = if sets.len() == 2 { Mode::TwoSet } else { Mode::ProductSpace };
        FeasibilityProblem::with_mode(sets, shape, mode)
    }

    pub fn with_mode(sets: Vec<SharedSet>, shape: (usize, usize), mode: Mode) -> Result<Self> {
        if sets.len() < 2 {
            return Err(Error::InvalidArgument("a feasibility problem needs at least two sets".into()));
        }
        if mode == Mode::TwoSet && sets.len() != 2 {
            return Err(Error::InvalidArgument(format!("two-set mode with {} sets", sets.len())));
        }
        for set in &sets {
            if let Some(s) = set.shape() {
                ensure_same_shape(shape, s)?;
            }
        }
        Ok(FeasibilityProblem { sets, shape, mode })
    }

    pub fn sets(&self) -> &[SharedSet] {
        &self.sets
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Largest distance from `x` to any of the sets.
    pub fn feasibility_gap(&self, x: &DenseMatrix) -> Result<f64> {
        let mut worst = 0.0f64;
        for set in &self.sets {
            worst = worst.max(crate::matrix::frobenius_distance(&set.project(x)?, x)?);
        }
        Ok(worst)
    }
}

/// Runs Douglas–Rachford on the problem. Two-set problems reflect through
/// the first set first; product-space problems reflect through the diagonal
/// first, and the returned shadow is the single averaged coordinate (the
/// iterate stays in stacked N-tuple form).
pub fn solve(problem: &FeasibilityProblem, x0: &DenseMatrix, cfg: &DrConfig) -> Result<DrRun> {
    ensure_same_shape(problem.shape, x0.shape())?;
    match problem.mode {
        Mode::TwoSet => dr_solve(problem.sets[0].as_ref(), problem.sets[1].as_ref(), x0, cfg),
        Mode::ProductSpace => {
            let embedding = product_embed(&problem.sets, x0)?;
            let mut run = dr_solve(&embedding.diagonal, &embedding.product, &embedding.x0, cfg)?;
            run.shadow = embedding.coordinate(&run.shadow);
            Ok(run)
        }
    }
}

/// Defaults for one rank probe: gap ≤ 1e-6 within 2000 iterations.
pub fn rank_search_config() -> DrConfig {
    DrConfig::default().with_max_iterations(2000).with_tol(1e-6)
}

#[derive(Debug, Clone)]
pub struct RankSearchResult {
    pub min_rank: usize,
    pub completion: DenseMatrix,
    /// Rank probed → solved.
    pub per_rank_outcomes: BTreeMap<usize, bool>,
}

/// Binary search for the smallest `r` such that DR solves
/// `C1 ∩ {rank ≤ r}` within the budget. Every probe starts from the same
/// seeded point.
pub fn min_rank_search(p: &PartialMatrix, cfg: &DrConfig) -> Result<RankSearchResult> {
    let (m, n) = p.shape();
    let fixed: SharedSet = Arc::new(FixedEntries::new(p.clone()));
    let x0 = random_uniform(m, n, &mut seeded_rng(cfg.seed, 0));
    let mut lb = 0usize;
    let mut ub = m.min(n);
    let mut r = ub / 2;
    let mut outcomes = BTreeMap::new();
    let mut witness: Option<(usize, DenseMatrix)> = None;
    let mut last_iterate = x0.clone();
    while lb < ub {
        debug_assert!(lb <= r && r <= ub);
        let problem = FeasibilityProblem::new(vec![fixed.clone(), Arc::new(RankAtMost(RankBound(r)))], (m, n))?;
        let run = solve(&problem, &x0, cfg)?;
        let solved = run.solved();
        outcomes.insert(r, solved);
        if solved {
            ub = r;
            witness = Some((r, run.shadow));
        } else {
            lb = r + 1;
        }
        last_iterate = run.iterate;
        r = (lb + ub) / 2;
    }
    let completion = match witness {
        Some((rank, w)) if rank == r => w,
        _ => p.fill(&last_iterate)?,
    };
    Ok(RankSearchResult {
        min_rank: r,
        completion,
        per_rank_outcomes: outcomes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// `X0 = Y`.
    Raw,
    /// `X0 = (Y + Yᵀ)/2`.
    Symmetrized,
    /// `X0 = Y Yᵀ`.
    Gram,
}

impl InitMode {
    pub fn initial_point(self, y: &DenseMatrix) -> DenseMatrix {
        match self {
            InitMode::Raw => y.clone(),
            InitMode::Symmetrized => symmetrize(y),
            InitMode::Gram => y * y.transpose(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InitMode::Raw => "raw",
            InitMode::Symmetrized => "symmetrized",
            InitMode::Gram => "gram",
        }
    }
}

/// Fixed-width histogram on `[lo, hi]`; out-of-range values land in the
/// end bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Histogram {
            lo,
            hi,
            counts: vec![0; bins],
        }
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let t = ((v - self.lo) / (self.hi - self.lo) * bins as f64).floor();
        let idx = if t < 0.0 { 0 } else { (t as usize).min(bins - 1) };
        self.counts[idx] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// L1 distance between the normalized histograms.
    pub fn l1_distance(&self, other: &Histogram) -> f64 {
        self.frequencies()
            .iter()
            .zip(other.frequencies())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

pub const CORRELATION_BINS: usize = 50;

#[derive(Debug, Clone)]
pub struct CorrelationSample {
    pub accepted: Vec<DenseMatrix>,
    pub failures: usize,
    /// Upper-triangle entries of the accepted matrices, 50 bins on [-1, 1].
    pub histogram: Histogram,
}

fn correlation_sets(n: usize) -> Result<(FixedEntries, Psd)> {
    let mut diag = PartialMatrix::new_symmetric(n);
    for i in 0..n {
        diag.set(i, i, 1.0)?;
    }
    Ok((FixedEntries::new(diag), Psd))
}

/// Draws `count` correlation matrices by running DR on (unit diagonal, PSD)
/// from random starts. Sample `i` uses stream `i` of `seed`, so every init
/// mode sees the same `Y` for the same index.
pub fn sample_correlation_matrices(
    n: usize,
    count: usize,
    mode: InitMode,
    seed: u64,
    cfg: &DrConfig,
) -> Result<CorrelationSample> {
    if n < 2 || count == 0 {
        return Err(Error::InvalidArgument("need n >= 2 and count >= 1".into()));
    }
    let (unit_diag, psd) = correlation_sets(n)?;
    let runs: Vec<Result<DrRun>> = with_worker_pool(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let y = random_uniform(n, n, &mut seeded_rng(seed, i as u64));
                dr_solve(&unit_diag, &psd, &mode.initial_point(&y), cfg)
            })
            .collect()
    });
    let mut accepted = Vec::new();
    let mut failures = 0;
    let mut histogram = Histogram::new(-1.0, 1.0, CORRELATION_BINS);
    for run in runs {
        let run = run?;
        if !run.solved() {
            failures += 1;
            continue;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                histogram.add(run.shadow[(i, j)]);
            }
        }
        accepted.push(run.shadow);
    }
    Ok(CorrelationSample {
        accepted,
        failures,
        histogram,
    })
}

/// Runs `f` on a pool capped by `DRC_THREADS` when set.
pub fn with_worker_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var("DRC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Outcome of one restart.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub index: usize,
    pub solved: bool,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// Under sign rounding the certified ±1 matrix, otherwise the shadow.
    /// Present only for solved runs.
    pub solution: Option<DenseMatrix>,
}

/// Per-run records in run-index order.
#[derive(Debug, Clone, Default)]
pub struct RestartStats {
    pub records: Vec<RunRecord>,
}

impl RestartStats {
    pub fn solved(&self) -> usize {
        self.records.iter().filter(|r| r.solved).count()
    }

    /// Combines partial results; the outcome depends only on run indices.
    pub fn merge(mut self, other: RestartStats) -> RestartStats {
        self.records.extend(other.records);
        self.records.sort_by_key(|r| r.index);
        self
    }
}

/// Builds run `index`'s problem and starting point from its private RNG.
pub trait ProblemFactory: Sync {
    fn build(&self, index: usize, rng: &mut ChaCha8Rng) -> Result<(FeasibilityProblem, DenseMatrix)>;
}

impl<F> ProblemFactory for F
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<(FeasibilityProblem, DenseMatrix)> + Sync,
{
    fn build(&self, index: usize, rng: &mut ChaCha8Rng) -> Result<(FeasibilityProblem, DenseMatrix)> {
        self(index, rng)
    }
}

fn run_one(factory: &dyn ProblemFactory, index: usize, cfg: &DrConfig, seed: u64) -> Result<RunRecord> {
    let mut rng = seeded_rng(seed, index as u64);
    let start = Instant::now();
    let (problem, x0) = factory.build(index, &mut rng)?;
    let run = solve(&problem, &x0, cfg)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let solution = run.solved().then(|| match cfg.certificate {
        Certificate::SignRounding => round_signs(&run.shadow),
        Certificate::Distance => run.shadow.clone(),
    });
    Ok(RunRecord {
        index,
        solved: run.solved(),
        iterations: run.iterations_done,
        wall_time_s,
        solution,
    })
}

/// Independent seeded restarts, fanned out across workers.
pub fn restart_driver(factory: &dyn ProblemFactory, restarts: usize, cfg: &DrConfig, seed: u64) -> Result<RestartStats> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    cfg.validate()?;
    let partials: Vec<Result<RestartStats>> = with_worker_pool(|| {
        (0..restarts)
            .into_par_iter()
            .map(|i| run_one(factory, i, cfg, seed).map(|r| RestartStats { records: vec![r] }))
            .collect()
    });
    partials
        .into_iter()
        .try_fold(RestartStats::default(), |acc, p| Ok(acc.merge(p?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::{ColSumOne, NonNegative, RowSumOne, Singleton};
    use crate::matrix::{frobenius_distance, Spectrum};
    use crate::dr::{ConstraintSet, Status};

    fn doubly_stochastic_sets(p: &PartialMatrix) -> Vec<SharedSet> {
        vec![
            Arc::new(FixedEntries::new(p.clone())),
            Arc::new(ColSumOne),
            Arc::new(RowSumOne),
            Arc::new(NonNegative),
        ]
    }

    fn two_by_two() -> PartialMatrix {
        let mut p = PartialMatrix::new(2, 2);
        p.set(0, 0, 0.3).unwrap();
        p
    }

    #[test]
    fn problem_validation() {
        let one: Vec<SharedSet> = vec![Arc::new(Psd)];
        assert!(FeasibilityProblem::new(one, (2, 2)).is_err());
        let three = doubly_stochastic_sets(&two_by_two())[..3].to_vec();
        assert!(FeasibilityProblem::with_mode(three.clone(), (2, 2), Mode::TwoSet).is_err());
        assert_eq!(FeasibilityProblem::new(three, (2, 2)).unwrap().mode(), Mode::ProductSpace);
        let fixed: SharedSet = Arc::new(FixedEntries::new(PartialMatrix::new(3, 3)));
        assert!(FeasibilityProblem::new(vec![fixed, Arc::new(Psd)], (2, 2)).is_err());
    }

    #[test]
    fn two_sets_feasible_start_is_immediate() {
        let x = DenseMatrix::identity(2, 2);
        let problem = FeasibilityProblem::new(vec![Arc::new(Singleton::new(x.clone())), Arc::new(Psd)], (2, 2)).unwrap();
        let run = solve(&problem, &x, &DrConfig::default()).unwrap();
        assert_eq!(run.iterations_done, 0);
        assert!(run.solved());
    }

    #[test]
    fn doubly_stochastic_two_by_two_is_unique() {
        let p = two_by_two();
        let problem = FeasibilityProblem::new(doubly_stochastic_sets(&p), (2, 2)).unwrap();
        let run = solve(&problem, &DenseMatrix::zeros(2, 2), &DrConfig::default().with_max_iterations(20_000)).unwrap();
        assert!(run.solved());
        let expected = DenseMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.7, 0.3]);
        assert!((run.shadow - expected).norm() < 1e-6);
    }

    /// `{[[t, 1-t], [1-t, t]] : t ∈ [0, 1]}`, projected by brute force over a
    /// grid of t.
    #[derive(Debug)]
    struct BirkhoffTwo;

    impl ConstraintSet for BirkhoffTwo {
        fn name(&self) -> &'static str {
            "birkhoff-2"
        }
        fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
            let member = |t: f64| DenseMatrix::from_row_slice(2, 2, &[t, 1.0 - t, 1.0 - t, t]);
            let steps = 200_000;
            let best = (0..=steps)
                .map(|k| k as f64 / steps as f64)
                .min_by(|&a, &b| {
                    let da = (member(a) - x).norm_squared();
                    let db = (member(b) - x).norm_squared();
                    da.total_cmp(&db)
                })
                .unwrap();
            Ok(member(best))
        }
    }

    #[test]
    fn product_space_matches_explicit_intersection() {
        let p = two_by_two();
        let cfg = DrConfig::default().with_max_iterations(5000).with_tol(1e-5);
        let four = FeasibilityProblem::new(doubly_stochastic_sets(&p), (2, 2)).unwrap();
        let a = solve(&four, &DenseMatrix::zeros(2, 2), &cfg).unwrap();
        let two = FeasibilityProblem::new(vec![Arc::new(FixedEntries::new(p)), Arc::new(BirkhoffTwo)], (2, 2)).unwrap();
        let b = solve(&two, &DenseMatrix::zeros(2, 2), &cfg).unwrap();
        assert!(a.solved() && b.solved());
        assert!((a.shadow - b.shadow).norm() < 1e-4);
    }

    #[test]
    fn product_space_recovers_common_point_of_three_affine_sets() {
        let mut rng = seeded_rng(21, 0);
        let point = random_uniform(3, 3, &mut rng);
        let mut sets: Vec<SharedSet> = Vec::new();
        for k in 0..3 {
            // Each set fixes a different (overlapping) third of the entries.
            let p = PartialMatrix::from_mask(&point, false, |i, j| (i + 2 * j + k) % 3 != 0).unwrap();
            sets.push(Arc::new(FixedEntries::new(p)));
        }
        let problem = FeasibilityProblem::new(sets, (3, 3)).unwrap();
        let run = solve(&problem, &DenseMatrix::zeros(3, 3), &DrConfig::default().with_max_iterations(10_000)).unwrap();
        assert!(run.solved());
        assert!((run.shadow - point).norm() < 1e-8);
    }

    #[test]
    fn product_and_direct_two_set_agree_on_feasibility() {
        let p = PartialMatrix::from_mask(&DenseMatrix::identity(4, 4), true, |i, j| i == j).unwrap();
        let sets: Vec<SharedSet> = vec![Arc::new(FixedEntries::new(p)), Arc::new(Psd)];
        let mut rng = seeded_rng(5, 0);
        let x0 = symmetrize(&random_uniform(4, 4, &mut rng));
        let cfg = DrConfig::default().with_max_iterations(10_000).with_tol(1e-9);
        for mode in [Mode::TwoSet, Mode::ProductSpace] {
            let problem = FeasibilityProblem::with_mode(sets.clone(), (4, 4), mode).unwrap();
            let run = solve(&problem, &x0, &cfg).unwrap();
            assert!(run.solved(), "{mode:?}");
            assert!(problem.feasibility_gap(&run.shadow).unwrap() < 1e-8);
        }
    }

    #[test]
    fn rank_search_on_two_by_two() {
        let mut p = PartialMatrix::new(2, 2);
        p.set(0, 0, 1.0).unwrap();
        p.set(0, 1, 2.0).unwrap();
        p.set(1, 0, 2.0).unwrap();
        let res = min_rank_search(&p, &rank_search_config().with_tol(1e-10).with_max_iterations(10_000)).unwrap();
        assert_eq!(res.min_rank, 1);
        assert!((res.completion[(1, 1)] - 4.0).abs() < 1e-6);
        assert_eq!(res.per_rank_outcomes.get(&0), Some(&false));
        assert_eq!(res.per_rank_outcomes.get(&1), Some(&true));
    }

    #[test]
    fn rank_search_with_nothing_known_is_rank_zero() {
        let p = PartialMatrix::new(3, 4);
        let res = min_rank_search(&p, &rank_search_config()).unwrap();
        assert_eq!(res.min_rank, 0);
        assert_eq!(res.completion, DenseMatrix::zeros(3, 4));
    }

    #[test]
    fn rank_search_fully_known_rank_two() {
        let mut rng = seeded_rng(8, 0);
        let m = random_uniform(4, 2, &mut rng) * random_uniform(2, 4, &mut rng);
        let p = PartialMatrix::from_dense(&m);
        let res = min_rank_search(&p, &rank_search_config()).unwrap();
        assert_eq!(res.min_rank, 2);
        assert_eq!(res.per_rank_outcomes.get(&1), Some(&false));
        assert_eq!(res.per_rank_outcomes.get(&2), Some(&true));
        assert!((res.completion - m).norm() < 1e-9);
    }

    #[test]
    fn rank_search_ladder_top_returns_trivial_witness() {
        // A fully known full-rank matrix fails every r < n.
        let m = DenseMatrix::identity(3, 3);
        let res = min_rank_search(&PartialMatrix::from_dense(&m), &rank_search_config()).unwrap();
        assert_eq!(res.min_rank, 3);
        assert_eq!(res.completion, m);
        assert!(res.per_rank_outcomes.values().all(|&ok| !ok));
    }

    #[test]
    fn correlation_samples_have_defining_properties() {
        let cfg = DrConfig::default().with_max_iterations(5000);
        for mode in [InitMode::Raw, InitMode::Symmetrized, InitMode::Gram] {
            let s = sample_correlation_matrices(4, 50, mode, 3, &cfg).unwrap();
            assert_eq!(s.accepted.len() + s.failures, 50);
            assert_eq!(s.histogram.total(), 6 * s.accepted.len() as u64);
            for x in &s.accepted {
                for i in 0..4 {
                    assert!((x[(i, i)] - 1.0).abs() < 1e-8);
                }
                assert!(Spectrum::of(&symmetrize(x)).unwrap().min() >= -1e-8);
                assert!(x.iter().all(|v| v.abs() <= 1.0 + 1e-8));
            }
        }
    }

    #[test]
    fn correlation_two_by_two_shape() {
        let s = sample_correlation_matrices(2, 30, InitMode::Gram, 1, &DrConfig::default()).unwrap();
        for x in &s.accepted {
            assert!((x[(0, 1)] - x[(1, 0)]).abs() < 1e-9);
            assert!(x[(0, 1)].abs() <= 1.0 + 1e-9);
        }
        assert!(sample_correlation_matrices(1, 3, InitMode::Raw, 0, &DrConfig::default()).is_err());
    }

    #[test]
    fn histogram_binning() {
        let mut h = Histogram::new(-1.0, 1.0, 4);
        for v in [-2.0, -1.0, -0.1, 0.0, 0.99, 1.0, 1.5] {
            h.add(v);
        }
        assert_eq!(h.counts, vec![2, 1, 1, 3]);
        assert_eq!(h.l1_distance(&h), 0.0);
    }

    fn trivial_factory(_: usize, rng: &mut ChaCha8Rng) -> Result<(FeasibilityProblem, DenseMatrix)> {
        let x0 = random_uniform(2, 2, rng);
        let problem = FeasibilityProblem::new(vec![Arc::new(NonNegative), Arc::new(RowSumOne)], (2, 2))?;
        Ok((problem, x0))
    }

    #[test]
    fn restart_driver_is_deterministic() {
        let cfg = DrConfig::default().with_max_iterations(1000);
        let single = restart_driver(&trivial_factory, 1, &cfg, 4).unwrap();
        assert_eq!(single.solved(), 1);
        let a = restart_driver(&trivial_factory, 12, &cfg, 4).unwrap();
        let b = restart_driver(&trivial_factory, 12, &cfg, 4).unwrap();
        assert_eq!(a.records.len(), 12);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.index, y.index);
            assert_eq!(x.iterations, y.iterations);
            assert_eq!(x.solution, y.solution);
        }
        assert!(a.records.windows(2).all(|w| w[0].index < w[1].index));
        assert!(restart_driver(&trivial_factory, 0, &cfg, 4).is_err());
    }

    #[test]
    fn merge_is_order_independent() {
        let rec = |index| RunRecord {
            index,
            solved: true,
            iterations: index,
            wall_time_s: 0.0,
            solution: None,
        };
        let a = RestartStats { records: vec![rec(2), rec(0)] };
        let b = RestartStats { records: vec![rec(1)] };
        let ab: Vec<usize> = a.clone().merge(b.clone()).records.iter().map(|r| r.index).collect();
        let ba: Vec<usize> = b.merge(a).records.iter().map(|r| r.index).collect();
        assert_eq!(ab, vec![0, 1, 2]);
        assert_eq!(ab, ba);
    }

    #[test]
    fn status_of_unsolved_run() {
        let a = Singleton::new(DenseMatrix::zeros(1, 1));
        let b = Singleton::new(DenseMatrix::from_element(1, 1, 1.0));
        let problem = FeasibilityProblem::new(vec![Arc::new(a), Arc::new(b)], (1, 1)).unwrap();
        let run = solve(&problem, &DenseMatrix::zeros(1, 1), &DrConfig::default().with_max_iterations(10)).unwrap();
        assert_eq!(run.status, Status::MaxIterationsReached);
        assert!(frobenius_distance(&run.iterate, &DenseMatrix::from_element(1, 1, 10.0)).unwrap() < 1e-15);
    }
}
