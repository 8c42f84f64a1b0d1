//! Randomized searches for Hadamard, skew-Hadamard and circulant Hadamard
//! matrices. Each restart runs DR from a uniform `[-1, 1]` start and is
//! accepted only when the sign-rounded shadow passes exact integer checks.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::dr::{Certificate, ConstraintSet, DrConfig, SharedSet};
use crate::error::{ensure_square, Error, Result};
use crate::io::Report;
use crate::matrix::{as_integers, random_uniform, round_signs, sign_bytes, DenseMatrix};
use crate::sets::{
    is_circulant, project_circulant, project_scaled_orthogonal, Circulant, PlusMinusOne, ScaledOrthogonal,
    ScaledOrthogonalFnorm, SkewAffine, SkewPlusMinusOne,
};
use crate::solvers::{restart_driver, FeasibilityProblem, Mode};

/// Which scaled-orthogonal selection plays the second set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// `√n U Vᵀ`.
    C2,
    /// `√‖X‖_F U Vᵀ`.
    C3,
}

impl Formulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::C2 => "c2",
            Formulation::C3 => "c3",
        }
    }

    fn orthogonal_set(self) -> SharedSet {
        match self {
            Formulation::C2 => Arc::new(ScaledOrthogonal),
            Formulation::C3 => Arc::new(ScaledOrthogonalFnorm),
        }
    }
}

impl FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c2" => Ok(Formulation::C2),
            "c3" => Ok(Formulation::C3),
            other => Err(Error::InvalidArgument(format!("unknown formulation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    Hadamard,
    SkewHadamard,
    CirculantHadamard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CirculantMode {
    /// Product space over (±1, scaled orthogonal, circulant).
    #[default]
    ProductSpace,
    /// Two sets: ±1 against a selection that alternates the circulant and
    /// scaled-orthogonal projections. Experimental.
    Composed,
}

/// Restart outcomes for one search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchStats {
    pub order: usize,
    pub formulation: Formulation,
    pub restarts: usize,
    pub solved: usize,
    pub distinct: usize,
    /// One entry per solved restart, in restart order.
    pub iterations_per_solve: Vec<usize>,
    /// One entry per restart.
    pub wall_time_per_run: Vec<f64>,
    /// Distinct certified matrices in order of first discovery.
    pub solutions: Vec<DenseMatrix>,
}

/// Per-restart iteration cap: 10000 up to order 12, 50000 beyond.
pub fn default_max_iterations(order: usize) -> usize {
    if order <= 12 {
        10_000
    } else {
        50_000
    }
}

const ALTERNATIONS: usize = 5;

/// Circulant scaled-orthogonal matrices, reached by alternating the two
/// projections. Not a metric projection.
#[derive(Debug, Clone, Copy, Default)]
pub struct CirculantOrthogonal;

impl ConstraintSet for CirculantOrthogonal {
    fn name(&self) -> &'static str {
        "circulant-orthogonal"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut y = x.clone();
        for _ in 0..ALTERNATIONS {
            y = project_scaled_orthogonal(&project_circulant(&y)?)?;
        }
        Ok(y)
    }
    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        Some(ScaledOrthogonal.certify(candidate)? && is_circulant(candidate))
    }
}

fn search(order: usize, formulation: Formulation, restarts: usize, max_iter: usize, seed: u64, sets: Vec<SharedSet>, mode: Mode) -> Result<SearchStats> {
    if order == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    let cfg = DrConfig::default()
        .with_max_iterations(max_iter)
        .with_seed(seed)
        .with_certificate(Certificate::SignRounding);
    let factory = |_: usize, rng: &mut ChaCha8Rng| -> Result<(FeasibilityProblem, DenseMatrix)> {
        let problem = FeasibilityProblem::with_mode(sets.clone(), (order, order), mode)?;
        Ok((problem, random_uniform(order, order, rng)))
    };
    let outcome = restart_driver(&factory, restarts, &cfg, seed)?;
    let mut seen = BTreeSet::new();
    let mut solutions = Vec::new();
    let mut iterations_per_solve = Vec::new();
    for record in &outcome.records {
        if let Some(h) = record.solution.as_ref().filter(|_| record.solved) {
            iterations_per_solve.push(record.iterations);
            let key = sign_bytes(h).ok_or(Error::Undefined("sign bytes of a certified solution"))?;
            if seen.insert(key) {
                solutions.push(h.clone());
            }
        }
    }
    Ok(SearchStats {
        order,
        formulation,
        restarts,
        solved: iterations_per_solve.len(),
        distinct: solutions.len(),
        iterations_per_solve,
        wall_time_per_run: outcome.records.iter().map(|r| r.wall_time_s).collect(),
        solutions,
    })
}

/// ±1 matrices against the formulation's scaled orthogonal set.
pub fn hadamard_search(order: usize, formulation: Formulation, restarts: usize, max_iter: usize, seed: u64) -> Result<SearchStats> {
    let sets = vec![Arc::new(PlusMinusOne::new()) as SharedSet, formulation.orthogonal_set()];
    search(order, formulation, restarts, max_iter, seed, sets, Mode::TwoSet)
}

/// Skew ±1 matrices (unit diagonal, `H + Hᵀ = 2I`) against the scaled
/// orthogonal set.
pub fn skew_hadamard_search(order: usize, formulation: Formulation, restarts: usize, max_iter: usize, seed: u64) -> Result<SearchStats> {
    let sets = vec![Arc::new(SkewPlusMinusOne) as SharedSet, formulation.orthogonal_set()];
    search(order, formulation, restarts, max_iter, seed, sets, Mode::TwoSet)
}

/// ±1, scaled orthogonal and the skew affine set as three separate sets in
/// the product space.
pub fn skew_hadamard_search_three_set(order: usize, formulation: Formulation, restarts: usize, max_iter: usize, seed: u64) -> Result<SearchStats> {
    let sets = vec![Arc::new(PlusMinusOne::new()) as SharedSet, formulation.orthogonal_set(), Arc::new(SkewAffine)];
    search(order, formulation, restarts, max_iter, seed, sets, Mode::ProductSpace)
}

/// Circulant ±1 matrices with `HᵀH = nI`, using the `√n UVᵀ` selection.
pub fn circulant_hadamard_search(order: usize, restarts: usize, max_iter: usize, seed: u64, mode: CirculantMode) -> Result<SearchStats> {
    let pm: SharedSet = Arc::new(PlusMinusOne::new());
    let (sets, m) = match mode {
        CirculantMode::ProductSpace => (vec![pm, Arc::new(ScaledOrthogonal) as SharedSet, Arc::new(Circulant)], Mode::ProductSpace),
        CirculantMode::Composed => (vec![pm, Arc::new(CirculantOrthogonal) as SharedSet], Mode::TwoSet),
    };
    search(order, Formulation::C2, restarts, max_iter, seed, sets, m)
}

/// Exact integer checks of the identities defining `kind`. Entries must
/// round to ±1 within 0.5.
pub fn verify_certificates(h: &DenseMatrix, kind: CertificateKind) -> Result<bool> {
    let n = ensure_square(h.shape())?;
    if let Some(((i, j), v)) = h.iter().enumerate().map(|(k, v)| ((k % n, k / n), v)).find(|(_, v)| !((v.abs() - 1.0).abs() <= 0.5)) {
        return Err(Error::InvalidArgument(format!("entry ({i}, {j}) = {v} is not near ±1")));
    }
    let h = round_signs(h);
    let hadamard = ScaledOrthogonal.certify(&h) == Some(true);
    Ok(match kind {
        CertificateKind::Hadamard => hadamard,
        CertificateKind::SkewHadamard => hadamard && SkewAffine.certify(&h) == Some(true),
        CertificateKind::CirculantHadamard => hadamard && is_circulant(&h) && as_integers(&h).is_some(),
    })
}

/// CSV `bin_lo,bin_hi,count` over the iterations of solved restarts, one
/// row per nonempty bin `[k·w, (k+1)·w)`.
pub fn export_histogram(stats: &SearchStats, bin_width: usize) -> Result<String> {
    if bin_width == 0 {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    let mut counts = std::collections::BTreeMap::new();
    for &it in &stats.iterations_per_solve {
        *counts.entry(it / bin_width).or_insert(0usize) += 1;
    }
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (bin, count) in counts {
        let _ = writeln!(out, "{},{},{}", bin * bin_width, (bin + 1) * bin_width, count);
    }
    Ok(out)
}

/// Keys of [`summary_report`] that depend on wall-clock time.
pub const TIMING_KEYS: &[&str] = &["ave_time_s"];

pub fn summary_report(stats: &SearchStats) -> Report {
    let mut r = Report::new();
    let runs = stats.wall_time_per_run.len().max(1) as f64;
    r.set("order", stats.order)
        .set("formulation", stats.formulation.as_str())
        .set("restarts", stats.restarts)
        .set("solved", stats.solved)
        .set("distinct", stats.distinct)
        .set_float("ave_time_s", stats.wall_time_per_run.iter().sum::<f64>() / runs);
    if !stats.iterations_per_solve.is_empty() {
        let mean = stats.iterations_per_solve.iter().sum::<usize>() as f64 / stats.solved as f64;
        r.set_float("ave_iterations", mean);
    }
    r
}
