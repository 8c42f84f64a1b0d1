//! Selections from the nearest-point sets of the non-convex constraints:
//! bounded rank, rank-restricted EDM hat blocks, ±1 entries, scaled
//! orthogonal matrices, skew structure, and circulants.

use rand::Rng;

use crate::dr::ConstraintSet;
use crate::error::{ensure_square, Error, Result};
use crate::matrix::{as_integers, frobenius_norm, seeded_rng, symmetrize, DenseMatrix, PartialMatrix, Svd};
use crate::sets::convex::hat_spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankBound(pub usize);

/// Best rank-`r` approximation by singular value truncation.
pub fn project_rank_leq(x: &DenseMatrix, r: RankBound) -> Result<DenseMatrix> {
    let RankBound(r) = r;
    if r >= x.nrows().min(x.ncols()) {
        return Ok(x.clone());
    }
    if r == 0 {
        return Ok(DenseMatrix::zeros(x.nrows(), x.ncols()));
    }
    let svd = Svd::of(x)?;
    Ok(svd.rebuild(|k, s| if k < r { s } else { 0.0 }))
}

/// Like [`project_edm_psd_block`](super::convex::project_edm_psd_block) but
/// keeps only the `r` largest hat eigenvalues, each clipped at zero.
pub fn project_edm_rank(x: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    let n = ensure_square(x.shape())?;
    if r == 0 || r >= n.max(1) {
        return Err(Error::InvalidArgument(format!("EDM rank must lie in 1..={}, got {r}", n.saturating_sub(1))));
    }
    let (mut blocks, spectrum, q) = hat_spectrum(x)?;
    let k = n - 1;
    // Eigenvalues are nondecreasing; keep indices k-r..k.
    blocks.hat = spectrum.rebuild(|i, l| if i + r >= k { l.max(0.0) } else { 0.0 });
    Ok(symmetrize(&blocks.to_matrix(&q)))
}

/// How `project_pm_one` resolves an exact zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    Positive,
    /// A fixed pseudo-random sign per position, drawn from this seed.
    Seeded(u64),
}

fn tie_sign(tie: TieBreak, i: usize, j: usize, cols: usize) -> f64 {
    match tie {
        TieBreak::Positive => 1.0,
        TieBreak::Seeded(seed) => {
            let mut rng = seeded_rng(seed, (i * cols + j) as u64);
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Entrywise sign into {−1, +1}; fixed positions keep their fixed values.
pub fn project_pm_one(x: &DenseMatrix, fixed: Option<&PartialMatrix>, tie: TieBreak) -> Result<DenseMatrix> {
    let cols = x.ncols();
    let mut out = DenseMatrix::from_fn(x.nrows(), cols, |i, j| {
        let v = x[(i, j)];
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            tie_sign(tie, i, j, cols)
        }
    });
    if let Some(fixed) = fixed {
        for ((i, j), v) in fixed.iter() {
            if v != 1.0 && v != -1.0 {
                return Err(Error::InvalidArgument(format!("fixed entry ({i}, {j}) = {v} is not ±1")));
            }
        }
        out = fixed.fill(&out)?;
    }
    Ok(out)
}

/// `√n U Vᵀ`, a nearest matrix with `AᵀA = nI`.
pub fn project_scaled_orthogonal(x: &DenseMatrix) -> Result<DenseMatrix> {
    let n = ensure_square(x.shape())?;
    let scale = (n as f64).sqrt();
    if x.iter().all(|&v| v == 0.0) {
        return Ok(DenseMatrix::identity(n, n) * scale);
    }
    Ok(Svd::of(x)?.polar_factor() * scale)
}

/// `√‖X‖_F U Vᵀ`. Its output satisfies `AᵀA = ‖X‖_F I` with the norm of the
/// input, so it is a fixed point only when `‖X‖_F = n`.
pub fn project_scaled_orthogonal_fnorm(x: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_square(x.shape())?;
    let norm = frobenius_norm(x);
    if norm == 0.0 {
        return Err(Error::InvalidArgument("scaled orthogonal selection of the zero matrix".into()));
    }
    Ok(Svd::of(x)?.polar_factor() * norm.sqrt())
}

/// ±1 matrix with unit diagonal and `H + Hᵀ = 2I`, choosing the sign of
/// each off-diagonal pair from the larger of `X_ij`, `X_ji`.
pub fn project_skew_pm_one(x: &DenseMatrix) -> Result<DenseMatrix> {
    let n = ensure_square(x.shape())?;
    let mut out = DenseMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = if x[(i, j)] >= x[(j, i)] { 1.0 } else { -1.0 };
            out[(i, j)] = s;
            out[(j, i)] = -s;
        }
    }
    Ok(out)
}

/// `I + (X - Xᵀ)/2`.
pub fn project_skew_affine(x: &DenseMatrix) -> Result<DenseMatrix> {
    let n = ensure_square(x.shape())?;
    Ok(DenseMatrix::identity(n, n) + (x - x.transpose()) * 0.5)
}

/// Powers of the cyclic permutation `P` with `P_ij = 1` iff `i ≡ j + 1 (mod n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicBasis {
    pub n: usize,
    pub generator: DenseMatrix,
}

impl CyclicBasis {
    pub fn new(n: usize) -> Self {
        let generator = DenseMatrix::from_fn(n, n, |i, j| if i == (j + 1) % n { 1.0 } else { 0.0 });
        CyclicBasis { n, generator }
    }

    /// `P^k`, whose ones sit where `i ≡ j + k (mod n)`.
    pub fn power(&self, k: usize) -> DenseMatrix {
        let n = self.n;
        DenseMatrix::from_fn(n, n, |i, j| if i == (j + k) % n { 1.0 } else { 0.0 })
    }
}

/// Nearest circulant: the coefficient of `P^k` is the mean of `X` over the
/// wrapped diagonal `i - j ≡ k`.
pub fn project_circulant(x: &DenseMatrix) -> Result<DenseMatrix> {
    let n = ensure_square(x.shape())?;
    let mut coeff = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            coeff[(i + n - j) % n] += x[(i, j)];
        }
    }
    for c in &mut coeff {
        *c /= n as f64;
    }
    Ok(DenseMatrix::from_fn(n, n, |i, j| coeff[(i + n - j) % n]))
}

pub fn is_circulant(x: &DenseMatrix) -> bool {
    let n = x.nrows();
    x.is_square() && (0..n).all(|i| (0..n).all(|j| x[(i, j)] == x[(0, (j + n - i) % n)]))
}

/// `HᵀH == c·I` in exact integer arithmetic, for some integer `c`.
fn integer_gram_is_scalar(h: &DenseMatrix, c: impl Fn(i64) -> bool) -> Option<bool> {
    let h = as_integers(h)?;
    let n = h.ncols();
    let g = h.transpose() * &h;
    let d = g[(0, 0)];
    let scalar = (0..n).all(|i| (0..n).all(|j| g[(i, j)] == if i == j { d } else { 0 }));
    Some(scalar && c(d))
}

pub fn is_pm_one(x: &DenseMatrix) -> bool {
    x.iter().all(|&v| v == 1.0 || v == -1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct RankAtMost(pub RankBound);

impl ConstraintSet for RankAtMost {
    fn name(&self) -> &'static str {
        "rank-at-most"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_rank_leq(x, self.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EdmRank {
    pub rank: usize,
}

impl ConstraintSet for EdmRank {
    fn name(&self) -> &'static str {
        "edm-rank"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_edm_rank(x, self.rank)
    }
}

#[derive(Debug, Clone, Default)]
pub struct PlusMinusOne {
    fixed: Option<PartialMatrix>,
    tie: TieBreak,
}

impl PlusMinusOne {
    pub fn new() -> Self {
        PlusMinusOne::default()
    }

    pub fn with_fixed(fixed: PartialMatrix) -> Result<Self> {
        for ((i, j), v) in fixed.iter() {
            if v != 1.0 && v != -1.0 {
                return Err(Error::InvalidArgument(format!("fixed entry ({i}, {j}) = {v} is not ±1")));
            }
        }
        Ok(PlusMinusOne {
            fixed: Some(fixed),
            tie: TieBreak::Positive,
        })
    }

    pub fn tie_break(mut self, tie: TieBreak) -> Self {
        self.tie = tie;
        self
    }
}

impl ConstraintSet for PlusMinusOne {
    fn name(&self) -> &'static str {
        "pm-one"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_pm_one(x, self.fixed.as_ref(), self.tie)
    }
    fn shape(&self) -> Option<(usize, usize)> {
        self.fixed.as_ref().map(PartialMatrix::shape)
    }
    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        let fixed_ok = self
            .fixed
            .as_ref()
            .is_none_or(|f| f.iter().all(|((i, j), v)| candidate[(i, j)] == v));
        Some(is_pm_one(candidate) && fixed_ok)
    }
}

/// `{A : AᵀA = nI}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScaledOrthogonal;

impl ConstraintSet for ScaledOrthogonal {
    fn name(&self) -> &'static str {
        "scaled-orthogonal"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_scaled_orthogonal(x)
    }
    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        let n = candidate.nrows() as i64;
        integer_gram_is_scalar(candidate, |d| d == n)
    }
}

/// `{A : AᵀA = ‖A‖_F I}` through the `√‖X‖_F U Vᵀ` selection.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScaledOrthogonalFnorm;

impl ConstraintSet for ScaledOrthogonalFnorm {
    fn name(&self) -> &'static str {
        "scaled-orthogonal-fnorm"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_scaled_orthogonal_fnorm(x)
    }
    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        let squared: i64 = as_integers(candidate)?.iter().map(|v| v * v).sum();
        // ‖A‖_F = d must be an integer with d² = Σ a_ij².
        integer_gram_is_scalar(candidate, |d| d * d == squared)
    }
}

/// ±1 matrices with `H + Hᵀ = 2I`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SkewPlusMinusOne;

impl ConstraintSet for SkewPlusMinusOne {
    fn name(&self) -> &'static str {
        "skew-pm-one"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_skew_pm_one(x)
    }
    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        Some(is_pm_one(candidate) && SkewAffine.certify(candidate)?)
    }
}

/// `{X : X + Xᵀ = 2I}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SkewAffine;

impl ConstraintSet for SkewAffine {
    fn name(&self) -> &'static str {
        "skew-affine"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_skew_affine(x)
    }
    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        let h = as_integers(candidate)?;
        let n = h.nrows();
        Some(h.is_square() && (0..n).all(|i| (0..n).all(|j| h[(i, j)] + h[(j, i)] == if i == j { 2 } else { 0 })))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Circulant;

impl ConstraintSet for Circulant {
    fn name(&self) -> &'static str {
        "circulant"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_circulant(x)
    }
    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        as_integers(candidate)?;
        Some(is_circulant(candidate))
    }
}
