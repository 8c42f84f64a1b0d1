//! Nearest-point projections onto the convex sets: fixed entries, the PSD
//! cone and its ε-floored interior, row/column sum hyperplanes, the
//! nonnegative orthant, and the two sets describing Euclidean distance
//! matrices.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DVector;

use crate::dr::ConstraintSet;
use crate::error::{ensure_same_shape, ensure_square, Error, Result};
use crate::matrix::{asymmetry, symmetrize, DenseMatrix, PartialMatrix, Spectrum};

pub fn project_fixed_entries(p: &PartialMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    p.fill(x)
}

/// Nearest positive semidefinite matrix: symmetrize, then clip the spectrum
/// at zero.
pub fn project_psd(x: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_square(x.shape())?;
    let spectrum = Spectrum::of(&symmetrize(x))?;
    Ok(spectrum.rebuild(|_, l| l.max(0.0)))
}

/// Nearest symmetric matrix whose eigenvalues are all at least `eps`.
pub fn project_psd_floor(x: &DenseMatrix, eps: f64) -> Result<DenseMatrix> {
    ensure_square(x.shape())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eigenvalue floor must be positive, got {eps}")));
    }
    let spectrum = Spectrum::of(&symmetrize(x))?;
    Ok(spectrum.rebuild(|_, l| l.max(eps)))
}

/// Each row shifted uniformly onto `{y : Σ y = 1}`.
pub fn project_sum_one_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    let m = x.ncols() as f64;
    for mut row in out.row_iter_mut() {
        let shift = (1.0 - row.sum()) / m;
        row.add_scalar_mut(shift);
    }
    out
}

/// Each column shifted uniformly onto `{y : Σ y = 1}`.
pub fn project_sum_one_cols(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    let m = x.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let shift = (1.0 - col.sum()) / m;
        col.add_scalar_mut(shift);
    }
    out
}

pub fn project_nonneg(x: &DenseMatrix) -> DenseMatrix {
    x.map(|v| v.max(0.0))
}

/// The Householder reflector `I - 2vvᵀ/(vᵀv)` with `v = (1, …, 1, 1 + √n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholderQ {
    pub n: usize,
    pub matrix: DenseMatrix,
}

pub fn make_householder_q(n: usize) -> Result<HouseholderQ> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Householder order must be at least 2, got {n}")));
    }
    let mut v = DVector::from_element(n, 1.0);
    v[n - 1] = 1.0 + (n as f64).sqrt();
    let vtv = v.dot(&v);
    let mut matrix = DenseMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vtv);
    // Exact storage symmetry.
    for i in 0..n {
        for j in (i + 1)..n {
            matrix[(j, i)] = matrix[(i, j)];
        }
    }
    Ok(HouseholderQ { n, matrix })
}

/// Shared, immutable `Q` for order `n`; built on first use.
pub fn householder_q(n: usize) -> Result<Arc<HouseholderQ>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<HouseholderQ>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(q) = cache.lock().expect("householder cache poisoned").get(&n) {
        return Ok(q.clone());
    }
    let q = Arc::new(make_householder_q(n)?);
    cache
        .lock()
        .expect("householder cache poisoned")
        .insert(n, q.clone());
    Ok(q)
}

/// Blocks of `Q(-X)Q = [[hat, edge], [edgeᵀ, corner]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdmBlocks {
    pub hat: DenseMatrix,
    pub edge: DVector<f64>,
    pub corner: f64,
}

impl EdmBlocks {
    pub fn assemble(&self) -> DenseMatrix {
        let k = self.hat.nrows();
        let mut m = DenseMatrix::zeros(k + 1, k + 1);
        m.view_mut((0, 0), (k, k)).copy_from(&self.hat);
        for i in 0..k {
            m[(i, k)] = self.edge[i];
            m[(k, i)] = self.edge[i];
        }
        m[(k, k)] = self.corner;
        m
    }

    /// `-Q [[hat, edge], [edgeᵀ, corner]] Q`.
    pub fn to_matrix(&self, q: &HouseholderQ) -> DenseMatrix {
        -(&q.matrix * self.assemble() * &q.matrix)
    }
}

pub fn edm_blocks(x: &DenseMatrix, q: &HouseholderQ) -> Result<EdmBlocks> {
    let n = ensure_square(x.shape())?;
    ensure_same_shape((q.n, q.n), x.shape())?;
    if asymmetry(x) > 1e-9 {
        return Err(Error::InvalidArgument("EDM blocks need a symmetric matrix".into()));
    }
    let t = -(&q.matrix * x * &q.matrix);
    let k = n - 1;
    let hat = symmetrize(&t.view((0, 0), (k, k)).into_owned());
    let edge = DVector::from_iterator(k, (0..k).map(|i| 0.5 * (t[(i, k)] + t[(k, i)])));
    Ok(EdmBlocks {
        hat,
        edge,
        corner: t[(k, k)],
    })
}

/// Hat block of a symmetric matrix, with its spectrum.
pub(crate) fn hat_spectrum(x: &DenseMatrix) -> Result<(EdmBlocks, Spectrum, Arc<HouseholderQ>)> {
    let n = ensure_square(x.shape())?;
    let q = householder_q(n)?;
    let blocks = edm_blocks(&symmetrize(x), &q)?;
    let spectrum = Spectrum::of(&blocks.hat)?;
    Ok((blocks, spectrum, q))
}

fn distance_matrix_rule(
    d: &PartialMatrix,
    x: &DenseMatrix,
    mut known: impl FnMut(f64, f64) -> f64,
) -> Result<DenseMatrix> {
    ensure_same_shape(d.shape(), x.shape())?;
    if !d.is_symmetric() {
        d.validate()?;
        // Ω must still be symmetric as an index set.
        for ((i, j), _) in d.iter() {
            if !d.is_known(j, i) {
                return Err(Error::InvalidArgument(format!("known set is not symmetric at ({i}, {j})")));
            }
        }
    }
    let y = symmetrize(x);
    let n = y.nrows();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            out[(i, j)] = match d.get(i, j) {
                Some(target) => known(target, y[(i, j)]),
                None => y[(i, j)].max(0.0),
            };
        }
    }
    Ok(symmetrize(&out))
}

/// Nearest distance matrix agreeing with the known entries.
pub fn project_edm_known(d: &PartialMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    distance_matrix_rule(d, x, |target, _| target)
}

/// Nearest distance matrix within `eps` of every known entry.
pub fn project_edm_known_noise(d: &PartialMatrix, eps: f64, x: &DenseMatrix) -> Result<DenseMatrix> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {eps}")));
    }
    distance_matrix_rule(d, x, |target, v| {
        let lo = (target - eps).max(0.0);
        let hi = target + eps;
        v.clamp(lo, hi)
    })
}

/// Nearest matrix whose hat block in `Q(-X)Q` is positive semidefinite.
pub fn project_edm_psd_block(x: &DenseMatrix) -> Result<DenseMatrix> {
    let (mut blocks, spectrum, q) = hat_spectrum(x)?;
    blocks.hat = spectrum.rebuild(|_, l| l.max(0.0));
    Ok(symmetrize(&blocks.to_matrix(&q)))
}

#[derive(Debug, Clone)]
pub struct FixedEntries {
    known: PartialMatrix,
}

impl FixedEntries {
    pub fn new(known: PartialMatrix) -> Self {
        FixedEntries { known }
    }

    pub fn known(&self) -> &PartialMatrix {
        &self.known
    }
}

impl ConstraintSet for FixedEntries {
    fn name(&self) -> &'static str {
        "fixed-entries"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_fixed_entries(&self.known, x)
    }
    fn reflect(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        ensure_same_shape(self.known.shape(), x.shape())?;
        let mut out = x.clone();
        for ((i, j), v) in self.known.iter() {
            out[(i, j)] = 2.0 * v - x[(i, j)];
        }
        Ok(out)
    }
    fn shape(&self) -> Option<(usize, usize)> {
        Some(self.known.shape())
    }
    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        Some(self.known.iter().all(|((i, j), v)| candidate[(i, j)] == v))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Psd;

impl ConstraintSet for Psd {
    fn name(&self) -> &'static str {
        "psd"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_psd(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PsdFloor {
    pub eps: f64,
}

impl ConstraintSet for PsdFloor {
    fn name(&self) -> &'static str {
        "psd-floor"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_psd_floor(x, self.eps)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RowSumOne;

impl ConstraintSet for RowSumOne {
    fn name(&self) -> &'static str {
        "row-sum-one"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(project_sum_one_rows(x))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ColSumOne;

impl ConstraintSet for ColSumOne {
    fn name(&self) -> &'static str {
        "col-sum-one"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(project_sum_one_cols(x))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NonNegative;

impl ConstraintSet for NonNegative {
    fn name(&self) -> &'static str {
        "nonneg"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(project_nonneg(x))
    }
    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        Some(candidate.iter().all(|&v| v >= 0.0))
    }
}

/// Distance matrices matching the known entries, optionally within `eps`.
#[derive(Debug, Clone)]
pub struct EdmKnown {
    known: PartialMatrix,
    eps: f64,
}

impl EdmKnown {
    pub fn exact(known: PartialMatrix) -> Self {
        EdmKnown { known, eps: 0.0 }
    }

    pub fn with_noise(known: PartialMatrix, eps: f64) -> Self {
        EdmKnown { known, eps }
    }

    pub fn known(&self) -> &PartialMatrix {
        &self.known
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

impl ConstraintSet for EdmKnown {
    fn name(&self) -> &'static str {
        if self.eps == 0.0 {
            "edm-known"
        } else {
            "edm-known-noise"
        }
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.eps == 0.0 {
            project_edm_known(&self.known, x)
        } else {
            project_edm_known_noise(&self.known, self.eps, x)
        }
    }
    fn shape(&self) -> Option<(usize, usize)> {
        Some(self.known.shape())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EdmPsdBlock;

impl ConstraintSet for EdmPsdBlock {
    fn name(&self) -> &'static str {
        "edm-psd-block"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        project_edm_psd_block(x)
    }
}
