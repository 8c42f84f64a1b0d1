//! Dense matrices under the trace inner product, partial matrices, and the
//! spectral kernels every projection is built from.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_same_shape, ensure_square, Error, Result};

/// Real matrix with Frobenius geometry. Storage is nalgebra's column-major
/// `DMatrix`; all text formats in this crate are row-major.
pub type DenseMatrix = DMatrix<f64>;

pub fn frobenius_distance(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    ensure_same_shape(a.shape(), b.shape())?;
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn symmetrize(x: &DenseMatrix) -> DenseMatrix {
    (x + x.transpose()) * 0.5
}

/// Largest |x_ij - x_ji|.
pub fn asymmetry(x: &DenseMatrix) -> f64 {
    let n = x.nrows().min(x.ncols());
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((x[(i, j)] - x[(j, i)]).abs());
        }
    }
    worst
}

fn ensure_finite(x: &DenseMatrix, what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Decomposition(what))
    }
}

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Nondecreasing.
    pub values: DVector<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: DenseMatrix,
}

impl Spectrum {
    pub fn of(y: &DenseMatrix) -> Result<Self> {
        ensure_square(y.shape())?;
        ensure_finite(y, "symmetric eigendecomposition")?;
        let n = y.nrows();
        if n == 0 {
            return Ok(Spectrum {
                values: DVector::zeros(0),
                vectors: DenseMatrix::zeros(0, 0),
            });
        }
        let eig = SymmetricEigen::new(y.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut vectors = DenseMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(Spectrum { values, vectors })
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn rebuild(&self, mut f: impl FnMut(usize, f64) -> f64) -> DenseMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let w = f(k, self.values[k]);
            scaled.column_mut(k).scale_mut(w);
        }
        &scaled * self.vectors.transpose()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Singular value decomposition `X = U diag(s) Vᵀ` with `s` nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: DVector<f64>,
    pub v_t: DenseMatrix,
}

impl Svd {
    /// Thin SVD. Backed by faer: nalgebra's SVD loses accuracy on exactly
    /// rank-deficient input, which rank projections produce routinely.
    pub fn of(x: &DenseMatrix) -> Result<Self> {
        ensure_finite(x, "singular value decomposition")?;
        let (m, n) = x.shape();
        let k = m.min(n);
        if k == 0 {
            return Ok(Svd {
                u: DenseMatrix::zeros(m, 0),
                singular_values: DVector::zeros(0),
                v_t: DenseMatrix::zeros(0, n),
            });
        }
        let a = faer::Mat::<f64>::from_fn(m, n, |i, j| x[(i, j)]);
        let svd = a
            .thin_svd()
            .map_err(|_| Error::Decomposition("singular value decomposition"))?;
        let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&p, &q| s[q].total_cmp(&s[p]));
        Ok(Svd {
            u: DenseMatrix::from_fn(m, k, |i, c| u[(i, order[c])]),
            singular_values: DVector::from_fn(k, |c, _| s[order[c]]),
            v_t: DenseMatrix::from_fn(k, n, |c, j| v[(j, order[c])]),
        })
    }

    /// `U diag(f(σ)) Vᵀ`.
    pub fn rebuild(&self, mut f: impl FnMut(usize, f64) -> f64) -> DenseMatrix {
        let mut scaled = self.u.clone();
        for k in 0..self.singular_values.len() {
            let w = f(k, self.singular_values[k]);
            scaled.column_mut(k).scale_mut(w);
        }
        &scaled * &self.v_t
    }

    /// Orthogonal polar factor `U Vᵀ` (square inputs only).
    pub fn polar_factor(&self) -> DenseMatrix {
        &self.u * &self.v_t
    }
}

/// Generator for stream `stream` of master seed `seed`. Streams are
/// independent, so run `k` of an experiment always sees the same numbers
/// regardless of how runs are scheduled.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn random_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    // Row-major draw order, so a matrix is reproducible from the text form.
    let mut m = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.random_range(-1.0..=1.0);
        }
    }
    m
}

/// `(Y + Yᵀ)/2` for `Y` uniform on `[-1,1]^{n×n}`.
pub fn random_symmetric_init(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = seeded_rng(seed, 0);
    symmetrize(&random_uniform(n, n, &mut rng))
}

/// Entrywise sign with `sign(0) = +1`.
pub fn round_signs(x: &DenseMatrix) -> DenseMatrix {
    x.map(|v| if v < 0.0 { -1.0 } else { 1.0 })
}

/// The matrix as exact integers, if every entry is an integer of modest size.
pub(crate) fn as_integers(x: &DenseMatrix) -> Option<DMatrix<i64>> {
    if x
        .iter()
        .all(|v| v.is_finite() && v.fract() == 0.0 && v.abs() < 1e9)
    {
        Some(x.map(|v| v as i64))
    } else {
        None
    }
}

/// Row-major ±1 bytes, or `None` if some entry is not exactly ±1.
pub fn sign_bytes(x: &DenseMatrix) -> Option<Vec<i8>> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            match x[(i, j)] {
                1.0 => out.push(1),
                -1.0 => out.push(-1),
                _ => return None,
            }
        }
    }
    Some(out)
}

/// A matrix known only on an index set Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMatrix {
    rows: usize,
    cols: usize,
    symmetric: bool,
    known: BTreeMap<(usize, usize), f64>,
}

impl PartialMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        PartialMatrix {
            rows,
            cols,
            symmetric: false,
            known: BTreeMap::new(),
        }
    }

    pub fn new_symmetric(n: usize) -> Self {
        PartialMatrix {
            symmetric: true,
            ..PartialMatrix::new(n, n)
        }
    }

    /// Every entry known.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut p = PartialMatrix::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                p.known.insert((i, j), m[(i, j)]);
            }
        }
        p
    }

    /// Known wherever `mask(i, j)` holds. A symmetric result requires a
    /// symmetric `m` and mask.
    pub fn from_mask(m: &DenseMatrix, symmetric: bool, mut mask: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut p = if symmetric {
            ensure_square(m.shape())?;
            PartialMatrix::new_symmetric(m.nrows())
        } else {
            PartialMatrix::new(m.nrows(), m.ncols())
        };
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if mask(i, j) {
                    p.known.insert((i, j), m[(i, j)]);
                }
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Records a known entry; symmetric matrices also record `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::InvalidArgument(format!(
                "index ({i}, {j}) outside {}x{}",
                self.rows, self.cols
            )));
        }
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite value at ({i}, {j})")));
        }
        self.known.insert((i, j), value);
        if self.symmetric {
            self.known.insert((j, i), value);
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.known.get(&(i, j)).copied()
    }

    pub fn is_known(&self, i: usize, j: usize) -> bool {
        self.known.contains_key(&(i, j))
    }

    pub fn known_count(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.known.iter().map(|(&k, &v)| (k, v))
    }

    /// Fraction of off-diagonal positions that are known.
    pub fn known_offdiagonal_fraction(&self) -> f64 {
        let total = self.rows * self.cols - self.rows.min(self.cols);
        if total == 0 {
            return 1.0;
        }
        let known = self.known.keys().filter(|(i, j)| i != j).count();
        known as f64 / total as f64
    }

    /// Checks bounds and, for symmetric matrices, that Ω and the values are
    /// symmetric.
    pub fn validate(&self) -> Result<()> {
        for (&(i, j), &v) in &self.known {
            if i >= self.rows || j >= self.cols {
                return Err(Error::InvalidArgument(format!("index ({i}, {j}) out of bounds")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value at ({i}, {j})")));
            }
            if self.symmetric {
                match self.known.get(&(j, i)) {
                    Some(&w) if w == v => {}
                    Some(_) => {
                        return Err(Error::InvalidArgument(format!(
                            "symmetric partial matrix has unequal values at ({i}, {j}) and ({j}, {i})"
                        )))
                    }
                    None => {
                        return Err(Error::InvalidArgument(format!(
                            "symmetric partial matrix knows ({i}, {j}) but not ({j}, {i})"
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Overwrites the known entries of `x`.
    pub fn fill(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        ensure_same_shape(self.shape(), x.shape())?;
        let mut out = x.clone();
        for (&(i, j), &v) in &self.known {
            out[(i, j)] = v;
        }
        Ok(out)
    }

    /// Dense view with unknown entries set to `fill`.
    pub fn to_dense(&self, fill: f64) -> DenseMatrix {
        let mut out = DenseMatrix::from_element(self.rows, self.cols, fill);
        for (&(i, j), &v) in &self.known {
            out[(i, j)] = v;
        }
        out
    }

    /// Principal submatrix on `indices` (square matrices only).
    pub fn principal(&self, indices: &[usize]) -> PartialMatrix {
        let mut sub = PartialMatrix {
            rows: indices.len(),
            cols: indices.len(),
            symmetric: self.symmetric,
            known: BTreeMap::new(),
        };
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                if let Some(v) = self.get(i, j) {
                    sub.known.insert((a, b), v);
                }
            }
        }
        sub
    }
}
