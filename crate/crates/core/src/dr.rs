//! The Douglas–Rachford operator `T = (I + R_B R_A)/2`, its driver loop, and
//! the product-space embedding that turns an N-set problem into two sets.

use std::fmt;
use std::sync::Arc;

use crate::error::{ensure_same_shape, Error, Result};
use crate::matrix::{frobenius_distance, frobenius_norm, round_signs, DenseMatrix};

/// A closed constraint set with a (possibly set-valued, then selected)
/// nearest-point projection.
pub trait ConstraintSet: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix>;

    /// `R_S = 2 P_S - I`.
    fn reflect(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let p = self.project(x)?;
        Ok(p * 2.0 - x)
    }

    /// Ambient shape, when the set is tied to one.
    fn shape(&self) -> Option<(usize, usize)> {
        None
    }

    /// Exact membership test for integer-valued candidates. `None` means the
    /// set has no exact certificate for this candidate.
    fn certify(&self, _candidate: &DenseMatrix) -> Option<bool> {
        None
    }
}

pub type SharedSet = Arc<dyn ConstraintSet>;

pub fn reflect(set: &dyn ConstraintSet, x: &DenseMatrix) -> Result<DenseMatrix> {
    set.reflect(x)
}

/// One application of `T_{A,B}`; the reflection through `a` happens first.
pub fn dr_step(a: &dyn ConstraintSet, b: &dyn ConstraintSet, x: &DenseMatrix) -> Result<DenseMatrix> {
    let ra = a.reflect(x)?;
    let rb = b.reflect(&ra)?;
    Ok((x + rb) * 0.5)
}

/// How `dr_solve` decides that the shadow solves the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certificate {
    /// `dist(P_A x, B) <= feasibility_tol`.
    Distance,
    /// Round the shadow to ±1 entrywise and require both sets to certify it
    /// exactly.
    SignRounding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrConfig {
    pub max_iterations: usize,
    pub feasibility_tol: f64,
    pub seed: u64,
    /// Iterations between feasibility checks.
    pub check_interval: usize,
    pub certificate: Certificate,
    /// The run is flagged diverging once `‖x_n‖ > factor · max(‖x_0‖, 1)`.
    pub divergence_factor: f64,
}

impl Default for DrConfig {
    fn default() -> Self {
        DrConfig {
            max_iterations: 5000,
            feasibility_tol: 1e-10,
            seed: 0,
            check_interval: 1,
            certificate: Certificate::Distance,
            divergence_factor: 1e8,
        }
    }
}

impl DrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be positive".into()));
        }
        if !(self.feasibility_tol >= 0.0) {
            return Err(Error::InvalidArgument("feasibility_tol must be nonnegative".into()));
        }
        if self.check_interval == 0 {
            return Err(Error::InvalidArgument("check_interval must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.feasibility_tol = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_certificate(mut self, certificate: Certificate) -> Self {
        self.certificate = certificate;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Solved,
    MaxIterationsReached,
    Diverging,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Solved => "solved",
            Status::MaxIterationsReached => "max_iterations",
            Status::Diverging => "diverging",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DrRun {
    /// Governing sequence `x_n`.
    pub iterate: DenseMatrix,
    /// `P_A x_n`, the solution candidate.
    pub shadow: DenseMatrix,
    pub iterations_done: usize,
    /// One entry per feasibility check after iteration 0: the distance from
    /// the shadow to `B` under [`Certificate::Distance`], the last step length
    /// `‖x_n - x_{n-1}‖` under [`Certificate::SignRounding`].
    pub residual_history: Vec<f64>,
    pub status: Status,
}

impl DrRun {
    pub fn solved(&self) -> bool {
        self.status == Status::Solved
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }
}

fn check(
    a: &dyn ConstraintSet,
    b: &dyn ConstraintSet,
    shadow: &DenseMatrix,
    cfg: &DrConfig,
) -> Result<(bool, Option<f64>)> {
    match cfg.certificate {
        Certificate::Distance => {
            let gap = frobenius_distance(&b.project(shadow)?, shadow)?;
            Ok((gap <= cfg.feasibility_tol, Some(gap)))
        }
        Certificate::SignRounding => {
            let candidate = round_signs(shadow);
            let ok = a.certify(&candidate) == Some(true) && b.certify(&candidate) == Some(true);
            Ok((ok, None))
        }
    }
}

/// Iterates `x_{n+1} = T_{A,B} x_n` from `x0` until the shadow `P_A x_n`
/// passes the configured certificate or the budget runs out.
pub fn dr_solve(a: &dyn ConstraintSet, b: &dyn ConstraintSet, x0: &DenseMatrix, cfg: &DrConfig) -> Result<DrRun> {
    cfg.validate()?;
    for set in [a, b] {
        if let Some(shape) = set.shape() {
            ensure_same_shape(shape, x0.shape())?;
        }
    }
    let limit = cfg.divergence_factor * frobenius_norm(x0).max(1.0);
    let mut x = x0.clone();
    let mut history = Vec::new();
    let mut last_step = 0.0;
    let mut k = 0usize;
    loop {
        let pa = a.project(&x)?;
        if k.is_multiple_of(cfg.check_interval) || k == cfg.max_iterations {
            let (ok, gap) = check(a, b, &pa, cfg)?;
            if k > 0 {
                history.push(gap.unwrap_or(last_step));
            }
            if ok {
                return Ok(DrRun {
                    iterate: x,
                    shadow: pa,
                    iterations_done: k,
                    residual_history: history,
                    status: Status::Solved,
                });
            }
        }
        if k == cfg.max_iterations {
            return Ok(DrRun {
                iterate: x,
                shadow: pa,
                iterations_done: k,
                residual_history: history,
                status: Status::MaxIterationsReached,
            });
        }
        // x + P_B(2 P_A x - x) - P_A x, reusing the projection above.
        let ra = &pa * 2.0 - &x;
        let step = b.project(&ra)? - &pa;
        last_step = frobenius_norm(&step);
        x += step;
        k += 1;
        if frobenius_norm(&x) > limit {
            let shadow = a.project(&x)?;
            return Ok(DrRun {
                iterate: x,
                shadow,
                iterations_done: k,
                residual_history: history,
                status: Status::Diverging,
            });
        }
    }
}

/// Stacks equally shaped blocks vertically: the N-tuple representation.
pub fn stack_blocks(blocks: &[DenseMatrix]) -> DenseMatrix {
    let (m, n) = blocks[0].shape();
    let mut out = DenseMatrix::zeros(m * blocks.len(), n);
    for (k, b) in blocks.iter().enumerate() {
        out.view_mut((k * m, 0), (m, n)).copy_from(b);
    }
    out
}

pub fn block(x: &DenseMatrix, index: usize, rows: usize) -> DenseMatrix {
    x.view((index * rows, 0), (rows, x.ncols())).into_owned()
}

/// The diagonal `{(x, …, x)}` of `E^N`.
#[derive(Debug, Clone)]
pub struct Diagonal {
    blocks: usize,
    block_shape: (usize, usize),
}

impl Diagonal {
    pub fn new(blocks: usize, block_shape: (usize, usize)) -> Self {
        Diagonal { blocks, block_shape }
    }

    pub fn average(&self, x: &DenseMatrix) -> DenseMatrix {
        let (m, n) = self.block_shape;
        let mut mean = DenseMatrix::zeros(m, n);
        for k in 0..self.blocks {
            mean += x.view((k * m, 0), (m, n));
        }
        mean / self.blocks as f64
    }
}

impl ConstraintSet for Diagonal {
    fn name(&self) -> &'static str {
        "diagonal"
    }

    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let (m, n) = self.block_shape;
        ensure_same_shape((m * self.blocks, n), x.shape())?;
        let mean = self.average(x);
        Ok(stack_blocks(&vec![mean; self.blocks]))
    }

    fn shape(&self) -> Option<(usize, usize)> {
        Some((self.block_shape.0 * self.blocks, self.block_shape.1))
    }

    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        let m = self.block_shape.0;
        let first = block(candidate, 0, m);
        Some((1..self.blocks).all(|k| block(candidate, k, m) == first))
    }
}

/// `C_1 × … × C_N` with componentwise projections.
#[derive(Debug, Clone)]
pub struct Product {
    sets: Vec<SharedSet>,
    block_shape: (usize, usize),
}

impl Product {
    pub fn new(sets: Vec<SharedSet>, block_shape: (usize, usize)) -> Self {
        Product { sets, block_shape }
    }

    pub fn sets(&self) -> &[SharedSet] {
        &self.sets
    }
}

impl ConstraintSet for Product {
    fn name(&self) -> &'static str {
        "product"
    }

    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let (m, n) = self.block_shape;
        ensure_same_shape((m * self.sets.len(), n), x.shape())?;
        let mut out = DenseMatrix::zeros(m * self.sets.len(), n);
        for (k, set) in self.sets.iter().enumerate() {
            let p = set.project(&block(x, k, m))?;
            out.view_mut((k * m, 0), (m, n)).copy_from(&p);
        }
        Ok(out)
    }

    fn shape(&self) -> Option<(usize, usize)> {
        Some((self.block_shape.0 * self.sets.len(), self.block_shape.1))
    }

    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        let m = self.block_shape.0;
        let mut all = true;
        for (k, set) in self.sets.iter().enumerate() {
            all &= set.certify(&block(candidate, k, m))?;
        }
        Some(all)
    }
}

/// `(D, C, x0)` for the product-space reformulation. `D` is reflected first.
#[derive(Debug, Clone)]
pub struct ProductEmbedding {
    pub diagonal: Diagonal,
    pub product: Product,
    pub x0: DenseMatrix,
}

impl ProductEmbedding {
    pub fn block_rows(&self) -> usize {
        self.diagonal.block_shape.0
    }

    /// The single monitored coordinate of a stacked point.
    pub fn coordinate(&self, stacked: &DenseMatrix) -> DenseMatrix {
        block(stacked, 0, self.block_rows())
    }
}

pub fn product_embed(sets: &[SharedSet], x: &DenseMatrix) -> Result<ProductEmbedding> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("product embedding needs at least one set".into()));
    }
    for set in sets {
        if let Some(shape) = set.shape() {
            ensure_same_shape(shape, x.shape())?;
        }
    }
    let n = sets.len();
    Ok(ProductEmbedding {
        diagonal: Diagonal::new(n, x.shape()),
        product: Product::new(sets.to_vec(), x.shape()),
        x0: stack_blocks(&vec![x.clone(); n]),
    })
}
