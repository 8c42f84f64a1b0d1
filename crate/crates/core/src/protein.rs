//! Point configurations from partial squared-distance data: ingestion,
//! cutoff truncation, DR reconstruction, classical MDS embedding,
//! Procrustes alignment, error metrics and the two-phase block scheme.
//!
//! Matrices hold SQUARED distances; cutoffs apply to unsquared distances.

use std::collections::BTreeSet;

use nalgebra::Matrix3;
use rand::Rng;
use rayon::prelude::*;

use crate::dr::{dr_step, ConstraintSet};
use crate::error::{ensure_square, Error, Result};
use crate::matrix::{frobenius_norm, random_symmetric_init, random_uniform, seeded_rng, symmetrize, DenseMatrix, PartialMatrix, Svd};
use crate::sets::{EdmKnown, EdmRank};
use crate::solvers::with_worker_pool;

/// Sentinel for a zero residual in [`relative_error_db`].
pub const ZERO_RESIDUAL_DB: f64 = -999.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub labels: Option<Vec<String>>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        PointCloud { points, labels: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared pairwise distances.
    pub fn squared_distances(&self) -> DenseMatrix {
        let n = self.len();
        DenseMatrix::from_fn(n, n, |i, j| dist2(&self.points[i], &self.points[j]))
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / self.len().max(1) as f64)
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// `n` points uniform in `[0, side]³`.
pub fn random_cloud(n: usize, side: f64, seed: u64) -> PointCloud {
    let mut rng = seeded_rng(seed, 0);
    PointCloud::new(
        (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(0.0..=side)))
            .collect(),
    )
}

fn parse_coord(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad coordinate {:?}", field.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: "non-finite coordinate".into(),
        });
    }
    Ok(v)
}

fn is_pdb_record(line: &str) -> bool {
    line.starts_with("ATOM") || line.starts_with("HETATM")
}

/// XYZ-CSV (`x,y,z[,label]`) or PDB ATOM/HETATM records. PDB input is
/// recognized by the presence of any such record; its other records are
/// skipped.
pub fn parse_points(source: &str) -> Result<PointCloud> {
    let pdb = source.lines().any(is_pdb_record);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        if pdb {
            if !is_pdb_record(raw) {
                continue;
            }
            let field = |lo: usize, hi: usize| {
                raw.get(lo..hi.min(raw.len())).filter(|s| !s.trim().is_empty()).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("record too short for columns {}-{}", lo + 1, hi),
                })
            };
            points.push([
                parse_coord(field(30, 38)?, line)?,
                parse_coord(field(38, 46)?, line)?,
                parse_coord(field(46, 54)?, line)?,
            ]);
            labels.push(raw.get(12..16).unwrap_or("").trim().to_string());
        } else {
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = text.split(',').collect();
            if fields.len() != 3 && fields.len() != 4 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 3 or 4 fields, found {}", fields.len()),
                });
            }
            points.push([parse_coord(fields[0], line)?, parse_coord(fields[1], line)?, parse_coord(fields[2], line)?]);
            labels.push(fields.get(3).map(|s| s.trim().to_string()).unwrap_or_default());
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let labels = labels.iter().any(|l| !l.is_empty()).then_some(labels);
    Ok(PointCloud { points, labels })
}

/// Squared distances known where the unsquared distance is within
/// `cutoff`; the diagonal is known and zero.
pub fn build_partial_distance_matrix(cloud: &PointCloud, cutoff: f64) -> Result<PartialMatrix> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two points".into()));
    }
    if cutoff.is_nan() || cutoff <= 0.0 {
        return Err(Error::InvalidArgument(format!("cutoff must be positive, got {cutoff}")));
    }
    let d = cloud.squared_distances();
    let cut2 = cutoff * cutoff;
    PartialMatrix::from_mask(&d, true, |i, j| i == j || d[(i, j)] <= cut2).map(|mut p| {
        for i in 0..n {
            // Exact zero, not a rounded self-distance.
            p.set(i, i, 0.0).expect("in bounds");
        }
        p
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructParams {
    pub eps: f64,
    pub rank: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        ReconstructParams {
            eps: 0.1,
            rank: 3,
            iterations: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EdmRun {
    /// `P_{C1^ε}` of the final iterate.
    pub shadow: DenseMatrix,
    pub iterate: DenseMatrix,
}

fn sets_for(p: &PartialMatrix, params: &ReconstructParams) -> Result<(EdmKnown, EdmRank)> {
    let n = ensure_square(p.shape())?;
    if !p.is_symmetric() {
        return Err(Error::InvalidArgument("distance data must be a symmetric partial matrix".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two points".into()));
    }
    let rank = params.rank.min(n - 1);
    Ok((EdmKnown::with_noise(p.clone(), params.eps), EdmRank { rank }))
}

/// Exactly `params.iterations` DR steps from `x0` with the noise-boxed known
/// entries reflected first and the rank-restricted EDM set second.
pub fn reconstruct_edm_from(p: &PartialMatrix, params: &ReconstructParams, x0: &DenseMatrix) -> Result<EdmRun> {
    let (a, b) = sets_for(p, params)?;
    let mut x = x0.clone();
    for _ in 0..params.iterations {
        x = dr_step(&a, &b, &x)?;
    }
    Ok(EdmRun {
        shadow: a.project(&x)?,
        iterate: x,
    })
}

/// Cold start from the seeded random symmetric matrix.
pub fn reconstruct_edm(p: &PartialMatrix, params: &ReconstructParams) -> Result<EdmRun> {
    let x0 = random_symmetric_init(p.shape().0, params.seed);
    reconstruct_edm_from(p, params, &x0)
}

/// `10 log10(‖P_B P_A X − P_A X‖² / ‖P_A X‖²)` for A the noise-boxed known
/// entries and B the rank-restricted EDMs.
pub fn relative_error_db(p: &PartialMatrix, x: &DenseMatrix, eps: f64, rank: usize) -> Result<f64> {
    let params = ReconstructParams {
        eps,
        rank,
        ..ReconstructParams::default()
    };
    let (a, b) = sets_for(p, &params)?;
    let pa = a.project(x)?;
    let den = frobenius_norm(&pa).powi(2);
    if den == 0.0 {
        return Err(Error::Undefined("relative error of an all-zero shadow"));
    }
    let num = (b.project(&pa)? - &pa).norm_squared();
    Ok(ratio_db(num, den))
}

/// Relative squared residuals below this are rounding noise.
pub const ZERO_RESIDUAL_RATIO: f64 = 1e-28;

/// `10 log10(num / den)`, with [`ZERO_RESIDUAL_DB`] once the ratio is at
/// rounding level.
pub fn ratio_db(num: f64, den: f64) -> f64 {
    if num <= ZERO_RESIDUAL_RATIO * den {
        return ZERO_RESIDUAL_DB;
    }
    10.0 * (num / den).log10()
}

/// Classical MDS: the first `dim` (≤ 3) columns of `U√S` for the SVD of
/// `-½ L D L`, `L = I − eeᵀ/n`; unused coordinates are zero.
pub fn edm_to_points(d: &DenseMatrix, dim: usize) -> Result<PointCloud> {
    let n = ensure_square(d.shape())?;
    if dim == 0 || dim > 3 {
        return Err(Error::InvalidArgument(format!("embedding dimension must be 1..=3, got {dim}")));
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let l = DenseMatrix::identity(n, n) - DenseMatrix::from_element(n, n, 1.0 / n as f64);
    let tau = (&l * symmetrize(d) * &l) * -0.5;
    let svd = Svd::of(&tau)?;
    let points = (0..n)
        .map(|i| {
            std::array::from_fn(|k| {
                if k < dim && k < n {
                    svd.u[(i, k)] * svd.singular_values[k].sqrt()
                } else {
                    0.0
                }
            })
        })
        .collect();
    Ok(PointCloud::new(points))
}

fn ensure_same_len(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("point counts differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Orthogonal (reflections allowed) least-squares superposition of `p`
/// onto `truth`: `p̂ = R(p − c) + c_truth`.
pub fn procrustes_align(p: &PointCloud, truth: &PointCloud) -> Result<PointCloud> {
    ensure_same_len(p, truth)?;
    let c = p.centroid();
    let ct = truth.centroid();
    let mut m = Matrix3::<f64>::zeros();
    for (x, y) in p.points.iter().zip(&truth.points) {
        for a in 0..3 {
            for b in 0..3 {
                m[(a, b)] += (x[a] - c[a]) * (y[b] - ct[b]);
            }
        }
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Decomposition("procrustes svd")),
    };
    let r = v_t.transpose() * u.transpose();
    let points = p
        .points
        .iter()
        .map(|x| {
            let centered = nalgebra::Vector3::new(x[0] - c[0], x[1] - c[1], x[2] - c[2]);
            let y = r * centered;
            [y[0] + ct[0], y[1] + ct[1], y[2] + ct[2]]
        })
        .collect();
    Ok(PointCloud {
        points,
        labels: p.labels.clone(),
    })
}

/// `(rmse, max)` of the per-point Euclidean errors.
pub fn error_metrics(aligned: &PointCloud, truth: &PointCloud) -> Result<(f64, f64)> {
    ensure_same_len(aligned, truth)?;
    let errs: Vec<f64> = aligned.points.iter().zip(&truth.points).map(|(a, b)| dist2(a, b)).collect();
    let rmse = (errs.iter().sum::<f64>() / errs.len() as f64).sqrt();
    let max = errs.iter().fold(0.0f64, |m, &e| m.max(e)).sqrt();
    Ok((rmse, max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub relative_error_db: f64,
    /// Present when ground-truth points are available.
    pub rmse: Option<f64>,
    pub max_error: Option<f64>,
    pub iterations: usize,
    pub known_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub completed: DenseMatrix,
    /// Aligned to the truth when one was given.
    pub points: PointCloud,
    pub report: ReconstructionReport,
}

/// Completion, embedding, and (with `truth`) alignment and error metrics.
pub fn finish_reconstruction(
    p: &PartialMatrix,
    run: &EdmRun,
    params: &ReconstructParams,
    truth: Option<&PointCloud>,
) -> Result<Reconstruction> {
    let db = relative_error_db(p, &run.iterate, params.eps, params.rank.min(p.shape().0 - 1))?;
    let embedded = edm_to_points(&run.shadow, 3)?;
    let (points, rmse, max_error) = match truth {
        Some(t) => {
            let aligned = procrustes_align(&embedded, t)?;
            let (rmse, max) = error_metrics(&aligned, t)?;
            (aligned, Some(rmse), Some(max))
        }
        None => (embedded, None, None),
    };
    Ok(Reconstruction {
        completed: run.shadow.clone(),
        points,
        report: ReconstructionReport {
            relative_error_db: db,
            rmse,
            max_error,
            iterations: params.iterations,
            known_fraction: p.known_offdiagonal_fraction(),
            seed: params.seed,
        },
    })
}

/// Iteration budgets for [`two_phase_reconstruct`]. Each round runs every
/// block subproblem and then the master problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseSchedule {
    pub rounds: usize,
    pub block_iterations: usize,
    pub master_iterations: usize,
}

impl Default for PhaseSchedule {
    fn default() -> Self {
        PhaseSchedule {
            rounds: 1,
            block_iterations: 5000,
            master_iterations: 5000,
        }
    }
}

/// Consecutive index ranges of near-equal size.
pub fn contiguous_partition(n: usize, blocks: usize) -> Result<Vec<Vec<usize>>> {
    if blocks == 0 || blocks > n {
        return Err(Error::InvalidArgument(format!("cannot split {n} points into {blocks} blocks")));
    }
    Ok((0..blocks).map(|k| (k * n / blocks..(k + 1) * n / blocks).collect()).collect())
}

fn validate_partition(n: usize, partition: &[Vec<usize>]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for block in partition {
        if block.is_empty() {
            return Err(Error::InvalidArgument("empty partition block".into()));
        }
        for &i in block {
            if i >= n || !seen.insert(i) {
                return Err(Error::InvalidArgument(format!("index {i} out of range or repeated")));
            }
        }
    }
    if seen.len() != n {
        return Err(Error::InvalidArgument("partition does not cover every point".into()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TwoPhaseResult {
    pub run: EdmRun,
    /// Block shadows from the last phase-1 pass, in partition order.
    pub block_shadows: Vec<DenseMatrix>,
    /// The master phase's warm start from the last round.
    pub warm_start: DenseMatrix,
}

/// Block subproblems on principal submatrices (in parallel, block `k` on
/// stream `k + 1` of the seed), written back in partition order, then the
/// master problem warm-started from the result. A single block skips phase
/// one, which makes the result identical to [`reconstruct_edm`].
pub fn two_phase_reconstruct(
    p: &PartialMatrix,
    partition: &[Vec<usize>],
    schedule: &PhaseSchedule,
    params: &ReconstructParams,
) -> Result<TwoPhaseResult> {
    let n = ensure_square(p.shape())?;
    validate_partition(n, partition)?;
    if schedule.rounds == 0 {
        return Err(Error::InvalidArgument("at least one round is required".into()));
    }
    let master = ReconstructParams {
        iterations: schedule.master_iterations,
        ..*params
    };
    let mut x = random_symmetric_init(n, params.seed);
    let mut block_shadows = Vec::new();
    let mut warm_start = x.clone();
    for _ in 0..schedule.rounds {
        if partition.len() > 1 {
            let solved: Vec<Result<Option<DenseMatrix>>> = with_worker_pool(|| {
                partition
                    .par_iter()
                    .enumerate()
                    .map(|(k, block)| {
                        if block.len() < 2 {
                            return Ok(None);
                        }
                        let sub = p.principal(block);
                        let x0 = symmetrize(&random_uniform(block.len(), block.len(), &mut seeded_rng(params.seed, k as u64 + 1)));
                        let sub_params = ReconstructParams {
                            iterations: schedule.block_iterations,
                            ..*params
                        };
                        reconstruct_edm_from(&sub, &sub_params, &x0).map(|r| Some(r.shadow))
                    })
                    .collect()
            });
            block_shadows.clear();
            for (block, shadow) in partition.iter().zip(solved) {
                match shadow? {
                    Some(s) => {
                        for (a, &i) in block.iter().enumerate() {
                            for (b, &j) in block.iter().enumerate() {
                                x[(i, j)] = s[(a, b)];
                            }
                        }
                        block_shadows.push(s);
                    }
                    None => block_shadows.push(DenseMatrix::zeros(1, 1)),
                }
            }
        }
        warm_start = x.clone();
        let run = reconstruct_edm_from(p, &master, &x)?;
        x = run.iterate;
    }
    let shadow = EdmKnown::with_noise(p.clone(), params.eps).project(&x)?;
    Ok(TwoPhaseResult {
        run: EdmRun { shadow, iterate: x },
        block_shadows,
        warm_start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Spectrum;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(points.to_vec())
    }

    fn rotate(c: &PointCloud, shift: [f64; 3], mirror: bool) -> PointCloud {
        let (s, co) = (0.7f64.sin(), 0.7f64.cos());
        PointCloud::new(
            c.points
                .iter()
                .map(|p| {
                    let x = co * p[0] - s * p[1];
                    let y = s * p[0] + co * p[1];
                    let z = if mirror { -p[2] } else { p[2] };
                    [x + shift[0], y + shift[1], z + shift[2]]
                })
                .collect(),
        )
    }

    #[test]
    fn parse_xyz() {
        let c = parse_points("0,0,0\n1,0,0").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.squared_distances()[(0, 1)], 1.0);
        assert!(c.labels.is_none());
        let c = parse_points("# header\n1.5, 2, 3, CA\n\n4,5,6,N\n").unwrap();
        assert_eq!(c.points[1], [4.0, 5.0, 6.0]);
        assert_eq!(c.labels.unwrap(), vec!["CA", "N"]);
    }

    #[test]
    fn parse_pdb_fixed_columns() {
        let src = "HEADER    TEST\n\
                   ATOM      1  N   ALA A   1      11.104   6.134  -6.504  1.00  0.00           N\n\
                   ATOM      2  CA  ALA A   1      11.639   6.071  -5.147  1.00  0.00           C\n\
                   TER\n";
        let c = parse_points(src).unwrap();
        assert_eq!(c.points, vec![[11.104, 6.134, -6.504], [11.639, 6.071, -5.147]]);
        assert_eq!(c.labels.unwrap(), vec!["N", "CA"]);
    }

    #[test]
    fn parse_errors_report_lines() {
        assert_eq!(parse_points(""), Err(Error::EmptyInput));
        assert_eq!(parse_points("# only a comment\n"), Err(Error::EmptyInput));
        match parse_points("0,0,0\n1,x,0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_points("1,2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_points("ATOM      1  N\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn cutoff_truncation() {
        let p = build_partial_distance_matrix(&cloud(&[[0.0; 3], [1.0, 0.0, 0.0]]), 6.0).unwrap();
        assert_eq!(p.to_dense(f64::NAN), DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let p = build_partial_distance_matrix(&cloud(&[[0.0; 3], [7.0, 0.0, 0.0]]), 6.0).unwrap();
        assert_eq!(p.known_count(), 2);
        assert!(!p.is_known(0, 1));
        assert_eq!(p.known_offdiagonal_fraction(), 0.0);
        // Boundary distance is kept.
        let p = build_partial_distance_matrix(&cloud(&[[0.0; 3], [6.0, 0.0, 0.0]]), 6.0).unwrap();
        assert!(p.is_known(1, 0));
        assert!(build_partial_distance_matrix(&cloud(&[[0.0; 3]]), 6.0).is_err());
    }

    #[test]
    fn sparse_regime_cutoff() {
        // 100 points in a 20-unit cube: a short cutoff leaves a sparse pattern.
        let c = random_cloud(100, 20.0, 3);
        let p = build_partial_distance_matrix(&c, 6.2).unwrap();
        let f = p.known_offdiagonal_fraction();
        assert!(f > 0.04 && f < 0.15, "{f}");
    }

    #[test]
    fn db_arithmetic() {
        let truth = random_cloud(6, 10.0, 1);
        let d = truth.squared_distances();
        let p = PartialMatrix::from_mask(&d, true, |_, _| true).unwrap();
        assert_eq!(relative_error_db(&p, &d, 0.1, 3).unwrap(), ZERO_RESIDUAL_DB);
        assert!(matches!(
            relative_error_db(&PartialMatrix::new_symmetric(3), &DenseMatrix::zeros(3, 3), 0.1, 2),
            Err(Error::Undefined(_))
        ));
        // Known 1 at (0,1); the rank-1 projection of [[0,1],[1,0]] in the
        // hat block is itself, so the unknown-free 2-point case is exact.
        let mut two = PartialMatrix::new_symmetric(2);
        two.set(0, 1, 1.0).unwrap();
        two.set(0, 0, 0.0).unwrap();
        two.set(1, 1, 0.0).unwrap();
        let x = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(relative_error_db(&two, &x, 0.1, 1).unwrap(), ZERO_RESIDUAL_DB);
    }

    #[test]
    fn db_of_ratios() {
        assert_eq!(ratio_db(2.5, 2.5), 0.0);
        assert!((ratio_db(1e-8, 1.0) + 80.0).abs() < 1e-12);
        assert_eq!(ratio_db(0.0, 1.0), ZERO_RESIDUAL_DB);
        assert_eq!(ratio_db(1e-30, 1.0), ZERO_RESIDUAL_DB);
        assert!((ratio_db(1e-27, 1.0) + 270.0).abs() < 1e-9);
    }

    #[test]
    fn mds_trivial_cases() {
        let two = edm_to_points(&DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), 3).unwrap();
        assert!((two.squared_distances()[(0, 1)] - 1.0).abs() < 1e-12);
        let zero = edm_to_points(&DenseMatrix::zeros(4, 4), 3).unwrap();
        assert!(zero.points.iter().all(|p| p.iter().all(|v| v.abs() < 1e-12)));
        assert!(edm_to_points(&DenseMatrix::zeros(4, 4), 4).is_err());
    }

    #[test]
    fn mds_round_trip_ten_points() {
        let truth = random_cloud(10, 5.0, 12);
        let emb = edm_to_points(&truth.squared_distances(), 3).unwrap();
        let aligned = procrustes_align(&emb, &truth).unwrap();
        let (rmse, max) = error_metrics(&aligned, &truth).unwrap();
        assert!(rmse < 1e-8 && max < 1e-8, "{rmse} {max}");
    }

    #[test]
    fn gram_of_true_edm_is_psd() {
        let truth = random_cloud(12, 10.0, 2);
        let d = truth.squared_distances();
        let l = DenseMatrix::identity(12, 12) - DenseMatrix::from_element(12, 12, 1.0 / 12.0);
        let tau = (&l * d * &l) * -0.5;
        assert!(Spectrum::of(&tau).unwrap().min() >= -1e-10);
    }

    #[test]
    fn procrustes_rigid_and_mirror() {
        let c = random_cloud(8, 3.0, 4);
        for mirror in [false, true] {
            let t = rotate(&c, [1.0, -2.0, 0.5], mirror);
            let a = procrustes_align(&c, &t).unwrap();
            let (rmse, _) = error_metrics(&a, &t).unwrap();
            assert!(rmse < 1e-10, "{rmse}");
        }
        assert!(procrustes_align(&c, &random_cloud(7, 3.0, 4)).is_err());
    }

    #[test]
    fn procrustes_never_worse_than_unaligned() {
        for seed in 0..20 {
            let a = random_cloud(6, 4.0, seed);
            let b = random_cloud(6, 4.0, seed + 100);
            let before = error_metrics(&a, &b).unwrap().0;
            let after = error_metrics(&procrustes_align(&a, &b).unwrap(), &b).unwrap().0;
            assert!(after <= before + 1e-12);
        }
    }

    #[test]
    fn metrics_cases() {
        let a = cloud(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(error_metrics(&a, &a).unwrap(), (0.0, 0.0));
        let mut b = a.clone();
        b.points[2][1] += 2.0;
        assert_eq!(error_metrics(&b, &a).unwrap(), (1.0, 2.0));
    }

    #[test]
    fn fully_known_edm_is_reproduced() {
        let truth = random_cloud(8, 4.0, 6);
        let d = truth.squared_distances();
        let p = build_partial_distance_matrix(&truth, f64::INFINITY).unwrap();
        // Without noise the two sets meet only at the input.
        let exact = ReconstructParams {
            eps: 0.0,
            iterations: 300,
            ..ReconstructParams::default()
        };
        let run = reconstruct_edm(&p, &exact).unwrap();
        assert!((&run.shadow - &d).amax() < 1e-6);
        // With the noise box, every entry stays within eps.
        let run = reconstruct_edm(&p, &ReconstructParams { iterations: 300, ..ReconstructParams::default() }).unwrap();
        assert!((&run.shadow - &d).amax() <= 0.1 + 1e-12);
    }

    #[test]
    fn reconstruction_is_deterministic_and_in_box() {
        let truth = random_cloud(12, 10.0, 9);
        let p = build_partial_distance_matrix(&truth, 8.0).unwrap();
        let params = ReconstructParams {
            iterations: 200,
            seed: 5,
            ..ReconstructParams::default()
        };
        let a = reconstruct_edm(&p, &params).unwrap();
        let b = reconstruct_edm(&p, &params).unwrap();
        assert_eq!(a.shadow, b.shadow);
        for i in 0..12 {
            assert_eq!(a.shadow[(i, i)], 0.0);
            for j in 0..12 {
                assert!(a.shadow[(i, j)] >= 0.0);
                if let Some(v) = p.get(i, j) {
                    assert!((a.shadow[(i, j)] - v).abs() <= 0.1 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_block_equals_plain() {
        let truth = random_cloud(10, 10.0, 1);
        let p = build_partial_distance_matrix(&truth, 9.0).unwrap();
        let params = ReconstructParams {
            iterations: 150,
            seed: 3,
            ..ReconstructParams::default()
        };
        let schedule = PhaseSchedule {
            rounds: 1,
            block_iterations: 10,
            master_iterations: 150,
        };
        let two = two_phase_reconstruct(&p, &contiguous_partition(10, 1).unwrap(), &schedule, &params).unwrap();
        let plain = reconstruct_edm(&p, &params).unwrap();
        assert_eq!(two.run.shadow, plain.shadow);
        assert_eq!(two.run.iterate, plain.iterate);
    }

    #[test]
    fn partition_validation() {
        let p = PartialMatrix::new_symmetric(4);
        let s = PhaseSchedule::default();
        let params = ReconstructParams::default();
        for bad in [vec![vec![0, 1], vec![1, 2, 3]], vec![vec![0, 1], vec![2]], vec![vec![0, 1, 2, 4], vec![3]], vec![vec![], vec![0, 1, 2, 3]]] {
            assert!(two_phase_reconstruct(&p, &bad, &s, &params).is_err());
        }
        assert_eq!(contiguous_partition(5, 2).unwrap(), vec![vec![0, 1], vec![2, 3, 4]]);
        assert!(contiguous_partition(2, 3).is_err());
    }
}
