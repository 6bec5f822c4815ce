//! Sufficient statistics for the solver: X'X/n, X'y/n, the spectral bound d,
//! column scaling, and per-fold decompositions.
//!
//! Everything downstream of this module works from these quantities alone;
//! the raw data is only touched again for held-out evaluation and
//! prediction. All Gram quantities use the /n convention (`X'X/n`, `X'y/n`)
//! so penalty strengths are comparable across sample sizes, and
//! standardization targets `sum(x^2)/n = 1` per column.
//!
//! Dense and memory-mapped backends stream row blocks; the sparse backend
//! uses a column-intersection kernel and applies centering implicitly as a
//! rank-one correction so sparsity is never destroyed.

pub mod eigen;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{OemError, Result};
use crate::matrix::DesignMatrix;

pub use eigen::{largest_eigenvalue, trace_bound};

/// Default number of rows materialized per streaming block.
pub const DEFAULT_BLOCK_ROWS: usize = 8192;
/// Default relative tolerance for the largest-eigenvalue estimate.
pub const DEFAULT_EIG_TOL: f64 = 1e-9;
/// Default iteration cap for the eigenvalue estimate.
pub const DEFAULT_EIG_MAX_ITER: usize = 500;

/// Column centering/scaling choices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StandardizeOptions {
    pub center: bool,
    pub scale: bool,
}

impl Default for StandardizeOptions {
    fn default() -> Self {
        StandardizeOptions { center: true, scale: true }
    }
}

/// Knobs for building a [`GramState`] from data.
#[derive(Clone, Debug)]
pub struct GramOptions {
    pub standardize: StandardizeOptions,
    pub block_rows: usize,
    pub threads: usize,
    pub eig_tol: f64,
    pub eig_max_iter: usize,
}

impl Default for GramOptions {
    fn default() -> Self {
        GramOptions {
            standardize: StandardizeOptions::default(),
            block_rows: DEFAULT_BLOCK_ROWS,
            threads: 1,
            eig_tol: DEFAULT_EIG_TOL,
            eig_max_iter: DEFAULT_EIG_MAX_ITER,
        }
    }
}

/// Centers and positive scale factors applied to columns. Identity scaling
/// has centers 0 and scales 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnScaling {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl ColumnScaling {
    pub fn identity(p: usize) -> Self {
        ColumnScaling { centers: vec![0.0; p], scales: vec![1.0; p] }
    }
}

/// Response/column means recorded when the model carries an intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct InterceptStats {
    pub y_mean: f64,
    pub col_means: Vec<f64>,
}

/// The sufficient statistics consumed by the solver.
#[derive(Clone, Debug)]
pub struct GramState {
    /// X'X/n on the standardized scale (symmetric p x p).
    pub xtx: Array2<f64>,
    /// X'y/n on the standardized scale.
    pub xty: Array1<f64>,
    /// Upper bound on the largest eigenvalue of `xtx` (d >= lambda_1).
    pub d: f64,
    pub n_obs: usize,
    pub scaling: ColumnScaling,
    /// Present when the model carries an intercept (columns were centered).
    pub intercept_stats: Option<InterceptStats>,
    /// Second moment of the (centered) response, `|y|^2/n`, when the data
    /// was seen. Absent for Gram-only construction; loss values then omit
    /// this constant.
    pub y_sq_mean: Option<f64>,
}

impl GramState {
    pub fn p(&self) -> usize {
        self.xty.len()
    }

    /// Builds a standardized GramState from data in one streaming pass.
    pub fn standardized(x: &DesignMatrix, y: &[f64], opts: &GramOptions) -> Result<GramState> {
        let m = compute_moments(x, y, None, opts.block_rows, opts.threads)?;
        let (sm, scaling) = standardize_moments(&m, opts.standardize)?;
        let d = d_or_trace(sm.xtx.view(), opts.eig_tol, opts.eig_max_iter)?;
        let intercept_stats = opts.standardize.center.then(|| InterceptStats {
            y_mean: m.wy_mean,
            col_means: scaling.centers.clone(),
        });
        Ok(GramState {
            xtx: sm.xtx,
            xty: sm.xty,
            d,
            n_obs: m.n,
            scaling,
            intercept_stats,
            y_sq_mean: Some(sm.y_sq_mean),
        })
    }

    /// Wraps precomputed sufficient statistics (X'X/n, X'y/n). Validates
    /// symmetry and runs Rayleigh probes for positive semidefiniteness.
    pub fn from_sufficient(xtx: Array2<f64>, xty: Array1<f64>, n: usize) -> Result<GramState> {
        let p = xty.len();
        if xtx.nrows() != p || xtx.ncols() != p {
            return Err(OemError::DimensionMismatch(format!(
                "xtx is {} x {}, xty has length {}",
                xtx.nrows(),
                xtx.ncols(),
                p
            )));
        }
        let scale = xtx.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for j in 0..p {
            for k in (j + 1)..p {
                if (xtx[[j, k]] - xtx[[k, j]]).abs() > 1e-12 * scale {
                    return Err(OemError::InvalidConfig(format!(
                        "xtx is not symmetric at ({j}, {k})"
                    )));
                }
            }
        }
        let mut xtx = xtx;
        symmetrize(&mut xtx);
        psd_probes(xtx.view())?;
        let d = d_or_trace(xtx.view(), DEFAULT_EIG_TOL, DEFAULT_EIG_MAX_ITER)?;
        Ok(GramState {
            xtx,
            xty,
            d,
            n_obs: n,
            scaling: ColumnScaling::identity(p),
            intercept_stats: None,
            y_sq_mean: None,
        })
    }
}

/// Computes raw (unscaled, uncentered) sufficient statistics:
/// `xtx = X'X/n`, `xty = X'y/n`, with d populated from the largest
/// eigenvalue. Streams row blocks of at most `block_rows` rows; the result
/// is invariant to the block size up to floating summation order.
pub fn compute_gram(x: &DesignMatrix, y: &[f64], block_rows: usize) -> Result<GramState> {
    let m = compute_moments(x, y, None, block_rows, 1)?;
    let d = d_or_trace(m.xtx.view(), DEFAULT_EIG_TOL, DEFAULT_EIG_MAX_ITER)?;
    let p = m.xty.len();
    Ok(GramState {
        xtx: m.xtx,
        xty: m.xty,
        d,
        n_obs: m.n,
        scaling: ColumnScaling::identity(p),
        intercept_stats: None,
        y_sq_mean: Some(m.y_sq_mean),
    })
}

pub(crate) fn d_or_trace(xtx: ArrayView2<'_, f64>, tol: f64, max_iter: usize) -> Result<f64> {
    match largest_eigenvalue(xtx, tol, max_iter) {
        Ok(d) => Ok(d),
        Err(OemError::NotConverged(_)) => Ok(trace_bound(xtx)),
        Err(e) => Err(e),
    }
}

fn psd_probes(xtx: ArrayView2<'_, f64>) -> Result<()> {
    let p = xtx.nrows();
    let scale = (0..p).map(|j| xtx[[j, j]].abs()).fold(0.0f64, f64::max).max(1.0);
    for j in 0..p {
        if xtx[[j, j]] < -1e-8 * scale {
            return Err(OemError::NotPsd);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9d5_0b0e);
    for _ in 0..8 {
        let v = Array1::from_shape_fn(p, |_| rng.random::<f64>() - 0.5);
        let denom = v.dot(&v);
        let rq = v.dot(&xtx.dot(&v)) / denom;
        if rq < -1e-8 * scale {
            return Err(OemError::NotPsd);
        }
    }
    Ok(())
}

fn symmetrize(m: &mut Array2<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for k in (j + 1)..p {
            let v = 0.5 * (m[[j, k]] + m[[k, j]]);
            m[[j, k]] = v;
            m[[k, j]] = v;
        }
    }
}

/// Weighted first/second moments accumulated in one pass. With unit weights
/// these are the ordinary Gram statistics.
#[derive(Clone, Debug)]
pub(crate) struct Moments {
    pub xtx: Array2<f64>,      // X'WX/n
    pub xty: Array1<f64>,      // X'Wy/n
    pub wx_means: Array1<f64>, // X'W1/n
    pub w_mean: f64,           // 1'W1/n
    pub wy_mean: f64,          // W.y/n
    pub y_sq_mean: f64,        // y'Wy/n
    pub n: usize,
}

impl Moments {
    fn zeros(p: usize, n: usize) -> Self {
        Moments {
            xtx: Array2::zeros((p, p)),
            xty: Array1::zeros(p),
            wx_means: Array1::zeros(p),
            w_mean: 0.0,
            wy_mean: 0.0,
            y_sq_mean: 0.0,
            n,
        }
    }

    fn add(&mut self, other: &Moments) {
        self.xtx += &other.xtx;
        self.xty += &other.xty;
        self.wx_means += &other.wx_means;
        self.w_mean += other.w_mean;
        self.wy_mean += other.wy_mean;
        self.y_sq_mean += other.y_sq_mean;
    }

    fn scale(&mut self, f: f64) {
        self.xtx.mapv_inplace(|v| v * f);
        self.xty.mapv_inplace(|v| v * f);
        self.wx_means.mapv_inplace(|v| v * f);
        self.w_mean *= f;
        self.wy_mean *= f;
        self.y_sq_mean *= f;
    }
}

pub(crate) fn compute_moments(
    x: &DesignMatrix,
    y: &[f64],
    weights: Option<&[f64]>,
    block_rows: usize,
    threads: usize,
) -> Result<Moments> {
    let n = x.n_rows();
    let p = x.n_cols();
    if n == 0 || p == 0 {
        return Err(OemError::EmptyMatrix);
    }
    if y.len() != n {
        return Err(OemError::DimensionMismatch(format!(
            "y has length {}, design matrix has {} rows",
            y.len(),
            n
        )));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(OemError::DimensionMismatch("weight vector length".into()));
        }
    }
    if block_rows == 0 {
        return Err(OemError::InvalidConfig("block_rows must be at least 1".into()));
    }

    let mut m = match x {
        DesignMatrix::Sparse(csc) => sparse_moments(csc, y, weights, threads),
        _ => streamed_moments(x, y, weights, block_rows, threads)?,
    };
    m.scale(1.0 / n as f64);
    symmetrize(&mut m.xtx);
    Ok(m)
}

/// Dense/mapped path: accumulate block'·block via GEMM. Each worker owns a
/// contiguous range of blocks; partial sums are merged in range order so the
/// result is bit-stable for a fixed block size and worker count.
fn streamed_moments(
    x: &DesignMatrix,
    y: &[f64],
    weights: Option<&[f64]>,
    block_rows: usize,
    threads: usize,
) -> Result<Moments> {
    let n = x.n_rows();
    let p = x.n_cols();
    let n_blocks = n.div_ceil(block_rows);
    let workers = threads.max(1).min(n_blocks);

    let run_range = |b0: usize, b1: usize| -> Moments {
        let mut acc = Moments::zeros(p, n);
        let mut buf = Array2::<f64>::zeros((block_rows.min(n), p));
        let mut wbuf = Array2::<f64>::zeros((0, 0));
        for b in b0..b1 {
            let r0 = b * block_rows;
            let r1 = (r0 + block_rows).min(n);
            let m_rows = r1 - r0;
            let block: ArrayView2<'_, f64> = match x {
                DesignMatrix::Dense(a) => a.slice(s![r0..r1, ..]),
                DesignMatrix::Mapped(mm) => {
                    for j in 0..p {
                        let col = mm.col(j);
                        for (bi, i) in (r0..r1).enumerate() {
                            buf[[bi, j]] = col[i];
                        }
                    }
                    buf.slice(s![0..m_rows, ..])
                }
                DesignMatrix::Sparse(_) => unreachable!("sparse handled separately"),
            };
            let yb = ArrayView1::from(&y[r0..r1]);
            match weights {
                None => {
                    general_mat_mul(1.0, &block.t(), &block, 1.0, &mut acc.xtx);
                    general_mat_vec_mul(1.0, &block.t(), &yb, 1.0, &mut acc.xty);
                    acc.wx_means += &block.sum_axis(ndarray::Axis(0));
                    acc.w_mean += m_rows as f64;
                    for i in r0..r1 {
                        acc.wy_mean += y[i];
                        acc.y_sq_mean += y[i] * y[i];
                    }
                }
                Some(w) => {
                    if wbuf.nrows() < m_rows || wbuf.ncols() != p {
                        wbuf = Array2::zeros((block_rows.min(n), p));
                    }
                    let mut ys = Array1::zeros(m_rows);
                    let mut sw = Array1::zeros(m_rows);
                    for (bi, i) in (r0..r1).enumerate() {
                        let swi = w[i].sqrt();
                        sw[bi] = swi;
                        ys[bi] = swi * y[i];
                        for j in 0..p {
                            wbuf[[bi, j]] = swi * block[[bi, j]];
                        }
                        acc.w_mean += w[i];
                        acc.wy_mean += w[i] * y[i];
                        acc.y_sq_mean += w[i] * y[i] * y[i];
                    }
                    let bs = wbuf.slice(s![0..m_rows, ..]);
                    general_mat_mul(1.0, &bs.t(), &bs, 1.0, &mut acc.xtx);
                    general_mat_vec_mul(1.0, &bs.t(), &ys.view(), 1.0, &mut acc.xty);
                    general_mat_vec_mul(1.0, &bs.t(), &sw.view(), 1.0, &mut acc.wx_means);
                }
            }
        }
        acc
    };

    if workers <= 1 {
        return Ok(run_range(0, n_blocks));
    }
    let per = n_blocks.div_ceil(workers);
    let mut partials: Vec<Option<Moments>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let b0 = w * per;
            let b1 = ((w + 1) * per).min(n_blocks);
            let f = &run_range;
            handles.push(scope.spawn(move || f(b0, b1)));
        }
        for h in handles {
            partials.push(Some(h.join().expect("gram worker panicked")));
        }
    });
    let mut total = Moments::zeros(p, n);
    for part in partials.into_iter().flatten() {
        total.add(&part);
    }
    Ok(total)
}

/// Sparse path: X'X by column-pair intersection through a scatter buffer,
/// touching only stored entries. Centering is applied later as a rank-one
/// correction, so the kernel never densifies.
fn sparse_moments(
    csc: &crate::matrix::CscMatrix,
    y: &[f64],
    weights: Option<&[f64]>,
    threads: usize,
) -> Moments {
    let n = csc.n_rows();
    let p = csc.n_cols();
    let mut acc = Moments::zeros(p, n);

    match weights {
        None => {
            acc.w_mean = n as f64;
            for &yi in y {
                acc.wy_mean += yi;
                acc.y_sq_mean += yi * yi;
            }
        }
        Some(w) => {
            for (i, &yi) in y.iter().enumerate() {
                acc.w_mean += w[i];
                acc.wy_mean += w[i] * yi;
                acc.y_sq_mean += w[i] * yi * yi;
            }
        }
    }

    let col_block = |j0: usize, j1: usize, xtx: &mut Array2<f64>, xty: &mut Array1<f64>, wxm: &mut Array1<f64>| {
        let mut scratch = vec![0.0f64; n];
        for j in j0..j1 {
            let (rows_j, vals_j) = csc.col(j);
            for (&i, &v) in rows_j.iter().zip(vals_j) {
                scratch[i] = match weights {
                    None => v,
                    Some(w) => w[i] * v,
                };
            }
            for k in j..p {
                let (rows_k, vals_k) = csc.col(k);
                let mut s = 0.0;
                for (&i, &v) in rows_k.iter().zip(vals_k) {
                    s += scratch[i] * v;
                }
                xtx[[j, k]] = s;
            }
            let mut sy = 0.0;
            let mut sm = 0.0;
            for (&i, &v) in rows_j.iter().zip(vals_j) {
                let wv = scratch[i];
                sy += wv * y[i];
                sm += wv;
                scratch[i] = 0.0;
            }
            xty[j] = sy;
            wxm[j] = sm;
        }
    };

    let workers = threads.max(1).min(p);
    if workers <= 1 {
        col_block(0, p, &mut acc.xtx, &mut acc.xty, &mut acc.wx_means);
    } else {
        let per = p.div_ceil(workers);
        let mut parts: Vec<(Array2<f64>, Array1<f64>, Array1<f64>, usize, usize)> = Vec::new();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..workers {
                let j0 = w * per;
                let j1 = ((w + 1) * per).min(p);
                let f = &col_block;
                handles.push(scope.spawn(move || {
                    let mut xtx = Array2::zeros((p, p));
                    let mut xty = Array1::zeros(p);
                    let mut wxm = Array1::zeros(p);
                    f(j0, j1, &mut xtx, &mut xty, &mut wxm);
                    (xtx, xty, wxm, j0, j1)
                }));
            }
            for h in handles {
                parts.push(h.join().expect("sparse gram worker panicked"));
            }
        });
        for (xtx, xty, wxm, j0, j1) in parts {
            for j in j0..j1 {
                for k in j..p {
                    acc.xtx[[j, k]] = xtx[[j, k]];
                }
                acc.xty[j] = xty[j];
                acc.wx_means[j] = wxm[j];
            }
        }
    }
    // Mirror the upper triangle.
    for j in 0..p {
        for k in (j + 1)..p {
            acc.xtx[[k, j]] = acc.xtx[[j, k]];
        }
    }
    acc
}

/// Standardized sufficient statistics: a view of the data through its
/// scaled moments, without materializing scaled columns.
#[derive(Clone, Debug)]
pub struct ScaledMoments {
    pub xtx: Array2<f64>,
    pub xty: Array1<f64>,
    /// Second moment of the (centered, if requested) response.
    pub y_sq_mean: f64,
    pub y_mean: f64,
    pub n: usize,
}

/// Computes column centers/scales and the correspondingly transformed
/// sufficient statistics. The original data is left untouched; coefficients
/// fitted on this scale are back-transformed before being reported.
pub fn standardize(
    x: &DesignMatrix,
    y: &[f64],
    opts: StandardizeOptions,
) -> Result<(ScaledMoments, ColumnScaling)> {
    let m = compute_moments(x, y, None, DEFAULT_BLOCK_ROWS, 1)?;
    standardize_moments(&m, opts)
}

pub(crate) fn standardize_moments(
    m: &Moments,
    opts: StandardizeOptions,
) -> Result<(ScaledMoments, ColumnScaling)> {
    let p = m.xty.len();
    if m.n == 0 || p == 0 {
        return Err(OemError::EmptyMatrix);
    }
    if opts.center && m.n < 2 {
        return Err(OemError::EmptyMatrix);
    }
    let w_mean = m.w_mean;
    let centers: Vec<f64> = if opts.center {
        m.wx_means.iter().map(|&v| v / w_mean).collect()
    } else {
        vec![0.0; p]
    };
    let mut scales = vec![1.0; p];
    if opts.scale {
        for j in 0..p {
            let raw = m.xtx[[j, j]];
            let m2 = if opts.center { raw - m.wx_means[j] * centers[j] } else { raw };
            if m2 <= 1e-14 * raw.abs().max(1e-300) {
                return Err(OemError::ZeroVarianceColumn(j));
            }
            scales[j] = (m2 / w_mean).sqrt();
        }
    }

    let mut xtx = m.xtx.clone();
    let mut xty = m.xty.clone();
    let mut y_sq = m.y_sq_mean;
    let y_mean = m.wy_mean / w_mean;
    if opts.center {
        for j in 0..p {
            for k in 0..p {
                xtx[[j, k]] -= m.wx_means[j] * centers[k];
            }
            xty[j] -= m.wx_means[j] * y_mean;
        }
        symmetrize(&mut xtx);
        y_sq -= m.wy_mean * y_mean;
    }
    if opts.scale {
        for j in 0..p {
            for k in 0..p {
                xtx[[j, k]] /= scales[j] * scales[k];
            }
            xty[j] /= scales[j];
        }
    }
    Ok((
        ScaledMoments { xtx, xty, y_sq_mean: y_sq, y_mean, n: m.n },
        ColumnScaling { centers, scales },
    ))
}

/// Per-fold raw Gram blocks. All matrix/vector entries keep the full-data
/// /n convention so that fold blocks sum exactly to the full statistics.
#[derive(Clone, Debug)]
pub struct FoldGram {
    pub xtx: Array2<f64>,
    pub xty: Array1<f64>,
    pub n_k: usize,
    pub row_ids: Vec<usize>,
    /// Unnormalized column sums over the fold's rows (centering metadata).
    pub col_sums: Array1<f64>,
    pub y_sum: f64,
    pub y_sq_sum: f64,
}

#[derive(Clone, Debug)]
pub struct FoldGrams {
    pub folds: Vec<FoldGram>,
    pub n_obs: usize,
    pub n_cols: usize,
}

/// Computes per-fold statistics X_k'X_k/n and X_k'y_k/n in one pass, so that
/// leave-fold-out quantities are reconstructed by summation.
pub fn compute_fold_grams(
    x: &DesignMatrix,
    y: &[f64],
    fold_assignment: &[usize],
    block_rows: usize,
) -> Result<FoldGrams> {
    let n = x.n_rows();
    let p = x.n_cols();
    if n == 0 || p == 0 {
        return Err(OemError::EmptyMatrix);
    }
    if y.len() != n || fold_assignment.len() != n {
        return Err(OemError::DimensionMismatch(
            "y and fold_assignment must match the number of rows".into(),
        ));
    }
    if block_rows == 0 {
        return Err(OemError::InvalidConfig("block_rows must be at least 1".into()));
    }
    let k_folds = fold_assignment.iter().copied().max().unwrap() + 1;
    let mut counts = vec![0usize; k_folds];
    for &f in fold_assignment {
        counts[f] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(OemError::EmptyFold(k));
    }

    let mut folds: Vec<FoldGram> = (0..k_folds)
        .map(|_| FoldGram {
            xtx: Array2::zeros((p, p)),
            xty: Array1::zeros(p),
            n_k: 0,
            row_ids: Vec::new(),
            col_sums: Array1::zeros(p),
            y_sum: 0.0,
            y_sq_sum: 0.0,
        })
        .collect();
    for (i, &f) in fold_assignment.iter().enumerate() {
        folds[f].row_ids.push(i);
        folds[f].n_k += 1;
        folds[f].y_sum += y[i];
        folds[f].y_sq_sum += y[i] * y[i];
    }

    match x {
        DesignMatrix::Sparse(csc) => {
            let mut scratch = vec![0.0f64; n];
            for j in 0..p {
                let (rows_j, vals_j) = csc.col(j);
                for (&i, &v) in rows_j.iter().zip(vals_j) {
                    scratch[i] = v;
                }
                for k in j..p {
                    let (rows_k, vals_k) = csc.col(k);
                    for (&i, &v) in rows_k.iter().zip(vals_k) {
                        let s = scratch[i];
                        if s != 0.0 {
                            folds[fold_assignment[i]].xtx[[j, k]] += s * v;
                        }
                    }
                }
                for (&i, &v) in rows_j.iter().zip(vals_j) {
                    let f = &mut folds[fold_assignment[i]];
                    f.xty[j] += v * y[i];
                    f.col_sums[j] += v;
                    scratch[i] = 0.0;
                }
            }
        }
        _ => {
            let mut row = vec![0.0f64; p];
            let mut b = 0usize;
            while b < n {
                let r1 = (b + block_rows).min(n);
                for i in b..r1 {
                    for (j, rv) in row.iter_mut().enumerate() {
                        *rv = x.value(i, j);
                    }
                    let f = &mut folds[fold_assignment[i]];
                    for j in 0..p {
                        let xj = row[j];
                        if xj != 0.0 {
                            for k in j..p {
                                f.xtx[[j, k]] += xj * row[k];
                            }
                            f.xty[j] += xj * y[i];
                        }
                        f.col_sums[j] += xj;
                    }
                }
                b = r1;
            }
        }
    }

    let inv_n = 1.0 / n as f64;
    for f in &mut folds {
        for j in 0..p {
            for k in j..p {
                let v = f.xtx[[j, k]] * inv_n;
                f.xtx[[j, k]] = v;
                f.xtx[[k, j]] = v;
            }
        }
        f.xty.mapv_inplace(|v| v * inv_n);
    }

    Ok(FoldGrams { folds, n_obs: n, n_cols: p })
}

impl FoldGrams {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Full-data raw moments, reconstructed by summing fold blocks in fold
    /// order.
    pub(crate) fn full_moments(&self) -> Moments {
        let p = self.n_cols;
        let mut m = Moments::zeros(p, self.n_obs);
        for f in &self.folds {
            m.xtx += &f.xtx;
            m.xty += &f.xty;
            m.wx_means += &f.col_sums;
            m.w_mean += f.n_k as f64;
            m.wy_mean += f.y_sum;
            m.y_sq_mean += f.y_sq_sum;
        }
        // xtx/xty already carry /n; sums and counts do not.
        let inv_n = 1.0 / self.n_obs as f64;
        m.wx_means.mapv_inplace(|v| v * inv_n);
        m.w_mean *= inv_n;
        m.wy_mean *= inv_n;
        m.y_sq_mean *= inv_n;
        m
    }

    /// Raw moments of all rows outside fold `k`, rescaled to the
    /// /(n - n_k) convention of the training subset.
    pub(crate) fn leave_out_moments(&self, k: usize) -> Result<Moments> {
        if k >= self.folds.len() {
            return Err(OemError::EmptyFold(k));
        }
        let p = self.n_cols;
        let n_train = self.n_obs - self.folds[k].n_k;
        if n_train == 0 {
            return Err(OemError::EmptyFold(k));
        }
        let mut m = Moments::zeros(p, n_train);
        for (c, f) in self.folds.iter().enumerate() {
            if c == k {
                continue;
            }
            m.xtx += &f.xtx;
            m.xty += &f.xty;
            m.wx_means += &f.col_sums;
            m.w_mean += f.n_k as f64;
            m.wy_mean += f.y_sum;
            m.y_sq_mean += f.y_sq_sum;
        }
        // xtx/xty are /n; convert to /n_train. Sums convert directly.
        let f_mat = self.n_obs as f64 / n_train as f64;
        m.xtx.mapv_inplace(|v| v * f_mat);
        m.xty.mapv_inplace(|v| v * f_mat);
        let inv = 1.0 / n_train as f64;
        m.wx_means.mapv_inplace(|v| v * inv);
        m.w_mean *= inv;
        m.wy_mean *= inv;
        m.y_sq_mean *= inv;
        Ok(m)
    }

    /// Standardized training GramState for fold `k` (leave-fold-out), with
    /// d estimated on the leave-fold-out Gram.
    pub(crate) fn leave_out_gram(
        &self,
        k: usize,
        std_opts: StandardizeOptions,
        eig_tol: f64,
        eig_max_iter: usize,
        trace_d: bool,
    ) -> Result<GramState> {
        let m = self.leave_out_moments(k)?;
        let (sm, scaling) = standardize_moments(&m, std_opts)?;
        let d = if trace_d {
            trace_bound(sm.xtx.view())
        } else {
            d_or_trace(sm.xtx.view(), eig_tol, eig_max_iter)?
        };
        let intercept_stats = std_opts.center.then(|| InterceptStats {
            y_mean: sm.y_mean,
            col_means: scaling.centers.clone(),
        });
        Ok(GramState {
            xtx: sm.xtx,
            xty: sm.xty,
            d,
            n_obs: m.n,
            scaling,
            intercept_stats,
            y_sq_mean: Some(sm.y_sq_mean),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn dense(x: Array2<f64>) -> DesignMatrix {
        DesignMatrix::Dense(x)
    }

    #[test]
    fn gram_of_identity() {
        let x = dense(Array2::eye(2));
        let g = compute_gram(&x, &[1.0, 2.0], 64).unwrap();
        assert!((g.xtx[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((g.xtx[[1, 1]] - 0.5).abs() < 1e-15);
        assert!(g.xtx[[0, 1]].abs() < 1e-15);
        assert!((g.xty[0] - 0.5).abs() < 1e-15);
        assert!((g.xty[1] - 1.0).abs() < 1e-15);
        assert!(g.d >= 0.5);
    }

    #[test]
    fn gram_block_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Array2::from_shape_fn((23, 4), |_| rng.random::<f64>() - 0.5);
        let y: Vec<f64> = (0..23).map(|_| rng.random::<f64>()).collect();
        let dm = dense(x);
        let g1 = compute_gram(&dm, &y, 1).unwrap();
        let g7 = compute_gram(&dm, &y, 7).unwrap();
        let gn = compute_gram(&dm, &y, 23).unwrap();
        for (a, b) in [(&g1, &g7), (&g1, &gn)] {
            let diff = (&a.xtx - &b.xtx).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(diff < 1e-12, "diff = {diff}");
        }
    }

    #[test]
    fn gram_matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 50;
        let p = 5;
        let x = Array2::from_shape_fn((n, p), |_| 2.0 * rng.random::<f64>() - 1.0);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let g = compute_gram(&dense(x.clone()), &y, 16).unwrap();
        for j in 0..p {
            for k in 0..p {
                let mut s = 0.0;
                for i in 0..n {
                    s += x[[i, j]] * x[[i, k]];
                }
                s /= n as f64;
                assert!((g.xtx[[j, k]] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standardize_rejects_constant_column() {
        let x = dense(arr2(&[[1.0], [1.0], [1.0], [1.0]]));
        let err = standardize(&x, &[0.0; 4], StandardizeOptions::default());
        assert!(matches!(err, Err(OemError::ZeroVarianceColumn(0))));
    }

    #[test]
    fn standardize_identity_scale() {
        // Column already satisfying sum(x^2)/n = 1 without centering.
        let x = dense(arr2(&[[1.0], [-1.0], [1.0], [-1.0]]));
        let (_, sc) =
            standardize(&x, &[0.0; 4], StandardizeOptions { center: false, scale: true }).unwrap();
        assert!((sc.scales[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn standardize_centers_and_rescales() {
        let x = dense(arr2(&[[1.0], [2.0], [3.0]]));
        let (sm, sc) = standardize(&x, &[1.0, 2.0, 3.0], StandardizeOptions::default()).unwrap();
        assert!((sc.centers[0] - 2.0).abs() < 1e-15);
        // After the transform the scaled column has sum(x^2)/n = 1, i.e. the
        // (0,0) entry of the scaled Gram is exactly 1.
        assert!((sm.xtx[[0, 0]] - 1.0).abs() < 1e-12);
        // Direct recomputation: centered column is (-1, 0, 1), second moment
        // 2/3, so the scale must be sqrt(2/3).
        assert!((sc.scales[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fold_grams_single_fold_is_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((12, 3), |_| rng.random::<f64>());
        let y: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
        let dm = dense(x);
        let full = compute_gram(&dm, &y, 4).unwrap();
        let fg = compute_fold_grams(&dm, &y, &vec![0; 12], 4).unwrap();
        assert_eq!(fg.k(), 1);
        let diff = (&fg.folds[0].xtx - &full.xtx).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn fold_grams_loo_outer_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let x = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>() - 0.5);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let assignment: Vec<usize> = (0..n).collect();
        let fg = compute_fold_grams(&dense(x.clone()), &y, &assignment, 2).unwrap();
        let mut sum = Array2::<f64>::zeros((2, 2));
        for (i, f) in fg.folds.iter().enumerate() {
            // Each fold Gram is the row's outer product over n.
            for j in 0..2 {
                for k in 0..2 {
                    let expect = x[[i, j]] * x[[i, k]] / n as f64;
                    assert!((f.xtx[[j, k]] - expect).abs() < 1e-15);
                }
            }
            sum += &f.xtx;
        }
        let full = compute_gram(&dense(x), &y, 8).unwrap();
        let diff = (&sum - &full.xtx).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn fold_grams_rejects_empty_fold() {
        let x = dense(Array2::eye(3));
        let err = compute_fold_grams(&x, &[1.0, 2.0, 3.0], &[0, 0, 2], 8);
        assert!(matches!(err, Err(OemError::EmptyFold(1))));
    }

    #[test]
    fn leave_out_matches_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10;
        let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>() - 0.5);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let assignment: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let fg = compute_fold_grams(&dense(x.clone()), &y, &assignment, 4).unwrap();
        let m = fg.leave_out_moments(0).unwrap();

        // Direct recomputation on the rows of fold 1.
        let rows: Vec<usize> = (0..n).filter(|i| i % 2 == 1).collect();
        let xs = x.select(ndarray::Axis(0), &rows);
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let direct = compute_moments(&dense(xs), &ys, None, 8, 1).unwrap();
        let diff = (&m.xtx - &direct.xtx).iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
        assert!(diff < 1e-12, "diff = {diff}");
        let dy = (&m.xty - &direct.xty).iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
        assert!(dy < 1e-12);
    }

    #[test]
    fn backends_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 40;
        let p = 6;
        let x = Array2::from_shape_fn((n, p), |_| {
            if rng.random::<f64>() < 0.4 {
                rng.random::<f64>() - 0.5
            } else {
                0.0
            }
        });
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let dense_g = compute_gram(&dense(x.clone()), &y, 16).unwrap();
        let sparse_g = compute_gram(
            &DesignMatrix::Sparse(crate::matrix::CscMatrix::from_dense(x.view()).unwrap()),
            &y,
            16,
        )
        .unwrap();
        let diff = (&dense_g.xtx - &sparse_g.xtx).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-10);
        let dy = (&dense_g.xty - &sparse_g.xty).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(dy < 1e-10);
    }

    #[test]
    fn from_sufficient_rejects_asymmetry() {
        let bad = arr2(&[[1.0, 0.5], [0.2, 1.0]]);
        let err = GramState::from_sufficient(bad, Array1::zeros(2), 10);
        assert!(matches!(err, Err(OemError::InvalidConfig(_))));
    }

    #[test]
    fn from_sufficient_rejects_indefinite() {
        let bad = arr2(&[[1.0, 0.0], [0.0, -2.0]]);
        let err = GramState::from_sufficient(bad, Array1::zeros(2), 10);
        assert!(matches!(err, Err(OemError::NotPsd)));
    }
}
