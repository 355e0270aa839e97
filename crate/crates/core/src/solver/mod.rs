//! Sparse storage and linear solves for the per-step block systems.
//!
//! The direct path is backed by faer's sparse LU with partial pivoting. The
//! symbolic analysis is cached and reused while the sparsity pattern stays
//! fixed, which it does across time steps of a run. Residuals are always
//! recomputed here with our own `spmv`, never taken from the factorization.

mod gmres;
mod sparse;

pub use gmres::{gmres, Ilu0};
pub use sparse::{CsrMatrix, TripletMatrix};

use std::time::{Duration, Instant};

use faer::linalg::solvers::{Solve, SolveCore};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Conj, Mat, Par};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative residual above which a direct solve is flagged singular.
pub const DIRECT_RESIDUAL_LIMIT: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("dimension mismatch: matrix is {rows}x{cols}, right-hand side has {rhs}")]
    Dimension { rows: usize, cols: usize, rhs: usize },
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("structurally singular matrix (no pivot at step {0})")]
    StructurallySingular(usize),
    #[error("GMRES breakdown: {0}")]
    Breakdown(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    #[default]
    DirectLu,
    Gmres,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub method: SolveMethod,
    /// Zero for direct solves.
    pub iterations: usize,
    /// `|Ax - b| / |b|`, recomputed from the returned iterate.
    pub relative_residual: f64,
    pub wall_time: Duration,
    pub singular: bool,
}

/// `|Ax - b|_2 / |b|_2`, or `|Ax|_2` when `b = 0`.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.spmv(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

/// Stateful solver; keeps the symbolic LU of the last pattern it factored.
pub struct LinearSolver {
    method: SolveMethod,
    tol: f64,
    cached: Option<CachedSymbolic>,
}

struct CachedSymbolic {
    nrows: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    /// CSC arrays of the pattern (the CSR arrays of the transpose).
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Position in CSR `values` of each CSC slot.
    gather: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

impl LinearSolver {
    pub fn new(method: SolveMethod, tol: f64) -> Self {
        Self { method, tol, cached: None }
    }

    pub fn direct() -> Self {
        Self::new(SolveMethod::DirectLu, DIRECT_RESIDUAL_LIMIT)
    }

    pub fn method(&self) -> SolveMethod {
        self.method
    }

    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, SolveReport), SolveError> {
        check_dims(a, b)?;
        match self.method {
            SolveMethod::DirectLu => self.solve_direct(a, b),
            SolveMethod::Gmres => {
                let start = Instant::now();
                let (x, iterations) = gmres(a, b, self.tol, 50, 10 * a.nrows().max(1))?;
                let rel = relative_residual(a, &x, b);
                let singular = !x.iter().all(|v| v.is_finite());
                Ok((
                    x,
                    SolveReport {
                        method: SolveMethod::Gmres,
                        iterations,
                        relative_residual: rel,
                        wall_time: start.elapsed(),
                        singular,
                    },
                ))
            }
        }
    }

    fn factor(&mut self, a: &CsrMatrix) -> Result<Lu<usize, f64>, SolveError> {
        let reuse = self
            .cached
            .as_ref()
            .is_some_and(|c| c.nrows == a.nrows() && c.indptr == a.indptr() && c.indices == a.indices());
        if !reuse {
            let t = a.transpose();
            // gather map: CSC slot k holds A(row_idx[k], col) = CSR entry at some position
            let mut gather = vec![0usize; a.nnz()];
            let mut next = t.indptr().to_vec();
            for i in 0..a.nrows() {
                for p in a.indptr()[i]..a.indptr()[i + 1] {
                    let j = a.indices()[p];
                    gather[next[j]] = p;
                    next[j] += 1;
                }
            }
            let pattern = SymbolicSparseColMat::new_checked(
                a.nrows(),
                a.ncols(),
                t.indptr().to_vec(),
                None,
                t.indices().to_vec(),
            );
            let symbolic =
                SymbolicLu::try_new(pattern.as_ref()).map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
            self.cached = Some(CachedSymbolic {
                nrows: a.nrows(),
                indptr: a.indptr().to_vec(),
                indices: a.indices().to_vec(),
                col_ptr: t.indptr().to_vec(),
                row_idx: t.indices().to_vec(),
                gather,
                symbolic,
            });
        }
        let c = self.cached.as_ref().expect("symbolic analysis cached above");
        let values: Vec<f64> = c.gather.iter().map(|&p| a.values()[p]).collect();
        let pattern =
            SymbolicSparseColMat::new_checked(a.nrows(), a.ncols(), c.col_ptr.clone(), None, c.row_idx.clone());
        let mat = SparseColMatRef::new(pattern.as_ref(), &values);
        Lu::try_new_with_symbolic(c.symbolic.clone(), mat).map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => SolveError::StructurallySingular(index),
            other => SolveError::Factorization(format!("{other:?}")),
        })
    }

    fn solve_direct(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, SolveReport), SolveError> {
        let start = Instant::now();
        let n = a.nrows();
        let lu = self.factor(a)?;
        let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        let sol = lu.solve(&rhs);
        let mut x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        let mut rel = relative_residual(a, &x, b);
        // one step of iterative refinement when the first solve is loose
        if rel.is_finite() && rel > 1e-13 {
            let ax = a.spmv(&x);
            let r = Mat::<f64>::from_fn(n, 1, |i, _| b[i] - ax[i]);
            let d = lu.solve(&r);
            let refined: Vec<f64> = (0..n).map(|i| x[i] + d[(i, 0)]).collect();
            let rel2 = relative_residual(a, &refined, b);
            if rel2 < rel {
                x = refined;
                rel = rel2;
            }
        }
        let finite = x.iter().all(|v| v.is_finite()) && rel.is_finite();
        Ok((
            x,
            SolveReport {
                method: SolveMethod::DirectLu,
                iterations: 0,
                relative_residual: rel,
                wall_time: start.elapsed(),
                singular: !finite || rel > DIRECT_RESIDUAL_LIMIT,
            },
        ))
    }

    /// Power-iteration estimate of the smallest singular value of `a`,
    /// using LU solves with `a` and `a^T`.
    pub fn smallest_singular_value(&mut self, a: &CsrMatrix, iterations: usize) -> Result<f64, SolveError> {
        let lu = self.factor(a)?;
        let n = a.nrows();
        let mut v = Mat::<f64>::from_fn(n, 1, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
        let mut estimate = 0.0;
        for _ in 0..iterations {
            let nv = v.norm_l2();
            v = v * faer::Scale(1.0 / nv);
            let mut w = v.clone();
            lu.solve_in_place_with_conj(Conj::No, w.as_mut());
            lu.solve_transpose_in_place_with_conj(Conj::No, w.as_mut());
            estimate = w.norm_l2();
            if !estimate.is_finite() {
                return Ok(0.0);
            }
            v = w;
        }
        // |(A^T A)^{-1}| = 1 / sigma_min^2
        Ok(if estimate > 0.0 { 1.0 / estimate.sqrt() } else { f64::INFINITY })
    }
}

fn check_dims(a: &CsrMatrix, b: &[f64]) -> Result<(), SolveError> {
    if a.nrows() != a.ncols() || b.len() != a.nrows() {
        return Err(SolveError::Dimension { rows: a.nrows(), cols: a.ncols(), rhs: b.len() });
    }
    Ok(())
}

/// One-shot solve with a fresh [`LinearSolver`].
pub fn solve(a: &CsrMatrix, b: &[f64], method: SolveMethod, tol: f64) -> Result<(Vec<f64>, SolveReport), SolveError> {
    LinearSolver::new(method, tol).solve(a, b)
}

/// Configures faer's internal parallelism. `threads <= 1` means sequential.
pub fn set_parallelism(threads: usize) {
    faer::set_global_parallelism(if threads <= 1 { Par::Seq } else { Par::rayon(threads) });
}
