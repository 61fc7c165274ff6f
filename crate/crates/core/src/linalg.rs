//! Thin layer over `faer` for the dense factorizations used throughout, plus
//! a Lanczos iteration for extreme eigenvalues of implicit operators.

use faer::linalg::solvers::Llt;
use faer::{Mat, Par, Side};

pub type Matrix = Mat<f64>;

/// Number of threads used by the dense factorizations; `1` runs serially.
pub fn set_threads(n: usize) {
    faer::set_global_parallelism(if n <= 1 { Par::Seq } else { Par::rayon(n) });
}

/// Cholesky factorization `A = L L^T`.
pub struct Cholesky {
    llt: Llt<f64>,
}

impl std::fmt::Debug for Cholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cholesky")
            .field("dim", &self.dim())
            .finish()
    }
}

impl Cholesky {
    /// `None` when `a` is not numerically positive definite.
    pub fn factor(a: &Matrix) -> Option<Self> {
        a.llt(Side::Lower).ok().map(|llt| Self { llt })
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn solve_in_place(&self, rhs: &mut Matrix) {
        self.forward_in_place(rhs);
        self.backward_in_place(rhs);
    }

    pub fn solve(&self, rhs: &Matrix) -> Matrix {
        let mut x = rhs.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = col_matrix(b);
        self.solve_in_place(&mut x);
        column(&x, 0)
    }

    /// `rhs <- L^{-1} rhs`.
    pub fn forward_in_place(&self, rhs: &mut Matrix) {
        self.llt.L().solve_lower_triangular_in_place(rhs.as_mut());
    }

    /// `rhs <- L^{-T} rhs`.
    pub fn backward_in_place(&self, rhs: &mut Matrix) {
        self.llt
            .L()
            .transpose()
            .solve_upper_triangular_in_place(rhs.as_mut());
    }

    pub fn forward_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = col_matrix(b);
        self.forward_in_place(&mut x);
        column(&x, 0)
    }

    pub fn backward_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = col_matrix(b);
        self.backward_in_place(&mut x);
        column(&x, 0)
    }
}

pub fn col_matrix(v: &[f64]) -> Matrix {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn column(m: &Matrix, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigen-decomposition of a symmetric matrix; eigenvalues ascending,
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.nrows();
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let eig = sym
        .self_adjoint_eigen(Side::Lower)
        .expect("symmetric eigensolver failed to converge");
    let vals = (0..n).map(|i| eig.S()[i]).collect();
    (vals, eig.U().to_owned())
}

pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.nrows();
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    sym.self_adjoint_eigenvalues(Side::Lower)
        .expect("symmetric eigensolver failed to converge")
}

/// Solves `A x = lambda B x` for symmetric `A` and symmetric positive
/// definite `B`. Eigenvalues ascending; eigenvectors `B`-orthonormal.
/// Returns `None` if `B` is not positive definite.
pub fn generalized_eigen(a: &Matrix, b: &Matrix) -> Option<(Vec<f64>, Matrix)> {
    let chol = Cholesky::factor(b)?;
    // C = L^{-1} A L^{-T}
    let mut c = a.clone();
    chol.forward_in_place(&mut c);
    let mut ct = c.transpose().to_owned();
    chol.forward_in_place(&mut ct);
    let (vals, mut vecs) = symmetric_eigen(&ct);
    chol.backward_in_place(&mut vecs);
    Some((vals, vecs))
}

/// `A^T A`, exactly symmetric.
pub fn gram(a: &Matrix) -> Matrix {
    let g = a.transpose() * a;
    let n = g.nrows();
    Mat::from_fn(n, n, |i, j| if i <= j { g[(i, j)] } else { g[(j, i)] })
}

/// Result of [`lanczos`]: extreme Ritz values and the number of steps taken.
#[derive(Clone, Debug)]
pub struct LanczosResult {
    pub largest: f64,
    pub smallest: f64,
    pub steps: usize,
}

/// Lanczos with full reorthogonalisation for a symmetric operator given by
/// `apply`. Stops when both extreme Ritz pairs have residual below
/// `tol * |theta|` or the Krylov space is exhausted.
pub fn lanczos(
    n: usize,
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    start: &[f64],
    max_steps: usize,
    tol: f64,
) -> LanczosResult {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let nrm = norm(start);
    let mut v: Vec<f64> = start.iter().map(|x| x / nrm).collect();
    let max_steps = max_steps.min(n);
    let mut result = LanczosResult {
        largest: f64::NAN,
        smallest: f64::NAN,
        steps: 0,
    };
    for step in 0..max_steps {
        let mut w = apply(&v);
        let a = dot(&w, &v);
        alpha.push(a);
        basis.push(v.clone());
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let bnorm = norm(&w);
        let m = alpha.len();
        let t = Mat::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let (vals, vecs) = symmetric_eigen(&t);
        let (lo, hi) = (vals[0], vals[m - 1]);
        let res_lo = bnorm * vecs[(m - 1, 0)].abs();
        let res_hi = bnorm * vecs[(m - 1, m - 1)].abs();
        result = LanczosResult {
            largest: hi,
            smallest: lo,
            steps: step + 1,
        };
        let scale = hi.abs().max(lo.abs());
        if bnorm <= 1e-14 * scale.max(f64::MIN_POSITIVE)
            || (step >= 2 && res_lo <= tol * scale && res_hi <= tol * scale)
        {
            break;
        }
        beta.push(bnorm);
        v = w.iter().map(|x| x / bnorm).collect();
    }
    result
}
