//! Elastic energy densities, the Dirichlet datum imposed by the substrate,
//! and equilibrium solves on a film grid.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Diffeomorphism, FilmGrid, GeometryError, ModeIndex};
use crate::linalg::{norm, Cholesky, Matrix};
use crate::tensor::{ddot, det, inverse, Mat3, Tensor4, ZERO};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElasticityError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid mismatch datum: {0}")]
    InvalidMismatch(String),
    #[error("deformation gradient left the domain of W (det = {0})")]
    Domain(f64),
    #[error("Newton failed to converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("line search failed to decrease the energy")]
    LineSearch,
    #[error("singular stiffness matrix")]
    Singular,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Serialized material description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MaterialSpec {
    LinearIsotropic {
        lame_lambda: f64,
        lame_mu: f64,
    },
    NonlinearDefault {
        mu: f64,
        lambda: f64,
    },
    LinearFull {
        #[serde(rename = "C")]
        c: Vec<f64>,
    },
}

/// Elastic energy density `W(xi)`.
///
/// The linear kinds act on displacement gradients,
/// `W = C[sym xi, sym xi] / 2`. The nonlinear kind acts on deformation
/// gradients: `W = mu/2 (|xi|^2 - N) - mu log det xi + lambda/2 (log det xi)^2`.
#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum ElasticDensity {
    Linear { dim: Option<usize>, tensor: Tensor4 },
    Nonlinear { mu: f64, lambda: f64 },
}

impl ElasticDensity {
    pub fn linear_isotropic(lambda: f64, mu: f64) -> Result<Self, ElasticityError> {
        if !(mu > 0.0 && lambda + 2.0 * mu > 0.0 && lambda.is_finite() && mu.is_finite()) {
            return Err(ElasticityError::InvalidMaterial(format!(
                "need mu > 0 and lambda + 2 mu > 0, got lambda={lambda}, mu={mu}"
            )));
        }
        let mut t = Tensor4::zero();
        for a in 0..3 {
            for c in 0..3 {
                for b in 0..3 {
                    for e in 0..3 {
                        let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
                        let v = lambda * d(a, c) * d(b, e)
                            + mu * (d(a, b) * d(c, e) + d(a, e) * d(c, b));
                        t.set(a, c, b, e, v);
                    }
                }
            }
        }
        Ok(ElasticDensity::Linear {
            dim: None,
            tensor: t,
        })
    }

    /// General linear tensor, given as `dim^4` entries `C[i][j][h][k]`
    /// (row-major). The tensor is symmetrised over its minor and major
    /// index pairs, which leaves the energy unchanged.
    pub fn linear_full(entries: &[f64]) -> Result<Self, ElasticityError> {
        let dim = match entries.len() {
            16 => 2,
            81 => 3,
            l => {
                return Err(ElasticityError::InvalidMaterial(format!(
                    "expected 16 or 81 entries, got {l}"
                )))
            }
        };
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(ElasticityError::InvalidMaterial(
                "non-finite tensor entry".into(),
            ));
        }
        let raw =
            |a: usize, c: usize, b: usize, e: usize| entries[((a * dim + c) * dim + b) * dim + e];
        let mut t = Tensor4::zero();
        for a in 0..dim {
            for c in 0..dim {
                for b in 0..dim {
                    for e in 0..dim {
                        let v = raw(a, c, b, e)
                            + raw(c, a, b, e)
                            + raw(a, c, e, b)
                            + raw(c, a, e, b)
                            + raw(b, e, a, c)
                            + raw(e, b, a, c)
                            + raw(b, e, c, a)
                            + raw(e, b, c, a);
                        t.set(a, c, b, e, v / 8.0);
                    }
                }
            }
        }
        let density = ElasticDensity::Linear {
            dim: Some(dim),
            tensor: t,
        };
        let margin = density.legendre_hadamard_margin(&[ZERO], dim, 400, 7)?;
        if margin <= 0.0 {
            return Err(ElasticityError::InvalidMaterial(format!(
                "tensor is not strongly elliptic (Legendre-Hadamard margin {margin:e})"
            )));
        }
        Ok(density)
    }

    pub fn nonlinear(mu: f64, lambda: f64) -> Result<Self, ElasticityError> {
        if !(mu > 0.0 && lambda >= 0.0 && mu.is_finite() && lambda.is_finite()) {
            return Err(ElasticityError::InvalidMaterial(format!(
                "need mu > 0 and lambda >= 0, got mu={mu}, lambda={lambda}"
            )));
        }
        Ok(ElasticDensity::Nonlinear { mu, lambda })
    }

    pub fn from_spec(spec: &MaterialSpec) -> Result<Self, ElasticityError> {
        match spec {
            MaterialSpec::LinearIsotropic {
                lame_lambda,
                lame_mu,
            } => Self::linear_isotropic(*lame_lambda, *lame_mu),
            MaterialSpec::NonlinearDefault { mu, lambda } => Self::nonlinear(*mu, *lambda),
            MaterialSpec::LinearFull { c } => Self::linear_full(c),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, ElasticDensity::Linear { .. })
    }

    /// Dimension fixed by the material, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ElasticDensity::Linear { dim, .. } => *dim,
            ElasticDensity::Nonlinear { .. } => None,
        }
    }

    /// Stress scale used for tolerances.
    pub fn modulus(&self) -> f64 {
        match self {
            ElasticDensity::Linear { tensor, .. } => tensor.max_abs(),
            ElasticDensity::Nonlinear { mu, lambda } => mu.max(*lambda),
        }
    }

    fn nonlinear_parts(xi: &Mat3, dim: usize) -> Result<(f64, Mat3), ElasticityError> {
        let j = det(xi, dim);
        if !(j > 0.0) {
            return Err(ElasticityError::Domain(j));
        }
        Ok((j.ln(), inverse(xi, dim).expect("positive determinant")))
    }

    pub fn energy(&self, xi: &Mat3, dim: usize) -> Result<f64, ElasticityError> {
        match self {
            ElasticDensity::Linear { tensor, .. } => Ok(0.5 * tensor.bilinear(xi, xi)),
            ElasticDensity::Nonlinear { mu, lambda } => {
                let (lj, _) = Self::nonlinear_parts(xi, dim)?;
                let f2: f64 = (0..dim)
                    .map(|i| (0..dim).map(|k| xi[i][k] * xi[i][k]).sum::<f64>())
                    .sum();
                Ok(0.5 * mu * (f2 - dim as f64) - mu * lj + 0.5 * lambda * lj * lj)
            }
        }
    }

    /// `W_xi`.
    pub fn stress(&self, xi: &Mat3, dim: usize) -> Result<Mat3, ElasticityError> {
        match self {
            ElasticDensity::Linear { tensor, .. } => Ok(tensor.apply(xi)),
            ElasticDensity::Nonlinear { mu, lambda } => {
                let (lj, inv) = Self::nonlinear_parts(xi, dim)?;
                let mut s = ZERO;
                for i in 0..dim {
                    for k in 0..dim {
                        s[i][k] = mu * xi[i][k] + (lambda * lj - mu) * inv[k][i];
                    }
                }
                Ok(s)
            }
        }
    }

    /// `W_xi_xi`.
    pub fn tangent(&self, xi: &Mat3, dim: usize) -> Result<Tensor4, ElasticityError> {
        match self {
            ElasticDensity::Linear { tensor, .. } => Ok(*tensor),
            ElasticDensity::Nonlinear { mu, lambda } => {
                let (lj, f) = Self::nonlinear_parts(xi, dim)?;
                let mut t = Tensor4::zero();
                for i in 0..dim {
                    for j in 0..dim {
                        for k in 0..dim {
                            for l in 0..dim {
                                let d = if i == k && j == l { *mu } else { 0.0 };
                                let v = d
                                    + (mu - lambda * lj) * f[l][i] * f[j][k]
                                    + lambda * f[j][i] * f[l][k];
                                t.set(i, j, k, l, v);
                            }
                        }
                    }
                }
                Ok(t)
            }
        }
    }

    /// Minimum of `W_xi_xi(xi)[a (x) b, a (x) b]` over the given gradients
    /// and over unit vectors `a`, `b` (coordinate pairs plus `samples`
    /// random pairs).
    pub fn legendre_hadamard_margin(
        &self,
        gradients: &[Mat3],
        dim: usize,
        samples: usize,
        seed: u64,
    ) -> Result<f64, ElasticityError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dirs: Vec<([f64; 3], [f64; 3])> = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                let mut a = [0.0; 3];
                let mut b = [0.0; 3];
                a[i] = 1.0;
                b[j] = 1.0;
                dirs.push((a, b));
            }
        }
        let unit = |rng: &mut ChaCha8Rng| {
            let mut v = [0.0; 3];
            loop {
                for x in v.iter_mut().take(dim) {
                    *x = rng.random_range(-1.0..1.0);
                }
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-3 && n <= 1.0 {
                    return v.map(|x| x / n);
                }
            }
        };
        for _ in 0..samples {
            let a = unit(&mut rng);
            let b = unit(&mut rng);
            dirs.push((a, b));
        }
        let mut margin = f64::INFINITY;
        let constant = self.is_linear();
        for (idx, xi) in gradients.iter().enumerate() {
            if constant && idx > 0 {
                break;
            }
            let t = self.tangent(xi, dim)?;
            for (a, b) in &dirs {
                let mut m = ZERO;
                for i in 0..dim {
                    for j in 0..dim {
                        m[i][j] = a[i] * b[j];
                    }
                }
                margin = margin.min(t.bilinear(&m, &m));
            }
        }
        Ok(margin)
    }
}

/// One cosine mode of the periodic part `q` of the datum, acting on a
/// horizontal displacement component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicMode {
    pub component: usize,
    pub mode: ModeIndex,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Substrate datum `u0(x, y) = (A x + q(x), 0)`; `A` is the leading
/// `(dim-1) x (dim-1)` block of `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub a: Mat3,
    pub q: Vec<PeriodicMode>,
}

impl Mismatch {
    pub fn new(dim: usize, a: Mat3, q: Vec<PeriodicMode>) -> Result<Self, ElasticityError> {
        for (i, row) in a.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() || ((i >= dim - 1 || j >= dim - 1) && *v != 0.0) {
                    return Err(ElasticityError::InvalidMismatch(format!(
                        "entry ({i},{j}) = {v} not allowed"
                    )));
                }
            }
        }
        for m in &q {
            if m.component >= dim - 1 {
                return Err(ElasticityError::InvalidMismatch(format!(
                    "component {} out of range",
                    m.component
                )));
            }
            if dim == 2 && m.mode.as_pair()[1] != 0 {
                return Err(ElasticityError::InvalidMismatch(
                    "two-component mode in 2D".into(),
                ));
            }
        }
        Ok(Self { a, q })
    }

    /// `A = e I`.
    pub fn uniform(dim: usize, e: f64) -> Self {
        let mut a = ZERO;
        for (i, row) in a.iter_mut().enumerate().take(dim - 1) {
            row[i] = e;
        }
        Self { a, q: Vec::new() }
    }

    /// Gradient of `u0` at the horizontal point `x`.
    pub fn gradient_at(&self, x: &[f64; 2], period: f64, dim: usize) -> Mat3 {
        let mut g = self.a;
        for m in &self.q {
            let k = m.mode.as_pair();
            let arg = 2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1]) / period + m.phase;
            for c in 0..dim - 1 {
                g[m.component][c] -= m.amplitude * 2.0 * PI * k[c] as f64 / period * arg.sin();
            }
        }
        g
    }

    /// Value of `u0` at the horizontal point `x`.
    pub fn value_at(&self, x: &[f64; 2], period: f64, dim: usize) -> [f64; 3] {
        let mut u = [0.0; 3];
        for i in 0..dim - 1 {
            u[i] = (0..dim - 1).map(|j| self.a[i][j] * x[j]).sum();
        }
        for m in &self.q {
            let k = m.mode.as_pair();
            let arg = 2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1]) / period + m.phase;
            u[m.component] += m.amplitude * arg.cos();
        }
        u
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 50,
        }
    }
}

/// Equilibrium displacement `u = u0 + w` on a grid. `w` is node-major
/// (`q * dim + a`) and vanishes on the substrate layer.
#[derive(Clone, Debug)]
pub struct DisplacementField {
    pub w: Vec<f64>,
    pub grad: Vec<Mat3>,
    pub energy: f64,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Elastic energy on a film grid with a fixed material and datum.
#[derive(Clone, Debug)]
pub struct ElasticProblem {
    grid: FilmGrid,
    density: ElasticDensity,
    mismatch: Mismatch,
    base: Vec<Mat3>,
}

impl ElasticProblem {
    pub fn new(
        grid: FilmGrid,
        density: ElasticDensity,
        mismatch: Mismatch,
    ) -> Result<Self, ElasticityError> {
        let dim = grid.dim();
        if let Some(d) = density.dim() {
            if d != dim {
                return Err(ElasticityError::InvalidMaterial(format!(
                    "material is {d}D but the film is {dim}D"
                )));
            }
        }
        let mismatch = Mismatch::new(dim, mismatch.a, mismatch.q)?;
        let period = grid.profile().period();
        let base = (0..grid.nx())
            .map(|j| mismatch.gradient_at(&grid.profile().point(j), period, dim))
            .collect();
        Ok(Self {
            grid,
            density,
            mismatch,
            base,
        })
    }

    /// Same material and datum on another grid.
    pub fn with_grid(&self, grid: FilmGrid) -> Result<Self, ElasticityError> {
        Self::new(grid, self.density.clone(), self.mismatch.clone())
    }

    pub fn grid(&self) -> &FilmGrid {
        &self.grid
    }

    pub fn density(&self) -> &ElasticDensity {
        &self.density
    }

    pub fn mismatch(&self) -> &Mismatch {
        &self.mismatch
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Number of unknowns: all components at nodes off the substrate.
    pub fn ndof(&self) -> usize {
        (self.grid.n_nodes() - self.grid.nx()) * self.dim()
    }

    /// Offset of the unknowns inside a node-major field.
    pub fn dof_offset(&self) -> usize {
        self.grid.nx() * self.dim()
    }

    pub fn field_from_dofs(&self, x: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.dof_offset()];
        w.extend_from_slice(x);
        w
    }

    /// Gradient of `u0` at node `q`.
    pub fn datum_gradient(&self, q: usize) -> Mat3 {
        self.base[q % self.grid.nx()]
    }

    pub fn gradients(&self, w: &[f64]) -> Vec<Mat3> {
        let mut g = self.grid.vector_gradient(w);
        let nx = self.grid.nx();
        for (q, m) in g.iter_mut().enumerate() {
            let b = &self.base[q % nx];
            for a in 0..3 {
                for c in 0..3 {
                    m[a][c] += b[a][c];
                }
            }
        }
        g
    }

    pub fn energy_of_gradients(&self, grads: &[Mat3]) -> Result<f64, ElasticityError> {
        let dim = self.dim();
        let mut e = 0.0;
        for (g, w) in grads.iter().zip(self.grid.weights()) {
            e += w * self.density.energy(g, dim)?;
        }
        Ok(e)
    }

    pub fn energy(&self, w: &[f64]) -> Result<f64, ElasticityError> {
        self.energy_of_gradients(&self.gradients(w))
    }

    /// Gradient of the discrete energy with respect to the unknowns.
    pub fn residual_of_gradients(&self, grads: &[Mat3]) -> Result<Vec<f64>, ElasticityError> {
        let dim = self.dim();
        let mut p = Vec::with_capacity(grads.len());
        for (g, w) in grads.iter().zip(self.grid.weights()) {
            let s = self.density.stress(g, dim)?;
            p.push(s.map(|row| row.map(|v| v * w)));
        }
        let r = self.grid.vector_gradient_transpose(&p);
        Ok(r[self.dof_offset()..].to_vec())
    }

    pub fn residual(&self, w: &[f64]) -> Result<Vec<f64>, ElasticityError> {
        self.residual_of_gradients(&self.gradients(w))
    }

    pub fn tangents(&self, grads: &[Mat3]) -> Result<Vec<Tensor4>, ElasticityError> {
        grads
            .iter()
            .map(|g| self.density.tangent(g, self.dim()))
            .collect()
    }

    /// Dense matrix of `w -> sum_q omega_q C_q grad w : grad v` on the
    /// unknowns, for nodal tensors `C_q`.
    pub fn assemble(&self, tensors: &[Tensor4]) -> Matrix {
        let dim = self.dim();
        let nx = self.grid.nx();
        let ndof = self.ndof();
        let mut k = Matrix::zeros(ndof, ndof);
        let weights = self.grid.weights();
        for q in 0..self.grid.n_nodes() {
            let wq = weights[q];
            let c = &tensors[q];
            let st: Vec<(usize, [f64; 3])> = self
                .grid
                .stencil(q)
                .into_iter()
                .filter(|(i, _)| *i >= nx)
                .collect();
            let d3 = dim * dim * dim;
            let mut y = vec![0.0; st.len() * d3];
            for (p, (_, coef)) in st.iter().enumerate() {
                for a in 0..dim {
                    for b in 0..dim {
                        for e in 0..dim {
                            let v: f64 = (0..dim).map(|cc| c.get(a, cc, b, e) * coef[cc]).sum();
                            y[p * d3 + (a * dim + b) * dim + e] = wq * v;
                        }
                    }
                }
            }
            for (p, (i, _)) in st.iter().enumerate() {
                let row0 = (i - nx) * dim;
                let yp = &y[p * d3..(p + 1) * d3];
                for (i2, coef2) in st.iter() {
                    let col0 = (i2 - nx) * dim;
                    for a in 0..dim {
                        for b in 0..dim {
                            let base = (a * dim + b) * dim;
                            let v: f64 = (0..dim).map(|e| yp[base + e] * coef2[e]).sum();
                            k[(row0 + a, col0 + b)] += v;
                        }
                    }
                }
            }
        }
        for i in 0..ndof {
            for j in 0..i {
                let m = 0.5 * (k[(i, j)] + k[(j, i)]);
                k[(i, j)] = m;
                k[(j, i)] = m;
            }
        }
        k
    }

    pub fn stiffness(&self, grads: &[Mat3]) -> Result<Matrix, ElasticityError> {
        Ok(self.assemble(&self.tangents(grads)?))
    }

    /// Gram matrix of the discrete `H^1` inner product on the unknowns.
    pub fn h1_gram(&self) -> Matrix {
        let dim = self.dim();
        let mut t = Tensor4::zero();
        for a in 0..dim {
            for c in 0..dim {
                t.set(a, c, a, c, 1.0);
            }
        }
        let mut g = self.assemble(&vec![t; self.grid.n_nodes()]);
        let w = self.grid.weights();
        let nx = self.grid.nx();
        for q in nx..self.grid.n_nodes() {
            for a in 0..dim {
                let i = (q - nx) * dim + a;
                g[(i, i)] += w[q];
            }
        }
        g
    }

    /// `||w||^2_{H^1}` for a node-major field.
    pub fn h1_norm_sq(&self, w: &[f64]) -> f64 {
        let g = self.grid.vector_gradient(w);
        let dim = self.dim();
        self.grid
            .weights()
            .iter()
            .enumerate()
            .map(|(q, wq)| {
                let v: f64 = (0..dim).map(|a| w[q * dim + a].powi(2)).sum();
                wq * (v + ddot(&g[q], &g[q]))
            })
            .sum()
    }

    /// Default starting field: zero for the linear kinds, the identity
    /// deformation `(0, y)` for the nonlinear one.
    pub fn initial_guess(&self) -> Vec<f64> {
        let dim = self.dim();
        let mut w = vec![0.0; self.grid.n_nodes() * dim];
        if !self.density.is_linear() {
            for q in 0..self.grid.n_nodes() {
                w[q * dim + dim - 1] = self.grid.coords(q)[dim - 1];
            }
        }
        w
    }

    fn newton_direction(&self, k: &Matrix, r: &[f64]) -> Result<Vec<f64>, ElasticityError> {
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        if let Some(ch) = Cholesky::factor(k) {
            return Ok(ch.solve_vec(&neg));
        }
        use faer::prelude::*;
        let lu = k.partial_piv_lu();
        let x = lu.solve(crate::linalg::col_matrix(&neg));
        let x = crate::linalg::column(&x, 0);
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(ElasticityError::Singular)
        }
    }

    /// Critical point of the discrete energy. Linear densities need one
    /// solve; the nonlinear one runs damped Newton with Armijo backtracking.
    pub fn solve(
        &self,
        init: Option<Vec<f64>>,
        opts: NewtonOptions,
    ) -> Result<DisplacementField, ElasticityError> {
        let off = self.dof_offset();
        let mut w = init.unwrap_or_else(|| self.initial_guess());
        assert_eq!(w.len(), self.grid.n_nodes() * self.dim());
        for v in w[..off].iter_mut() {
            *v = 0.0;
        }
        let mut grads = self.gradients(&w);
        let mut energy = self.energy_of_gradients(&grads)?;
        let mut r = self.residual_of_gradients(&grads)?;
        let r0 = norm(&r);
        let mut iterations = 0;
        if r0 == 0.0 {
            return Ok(DisplacementField {
                w,
                grad: grads,
                energy,
                iterations,
                residual_norm: 0.0,
            });
        }
        if self.density.is_linear() {
            let k = self.stiffness(&grads)?;
            let dx = self.newton_direction(&k, &r)?;
            for (wi, d) in w[off..].iter_mut().zip(&dx) {
                *wi += d;
            }
            grads = self.gradients(&w);
            energy = self.energy_of_gradients(&grads)?;
            r = self.residual_of_gradients(&grads)?;
            return Ok(DisplacementField {
                w,
                grad: grads,
                energy,
                iterations: 1,
                residual_norm: norm(&r),
            });
        }
        let mut rn = r0;
        while rn > opts.tol * r0 {
            if iterations >= opts.max_iter {
                return Err(ElasticityError::NotConverged {
                    iterations,
                    residual: rn,
                });
            }
            let k = self.stiffness(&grads)?;
            let dx = self.newton_direction(&k, &r)?;
            let slope: f64 = r.iter().zip(&dx).map(|(a, b)| a * b).sum();
            let dnorm = norm(&dx);
            let wnorm = norm(&w[off..]);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = w
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        if i < off {
                            0.0
                        } else {
                            v + alpha * dx[i - off]
                        }
                    })
                    .collect();
                let tg = self.gradients(&trial);
                if let Ok(te) = self.energy_of_gradients(&tg) {
                    let tr = self.residual_of_gradients(&tg)?;
                    let trn = norm(&tr);
                    let armijo = te <= energy + 1e-4 * alpha * slope.min(0.0);
                    // Near convergence the energy decrease drops below
                    // rounding; fall back on a residual decrease there.
                    let tiny = (energy - te).abs() <= 1e-13 * energy.abs().max(1e-300);
                    if armijo || (tiny && trn < rn) {
                        accepted = Some((trial, tg, te, tr, trn));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((tw, tg, te, tr, trn)) = accepted else {
                return Err(ElasticityError::LineSearch);
            };
            w = tw;
            grads = tg;
            energy = te;
            r = tr;
            rn = trn;
            iterations += 1;
            if alpha * dnorm <= 1e-15 * (1.0 + wnorm) {
                break;
            }
        }
        Ok(DisplacementField {
            w,
            grad: grads,
            energy,
            iterations,
            residual_norm: rn,
        })
    }

    /// Checks `E(u + w) > E(u)` for `trials` random smooth admissible `w`
    /// scaled so that `max |grad w| = delta`. Returns the first violating
    /// perturbation, if any.
    pub fn local_min_probe(
        &self,
        u: &DisplacementField,
        delta: f64,
        trials: usize,
        seed: u64,
    ) -> Result<ProbeOutcome, ElasticityError> {
        if delta == 0.0 || trials == 0 {
            return Ok(ProbeOutcome {
                all_increase: true,
                min_increase: f64::INFINITY,
                violation: None,
            });
        }
        let dim = self.dim();
        let grid = &self.grid;
        let period = grid.profile().period();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_inc = f64::INFINITY;
        for _ in 0..trials {
            let mut p = vec![0.0; grid.n_nodes() * dim];
            for _ in 0..4 {
                let a = rng.random_range(0..dim);
                let k1 = rng.random_range(0..4) as f64;
                let k2 = if dim == 3 {
                    rng.random_range(0..4) as f64
                } else {
                    0.0
                };
                let m = rng.random_range(1..4) as f64;
                let ph = rng.random_range(0.0..2.0 * PI);
                let amp = rng.random_range(-1.0..1.0);
                for q in 0..grid.n_nodes() {
                    let x = grid.coords(q);
                    let s = grid.heights().nodes()[q / grid.nx()];
                    let arg = 2.0 * PI * (k1 * x[0] + if dim == 3 { k2 * x[1] } else { 0.0 })
                        / period
                        + ph;
                    p[q * dim + a] += amp * arg.cos() * (0.5 * PI * m * s).sin();
                }
            }
            let gp = grid.vector_gradient(&p);
            let gmax = gp
                .iter()
                .flat_map(|m| m.iter().flat_map(|r| r.iter()))
                .fold(0.0f64, |a, v| a.max(v.abs()));
            if gmax == 0.0 {
                continue;
            }
            let scale = delta / gmax;
            let trial: Vec<f64> = u.w.iter().zip(&p).map(|(a, b)| a + scale * b).collect();
            let inc = match self.energy(&trial) {
                Ok(e) => e - u.energy,
                Err(_) => f64::NEG_INFINITY,
            };
            min_inc = min_inc.min(inc);
            if !(inc > 0.0) {
                let violation = p.iter().map(|v| scale * v).collect();
                return Ok(ProbeOutcome {
                    all_increase: false,
                    min_increase: inc,
                    violation: Some(violation),
                });
            }
        }
        Ok(ProbeOutcome {
            all_increase: true,
            min_increase: min_inc,
            violation: None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ProbeOutcome {
    pub all_increase: bool,
    pub min_increase: f64,
    pub violation: Option<Vec<f64>>,
}

/// Equilibrium on a nearby profile, started from `u_h o Phi_g^{-1}`.
pub fn continue_critical_point(
    target: &ElasticProblem,
    source: &ElasticProblem,
    u_h: &DisplacementField,
    opts: NewtonOptions,
) -> Result<DisplacementField, ElasticityError> {
    let dim = source.dim();
    let phi = Diffeomorphism::new(source.grid().profile(), target.grid().profile(), None)?;
    let nn = target.grid().n_nodes();
    let mut init = vec![0.0; nn * dim];
    for a in 0..dim {
        let comp: Vec<f64> = (0..source.grid().n_nodes())
            .map(|q| u_h.w[q * dim + a])
            .collect();
        let pushed = phi.pushforward(source.grid(), target.grid(), &comp);
        for q in 0..nn {
            init[q * dim + a] = pushed[q];
        }
    }
    target.solve(Some(init), opts)
}
