//! Second variation of the film energy at a critical configuration and
//! the spectral tests for strict stability.
//!
//! For a surface direction `phi` (zero mean on the free surface) the
//! adjoint state `v_phi` solves the elastic problem loaded by
//! `-int_Gamma phi W_xi(grad u) : grad_Gamma w`, and
//!
//! `d2F[phi] = -int C_u grad v_phi : grad v_phi
//!             + int hess psi(nu)[grad_Gamma phi, grad_Gamma phi] + int a phi^2`,
//!
//! with `a = W_xi(grad u) : d_nu grad u - trace(hess psi(nu) B^2)`.

use std::sync::OnceLock;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anisotropy::{Anisotropy, AnisotropyError};
use crate::elasticity::{
    continue_critical_point, DisplacementField, ElasticProblem, ElasticityError, NewtonOptions,
};
use crate::geometry::{
    anisotropic_mean_curvature, graph_normal, surface_divergence, tangential_gradient,
    unnormalized_normal, FilmGrid, GeometryError, Profile, SurfaceGeometry,
};
use crate::linalg::{self, column, generalized_eigen, gram, lanczos, Cholesky, Matrix};
use crate::tensor::{matmul, Mat3, ZERO};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("the elastic second variation is not coercive (c0 = {c0:e})")]
    IndefiniteStiffness { c0: f64 },
    #[error(
        "the surface inner product is not positive definite (smallest eigenvalue {sim_gram_min:e})"
    )]
    IndefiniteSimProduct { sim_gram_min: f64 },
    #[error(
        "continuation to the perturbed profile failed at t = {t:e}; try a smaller step ({reason})"
    )]
    Continuation { t: f64, reason: String },
    #[error(transparent)]
    Anisotropy(#[from] AnisotropyError),
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Function on the free surface, sampled at the profile points.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceFunction {
    pub samples: Vec<f64>,
    pub zero_mean: bool,
}

impl SurfaceFunction {
    pub fn new(samples: Vec<f64>) -> Self {
        Self {
            samples,
            zero_mean: false,
        }
    }

    /// Removes the area-weighted mean over `Gamma_h`.
    pub fn projected(samples: Vec<f64>, profile: &Profile) -> Self {
        let geom = SurfaceGeometry::new(profile);
        Self::project_with(samples, &geom.area)
    }

    fn project_with(mut samples: Vec<f64>, area: &[f64]) -> Self {
        let total: f64 = area.iter().sum();
        let mean: f64 = samples.iter().zip(area).map(|(f, a)| f * a).sum::<f64>() / total;
        for v in samples.iter_mut() {
            *v -= mean;
        }
        Self {
            samples,
            zero_mean: true,
        }
    }

    /// `cos(2 pi k . x / period)` sampled on the profile points.
    pub fn cosine(profile: &Profile, k: [i64; 2]) -> Self {
        let period = profile.period();
        let samples = (0..profile.len())
            .map(|j| {
                let x = profile.point(j);
                (2.0 * std::f64::consts::PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1]) / period)
                    .cos()
            })
            .collect();
        Self::new(samples)
    }
}

/// Zero-mean trigonometric basis of the discrete surface space: all modes
/// strictly below the Nyquist frequency, with the area-weighted mean removed.
#[derive(Clone, Debug)]
pub struct SurfaceBasis {
    /// Wave vector and `true` for the sine member of each pair.
    pub modes: Vec<([i64; 2], bool)>,
    pub functions: Vec<Vec<f64>>,
}

impl SurfaceBasis {
    pub fn new(profile: &Profile, area: &[f64]) -> Self {
        let n = profile.n() as i64;
        let kmax = (n - 1) / 2;
        let mut wave = Vec::new();
        if profile.dim() == 2 {
            for k in 1..=kmax {
                wave.push([k, 0]);
            }
        } else {
            for k1 in 0..=kmax {
                for k2 in -kmax..=kmax {
                    if k1 > 0 || k2 > 0 {
                        wave.push([k1, k2]);
                    }
                }
            }
        }
        let period = profile.period();
        let mut modes = Vec::new();
        let mut functions = Vec::new();
        for k in wave {
            for sine in [false, true] {
                let f: Vec<f64> = (0..profile.len())
                    .map(|j| {
                        let x = profile.point(j);
                        let arg =
                            2.0 * std::f64::consts::PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1])
                                / period;
                        if sine {
                            arg.sin()
                        } else {
                            arg.cos()
                        }
                    })
                    .collect();
                modes.push((k, sine));
                functions.push(SurfaceFunction::project_with(f, area).samples);
            }
        }
        Self { modes, functions }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let nx = self.functions[0].len();
        let mut out = vec![0.0; nx];
        for (c, f) in coeffs.iter().zip(&self.functions) {
            for (o, v) in out.iter_mut().zip(f) {
                *o += c * v;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StabilityOptions {
    /// Relative factor of the criticality threshold `f (|mean| + 1)`.
    pub criticality_factor: f64,
    pub lanczos_steps: usize,
    pub lanczos_tol: f64,
    pub mu1_block: usize,
    pub mu1_max_iter: usize,
    pub seed: u64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            criticality_factor: 1e-6,
            lanczos_steps: 400,
            lanczos_tol: 1e-10,
            mu1_block: 8,
            mu1_max_iter: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criticality {
    /// `sup |W(grad u) + H^psi - mean|` on the free surface.
    pub residual: f64,
    pub mean: f64,
    pub threshold: f64,
}

impl Criticality {
    pub fn is_critical(&self) -> bool {
        self.residual < self.threshold
    }
}

/// Value of the second variation together with a warning when the pair is
/// not critical (the three-term form is then not the second variation).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormValue {
    pub value: f64,
    pub criticality_warning: Option<Criticality>,
}

#[derive(Clone, Debug)]
pub struct Lambda1 {
    pub value: f64,
    /// Basis coefficients of the eigenfunction, normalised in the `~` norm.
    pub coefficients: Vec<f64>,
    pub eigenfunction: SurfaceFunction,
    /// All eigenvalues of `T`, ascending.
    pub spectrum: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mu1 {
    /// `+inf` when the constraint is infeasible.
    pub value: f64,
    pub constraint_vanishes: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StrictlyStable,
    NotStrictlyStable,
    IndefiniteSimProduct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub c0: f64,
    pub sim_gram_min: f64,
    pub lambda1: Option<f64>,
    pub mu1: Option<f64>,
    pub mu1_infeasible: bool,
    pub criticality_residual: f64,
    pub verdict: Verdict,
    /// `(1 - lambda1) * sim_gram_min`, a discrete lower bound for
    /// `d2F[phi] / ||phi||^2_{H^1(Gamma)}`.
    pub coercivity_const: Option<f64>,
}

/// Data of `(h, u, psi)` needed by every second-variation quantity.
pub struct SecondVariation {
    problem: ElasticProblem,
    u: DisplacementField,
    psi: Anisotropy,
    opts: StabilityOptions,
    geom: SurfaceGeometry,
    hpsi: Vec<f64>,
    energy_density: Vec<f64>,
    stress: Vec<Mat3>,
    psi_hess: Vec<Mat3>,
    a: Vec<f64>,
    chol: Option<Cholesky>,
    spectral: OnceLock<Result<Spectral, StabilityError>>,
}

struct Spectral {
    basis: SurfaceBasis,
    /// Right-hand sides `b_i` of the adjoint problems, one column per basis function.
    rhs: Matrix,
    sim: Matrix,
    h1: Matrix,
    t: Option<Matrix>,
}

impl SecondVariation {
    pub fn new(
        problem: &ElasticProblem,
        u: &DisplacementField,
        psi: Anisotropy,
    ) -> Result<Self, StabilityError> {
        Self::with_options(problem, u, psi, StabilityOptions::default())
    }

    pub fn with_options(
        problem: &ElasticProblem,
        u: &DisplacementField,
        psi: Anisotropy,
        opts: StabilityOptions,
    ) -> Result<Self, StabilityError> {
        psi.validate()?;
        if !psi.is_differentiable() {
            return Err(AnisotropyError::NotDifferentiable.into());
        }
        let grid = problem.grid();
        let profile = grid.profile();
        let dim = grid.dim();
        let density = problem.density();
        let geom = SurfaceGeometry::new(profile);
        let hpsi = anisotropic_mean_curvature(profile, &psi)?;
        let dgrad = grid.matrix_field_gradient(&u.grad);
        let nx = grid.nx();
        let mut energy_density = Vec::with_capacity(nx);
        let mut stress = Vec::with_capacity(nx);
        let mut psi_hess = Vec::with_capacity(nx);
        let mut a = Vec::with_capacity(nx);
        for j in 0..nx {
            let q = grid.surface_node(j);
            let xi = &u.grad[q];
            let s = density.stress(xi, dim)?;
            let nu = &geom.normal[j];
            let mut dnu_grad = ZERO;
            for c in 0..dim {
                for r in 0..dim {
                    for e in 0..dim {
                        dnu_grad[r][e] += nu[c] * dgrad[q][c][r][e];
                    }
                }
            }
            let hess = psi.hessian(nu, dim)?;
            let b2 = matmul(&geom.shape[j], &geom.shape[j]);
            let tr: f64 = (0..dim)
                .map(|r| (0..dim).map(|e| hess[r][e] * b2[e][r]).sum::<f64>())
                .sum();
            let w_dnu: f64 = (0..dim)
                .map(|r| (0..dim).map(|e| s[r][e] * dnu_grad[r][e]).sum::<f64>())
                .sum();
            energy_density.push(density.energy(xi, dim)?);
            stress.push(s);
            psi_hess.push(hess);
            a.push(w_dnu - tr);
        }
        let k = problem.stiffness(&u.grad)?;
        let chol = Cholesky::factor(&k);
        Ok(Self {
            problem: problem.clone(),
            u: u.clone(),
            psi,
            opts,
            geom,
            hpsi,
            energy_density,
            stress,
            psi_hess,
            a,
            chol,
            spectral: OnceLock::new(),
        })
    }

    pub fn problem(&self) -> &ElasticProblem {
        &self.problem
    }

    pub fn grid(&self) -> &FilmGrid {
        self.problem.grid()
    }

    pub fn profile(&self) -> &Profile {
        self.problem.grid().profile()
    }

    pub fn geometry(&self) -> &SurfaceGeometry {
        &self.geom
    }

    pub fn anisotropy(&self) -> &Anisotropy {
        &self.psi
    }

    pub fn displacement(&self) -> &DisplacementField {
        &self.u
    }

    pub fn coefficient_a(&self) -> &[f64] {
        &self.a
    }

    /// Replaces `a` by zero; used at flat configurations where it vanishes
    /// identically. Must be called before any spectral quantity is requested.
    pub(crate) fn clear_coefficient_a(&mut self) {
        assert!(self.spectral.get().is_none());
        self.a.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn anisotropic_curvature(&self) -> &[f64] {
        &self.hpsi
    }

    /// `W(grad u)` on the free surface.
    pub fn surface_energy_density(&self) -> &[f64] {
        &self.energy_density
    }

    pub fn is_coercive(&self) -> bool {
        self.chol.is_some()
    }

    fn cell(&self) -> f64 {
        self.profile().cell_measure()
    }

    /// `int_Gamma f dH` for `f` sampled at the profile points.
    pub fn surface_integral(&self, f: &[f64]) -> f64 {
        self.cell()
            * self
                .geom
                .area
                .iter()
                .zip(f)
                .map(|(a, v)| a * v)
                .sum::<f64>()
    }

    pub fn zero_mean(&self, samples: Vec<f64>) -> SurfaceFunction {
        SurfaceFunction::project_with(samples, &self.geom.area)
    }

    pub fn criticality(&self) -> Criticality {
        let f: Vec<f64> = self
            .energy_density
            .iter()
            .zip(&self.hpsi)
            .map(|(w, h)| w + h)
            .collect();
        let area: f64 = self.surface_integral(&vec![1.0; f.len()]);
        let mean = self.surface_integral(&f) / area;
        let residual = f.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
        Criticality {
            residual,
            mean,
            threshold: self.opts.criticality_factor * (mean.abs() + 1.0),
        }
    }

    pub fn criticality_residual(&self) -> f64 {
        self.criticality().residual
    }

    /// Load vector of the adjoint problem for `phi`:
    /// `w -> -int_Gamma phi W_xi(grad u) : grad w P`.
    pub fn rhs(&self, phi: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let dim = grid.dim();
        let mut field = vec![ZERO; grid.n_nodes()];
        for (j, &p) in phi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let proj = self.geom.projector(j);
            let sp = matmul(&self.stress[j], &proj);
            let scale = -self.cell() * self.geom.area[j] * p;
            let q = grid.surface_node(j);
            for r in 0..dim {
                for e in 0..dim {
                    field[q][r][e] = scale * sp[r][e];
                }
            }
        }
        grid.vector_gradient_transpose(&field)[self.problem.dof_offset()..].to_vec()
    }

    fn factor(&self) -> Result<&Cholesky, StabilityError> {
        match &self.chol {
            Some(c) => Ok(c),
            None => Err(StabilityError::IndefiniteStiffness {
                c0: self.coercivity_c0(),
            }),
        }
    }

    /// Adjoint state `v_phi` on the unknowns.
    pub fn solve_vphi(&self, phi: &[f64]) -> Result<Vec<f64>, StabilityError> {
        let b = self.rhs(phi);
        Ok(self.factor()?.solve_vec(&b))
    }

    /// `(T phi, phi)_~ = int C_u grad v_phi : grad v_phi`.
    pub fn elastic_term(&self, phi: &[f64]) -> Result<f64, StabilityError> {
        let b = self.rhs(phi);
        let y = self.factor()?.forward_vec(&b);
        Ok(linalg::dot(&y, &y))
    }

    /// `(phi, theta)_~`.
    pub fn sim_inner_product(&self, phi: &[f64], theta: &[f64]) -> f64 {
        let dim = self.grid().dim();
        let gp = tangential_gradient(self.profile(), &self.geom, phi);
        let gt = tangential_gradient(self.profile(), &self.geom, theta);
        let f: Vec<f64> = (0..phi.len())
            .map(|j| {
                let h = &self.psi_hess[j];
                let mut v = 0.0;
                for r in 0..dim {
                    for e in 0..dim {
                        v += h[r][e] * gp[j][r] * gt[j][e];
                    }
                }
                v + self.a[j] * phi[j] * theta[j]
            })
            .collect();
        self.surface_integral(&f)
    }

    /// Three-term form, valid at critical pairs.
    pub fn second_variation(&self, phi: &[f64]) -> Result<FormValue, StabilityError> {
        let value = self.sim_inner_product(phi, phi) - self.elastic_term(phi)?;
        let crit = self.criticality();
        Ok(FormValue {
            value,
            criticality_warning: if crit.is_critical() { None } else { Some(crit) },
        })
    }

    /// Four-term form, valid at any elastic equilibrium.
    pub fn full_second_variation(&self, phi: &[f64]) -> Result<f64, StabilityError> {
        let base = self.sim_inner_product(phi, phi) - self.elastic_term(phi)?;
        let profile = self.profile();
        let dim = profile.dim();
        let field: Vec<[f64; 3]> = (0..profile.len())
            .map(|j| {
                let g = profile.gradient(j);
                let g2: f64 = g.iter().take(dim - 1).map(|v| v * v).sum();
                let jac = self.geom.area[j];
                let p2 = phi[j] * phi[j];
                let mut v = [0.0; 3];
                for c in 0..dim - 1 {
                    v[c] = g[c] / jac * p2;
                }
                v[dim - 1] = g2 / jac * p2;
                v
            })
            .collect();
        let div = surface_divergence(profile, &self.geom, &field);
        let f: Vec<f64> = (0..profile.len())
            .map(|j| (self.energy_density[j] + self.hpsi[j]) * div[j])
            .collect();
        Ok(base - self.surface_integral(&f))
    }

    fn spectral(&self) -> Result<&Spectral, StabilityError> {
        self.spectral
            .get_or_init(|| self.build_spectral())
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn build_spectral(&self) -> Result<Spectral, StabilityError> {
        let profile = self.profile();
        let basis = SurfaceBasis::new(profile, &self.geom.area);
        let m = basis.len();
        let ndof = self.problem.ndof();
        let mut rhs = Matrix::zeros(ndof, m);
        for (i, f) in basis.functions.iter().enumerate() {
            let b = self.rhs(f);
            for (r, v) in b.iter().enumerate() {
                rhs[(r, i)] = *v;
            }
        }
        let mut sim = Matrix::zeros(m, m);
        let mut h1 = Matrix::zeros(m, m);
        let grads: Vec<Vec<[f64; 3]>> = basis
            .functions
            .iter()
            .map(|f| tangential_gradient(profile, &self.geom, f))
            .collect();
        let dim = profile.dim();
        let w: Vec<f64> = self.geom.area.iter().map(|a| a * self.cell()).collect();
        for i in 0..m {
            for k in i..m {
                let (mut s, mut g) = (0.0, 0.0);
                for j in 0..profile.len() {
                    let (fi, fk) = (basis.functions[i][j], basis.functions[k][j]);
                    let (gi, gk) = (&grads[i][j], &grads[k][j]);
                    let h = &self.psi_hess[j];
                    let mut hv = 0.0;
                    let mut gg = 0.0;
                    for r in 0..dim {
                        gg += gi[r] * gk[r];
                        for e in 0..dim {
                            hv += h[r][e] * gi[r] * gk[e];
                        }
                    }
                    s += w[j] * (hv + self.a[j] * fi * fk);
                    g += w[j] * (gg + fi * fk);
                }
                sim[(i, k)] = s;
                sim[(k, i)] = s;
                h1[(i, k)] = g;
                h1[(k, i)] = g;
            }
        }
        let t = self.chol.as_ref().map(|ch| {
            let mut y = rhs.clone();
            ch.forward_in_place(&mut y);
            gram(&y)
        });
        Ok(Spectral {
            basis,
            rhs,
            sim,
            h1,
            t,
        })
    }

    pub fn basis(&self) -> Result<&SurfaceBasis, StabilityError> {
        Ok(&self.spectral()?.basis)
    }

    /// Gram matrix of `(.,.)_~` on the basis.
    pub fn sim_gram(&self) -> Result<&Matrix, StabilityError> {
        Ok(&self.spectral()?.sim)
    }

    /// Gram matrix of the `H^1(Gamma)` inner product on the basis.
    pub fn surface_h1_gram(&self) -> Result<&Matrix, StabilityError> {
        Ok(&self.spectral()?.h1)
    }

    /// Matrix of `(T phi_i, phi_k)_~ = b_i^T K^{-1} b_k`.
    pub fn t_matrix(&self) -> Result<&Matrix, StabilityError> {
        let sp = self.spectral()?;
        match &sp.t {
            Some(t) => Ok(t),
            None => Err(StabilityError::IndefiniteStiffness {
                c0: self.coercivity_c0(),
            }),
        }
    }

    /// Smallest eigenvalue of the `~` Gram relative to the `H^1(Gamma)` Gram.
    pub fn sim_gram_min(&self) -> Result<f64, StabilityError> {
        let sp = self.spectral()?;
        let (vals, _) =
            generalized_eigen(&sp.sim, &sp.h1).expect("surface H1 Gram is positive definite");
        Ok(vals[0])
    }

    pub fn lambda1(&self) -> Result<Lambda1, StabilityError> {
        let sp = self.spectral()?;
        let t = self.t_matrix()?;
        let Some((vals, vecs)) = generalized_eigen(t, &sp.sim) else {
            return Err(StabilityError::IndefiniteSimProduct {
                sim_gram_min: self.sim_gram_min()?,
            });
        };
        let m = vals.len();
        let mut coefficients = column(&vecs, m - 1);
        let big = coefficients.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some(first) = coefficients.iter().find(|v| v.abs() > 1e-8 * big) {
            if *first < 0.0 {
                coefficients.iter_mut().for_each(|v| *v = -*v);
            }
        }
        let eigenfunction = SurfaceFunction {
            samples: sp.basis.combine(&coefficients),
            zero_mean: true,
        };
        Ok(Lambda1 {
            value: vals[m - 1],
            coefficients,
            eigenfunction,
            spectrum: vals,
        })
    }

    /// `mu1 = min { v^T K v : ||Phi_v||_~ = 1 }`, by block inverse iteration
    /// with Rayleigh–Ritz on the volume pencil `(K, B S^{-1} B^T)`.
    pub fn mu1(&self) -> Result<Mu1, StabilityError> {
        let sp = self.spectral()?;
        let ch = self.factor()?;
        let dim = self.grid().dim();
        let scale = self.problem.density().modulus();
        let smax = self
            .stress
            .iter()
            .flat_map(|s| s.iter().take(dim).flat_map(|r| r.iter().take(dim)))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if smax <= 1e-13 * scale {
            return Ok(Mu1 {
                value: f64::INFINITY,
                constraint_vanishes: true,
                iterations: 0,
            });
        }
        let Some(schol) = Cholesky::factor(&sp.sim) else {
            return Err(StabilityError::IndefiniteSimProduct {
                sim_gram_min: self.sim_gram_min()?,
            });
        };
        let m = sp.basis.len();
        let p = self.opts.mu1_block.min(m).max(1);
        let b = &sp.rhs;
        let apply_m = |v: &Matrix| -> Matrix {
            let mut c = b.transpose() * v;
            schol.solve_in_place(&mut c);
            b * c
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        let r = Mat::from_fn(m, p, |_, _| rng.random_range(-1.0..1.0));
        let mut v = b * r;
        ch.solve_in_place(&mut v);
        let mut mu = f64::INFINITY;
        let mut iterations = 0;
        for it in 0..self.opts.mu1_max_iter {
            iterations = it + 1;
            let mv = apply_m(&v);
            let mut z = mv.clone();
            ch.solve_in_place(&mut z);
            let ak = z.transpose() * &mv;
            let bz = b.transpose() * &z;
            let mut sbz = bz.clone();
            schol.solve_in_place(&mut sbz);
            let am = bz.transpose() * &sbz;
            let ak = Mat::from_fn(p, p, |i, j| 0.5 * (ak[(i, j)] + ak[(j, i)]));
            let am = Mat::from_fn(p, p, |i, j| 0.5 * (am[(i, j)] + am[(j, i)]));
            let Some((theta, x)) = generalized_eigen(&am, &ak) else {
                break;
            };
            let top = theta[p - 1];
            let new_mu = 1.0 / top;
            v = &z * &x;
            let done = (new_mu - mu).abs() <= 1e-13 * new_mu.abs();
            mu = new_mu;
            if done {
                break;
            }
        }
        Ok(Mu1 {
            value: mu,
            constraint_vanishes: false,
            iterations,
        })
    }

    /// Coercivity constant of the elastic second variation,
    /// `min int C_u grad w : grad w / ||w||^2_{H^1}` over admissible `w`.
    pub fn coercivity_c0(&self) -> f64 {
        let n = self.problem.ndof();
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed ^ 0x9e37_79b9);
        let start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let apply_g = |x: &[f64]| -> Vec<f64> {
            let grid = self.grid();
            let w = self.problem.field_from_dofs(x);
            let g = grid.vector_gradient(&w);
            let p: Vec<Mat3> = g
                .iter()
                .zip(grid.weights())
                .map(|(m, wq)| m.map(|r| r.map(|v| v * wq)))
                .collect();
            let off = self.problem.dof_offset();
            let mut r = grid.vector_gradient_transpose(&p)[off..].to_vec();
            let dim = grid.dim();
            for (i, ri) in r.iter_mut().enumerate() {
                *ri += grid.weights()[(off + i) / dim] * x[i];
            }
            r
        };
        if let Some(ch) = &self.chol {
            let res = lanczos(
                n,
                |v| {
                    let y = ch.backward_vec(v);
                    ch.forward_vec(&apply_g(&y))
                },
                &start,
                self.opts.lanczos_steps,
                self.opts.lanczos_tol,
            );
            1.0 / res.largest
        } else {
            let g = self.problem.h1_gram();
            let gch = Cholesky::factor(&g).expect("H1 Gram is positive definite");
            let k = self
                .problem
                .stiffness(&self.u.grad)
                .expect("stiffness at a converged state");
            let res = lanczos(
                n,
                |v| {
                    let y = gch.backward_vec(v);
                    let ky = crate::linalg::column(&(&k * crate::linalg::col_matrix(&y)), 0);
                    gch.forward_vec(&ky)
                },
                &start,
                self.opts.lanczos_steps,
                self.opts.lanczos_tol,
            );
            res.smallest
        }
    }

    pub fn report(&self) -> Result<StabilityReport, StabilityError> {
        let c0 = self.coercivity_c0();
        let sim_gram_min = self.sim_gram_min()?;
        let criticality_residual = self.criticality_residual();
        if sim_gram_min <= 0.0 {
            return Ok(StabilityReport {
                c0,
                sim_gram_min,
                lambda1: None,
                mu1: None,
                mu1_infeasible: false,
                criticality_residual,
                verdict: Verdict::IndefiniteSimProduct,
                coercivity_const: None,
            });
        }
        if c0 <= 0.0 || self.chol.is_none() {
            return Ok(StabilityReport {
                c0,
                sim_gram_min,
                lambda1: None,
                mu1: None,
                mu1_infeasible: false,
                criticality_residual,
                verdict: Verdict::NotStrictlyStable,
                coercivity_const: None,
            });
        }
        let l1 = self.lambda1()?.value;
        let mu = self.mu1()?;
        let verdict = if l1 < 1.0 {
            Verdict::StrictlyStable
        } else {
            Verdict::NotStrictlyStable
        };
        Ok(StabilityReport {
            c0,
            sim_gram_min,
            lambda1: Some(l1),
            mu1: if mu.value.is_finite() {
                Some(mu.value)
            } else {
                None
            },
            mu1_infeasible: mu.constraint_vanishes,
            criticality_residual,
            verdict,
            coercivity_const: Some((1.0 - l1) * sim_gram_min),
        })
    }
}

/// Total energy `int W(grad u) + int_Gamma psi(nu)` of a discrete state.
pub fn total_energy(problem: &ElasticProblem, u: &DisplacementField, psi: &Anisotropy) -> f64 {
    u.energy + surface_energy(problem.grid().profile(), psi)
}

/// `int_Q psi(-grad h, 1) dx`.
pub fn surface_energy(profile: &Profile, psi: &Anisotropy) -> f64 {
    let dim = profile.dim();
    profile.cell_measure()
        * (0..profile.len())
            .map(|j| psi.value(&unnormalized_normal(dim, &profile.gradient(j)), dim))
            .sum::<f64>()
}

/// Options of the finite-difference oracle.
#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    /// Step; defaults to `1e-3 max h`.
    pub t: Option<f64>,
    pub richardson: bool,
    pub newton: NewtonOptions,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            t: None,
            richardson: true,
            newton: NewtonOptions::default(),
        }
    }
}

/// Energy of the equilibrium on `h + t dir`, continued from `u`.
pub fn perturbed_energy(
    problem: &ElasticProblem,
    u: &DisplacementField,
    psi: &Anisotropy,
    dir: &[f64],
    t: f64,
    newton: NewtonOptions,
) -> Result<f64, StabilityError> {
    let profile = problem.grid().profile();
    let fail = |e: String| StabilityError::Continuation { t, reason: e };
    let pt = profile.perturbed(dir, t).map_err(|e| fail(e.to_string()))?;
    let grid = problem.grid().like(pt).map_err(|e| fail(e.to_string()))?;
    let pb = problem.with_grid(grid)?;
    let ut = continue_critical_point(&pb, problem, u, newton).map_err(|e| fail(e.to_string()))?;
    Ok(total_energy(&pb, &ut, psi))
}

/// Second derivative of `t -> F(h_t, u_t)` at `t = 0` along the normal
/// perturbation with surface speed `phi` (so `h_t = h + t phi J`), by
/// central differences with optional Richardson extrapolation.
pub fn fd_oracle_second_variation(
    problem: &ElasticProblem,
    u: &DisplacementField,
    psi: &Anisotropy,
    phi: &[f64],
    opts: OracleOptions,
) -> Result<f64, StabilityError> {
    let profile = problem.grid().profile();
    let dim = profile.dim();
    let dir: Vec<f64> = (0..profile.len())
        .map(|j| phi[j] * graph_normal(dim, &profile.gradient(j)).1)
        .collect();
    let t = opts.t.unwrap_or(1e-3 * profile.max());
    let f0 = total_energy(problem, u, psi);
    let second = |t: f64| -> Result<f64, StabilityError> {
        let fp = perturbed_energy(problem, u, psi, &dir, t, opts.newton)?;
        let fm = perturbed_energy(problem, u, psi, &dir, -t, opts.newton)?;
        Ok((fp - 2.0 * f0 + fm) / (t * t))
    };
    let d1 = second(t)?;
    if !opts.richardson {
        return Ok(d1);
    }
    let d2 = second(0.5 * t)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Central-difference first derivative of `t -> F(h_t, u_t)` along the
/// profile direction `dir`.
pub fn fd_first_variation(
    problem: &ElasticProblem,
    u: &DisplacementField,
    psi: &Anisotropy,
    dir: &[f64],
    t: f64,
) -> Result<f64, StabilityError> {
    let fp = perturbed_energy(problem, u, psi, dir, t, NewtonOptions::default())?;
    let fm = perturbed_energy(problem, u, psi, dir, -t, NewtonOptions::default())?;
    Ok((fp - fm) / (2.0 * t))
}

/// `(k, d2F[cos 2 pi k x_1 / period])` for `k = 1..=kmax`, for plotting
/// dispersion curves.
pub fn dispersion(sv: &SecondVariation, kmax: i64) -> Result<Vec<(i64, f64)>, StabilityError> {
    (1..=kmax)
        .map(|k| {
            let phi = sv.zero_mean(SurfaceFunction::cosine(sv.profile(), [k, 0]).samples);
            Ok((k, sv.second_variation(&phi.samples)?.value))
        })
        .collect()
}

/// Sup-norm defects of the first-order identities `d/dt nu_t = -grad_Gamma phi`
/// and `d/dt H^psi_t = -div_Gamma(hess psi(nu) grad_Gamma phi)` on `Gamma_h`,
/// for the normal perturbation `h_t = h + t phi J`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaDefects {
    pub t: f64,
    pub normal: f64,
    pub curvature: f64,
}

/// Normal and anisotropic curvature of `Gamma_g` at a point `z` near it, for
/// the extension constant along normals (gradient of the signed distance).
fn extended_normal_curvature(
    g: &Profile,
    psi: &Anisotropy,
    z: &[f64; 3],
    x0: [f64; 2],
) -> Result<([f64; 3], f64), StabilityError> {
    let dim = g.dim();
    let m = dim - 1;
    let y = z[m];
    let mut x = x0;
    for _ in 0..50 {
        let (v, grad, hess) = g.eval(&x);
        let mut res = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        for a in 0..m {
            res[a] = x[a] - z[a] + (v - y) * grad[a];
            for b in 0..m {
                jac[a][b] =
                    if a == b { 1.0 } else { 0.0 } + grad[a] * grad[b] + (v - y) * hess[a][b];
            }
        }
        let step = if m == 1 {
            [res[0] / jac[0][0], 0.0]
        } else {
            let d = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            [
                (jac[1][1] * res[0] - jac[0][1] * res[1]) / d,
                (jac[0][0] * res[1] - jac[1][0] * res[0]) / d,
            ]
        };
        for a in 0..m {
            x[a] -= step[a];
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-15 {
            break;
        }
    }
    let (v, grad, hess) = g.eval(&x);
    let (nu, shape) = crate::geometry::graph_geometry(dim, &grad, &hess);
    let mut p = [0.0; 3];
    p[..m].copy_from_slice(&x[..m]);
    p[m] = v;
    let s: f64 = (0..dim).map(|a| (z[a] - p[a]) * nu[a]).sum();
    let mut id = crate::tensor::identity(3);
    for r in 0..dim {
        for c in 0..dim {
            id[r][c] += s * shape[r][c];
        }
    }
    let inv = crate::tensor::inverse(&id, dim).expect("point inside the tubular neighbourhood");
    let dnu = matmul(&shape, &inv);
    let hess_psi = psi.hessian(&nu, dim)?;
    let h: f64 = (0..dim)
        .map(|r| (0..dim).map(|c| hess_psi[r][c] * dnu[c][r]).sum::<f64>())
        .sum();
    Ok((nu, h))
}

/// Finite-difference defects of the normal and curvature derivative
/// identities at step `t`; both should be `O(t)`.
pub fn lemma_identity_defects(
    profile: &Profile,
    psi: &Anisotropy,
    phi: &[f64],
    t: f64,
) -> Result<LemmaDefects, StabilityError> {
    let dim = profile.dim();
    let geom = SurfaceGeometry::new(profile);
    let dir: Vec<f64> = phi.iter().zip(&geom.area).map(|(p, j)| p * j).collect();
    let pt = profile.perturbed(&dir, t)?;
    let gphi = tangential_gradient(profile, &geom, phi);
    let field: Vec<[f64; 3]> = (0..profile.len())
        .map(|j| {
            let h = psi.hessian(&geom.normal[j], dim)?;
            Ok(crate::tensor::matvec(&h, &gphi[j]))
        })
        .collect::<Result<_, AnisotropyError>>()?;
    let hdot = surface_divergence(profile, &geom, &field);
    let (mut dn, mut dc) = (0.0f64, 0.0f64);
    for j in 0..profile.len() {
        let x = profile.point(j);
        let mut z = [0.0; 3];
        z[..dim - 1].copy_from_slice(&x[..dim - 1]);
        z[dim - 1] = profile.samples()[j];
        let (nu0, h0) = extended_normal_curvature(profile, psi, &z, x)?;
        let (nut, ht) = extended_normal_curvature(&pt, psi, &z, x)?;
        for a in 0..dim {
            dn = dn.max(((nut[a] - nu0[a]) / t + gphi[j][a]).abs());
        }
        dc = dc.max(((ht - h0) / t + hdot[j]).abs());
    }
    Ok(LemmaDefects {
        t,
        normal: dn,
        curvature: dc,
    })
}
