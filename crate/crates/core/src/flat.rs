//! Flat films `Omega_d = Q x (0, d)` with an affine critical deformation:
//! stability as a function of the thickness, the critical thickness, and
//! the suppression of the instability by a crystalline surface energy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anisotropy::Anisotropy;
use crate::elasticity::{
    DisplacementField, ElasticDensity, ElasticProblem, ElasticityError, Mismatch,
};
use crate::geometry::{FilmGrid, GeometryError, Profile};
use crate::linalg::norm;
use crate::stability::{
    SecondVariation, StabilityError, StabilityOptions, StabilityReport, SurfaceFunction,
};
use crate::tensor::Mat3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlatError {
    #[error("the mismatch datum of a flat configuration must have q = 0")]
    PeriodicDatum,
    #[error("affine Newton solve did not converge (residual {residual:e} after {iterations} iterations)")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("the acoustic matrix d_b G is not positive definite; the flat configuration is not well posed")]
    LostPositivity,
    #[error("coefficient a does not vanish at the flat configuration (max |a| = {0:e})")]
    NonzeroCoefficient(f64),
    #[error(
        "bracket [{lo}, {hi}] does not straddle lambda1 = 1 (lambda1 = {lambda_lo}, {lambda_hi})"
    )]
    NoBracket {
        lo: f64,
        hi: f64,
        lambda_lo: f64,
        lambda_hi: f64,
    },
    #[error("no stable epsilon found down to {eps:e} (lambda1 = {lambda1})")]
    SweepExhausted { eps: f64, lambda1: f64 },
    #[error("invalid flat setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Periodicity cell: the unit cell `Q = (0,1)^{N-1}` with thickness `d`, or
/// the cube `Q_d = (0,d)^{N-1}` with thickness `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellMode {
    Unit,
    Cube,
}

impl CellMode {
    pub fn period(self, d: f64) -> f64 {
        match self {
            CellMode::Unit => 1.0,
            CellMode::Cube => d,
        }
    }
}

/// Affine critical deformation `v0(x, y) = (A x, 0) + y b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatConfiguration {
    pub dim: usize,
    pub slope: [f64; 3],
    pub gradient: Mat3,
    /// `|W_xi(grad v0) e_N|`.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `W_xi(grad v0) e_N = 0` for `b` by Newton's method.
pub fn solve_affine(
    density: &ElasticDensity,
    mismatch: &Mismatch,
    dim: usize,
) -> Result<FlatConfiguration, FlatError> {
    if !mismatch.q.is_empty() {
        return Err(FlatError::PeriodicDatum);
    }
    let last = dim - 1;
    let mut xi = mismatch.a;
    if !density.is_linear() {
        xi[last][last] = 1.0;
    }
    let tol = 1e-13 * density.modulus().max(1.0);
    let mut residual = f64::INFINITY;
    for it in 0..50 {
        let s = density.stress(&xi, dim)?;
        let g: Vec<f64> = (0..dim).map(|i| s[i][last]).collect();
        residual = norm(&g);
        if residual <= tol {
            let mut slope = [0.0; 3];
            for i in 0..dim {
                slope[i] = xi[i][last];
            }
            return Ok(FlatConfiguration {
                dim,
                slope,
                gradient: xi,
                residual,
                iterations: it,
            });
        }
        let c = density.tangent(&xi, dim)?;
        let jac = crate::linalg::Matrix::from_fn(dim, dim, |i, k| c.get(i, last, k, last));
        let ch = crate::linalg::Cholesky::factor(&jac).ok_or(FlatError::LostPositivity)?;
        let step = ch.solve_vec(&g);
        for i in 0..dim {
            xi[i][last] -= step[i];
        }
    }
    Err(FlatError::NotConverged {
        iterations: 50,
        residual,
    })
}

/// Material, surface energy, mismatch and resolution of a family of flat
/// films parametrised by the thickness.
#[derive(Clone, Debug)]
pub struct FlatSetup {
    pub dim: usize,
    pub density: ElasticDensity,
    pub anisotropy: Anisotropy,
    pub mismatch: Mismatch,
    pub n: usize,
    pub ny: usize,
    pub cell: CellMode,
    pub options: StabilityOptions,
}

/// Thickness-dependent quantities of one flat film.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThicknessRow {
    pub thickness: f64,
    pub lambda1: f64,
    pub mu1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalThickness {
    pub d_crit: f64,
    pub lo: f64,
    pub hi: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub d: f64,
    /// `lambda1` on the cube `(0,d)^N`.
    pub lhs: f64,
    /// `d lambda1` on the unit cube.
    pub rhs: f64,
    pub lambda_unit: f64,
}

impl ScalingCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs >= self.rhs - tol * self.lambda_unit
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrystallineResult {
    pub eps0: f64,
    /// `(epsilon, lambda1)` along the sweep.
    pub sweep: Vec<(f64, f64)>,
    /// Largest relative difference between the explicit two-term form and
    /// the generic assembly, at `epsilon = b / (4a)`.
    pub two_term_rel_diff: f64,
}

impl FlatSetup {
    pub fn new(
        dim: usize,
        density: ElasticDensity,
        anisotropy: Anisotropy,
        mismatch: Mismatch,
        n: usize,
        ny: usize,
        cell: CellMode,
    ) -> Result<Self, FlatError> {
        if !(dim == 2 || dim == 3) {
            return Err(FlatError::Invalid(format!("dimension {dim}")));
        }
        if n < 8 || ny < 4 {
            return Err(FlatError::Invalid(format!(
                "resolution n = {n}, ny = {ny} below the minimum (8, 4)"
            )));
        }
        if !mismatch.q.is_empty() {
            return Err(FlatError::PeriodicDatum);
        }
        anisotropy.validate().map_err(StabilityError::from)?;
        Ok(Self {
            dim,
            density,
            anisotropy,
            mismatch,
            n,
            ny,
            cell,
            options: StabilityOptions::default(),
        })
    }

    pub fn with_cell(&self, cell: CellMode) -> Self {
        Self {
            cell,
            ..self.clone()
        }
    }

    pub fn with_anisotropy(&self, anisotropy: Anisotropy) -> Self {
        Self {
            anisotropy,
            ..self.clone()
        }
    }

    pub fn affine(&self) -> Result<FlatConfiguration, FlatError> {
        solve_affine(&self.density, &self.mismatch, self.dim)
    }

    /// Grid problem on `Omega_d` and the affine equilibrium sampled on it.
    pub fn configuration(&self, d: f64) -> Result<(ElasticProblem, DisplacementField), FlatError> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(FlatError::Invalid(format!("thickness {d}")));
        }
        let flat = self.affine()?;
        let profile = Profile::flat(self.dim, self.n, self.cell.period(d), d)?;
        let grid = FilmGrid::new(profile, self.ny)?;
        let problem = ElasticProblem::new(grid, self.density.clone(), self.mismatch.clone())?;
        let dim = self.dim;
        let grid = problem.grid();
        let mut w = vec![0.0; grid.n_nodes() * dim];
        for q in 0..grid.n_nodes() {
            let y = grid.coords(q)[dim - 1];
            for a in 0..dim {
                w[q * dim + a] = y * flat.slope[a];
            }
        }
        let grad = problem.gradients(&w);
        let energy = problem.energy_of_gradients(&grad)?;
        let residual = problem.residual_of_gradients(&grad)?;
        let off = problem.dof_offset();
        let field = DisplacementField {
            w,
            grad,
            energy,
            iterations: 0,
            residual_norm: norm(&residual[off..]),
        };
        Ok((problem, field))
    }

    /// Second-variation data at thickness `d`, with `a = 0` after checking
    /// that it vanishes numerically.
    pub fn second_variation(&self, d: f64) -> Result<SecondVariation, FlatError> {
        let (problem, u) = self.configuration(d)?;
        let mut sv = SecondVariation::with_options(&problem, &u, self.anisotropy, self.options)?;
        let amax = sv
            .coefficient_a()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = self.density.modulus().max(1.0) / d.min(1.0);
        if amax > 1e-8 * scale {
            return Err(FlatError::NonzeroCoefficient(amax));
        }
        sv.clear_coefficient_a();
        Ok(sv)
    }

    pub fn lambda1(&self, d: f64) -> Result<f64, FlatError> {
        Ok(self.second_variation(d)?.lambda1()?.value)
    }

    pub fn row(&self, d: f64) -> Result<ThicknessRow, FlatError> {
        let sv = self.second_variation(d)?;
        Ok(ThicknessRow {
            thickness: d,
            lambda1: sv.lambda1()?.value,
            mu1: sv.mu1()?.value,
        })
    }

    pub fn report(&self, d: f64) -> Result<StabilityReport, FlatError> {
        Ok(self.second_variation(d)?.report()?)
    }

    pub fn sweep(&self, thicknesses: &[f64]) -> Result<Vec<ThicknessRow>, FlatError> {
        thicknesses.iter().map(|&d| self.row(d)).collect()
    }

    /// Root of `lambda1(d) = 1` by geometric bisection to relative width `1e-3`.
    pub fn critical_thickness(&self, lo: f64, hi: f64) -> Result<CriticalThickness, FlatError> {
        if !(lo > 0.0 && hi > lo) {
            return Err(FlatError::Invalid(format!("bracket [{lo}, {hi}]")));
        }
        let (mut lo, mut hi) = (lo, hi);
        let mut lambda_lo = self.lambda1(lo)?;
        let mut lambda_hi = self.lambda1(hi)?;
        let mut evaluations = 2;
        if !(lambda_lo < 1.0 && lambda_hi > 1.0) {
            return Err(FlatError::NoBracket {
                lo,
                hi,
                lambda_lo,
                lambda_hi,
            });
        }
        while hi / lo - 1.0 > 1e-3 {
            let mid = (lo * hi).sqrt();
            let l = self.lambda1(mid)?;
            evaluations += 1;
            if l < 1.0 {
                lo = mid;
                lambda_lo = l;
            } else {
                hi = mid;
                lambda_hi = l;
            }
        }
        Ok(CriticalThickness {
            d_crit: (lo * hi).sqrt(),
            lo,
            hi,
            lambda_lo,
            lambda_hi,
            evaluations,
        })
    }

    /// Compares `lambda1` on the cube `(0,d)^N` with `d lambda1` on the unit cube.
    pub fn scaling_law_check(&self, d: f64) -> Result<ScalingCheck, FlatError> {
        let cube = self.with_cell(CellMode::Cube);
        let lambda_unit = cube.lambda1(1.0)?;
        let lhs = if d == 1.0 {
            lambda_unit
        } else {
            cube.lambda1(d)?
        };
        Ok(ScalingCheck {
            d,
            lhs,
            rhs: d * lambda_unit,
            lambda_unit,
        })
    }
}

/// `(a / eps) int_Q |grad phi|^2 - (T phi, phi)_~`, the second variation of
/// a flat film for the regularised crystalline energy.
pub fn crystalline_two_term_form(
    sv: &SecondVariation,
    a: f64,
    eps: f64,
    phi: &[f64],
) -> Result<f64, FlatError> {
    let profile = sv.profile();
    let mut grad_sq = 0.0;
    for c in 0..profile.dim() - 1 {
        let d = profile.diff(phi, c);
        grad_sq += d.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(a / eps * profile.cell_measure() * grad_sq - sv.elastic_term(phi)?)
}

/// Largest `eps` in `b / (2a) 2^{-k}`, `k < 20`, for which the flat film of
/// thickness `d` with the regularised crystalline energy has `lambda1 < 1`.
pub fn crystalline_epsilon0(
    setup: &FlatSetup,
    d: f64,
    a: f64,
    b: f64,
) -> Result<CrystallineResult, FlatError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(FlatError::Invalid(format!(
            "facet parameters a = {a}, b = {b}"
        )));
    }
    let two_term_rel_diff = {
        let eps = b / (4.0 * a);
        let sv = setup
            .with_anisotropy(Anisotropy::Quadratic { a, b, epsilon: eps })
            .second_variation(d)?;
        let mut worst = 0.0f64;
        let mut phis: Vec<Vec<f64>> = (1..=3)
            .map(|k| SurfaceFunction::cosine(sv.profile(), [k, 0]).samples)
            .collect();
        phis.push(sv.lambda1()?.eigenfunction.samples);
        for phi in &phis {
            let generic = sv.second_variation(phi)?.value;
            let explicit = crystalline_two_term_form(&sv, a, eps, phi)?;
            worst = worst.max((generic - explicit).abs() / generic.abs().max(explicit.abs()));
        }
        worst
    };
    let mut sweep = Vec::new();
    let mut eps = b / (2.0 * a);
    for _ in 0..20 {
        let l = setup
            .with_anisotropy(Anisotropy::Quadratic { a, b, epsilon: eps })
            .lambda1(d)?;
        sweep.push((eps, l));
        if l < 1.0 {
            return Ok(CrystallineResult {
                eps0: eps,
                sweep,
                two_term_rel_diff,
            });
        }
        eps *= 0.5;
    }
    let last = sweep.last().copied().unwrap_or((eps, f64::NAN));
    Err(FlatError::SweepExhausted {
        eps: last.0,
        lambda1: last.1,
    })
}
