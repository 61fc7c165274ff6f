//! One-homogeneous surface energy densities `psi(z)` and their derivatives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Mat3, ZERO};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnisotropyError {
    #[error("invalid anisotropy parameters: {0}")]
    InvalidParameters(String),
    #[error("crystalline anisotropy is not differentiable; only evaluation is supported")]
    NotDifferentiable,
    #[error("anisotropy derivative requested at the origin")]
    AtOrigin,
}

fn one() -> f64 {
    1.0
}

/// Surface energy density, evaluated on `z in R^dim` with the last
/// component playing the role of the vertical direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Anisotropy {
    /// `gamma |z|`.
    Isotropic {
        #[serde(default = "one")]
        gamma: f64,
    },
    /// `a sqrt(eps^2 y^2 + |x|^2) + (b - a eps) |y|`, a smooth convex
    /// regularisation of [`Anisotropy::Crystalline`].
    Quadratic { a: f64, b: f64, epsilon: f64 },
    /// `a |x| + b |y|`.
    Crystalline { a: f64, b: f64 },
}

impl Default for Anisotropy {
    fn default() -> Self {
        Anisotropy::Isotropic { gamma: 1.0 }
    }
}

impl Anisotropy {
    pub fn isotropic() -> Self {
        Self::default()
    }

    pub fn quadratic(a: f64, b: f64, epsilon: f64) -> Result<Self, AnisotropyError> {
        let psi = Anisotropy::Quadratic { a, b, epsilon };
        psi.validate()?;
        Ok(psi)
    }

    pub fn crystalline(a: f64, b: f64) -> Result<Self, AnisotropyError> {
        let psi = Anisotropy::Crystalline { a, b };
        psi.validate()?;
        Ok(psi)
    }

    pub fn validate(&self) -> Result<(), AnisotropyError> {
        let bad = |m: String| Err(AnisotropyError::InvalidParameters(m));
        match *self {
            Anisotropy::Isotropic { gamma } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return bad(format!("gamma must be positive, got {gamma}"));
                }
            }
            Anisotropy::Quadratic { a, b, epsilon } => {
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return bad(format!("need a > 0 and b > 0, got a={a}, b={b}"));
                }
                if !(epsilon > 0.0 && epsilon * a <= b) {
                    return bad(format!("need 0 < epsilon <= b/a, got epsilon={epsilon}"));
                }
            }
            Anisotropy::Crystalline { a, b } => {
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return bad(format!("need a > 0 and b > 0, got a={a}, b={b}"));
                }
            }
        }
        Ok(())
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, Anisotropy::Crystalline { .. })
    }

    pub fn value(&self, z: &[f64; 3], dim: usize) -> f64 {
        let (x2, y) = split(z, dim);
        match *self {
            Anisotropy::Isotropic { gamma } => gamma * (x2 + y * y).sqrt(),
            Anisotropy::Quadratic { a, b, epsilon } => {
                a * (epsilon * epsilon * y * y + x2).sqrt() + (b - a * epsilon) * y.abs()
            }
            Anisotropy::Crystalline { a, b } => a * x2.sqrt() + b * y.abs(),
        }
    }

    pub fn gradient(&self, z: &[f64; 3], dim: usize) -> Result<[f64; 3], AnisotropyError> {
        let (x2, y) = split(z, dim);
        let mut g = [0.0; 3];
        match *self {
            Anisotropy::Isotropic { gamma } => {
                let r = (x2 + y * y).sqrt();
                if r == 0.0 {
                    return Err(AnisotropyError::AtOrigin);
                }
                for i in 0..dim {
                    g[i] = gamma * z[i] / r;
                }
            }
            Anisotropy::Quadratic { a, b, epsilon } => {
                let e2 = epsilon * epsilon;
                let r = (e2 * y * y + x2).sqrt();
                if r == 0.0 {
                    return Err(AnisotropyError::AtOrigin);
                }
                for i in 0..dim - 1 {
                    g[i] = a * z[i] / r;
                }
                g[dim - 1] = a * e2 * y / r + (b - a * epsilon) * y.signum();
            }
            Anisotropy::Crystalline { .. } => return Err(AnisotropyError::NotDifferentiable),
        }
        Ok(g)
    }

    pub fn hessian(&self, z: &[f64; 3], dim: usize) -> Result<Mat3, AnisotropyError> {
        let mut h = ZERO;
        let (x2, y) = split(z, dim);
        let diag: [f64; 3] = match *self {
            Anisotropy::Isotropic { .. } => [1.0; 3],
            Anisotropy::Quadratic { epsilon, .. } => {
                let mut d = [1.0; 3];
                d[dim - 1] = epsilon * epsilon;
                d
            }
            Anisotropy::Crystalline { .. } => return Err(AnisotropyError::NotDifferentiable),
        };
        let scale = match *self {
            Anisotropy::Isotropic { gamma } => gamma,
            Anisotropy::Quadratic { a, .. } => a,
            Anisotropy::Crystalline { .. } => unreachable!(),
        };
        let r2 = x2 + diag[dim - 1] * y * y;
        if r2 == 0.0 {
            return Err(AnisotropyError::AtOrigin);
        }
        let r = r2.sqrt();
        let mut dz = [0.0; 3];
        for i in 0..dim {
            dz[i] = diag[i] * z[i];
        }
        for i in 0..dim {
            for j in 0..dim {
                let delta = if i == j { diag[i] } else { 0.0 };
                h[i][j] = scale * (delta / r - dz[i] * dz[j] / (r * r2));
            }
        }
        Ok(h)
    }

    /// Estimates `m`, `M` and `c_bar` from `samples` random unit directions.
    /// For the faceted families the curvature bound is sampled only on the
    /// upper half sphere, where the regularisation is smooth.
    pub fn convexity_constants(&self, dim: usize, samples: usize, seed: u64) -> ConvexityConstants {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let upper_only = !matches!(self, Anisotropy::Isotropic { .. });
        let mut m = f64::INFINITY;
        let mut big_m = 0.0f64;
        let mut c_bar = self.is_differentiable().then_some(f64::INFINITY);
        for _ in 0..samples.max(1) {
            let v = unit_direction(&mut rng, dim);
            let psi = self.value(&v, dim);
            m = m.min(psi);
            big_m = big_m.max(psi);
            let Some(c) = c_bar.as_mut() else { continue };
            if upper_only && v[dim - 1] <= 0.0 {
                continue;
            }
            let Ok(h) = self.hessian(&v, dim) else {
                continue;
            };
            // Orthonormal basis of v^perp by Gram-Schmidt on the coordinate axes.
            let mut basis: Vec<[f64; 3]> = Vec::new();
            for axis in 0..dim {
                let mut e = [0.0; 3];
                e[axis] = 1.0;
                for u in std::iter::once(&v).chain(basis.iter()) {
                    let d: f64 = (0..3).map(|i| e[i] * u[i]).sum();
                    for i in 0..3 {
                        e[i] -= d * u[i];
                    }
                }
                let r = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                if r > 1e-6 && basis.len() < dim - 1 {
                    basis.push([e[0] / r, e[1] / r, e[2] / r]);
                }
            }
            let low = if basis.len() == 1 {
                quad(&h, &basis[0], &basis[0])
            } else {
                let (p, q, r) = (
                    quad(&h, &basis[0], &basis[0]),
                    quad(&h, &basis[0], &basis[1]),
                    quad(&h, &basis[1], &basis[1]),
                );
                0.5 * (p + r) - (0.25 * (p - r) * (p - r) + q * q).sqrt()
            };
            *c = c.min(low);
        }
        ConvexityConstants { m, big_m, c_bar }
    }

    /// Minimum over sampled pairs of the midpoint convexity defect
    /// `(psi(z1) + psi(z2)) / 2 - psi((z1 + z2) / 2)`; negative values
    /// witness non-convexity.
    pub fn convexity_margin(&self, dim: usize, samples: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            let mut z1 = [0.0; 3];
            let mut z2 = [0.0; 3];
            for i in 0..dim {
                z1[i] = rng.random_range(-1.0..1.0);
                z2[i] = rng.random_range(-1.0..1.0);
            }
            let mut m = [0.0; 3];
            for i in 0..dim {
                m[i] = 0.5 * (z1[i] + z2[i]);
            }
            let d = 0.5 * (self.value(&z1, dim) + self.value(&z2, dim)) - self.value(&m, dim);
            worst = worst.min(d);
        }
        worst
    }
}

/// Sampled bounds `m |z| <= psi(z) <= M |z|` and the smallest eigenvalue
/// `c_bar` of the Hessian restricted to `v^perp` over unit directions `v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityConstants {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    /// `None` for the crystalline density, which has no Hessian.
    pub c_bar: Option<f64>,
}

fn unit_direction(rng: &mut impl rand::Rng, dim: usize) -> [f64; 3] {
    loop {
        let mut z = [0.0; 3];
        for v in z.iter_mut().take(dim) {
            *v = rng.random_range(-1.0..1.0);
        }
        let r2: f64 = z.iter().map(|v| v * v).sum();
        if r2 > 1e-4 && r2 <= 1.0 {
            let r = r2.sqrt();
            return [z[0] / r, z[1] / r, z[2] / r];
        }
    }
}

fn quad(h: &Mat3, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3)
        .map(|i| a[i] * (0..3).map(|j| h[i][j] * b[j]).sum::<f64>())
        .sum()
}

fn split(z: &[f64; 3], dim: usize) -> (f64, f64) {
    let x2: f64 = z[..dim - 1].iter().map(|v| v * v).sum();
    (x2, z[dim - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(psi: &Anisotropy, z: &[f64; 3], dim: usize) -> [f64; 3] {
        let mut g = [0.0; 3];
        let h = 1e-6;
        for i in 0..dim {
            let mut zp = *z;
            let mut zm = *z;
            zp[i] += h;
            zm[i] -= h;
            g[i] = (psi.value(&zp, dim) - psi.value(&zm, dim)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn gradients_match_finite_differences() {
        let psis = [
            Anisotropy::Isotropic { gamma: 1.3 },
            Anisotropy::Quadratic {
                a: 1.0,
                b: 2.0,
                epsilon: 0.3,
            },
        ];
        for psi in psis {
            for dim in [2, 3] {
                let z = [0.3, -0.7, 1.1];
                let g = psi.gradient(&z, dim).unwrap();
                let fd = fd_gradient(&psi, &z, dim);
                for i in 0..dim {
                    assert!((g[i] - fd[i]).abs() < 1e-8, "{psi:?} dim={dim}");
                }
                let h = psi.hessian(&z, dim).unwrap();
                let step = 1e-6;
                for j in 0..dim {
                    let mut zp = z;
                    let mut zm = z;
                    zp[j] += step;
                    zm[j] -= step;
                    let gp = psi.gradient(&zp, dim).unwrap();
                    let gm = psi.gradient(&zm, dim).unwrap();
                    for i in 0..dim {
                        let fd = (gp[i] - gm[i]) / (2.0 * step);
                        assert!((h[i][j] - fd).abs() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn regularised_hessian_at_vertical() {
        let (a, eps) = (1.5, 0.1);
        let psi = Anisotropy::Quadratic {
            a,
            b: 1.0,
            epsilon: eps,
        };
        let h = psi.hessian(&[0.0, 1.0, 0.0], 2).unwrap();
        assert!((h[0][0] - a / eps).abs() < 1e-12);
        assert!(h[1][1].abs() < 1e-12);
    }

    #[test]
    fn crystalline_is_evaluation_only() {
        let psi = Anisotropy::crystalline(1.0, 2.0).unwrap();
        assert_eq!(psi.value(&[-0.5, 2.0, 0.0], 2), 0.5 + 4.0);
        assert_eq!(
            psi.hessian(&[0.0, 1.0, 0.0], 2),
            Err(AnisotropyError::NotDifferentiable)
        );
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Anisotropy::quadratic(1.0, 1.0, 2.0).is_err());
        assert!(Anisotropy::quadratic(-1.0, 1.0, 0.1).is_err());
        assert!(Anisotropy::crystalline(0.0, 1.0).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let psi = Anisotropy::Quadratic {
            a: 1.0,
            b: 2.0,
            epsilon: 0.25,
        };
        let s = serde_json::to_string(&psi).unwrap();
        assert_eq!(serde_json::from_str::<Anisotropy>(&s).unwrap(), psi);
        let iso: Anisotropy = serde_json::from_str(r#"{"kind":"isotropic"}"#).unwrap();
        assert_eq!(iso, Anisotropy::Isotropic { gamma: 1.0 });
        assert!(serde_json::from_str::<Anisotropy>(r#"{"kind":"isotropic","g":1}"#).is_err());
    }

    #[test]
    fn convex_families_pass_the_midpoint_check() {
        for psi in [
            Anisotropy::isotropic(),
            Anisotropy::Quadratic {
                a: 1.0,
                b: 1.0,
                epsilon: 0.2,
            },
            Anisotropy::Crystalline { a: 1.0, b: 3.0 },
        ] {
            assert!(psi.convexity_margin(3, 500, 1) >= -1e-14);
        }
    }

    #[test]
    fn convexity_constants_of_the_isotropic_density() {
        for dim in [2, 3] {
            let k = Anisotropy::Isotropic { gamma: 1.5 }.convexity_constants(dim, 2000, 3);
            assert!((k.m - 1.5).abs() < 1e-12 && (k.big_m - 1.5).abs() < 1e-12);
            assert!((k.c_bar.unwrap() - 1.5).abs() < 1e-10, "{k:?}");
        }
    }

    #[test]
    fn convexity_constants_bracket_the_facet_values() {
        let (a, b) = (1.0, 2.0);
        let k = Anisotropy::Quadratic { a, b, epsilon: 0.5 }.convexity_constants(2, 10_000, 5);
        // psi(e_x) = a and psi(e_y) = b lie between the sampled bounds.
        assert!(k.m <= a + 1e-3 && k.big_m >= b - 1e-3, "{k:?}");
        assert!(k.m > 0.0 && k.c_bar.unwrap() > 0.0);
        let c = Anisotropy::Crystalline { a, b }.convexity_constants(3, 1000, 5);
        assert!(c.c_bar.is_none() && c.m > 0.0);
    }
}
