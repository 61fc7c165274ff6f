use super::Profile;
use crate::anisotropy::{Anisotropy, AnisotropyError};
use crate::tensor::{projector, Mat3, ZERO};

/// Geometry of the graph `Gamma_h = {y = h(x)}` at the profile samples.
#[derive(Clone, Debug)]
pub struct SurfaceGeometry {
    pub dim: usize,
    /// Upward unit normal `(-grad h, 1) / J`.
    pub normal: Vec<[f64; 3]>,
    /// Area element `J = sqrt(1 + |grad h|^2)`.
    pub area: Vec<f64>,
    /// Second fundamental form: tangential gradient of the normal.
    pub shape: Vec<Mat3>,
    /// `trace B`, positive on crests.
    pub mean_curvature: Vec<f64>,
}

/// Upward normal and `z = (-grad h, 1)` from a slope vector.
pub fn graph_normal(dim: usize, slope: &[f64; 2]) -> ([f64; 3], f64) {
    let mut z = [0.0; 3];
    for a in 0..dim - 1 {
        z[a] = -slope[a];
    }
    z[dim - 1] = 1.0;
    let jac = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nu = [z[0] / jac, z[1] / jac, z[2] / jac];
    (nu, jac)
}

pub fn unnormalized_normal(dim: usize, slope: &[f64; 2]) -> [f64; 3] {
    let mut z = [0.0; 3];
    for a in 0..dim - 1 {
        z[a] = -slope[a];
    }
    z[dim - 1] = 1.0;
    z
}

/// Closed-form normal and shape operator from the slope and Hessian of `h`.
pub fn graph_geometry(dim: usize, slope: &[f64; 2], hess: &[[f64; 2]; 2]) -> ([f64; 3], Mat3) {
    let (nu, jac) = graph_normal(dim, slope);
    let mut dnu = ZERO;
    for b in 0..dim - 1 {
        let mut dz = [0.0; 3];
        for a in 0..dim - 1 {
            dz[a] = -hess[a][b];
        }
        let proj: f64 = (0..dim).map(|a| nu[a] * dz[a]).sum();
        for a in 0..dim {
            dnu[a][b] = (dz[a] - nu[a] * proj) / jac;
        }
    }
    let p = projector(&nu, dim);
    let mut shape = ZERO;
    for a in 0..dim {
        for c in 0..dim {
            shape[a][c] = (0..dim).map(|b| dnu[a][b] * p[b][c]).sum();
        }
    }
    (nu, shape)
}

impl SurfaceGeometry {
    /// The shape operator is obtained by spectral differentiation of the
    /// normal field `nu(x)` extended constantly in `y`, followed by
    /// projection onto the tangent space.
    pub fn new(profile: &Profile) -> Self {
        let dim = profile.dim();
        let nx = profile.len();
        let mut normal = Vec::with_capacity(nx);
        let mut area = Vec::with_capacity(nx);
        for j in 0..nx {
            let (nu, jac) = graph_normal(dim, &profile.gradient(j));
            normal.push(nu);
            area.push(jac);
        }
        let mut dnu = vec![ZERO; nx];
        for a in 0..dim {
            let comp: Vec<f64> = normal.iter().map(|v| v[a]).collect();
            for b in 0..dim - 1 {
                let d = profile.diff(&comp, b);
                for j in 0..nx {
                    dnu[j][a][b] = d[j];
                }
            }
        }
        let mut shape = Vec::with_capacity(nx);
        let mut mean_curvature = Vec::with_capacity(nx);
        for j in 0..nx {
            let p = projector(&normal[j], dim);
            let mut s = ZERO;
            for a in 0..dim {
                for c in 0..dim {
                    s[a][c] = (0..dim).map(|b| dnu[j][a][b] * p[b][c]).sum();
                }
            }
            mean_curvature.push((0..dim).map(|a| s[a][a]).sum());
            shape.push(s);
        }
        Self {
            dim,
            normal,
            area,
            shape,
            mean_curvature,
        }
    }

    pub fn len(&self) -> usize {
        self.normal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normal.is_empty()
    }

    pub fn projector(&self, j: usize) -> Mat3 {
        projector(&self.normal[j], self.dim)
    }
}

/// Surface integral `int_{Gamma_h} f dH` of a function sampled at the
/// profile points.
pub fn surface_integral(profile: &Profile, geom: &SurfaceGeometry, f: &[f64]) -> f64 {
    profile.cell_measure() * geom.area.iter().zip(f).map(|(a, v)| a * v).sum::<f64>()
}

/// Anisotropic mean curvature `H^psi = div_x [grad psi(-grad h, 1)]`.
pub fn anisotropic_mean_curvature(
    profile: &Profile,
    psi: &Anisotropy,
) -> Result<Vec<f64>, AnisotropyError> {
    let dim = profile.dim();
    let nx = profile.len();
    let mut fields = vec![vec![0.0; nx]; dim - 1];
    for j in 0..nx {
        let z = unnormalized_normal(dim, &profile.gradient(j));
        let g = psi.gradient(&z, dim)?;
        for (a, f) in fields.iter_mut().enumerate() {
            f[j] = g[a];
        }
    }
    let mut h = vec![0.0; nx];
    for (a, f) in fields.iter().enumerate() {
        let d = profile.diff(f, a);
        for (hj, dj) in h.iter_mut().zip(&d) {
            *hj += dj;
        }
    }
    Ok(h)
}

/// Tangential gradient `P (grad_x phi, 0)` of a surface function given on
/// the profile samples.
pub fn tangential_gradient(
    profile: &Profile,
    geom: &SurfaceGeometry,
    phi: &[f64],
) -> Vec<[f64; 3]> {
    let dim = profile.dim();
    let grads: Vec<Vec<f64>> = (0..dim - 1).map(|a| profile.diff(phi, a)).collect();
    (0..profile.len())
        .map(|j| {
            let p = geom.projector(j);
            let mut g = [0.0; 3];
            for (a, ga) in g.iter_mut().enumerate().take(dim) {
                *ga = (0..dim - 1).map(|b| p[a][b] * grads[b][j]).sum();
            }
            g
        })
        .collect()
}

/// Tangential divergence of a vector field `X(x)` given on the surface and
/// extended constantly in `y`.
pub fn surface_divergence(
    profile: &Profile,
    geom: &SurfaceGeometry,
    field: &[[f64; 3]],
) -> Vec<f64> {
    let dim = profile.dim();
    let nx = profile.len();
    let mut out = vec![0.0; nx];
    for a in 0..dim {
        let comp: Vec<f64> = field.iter().map(|v| v[a]).collect();
        for c in 0..dim - 1 {
            let d = profile.diff(&comp, c);
            for j in 0..nx {
                let nu = &geom.normal[j];
                let pac = if a == c { 1.0 } else { 0.0 } - nu[a] * nu[c];
                out[j] += pac * d[j];
            }
        }
    }
    out
}
