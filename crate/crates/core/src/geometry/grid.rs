use super::{GeometryError, Profile};
use crate::spectral::{apply_along, apply_along_transposed, HeightGrid};
use crate::tensor::{Mat3, ZERO};

/// Collocation grid on `Omega_h = {0 < y < h(x)}` in the mapped
/// coordinates `(x, s)` with `y = s h(x)`: Fourier in `x`, (stretched)
/// Chebyshev in `s`. Node `q = k * nx + j` sits above profile sample `j`
/// at height index `k`; `k = 0` is the substrate, `k = ny - 1` the surface.
#[derive(Clone, Debug)]
pub struct FilmGrid {
    profile: Profile,
    heights: HeightGrid,
    weights: Vec<f64>,
}

/// Sparse row of the gradient operator: `d_c f(q) = sum coef[c] f(node)`.
pub type Stencil = Vec<(usize, [f64; 3])>;

impl FilmGrid {
    /// Grid with the stretching chosen from the aspect ratio of the profile.
    pub fn new(profile: Profile, ny: usize) -> Result<Self, GeometryError> {
        let beta = HeightGrid::auto_beta(profile.max(), profile.period());
        Self::with_stretch(profile, ny, beta)
    }

    pub fn with_stretch(profile: Profile, ny: usize, beta: f64) -> Result<Self, GeometryError> {
        if ny < 3 {
            return Err(GeometryError::InvalidProfile(format!(
                "need ny >= 3, got {ny}"
            )));
        }
        let heights = HeightGrid::new(ny, beta);
        let nx = profile.len();
        let cell = profile.cell_measure();
        let mut weights = vec![0.0; nx * ny];
        for k in 0..ny {
            for j in 0..nx {
                weights[k * nx + j] = cell * heights.weights()[k] * profile.samples()[j];
            }
        }
        Ok(Self {
            profile,
            heights,
            weights,
        })
    }

    /// Same resolution and stretching on a different profile.
    pub fn like(&self, profile: Profile) -> Result<Self, GeometryError> {
        if profile.n() != self.profile.n() || profile.dim() != self.profile.dim() {
            return Err(GeometryError::InvalidProfile(
                "profile resolution differs from grid".into(),
            ));
        }
        Self::with_stretch(profile, self.ny(), self.heights.beta())
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn heights(&self) -> &HeightGrid {
        &self.heights
    }

    pub fn dim(&self) -> usize {
        self.profile.dim()
    }

    pub fn nx(&self) -> usize {
        self.profile.len()
    }

    pub fn ny(&self) -> usize {
        self.heights.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nx() * self.ny()
    }

    /// Quadrature weights for `int_{Omega_h} f`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn surface_node(&self, j: usize) -> usize {
        (self.ny() - 1) * self.nx() + j
    }

    /// Physical coordinates of node `q`.
    pub fn coords(&self, q: usize) -> [f64; 3] {
        let (j, k) = (q % self.nx(), q / self.nx());
        let x = self.profile.point(j);
        let y = self.heights.nodes()[k] * self.profile.samples()[j];
        let mut c = [0.0; 3];
        let d = self.dim();
        c[..d - 1].copy_from_slice(&x[..d - 1]);
        c[d - 1] = y;
        c
    }

    /// Physical gradient of a nodal scalar field, one vector per direction.
    pub fn gradient(&self, f: &[f64]) -> Vec<Vec<f64>> {
        let (dim, nx, ny, n) = (self.dim(), self.nx(), self.ny(), self.profile.n());
        assert_eq!(f.len(), nx * ny);
        let fs = apply_along(self.heights.diff(), ny, f, nx);
        let s = self.heights.nodes();
        let h = self.profile.samples();
        let mut out = Vec::with_capacity(dim);
        for c in 0..dim - 1 {
            let stride = if c == 0 { 1 } else { n };
            let mut fx = apply_along(self.profile.fourier().matrix(), n, f, stride);
            for k in 0..ny {
                for j in 0..nx {
                    let q = k * nx + j;
                    fx[q] -= s[k] * self.profile.gradient(j)[c] / h[j] * fs[q];
                }
            }
            out.push(fx);
        }
        let mut fy = fs;
        for k in 0..ny {
            for j in 0..nx {
                fy[k * nx + j] /= h[j];
            }
        }
        out.push(fy);
        out
    }

    /// Adjoint of [`FilmGrid::gradient`]: `sum_c d_c^T g_c`.
    pub fn gradient_transpose(&self, g: &[Vec<f64>]) -> Vec<f64> {
        let (dim, nx, ny, n) = (self.dim(), self.nx(), self.ny(), self.profile.n());
        let s = self.heights.nodes();
        let h = self.profile.samples();
        let mut out = vec![0.0; nx * ny];
        let mut ts = vec![0.0; nx * ny];
        for c in 0..dim - 1 {
            let stride = if c == 0 { 1 } else { n };
            let t = apply_along_transposed(self.profile.fourier().matrix(), n, &g[c], stride);
            for (o, v) in out.iter_mut().zip(&t) {
                *o += v;
            }
            for k in 0..ny {
                for j in 0..nx {
                    let q = k * nx + j;
                    ts[q] -= s[k] * self.profile.gradient(j)[c] / h[j] * g[c][q];
                }
            }
        }
        for k in 0..ny {
            for j in 0..nx {
                let q = k * nx + j;
                ts[q] += g[dim - 1][q] / h[j];
            }
        }
        let t = apply_along_transposed(self.heights.diff(), ny, &ts, nx);
        for (o, v) in out.iter_mut().zip(&t) {
            *o += v;
        }
        out
    }

    /// Gradient of a vector field stored node-major (`q * dim + a`):
    /// `G[q][a][c] = d_c f_a (q)`.
    pub fn vector_gradient(&self, f: &[f64]) -> Vec<Mat3> {
        let dim = self.dim();
        let nn = self.n_nodes();
        assert_eq!(f.len(), nn * dim);
        let mut out = vec![ZERO; nn];
        for a in 0..dim {
            let comp: Vec<f64> = (0..nn).map(|q| f[q * dim + a]).collect();
            let g = self.gradient(&comp);
            for (c, gc) in g.iter().enumerate() {
                for q in 0..nn {
                    out[q][a][c] = gc[q];
                }
            }
        }
        out
    }

    /// Adjoint of [`FilmGrid::vector_gradient`]: node-major vector with
    /// entries `sum_c d_c^T P[.][a][c]`.
    pub fn vector_gradient_transpose(&self, p: &[Mat3]) -> Vec<f64> {
        let dim = self.dim();
        let nn = self.n_nodes();
        let mut out = vec![0.0; nn * dim];
        for a in 0..dim {
            let g: Vec<Vec<f64>> = (0..dim)
                .map(|c| p.iter().map(|m| m[a][c]).collect())
                .collect();
            let r = self.gradient_transpose(&g);
            for q in 0..nn {
                out[q * dim + a] = r[q];
            }
        }
        out
    }

    /// Nonzero entries of the gradient operator at node `q`.
    pub fn stencil(&self, q: usize) -> Stencil {
        let (dim, nx, ny, n) = (self.dim(), self.nx(), self.ny(), self.profile.n());
        let (j, k) = (q % nx, q / nx);
        let h = self.profile.samples()[j];
        let s = self.heights.nodes()[k];
        let dx = self.profile.fourier().matrix();
        let ds = self.heights.diff();
        let mut st: Stencil = Vec::with_capacity((dim - 1) * n + ny);
        let mut own = [0.0; 3];
        for c in 0..dim - 1 {
            let (pos, stride) = if c == 0 { (j % n, 1) } else { (j / n, n) };
            let base = j - pos * stride;
            for m in 0..n {
                let v = dx[pos * n + m];
                if m == pos {
                    own[c] += v;
                    continue;
                }
                let mut coef = [0.0; 3];
                coef[c] = v;
                st.push((k * nx + base + m * stride, coef));
            }
        }
        let grad = self.profile.gradient(j);
        for m in 0..ny {
            let v = ds[k * ny + m];
            let mut coef = [0.0; 3];
            for c in 0..dim - 1 {
                coef[c] = -s * grad[c] / h * v;
            }
            coef[dim - 1] = v / h;
            if m == k {
                for c in 0..dim {
                    coef[c] += own[c];
                }
            }
            st.push((m * nx + j, coef));
        }
        st
    }

    /// Applies [`FilmGrid::gradient`] to each entry of a nodal matrix field.
    pub fn matrix_field_gradient(&self, f: &[Mat3]) -> Vec<[Mat3; 3]> {
        let dim = self.dim();
        let nn = self.n_nodes();
        let mut out = vec![[ZERO; 3]; nn];
        for a in 0..dim {
            for b in 0..dim {
                let comp: Vec<f64> = f.iter().map(|m| m[a][b]).collect();
                let g = self.gradient(&comp);
                for (c, gc) in g.iter().enumerate() {
                    for q in 0..nn {
                        out[q][c][a][b] = gc[q];
                    }
                }
            }
        }
        out
    }

    /// Column `j` of a nodal scalar field, from substrate to surface.
    pub fn column(&self, f: &[f64], j: usize) -> Vec<f64> {
        (0..self.ny()).map(|k| f[k * self.nx() + j]).collect()
    }

    /// `int_{Omega_h} f`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}
