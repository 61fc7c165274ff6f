//! Spectral building blocks: periodic Fourier differentiation, Chebyshev
//! collocation on `[0, 1]` with an optional exponential stretching, and
//! Clenshaw–Curtis quadrature.

use std::f64::consts::PI;

/// Dense Fourier differentiation matrix on `n` equispaced points of a
/// period `period`. For even `n` the Nyquist mode is differentiated to zero.
#[derive(Clone, Debug)]
pub struct FourierDiff {
    n: usize,
    period: f64,
    d1: Vec<f64>,
}

impl FourierDiff {
    pub fn new(n: usize, period: f64) -> Self {
        let mut d1 = vec![0.0; n * n];
        let scale = PI / period;
        for r in 0..n {
            for c in 0..n {
                if r == c {
                    continue;
                }
                let m = r as isize - c as isize;
                let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let t = PI * m as f64 / n as f64;
                d1[r * n + c] = if n.is_multiple_of(2) {
                    scale * sign / t.tan()
                } else {
                    scale * sign / t.sin()
                };
            }
        }
        Self { n, period, d1 }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Row-major `n x n` matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.d1
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.d1[r * self.n + c]
    }
}

/// Applies the row-major `len x len` matrix `mat` along the axis of `data`
/// with the given stride. `data.len()` must be a multiple of `len * stride`.
pub fn apply_along(mat: &[f64], len: usize, data: &[f64], stride: usize) -> Vec<f64> {
    let block = len * stride;
    assert_eq!(data.len() % block, 0, "data length incompatible with axis");
    let mut out = vec![0.0; data.len()];
    let mut line = vec![0.0; len];
    for outer in 0..data.len() / block {
        for inner in 0..stride {
            let base = outer * block + inner;
            for (c, v) in line.iter_mut().enumerate() {
                *v = data[base + c * stride];
            }
            for r in 0..len {
                let row = &mat[r * len..(r + 1) * len];
                out[base + r * stride] = row.iter().zip(&line).map(|(a, b)| a * b).sum();
            }
        }
    }
    out
}

/// Transpose of [`apply_along`].
pub fn apply_along_transposed(mat: &[f64], len: usize, data: &[f64], stride: usize) -> Vec<f64> {
    let block = len * stride;
    assert_eq!(data.len() % block, 0, "data length incompatible with axis");
    let mut out = vec![0.0; data.len()];
    for outer in 0..data.len() / block {
        for inner in 0..stride {
            let base = outer * block + inner;
            for r in 0..len {
                let v = data[base + r * stride];
                if v == 0.0 {
                    continue;
                }
                for c in 0..len {
                    out[base + c * stride] += mat[r * len + c] * v;
                }
            }
        }
    }
    out
}

/// Chebyshev–Gauss–Lobatto points mapped to `[0, 1]` (increasing), their
/// barycentric weights, differentiation matrix and Clenshaw–Curtis weights.
#[derive(Clone, Debug)]
pub struct Chebyshev {
    nodes: Vec<f64>,
    bary: Vec<f64>,
    diff: Vec<f64>,
    weights: Vec<f64>,
}

impl Chebyshev {
    pub fn new(npts: usize) -> Self {
        assert!(npts >= 2, "need at least two Chebyshev points");
        let m = npts - 1;
        let nodes: Vec<f64> = (0..npts)
            .map(|k| 0.5 * (1.0 - (PI * k as f64 / m as f64).cos()))
            .collect();
        let bary: Vec<f64> = (0..npts)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                if k == 0 || k == m {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let mut diff = vec![0.0; npts * npts];
        for i in 0..npts {
            let mut acc = 0.0;
            for j in 0..npts {
                if i != j {
                    let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    diff[i * npts + j] = v;
                    acc += v;
                }
            }
            diff[i * npts + i] = -acc;
        }
        let weights = clenshaw_curtis(m).into_iter().map(|w| 0.5 * w).collect();
        Self {
            nodes,
            bary,
            diff,
            weights,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn diff(&self) -> &[f64] {
        &self.diff
    }

    /// Barycentric interpolation of nodal `values` at `xi`.
    pub fn interpolate(&self, values: &[f64], xi: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&x, &w), &f) in self.nodes.iter().zip(&self.bary).zip(values) {
            let d = xi - x;
            if d == 0.0 {
                return f;
            }
            let t = w / d;
            num += t * f;
            den += t;
        }
        num / den
    }
}

/// Clenshaw–Curtis weights on `[-1, 1]` for the `m + 1` points `cos(pi k / m)`.
fn clenshaw_curtis(m: usize) -> Vec<f64> {
    let mut w = vec![0.0; m + 1];
    if m == 1 {
        return vec![1.0, 1.0];
    }
    let mf = m as f64;
    let mut v = vec![1.0; m - 1];
    let theta = |k: usize| PI * k as f64 / mf;
    if m.is_multiple_of(2) {
        w[0] = 1.0 / (mf * mf - 1.0);
        w[m] = w[0];
        for k in 1..m / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta(i + 1)).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= (mf * theta(i + 1)).cos() / (mf * mf - 1.0);
        }
    } else {
        w[0] = 1.0 / (mf * mf);
        w[m] = w[0];
        for k in 1..=(m - 1) / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta(i + 1)).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (i, vi) in v.iter().enumerate() {
        w[i + 1] = 2.0 * vi / mf;
    }
    w
}

/// Normalised height coordinate `s in [0, 1]` as a stretched image of a
/// Chebyshev grid in `xi`:
/// `s = 1 - (exp(beta (1 - xi)) - 1) / (exp(beta) - 1)`.
/// Positive `beta` clusters points near the free surface `s = 1`.
#[derive(Clone, Debug)]
pub struct HeightGrid {
    cheb: Chebyshev,
    beta: f64,
    s: Vec<f64>,
    ds: Vec<f64>,
    weights: Vec<f64>,
}

const BETA_EPS: f64 = 1e-9;

impl HeightGrid {
    pub fn new(npts: usize, beta: f64) -> Self {
        assert!(
            beta >= 0.0 && beta.is_finite(),
            "stretch parameter must be >= 0"
        );
        let cheb = Chebyshev::new(npts);
        let beta = if beta < BETA_EPS { 0.0 } else { beta };
        let s: Vec<f64> = cheb.nodes().iter().map(|&x| map_s(beta, x)).collect();
        let jac: Vec<f64> = cheb.nodes().iter().map(|&x| map_ds(beta, x)).collect();
        let mut ds = cheb.diff().to_vec();
        for i in 0..npts {
            for j in 0..npts {
                ds[i * npts + j] /= jac[i];
            }
        }
        let weights = cheb
            .weights()
            .iter()
            .zip(&jac)
            .map(|(w, j)| w * j)
            .collect();
        Self {
            cheb,
            beta,
            s,
            ds,
            weights,
        }
    }

    /// Stretch parameter for a layer of height `height` over a period
    /// `period`: zero for aspect ratio at most one, otherwise the root of
    /// `(exp(beta) - 1) / beta = height / period`, which keeps the cell
    /// size near the surface comparable to the period.
    pub fn auto_beta(height: f64, period: f64) -> f64 {
        let r = height / period;
        if r <= 1.0 {
            return 0.0;
        }
        let g = |b: f64| (b.exp() - 1.0) / b - r;
        let (mut lo, mut hi) = (1e-12, 1.0);
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nodes(&self) -> &[f64] {
        &self.s
    }

    /// Quadrature weights for `int_0^1 f(s) ds`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row-major differentiation matrix with respect to `s`.
    pub fn diff(&self) -> &[f64] {
        &self.ds
    }

    pub fn s_to_xi(&self, s: f64) -> f64 {
        if self.beta == 0.0 {
            s
        } else {
            1.0 - (1.0 + (1.0 - s) * self.beta.exp_m1()).ln() / self.beta
        }
    }

    /// Polynomial (in `xi`) interpolation of nodal `values` at height `s`.
    pub fn interpolate(&self, values: &[f64], s: f64) -> f64 {
        self.cheb.interpolate(values, self.s_to_xi(s))
    }
}

fn map_s(beta: f64, xi: f64) -> f64 {
    if beta == 0.0 {
        xi
    } else {
        1.0 - (beta * (1.0 - xi)).exp_m1() / beta.exp_m1()
    }
}

fn map_ds(beta: f64, xi: f64) -> f64 {
    if beta == 0.0 {
        1.0
    } else {
        beta * (beta * (1.0 - xi)).exp() / beta.exp_m1()
    }
}
