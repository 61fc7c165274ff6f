use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::spectral::{apply_along, FourierDiff};

/// Periodic film profile `h > 0` sampled on `n^(dim-1)` equispaced points
/// of the cell `[0, period)^(dim-1)`. Sample `j1 + n j2` sits at
/// `(j1, j2) * period / n`.
#[derive(Clone, Debug)]
pub struct Profile {
    dim: usize,
    n: usize,
    period: f64,
    samples: Vec<f64>,
    grad: Vec<[f64; 2]>,
    hess: Vec<[[f64; 2]; 2]>,
    fourier: FourierDiff,
}

/// One cosine mode `amplitude * cos(2 pi k . x / period + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub mode: ModeIndex,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeIndex {
    Single(i64),
    Pair([i64; 2]),
}

impl ModeIndex {
    pub fn as_pair(&self) -> [i64; 2] {
        match *self {
            ModeIndex::Single(k) => [k, 0],
            ModeIndex::Pair(k) => k,
        }
    }
}

impl FourierMode {
    pub fn new(k: i64, amplitude: f64) -> Self {
        Self {
            mode: ModeIndex::Single(k),
            amplitude,
            phase: 0.0,
        }
    }
}

/// Serialized profile: either explicit samples or a mean plus cosine modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub dim: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<FourierMode>>,
}

impl Profile {
    pub fn new(
        dim: usize,
        n: usize,
        period: f64,
        samples: Vec<f64>,
    ) -> Result<Self, GeometryError> {
        if dim != 2 && dim != 3 {
            return Err(GeometryError::InvalidProfile(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if n < 4 {
            return Err(GeometryError::InvalidProfile(format!(
                "need at least 4 samples per axis, got {n}"
            )));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(GeometryError::InvalidProfile(format!(
                "period must be positive, got {period}"
            )));
        }
        let nx = n.pow(dim as u32 - 1);
        if samples.len() != nx {
            return Err(GeometryError::InvalidProfile(format!(
                "expected {nx} samples, got {}",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidProfile(format!(
                "non-finite sample {bad}"
            )));
        }
        let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(GeometryError::InvalidProfile(format!(
                "profile must be positive, min = {min}"
            )));
        }
        let fourier = FourierDiff::new(n, period);
        let naxes = dim - 1;
        let strides = [1, n];
        let mut grad = vec![[0.0; 2]; nx];
        let mut hess = vec![[[0.0; 2]; 2]; nx];
        for a in 0..naxes {
            let da = apply_along(fourier.matrix(), n, &samples, strides[a]);
            for (g, v) in grad.iter_mut().zip(&da) {
                g[a] = *v;
            }
            for b in 0..naxes {
                let dab = apply_along(fourier.matrix(), n, &da, strides[b]);
                for (h, v) in hess.iter_mut().zip(&dab) {
                    h[a][b] = *v;
                }
            }
        }
        // Mixed partials commute exactly for the circulant operators up to
        // rounding; symmetrise so downstream tensors are exactly symmetric.
        if naxes == 2 {
            for h in hess.iter_mut() {
                let m = 0.5 * (h[0][1] + h[1][0]);
                h[0][1] = m;
                h[1][0] = m;
            }
        }
        Ok(Self {
            dim,
            n,
            period,
            samples,
            grad,
            hess,
            fourier,
        })
    }

    pub fn from_fn(
        dim: usize,
        n: usize,
        period: f64,
        f: impl Fn(&[f64; 2]) -> f64,
    ) -> Result<Self, GeometryError> {
        let nx = n.pow(dim as u32 - 1);
        let samples = (0..nx)
            .map(|j| {
                let x = Self::point_of(dim, n, period, j);
                f(&x)
            })
            .collect();
        Self::new(dim, n, period, samples)
    }

    pub fn flat(dim: usize, n: usize, period: f64, height: f64) -> Result<Self, GeometryError> {
        Self::from_fn(dim, n, period, |_| height)
    }

    pub fn from_modes(
        dim: usize,
        n: usize,
        period: f64,
        mean: f64,
        modes: &[FourierMode],
    ) -> Result<Self, GeometryError> {
        for m in modes {
            let k = m.mode.as_pair();
            if dim == 2 && k[1] != 0 {
                return Err(GeometryError::InvalidProfile(
                    "two-component mode in a 2D profile".into(),
                ));
            }
            if k[0].unsigned_abs() as usize * 2 >= n || k[1].unsigned_abs() as usize * 2 >= n {
                return Err(GeometryError::InvalidProfile(format!(
                    "mode {k:?} not resolved by n = {n}"
                )));
            }
        }
        Self::from_fn(dim, n, period, |x| {
            mean + modes
                .iter()
                .map(|m| {
                    let k = m.mode.as_pair();
                    let arg = 2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1]) / period;
                    m.amplitude * (arg + m.phase).cos()
                })
                .sum::<f64>()
        })
    }

    pub fn from_spec(spec: &ProfileSpec) -> Result<Self, GeometryError> {
        let period = spec.period.unwrap_or(1.0);
        match (&spec.samples, spec.mean, &spec.modes) {
            (Some(s), None, None) => Self::new(spec.dim, spec.n, period, s.clone()),
            (None, Some(mean), modes) => Self::from_modes(
                spec.dim,
                spec.n,
                period,
                mean,
                modes.as_deref().unwrap_or(&[]),
            ),
            _ => Err(GeometryError::InvalidProfile(
                "profile needs either `samples` or `mean` (with optional `modes`)".into(),
            )),
        }
    }

    pub fn to_spec(&self) -> ProfileSpec {
        ProfileSpec {
            dim: self.dim,
            n: self.n,
            period: Some(self.period),
            samples: Some(self.samples.clone()),
            mean: None,
            modes: None,
        }
    }

    fn point_of(dim: usize, n: usize, period: f64, j: usize) -> [f64; 2] {
        let dx = period / n as f64;
        if dim == 2 {
            [j as f64 * dx, 0.0]
        } else {
            [(j % n) as f64 * dx, (j / n) as f64 * dx]
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Samples per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of samples, `n^(dim-1)`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn point(&self, j: usize) -> [f64; 2] {
        Self::point_of(self.dim, self.n, self.period, j)
    }

    /// Spectral gradient at sample `j` (unused components are zero).
    pub fn gradient(&self, j: usize) -> [f64; 2] {
        self.grad[j]
    }

    pub fn hessian(&self, j: usize) -> [[f64; 2]; 2] {
        self.hess[j]
    }

    pub fn fourier(&self) -> &FourierDiff {
        &self.fourier
    }

    /// Area of one cell of the sampling lattice, `(period / n)^(dim-1)`.
    pub fn cell_measure(&self) -> f64 {
        (self.period / self.n as f64).powi(self.dim as i32 - 1)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Differentiates a periodic sampled function along horizontal axis `axis`.
    pub fn diff(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let stride = if axis == 0 { 1 } else { self.n };
        apply_along(self.fourier.matrix(), self.n, f, stride)
    }

    /// `h + t phi` as a new profile.
    pub fn perturbed(&self, phi: &[f64], t: f64) -> Result<Self, GeometryError> {
        assert_eq!(phi.len(), self.samples.len());
        let samples = self
            .samples
            .iter()
            .zip(phi)
            .map(|(h, p)| h + t * p)
            .collect();
        Self::new(self.dim, self.n, self.period, samples)
    }

    /// Trigonometric interpolant and its first two derivatives at an
    /// arbitrary point. The Nyquist content only enters the value.
    pub fn eval(&self, x: &[f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        eval_trig(self.dim, self.n, self.period, &self.samples, x)
    }
}

/// Evaluates the trigonometric interpolant of periodic samples `f` at `x`.
pub fn eval_trig(
    dim: usize,
    n: usize,
    period: f64,
    f: &[f64],
    x: &[f64; 2],
) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let w = 2.0 * PI / period;
    let half = n as i64 / 2;
    let nyq = n.is_multiple_of(2);
    let freqs: Vec<i64> = (0..n as i64)
        .map(|k| {
            if k > half || (k == half && nyq) {
                k - n as i64
            } else {
                k
            }
        })
        .collect();
    let is_nyq = |k: i64| nyq && k == -half;
    let (n1, n2) = if dim == 2 { (n, 1) } else { (n, n) };
    let mut val = 0.0;
    let mut grad = [0.0; 2];
    let mut hess = [[0.0; 2]; 2];
    let nx = f.len() as f64;
    for k2i in 0..n2 {
        let k2 = if dim == 2 { 0 } else { freqs[k2i] };
        for &k1 in freqs.iter().take(n1) {
            // coefficient c = (1/nx) sum f_j exp(-i w k . x_j)
            let (mut re, mut im) = (0.0, 0.0);
            for (j, fj) in f.iter().enumerate() {
                let (j1, j2) = if dim == 2 { (j, 0) } else { (j % n, j / n) };
                let th = -2.0 * PI * (k1 as f64 * j1 as f64 + k2 as f64 * j2 as f64) / n as f64;
                re += fj * th.cos();
                im += fj * th.sin();
            }
            re /= nx;
            im /= nx;
            let th = w * (k1 as f64 * x[0] + k2 as f64 * x[1]);
            let (c, s) = (th.cos(), th.sin());
            let real = re * c - im * s;
            let dreal = -re * s - im * c;
            val += real;
            if is_nyq(k1) || is_nyq(k2) {
                continue;
            }
            let kv = [w * k1 as f64, w * k2 as f64];
            for a in 0..dim - 1 {
                grad[a] += kv[a] * dreal;
                for b in 0..dim - 1 {
                    hess[a][b] -= kv[a] * kv[b] * real;
                }
            }
        }
    }
    (val, grad, hess)
}
