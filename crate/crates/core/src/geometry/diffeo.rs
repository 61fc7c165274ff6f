use super::{FilmGrid, GeometryError, Profile};

/// Smooth even cutoff: one on `|r| <= m0/4`, zero for `|r| >= m0/2`,
/// with `|rho'| <= 8 / m0`.
#[derive(Clone, Copy, Debug)]
pub struct Cutoff {
    m0: f64,
}

fn bump(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

fn dbump(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp() / (t * t)
    }
}

impl Cutoff {
    pub fn new(m0: f64) -> Self {
        assert!(m0 > 0.0);
        Self { m0 }
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    /// Smooth step from 0 (t <= 0) to 1 (t >= 1).
    fn step(t: f64) -> (f64, f64) {
        let (a, b) = (bump(t), bump(1.0 - t));
        let s = a + b;
        let v = a / s;
        let dv = (dbump(t) * b + a * dbump(1.0 - t)) / (s * s);
        (v, dv)
    }

    pub fn value(&self, r: f64) -> f64 {
        let q = self.m0 / 4.0;
        1.0 - Self::step((r.abs() - q) / q).0
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let q = self.m0 / 4.0;
        -Self::step((r.abs() - q) / q).1 / q * r.signum()
    }
}

/// `Phi_g(x, y) = (x, y + rho(y - h(x)) (g(x) - h(x)))`, mapping `Omega_h`
/// onto `Omega_g` and fixing a neighbourhood of the substrate.
#[derive(Clone, Debug)]
pub struct Diffeomorphism {
    h: Vec<f64>,
    diff: Vec<f64>,
    cutoff: Cutoff,
}

impl Diffeomorphism {
    /// `m0` defaults to `min h`. Guaranteed invertible when
    /// `max |g - h| < m0 / 8`; larger perturbations are accepted only if the
    /// Jacobian is verified positive along every column.
    pub fn new(h: &Profile, g: &Profile, m0: Option<f64>) -> Result<Self, GeometryError> {
        if h.len() != g.len() || h.dim() != g.dim() {
            return Err(GeometryError::InvalidProfile(
                "profiles sampled differently".into(),
            ));
        }
        let m0 = m0.unwrap_or_else(|| h.min());
        if !(m0 > 0.0 && m0 <= h.min()) {
            return Err(GeometryError::InvalidProfile(format!(
                "cutoff width {m0} must lie in (0, min h]"
            )));
        }
        let diff: Vec<f64> = g
            .samples()
            .iter()
            .zip(h.samples())
            .map(|(a, b)| a - b)
            .collect();
        let phi = Self {
            h: h.samples().to_vec(),
            diff,
            cutoff: Cutoff::new(m0),
        };
        let sup = phi.diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup >= m0 / 8.0 {
            for j in 0..phi.h.len() {
                let hj = phi.h[j];
                for i in 0..=400 {
                    let y = hj * i as f64 / 400.0;
                    if phi.jacobian(j, y) <= 0.0 {
                        return Err(GeometryError::NotDiffeomorphic {
                            sup,
                            bound: m0 / 8.0,
                        });
                    }
                }
            }
        }
        Ok(phi)
    }

    /// Image height of `(x_j, y)`.
    pub fn map(&self, j: usize, y: f64) -> f64 {
        y + self.cutoff.value(y - self.h[j]) * self.diff[j]
    }

    /// `det grad Phi` at `(x_j, y)`; the map is triangular so this is
    /// `d Phi_y / d y`.
    pub fn jacobian(&self, j: usize, y: f64) -> f64 {
        1.0 + self.cutoff.derivative(y - self.h[j]) * self.diff[j]
    }

    /// Preimage height: solves `map(j, y) = target`.
    pub fn inverse(&self, j: usize, target: f64) -> f64 {
        let (mut lo, mut hi) = (target.min(0.0), target + self.diff[j].abs());
        let mut y = target.clamp(lo, hi);
        for _ in 0..100 {
            let r = self.map(j, y) - target;
            if r.abs() <= 1e-15 * (1.0 + target.abs()) {
                break;
            }
            if r > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let step = y - r / self.jacobian(j, y);
            y = if step > lo && step < hi {
                step
            } else {
                0.5 * (lo + hi)
            };
        }
        y
    }

    /// `f o Phi` at the nodes of `h_grid`, where `f` is nodal on `g_grid`.
    pub fn pullback(&self, g_grid: &FilmGrid, h_grid: &FilmGrid, f: &[f64]) -> Vec<f64> {
        let (nx, ny) = (h_grid.nx(), h_grid.ny());
        let g = g_grid.profile().samples();
        let mut out = vec![0.0; nx * ny];
        for j in 0..nx {
            let col = g_grid.column(f, j);
            for k in 0..ny {
                let y = h_grid.heights().nodes()[k] * self.h[j];
                let s = (self.map(j, y) / g[j]).clamp(0.0, 1.0);
                out[k * nx + j] = g_grid.heights().interpolate(&col, s);
            }
        }
        out
    }

    /// `f o Phi^{-1}` at the nodes of `g_grid`, where `f` is nodal on `h_grid`.
    pub fn pushforward(&self, h_grid: &FilmGrid, g_grid: &FilmGrid, f: &[f64]) -> Vec<f64> {
        let (nx, ny) = (g_grid.nx(), g_grid.ny());
        let g = g_grid.profile().samples();
        let mut out = vec![0.0; nx * ny];
        for j in 0..nx {
            let col = h_grid.column(f, j);
            for k in 0..ny {
                let yg = g_grid.heights().nodes()[k] * g[j];
                let s = (self.inverse(j, yg) / self.h[j]).clamp(0.0, 1.0);
                out[k * nx + j] = h_grid.heights().interpolate(&col, s);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FourierMode;

    #[test]
    fn cutoff_shape_and_slope_bound() {
        let c = Cutoff::new(2.0);
        assert_eq!(c.value(0.0), 1.0);
        assert_eq!(c.value(0.5), 1.0);
        assert_eq!(c.value(-0.49), 1.0);
        assert_eq!(c.value(1.0), 0.0);
        assert_eq!(c.value(-1.5), 0.0);
        let mut max = 0.0f64;
        for i in 0..=2000 {
            let r = -1.2 + 2.4 * i as f64 / 2000.0;
            max = max.max(c.derivative(r).abs());
            let fd = (c.value(r + 1e-6) - c.value(r - 1e-6)) / 2e-6;
            assert!((fd - c.derivative(r)).abs() < 1e-5);
        }
        assert!(max <= 8.0 / 2.0 + 1e-12);
    }

    #[test]
    fn maps_boundaries_and_inverts() {
        let h = Profile::from_modes(2, 16, 1.0, 1.0, &[FourierMode::new(1, 0.1)]).unwrap();
        let g = Profile::from_modes(
            2,
            16,
            1.0,
            1.0,
            &[FourierMode::new(1, 0.1), FourierMode::new(2, 0.05)],
        )
        .unwrap();
        let phi = Diffeomorphism::new(&h, &g, None).unwrap();
        for j in 0..16 {
            assert!((phi.map(j, h.samples()[j]) - g.samples()[j]).abs() < 1e-15);
            assert_eq!(phi.map(j, 0.0), 0.0);
            for i in 0..10 {
                let y = h.samples()[j] * i as f64 / 9.0;
                let y2 = phi.inverse(j, phi.map(j, y));
                assert!((y - y2).abs() < 1e-13);
                assert!(phi.jacobian(j, y) > 0.0);
            }
        }
    }

    #[test]
    fn large_perturbation_detected() {
        let h = Profile::flat(2, 8, 1.0, 1.0).unwrap();
        let g = Profile::from_modes(2, 8, 1.0, 1.0, &[FourierMode::new(1, -0.9)]).unwrap();
        assert!(matches!(
            Diffeomorphism::new(&h, &g, None),
            Err(GeometryError::NotDiffeomorphic { .. })
        ));
    }

    #[test]
    fn pullback_and_pushforward_interpolate_smooth_fields() {
        let h = Profile::from_modes(2, 16, 1.0, 1.0, &[FourierMode::new(1, 0.1)]).unwrap();
        let g = h.perturbed(&[0.02; 16], 1.0).unwrap();
        let hg = FilmGrid::new(h.clone(), 20).unwrap();
        let gg = hg.like(g.clone()).unwrap();
        let phi = Diffeomorphism::new(&h, &g, None).unwrap();
        let f = |x: f64, y: f64| (1.3 * y).sin() * (2.0 * std::f64::consts::PI * x).cos();
        let on_g: Vec<f64> = (0..gg.n_nodes())
            .map(|q| f(gg.coords(q)[0], gg.coords(q)[1]))
            .collect();
        let back = phi.pullback(&gg, &hg, &on_g);
        let on_h: Vec<f64> = (0..hg.n_nodes())
            .map(|q| f(hg.coords(q)[0], hg.coords(q)[1]))
            .collect();
        let push = phi.pushforward(&hg, &gg, &on_h);
        for q in 0..hg.n_nodes() {
            let [x, y, _] = hg.coords(q);
            let j = q % hg.nx();
            assert!((back[q] - f(x, phi.map(j, y))).abs() < 1e-12);
            let [xg, yg, _] = gg.coords(q);
            assert!((push[q] - f(xg, phi.inverse(j, yg))).abs() < 1e-12);
        }
    }
}
