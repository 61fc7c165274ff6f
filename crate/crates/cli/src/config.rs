use std::path::PathBuf;

use filmstab::elasticity::{ElasticProblem, NewtonOptions};
use filmstab::elasticity::{MaterialSpec, PeriodicMode};
use filmstab::flat::CellMode;
use filmstab::geometry::{FourierMode, ProfileSpec};
use filmstab::stability::StabilityOptions;
use filmstab::tensor::{Mat3, ZERO};
use filmstab::{Anisotropy, ElasticDensity, FilmGrid, Mismatch, Profile};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialSpec,
    #[serde(default)]
    pub anisotropy: Anisotropy,
    #[serde(default)]
    pub mismatch: MismatchConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub dim: usize,
    pub n: usize,
    pub ny: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<FourierMode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
    /// Stretching parameter of the vertical grid; chosen from the aspect
    /// ratio when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stretch: Option<f64>,
}

impl GeometryConfig {
    pub fn profile_spec(&self) -> ProfileSpec {
        ProfileSpec {
            dim: self.dim,
            n: self.n,
            period: self.period,
            samples: self.samples.clone(),
            mean: self.mean,
            modes: self.modes.clone(),
        }
    }
}

/// Either `e0` (shorthand for `A = e0 I`, or `(1 + e0) I` for the nonlinear
/// material) or the explicit matrix `a`, plus periodic modes `q`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q: Vec<PeriodicMode>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystallineConfig {
    pub a: f64,
    pub b: f64,
    /// Thickness at which the epsilon sweep is run.
    #[serde(default = "default_crystal_d")]
    pub d: f64,
    #[serde(default = "default_check_thicknesses")]
    pub check_thicknesses: Vec<f64>,
    /// Largest thickness probed for a critical thickness.
    #[serde(default = "default_search_limit")]
    pub search_limit: f64,
    #[serde(default = "default_crystal_cell")]
    pub cell: CellMode,
}

fn default_crystal_cell() -> CellMode {
    CellMode::Unit
}

fn default_crystal_d() -> f64 {
    100.0
}

fn default_check_thicknesses() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}

fn default_search_limit() -> f64 {
    1000.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub criticality_factor: f64,
    pub lanczos_steps: usize,
    pub lanczos_tol: f64,
    pub dispersion_kmax: Option<i64>,
    pub fd_step: Option<f64>,
    pub richardson: bool,
    pub oracle_modes: Vec<i64>,
    pub oracle_rel_tol: f64,
    pub cell: CellMode,
    pub bracket: [f64; 2],
    pub thicknesses: Option<Vec<f64>>,
    pub crystalline: Option<CrystallineConfig>,
    pub seed: u64,
    /// Random evaluation points for verify-identity.
    pub trials: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-11,
            newton_max_iter: 50,
            criticality_factor: 1e-6,
            lanczos_steps: 400,
            lanczos_tol: 1e-10,
            dispersion_kmax: None,
            fd_step: None,
            richardson: true,
            oracle_modes: vec![1, 2, 3],
            oracle_rel_tol: 1e-3,
            cell: CellMode::Cube,
            bracket: [1.0, 1e4],
            thicknesses: None,
            crystalline: None,
            seed: 0,
            trials: 40,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write the displacement at every grid node (critical-point).
    pub dump_field: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("filmstab-out"),
            dump_field: false,
        }
    }
}

/// Parses a configuration, reporting the path of the offending field.
pub fn parse(text: &str) -> Result<RunConfig, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        format!("{path}: {}", e.inner())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name}: must be positive, got {v}"))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        let g = &self.geometry;
        if !(g.dim == 2 || g.dim == 3) {
            return Err(format!("geometry.dim: must be 2 or 3, got {}", g.dim));
        }
        if g.n < 8 {
            return Err(format!("geometry.n: must be at least 8, got {}", g.n));
        }
        if g.ny < 4 {
            return Err(format!("geometry.ny: must be at least 4, got {}", g.ny));
        }
        if let Some(p) = g.period {
            positive("geometry.period", p)?;
        }
        if let Some(b) = g.stretch {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(format!("geometry.stretch: must be non-negative, got {b}"));
            }
        }
        let a = &self.analysis;
        positive("analysis.newton_tol", a.newton_tol)?;
        positive("analysis.criticality_factor", a.criticality_factor)?;
        positive("analysis.lanczos_tol", a.lanczos_tol)?;
        positive("analysis.oracle_rel_tol", a.oracle_rel_tol)?;
        if let Some(t) = a.fd_step {
            positive("analysis.fd_step", t)?;
        }
        if a.newton_max_iter == 0 {
            return Err("analysis.newton_max_iter: must be positive".into());
        }
        if a.trials == 0 {
            return Err("analysis.trials: must be positive".into());
        }
        if let Some(k) = a.dispersion_kmax {
            if k < 1 || 2 * k >= g.n as i64 {
                return Err(format!(
                    "analysis.dispersion_kmax: must lie in 1..{}, got {k}",
                    g.n / 2
                ));
            }
        }
        for (i, k) in a.oracle_modes.iter().enumerate() {
            if *k < 1 || 2 * k >= g.n as i64 {
                return Err(format!(
                    "analysis.oracle_modes[{i}]: must lie in 1..{}, got {k}",
                    g.n / 2
                ));
            }
        }
        if a.lanczos_steps < 2 {
            return Err("analysis.lanczos_steps: must be at least 2".into());
        }
        positive("analysis.bracket[0]", a.bracket[0])?;
        if a.bracket[1] <= a.bracket[0] {
            return Err("analysis.bracket: upper end must exceed the lower end".into());
        }
        if let Some(ts) = &a.thicknesses {
            for (i, t) in ts.iter().enumerate() {
                positive(&format!("analysis.thicknesses[{i}]"), *t)?;
            }
        }
        if let Some(c) = &a.crystalline {
            positive("analysis.crystalline.a", c.a)?;
            positive("analysis.crystalline.b", c.b)?;
            positive("analysis.crystalline.d", c.d)?;
            positive("analysis.crystalline.search_limit", c.search_limit)?;
            for (i, t) in c.check_thicknesses.iter().enumerate() {
                positive(&format!("analysis.crystalline.check_thicknesses[{i}]"), *t)?;
            }
        }
        if self.mismatch.e0.is_some() && self.mismatch.a.is_some() {
            return Err("mismatch: give either `e0` or `a`, not both".into());
        }
        self.density()?;
        self.anisotropy
            .validate()
            .map_err(|e| format!("anisotropy: {e}"))?;
        self.mismatch()?;
        Ok(())
    }

    pub fn density(&self) -> Result<ElasticDensity, String> {
        ElasticDensity::from_spec(&self.material).map_err(|e| format!("material: {e}"))
    }

    pub fn mismatch(&self) -> Result<Mismatch, String> {
        let dim = self.geometry.dim;
        let nonlinear = matches!(self.material, MaterialSpec::NonlinearDefault { .. });
        let mut a: Mat3 = ZERO;
        match (&self.mismatch.e0, &self.mismatch.a) {
            (Some(e0), None) => {
                let d = if nonlinear { 1.0 + e0 } else { *e0 };
                for (i, row) in a.iter_mut().enumerate().take(dim - 1) {
                    row[i] = d;
                }
            }
            (None, Some(rows)) => {
                if rows.len() != dim - 1 || rows.iter().any(|r| r.len() != dim - 1) {
                    return Err(format!("mismatch.a: must be a {0}x{0} matrix", dim - 1));
                }
                for (i, r) in rows.iter().enumerate() {
                    for (j, v) in r.iter().enumerate() {
                        a[i][j] = *v;
                    }
                }
            }
            (None, None) if nonlinear => {
                for (i, row) in a.iter_mut().enumerate().take(dim - 1) {
                    row[i] = 1.0;
                }
            }
            _ => {}
        }
        Mismatch::new(dim, a, self.mismatch.q.clone()).map_err(|e| format!("mismatch: {e}"))
    }

    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.analysis.newton_tol,
            max_iter: self.analysis.newton_max_iter,
        }
    }

    pub fn stability_options(&self, seed: u64) -> StabilityOptions {
        StabilityOptions {
            criticality_factor: self.analysis.criticality_factor,
            lanczos_steps: self.analysis.lanczos_steps,
            lanczos_tol: self.analysis.lanczos_tol,
            seed,
            ..StabilityOptions::default()
        }
    }

    pub fn profile(&self) -> Result<Profile, String> {
        Profile::from_spec(&self.geometry.profile_spec()).map_err(|e| format!("geometry: {e}"))
    }

    pub fn problem(&self) -> Result<ElasticProblem, String> {
        let profile = self.profile()?;
        let grid = match self.geometry.stretch {
            Some(beta) => FilmGrid::with_stretch(profile, self.geometry.ny, beta),
            None => FilmGrid::new(profile, self.geometry.ny),
        }
        .map_err(|e| format!("geometry: {e}"))?;
        ElasticProblem::new(grid, self.density()?, self.mismatch()?)
            .map_err(|e| format!("material: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(material: &str, mismatch: &str) -> RunConfig {
        parse(&format!(
            r#"{{"geometry": {{"dim": 3, "n": 8, "ny": 4, "mean": 1.0}}, "material": {material}, "mismatch": {mismatch}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn mismatch_shorthand_depends_on_material() {
        let lin = r#"{"kind": "linear-isotropic", "lame_lambda": 2.0, "lame_mu": 1.0}"#;
        let nl = r#"{"kind": "nonlinear-default", "mu": 1.0, "lambda": 2.0}"#;
        let a = cfg(lin, r#"{"e0": 0.05}"#).mismatch().unwrap().a;
        assert_eq!((a[0][0], a[1][1], a[2][2], a[0][1]), (0.05, 0.05, 0.0, 0.0));
        let a = cfg(nl, r#"{"e0": 0.05}"#).mismatch().unwrap().a;
        assert_eq!((a[0][0], a[1][1], a[2][2]), (1.05, 1.05, 0.0));
        assert_eq!(cfg(nl, "{}").mismatch().unwrap().a[1][1], 1.0);
        assert_eq!(cfg(lin, "{}").mismatch().unwrap().a, ZERO);
        let a = cfg(lin, r#"{"a": [[0.1, 0.02], [0.02, -0.1]]}"#)
            .mismatch()
            .unwrap()
            .a;
        assert_eq!(a[0][1], 0.02);
    }

    #[test]
    fn conflicting_or_malformed_mismatch_is_rejected() {
        let text = |m: &str| {
            format!(
                r#"{{"geometry": {{"dim": 2, "n": 8, "ny": 4, "mean": 1.0}}, "material": {{"kind": "linear-isotropic", "lame_lambda": 2.0, "lame_mu": 1.0}}, "mismatch": {m}}}"#
            )
        };
        assert!(parse(&text(r#"{"e0": 0.1, "a": [[0.1]]}"#))
            .unwrap_err()
            .starts_with("mismatch"));
        assert!(parse(&text(r#"{"a": [[0.1, 0.0], [0.0, 0.1]]}"#))
            .unwrap_err()
            .starts_with("mismatch.a"));
        let e = parse(&text(
            r#"{"q": [{"component": 1, "mode": 1, "amplitude": 0.1}]}"#,
        ))
        .unwrap_err();
        assert!(e.starts_with("mismatch"), "{e}");
    }

    #[test]
    fn defaults_are_positive() {
        let a = AnalysisConfig::default();
        assert!(a.newton_tol > 0.0 && a.lanczos_tol > 0.0 && a.oracle_rel_tol > 0.0);
        assert_eq!(a.cell, CellMode::Cube);
        assert_eq!(a.trials, 40);
    }
}
