use filmstab::elasticity::DisplacementField;
use filmstab::flat::{
    crystalline_epsilon0, solve_affine, CriticalThickness, FlatError, FlatSetup, ScalingCheck,
    ThicknessRow,
};
use filmstab::polyident::{verify_identity, IdentityReport};
use filmstab::stability::{
    dispersion, fd_oracle_second_variation, surface_energy, OracleOptions, SecondVariation,
    StabilityReport, SurfaceFunction, Verdict,
};
use filmstab::Anisotropy;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{Provenance, Sink};
use crate::CliError;

pub struct Context {
    pub config: Option<(RunConfig, Vec<u8>)>,
    pub seed: u64,
    pub sink: Sink,
}

impl Context {
    fn config(&self) -> Result<&RunConfig, CliError> {
        self.config
            .as_ref()
            .map(|c| &c.0)
            .ok_or_else(|| CliError::Config("--config is required".into()))
    }

    fn provenance(&self, command: &str) -> Result<Provenance, CliError> {
        let (cfg, bytes) = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("--config is required".into()))?;
        Ok(Provenance::new(
            command,
            Some((cfg, bytes)),
            self.seed,
            cfg.geometry.dim,
        ))
    }
}

fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn flat_setup(cfg: &RunConfig, seed: u64) -> Result<FlatSetup, CliError> {
    let mut setup = FlatSetup::new(
        cfg.geometry.dim,
        cfg.density().map_err(CliError::Config)?,
        cfg.anisotropy,
        cfg.mismatch().map_err(CliError::Config)?,
        cfg.geometry.n,
        cfg.geometry.ny,
        cfg.analysis.cell,
    )
    .map_err(|e| match e {
        FlatError::PeriodicDatum | FlatError::Invalid(_) => CliError::Config(e.to_string()),
        other => numerical(other),
    })?;
    setup.options = cfg.stability_options(seed);
    Ok(setup)
}

fn solve(
    cfg: &RunConfig,
) -> Result<(filmstab::elasticity::ElasticProblem, DisplacementField), CliError> {
    let problem = cfg.problem().map_err(CliError::Config)?;
    let u = problem.solve(None, cfg.newton()).map_err(numerical)?;
    Ok((problem, u))
}

#[derive(Serialize)]
struct CriticalPointSummary {
    elastic_energy: f64,
    surface_energy: f64,
    total_energy: f64,
    residual_norm: f64,
    iterations: usize,
    max_displacement: f64,
    /// Largest deviation from the affine flat-film solution, for flat
    /// profiles with a constant datum.
    affine_deviation: Option<f64>,
}

#[derive(Serialize)]
struct NodeRow {
    node: usize,
    x1: f64,
    x2: f64,
    y: f64,
    w1: f64,
    w2: f64,
    w3: f64,
}

pub fn critical_point(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let prov = ctx.provenance("critical-point")?;
    let (problem, u) = solve(cfg)?;
    let dim = problem.dim();
    let grid = problem.grid();
    let profile = grid.profile();
    let surface = surface_energy(profile, &cfg.anisotropy);
    let is_flat = profile.samples().iter().all(|&h| h == profile.samples()[0]);
    let affine_deviation = if is_flat && problem.mismatch().q.is_empty() {
        let flat = solve_affine(problem.density(), problem.mismatch(), dim).map_err(numerical)?;
        let mut dev = 0.0f64;
        for q in 0..grid.n_nodes() {
            let y = grid.coords(q)[dim - 1];
            for a in 0..dim {
                dev = dev.max((u.w[q * dim + a] - y * flat.slope[a]).abs());
            }
        }
        Some(dev)
    } else {
        None
    };
    let summary = CriticalPointSummary {
        elastic_energy: u.energy,
        surface_energy: surface,
        total_energy: u.energy + surface,
        residual_norm: u.residual_norm,
        iterations: u.iterations,
        max_displacement: u.w.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        affine_deviation,
    };
    let path = ctx.sink.json(&prov, &summary)?;
    if cfg.output.dump_field {
        let rows: Vec<NodeRow> = (0..grid.n_nodes())
            .map(|q| {
                let c = grid.coords(q);
                let mut w = [0.0; 3];
                w[..dim].copy_from_slice(&u.w[q * dim..(q + 1) * dim]);
                let (x2, y) = if dim == 2 { (0.0, c[1]) } else { (c[1], c[2]) };
                NodeRow {
                    node: q,
                    x1: c[0],
                    x2,
                    y,
                    w1: w[0],
                    w2: w[1],
                    w3: w[2],
                }
            })
            .collect();
        ctx.sink.csv("field.csv", &rows)?;
    }
    println!("elastic energy = {:.12e}", summary.elastic_energy);
    println!("total energy   = {:.12e}", summary.total_energy);
    println!(
        "residual       = {:.3e} after {} iterations",
        summary.residual_norm, summary.iterations
    );
    if let Some(d) = affine_deviation {
        println!("deviation from affine solution = {d:.3e}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct StabilitySummary {
    #[serde(flatten)]
    report: StabilityReport,
    is_critical: bool,
    criticality_threshold: f64,
    dispersion_kmax: i64,
}

#[derive(Serialize)]
struct DispersionRow {
    k: i64,
    second_variation: f64,
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::StrictlyStable => "strictly_stable",
        Verdict::NotStrictlyStable => "not_strictly_stable",
        Verdict::IndefiniteSimProduct => "indefinite_sim_product",
    }
}

pub fn stability(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let prov = ctx.provenance("stability")?;
    let (problem, u) = solve(cfg)?;
    let sv = SecondVariation::with_options(
        &problem,
        &u,
        cfg.anisotropy,
        cfg.stability_options(ctx.seed),
    )
    .map_err(numerical)?;
    let report = sv.report().map_err(numerical)?;
    let crit = sv.criticality();
    if !crit.is_critical() {
        eprintln!(
            "warning: profile is not critical (residual {:.3e} > {:.3e}); only the full form is meaningful",
            crit.residual, crit.threshold
        );
    }
    let kmax = cfg
        .analysis
        .dispersion_kmax
        .unwrap_or((cfg.geometry.n as i64 / 4).max(1));
    let rows: Vec<DispersionRow> = dispersion(&sv, kmax)
        .map_err(numerical)?
        .into_iter()
        .map(|(k, second_variation)| DispersionRow {
            k,
            second_variation,
        })
        .collect();
    let verdict = report.verdict;
    let summary = StabilitySummary {
        report,
        is_critical: crit.is_critical(),
        criticality_threshold: crit.threshold,
        dispersion_kmax: kmax,
    };
    let path = ctx.sink.json(&prov, &summary)?;
    ctx.sink.csv("dispersion.csv", &rows)?;
    let r = &summary.report;
    println!("c0             = {:.6e}", r.c0);
    println!("sim_gram_min   = {:.6e}", r.sim_gram_min);
    match r.lambda1 {
        Some(l) => println!("lambda1        = {l:.10e}"),
        None => println!("lambda1        = n/a"),
    }
    match (r.mu1, r.mu1_infeasible) {
        (Some(m), _) => println!("mu1            = {m:.10e}"),
        (None, true) => println!("mu1            = +inf (constraint vanishes identically)"),
        (None, false) => println!("mu1            = n/a"),
    }
    println!("verdict: {}", verdict_name(verdict));
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct FlatThresholdSummary {
    cell: filmstab::flat::CellMode,
    affine_slope: [f64; 3],
    critical: Option<CriticalThickness>,
    bracket_lambda: Option<[f64; 2]>,
    sweep: Vec<ThicknessRow>,
    /// Rows on the wrong side of `d_crit`.
    sweep_inconsistencies: usize,
    scaling: Vec<ScalingCheck>,
}

pub fn flat_threshold(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let prov = ctx.provenance("flat-threshold")?;
    let setup = flat_setup(cfg, ctx.seed)?;
    let affine = setup.affine().map_err(numerical)?;
    let [lo, hi] = cfg.analysis.bracket;
    let (critical, bracket_lambda) = match setup.critical_thickness(lo, hi) {
        Ok(c) => (Some(c), None),
        Err(FlatError::NoBracket {
            lambda_lo,
            lambda_hi,
            ..
        }) => (None, Some([lambda_lo, lambda_hi])),
        Err(e) => return Err(numerical(e)),
    };
    let thicknesses = match (&cfg.analysis.thicknesses, &critical) {
        (Some(t), _) => t.clone(),
        (None, Some(c)) => (-5..5)
            .map(|i| c.d_crit * 2f64.powf(i as f64 + 0.5))
            .collect(),
        (None, None) => (0..10)
            .map(|i| lo * (hi / lo).powf(i as f64 / 9.0))
            .collect(),
    };
    let sweep = setup.sweep(&thicknesses).map_err(numerical)?;
    let sweep_inconsistencies = match &critical {
        Some(c) => sweep
            .iter()
            .filter(|r| {
                (r.thickness < c.lo && r.lambda1 >= 1.0) || (r.thickness > c.hi && r.lambda1 <= 1.0)
            })
            .count(),
        None => 0,
    };
    let scaling = [0.5, 2.0]
        .iter()
        .map(|&d| setup.scaling_law_check(d))
        .collect::<Result<Vec<_>, _>>()
        .map_err(numerical)?;
    let summary = FlatThresholdSummary {
        cell: setup.cell,
        affine_slope: affine.slope,
        critical,
        bracket_lambda,
        sweep,
        sweep_inconsistencies,
        scaling,
    };
    let path = ctx.sink.json(&prov, &summary)?;
    ctx.sink.csv("thickness_sweep.csv", &summary.sweep)?;
    match (&summary.critical, summary.bracket_lambda) {
        (Some(c), _) => println!(
            "critical thickness d_crit = {:.6e} (bracket [{:.6e}, {:.6e}])",
            c.d_crit, c.lo, c.hi
        ),
        (None, Some([a, b])) => {
            println!("no critical thickness found in [{lo}, {hi}] (lambda1 = {a:.6e}, {b:.6e})")
        }
        _ => {}
    }
    for s in &summary.scaling {
        println!(
            "scaling d = {}: lambda1 = {:.6e}, d lambda1(1) = {:.6e}",
            s.d, s.lhs, s.rhs
        );
    }
    println!("wrote {}", path.display());
    let bad_scaling = summary.scaling.iter().filter(|s| !s.holds(1e-3)).count();
    if summary.sweep_inconsistencies > 0 || bad_scaling > 0 {
        return Err(CliError::Property(format!(
            "{} sweep rows on the wrong side of d_crit, {} scaling checks failed",
            summary.sweep_inconsistencies, bad_scaling
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckRow {
    thickness: f64,
    lambda1: f64,
    verdict: Verdict,
}

#[derive(Serialize)]
struct EpsilonRow {
    epsilon: f64,
    lambda1: f64,
}

#[derive(Serialize)]
struct CrystallineSummary {
    a: f64,
    b: f64,
    cell: filmstab::flat::CellMode,
    sweep_thickness: f64,
    eps0: f64,
    epsilon_used: f64,
    two_term_rel_diff: f64,
    /// `lambda1` with the isotropic energy `b |z|` at the sweep thickness.
    isotropic_lambda1: f64,
    checks: Vec<CheckRow>,
    search_limit: f64,
    critical: Option<CriticalThickness>,
}

pub fn crystalline(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let prov = ctx.provenance("crystalline")?;
    let cc = cfg.analysis.crystalline.clone().ok_or_else(|| {
        CliError::Config("analysis.crystalline: required by the crystalline command".into())
    })?;
    let setup = flat_setup(cfg, ctx.seed)?.with_cell(cc.cell);
    let found = crystalline_epsilon0(&setup, cc.d, cc.a, cc.b).map_err(numerical)?;
    let eps = 0.5 * found.eps0;
    let reg = setup.with_anisotropy(Anisotropy::Quadratic {
        a: cc.a,
        b: cc.b,
        epsilon: eps,
    });
    let isotropic_lambda1 = setup
        .with_anisotropy(Anisotropy::Isotropic { gamma: cc.b })
        .lambda1(cc.d)
        .map_err(numerical)?;
    let mut checks = Vec::new();
    for &d in &cc.check_thicknesses {
        let r = reg.report(d).map_err(numerical)?;
        checks.push(CheckRow {
            thickness: d,
            lambda1: r.lambda1.unwrap_or(f64::NAN),
            verdict: r.verdict,
        });
    }
    let lo = cc
        .check_thicknesses
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(cc.search_limit);
    let critical = if lo < cc.search_limit {
        match reg.critical_thickness(lo, cc.search_limit) {
            Ok(c) => Some(c),
            Err(FlatError::NoBracket {
                lambda_lo,
                lambda_hi,
                ..
            }) if lambda_lo < 1.0 && lambda_hi < 1.0 => None,
            Err(e) => return Err(numerical(e)),
        }
    } else {
        None
    };
    let summary = CrystallineSummary {
        a: cc.a,
        b: cc.b,
        cell: cc.cell,
        sweep_thickness: cc.d,
        eps0: found.eps0,
        epsilon_used: eps,
        two_term_rel_diff: found.two_term_rel_diff,
        isotropic_lambda1,
        checks,
        search_limit: cc.search_limit,
        critical,
    };
    let path = ctx.sink.json(&prov, &summary)?;
    let rows: Vec<EpsilonRow> = found
        .sweep
        .iter()
        .map(|&(epsilon, lambda1)| EpsilonRow { epsilon, lambda1 })
        .collect();
    ctx.sink.csv("epsilon_sweep.csv", &rows)?;
    println!(
        "isotropic lambda1 at d = {}: {:.6e}",
        cc.d, isotropic_lambda1
    );
    println!("eps0 = {:.6e}; using eps = {:.6e}", found.eps0, eps);
    println!(
        "two-term form relative difference = {:.3e}",
        found.two_term_rel_diff
    );
    for c in &summary.checks {
        println!(
            "d = {}: lambda1 = {:.6e}, verdict {}",
            c.thickness,
            c.lambda1,
            verdict_name(c.verdict)
        );
    }
    let mut problems = Vec::new();
    match &summary.critical {
        None => println!(
            "no critical thickness found up to d={}",
            summary.search_limit
        ),
        Some(c) => {
            println!("critical thickness d_crit = {:.6e}", c.d_crit);
            problems.push(format!(
                "critical thickness {:.6e} below {}",
                c.d_crit, summary.search_limit
            ));
        }
    }
    println!("wrote {}", path.display());
    let unstable = summary
        .checks
        .iter()
        .filter(|c| c.verdict != Verdict::StrictlyStable)
        .count();
    if unstable > 0 {
        problems.push(format!("{unstable} thicknesses not strictly stable"));
    }
    if summary.two_term_rel_diff >= 1e-8 {
        problems.push(format!(
            "two-term form differs by {:.3e}",
            summary.two_term_rel_diff
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Property(problems.join("; ")))
    }
}

#[derive(Serialize)]
struct IdentitySummary {
    #[serde(flatten)]
    report: IdentityReport,
}

pub fn verify_identity_cmd(
    ctx: &Context,
    dim: Option<usize>,
    trials: Option<usize>,
) -> Result<(), CliError> {
    let cfg = ctx.config.as_ref().map(|c| &c.0);
    let dim = dim.or(cfg.map(|c| c.geometry.dim)).unwrap_or(2);
    if !(dim == 2 || dim == 3) {
        return Err(CliError::Config(format!(
            "--dim: must be 2 or 3, got {dim}"
        )));
    }
    let trials = trials.or(cfg.map(|c| c.analysis.trials)).unwrap_or(40);
    if trials == 0 {
        return Err(CliError::Config("--trials: must be positive".into()));
    }
    let prov = Provenance::new(
        "verify-identity",
        ctx.config.as_ref().map(|(c, b)| (c, b.as_slice())),
        ctx.seed,
        dim,
    );
    let report = verify_identity(dim, trials, ctx.seed, None);
    let summary = IdentitySummary { report };
    let path = ctx.sink.json(&prov, &summary)?;
    let r = &summary.report;
    match &r.counterexample {
        Some(c) => {
            println!(
                "counterexample at trial {}: det M = {}, rhs = {}",
                c.trial, c.det_m, c.rhs
            );
            println!("wrote {}", path.display());
            return Err(CliError::Property("identity fails".into()));
        }
        None if r.symbolic_zero == Some(false) => {
            println!(
                "counterexample: symbolic defect has {} terms",
                r.symbolic_terms.unwrap_or(0)
            );
            println!("wrote {}", path.display());
            return Err(CliError::Property("identity fails".into()));
        }
        None => {}
    }
    if r.symbolic_zero == Some(true) {
        println!("verified (exact)");
    } else {
        let sign = match r.sign {
            Some(s) if s < 0 => "-",
            _ => "+",
        };
        println!(
            "verified (sign {sign}, {} random trials over F_p, p = 2^61 - 1)",
            r.trials
        );
    }
    println!(
        "degree {}; failure probability bound 10^{:.2}",
        r.degree, r.log10_failure_bound
    );
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct OracleRow {
    k: i64,
    analytic: f64,
    three_term: f64,
    fd: f64,
    rel_error: f64,
}

#[derive(Serialize)]
struct OracleSummary {
    is_critical: bool,
    fd_step: f64,
    rel_tol: f64,
    modes: Vec<OracleRow>,
    max_rel_error: f64,
}

pub fn oracle_check(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let prov = ctx.provenance("oracle-check")?;
    let (problem, u) = solve(cfg)?;
    let sv = SecondVariation::with_options(
        &problem,
        &u,
        cfg.anisotropy,
        cfg.stability_options(ctx.seed),
    )
    .map_err(numerical)?;
    let profile = sv.profile().clone();
    let t = cfg.analysis.fd_step.unwrap_or(1e-3 * profile.max());
    let opts = OracleOptions {
        t: Some(t),
        richardson: cfg.analysis.richardson,
        newton: cfg.newton(),
    };
    let mut modes = Vec::new();
    for &k in &cfg.analysis.oracle_modes {
        let phi = sv
            .zero_mean(SurfaceFunction::cosine(&profile, [k, 0]).samples)
            .samples;
        let analytic = sv.full_second_variation(&phi).map_err(numerical)?;
        let three_term = sv.second_variation(&phi).map_err(numerical)?.value;
        let fd = fd_oracle_second_variation(&problem, &u, &cfg.anisotropy, &phi, opts)
            .map_err(numerical)?;
        let rel_error = (analytic - fd).abs() / fd.abs().max(f64::MIN_POSITIVE);
        println!(
            "k = {k}: analytic = {analytic:.10e}, fd = {fd:.10e}, relative error = {rel_error:.3e}"
        );
        modes.push(OracleRow {
            k,
            analytic,
            three_term,
            fd,
            rel_error,
        });
    }
    let max_rel_error = modes.iter().fold(0.0f64, |m, r| m.max(r.rel_error));
    let summary = OracleSummary {
        is_critical: sv.criticality().is_critical(),
        fd_step: t,
        rel_tol: cfg.analysis.oracle_rel_tol,
        modes,
        max_rel_error,
    };
    let path = ctx.sink.json(&prov, &summary)?;
    println!(
        "max relative error = {max_rel_error:.3e} (tolerance {:.1e})",
        summary.rel_tol
    );
    println!("wrote {}", path.display());
    if max_rel_error > summary.rel_tol {
        return Err(CliError::Property(format!(
            "oracle mismatch: relative error {max_rel_error:.3e} exceeds {:.1e}",
            summary.rel_tol
        )));
    }
    Ok(())
}
