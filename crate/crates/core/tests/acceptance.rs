//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use filmstab::elasticity::{ElasticProblem, NewtonOptions};
use filmstab::flat::{crystalline_epsilon0, CellMode, FlatError, FlatSetup};
use filmstab::geometry::FourierMode;
use filmstab::linalg::{symmetric_eigenvalues, Matrix};
use filmstab::polyident::{verify_identity, Mutation};
use filmstab::stability::{
    fd_oracle_second_variation, lemma_identity_defects, OracleOptions, SecondVariation,
    SurfaceFunction, Verdict,
};
use filmstab::{Anisotropy, DisplacementField, ElasticDensity, FilmGrid, Mismatch, Profile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn benchmark_density() -> ElasticDensity {
    ElasticDensity::linear_isotropic(2.0, 1.0).unwrap()
}

fn solved(
    profile: Profile,
    ny: usize,
    density: ElasticDensity,
    e0: f64,
) -> (ElasticProblem, DisplacementField) {
    let dim = profile.dim();
    let grid = FilmGrid::new(profile, ny).unwrap();
    let p = ElasticProblem::new(grid, density, Mismatch::uniform(dim, e0)).unwrap();
    let u = p.solve(None, NewtonOptions::default()).unwrap();
    (p, u)
}

fn flat_benchmark(n: usize, ny: usize, cell: CellMode) -> FlatSetup {
    FlatSetup::new(
        2,
        benchmark_density(),
        Anisotropy::isotropic(),
        Mismatch::uniform(2, 0.05),
        n,
        ny,
        cell,
    )
    .unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Second variation against finite differences of the energy.
fn criterion_1() -> Outcome {
    let (p, u) = solved(
        Profile::flat(2, 64, 1.0, 1.0).unwrap(),
        48,
        benchmark_density(),
        0.05,
    );
    let psi = Anisotropy::isotropic();
    let sv = SecondVariation::new(&p, &u, psi).map_err(err)?;
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    let mut detail = Vec::new();
    for k in 1..=3 {
        let start = Instant::now();
        let phi = sv
            .zero_mean(SurfaceFunction::cosine(sv.profile(), [k, 0]).samples)
            .samples;
        let analytic = sv.full_second_variation(&phi).map_err(err)?;
        let fd = fd_oracle_second_variation(&p, &u, &psi, &phi, OracleOptions::default())
            .map_err(err)?;
        let secs = start.elapsed().as_secs_f64();
        let rel = (analytic - fd).abs() / fd.abs();
        worst = worst.max(rel);
        slowest = slowest.max(secs);
        detail.push(format!("k={k}: rel {rel:.2e} in {secs:.1}s"));
    }
    check(worst < 1e-3 && slowest < 60.0, detail.join(", "))
}

/// Pure surface energy on the flat unit film.
fn criterion_2() -> Outcome {
    let (p, u) = solved(
        Profile::flat(2, 32, 1.0, 1.0).unwrap(),
        16,
        benchmark_density(),
        0.0,
    );
    let sv = SecondVariation::new(&p, &u, Anisotropy::isotropic()).map_err(err)?;
    let phi = SurfaceFunction::cosine(sv.profile(), [1, 0]).samples;
    let v = sv.second_variation(&phi).map_err(err)?.value;
    let expected = 2.0 * PI * PI;
    let rel = (v - expected).abs() / expected;
    check(
        rel < 1e-6,
        format!("d2F[cos 2 pi x] = {v:.12} vs 2 pi^2 = {expected:.12}, rel {rel:.2e}"),
    )
}

fn quad(m: &Matrix, c: &[f64]) -> f64 {
    (0..c.len())
        .map(|i| (0..c.len()).map(|k| c[i] * m[(i, k)] * c[k]).sum::<f64>())
        .sum()
}

/// Nodal evaluation of the form against `|phi|^2 - (T phi, phi)` in
/// coefficient space, on a flat and on a wavy film.
fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let profiles = [
        Profile::flat(2, 24, 1.0, 1.0).unwrap(),
        Profile::from_modes(
            2,
            24,
            1.0,
            1.0,
            &[FourierMode::new(1, 0.05), FourierMode::new(2, 0.01)],
        )
        .unwrap(),
    ];
    let mut worst = 0.0f64;
    let mut count = 0;
    for prof in profiles {
        let (p, u) = solved(prof, 16, benchmark_density(), 0.05);
        let sv = SecondVariation::new(
            &p,
            &u,
            Anisotropy::Quadratic {
                a: 1.0,
                b: 1.2,
                epsilon: 0.8,
            },
        )
        .map_err(err)?;
        let basis = sv.basis().map_err(err)?;
        let s = sv.sim_gram().map_err(err)?;
        let t = sv.t_matrix().map_err(err)?;
        for _ in 0..10 {
            let c: Vec<f64> = (0..basis.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let phi = basis.combine(&c);
            let mean = sv.surface_integral(&phi).abs();
            if mean > 1e-12 {
                return Err(format!("basis combination has mean {mean:e}"));
            }
            let nodal = sv.second_variation(&phi).map_err(err)?.value;
            let matrix = quad(s, &c) - quad(t, &c);
            worst = worst.max((nodal - matrix).abs() / nodal.abs());
            count += 1;
        }
    }
    check(
        worst < 1e-10,
        format!("{count} random zero-mean phi, max rel {worst:.2e}"),
    )
}

fn symmetry_and_psd(t: &Matrix) -> (f64, f64) {
    let n = t.nrows();
    let mut scale = 0.0f64;
    let mut asym = 0.0f64;
    for i in 0..n {
        for k in 0..n {
            scale = scale.max(t[(i, k)].abs());
            asym = asym.max((t[(i, k)] - t[(k, i)]).abs());
        }
    }
    let min_eig = symmetric_eigenvalues(t)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    (
        asym / scale.max(f64::MIN_POSITIVE),
        min_eig / scale.max(f64::MIN_POSITIVE),
    )
}

/// `lambda1 < 1` exactly when `mu1 > 1`, over thicknesses and mismatches.
fn criterion_4() -> Outcome {
    let mut disagreements = 0;
    let mut unstable = 0;
    let mut worst_asym = 0.0f64;
    let mut worst_neg = 0.0f64;
    for e0 in [0.02, 0.05, 0.1] {
        let setup = FlatSetup::new(
            2,
            benchmark_density(),
            Anisotropy::isotropic(),
            Mismatch::uniform(2, e0),
            16,
            32,
            CellMode::Cube,
        )
        .map_err(err)?;
        for d in [10.0, 300.0, 1000.0, 5000.0] {
            let sv = setup.second_variation(d).map_err(err)?;
            let l = sv.lambda1().map_err(err)?.value;
            let mu = sv.mu1().map_err(err)?.value;
            if (l - 1.0).signum() != -(mu - 1.0).signum() {
                disagreements += 1;
            }
            if l > 1.0 {
                unstable += 1;
            }
            let (asym, neg) = symmetry_and_psd(sv.t_matrix().map_err(err)?);
            worst_asym = worst_asym.max(asym);
            worst_neg = worst_neg.min(neg);
        }
    }
    check(
        disagreements == 0
            && worst_asym <= 1e-10
            && worst_neg >= -1e-10
            && unstable > 0
            && unstable < 12,
        format!(
            "12 configurations ({unstable} with lambda1 > 1), {disagreements} disagreements, \
             T asymmetry {worst_asym:.1e}, min eigenvalue {worst_neg:.1e} (relative)"
        ),
    )
}

/// Critical thickness, monotone regimes, blow-up of `mu1` and the scaling law.
fn criterion_5() -> Outcome {
    let setup = flat_benchmark(16, 32, CellMode::Cube);
    let crit = setup.critical_thickness(1.0, 1e4).map_err(err)?;
    let mut wrong_side = 0;
    for i in 0..10 {
        let d = crit.d_crit * 2f64.powf(i as f64 - 4.5);
        let l = setup.lambda1(d).map_err(err)?;
        if (d < crit.lo && l >= 1.0) || (d > crit.hi && l <= 1.0) {
            wrong_side += 1;
        }
    }
    let mut mu = Vec::new();
    let mut d = 100.0;
    for _ in 0..8 {
        mu.push(setup.row(d).map_err(err)?.mu1);
        d *= 0.5;
    }
    let increasing = mu.windows(2).all(|w| w[1] > w[0]);
    let unit = flat_benchmark(16, 32, CellMode::Unit);
    let scaling: Vec<_> = [0.5, 2.0]
        .iter()
        .map(|&d| unit.scaling_law_check(d))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let scaling_ok = scaling.iter().all(|s| s.holds(1e-3));
    check(
        wrong_side == 0 && increasing && scaling_ok,
        format!(
            "d_crit = {:.4} ({} evaluations), {wrong_side} sweep points on the wrong side, \
             mu1 {:.3e} -> {:.3e} over 7 halvings, scaling {}",
            crit.d_crit,
            crit.evaluations,
            mu[0],
            mu[mu.len() - 1],
            if scaling_ok { "holds" } else { "fails" }
        ),
    )
}

/// Regularised crystalline energy keeps the flat film stable.
fn criterion_6() -> Outcome {
    let (a, b) = (1e-4, 1e-4);
    let setup = flat_benchmark(16, 32, CellMode::Unit);
    let iso = setup
        .with_anisotropy(Anisotropy::Isotropic { gamma: b })
        .lambda1(100.0)
        .map_err(err)?;
    let found = crystalline_epsilon0(&setup, 100.0, a, b).map_err(err)?;
    let reg = setup.with_anisotropy(Anisotropy::Quadratic {
        a,
        b,
        epsilon: 0.5 * found.eps0,
    });
    let mut stable = true;
    let mut lambdas = Vec::new();
    for d in [1.0, 10.0, 100.0] {
        let r = reg.report(d).map_err(err)?;
        stable &= r.verdict == Verdict::StrictlyStable;
        lambdas.push(r.lambda1.unwrap_or(f64::NAN));
    }
    let no_threshold = matches!(
        reg.critical_thickness(1.0, 1000.0),
        Err(FlatError::NoBracket { lambda_lo, lambda_hi, .. }) if lambda_lo < 1.0 && lambda_hi < 1.0
    );
    check(
        stable && found.two_term_rel_diff < 1e-8 && no_threshold && iso > 1.0,
        format!(
            "isotropic lambda1 = {iso:.3}, eps0 = {:.4e}, lambda1(eps0/2) at d = 1, 10, 100: {:.4}, {:.4}, {:.4}; \
             two-term rel diff {:.1e}; no threshold up to d = 1000: {no_threshold}",
            found.eps0, lambdas[0], lambdas[1], lambdas[2], found.two_term_rel_diff
        ),
    )
}

/// Determinant identities: exact in 2D, randomized in 3D, mutations caught.
fn criterion_7() -> Outcome {
    let two = verify_identity(2, 1, 0, None);
    let three = verify_identity(3, 40, 7, None);
    let mut caught = true;
    for (_dim, m) in [
        (2, Mutation { row: 3, col: 1 }),
        (3, Mutation { row: 16, col: 8 }),
        (3, Mutation { row: 4, col: 4 }),
    ] {
        let r = verify_identity(_dim, 3, 11, Some(m));
        caught &= !r.verified && r.counterexample.as_ref().is_some_and(|c| c.trial < 3);
    }
    check(
        two.verified && two.symbolic_zero == Some(true) && three.verified && three.log10_failure_bound < -15.0 && caught,
        format!(
            "2D symbolic defect zero: {:?}; 3D 40 trials sign {:?}, log10 bound {:.1}; mutations caught: {caught}",
            two.symbolic_zero, three.sign, three.log10_failure_bound
        ),
    )
}

/// Refinement of `lambda1` and `c0`, and the discrete gradient check.
fn criterion_8() -> Outcome {
    let mut vals = Vec::new();
    for (n, ny) in [(16, 32), (32, 64)] {
        let (p, u) = solved(
            Profile::flat(2, n, 1.0, 1.0).unwrap(),
            ny,
            benchmark_density(),
            0.05,
        );
        let sv = SecondVariation::new(&p, &u, Anisotropy::isotropic()).map_err(err)?;
        vals.push((sv.lambda1().map_err(err)?.value, sv.coercivity_c0()));
    }
    let dl = (vals[0].0 - vals[1].0).abs() / vals[1].0;
    let dc = (vals[0].1 - vals[1].1).abs() / vals[1].1;

    // Energy against residual along a random direction, away from equilibrium.
    let prof = Profile::from_modes(2, 16, 1.0, 1.0, &[FourierMode::new(1, 0.1)]).unwrap();
    let grid = FilmGrid::new(prof, 10).unwrap();
    let p = ElasticProblem::new(
        grid,
        ElasticDensity::nonlinear(1.0, 2.0).unwrap(),
        Mismatch::uniform(2, 1.05),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let off = p.dof_offset();
    let mut w = p.initial_guess();
    let mut v = vec![0.0; w.len()];
    for q in off / 2..p.grid().n_nodes() {
        let [x, y, _] = p.grid().coords(q);
        w[2 * q] += 0.02 * y * (2.0 * PI * x).sin();
        w[2 * q + 1] += 0.01 * y * y * (4.0 * PI * x).cos();
    }
    for vi in v.iter_mut().skip(off) {
        *vi = rng.random_range(-1.0..1.0);
    }
    let r = p.residual(&w).map_err(err)?;
    let exact: f64 = r.iter().zip(&v[off..]).map(|(a, b)| a * b).sum();
    let shifted = |s: f64| -> Result<f64, String> {
        let ws: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + s * b).collect();
        p.energy(&ws).map_err(err)
    };
    let central = |h: f64| -> Result<f64, String> { Ok((shifted(h)? - shifted(-h)?) / (2.0 * h)) };
    let h = 1e-4;
    let fd = (4.0 * central(0.5 * h)? - central(h)?) / 3.0;
    let dg = (fd - exact).abs() / exact.abs();
    check(
        dl < 0.01 && dc < 0.01 && dg < 1e-6,
        format!(
            "lambda1 {:.6e} vs {:.6e} ({dl:.1e}), c0 {:.6} vs {:.6} ({dc:.1e}), gradient check {dg:.1e}",
            vals[0].0, vals[1].0, vals[0].1, vals[1].1
        ),
    )
}

/// First-order defects of the normal and curvature derivative identities.
fn criterion_9() -> Outcome {
    let prof = Profile::from_modes(
        2,
        64,
        1.0,
        1.0,
        &[FourierMode::new(1, 0.1), FourierMode::new(2, 0.03)],
    )
    .unwrap();
    let psi = Anisotropy::Quadratic {
        a: 1.0,
        b: 1.3,
        epsilon: 0.7,
    };
    let phi: Vec<f64> = (0..64)
        .map(|j| (2.0 * PI * prof.point(j)[0]).cos() + 0.2)
        .collect();
    let d1 = lemma_identity_defects(&prof, &psi, &phi, 1e-3).map_err(err)?;
    let d2 = lemma_identity_defects(&prof, &psi, &phi, 5e-4).map_err(err)?;
    let (rn, rc) = (d1.normal / d2.normal, d1.curvature / d2.curvature);
    check(
        (rn - 2.0).abs() < 0.4 && (rc - 2.0).abs() < 0.4,
        format!("halving ratios: normal {rn:.3}, curvature {rc:.3}"),
    )
}

#[test]
fn acceptance() {
    filmstab::linalg::set_threads(1);
    let criteria: [Criterion; 9] = [
        ("second variation matches finite differences", criterion_1),
        ("pure surface value", criterion_2),
        ("decomposition identity", criterion_3),
        ("criteria equivalence", criterion_4),
        ("flat-film regimes", criterion_5),
        ("crystalline suppression", criterion_6),
        ("determinant identities", criterion_7),
        ("discretization convergence", criterion_8),
        ("derivative identities are first order", criterion_9),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {}: PASS  {name} [{secs:.1}s] {d}", i + 1),
            Err(d) => {
                println!("criterion {}: FAIL  {name} [{secs:.1}s] {d}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
