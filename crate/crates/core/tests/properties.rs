#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use filmstab::elasticity::{ElasticProblem, NewtonOptions};
use filmstab::flat::{CellMode, FlatSetup};
use filmstab::geometry::{surface_divergence, surface_integral, FourierMode, SurfaceGeometry};
use filmstab::linalg::Matrix;
use filmstab::polyident::{build_m, build_q, c_var, det, nu_power, nu_var, num_vars, Fp, Ring};
use filmstab::stability::{SecondVariation, SurfaceFunction};
use filmstab::tensor::Mat3;
use filmstab::{Anisotropy, DisplacementField, ElasticDensity, FilmGrid, Mismatch, Profile};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn anisotropy() -> impl Strategy<Value = Anisotropy> {
    prop_oneof![
        (0.2f64..5.0).prop_map(|gamma| Anisotropy::Isotropic { gamma }),
        (0.2f64..3.0, 0.2f64..3.0, 0.05f64..1.0).prop_map(|(a, b, t)| Anisotropy::Quadratic {
            a,
            b,
            epsilon: t * b / a
        }),
    ]
}

fn direction(dim: usize) -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("away from the origin", |v| {
            v.iter().map(|x| x * x).sum::<f64>() > 1e-2
        })
        .prop_map(move |mut v| {
            if dim == 2 {
                v[2] = 0.0;
            }
            v
        })
        .prop_filter("away from the origin", |v| {
            v.iter().map(|x| x * x).sum::<f64>() > 1e-2
        })
}

fn wavy(dim: usize, n: usize, a1: f64, a2: f64) -> Profile {
    let modes = if dim == 2 {
        vec![FourierMode::new(1, a1), FourierMode::new(2, a2)]
    } else {
        vec![
            FourierMode {
                mode: filmstab::geometry::ModeIndex::Pair([1, 0]),
                amplitude: a1,
                phase: 0.3,
            },
            FourierMode {
                mode: filmstab::geometry::ModeIndex::Pair([1, 1]),
                amplitude: a2,
                phase: 0.0,
            },
        ]
    };
    Profile::from_modes(dim, n, 1.0, 1.0, &modes).unwrap()
}

fn solved(profile: Profile, ny: usize, e0: f64) -> (ElasticProblem, DisplacementField) {
    let dim = profile.dim();
    let grid = FilmGrid::new(profile, ny).unwrap();
    let p = ElasticProblem::new(
        grid,
        ElasticDensity::linear_isotropic(2.0, 1.0).unwrap(),
        Mismatch::uniform(dim, e0),
    )
    .unwrap();
    let u = p.solve(None, NewtonOptions::default()).unwrap();
    (p, u)
}

fn trig(profile: &Profile, c: &[f64]) -> Vec<f64> {
    (0..profile.len())
        .map(|j| {
            let x = 2.0 * PI * profile.point(j)[0];
            c.iter()
                .enumerate()
                .map(|(k, ck)| ck * ((k + 1) as f64 * x + 0.7 * k as f64).cos())
                .sum::<f64>()
                + 0.3
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn euler_identity(psi in anisotropy(), dim in 2usize..4, v in prop::array::uniform3(-1.0f64..1.0)) {
        let mut z = v;
        if dim == 2 {
            z[2] = 0.0;
        }
        prop_assume!(z.iter().map(|x| x * x).sum::<f64>() > 1e-2);
        let g = psi.gradient(&z, dim).unwrap();
        let dot: f64 = (0..dim).map(|a| g[a] * z[a]).sum();
        let val = psi.value(&z, dim);
        prop_assert!((dot - val).abs() <= 1e-12 * val.abs().max(1.0), "{dot} vs {val}");
    }

    #[test]
    fn gradient_is_zero_homogeneous_and_hessian_symmetric(psi in anisotropy(), z in direction(3), t in prop::sample::select(vec![0.5, 2.0, 10.0])) {
        let g = psi.gradient(&z, 3).unwrap();
        let zt = [t * z[0], t * z[1], t * z[2]];
        let gt = psi.gradient(&zt, 3).unwrap();
        let h: Mat3 = psi.hessian(&z, 3).unwrap();
        let scale = h.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for a in 0..3 {
            prop_assert!((g[a] - gt[a]).abs() < 1e-12 * g[a].abs().max(1.0));
            let hz: f64 = (0..3).map(|c| h[a][c] * z[c]).sum();
            prop_assert!(hz.abs() < 1e-10 * scale);
            for c in 0..3 {
                prop_assert!((h[a][c] - h[c][a]).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn divergence_formula_on_periodic_graphs(a1 in -0.2f64..0.2, a2 in -0.05f64..0.05, c in prop::array::uniform3(-1.0f64..1.0)) {
        let p = wavy(2, 96, a1, a2);
        let g = SurfaceGeometry::new(&p);
        let x: Vec<[f64; 3]> = (0..p.len())
            .map(|j| {
                let t = 2.0 * PI * p.point(j)[0];
                [c[0] * t.sin() + c[1], c[2] * (2.0 * t).cos() + 0.5 * c[0], 0.0]
            })
            .collect();
        let lhs = surface_integral(&p, &g, &surface_divergence(&p, &g, &x));
        let hn: Vec<f64> = (0..p.len())
            .map(|j| g.mean_curvature[j] * (x[j][0] * g.normal[j][0] + x[j][1] * g.normal[j][1]))
            .collect();
        let rhs = surface_integral(&p, &g, &hn);
        prop_assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn residual_is_the_energy_gradient(lambda in 0.5f64..4.0, mu in 0.3f64..2.0, amp in 0.0f64..0.15, e0 in -0.1f64..0.1, seed in any::<u64>()) {
        use rand::Rng;
        let grid = FilmGrid::new(wavy(2, 12, amp, 0.2 * amp), 8).unwrap();
        let p = ElasticProblem::new(grid, ElasticDensity::nonlinear(mu, lambda).unwrap(), Mismatch::uniform(2, 1.0 + e0)).unwrap();
        let off = p.dof_offset();
        let mut w = p.initial_guess();
        for q in off / 2..p.grid().n_nodes() {
            let [x, y, _] = p.grid().coords(q);
            w[2 * q] += 0.02 * y * (2.0 * PI * x).sin();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..w.len()).map(|i| if i < off { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        let r = p.residual(&w).unwrap();
        let exact: f64 = r.iter().zip(&v[off..]).map(|(a, b)| a * b).sum();
        let f = |s: f64| {
            let ws: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            p.energy(&ws).unwrap()
        };
        let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
        let fd = (4.0 * d(5e-5) - d(1e-4)) / 3.0;
        prop_assert!((fd - exact).abs() < 1e-6 * exact.abs().max(1e-3), "{fd} vs {exact}");
    }

    #[test]
    fn stiffness_matches_second_differences(amp in 0.0f64..0.15, seed in any::<u64>()) {
        use rand::Rng;
        let grid = FilmGrid::new(wavy(2, 12, amp, 0.0), 8).unwrap();
        let p = ElasticProblem::new(grid, ElasticDensity::nonlinear(1.0, 2.0).unwrap(), Mismatch::uniform(2, 1.03)).unwrap();
        let off = p.dof_offset();
        let w = p.initial_guess();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..w.len()).map(|i| if i < off { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        let k: Matrix = p.stiffness(&p.gradients(&w)).unwrap();
        let x = &v[off..];
        let exact: f64 = (0..x.len()).map(|i| x[i] * (0..x.len()).map(|j| k[(i, j)] * x[j]).sum::<f64>()).sum();
        let f = |s: f64| {
            let ws: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            p.energy(&ws).unwrap()
        };
        let h = 1e-4;
        let fd = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        prop_assert!((fd - exact).abs() < 1e-4 * exact.abs(), "{fd} vs {exact}");
    }

    #[test]
    fn second_variation_is_quadratic_and_forms_are_symmetric(
        psi in anisotropy(),
        amp in 0.0f64..0.08,
        e0 in 0.0f64..0.1,
        c in prop::collection::vec(-1.0f64..1.0, 3),
        d in prop::collection::vec(-1.0f64..1.0, 3),
        alpha in -3.0f64..3.0,
    ) {
        let (p, u) = solved(wavy(2, 16, amp, 0.2 * amp), 10, e0);
        let sv = SecondVariation::new(&p, &u, psi).unwrap();
        let phi = sv.zero_mean(trig(sv.profile(), &c)).samples;
        let theta = sv.zero_mean(trig(sv.profile(), &d)).samples;
        prop_assert!(sv.surface_integral(&phi).abs() < 1e-13);

        let q = sv.second_variation(&phi).unwrap().value;
        let scaled: Vec<f64> = phi.iter().map(|v| alpha * v).collect();
        let qa = sv.second_variation(&scaled).unwrap().value;
        prop_assert!((qa - alpha * alpha * q).abs() <= 1e-10 * (alpha * alpha * q).abs().max(1e-12));

        let s1 = sv.sim_inner_product(&phi, &theta);
        let s2 = sv.sim_inner_product(&theta, &phi);
        prop_assert!((s1 - s2).abs() <= 1e-12 * s1.abs().max(1.0));

        // (T phi, phi) >= 0 and (T phi, theta) = (T theta, phi) by polarisation.
        let t = |f: &[f64]| sv.elastic_term(f).unwrap();
        prop_assert!(t(&phi) >= 0.0);
        let plus: Vec<f64> = phi.iter().zip(&theta).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = phi.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let minus_rev: Vec<f64> = theta.iter().zip(&phi).map(|(a, b)| a - b).collect();
        let cross = 0.25 * (t(&plus) - t(&minus));
        let cross_rev = 0.25 * (t(&plus) - t(&minus_rev));
        prop_assert!((cross - cross_rev).abs() <= 1e-12 * t(&plus).max(1e-12));
    }

    #[test]
    fn flat_films_have_vanishing_a_and_positive_surface_product(
        psi in anisotropy(),
        e0 in -0.1f64..0.1,
        d in 0.1f64..50.0,
        cube in any::<bool>(),
    ) {
        let cell = if cube { CellMode::Cube } else { CellMode::Unit };
        let setup = FlatSetup::new(2, ElasticDensity::linear_isotropic(2.0, 1.0).unwrap(), psi, Mismatch::uniform(2, e0), 12, 16, cell).unwrap();
        // second_variation asserts that a vanishes before zeroing it.
        let sv = setup.second_variation(d).unwrap();
        prop_assert!(sv.sim_gram_min().unwrap() > 0.0);
        let l = sv.lambda1().unwrap().value;
        prop_assert!(l >= 0.0);
    }

    #[test]
    fn determinant_is_multiplicative_and_alternating(seed in any::<u64>(), i in 0usize..4, j in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = || -> Vec<Vec<Fp>> { (0..4).map(|_| (0..4).map(|_| Fp::random(&mut rng)).collect()).collect() };
        let (a, b) = (m(), m());
        let ab: Vec<Vec<Fp>> = (0..4)
            .map(|r| (0..4).map(|c| (0..4).fold(Fp::zero(), |s, k| s.add(&a[r][k].mul(&b[k][c])))).collect())
            .collect();
        prop_assert_eq!(det(&ab), det(&a).mul(&det(&b)));
        prop_assume!(i != j);
        let mut swapped = a.clone();
        swapped.swap(i, j);
        prop_assert_eq!(det(&swapped), det(&a).neg());
    }

    #[test]
    fn identity_holds_for_major_symmetric_tensors(seed in any::<u64>(), dim in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut point: Vec<Fp> = (0..num_vars(dim)).map(|_| Fp::random(&mut rng)).collect();
        for i in 0..dim {
            for j in 0..dim {
                for h in 0..dim {
                    for k in 0..dim {
                        point[c_var(dim, h, k, i, j)] = point[c_var(dim, i, j, h, k)];
                    }
                }
            }
        }
        let var = |i: usize| point[i];
        let dm = det(&build_m(dim, &var));
        let rhs = point[nu_var(dim - 1)].pow(nu_power(dim) as u64).mul(&det(&build_q(dim, &var)));
        prop_assert_eq!(dm, rhs);
    }
}

/// Eigenpair of the pencil satisfies `K_T c = lambda S c`, and the nodal
/// forms reproduce it against every basis function.
#[test]
fn eigen_system_residual() {
    let (p, u) = solved(Profile::flat(2, 16, 1.0, 1.0).unwrap(), 12, 0.3);
    let sv = SecondVariation::new(
        &p,
        &u,
        Anisotropy::Quadratic {
            a: 1.0,
            b: 1.5,
            epsilon: 0.6,
        },
    )
    .unwrap();
    let l = sv.lambda1().unwrap();
    let (t, s) = (sv.t_matrix().unwrap(), sv.sim_gram().unwrap());
    let c = &l.coefficients;
    let m = c.len();
    let mut res = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..m {
        let tc: f64 = (0..m).map(|k| t[(i, k)] * c[k]).sum();
        let sc: f64 = (0..m).map(|k| s[(i, k)] * c[k]).sum();
        res = res.max((tc - l.value * sc).abs());
        scale = scale.max(tc.abs());
    }
    assert!(res < 1e-8 * scale, "{res} vs {scale}");

    let phi = &l.eigenfunction.samples;
    let basis = sv.basis().unwrap();
    let tphi = |theta: &[f64]| {
        let plus: Vec<f64> = phi.iter().zip(theta).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = phi.iter().zip(theta).map(|(a, b)| a - b).collect();
        0.25 * (sv.elastic_term(&plus).unwrap() - sv.elastic_term(&minus).unwrap())
    };
    let norm = sv.sim_inner_product(phi, phi).sqrt();
    for theta in &basis.functions {
        let lhs = tphi(theta);
        let rhs = l.value * sv.sim_inner_product(phi, theta);
        let tn = sv.sim_inner_product(theta, theta).sqrt();
        assert!(
            (lhs - rhs).abs() < 1e-8 * l.value * norm * tn,
            "{lhs} vs {rhs}"
        );
    }
}

/// Along directions where finite differences certify that the energy
/// increases, the second variation is not negative.
#[test]
fn necessity_consistency_at_a_stable_flat_film() {
    let (p, u) = solved(Profile::flat(2, 24, 1.0, 1.0).unwrap(), 16, 0.05);
    let psi = Anisotropy::isotropic();
    let sv = SecondVariation::new(&p, &u, psi).unwrap();
    assert_eq!(
        sv.report().unwrap().verdict,
        filmstab::stability::Verdict::StrictlyStable
    );
    let f0 = filmstab::stability::total_energy(&p, &u, &psi);
    for k in 1..=4 {
        for phase in [0.0, 0.9] {
            let phi: Vec<f64> = (0..sv.profile().len())
                .map(|j| (2.0 * PI * k as f64 * sv.profile().point(j)[0] + phase).cos())
                .collect();
            let phi = sv.zero_mean(phi).samples;
            let t = 1e-2;
            let up = filmstab::stability::perturbed_energy(
                &p,
                &u,
                &psi,
                &phi,
                t,
                NewtonOptions::default(),
            )
            .unwrap();
            let down = filmstab::stability::perturbed_energy(
                &p,
                &u,
                &psi,
                &phi,
                -t,
                NewtonOptions::default(),
            )
            .unwrap();
            if up >= f0 && down >= f0 {
                assert!(sv.second_variation(&phi).unwrap().value >= -1e-9);
            }
        }
    }
}

#[test]
fn projection_gives_zero_mean_on_curved_films() {
    let p = wavy(3, 12, 0.1, 0.05);
    let f = SurfaceFunction::projected((0..p.len()).map(|j| 1.0 + p.point(j)[0]).collect(), &p);
    let g = SurfaceGeometry::new(&p);
    assert!(f.zero_mean);
    assert!(surface_integral(&p, &g, &f.samples).abs() < 1e-14);
}
