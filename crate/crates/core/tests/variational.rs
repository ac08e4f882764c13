//! Energy minimization, saddle search and λ₁ over several seeds.

use nalgebra::DMatrix;
use philap::boundary_laws::LawDescriptor;
use philap::convex_core::SolveOptions;
use philap::grid::{GridFunction, InteriorFunction};
use philap::phi_maps::PhiMap;
use philap::variational::{self, CriticalKind, PotentialField};
use philap::verify::{self, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pendulum(rng: &mut ChaCha8Rng, horizon: usize, dim: usize, b_mean: f64, alpha: f64) -> PotentialField {
    let mut b: Vec<f64> = (0..horizon).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let shift = b_mean - b.iter().sum::<f64>() / horizon as f64;
    b.iter_mut().for_each(|v| *v += shift);
    PotentialField::power_sin(
        alpha,
        b,
        (0..horizon).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        (0..dim).map(|_| rng.gen_range(0.2..2.0)).collect(),
    )
    .unwrap()
}

fn forcing(rng: &mut ChaCha8Rng, dim: usize, horizon: usize) -> InteriorFunction {
    InteriorFunction::from_flat(dim, horizon, (0..dim * horizon).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn minimum_energy_over_seeds_and_laws() {
    let phi = PhiMap::relativistic(1.0).unwrap();
    let laws = [LawDescriptor::Periodic {}, LawDescriptor::Neumann {}, LawDescriptor::Dirichlet {}, LawDescriptor::Mixed {}];
    for seed in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dim, horizon) = (1 + seed as usize % 3, 4 + seed as usize);
        let law = laws[seed as usize % laws.len()].build(dim, Some(horizon as f64 + 1.0)).unwrap();
        let field = pendulum(&mut rng, horizon, dim, -0.4, 1.0 + 0.25 * seed as f64);
        let h = forcing(&mut rng, dim, horizon);
        let r = variational::minimize_energy(&phi, &law, &field, &h, &SolveOptions::default()).unwrap();
        assert!(r.converged, "seed {seed}: {}", r.status);
        assert_eq!(r.kind, CriticalKind::Minimizer);
        let rep = verify::residual_report(&phi, &law, Problem::Potential { field: &field, h: &h }, &r.point, None);
        assert!(rep.passes(1e-10), "seed {seed}: {rep:?}");
        // no random feasible point does better
        for _ in 0..50 {
            let mut rows = vec![(0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<f64>>()];
            for _ in 0..=horizon {
                let prev = rows.last().unwrap().clone();
                rows.push(prev.iter().map(|v| v + rng.gen_range(-0.5..0.5) / dim as f64).collect());
            }
            let v = GridFunction::from_rows(&rows).unwrap();
            if let Ok(e) = variational::energy_value(&phi, &law, &field, &h, &v) {
                assert!(r.energy <= e + 1e-12, "seed {seed}: {e} < {}", r.energy);
            }
        }
    }
}

#[test]
fn saddle_points_over_seeds() {
    let phi = PhiMap::relativistic(1.0).unwrap();
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (dim, horizon) = (1 + seed as usize % 2, 5 + seed as usize);
        let desc = if seed % 2 == 0 {
            LawDescriptor::Periodic {}
        } else {
            LawDescriptor::SteklovDifference { p: 3.0, coeff: 1.0, sigma: None }
        };
        let law = desc.build(dim, Some(horizon as f64 + 1.0)).unwrap();
        let field = pendulum(&mut rng, horizon, dim, 0.6, 1.5);
        let h = forcing(&mut rng, dim, horizon);
        let r = variational::saddle_search(&phi, &law, &field, &h, &SolveOptions::default()).unwrap();
        assert!(r.converged, "seed {seed}: {}", r.status);
        let rep = verify::residual_report(&phi, &law, Problem::Potential { field: &field, h: &h }, &r.point, None);
        assert!(rep.interior_inf_norm <= 1e-8 && rep.boundary_residual <= 1e-8, "seed {seed}: {rep:?}");
        let w = r.witness.expect("witness");
        assert!(w.decreasing);
        assert!(r.reduced_curve.is_some());
    }
}

#[test]
fn periodic_potential_mean_is_folded() {
    let phi = PhiMap::p_relativistic(2.0, 1.0).unwrap();
    let two_pi = 2.0 * std::f64::consts::PI;
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (dim, horizon) = (2, 6 + seed as usize);
        let law = LawDescriptor::Periodic {}.build(dim, None).unwrap();
        let field = PotentialField::periodic_multi(
            (0..horizon).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            vec![1.0, 0.5],
            vec![two_pi, 3.0],
        )
        .unwrap();
        let mut h = forcing(&mut rng, dim, horizon);
        let mean = h.mean();
        for n in 1..=horizon {
            h.at_mut(n).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
        let r = variational::minimize_energy(&phi, &law, &field, &h, &SolveOptions::default()).unwrap();
        assert!(r.converged, "seed {seed}: {}", r.status);
        let m = r.point.mean();
        assert!((0.0..two_pi).contains(&m[0]) && (0.0..3.0).contains(&m[1]), "seed {seed}: {m:?}");
    }
}

/// `min Σ_k |Δw(k)|² / Σ_n |w(n)|²` for `N = 1` with the boundary pair in
/// the span of `basis`, by eliminating the boundary (Schur complement) and
/// taking the smallest eigenvalue.
fn subspace_lambda1(horizon: usize, basis: &[[f64; 2]]) -> f64 {
    let len = horizon + 2;
    let mut lap = DMatrix::<f64>::zeros(len, len);
    for k in 0..=horizon {
        for (i, j, s) in [(k, k, 1.0), (k + 1, k + 1, 1.0), (k, k + 1, -1.0), (k + 1, k, -1.0)] {
            lap[(i, j)] += s;
        }
    }
    // w = E (interior, c) with the boundary pair = Σ c_b basis_b
    let nb = basis.len();
    let mut e = DMatrix::<f64>::zeros(len, horizon + nb);
    for n in 1..=horizon {
        e[(n, n - 1)] = 1.0;
    }
    for (b, v) in basis.iter().enumerate() {
        e[(0, horizon + b)] = v[0];
        e[(horizon + 1, horizon + b)] = v[1];
    }
    let q = e.transpose() * lap * e;
    let s = if nb == 0 {
        q
    } else {
        let a = q.view((0, 0), (horizon, horizon)).into_owned();
        let b = q.view((0, horizon), (horizon, nb)).into_owned();
        let c = q.view((horizon, horizon), (nb, nb)).into_owned();
        a - &b * c.try_inverse().unwrap() * b.transpose()
    };
    s.symmetric_eigen().eigenvalues.min().max(0.0)
}

#[test]
fn lambda1_matches_schur_complement_oracle() {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let cases: [(LawDescriptor, Vec<[f64; 2]>); 4] = [
        (LawDescriptor::Dirichlet {}, vec![]),
        (LawDescriptor::Mixed {}, vec![[0.0, 1.0]]),
        (LawDescriptor::Antiperiodic {}, vec![[r, -r]]),
        (LawDescriptor::Periodic {}, vec![[r, r]]),
    ];
    for horizon in [2usize, 4, 7] {
        for (desc, basis) in &cases {
            let law = desc.build(1, None).unwrap();
            let est = variational::lambda1_estimate(1.0, &law, horizon, 1, &SolveOptions::default()).unwrap();
            let oracle = subspace_lambda1(horizon, basis);
            assert!((est.value - oracle).abs() <= 1e-7, "{desc:?} T = {horizon}: {} vs {oracle}", est.value);
            assert!(est.value <= 2.0 + 1e-8);
        }
    }
}

#[test]
fn lambda1_bound_holds_on_minimizers() {
    // |u(m)| ≤ a(√((T+1)/(Tλ₁)) + T) for solutions under Dirichlet-type laws
    let phi = PhiMap::relativistic(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let horizon = 9;
    let law = LawDescriptor::Mixed {}.build(2, None).unwrap();
    let l1 = variational::lambda1_estimate(1.0, &law, horizon, 2, &SolveOptions::default()).unwrap();
    assert!(l1.value > 1e-3);
    // a stronger superlinear pull pins the minimizer within 1e-5 of |Δu| = a,
    // where the curvature of φ puts the attainable residual above 1e-10
    let field = pendulum(&mut rng, horizon, 2, 0.3, 1.0);
    let h = forcing(&mut rng, 2, horizon);
    let r = variational::minimize_energy(&phi, &law, &field, &h, &SolveOptions::default()).unwrap();
    assert!(r.converged, "{}", r.status);
    let rep = verify::residual_report(&phi, &law, Problem::Potential { field: &field, h: &h }, &r.point, Some(l1.value));
    assert!(rep.passes(1e-10), "{rep:?}");
    assert!(rep.estimates.iter().any(|e| e.name == "lambda1_bound"));
}
