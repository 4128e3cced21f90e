//! Cross-module properties on randomly generated surfaces and radii.

use std::f64::consts::{FRAC_PI_3, PI};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use circleflow::circlegeom::intersection_angle;
use circleflow::conditions::{attainability, check_c1, AttainabilityOptions, CurvatureTarget};
use circleflow::curvature::{curvature_map, r_to_u, AngleAssignment, RadiusVector};
use circleflow::io::{parse_solution, write_solution};
use circleflow::layout::develop;
use circleflow::mesh::builders;
use circleflow::solver::{integrate_flow, newton_solve, FlowSpec, NewtonSpec, SolveReport, StepControl};
use circleflow::{Geometry, TriangulatedSurface};

fn surface(kind: usize, a: usize, b: usize, seed: u64) -> TriangulatedSurface {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flips: Vec<bool> = (0..64).map(|_| rng.gen()).collect();
    let flip = |r: usize, c: usize| flips[(r * 5 + c) % 64];
    match kind {
        0 => builders::fan(a + 2),
        1 => builders::grid_disk(a, b, flip),
        2 => builders::annulus_with(a + 1, b + 2, flip),
        3 => builders::torus_grid(a + 2, b + 2, flip),
        _ => builders::seven_vertex_torus_minus_face(),
    }
}

fn disk(kind: usize, a: usize, b: usize, seed: u64) -> TriangulatedSurface {
    surface(kind % 2, a, b, seed)
}

fn geometry(hyperbolic: bool) -> Geometry {
    if hyperbolic {
        Geometry::Hyperbolic
    } else {
        Geometry::Euclidean
    }
}

/// Θ ≤ π/3 on every edge, so every triangle satisfies (C1).
fn thetas(s: &TriangulatedSurface, seed: u64) -> AngleAssignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AngleAssignment::new(s, (0..s.edge_count()).map(|_| rng.gen_range(0.0..FRAC_PI_3)).collect()).unwrap()
}

fn radii(n: usize, seed: u64, spread: f64) -> RadiusVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RadiusVector::new((0..n).map(|_| rng.gen_range(-spread..spread).exp()).collect()).unwrap()
}

/// The curvature of `r_star` as an explicit target: attainable by construction.
fn realized_target(
    s: &TriangulatedSurface,
    theta: &AngleAssignment,
    r_star: &RadiusVector,
    g: Geometry,
) -> CurvatureTarget {
    let k = curvature_map(s, theta, r_star, g).unwrap().k;
    CurvatureTarget::explicit(s, g, k).unwrap()
}

fn newton(s: &TriangulatedSurface, theta: &AngleAssignment, target: &CurvatureTarget) -> SolveReport {
    let u0 = r_to_u(&RadiusVector::uniform(s.vertex_count(), 1.0).unwrap(), target.geometry());
    newton_solve(s, theta, &u0, target, &NewtonSpec::default()).unwrap()
}

fn residual(s: &TriangulatedSurface, theta: &AngleAssignment, r: &[f64], target: &CurvatureTarget) -> f64 {
    let k = curvature_map(s, theta, &RadiusVector::new(r.to_vec()).unwrap(), target.geometry())
        .unwrap()
        .k;
    k.iter().zip(target.k()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn subset_identity_on_random_meshes(
        kind in 0usize..5, a in 1usize..4, b in 1usize..4, seed in any::<u64>(), mask in any::<u64>(),
    ) {
        let s = surface(kind, a, b, seed);
        let n = s.vertex_count();
        let mut subset: Vec<usize> = (0..n).filter(|&v| mask >> (v % 64) & 1 == 1).collect();
        if subset.is_empty() {
            subset.push((mask % n as u64) as usize);
        }
        let an = s.analyze_subset(&subset).unwrap();
        prop_assert_eq!(an.identity_lhs(), an.identity_rhs());
        prop_assert_eq!(an.chi_boundary, -(an.open_arcs as i64));

        let all: Vec<usize> = (0..n).collect();
        let whole = s.analyze_subset(&all).unwrap();
        prop_assert!(whole.link_pairs.is_empty());
        prop_assert_eq!(whole.star_triangles.len(), s.triangle_count());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn realized_targets_are_attainable_and_solved(
        kind in 0usize..5, a in 1usize..4, b in 1usize..4, seed in any::<u64>(), hyperbolic in any::<bool>(),
    ) {
        let s = surface(kind, a, b, seed);
        let g = geometry(hyperbolic);
        let theta = thetas(&s, seed ^ 1);
        prop_assert!(check_c1(&s, &theta).is_empty());
        let r_star = radii(s.vertex_count(), seed ^ 2, 0.7);
        let target = realized_target(&s, &theta, &r_star, g);
        let report = attainability(&s, &theta, &target, &AttainabilityOptions::default()).unwrap();
        prop_assert!(report.attainable, "{:?}", report.violations.first());

        let sol = newton(&s, &theta, &target);
        prop_assert!(residual(&s, &theta, &sol.r, &target) <= 1e-10);
        match g {
            Geometry::Euclidean => {
                let scale = sol.r[0] / r_star.as_slice()[0];
                for (x, y) in sol.r.iter().zip(r_star.as_slice()) {
                    prop_assert!((x / (scale * y) - 1.0).abs() < 1e-7);
                }
            }
            Geometry::Hyperbolic => {
                prop_assert!(sol.u.iter().all(|&u| u < 0.0));
                for (x, y) in sol.r.iter().zip(r_star.as_slice()) {
                    prop_assert!((x / y - 1.0).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn newton_converges_iff_attainable(
        kind in 0usize..2, a in 1usize..4, b in 1usize..4, seed in any::<u64>(), hyperbolic in any::<bool>(),
    ) {
        let s = disk(kind, a, b, seed);
        let g = geometry(hyperbolic);
        let theta = thetas(&s, seed ^ 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        // Random boundary targets, attainable or not.
        let base = CurvatureTarget::zero(&s, g);
        let mut k = base.k().to_vec();
        let bv = s.boundary_vertices();
        let share = 2.0 * PI / bv.len() as f64;
        for &v in &bv {
            k[v] = share * rng.gen_range(0.7..1.3);
        }
        let total: f64 = k.iter().sum();
        if g == Geometry::Euclidean {
            for &v in &bv {
                k[v] += (2.0 * PI - total) / bv.len() as f64;
            }
        }
        let target = CurvatureTarget::explicit(&s, g, k).unwrap();
        let u0 = r_to_u(&RadiusVector::uniform(s.vertex_count(), 1.0).unwrap(), g);
        let report = attainability(&s, &theta, &target, &AttainabilityOptions::default()).unwrap();
        match newton_solve(&s, &theta, &u0, &target, &NewtonSpec::default()) {
            Ok(sol) => {
                prop_assert!(residual(&s, &theta, &sol.r, &target) <= 1e-10);
                prop_assert!(report.attainable);
            }
            Err(e) => prop_assert!(!report.attainable, "attainable target failed: {}", e),
        }
    }

    #[test]
    fn flow_and_newton_reach_the_same_point(
        kind in 0usize..5, a in 1usize..3, b in 1usize..3, seed in any::<u64>(), hyperbolic in any::<bool>(),
    ) {
        let s = surface(kind, a, b, seed);
        let g = geometry(hyperbolic);
        let theta = thetas(&s, seed ^ 5);
        let target = realized_target(&s, &theta, &radii(s.vertex_count(), seed ^ 6, 0.5), g);
        let sol = newton(&s, &theta, &target);
        let mut spec = FlowSpec::new(target.clone());
        spec.tol = 1e-12;
        spec.track_energy = true;
        let r0 = RadiusVector::uniform(s.vertex_count(), 1.0).unwrap();
        let flow = integrate_flow(&s, &theta, &r0, &spec).unwrap();
        prop_assert!(residual(&s, &theta, &flow.r, &target) <= 1e-10);

        let energy = flow.energy_history.as_ref().unwrap();
        for w in energy.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "Φ rose from {} to {}", w[0], w[1]);
        }
        if g == Geometry::Hyperbolic {
            prop_assert!(flow.u.iter().all(|&u| u < 0.0));
        }

        let gauge = |u: &[f64]| -> Vec<f64> {
            let m = match g {
                Geometry::Euclidean => u.iter().sum::<f64>() / u.len() as f64,
                Geometry::Hyperbolic => 0.0,
            };
            u.iter().map(|x| x - m).collect()
        };
        for (x, y) in gauge(&flow.u).iter().zip(&gauge(&sol.u)) {
            prop_assert!((x - y).abs() <= 1e-8, "{} vs {}", x, y);
        }
    }

    #[test]
    fn normalized_flow_conserves_sum_of_u(
        kind in 0usize..5, a in 1usize..4, b in 1usize..4, seed in any::<u64>(),
    ) {
        let s = surface(kind, a, b, seed);
        let theta = thetas(&s, seed ^ 7);
        let mut spec = FlowSpec::normalized(&s, Geometry::Euclidean);
        spec.max_steps = 300;
        spec.step = StepControl { dt_max: 0.05, ..StepControl::default() };
        let r0 = radii(s.vertex_count(), seed ^ 8, 0.5);
        let report = match integrate_flow(&s, &theta, &r0, &spec) {
            Ok(r) => r,
            Err(e) => e.report().cloned().unwrap(),
        };
        let t = *report.times.last().unwrap();
        prop_assert!(report.sum_u_drift <= 1e-9 * t.max(1.0), "drift {} over t = {}", report.sum_u_drift, t);
        let u0: f64 = r_to_u(&r0, Geometry::Euclidean).as_slice().iter().sum();
        let u1: f64 = report.u.iter().sum();
        prop_assert!((u1 - u0).abs() <= 1e-9 * t.max(1.0));
    }

    #[test]
    fn layouts_reproduce_lengths_and_angles(
        kind in 0usize..2, a in 1usize..4, b in 1usize..4, seed in any::<u64>(), hyperbolic in any::<bool>(),
    ) {
        let s = disk(kind, a, b, seed);
        let g = geometry(hyperbolic);
        let theta = thetas(&s, seed ^ 9);
        // Move the interior curvature of a random metric onto the boundary.
        let r_star = radii(s.vertex_count(), seed ^ 10, 0.2);
        let mut k = curvature_map(&s, &theta, &r_star, g).unwrap().k;
        let bv = s.boundary_vertices();
        let interior: f64 = (0..s.vertex_count()).filter(|v| !s.is_boundary_vertex(*v)).map(|v| k[v]).sum();
        for (v, kv) in k.iter_mut().enumerate() {
            if s.is_boundary_vertex(v) {
                *kv += interior / bv.len() as f64;
            } else {
                *kv = 0.0;
            }
        }
        let target = CurvatureTarget::explicit(&s, g, k).unwrap();
        let check = attainability(&s, &theta, &target, &AttainabilityOptions::default()).unwrap();
        prop_assume!(check.attainable);
        let sol = newton(&s, &theta, &target);
        let r = RadiusVector::new(sol.r.clone()).unwrap();
        let pattern = develop(&s, &theta, &r, g).unwrap();
        for c in pattern.edge_checks(&s, &theta) {
            prop_assert!((c.distance - c.expected_length).abs() <= 1e-8 * (1.0 + c.expected_length));
            let (va, vb) = s.edges()[c.edge].vertices;
            let angle = intersection_angle(g, r.as_slice()[va], r.as_slice()[vb], c.distance).unwrap();
            prop_assert!((angle - c.theta).abs() <= 1e-6, "edge {}: {} vs {}", c.edge, angle, c.theta);
        }
        let again = develop(&s, &theta, &r, g).unwrap();
        prop_assert_eq!(
            pattern.centers.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect::<Vec<_>>(),
            again.centers.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect::<Vec<_>>()
        );
    }

    #[test]
    fn solution_files_round_trip(
        kind in 0usize..5, a in 1usize..3, b in 1usize..3, seed in any::<u64>(), hyperbolic in any::<bool>(),
    ) {
        let s = surface(kind, a, b, seed);
        let g = geometry(hyperbolic);
        let theta = thetas(&s, seed ^ 11);
        let target = realized_target(&s, &theta, &radii(s.vertex_count(), seed ^ 12, 0.5), g);
        let mut spec = FlowSpec::new(target);
        spec.step.dt_max = 0.05;
        let report = integrate_flow(&s, &theta, &RadiusVector::uniform(s.vertex_count(), 1.0).unwrap(), &spec).unwrap();
        let back = parse_solution(&write_solution(&report, spec.tol, None, None)).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-15 * x.abs().max(y.abs());
        let all_close = |xs: &[f64], ys: &[f64]| xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| close(*x, *y));
        prop_assert!(all_close(&report.r, &back.radii));
        prop_assert!(all_close(&report.u, &back.u));
        prop_assert!(all_close(&report.curvature, &back.curvatures));
        prop_assert!(all_close(&report.target, &back.target));
        prop_assert!(close(report.residual(), back.residual));
        prop_assert!(close(report.sum_u_drift, back.sum_u_drift));
        if let Some(fit) = report.fitted_rate {
            prop_assert!(close(fit.rate, back.fitted_rate.unwrap()));
        }
        if report.residual_history.len() <= circleflow::io::MAX_HISTORY_POINTS {
            prop_assert!(all_close(&report.residual_history, &back.history.residuals));
            prop_assert!(all_close(&report.times, &back.history.times));
        }
        prop_assert_eq!(back.iterations, report.iterations);
    }
}
