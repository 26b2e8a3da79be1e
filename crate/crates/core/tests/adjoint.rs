mod common;

use std::time::Instant;

use common::*;
use wavecip_core::adjoint::{adjoint_energy_monitor, solve_adjoint, DEFAULT_ENERGY_BOUND};
use wavecip_core::forward::{BcConfig, BoundaryCondition, ForwardProblem, SourceSpec, VolumeForcing};
use wavecip_core::{BoundaryTrace, CoefficientField, FieldRole, Role, Side, SideSet};

fn dot_product_defect(seed: u64, zero_start: bool) -> f64 {
    let g = unit_grid(32, 1.2);
    let mut rng = rng(seed);
    let eps = random_field(&g, Role::Epsilon, 1.0, 3.0, &mut rng);
    let sigma = random_field(&g, Role::Sigma, 1.0, 2.0, &mut rng);
    let mut u = random_spacetime(&g, FieldRole::State, &mut rng);
    if zero_start {
        u.snapshot_mut(0).iter_mut().for_each(|v| *v = 0.0);
    }
    let r = random_trace(&g, SideSet::ALL, &mut rng);
    let source = SourceSpec::silent();
    let bc = BcConfig::default();
    let e = ForwardProblem::new(&g, &eps, &sigma, source, bc)
        .with_forcing(VolumeForcing::Sampled(&u))
        .solve()
        .unwrap();
    let lambda = solve_adjoint(&g, &eps, &sigma, &r, &bc, &source).unwrap();
    let trace = BoundaryTrace::extract(&e, SideSet::ALL).unwrap();
    let lhs = trace.inner(&r).unwrap();
    let rhs = -spacetime_pairing(&u, &lambda);
    let scale = spacetime_pairing(&u, &u).sqrt() * r.l2_norm();
    (lhs - rhs).abs() / scale
}

#[test]
fn dot_product_identity_on_random_pairs() {
    let start = Instant::now();
    for seed in 0..10 {
        let d = dot_product_defect(seed, false);
        assert!(d <= 3e-2, "seed {seed}: defect {d}");
    }
    assert!(start.elapsed().as_secs() < 30);
}

#[test]
fn dot_product_identity_is_exact_for_forcing_vanishing_at_start() {
    for seed in 100..103 {
        let d = dot_product_defect(seed, true);
        assert!(d <= 1e-12, "seed {seed}: defect {d}");
    }
}

#[test]
fn linear_in_the_residual() {
    let g = unit_grid(20, 0.8);
    let mut rng = rng(7);
    let eps = random_field(&g, Role::Epsilon, 1.0, 3.0, &mut rng);
    let sigma = random_field(&g, Role::Sigma, 1.0, 2.0, &mut rng);
    let r1 = random_trace(&g, SideSet::ALL, &mut rng);
    let r2 = random_trace(&g, SideSet::ALL, &mut rng);
    let (a, b) = (0.7, -1.9);
    let mut combo = r1.scaled(a);
    for (c, v) in combo.as_mut_slice().iter_mut().zip(r2.as_slice()) {
        *c += b * v;
    }
    let (bc, src) = (BcConfig::default(), SourceSpec::default());
    let l1 = solve_adjoint(&g, &eps, &sigma, &r1, &bc, &src).unwrap();
    let l2 = solve_adjoint(&g, &eps, &sigma, &r2, &bc, &src).unwrap();
    let l = solve_adjoint(&g, &eps, &sigma, &combo, &bc, &src).unwrap();
    let scale = l.max_abs();
    for ((x, y), z) in l.as_slice().iter().zip(l1.as_slice()).zip(l2.as_slice()) {
        assert!((x - a * y - b * z).abs() <= 1e-12 * scale);
    }
}

#[test]
fn undamped_closed_box_adjoint_is_time_reversed_forward() {
    let g = unit_grid(24, 0.9);
    let mut rng = rng(11);
    let eps = random_field(&g, Role::Epsilon, 1.0, 3.0, &mut rng);
    let sigma = CoefficientField::constant(&g, Role::Sigma, 0.0);
    let r = random_trace(&g, SideSet::ALL, &mut rng);
    let bc = BcConfig::all(BoundaryCondition::NeumannZero);
    let src = SourceSpec::silent();
    let lambda = solve_adjoint(&g, &eps, &sigma, &r, &bc, &src).unwrap();

    let mut data = BoundaryTrace::zeros(&g, SideSet::ALL).unwrap();
    for n in 0..=g.nt {
        for s in Side::ALL {
            let rev = r.side(g.nt - n, s).unwrap().to_vec();
            for (d, v) in data.side_mut(n, s).unwrap().iter_mut().zip(rev) {
                *d = -v;
            }
        }
    }
    let e = ForwardProblem::new(&g, &eps, &sigma, src, bc)
        .with_neumann_data(&data)
        .solve()
        .unwrap();
    let scale = lambda.max_abs();
    for n in 0..=g.nt {
        for (a, b) in lambda.snapshot(g.nt - n).iter().zip(e.snapshot(n)) {
            assert!((a - b).abs() <= 1e-12 * scale, "level {n}");
        }
    }
}

fn test1_energy_ratio(n: usize) -> f64 {
    let g = unit_grid(n, 1.2);
    let setup = test1_setup(g);
    let obs = clean_obs(&setup);
    let eps = CoefficientField::constant(&g, Role::Epsilon, 1.0);
    let sigma = CoefficientField::constant(&g, Role::Sigma, 1.0);
    let sim = BoundaryTrace::extract(&setup.solve(&eps, &sigma).unwrap(), SideSet::ALL).unwrap();
    let r = sim.difference(&obs).unwrap();
    let lambda = solve_adjoint(&g, &eps, &sigma, &r, &setup.bc, &setup.source).unwrap();
    let report = adjoint_energy_monitor(&lambda, &eps, &sigma, &r, DEFAULT_ENERGY_BOUND);
    assert!(!report.unbounded && report.ratio.is_finite() && report.ratio > 0.0);
    report.ratio
}

#[test]
fn energy_ratio_is_refinement_stable() {
    let coarse = test1_energy_ratio(50);
    let fine = test1_energy_ratio(100);
    let change = (fine - coarse).abs() / coarse;
    assert!(change < 0.5, "ratio {coarse} -> {fine}");
}

#[test]
fn doubling_the_residual_quadruples_the_energy() {
    let g = unit_grid(16, 0.6);
    let mut rng = rng(3);
    let eps = random_field(&g, Role::Epsilon, 1.0, 3.0, &mut rng);
    let sigma = random_field(&g, Role::Sigma, 1.0, 2.0, &mut rng);
    let r = random_trace(&g, SideSet::ALL, &mut rng);
    let (bc, src) = (BcConfig::default(), SourceSpec::default());
    let e1 = adjoint_energy_monitor(
        &solve_adjoint(&g, &eps, &sigma, &r, &bc, &src).unwrap(),
        &eps,
        &sigma,
        &r,
        DEFAULT_ENERGY_BOUND,
    );
    let r2 = r.scaled(2.0);
    let e2 = adjoint_energy_monitor(
        &solve_adjoint(&g, &eps, &sigma, &r2, &bc, &src).unwrap(),
        &eps,
        &sigma,
        &r2,
        DEFAULT_ENERGY_BOUND,
    );
    for (a, b) in e1.energies.iter().zip(&e2.energies) {
        assert!((b - 4.0 * a).abs() <= 1e-10 * (4.0 * a).abs().max(f64::MIN_POSITIVE));
    }
    assert!((e2.ratio - e1.ratio).abs() <= 1e-10 * e1.ratio);
}

#[test]
fn partial_observation_drives_only_observed_sides() {
    let g = unit_grid(16, 0.6);
    let eps = CoefficientField::constant(&g, Role::Epsilon, 1.0);
    let sigma = CoefficientField::constant(&g, Role::Sigma, 1.0);
    let mut r = BoundaryTrace::zeros(&g, SideSet::from_sides(&[Side::Right])).unwrap();
    r.as_mut_slice().iter_mut().for_each(|v| *v = 1.0);
    let lambda = solve_adjoint(&g, &eps, &sigma, &r, &BcConfig::default(), &SourceSpec::default()).unwrap();
    let last = lambda.snapshot(g.nt - 1);
    let right = last[g.index(g.nx, g.ny / 2)];
    let left = last[g.index(0, g.ny / 2)];
    assert!(right != 0.0 && left == 0.0);
}
