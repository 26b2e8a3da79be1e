mod common;

use common::*;
use wavecip_core::adjoint::solve_adjoint;
use wavecip_core::forward::WaveSetup;
use wavecip_core::gradient::{assemble_gradients, fd_gradient_oracle, relative_mismatch, FdContext};
use wavecip_core::objective::RegularizationParams;
use wavecip_core::{AdmissibleSet, BoundaryTrace, CoefficientField, Error, Grid2D, RegionMask, Role, SideSet};

/// Test-1 data, evaluated halfway between the flat initial guess and the truth.
struct Check {
    setup: WaveSetup,
    obs: BoundaryTrace,
    eps: CoefficientField,
    sigma: CoefficientField,
    reg: RegularizationParams,
    mask: RegionMask,
    adm: AdmissibleSet,
}

impl Check {
    fn new(n: usize, frame_width: usize) -> Self {
        let g = unit_grid(n, 1.2);
        let setup = test1_setup(g);
        let obs = clean_obs(&setup);
        let halfway = |f: CoefficientField| {
            let mut c = f.clone();
            c.values.iter_mut().for_each(|v| *v = 0.5 * (*v + 1.0));
            c
        };
        Self {
            setup,
            obs,
            eps: halfway(true_eps(&g)),
            sigma: halfway(true_sigma(&g)),
            reg: flat_reg(&g, 0.0),
            mask: RegionMask::new(&g, frame_width).unwrap(),
            adm: AdmissibleSet {
                sigma_min: 0.0,
                ..AdmissibleSet::default()
            },
        }
    }

    fn grid(&self) -> &Grid2D {
        &self.setup.grid
    }

    fn gradients(&self, gamma: f64) -> (CoefficientField, CoefficientField) {
        let e = self.setup.solve(&self.eps, &self.sigma).unwrap();
        let r = BoundaryTrace::extract(&e, SideSet::ALL).unwrap().difference(&self.obs).unwrap();
        let lambda = solve_adjoint(self.grid(), &self.eps, &self.sigma, &r, &self.setup.bc, &self.setup.source)
            .unwrap();
        assemble_gradients(&e, &lambda, &self.eps, &self.sigma, &self.reg, gamma, gamma, &self.mask).unwrap()
    }

    fn ctx(&self, gamma: f64) -> FdContext<'_> {
        FdContext {
            setup: &self.setup,
            eps: &self.eps,
            sigma: &self.sigma,
            obs: &self.obs,
            reg: &self.reg,
            gamma_eps: gamma,
            gamma_sigma: gamma,
            mask: &self.mask,
            adm: &self.adm,
        }
    }
}

/// Eight nodes around the inclusion, in units of 1/24.
const OFFSETS: [(i32, i32); 8] = [(0, 0), (1, 0), (-1, 1), (0, -2), (2, 2), (-2, -1), (3, 0), (0, 3)];

fn sample_nodes(g: &Grid2D) -> Vec<usize> {
    let scale = g.nx as f64 / 24.0;
    OFFSETS
        .iter()
        .map(|&(di, dj)| {
            let i = (12.0 + di as f64) * scale;
            let j = (16.8f64.round() + dj as f64) * scale;
            g.index(i as usize, j as usize)
        })
        .collect()
}

/// Per-node max of the ε and σ mismatches, plus the worst qualifying one.
fn mismatches(n: usize) -> (Vec<f64>, f64) {
    let c = Check::new(n, 0);
    let (ge, gs) = c.gradients(0.0);
    let nodes = sample_nodes(c.grid());
    let mut probes = Vec::new();
    for &k in &nodes {
        probes.push((k, Role::Epsilon));
        probes.push((k, Role::Sigma));
    }
    let fd = fd_gradient_oracle(&c.ctx(0.0), &probes, 1e-4).unwrap();
    let max_fd = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    let mut per_node = Vec::new();
    for (pair, chunk) in probes.chunks(2).zip(fd.chunks(2)) {
        let k = pair[0].0;
        let rel_e = relative_mismatch(ge.values[k], chunk[0]);
        let rel_s = relative_mismatch(gs.values[k], chunk[1]);
        for (rel, v) in [(rel_e, chunk[0]), (rel_s, chunk[1])] {
            if v.abs() >= 1e-3 * max_fd {
                worst = worst.max(rel);
            }
        }
        per_node.push(rel_e.max(rel_s));
    }
    (per_node, worst)
}

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let (coarse, worst_coarse) = mismatches(24);
    assert!(worst_coarse <= 5e-2, "worst mismatch {worst_coarse} ({coarse:?})");
    let (fine, worst_fine) = mismatches(48);
    assert!(worst_fine <= 5e-2);
    assert!(median(fine.clone()) < median(coarse.clone()), "{coarse:?} vs {fine:?}");
}

#[test]
fn frame_nodes_have_zero_gradient_and_flat_functional() {
    let c = Check::new(16, 2);
    let (ge, gs) = c.gradients(0.3);
    for k in 0..c.grid().node_count() {
        if c.mask.is_frame(k) {
            assert_eq!(ge.values[k], 0.0);
            assert_eq!(gs.values[k], 0.0);
            assert!(c.ctx(0.3).probe(k, Role::Epsilon, 1e-4).unwrap().abs() <= 1e-10);
        }
    }
}

#[test]
fn quadratic_regime_is_differentiated_exactly() {
    let mut c = Check::new(16, 1);
    c.obs = BoundaryTrace::extract(&c.setup.solve(&c.eps, &c.sigma).unwrap(), SideSet::ALL).unwrap();
    c.reg.gamma_eps0 = 1.0;
    let k = c.grid().index(8, 11);
    let want = c.eps.values[k] - c.reg.prior_eps.values[k];
    let got = c.ctx(1.0).probe(k, Role::Epsilon, 1e-4).unwrap();
    assert!((got - want).abs() <= 1e-8, "{got} vs {want}");
}

#[test]
fn finite_difference_step_plateau() {
    let c = Check::new(24, 0);
    let k = sample_nodes(c.grid())[0];
    let ctx = c.ctx(0.0);
    for which in [Role::Epsilon, Role::Sigma] {
        let v: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&h| ctx.probe(k, which, h).unwrap()).collect();
        for a in &v {
            for b in &v {
                assert!(relative_mismatch(*a, *b) <= 1e-2, "{which:?}: {v:?}");
            }
        }
    }
}

#[test]
fn regularisation_part_is_linear_in_gamma() {
    let mut c = Check::new(16, 1);
    c.reg.prior_eps = CoefficientField::constant(c.grid(), Role::Epsilon, 1.3);
    c.reg.prior_sigma = CoefficientField::constant(c.grid(), Role::Sigma, 0.7);
    let (e0, s0) = c.gradients(0.0);
    let (e1, s1) = c.gradients(0.25);
    let (e2, s2) = c.gradients(0.5);
    for k in 0..c.grid().node_count() {
        assert_eq!(e2.values[k] - e0.values[k], 2.0 * (e1.values[k] - e0.values[k]));
        assert_eq!(s2.values[k] - s0.values[k], 2.0 * (s1.values[k] - s0.values[k]));
    }
}

#[test]
fn probes_leaving_the_admissible_set_are_rejected() {
    let mut c = Check::new(16, 1);
    c.adm = AdmissibleSet::default();
    let k = c.grid().index(2, 2);
    let r = c.ctx(0.0).probe(k, Role::Sigma, 1e-2);
    assert!(matches!(r, Err(Error::InadmissibleProbe { .. })), "{r:?}");
}
