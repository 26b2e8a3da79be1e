#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavecip_core::forward::{BcConfig, SourceSpec, WaveSetup};
use wavecip_core::objective::RegularizationParams;
use wavecip_core::{BoundaryTrace, CoefficientField, FieldRole, Grid2D, Role, SideSet, SpaceTimeField};

pub const CENTRE: (f64, f64) = (0.5, 0.7);

pub fn unit_grid(n: usize, t_final: f64) -> Grid2D {
    Grid2D::new(n, n, t_final, 0.5, 1.0).unwrap()
}

pub fn true_eps(g: &Grid2D) -> CoefficientField {
    CoefficientField::gaussian(g, Role::Epsilon, 1.0, 3.0, CENTRE, 0.002).unwrap()
}

pub fn true_sigma(g: &Grid2D) -> CoefficientField {
    CoefficientField::gaussian(g, Role::Sigma, 1.0, 1.5, CENTRE, 0.002).unwrap()
}

pub fn test1_setup(g: Grid2D) -> WaveSetup {
    WaveSetup::new(g, SourceSpec::default(), BcConfig::default())
}

pub fn clean_obs(setup: &WaveSetup) -> BoundaryTrace {
    let e = setup.solve(&true_eps(&setup.grid), &true_sigma(&setup.grid)).unwrap();
    BoundaryTrace::extract(&e, SideSet::ALL).unwrap()
}

pub fn flat_reg(g: &Grid2D, gamma: f64) -> RegularizationParams {
    RegularizationParams {
        gamma_eps0: gamma,
        gamma_sigma0: gamma,
        p: 0.5,
        prior_eps: CoefficientField::constant(g, Role::Epsilon, 1.0),
        prior_sigma: CoefficientField::constant(g, Role::Sigma, 1.0),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(g: &Grid2D, role: Role, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> CoefficientField {
    let values = (0..g.node_count()).map(|_| rng.random_range(lo..hi)).collect();
    CoefficientField::from_values(g, role, values).unwrap()
}

pub fn random_spacetime(g: &Grid2D, role: FieldRole, rng: &mut ChaCha8Rng) -> SpaceTimeField {
    let mut f = SpaceTimeField::zeros(g, role);
    f.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    f
}

pub fn random_trace(g: &Grid2D, sides: SideSet, rng: &mut ChaCha8Rng) -> BoundaryTrace {
    let mut t = BoundaryTrace::zeros(g, sides).unwrap();
    t.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    t
}

/// `Σ_{n<nt} dt ⟨M u^n, λ^n⟩`, the space-time pairing of the leapfrog scheme.
pub fn spacetime_pairing(u: &SpaceTimeField, lambda: &SpaceTimeField) -> f64 {
    let g = &u.grid;
    let w = g.area_weights();
    (0..g.nt)
        .map(|n| {
            let (a, b) = (u.snapshot(n), lambda.snapshot(n));
            g.dt * (0..w.len()).map(|k| w[k] * a[k] * b[k]).sum::<f64>()
        })
        .sum()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
