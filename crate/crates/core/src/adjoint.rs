//! Backward-in-time adjoint solve.
//!
//! The multiplier satisfies `ε ∂ₜₜλ − σ ∂ₜλ − Δλ = 0` with
//! `λ(T) = ∂ₜλ(T) = 0` and `∂ₙλ = −(E − Ẽ_obs)` on the observed sides.
//! In reversed time `s = T − t` the damping term changes sign, so the march
//! reuses the forward leapfrog stencil. Sides that absorb in the forward
//! problem at time `t` absorb in the reversed march at the same `t`;
//! zero-Neumann sides stay zero-Neumann.
//!
//! The level coefficients are taken from the forward steps that couple to
//! each level: the absorption of step `m ± 1` multiplies `λ^{m±1}` and the
//! last level picks up the trapezoid half of the final residual. The march
//! is then the transpose of the forward scheme at every level but `λ⁰`,
//! which keeps the regular step (its Taylor-start counterpart would use
//! `2Mε/dt²`). `λ⁰` only enters the gradient through nonzero initial data.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fields::{BoundaryTrace, CoefficientField, FieldRole, SpaceTimeField};
use crate::forward::{add_side_flux, check_finite, stiffness_pairing, BcConfig, SourceSpec, WaveStencil};
use crate::grid::Grid2D;

/// Solves for `λ` given the boundary residual `E − Ẽ_obs`.
///
/// `λ^{nt}` is zero; `λ^{nt−1}` carries only the trapezoid half of the
/// final residual.
pub fn solve_adjoint(
    grid: &Grid2D,
    eps: &CoefficientField,
    sigma: &CoefficientField,
    residual: &BoundaryTrace,
    bc: &BcConfig,
    source: &SourceSpec,
) -> Result<SpaceTimeField> {
    if !residual.grid.same_spacetime(grid) {
        return Err(Error::TraceMismatch("residual and solver grid"));
    }
    bc.validate()?;
    let stencil = WaveStencil::new(grid, eps, sigma)?;
    let nn = grid.node_count();
    let nt = grid.nt;
    let mut lambda = SpaceTimeField::zeros(grid, FieldRole::Adjoint);
    let mut rhs = vec![0.0; nn];
    let mut ku = vec![0.0; nn];
    let absorption = |n: usize| -> Vec<f64> { stencil.absorption(bc.absorbing_at(grid.time(n), source)) };
    let boundary_source = |m: usize, scale: f64, rhs: &mut [f64]| {
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for s in residual.sides().iter() {
            let r = residual.side(m, s).expect("declared side");
            add_side_flux(grid, s, |idx| -scale * r[idx], rhs);
        }
    };

    let mut absorb_lo = absorption(nt - 1);
    boundary_source(nt, 0.5, &mut rhs);
    {
        let last = lambda.snapshot_mut(nt - 1);
        for k in 0..nn {
            last[k] = rhs[k] / (stencil.inertia[k] + stencil.damping[k] + absorb_lo[k]);
        }
    }
    check_finite(lambda.snapshot(nt - 1), nt - 1)?;

    // m = nt−1, …, 1: λ^{m−1} from λ^m and λ^{m+1}
    let mut absorb_hi = absorption(nt);
    for m in (1..nt).rev() {
        let absorb_mid = absorb_lo;
        absorb_lo = absorption(m - 1);
        boundary_source(m, 1.0, &mut rhs);
        stencil.stiffness(lambda.snapshot(m), &mut ku);
        let (prev, cur, next) = lambda.split_step_reverse(m);
        for k in 0..nn {
            let inertia = stencil.inertia[k];
            let upper = inertia - stencil.damping[k] - absorb_hi[k];
            let lower = inertia + stencil.damping[k] + absorb_lo[k];
            next[k] = (2.0 * inertia * cur[k] - ku[k] - upper * prev[k] + rhs[k]) / lower;
        }
        check_finite(lambda.snapshot(m - 1), m - 1)?;
        absorb_hi = absorb_mid;
    }
    Ok(lambda)
}

/// Per-level adjoint energies and their bound against the residual norm.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointEnergyReport {
    /// `|||λ|||²` between levels `n` and `n+1`, for `n = 0..nt`.
    pub energies: Vec<f64>,
    pub max_energy: f64,
    /// `‖E − Ẽ_obs‖²` over the observed part of `Γ × [0, T]`.
    pub residual_norm_sq: f64,
    /// `max_energy / residual_norm_sq` (zero when both vanish).
    pub ratio: f64,
    /// Set when `ratio` exceeds the configured bound.
    pub unbounded: bool,
}

pub const DEFAULT_ENERGY_BOUND: f64 = 1e6;

/// Discrete analogue of the adjoint energy estimate, evaluated per level.
pub fn adjoint_energy_monitor(
    lambda: &SpaceTimeField,
    eps: &CoefficientField,
    _sigma: &CoefficientField,
    residual: &BoundaryTrace,
    bound: f64,
) -> AdjointEnergyReport {
    let g = &lambda.grid;
    let mass = g.area_weights();
    let energies: Vec<f64> = (0..g.nt)
        .map(|n| {
            let (a, b) = (lambda.snapshot(n), lambda.snapshot(n + 1));
            let kinetic: f64 = (0..g.node_count())
                .map(|k| {
                    let v = (b[k] - a[k]) / g.dt;
                    mass[k] * eps.values[k] * v * v
                })
                .sum();
            kinetic + stiffness_pairing(g, a, b)
        })
        .collect();
    let max_energy = energies.iter().copied().fold(0.0, f64::max);
    let residual_norm_sq = residual.inner(residual).unwrap_or(f64::NAN);
    let ratio = if max_energy == 0.0 {
        0.0
    } else {
        max_energy / residual_norm_sq
    };
    AdjointEnergyReport {
        energies,
        max_energy,
        residual_norm_sq,
        ratio,
        unbounded: !(ratio <= bound),
    }
}
