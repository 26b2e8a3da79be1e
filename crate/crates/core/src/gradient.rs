//! Adjoint-state gradients of the Tikhonov functional and the
//! finite-difference oracle used to check them.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fields::{AdmissibleSet, BoundaryTrace, CoefficientField, Role, SpaceTimeField};
use crate::forward::WaveSetup;
use crate::grid::RegionMask;
use crate::objective::{evaluate, RegularizationParams};

/// Optional ingredients of the gradient beyond the two space-time fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradientExtras<'a> {
    /// `f₀ = E(x, 0)`
    pub initial_value: Option<&'a [f64]>,
    /// `f₁ = ∂ₜE(x, 0)`
    pub initial_rate: Option<&'a [f64]>,
    /// Keeps the `∫ div λ div E` term of the vector equations. Scalar fields
    /// have no divergence, so the flag is rejected here.
    pub vector_mode: bool,
}

/// `D₀u` at level `n`: centred inside, one-sided at `0` and `nt`.
#[inline]
fn time_derivative(u: &SpaceTimeField, n: usize, k: usize) -> f64 {
    let g = &u.grid;
    let nt = g.nt;
    if n == 0 {
        (u.snapshot(1)[k] - u.snapshot(0)[k]) / g.dt
    } else if n == nt {
        (u.snapshot(nt)[k] - u.snapshot(nt - 1)[k]) / g.dt
    } else {
        (u.snapshot(n + 1)[k] - u.snapshot(n - 1)[k]) / (2.0 * g.dt)
    }
}

/// Nodal gradient densities
///
/// ```text
/// g_ε = γ_ε(ε − ε⁰) − λ(·,0) f₁ − ∫ ∂ₜλ ∂ₜE dt
/// g_σ = γ_σ(σ − σ⁰) − λ(·,0) f₀ − ∫ E ∂ₜλ dt
/// ```
///
/// with trapezoidal time quadrature, zeroed on frame nodes.
#[allow(clippy::too_many_arguments)]
pub fn assemble_gradients(
    e: &SpaceTimeField,
    lambda: &SpaceTimeField,
    eps: &CoefficientField,
    sigma: &CoefficientField,
    reg: &RegularizationParams,
    gamma_eps: f64,
    gamma_sigma: f64,
    mask: &RegionMask,
) -> Result<(CoefficientField, CoefficientField)> {
    assemble_gradients_with(
        e,
        lambda,
        eps,
        sigma,
        reg,
        gamma_eps,
        gamma_sigma,
        mask,
        &GradientExtras::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn assemble_gradients_with(
    e: &SpaceTimeField,
    lambda: &SpaceTimeField,
    eps: &CoefficientField,
    sigma: &CoefficientField,
    reg: &RegularizationParams,
    gamma_eps: f64,
    gamma_sigma: f64,
    mask: &RegionMask,
    extras: &GradientExtras<'_>,
) -> Result<(CoefficientField, CoefficientField)> {
    let g = e.grid;
    if !lambda.grid.same_spacetime(&g) {
        return Err(Error::GridMismatch("state and adjoint"));
    }
    if !eps.grid.same_space(&g)
        || !sigma.grid.same_space(&g)
        || !reg.prior_eps.grid.same_space(&g)
        || !reg.prior_sigma.grid.same_space(&g)
        || mask.len() != g.node_count()
    {
        return Err(Error::GridMismatch("gradient inputs"));
    }
    if extras.vector_mode {
        return Err(Error::InvalidParameter(
            "vector mode needs vector-valued fields; scalar fields have no divergence".into(),
        ));
    }
    let nn = g.node_count();
    let mut g_eps: Vec<f64> = Vec::with_capacity(nn);
    let mut g_sigma: Vec<f64> = Vec::with_capacity(nn);
    for k in 0..nn {
        if mask.is_frame(k) {
            g_eps.push(0.0);
            g_sigma.push(0.0);
            continue;
        }
        let mut rate_pairing = 0.0;
        let mut value_pairing = 0.0;
        for n in 0..=g.nt {
            let w = g.time_weight(n);
            let dl = time_derivative(lambda, n, k);
            rate_pairing += w * dl * time_derivative(e, n, k);
            value_pairing += w * dl * e.snapshot(n)[k];
        }
        let l0 = lambda.snapshot(0)[k];
        let f0 = extras.initial_value.map_or(0.0, |v| v[k]);
        let f1 = extras.initial_rate.map_or(0.0, |v| v[k]);
        g_eps.push(gamma_eps * (eps.values[k] - reg.prior_eps.values[k]) - l0 * f1 - rate_pairing);
        g_sigma.push(gamma_sigma * (sigma.values[k] - reg.prior_sigma.values[k]) - l0 * f0 - value_pairing);
    }
    Ok((
        CoefficientField::from_values(&g, Role::Epsilon, g_eps)?,
        CoefficientField::from_values(&g, Role::Sigma, g_sigma)?,
    ))
}

/// Everything a finite-difference probe of `F` needs.
#[derive(Debug, Clone, Copy)]
pub struct FdContext<'a> {
    pub setup: &'a WaveSetup,
    pub eps: &'a CoefficientField,
    pub sigma: &'a CoefficientField,
    pub obs: &'a BoundaryTrace,
    pub reg: &'a RegularizationParams,
    pub gamma_eps: f64,
    pub gamma_sigma: f64,
    pub mask: &'a RegionMask,
    pub adm: &'a AdmissibleSet,
}

impl<'a> FdContext<'a> {
    /// `(F(v + h eₖ) − F(v − h eₖ)) / (2h wₖ)` for `v` the selected field.
    ///
    /// Frame nodes are pinned to the background, so `F` is flat along them
    /// and the value is zero without any solve.
    pub fn probe(&self, node: usize, which: Role, h_fd: f64) -> Result<f64> {
        let g = &self.setup.grid;
        if node >= g.node_count() {
            return Err(Error::InvalidParameter(alloc::format!("node {node} outside the grid")));
        }
        if !(h_fd > 0.0) {
            return Err(Error::InvalidParameter("finite-difference step must be positive".into()));
        }
        if self.mask.is_frame(node) {
            return Ok(0.0);
        }
        let base = match which {
            Role::Epsilon => self.eps,
            Role::Sigma => self.sigma,
        };
        let v = base.values[node];
        let (lo, hi) = self.adm.bounds(which);
        for value in [v - h_fd, v + h_fd] {
            if value < lo || value > hi {
                return Err(Error::InadmissibleProbe { node, value, lo, hi });
            }
        }
        let eval = |delta: f64| -> Result<f64> {
            let mut field = base.clone();
            field.values[node] += delta;
            let (e, s) = match which {
                Role::Epsilon => (&field, self.sigma),
                Role::Sigma => (self.eps, &field),
            };
            evaluate(self.setup, e, s, self.obs, self.reg, self.gamma_eps, self.gamma_sigma).map(|r| r.1)
        };
        let plus = eval(h_fd)?;
        let minus = eval(-h_fd)?;
        let (i, j) = g.ij(node);
        Ok((plus - minus) / (2.0 * h_fd * g.area_weight(i, j)))
    }
}

/// Finite-difference gradient densities at `sample_nodes`, in order.
pub fn fd_gradient_oracle(
    ctx: &FdContext<'_>,
    sample_nodes: &[(usize, Role)],
    h_fd: f64,
) -> Result<Vec<f64>> {
    sample_nodes
        .iter()
        .map(|&(node, which)| ctx.probe(node, which, h_fd))
        .collect()
}

/// `|g − g_fd| / max(|g_fd|, 1e−12)`, defined as zero when both vanish.
pub fn relative_mismatch(adjoint: f64, fd: f64) -> f64 {
    if adjoint == 0.0 && fd == 0.0 {
        0.0
    } else {
        (adjoint - fd).abs() / fd.abs().max(1e-12)
    }
}
