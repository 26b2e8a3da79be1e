//! Tikhonov functional, discrete Lagrangian, the exact decomposition
//! identities of the functional and reconstruction error metrics.

use alloc::vec;

use crate::error::{Error, Result};
use crate::fields::{BoundaryTrace, CoefficientField, SideSet, SpaceTimeField};
use crate::forward::{AbsorptionCache, ForwardProblem, WaveSetup, WaveStencil};
use crate::math;

/// Regularisation weights, their decay exponent and the prior fields.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationParams {
    pub gamma_eps0: f64,
    pub gamma_sigma0: f64,
    /// Decay exponent of `γᵐ = γ⁰/(m+1)^p`, in (0, 1].
    pub p: f64,
    pub prior_eps: CoefficientField,
    pub prior_sigma: CoefficientField,
}

impl RegularizationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_eps0 >= 0.0 && self.gamma_sigma0 >= 0.0) {
            return Err(Error::InvalidParameter("regularisation weights must be >= 0".into()));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "decay exponent p must lie in (0, 1], got {}",
                self.p
            )));
        }
        Ok(())
    }

    /// `(γ_ε⁰/(m+1)^p, γ_σ⁰/(m+1)^p)`.
    pub fn gammas_at(&self, m: usize) -> (f64, f64) {
        let d = math::pow((m + 1) as f64, self.p);
        (self.gamma_eps0 / d, self.gamma_sigma0 / d)
    }
}

/// The three parts of the Tikhonov functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TikhonovTerms {
    /// `½‖E − Ẽ_obs‖²_{Γ_T}`
    pub misfit: f64,
    /// `(γ_ε/2)‖ε − ε⁰‖²`
    pub reg_eps: f64,
    /// `(γ_σ/2)‖σ − σ⁰‖²`
    pub reg_sigma: f64,
}

impl TikhonovTerms {
    pub fn total(&self) -> f64 {
        self.misfit + self.reg_eps + self.reg_sigma
    }
}

fn prior_distance_sq(field: &CoefficientField, prior: &CoefficientField) -> Result<f64> {
    if !field.grid.same_space(&prior.grid) {
        return Err(Error::GridMismatch("coefficient and prior"));
    }
    let w = field.grid.area_weights();
    Ok(field
        .values
        .iter()
        .zip(&prior.values)
        .zip(&w)
        .map(|((a, b), w)| w * (a - b) * (a - b))
        .sum())
}

pub fn tikhonov_terms(
    sim: &BoundaryTrace,
    obs: &BoundaryTrace,
    eps: &CoefficientField,
    sigma: &CoefficientField,
    reg: &RegularizationParams,
    gamma_eps: f64,
    gamma_sigma: f64,
) -> Result<TikhonovTerms> {
    let r = sim.difference(obs)?;
    let misfit = 0.5 * r.inner(&r)?;
    let reg_eps = if gamma_eps == 0.0 {
        0.0
    } else {
        0.5 * gamma_eps * prior_distance_sq(eps, &reg.prior_eps)?
    };
    let reg_sigma = if gamma_sigma == 0.0 {
        0.0
    } else {
        0.5 * gamma_sigma * prior_distance_sq(sigma, &reg.prior_sigma)?
    };
    Ok(TikhonovTerms {
        misfit,
        reg_eps,
        reg_sigma,
    })
}

/// `F(ε, σ) = ½‖E − Ẽ_obs‖²_{Γ_T} + (γ_ε/2)‖ε − ε⁰‖² + (γ_σ/2)‖σ − σ⁰‖²`.
pub fn tikhonov(
    sim: &BoundaryTrace,
    obs: &BoundaryTrace,
    eps: &CoefficientField,
    sigma: &CoefficientField,
    reg: &RegularizationParams,
    gamma_eps: f64,
    gamma_sigma: f64,
) -> Result<f64> {
    tikhonov_terms(sim, obs, eps, sigma, reg, gamma_eps, gamma_sigma).map(|t| t.total())
}

/// Solves the forward problem for `(ε, σ)` and evaluates `F` against `obs`.
pub fn evaluate(
    setup: &WaveSetup,
    eps: &CoefficientField,
    sigma: &CoefficientField,
    obs: &BoundaryTrace,
    reg: &RegularizationParams,
    gamma_eps: f64,
    gamma_sigma: f64,
) -> Result<(SpaceTimeField, f64)> {
    let e = setup.solve(eps, sigma)?;
    let sim = BoundaryTrace::extract(&e, obs.sides())?;
    let f = tikhonov(&sim, obs, eps, sigma, reg, gamma_eps, gamma_sigma)?;
    Ok((e, f))
}

/// `L = F + Σₙ dt ⟨λⁿ, Rⁿ(E)⟩`, where `Rⁿ` is the mass-weighted defect of
/// step `n` of the forward scheme described by `problem` (step 0 being the
/// Taylor start). For `E` produced by that scheme the defects vanish and
/// `L = F` up to round-off.
#[allow(clippy::too_many_arguments)]
pub fn lagrangian(
    problem: &ForwardProblem<'_>,
    e: &SpaceTimeField,
    lambda: &SpaceTimeField,
    reg: &RegularizationParams,
    gamma_eps: f64,
    gamma_sigma: f64,
    obs: &BoundaryTrace,
) -> Result<f64> {
    let g = problem.grid;
    if !e.grid.same_spacetime(g) || !lambda.grid.same_spacetime(g) {
        return Err(Error::GridMismatch("state, multiplier and problem"));
    }
    let sim = BoundaryTrace::extract(e, obs.sides())?;
    let f = tikhonov(&sim, obs, problem.eps, problem.sigma, reg, gamma_eps, gamma_sigma)?;
    Ok(f + constraint_pairing(problem, e, lambda)?)
}

/// `Σₙ dt ⟨λⁿ, Rⁿ(E)⟩` for `n = 0..nt`.
pub fn constraint_pairing(
    problem: &ForwardProblem<'_>,
    e: &SpaceTimeField,
    lambda: &SpaceTimeField,
) -> Result<f64> {
    let g = problem.grid;
    let stencil = WaveStencil::new(g, problem.eps, problem.sigma)?;
    let nn = g.node_count();
    let dt = g.dt;
    let mut rhs = vec![0.0; nn];
    let mut ku = vec![0.0; nn];
    let mut cache = AbsorptionCache::new();
    let mut total = 0.0;
    for n in 0..g.nt {
        problem.rhs(n, &stencil.mass, &mut rhs);
        let absorb = cache.get(&stencil, problem.absorbing_at(n));
        let cur = e.snapshot(n);
        let next = e.snapshot(n + 1);
        stencil.stiffness(cur, &mut ku);
        let lam = lambda.snapshot(n);
        let mut level = 0.0;
        for k in 0..nn {
            let inertia = stencil.inertia[k];
            let drag = stencil.damping[k] + absorb[k];
            let defect = if n == 0 {
                let rate = problem.initial_rate.map_or(0.0, |r| r[k]);
                2.0 * inertia * (next[k] - cur[k]) + ku[k] - 2.0 * (inertia - drag) * dt * rate - rhs[k]
            } else {
                let prev = e.snapshot(n - 1)[k];
                (inertia + drag) * next[k] - 2.0 * inertia * cur[k] + ku[k] + (inertia - drag) * prev
                    - rhs[k]
            };
            level += lam[k] * defect;
        }
        total += dt * level;
    }
    Ok(total)
}

/// Both sides of the decomposition
///
/// ```text
/// F(ε,σ) = F(εₙ,σₙ) − ½‖δEₙ‖²_{Γ_T} + ⟨E(ε,σ) − Ẽ_obs, δEₙ⟩_{Γ_T}
///        − (γ_ε/2)‖δεₙ‖² + γ_ε⟨ε − ε⁰, δεₙ⟩ − (γ_σ/2)‖δσₙ‖² + γ_σ⟨σ − σ⁰, δσₙ⟩
/// ```
///
/// with `δEₙ = E(ε,σ) − E(εₙ,σₙ)`, `δεₙ = ε − εₙ`, `δσₙ = σ − σₙ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn decomposition_identity_check(
    setup: &WaveSetup,
    eps: &CoefficientField,
    sigma: &CoefficientField,
    eps_n: &CoefficientField,
    sigma_n: &CoefficientField,
    obs: &BoundaryTrace,
    reg: &RegularizationParams,
    gamma_eps: f64,
    gamma_sigma: f64,
) -> Result<DecompositionCheck> {
    let sides = obs.sides();
    let e = BoundaryTrace::extract(&setup.solve(eps, sigma)?, sides)?;
    let e_n = BoundaryTrace::extract(&setup.solve(eps_n, sigma_n)?, sides)?;
    let lhs = tikhonov(&e, obs, eps, sigma, reg, gamma_eps, gamma_sigma)?;
    let f_n = tikhonov(&e_n, obs, eps_n, sigma_n, reg, gamma_eps, gamma_sigma)?;

    let de = e.difference(&e_n)?;
    let fit = e.difference(obs)?;
    let mut rhs = f_n - 0.5 * de.inner(&de)? + fit.inner(&de)?;

    let w = setup.grid.area_weights();
    let mut coefficient_terms = |gamma: f64, cur: &CoefficientField, other: &CoefficientField, prior: &CoefficientField| {
        if gamma == 0.0 {
            return;
        }
        let mut sq = 0.0;
        let mut cross = 0.0;
        for k in 0..w.len() {
            let d = cur.values[k] - other.values[k];
            sq += w[k] * d * d;
            cross += w[k] * (cur.values[k] - prior.values[k]) * d;
        }
        rhs += -0.5 * gamma * sq + gamma * cross;
    };
    coefficient_terms(gamma_eps, eps, eps_n, &reg.prior_eps);
    coefficient_terms(gamma_sigma, sigma, sigma_n, &reg.prior_sigma);

    Ok(DecompositionCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Relative reconstruction and data errors in the L² and sup norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub e_eps_l2: f64,
    pub e_eps_sup: f64,
    pub e_sigma_l2: f64,
    pub e_sigma_sup: f64,
    pub e_e_l2: f64,
    pub e_e_sup: f64,
}

impl ErrorMetrics {
    pub fn nan() -> Self {
        Self {
            e_eps_l2: f64::NAN,
            e_eps_sup: f64::NAN,
            e_sigma_l2: f64::NAN,
            e_sigma_sup: f64::NAN,
            e_e_l2: f64::NAN,
            e_e_sup: f64::NAN,
        }
    }
}

/// `(‖a − b‖/‖b‖, ‖a − b‖∞/‖b‖∞)` with area quadrature.
pub fn relative_field_errors(a: &CoefficientField, b: &CoefficientField) -> Result<(f64, f64)> {
    if !a.grid.same_space(&b.grid) {
        return Err(Error::GridMismatch("reconstruction and reference"));
    }
    let w = a.grid.area_weights();
    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    let mut diff_sup = 0.0_f64;
    let mut ref_sup = 0.0_f64;
    for k in 0..w.len() {
        let d = a.values[k] - b.values[k];
        diff_sq += w[k] * d * d;
        ref_sq += w[k] * b.values[k] * b.values[k];
        diff_sup = diff_sup.max(d.abs());
        ref_sup = ref_sup.max(b.values[k].abs());
    }
    if ref_sq == 0.0 || ref_sup == 0.0 {
        return Err(Error::ZeroDenominator("coefficient error norm"));
    }
    Ok((math::sqrt(diff_sq / ref_sq), diff_sup / ref_sup))
}

/// Data error `‖Eᵐ − Ẽ_obs‖/‖Eᵐ‖`, L² over `Γ_T` and sup.
pub fn relative_trace_errors(sim: &BoundaryTrace, obs: &BoundaryTrace) -> Result<(f64, f64)> {
    let r = sim.difference(obs)?;
    let denom_l2 = sim.l2_norm();
    let denom_sup = sim.max_abs();
    if denom_l2 == 0.0 || denom_sup == 0.0 {
        return Err(Error::ZeroDenominator("simulated trace norm"));
    }
    Ok((r.l2_norm() / denom_l2, r.max_abs() / denom_sup))
}

pub fn error_metrics(
    eps_m: &CoefficientField,
    sigma_m: &CoefficientField,
    eps_true: &CoefficientField,
    sigma_true: &CoefficientField,
    sim_m: &BoundaryTrace,
    obs: &BoundaryTrace,
) -> Result<ErrorMetrics> {
    let (e_eps_l2, e_eps_sup) = relative_field_errors(eps_m, eps_true)?;
    let (e_sigma_l2, e_sigma_sup) = relative_field_errors(sigma_m, sigma_true)?;
    let (e_e_l2, e_e_sup) = relative_trace_errors(sim_m, obs)?;
    Ok(ErrorMetrics {
        e_eps_l2,
        e_eps_sup,
        e_sigma_l2,
        e_sigma_sup,
        e_e_l2,
        e_e_sup,
    })
}

/// Trace of `e` on `sides`; convenience for callers that hold a solved field.
pub fn simulated_trace(e: &SpaceTimeField, sides: SideSet) -> Result<BoundaryTrace> {
    BoundaryTrace::extract(e, sides)
}
