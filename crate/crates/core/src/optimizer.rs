//! Projected conjugate-gradient reconstruction of `(ε, σ)` and its
//! adaptive multi-level driver.

use alloc::vec::Vec;

use crate::adjoint::solve_adjoint;
use crate::error::{Error, Result};
use crate::fields::{AdmissibleSet, BoundaryTrace, CoefficientField, Role, SpaceTimeField};
use crate::forward::WaveSetup;
use crate::gradient::assemble_gradients;
use crate::grid::RegionMask;
use crate::math;
use crate::objective::{error_metrics, tikhonov, ErrorMetrics, RegularizationParams};

/// Stopping rules of one CG run. The run ends as soon as any of the four
/// tolerances is met or after `max_iterations` iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingTolerances {
    /// Update size `‖εᵐ⁺¹ − εᵐ‖`.
    pub eta1_eps: f64,
    pub eta1_sigma: f64,
    /// Gradient size `‖g_εᵐ‖`.
    pub eta2_eps: f64,
    pub eta2_sigma: f64,
    pub max_iterations: usize,
}

impl Default for StoppingTolerances {
    fn default() -> Self {
        Self {
            eta1_eps: 1e-8,
            eta1_sigma: 1e-8,
            eta2_eps: 1e-8,
            eta2_sigma: 1e-8,
            max_iterations: 100,
        }
    }
}

impl StoppingTolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [self.eta1_eps, self.eta1_sigma, self.eta2_eps, self.eta2_sigma];
        if all.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::InvalidParameter("stopping tolerances must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgaOptions {
    pub tolerances: StoppingTolerances,
    /// Clamp for `|α|`.
    pub alpha_max: f64,
    /// Fletcher–Reeves ratios above this restart from steepest descent.
    pub beta_max: f64,
    /// Halvings of `α` tried when a step would increase `F`.
    pub max_backtracks: usize,
}

impl Default for CgaOptions {
    fn default() -> Self {
        Self {
            tolerances: StoppingTolerances::default(),
            alpha_max: 1.0,
            beta_max: 10.0,
            max_backtracks: 10,
        }
    }
}

impl CgaOptions {
    pub fn validate(&self) -> Result<()> {
        self.tolerances.validate()?;
        if !(self.alpha_max > 0.0) || !(self.beta_max >= 0.0) {
            return Err(Error::InvalidParameter("alpha_max must be > 0 and beta_max >= 0".into()));
        }
        Ok(())
    }
}

/// Reference coefficients used only for the logged error metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub eps: CoefficientField,
    pub sigma: CoefficientField,
}

/// Everything fixed during one CG run.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub setup: WaveSetup,
    pub obs: BoundaryTrace,
    pub reg: RegularizationParams,
    pub adm: AdmissibleSet,
    pub mask: RegionMask,
    pub truth: Option<Truth>,
}

impl InverseProblem {
    pub fn validate(&self) -> Result<()> {
        let g = &self.setup.grid;
        if !self.obs.grid.same_spacetime(g) {
            return Err(Error::TraceMismatch("observations and solver grid"));
        }
        if !self.reg.prior_eps.grid.same_space(g) || !self.reg.prior_sigma.grid.same_space(g) {
            return Err(Error::GridMismatch("priors and solver grid"));
        }
        if self.mask.len() != g.node_count() {
            return Err(Error::GridMismatch("region mask and solver grid"));
        }
        if let Some(t) = &self.truth {
            if !t.eps.grid.same_space(g) || !t.sigma.grid.same_space(g) {
                return Err(Error::GridMismatch("reference coefficients and solver grid"));
            }
        }
        self.reg.validate()?;
        self.adm.validate()?;
        self.setup.bc.validate()
    }

    fn metrics(&self, eps: &CoefficientField, sigma: &CoefficientField, sim: &BoundaryTrace) -> ErrorMetrics {
        let mut out = ErrorMetrics::nan();
        if let Some(t) = &self.truth {
            if let Ok(m) = error_metrics(eps, sigma, &t.eps, &t.sigma, sim, &self.obs) {
                out = m;
            }
        }
        if out.e_e_l2.is_nan() {
            if let Ok((l2, sup)) = crate::objective::relative_trace_errors(sim, &self.obs) {
                out.e_e_l2 = l2;
                out.e_e_sup = sup;
            }
        }
        out
    }
}

/// `(a, b)` with area quadrature.
pub fn field_inner(a: &CoefficientField, b: &CoefficientField) -> f64 {
    math::weighted_dot(&a.grid.area_weights(), &a.values, &b.values)
}

/// Fletcher–Reeves ratio `‖g‖²/‖g_prev‖²`, zero when the previous norm
/// vanishes.
pub fn fletcher_reeves(norm_sq: f64, prev_norm_sq: f64) -> f64 {
    if prev_norm_sq == 0.0 {
        0.0
    } else {
        norm_sq / prev_norm_sq
    }
}

/// `−(g, d)/(γ (d, d))` before clamping. Infinite for `γ = 0`.
pub fn raw_step_size(g_dot_d: f64, d_dot_d: f64, gamma: f64) -> f64 {
    if d_dot_d == 0.0 {
        return 0.0;
    }
    let num = -g_dot_d;
    if gamma == 0.0 {
        return if num == 0.0 {
            0.0
        } else {
            num.signum() * f64::INFINITY
        };
    }
    // ratio first, so d = −g gives exactly 1/γ
    (num / d_dot_d) / gamma
}

/// One row of the convergence log, for iteration `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub m: usize,
    /// `F(εᵐ, σᵐ)` with the weights `γᵐ`.
    pub f: f64,
    pub metrics: ErrorMetrics,
    pub g_eps_norm: f64,
    pub g_sigma_norm: f64,
    pub lambda_norm: f64,
    pub gamma_eps: f64,
    pub gamma_sigma: f64,
    /// Step sizes actually taken from `εᵐ`, after clamping and backtracking.
    pub alpha_eps: f64,
    pub alpha_sigma: f64,
    pub beta_eps: f64,
    pub beta_sigma: f64,
    /// Directions reset to `−g` at this iteration.
    pub restarted: bool,
    pub backtracks: usize,
}

impl ConvergenceRow {
    pub const HEADER: [&'static str; 15] = [
        "m",
        "F",
        "e_eps_l2",
        "e_eps_sup",
        "e_sigma_l2",
        "e_sigma_sup",
        "e_E_l2",
        "e_E_sup",
        "g_eps_norm",
        "g_sigma_norm",
        "lambda_norm",
        "gamma_eps",
        "gamma_sigma",
        "alpha_eps",
        "alpha_sigma",
    ];

    /// Values in `HEADER` order, `m` included as a float.
    pub fn values(&self) -> [f64; 15] {
        let e = &self.metrics;
        [
            self.m as f64,
            self.f,
            e.e_eps_l2,
            e.e_eps_sup,
            e.e_sigma_l2,
            e.e_sigma_sup,
            e.e_e_l2,
            e.e_e_sup,
            self.g_eps_norm,
            self.g_sigma_norm,
            self.lambda_norm,
            self.gamma_eps,
            self.gamma_sigma,
            self.alpha_eps,
            self.alpha_sigma,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceLog {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first(&self) -> Option<&ConvergenceRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&ConvergenceRow> {
        self.rows.last()
    }

    pub fn column(&self, f: impl Fn(&ConvergenceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

/// Why a CG run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EpsUpdate,
    SigmaUpdate,
    EpsGradient,
    SigmaGradient,
    MaxIterations,
}

/// Iterate of the projected CG method. `e` and `sim` always belong to the
/// current coefficients.
#[derive(Debug, Clone)]
pub struct CgState {
    pub m: usize,
    pub eps: CoefficientField,
    pub sigma: CoefficientField,
    pub g_eps: CoefficientField,
    pub g_sigma: CoefficientField,
    pub d_eps: CoefficientField,
    pub d_sigma: CoefficientField,
    pub alpha_eps: f64,
    pub alpha_sigma: f64,
    pub gamma_eps: f64,
    pub gamma_sigma: f64,
    /// `‖gᵐ⁻¹‖²`, absent before the first gradient.
    pub prev_g_eps_norm_sq: Option<f64>,
    pub prev_g_sigma_norm_sq: Option<f64>,
    pub e: SpaceTimeField,
    pub sim: BoundaryTrace,
}

impl CgState {
    /// Projects the initial guesses and solves the forward problem once.
    pub fn new(problem: &InverseProblem, eps0: &CoefficientField, sigma0: &CoefficientField) -> Result<Self> {
        problem.validate()?;
        let g = &problem.setup.grid;
        if !eps0.grid.same_space(g) || !sigma0.grid.same_space(g) {
            return Err(Error::GridMismatch("initial guess and solver grid"));
        }
        let eps = eps0.project(&problem.adm, &problem.mask);
        let sigma = sigma0.project(&problem.adm, &problem.mask);
        let e = problem.setup.solve(&eps, &sigma)?;
        let sim = BoundaryTrace::extract(&e, problem.obs.sides())?;
        let zero_e = CoefficientField::constant(g, Role::Epsilon, 0.0);
        let zero_s = CoefficientField::constant(g, Role::Sigma, 0.0);
        let (gamma_eps, gamma_sigma) = problem.reg.gammas_at(0);
        Ok(Self {
            m: 0,
            eps,
            sigma,
            g_eps: zero_e.clone(),
            g_sigma: zero_s.clone(),
            d_eps: zero_e,
            d_sigma: zero_s,
            alpha_eps: 0.0,
            alpha_sigma: 0.0,
            gamma_eps,
            gamma_sigma,
            prev_g_eps_norm_sq: None,
            prev_g_sigma_norm_sq: None,
            e,
            sim,
        })
    }

    pub fn objective(&self, problem: &InverseProblem) -> Result<f64> {
        tikhonov(
            &self.sim,
            &problem.obs,
            &self.eps,
            &self.sigma,
            &problem.reg,
            self.gamma_eps,
            self.gamma_sigma,
        )
    }
}

/// Result of one `cg_step`.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub row: ConvergenceRow,
    /// Stopping rule met at this iteration, if any.
    pub stop: Option<StopReason>,
}

fn clamp_step(raw: f64, alpha_max: f64) -> f64 {
    if raw.is_nan() {
        0.0
    } else {
        raw.clamp(-alpha_max, alpha_max)
    }
}

fn axpy_projected(
    base: &CoefficientField,
    alpha: f64,
    dir: &CoefficientField,
    adm: &AdmissibleSet,
    mask: &RegionMask,
) -> CoefficientField {
    let mut out = base.clone();
    for (v, d) in out.values.iter_mut().zip(&dir.values) {
        *v += alpha * d;
    }
    out.project_in_place(adm, mask);
    out
}

fn distance(a: &CoefficientField, b: &CoefficientField) -> f64 {
    let w = a.grid.area_weights();
    let s: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&w)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum();
    math::sqrt(s)
}

/// Iteration `m`: gradient at `(εᵐ, σᵐ)`, Fletcher–Reeves direction,
/// clamped step with backtracking, projected update to `m + 1`.
pub fn cg_step(state: &mut CgState, problem: &InverseProblem, opts: &CgaOptions) -> Result<StepOutcome> {
    let setup = &problem.setup;
    let (gamma_eps, gamma_sigma) = problem.reg.gammas_at(state.m);
    state.gamma_eps = gamma_eps;
    state.gamma_sigma = gamma_sigma;

    let residual = state.sim.difference(&problem.obs)?;
    let lambda = solve_adjoint(&setup.grid, &state.eps, &state.sigma, &residual, &setup.bc, &setup.source)?;
    let (g_eps, g_sigma) = assemble_gradients(
        &state.e,
        &lambda,
        &state.eps,
        &state.sigma,
        &problem.reg,
        gamma_eps,
        gamma_sigma,
        &problem.mask,
    )?;
    let g_eps_sq = field_inner(&g_eps, &g_eps);
    let g_sigma_sq = field_inner(&g_sigma, &g_sigma);

    let mut beta_eps = state.prev_g_eps_norm_sq.map_or(0.0, |p| fletcher_reeves(g_eps_sq, p));
    let mut beta_sigma = state.prev_g_sigma_norm_sq.map_or(0.0, |p| fletcher_reeves(g_sigma_sq, p));
    let mut restarted = state.m == 0;
    if beta_eps > opts.beta_max || state.prev_g_eps_norm_sq == Some(0.0) {
        beta_eps = 0.0;
        restarted = true;
    }
    if beta_sigma > opts.beta_max || state.prev_g_sigma_norm_sq == Some(0.0) {
        beta_sigma = 0.0;
        restarted = true;
    }
    let direction = |g: &CoefficientField, d_prev: &CoefficientField, beta: f64| {
        let mut d = g.clone();
        for (v, p) in d.values.iter_mut().zip(&d_prev.values) {
            *v = -*v + beta * p;
        }
        d
    };
    let d_eps = direction(&g_eps, &state.d_eps, beta_eps);
    let d_sigma = direction(&g_sigma, &state.d_sigma, beta_sigma);

    let mut alpha_eps = clamp_step(
        raw_step_size(field_inner(&g_eps, &d_eps), field_inner(&d_eps, &d_eps), gamma_eps),
        opts.alpha_max,
    );
    let mut alpha_sigma = clamp_step(
        raw_step_size(field_inner(&g_sigma, &d_sigma), field_inner(&d_sigma, &d_sigma), gamma_sigma),
        opts.alpha_max,
    );

    let f_now = state.objective(problem)?;
    let metrics = problem.metrics(&state.eps, &state.sigma, &state.sim);

    // trial steps, halved while F(γᵐ) would increase
    let mut backtracks = 0;
    let mut accepted = None;
    loop {
        let eps_t = axpy_projected(&state.eps, alpha_eps, &d_eps, &problem.adm, &problem.mask);
        let sigma_t = axpy_projected(&state.sigma, alpha_sigma, &d_sigma, &problem.adm, &problem.mask);
        let e_t = setup.solve(&eps_t, &sigma_t)?;
        let sim_t = BoundaryTrace::extract(&e_t, problem.obs.sides())?;
        let f_t = tikhonov(&sim_t, &problem.obs, &eps_t, &sigma_t, &problem.reg, gamma_eps, gamma_sigma)?;
        if f_t <= f_now {
            accepted = Some((eps_t, sigma_t, e_t, sim_t));
            break;
        }
        if backtracks == opts.max_backtracks {
            break;
        }
        backtracks += 1;
        alpha_eps *= 0.5;
        alpha_sigma *= 0.5;
    }
    if accepted.is_none() {
        alpha_eps = 0.0;
        alpha_sigma = 0.0;
    }

    let row = ConvergenceRow {
        m: state.m,
        f: f_now,
        metrics,
        g_eps_norm: math::sqrt(g_eps_sq),
        g_sigma_norm: math::sqrt(g_sigma_sq),
        lambda_norm: lambda.l2_norm(),
        gamma_eps,
        gamma_sigma,
        alpha_eps,
        alpha_sigma,
        beta_eps,
        beta_sigma,
        restarted,
        backtracks,
    };

    let (step_eps, step_sigma) = match accepted {
        Some((eps_t, sigma_t, e_t, sim_t)) => {
            let de = distance(&eps_t, &state.eps);
            let ds = distance(&sigma_t, &state.sigma);
            state.eps = eps_t;
            state.sigma = sigma_t;
            state.e = e_t;
            state.sim = sim_t;
            (de, ds)
        }
        None => (0.0, 0.0),
    };

    let tol = &opts.tolerances;
    let stop = if step_eps < tol.eta1_eps {
        Some(StopReason::EpsUpdate)
    } else if step_sigma < tol.eta1_sigma {
        Some(StopReason::SigmaUpdate)
    } else if row.g_eps_norm < tol.eta2_eps {
        Some(StopReason::EpsGradient)
    } else if row.g_sigma_norm < tol.eta2_sigma {
        Some(StopReason::SigmaGradient)
    } else {
        None
    };

    state.g_eps = g_eps;
    state.g_sigma = g_sigma;
    state.d_eps = d_eps;
    state.d_sigma = d_sigma;
    state.alpha_eps = alpha_eps;
    state.alpha_sigma = alpha_sigma;
    state.prev_g_eps_norm_sq = Some(g_eps_sq);
    state.prev_g_sigma_norm_sq = Some(g_sigma_sq);
    state.m += 1;
    Ok(StepOutcome { row, stop })
}

/// Output of a CG run.
#[derive(Debug, Clone)]
pub struct CgaResult {
    pub eps: CoefficientField,
    pub sigma: CoefficientField,
    pub log: ConvergenceLog,
    /// Iterations performed (`M`).
    pub iterations: usize,
    pub stop: StopReason,
    /// Metrics and `F` of the returned coefficients.
    pub final_metrics: ErrorMetrics,
    pub final_f: f64,
    /// Gradient norms of the last completed iteration, zero if none ran.
    pub final_g_eps_norm: f64,
    pub final_g_sigma_norm: f64,
    /// The forward field of the returned coefficients.
    pub e: SpaceTimeField,
}

/// Runs `cg_step` until a stopping rule fires or the iteration cap is hit.
pub fn run_cga(
    problem: &InverseProblem,
    eps0: &CoefficientField,
    sigma0: &CoefficientField,
    opts: &CgaOptions,
) -> Result<CgaResult> {
    run_cga_with(problem, eps0, sigma0, opts, |_| {})
}

/// As [`run_cga`], calling `on_row` after each iteration.
pub fn run_cga_with(
    problem: &InverseProblem,
    eps0: &CoefficientField,
    sigma0: &CoefficientField,
    opts: &CgaOptions,
    mut on_row: impl FnMut(&ConvergenceRow),
) -> Result<CgaResult> {
    opts.validate()?;
    let mut state = CgState::new(problem, eps0, sigma0)?;
    let mut log = ConvergenceLog::default();
    let mut stop = StopReason::MaxIterations;
    while state.m < opts.tolerances.max_iterations {
        let out = cg_step(&mut state, problem, opts)?;
        on_row(&out.row);
        log.rows.push(out.row);
        if let Some(r) = out.stop {
            stop = r;
            break;
        }
    }
    let (ge, gs) = problem.reg.gammas_at(state.m);
    let final_f = tikhonov(&state.sim, &problem.obs, &state.eps, &state.sigma, &problem.reg, ge, gs)?;
    let final_metrics = problem.metrics(&state.eps, &state.sigma, &state.sim);
    let (final_g_eps_norm, final_g_sigma_norm) = log.last().map_or((0.0, 0.0), |r| (r.g_eps_norm, r.g_sigma_norm));
    Ok(CgaResult {
        iterations: log.len(),
        eps: state.eps,
        sigma: state.sigma,
        log,
        stop,
        final_metrics,
        final_f,
        final_g_eps_norm,
        final_g_sigma_norm,
        e: state.e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndicatorMode {
    /// `|h·v|`, as printed; a constant field flags every cell.
    Absolute,
    /// `|h·(v − background)|`.
    Deviation,
}

/// Cells flagged for refinement, `nx·ny` entries in row-major cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementFlags {
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<bool>,
    pub max_eps: f64,
    pub max_sigma: f64,
}

impl RefinementFlags {
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// `(ci, cj)` of flagged cells.
    pub fn flagged(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nx = self.nx;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(move |(c, _)| (c % nx, c / nx))
    }
}

fn cell_indicator(field: &CoefficientField, bg: f64) -> Vec<f64> {
    let g = &field.grid;
    let h = g.h;
    let v = |i, j| (h * (field.values[g.index(i, j)] - bg)).abs();
    let mut out = Vec::with_capacity(g.nx * g.ny);
    for cj in 0..g.ny {
        for ci in 0..g.nx {
            out.push(0.25 * (v(ci, cj) + v(ci + 1, cj) + v(ci, cj + 1) + v(ci + 1, cj + 1)));
        }
    }
    out
}

/// Flags cells whose indicator reaches `β̃` times its maximum, for `ε` or `σ`.
pub fn refinement_flags(
    eps: &CoefficientField,
    sigma: &CoefficientField,
    beta_eps: f64,
    beta_sigma: f64,
    mode: IndicatorMode,
    adm: &AdmissibleSet,
) -> Result<RefinementFlags> {
    if !eps.grid.same_space(&sigma.grid) {
        return Err(Error::GridMismatch("ε and σ for refinement"));
    }
    if !(beta_eps > 0.0 && beta_eps < 1.0 && beta_sigma > 0.0 && beta_sigma < 1.0) {
        return Err(Error::InvalidParameter("refinement fractions must lie in (0, 1)".into()));
    }
    let (bg_e, bg_s) = match mode {
        IndicatorMode::Absolute => (0.0, 0.0),
        IndicatorMode::Deviation => (adm.background(Role::Epsilon), adm.background(Role::Sigma)),
    };
    let ie = cell_indicator(eps, bg_e);
    let is = cell_indicator(sigma, bg_s);
    let max_e = ie.iter().copied().fold(0.0, f64::max);
    let max_s = is.iter().copied().fold(0.0, f64::max);
    let cells = ie
        .iter()
        .zip(&is)
        .map(|(&a, &b)| (max_e > 0.0 && a >= beta_eps * max_e) || (max_s > 0.0 && b >= beta_sigma * max_s))
        .collect();
    Ok(RefinementFlags {
        nx: eps.grid.nx,
        ny: eps.grid.ny,
        cells,
        max_eps: max_e,
        max_sigma: max_s,
    })
}

/// Stopping rules between refinement levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcgaTolerances {
    /// Change `‖ε_{k+1} − ε_k‖` between consecutive levels.
    pub theta1_eps: f64,
    pub theta1_sigma: f64,
    /// Final gradient norm of a level.
    pub theta2_eps: f64,
    pub theta2_sigma: f64,
    /// Number of refinements `N`.
    pub max_refinements: usize,
}

impl Default for AcgaTolerances {
    fn default() -> Self {
        Self {
            theta1_eps: 1e-8,
            theta1_sigma: 1e-8,
            theta2_eps: 1e-8,
            theta2_sigma: 1e-8,
            max_refinements: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcgaOptions {
    pub cga: CgaOptions,
    pub tolerances: AcgaTolerances,
    pub beta_eps: f64,
    pub beta_sigma: f64,
    pub mode: IndicatorMode,
}

impl Default for AcgaOptions {
    fn default() -> Self {
        Self {
            cga: CgaOptions::default(),
            tolerances: AcgaTolerances::default(),
            beta_eps: 0.8,
            beta_sigma: 0.8,
            mode: IndicatorMode::Deviation,
        }
    }
}

/// One row of the level report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    pub nno: usize,
    pub g_eps_norm_per_node: f64,
    pub g_sigma_norm_per_node: f64,
    pub max_eps: f64,
    pub max_sigma: f64,
    pub iterations: usize,
}

impl LevelReport {
    pub const HEADER: [&'static str; 7] = [
        "level",
        "nno",
        "g_eps_norm_per_node",
        "g_sigma_norm_per_node",
        "max_eps",
        "max_sigma",
        "M_k",
    ];
}

#[derive(Debug, Clone)]
pub struct LevelResult {
    pub problem: InverseProblem,
    pub result: CgaResult,
    pub flags: RefinementFlags,
    pub report: LevelReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcgaStop {
    NoFlags,
    EpsChange,
    SigmaChange,
    EpsGradient,
    SigmaGradient,
    MaxRefinements,
}

#[derive(Debug, Clone)]
pub struct AcgaResult {
    pub levels: Vec<LevelResult>,
    pub stop: AcgaStop,
}

impl AcgaResult {
    pub fn final_level(&self) -> &LevelResult {
        self.levels.last().expect("at least one level")
    }
}

/// Moves an inverse problem and a pair of coefficients to the factor-2
/// refinement of its grid. The frame keeps its physical width and the
/// transferred coefficients become the priors.
///
/// Observations are resampled from `obs_source`, which may live on any grid
/// of the same domain (typically the finest one, so that no level fits data
/// interpolated from a coarser simulation).
pub fn transfer_to_refined(
    problem: &InverseProblem,
    obs_source: &BoundaryTrace,
    frame_width: usize,
    eps: &CoefficientField,
    sigma: &CoefficientField,
) -> Result<(InverseProblem, CoefficientField, CoefficientField)> {
    let fine = problem.setup.grid.refine();
    let setup = problem.setup.on_grid(fine);
    let obs = obs_source.resample_to(&fine)?;
    let mask = RegionMask::new(&fine, 2 * frame_width)?;
    let eps_f = eps.refine_to(&fine)?.project(&problem.adm, &mask);
    let sigma_f = sigma.refine_to(&fine)?.project(&problem.adm, &mask);
    // the transferred reconstruction is the initial guess, hence the prior,
    // of the next CG run
    let reg = RegularizationParams {
        prior_eps: eps_f.clone(),
        prior_sigma: sigma_f.clone(),
        ..problem.reg.clone()
    };
    let truth = match &problem.truth {
        Some(t) => Some(Truth {
            eps: t.eps.refine_to(&fine)?,
            sigma: t.sigma.refine_to(&fine)?,
        }),
        None => None,
    };
    let refined = InverseProblem {
        setup,
        obs,
        reg,
        adm: problem.adm,
        mask,
        truth,
    };
    Ok((refined, eps_f, sigma_f))
}

/// Adaptive driver: a CG run per level, refining while cells are flagged
/// and the level-to-level stopping rules are not met. `obs_source` is
/// resampled onto every level; `problem.obs` must already equal it on the
/// level-0 grid.
pub fn run_acga(
    problem: &InverseProblem,
    obs_source: &BoundaryTrace,
    frame_width: usize,
    eps0: &CoefficientField,
    sigma0: &CoefficientField,
    opts: &AcgaOptions,
) -> Result<AcgaResult> {
    run_acga_with(problem, obs_source, frame_width, eps0, sigma0, opts, |_, _| {})
}

pub fn run_acga_with(
    problem: &InverseProblem,
    obs_source: &BoundaryTrace,
    frame_width: usize,
    eps0: &CoefficientField,
    sigma0: &CoefficientField,
    opts: &AcgaOptions,
    mut on_row: impl FnMut(usize, &ConvergenceRow),
) -> Result<AcgaResult> {
    let tol = &opts.tolerances;
    let mut levels: Vec<LevelResult> = Vec::new();
    let mut current = problem.clone();
    let mut eps = eps0.clone();
    let mut sigma = sigma0.clone();
    let mut k = 0;
    loop {
        let start_eps = eps.clone();
        let start_sigma = sigma.clone();
        let result = run_cga_with(&current, &eps, &sigma, &opts.cga, |row| on_row(k, row))?;
        let flags = refinement_flags(&result.eps, &result.sigma, opts.beta_eps, opts.beta_sigma, opts.mode, &current.adm)?;
        let nno = current.setup.grid.node_count();
        let report = LevelReport {
            level: k,
            nno,
            g_eps_norm_per_node: result.final_g_eps_norm / nno as f64,
            g_sigma_norm_per_node: result.final_g_sigma_norm / nno as f64,
            max_eps: result.eps.max(),
            max_sigma: result.sigma.max(),
            iterations: result.iterations,
        };

        let stop = if k > 0 && distance(&result.eps, &start_eps) < tol.theta1_eps {
            Some(AcgaStop::EpsChange)
        } else if k > 0 && distance(&result.sigma, &start_sigma) < tol.theta1_sigma {
            Some(AcgaStop::SigmaChange)
        } else if result.iterations > 0 && result.final_g_eps_norm < tol.theta2_eps {
            Some(AcgaStop::EpsGradient)
        } else if result.iterations > 0 && result.final_g_sigma_norm < tol.theta2_sigma {
            Some(AcgaStop::SigmaGradient)
        } else if flags.is_empty() {
            Some(AcgaStop::NoFlags)
        } else if k >= tol.max_refinements {
            Some(AcgaStop::MaxRefinements)
        } else {
            None
        };

        let (next_eps, next_sigma) = (result.eps.clone(), result.sigma.clone());
        levels.push(LevelResult {
            problem: current.clone(),
            result,
            flags,
            report,
        });
        if let Some(stop) = stop {
            return Ok(AcgaResult { levels, stop });
        }
        let (p, e, s) = transfer_to_refined(&current, obs_source, frame_width << k, &next_eps, &next_sigma)?;
        current = p;
        eps = e;
        sigma = s;
        k += 1;
    }
}
