//! The subcommands. Each one reads a [`RunConfig`], writes its outputs
//! under `out` and records the effective config as `manifest.ini`.

use std::path::{Path, PathBuf};
use std::thread;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavecip_core::adjoint::solve_adjoint;
use wavecip_core::forward::WaveSetup;
use wavecip_core::gradient::{assemble_gradients, relative_mismatch, FdContext};
use wavecip_core::objective::RegularizationParams;
use wavecip_core::optimizer::{
    run_acga_with, run_cga_with, AcgaOptions, AcgaResult, CgaResult, ConvergenceRow, InverseProblem, Truth,
};
use wavecip_core::{add_noise, BoundaryTrace, CoefficientField, Grid2D, RegionMask, Role, SpaceTimeField};

use crate::config::{CheckPoint, CoefficientKind, CoefficientSpec, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{self, GradCheckRow};

pub const MANIFEST: &str = "manifest.ini";

#[derive(Debug, Clone)]
pub struct RunContext {
    pub out: PathBuf,
    pub quiet: bool,
}

impl RunContext {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn start(&self, cfg: &RunConfig) -> Result<()> {
        io::create_dir(&self.out)?;
        io::write_text(&self.path(MANIFEST), &cfg.to_ini())
    }
}

/// Builds a coefficient on `target`, a refinement (possibly zero times) of
/// the configured grid `base`. File fields are read on `base`.
fn build_coefficient(
    spec: &CoefficientSpec,
    base: &Grid2D,
    target: &Grid2D,
    role: Role,
    truth: Option<&CoefficientField>,
) -> Result<CoefficientField> {
    let field = match &spec.kind {
        CoefficientKind::Constant(v) => CoefficientField::constant(target, role, *v),
        CoefficientKind::Gaussian {
            base: b,
            amplitude,
            center,
            width,
        } => CoefficientField::gaussian(target, role, *b, *amplitude, *center, *width)?,
        CoefficientKind::File(path) => {
            let mut f = io::read_coefficient_csv(path, base, role)?;
            while !f.grid.same_space(target) {
                if f.grid.nx >= target.nx {
                    return Err(CliError::input(path, "field grid is not nested in the target grid"));
                }
                f = f.refine_to(&f.grid.refine())?;
            }
            f
        }
        CoefficientKind::Truth => truth.expect("truth is built before the initial guess").clone(),
    };
    Ok(if spec.bump != 0.0 {
        field.with_polynomial_bump(spec.bump)
    } else {
        field
    })
}

struct Coefficients {
    truth_eps: CoefficientField,
    truth_sigma: CoefficientField,
    initial_eps: CoefficientField,
    initial_sigma: CoefficientField,
}

fn coefficients(cfg: &RunConfig, base: &Grid2D, target: &Grid2D) -> Result<Coefficients> {
    let truth_eps = build_coefficient(&cfg.truth_eps, base, target, Role::Epsilon, None)?;
    let truth_sigma = build_coefficient(&cfg.truth_sigma, base, target, Role::Sigma, None)?;
    let initial_eps = build_coefficient(&cfg.initial_eps, base, target, Role::Epsilon, Some(&truth_eps))?;
    let initial_sigma = build_coefficient(&cfg.initial_sigma, base, target, Role::Sigma, Some(&truth_sigma))?;
    Ok(Coefficients {
        truth_eps,
        truth_sigma,
        initial_eps,
        initial_sigma,
    })
}

fn setup(cfg: &RunConfig, grid: Grid2D) -> WaveSetup {
    WaveSetup::new(grid, cfg.source, cfg.boundary)
}

/// The grid the observations live on.
pub fn observation_grid(cfg: &RunConfig) -> Result<Grid2D> {
    let mut g = cfg.grid.build()?;
    for _ in 0..cfg.observation.refinement {
        g = g.refine();
    }
    Ok(g)
}

fn write_snapshots(ctx: &RunContext, field: &SpaceTimeField, every: usize) -> Result<()> {
    if every == 0 {
        return Ok(());
    }
    for n in (0..field.levels()).step_by(every) {
        io::write_vtk(&ctx.path(&format!("E_{n}.vtk")), "E", &field.grid, field.snapshot(n))?;
    }
    Ok(())
}

/// Solves the forward problem with the true coefficients.
pub fn forward(cfg: &RunConfig, ctx: &RunContext) -> Result<()> {
    let g = cfg.grid.build()?;
    let c = coefficients(cfg, &g, &g)?;
    ctx.start(cfg)?;
    ctx.say(format!("forward: {}x{} cells, dt = {:.4e}, {} steps", g.nx, g.ny, g.dt, g.nt));
    let e = setup(cfg, g).solve(&c.truth_eps, &c.truth_sigma)?;
    let trace = BoundaryTrace::extract(&e, cfg.observation.sides)?;
    io::write_trace(&ctx.path("trace.csv"), &trace)?;
    write_snapshots(ctx, &e, cfg.output.snapshot_every)
}

/// Clean and noisy traces of the true coefficients on the observation grid.
pub fn synthesize(cfg: &RunConfig, ctx: &RunContext) -> Result<()> {
    let base = cfg.grid.build()?;
    let g = observation_grid(cfg)?;
    let c = coefficients(cfg, &base, &g)?;
    ctx.start(cfg)?;
    ctx.say(format!(
        "synthesize: {}x{} cells, noise {:?} level {} seed {}",
        g.nx, g.ny, cfg.noise.model, cfg.noise.level, cfg.noise.seed
    ));
    let e = setup(cfg, g).solve(&c.truth_eps, &c.truth_sigma)?;
    let clean = BoundaryTrace::extract(&e, cfg.observation.sides)?;
    let noisy = add_noise(&clean, cfg.noise.model, cfg.noise.level, cfg.noise.seed)?;
    io::write_trace(&ctx.path("trace.csv"), &clean)?;
    io::write_trace(&ctx.path("obs.csv"), &noisy)
}

fn observation_path(cfg: &RunConfig, ctx: &RunContext) -> PathBuf {
    cfg.observation.file.clone().unwrap_or_else(|| ctx.path("obs.csv"))
}

/// The inverse problem on the configured grid plus the observation trace on
/// its own grid and the initial guesses.
fn inverse_problem(
    cfg: &RunConfig,
    obs_path: &Path,
) -> Result<(InverseProblem, BoundaryTrace, CoefficientField, CoefficientField)> {
    let g = cfg.grid.build()?;
    let c = coefficients(cfg, &g, &g)?;
    let source = io::read_trace(obs_path, &observation_grid(cfg)?, cfg.observation.sides)?;
    let obs = source.resample_to(&g)?;
    let reg = RegularizationParams {
        gamma_eps0: cfg.regularization.gamma_eps,
        gamma_sigma0: cfg.regularization.gamma_sigma,
        p: cfg.regularization.p,
        prior_eps: c.initial_eps.clone(),
        prior_sigma: c.initial_sigma.clone(),
    };
    let problem = InverseProblem {
        setup: setup(cfg, g),
        obs,
        reg,
        adm: cfg.admissible,
        mask: RegionMask::new(&g, cfg.grid.frame_width)?,
        truth: Some(Truth {
            eps: c.truth_eps,
            sigma: c.truth_sigma,
        }),
    };
    problem.validate()?;
    Ok((problem, source, c.initial_eps, c.initial_sigma))
}

fn progress(ctx: &RunContext, prefix: &str, row: &ConvergenceRow) {
    ctx.say(format!(
        "{prefix}m = {:3}  F = {:.6e}  e_eps = {:.4}  e_sigma = {:.4}  e_E = {:.4}",
        row.m, row.f, row.metrics.e_eps_l2, row.metrics.e_sigma_l2, row.metrics.e_e_l2
    ));
}

fn write_reconstruction(cfg: &RunConfig, dir: &Path, result: &CgaResult) -> Result<()> {
    for (name, field) in [("eps_final", &result.eps), ("sigma_final", &result.sigma)] {
        io::write_coefficient_csv(&dir.join(format!("{name}.csv")), field)?;
        if cfg.output.vtk {
            io::write_vtk(&dir.join(format!("{name}.vtk")), name, &field.grid, &field.values)?;
        }
    }
    io::write_convergence(&dir.join("convergence.csv"), &result.log.rows)
}

/// Conjugate-gradient reconstruction on the configured grid.
pub fn invert(cfg: &RunConfig, ctx: &RunContext) -> Result<CgaResult> {
    let obs_path = observation_path(cfg, ctx);
    let (problem, _, eps0, sigma0) = inverse_problem(cfg, &obs_path)?;
    ctx.start(cfg)?;
    let result = run_cga_with(&problem, &eps0, &sigma0, &cfg.cga, |row| progress(ctx, "", row))?;
    ctx.say(format!("stopped after {} iterations: {:?}", result.iterations, result.stop));
    write_reconstruction(cfg, &ctx.out, &result)?;
    Ok(result)
}

/// Adaptive reconstruction; one `level_k/` directory per grid.
pub fn invert_adaptive(cfg: &RunConfig, ctx: &RunContext) -> Result<AcgaResult> {
    let obs_path = observation_path(cfg, ctx);
    let (problem, source, eps0, sigma0) = inverse_problem(cfg, &obs_path)?;
    ctx.start(cfg)?;
    let opts = AcgaOptions {
        cga: cfg.cga,
        tolerances: cfg.acga.tolerances,
        beta_eps: cfg.acga.beta_eps,
        beta_sigma: cfg.acga.beta_sigma,
        mode: cfg.acga.mode,
    };
    let result = run_acga_with(&problem, &source, cfg.grid.frame_width, &eps0, &sigma0, &opts, |k, row| {
        progress(ctx, &format!("level {k}: "), row)
    })?;
    ctx.say(format!("{} levels, stopped: {:?}", result.levels.len(), result.stop));
    for level in &result.levels {
        let dir = ctx.path(&format!("level_{}", level.report.level));
        io::create_dir(&dir)?;
        write_reconstruction(cfg, &dir, &level.result)?;
        io::write_flags(&dir.join("flags.csv"), &level.problem.setup.grid, &level.flags)?;
    }
    let reports: Vec<_> = result.levels.iter().map(|l| l.report).collect();
    io::write_levels(&ctx.path("levels.csv"), &reports)?;
    Ok(result)
}

/// Outcome of a gradient check that ran to completion.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    /// Rows that were judged and exceeded the tolerance.
    pub failures: usize,
    pub judged: usize,
}

/// Compares the adjoint gradient with central finite differences of `F`.
/// Exits through [`CliError::CheckFailed`] when a judged node is off.
pub fn grad_check(cfg: &RunConfig, ctx: &RunContext) -> Result<GradCheckReport> {
    let gc = &cfg.gradcheck;
    let g = cfg.grid.build()?;
    let c = coefficients(cfg, &g, &g)?;
    let mask = RegionMask::new(&g, cfg.grid.frame_width)?;
    let setup = setup(cfg, g);
    let (eps, sigma) = match gc.point {
        CheckPoint::Initial => (c.initial_eps.clone(), c.initial_sigma.clone()),
        CheckPoint::Midpoint => {
            let mid = |a: &CoefficientField, b: &CoefficientField| {
                let mut m = a.clone();
                m.values.iter_mut().zip(&b.values).for_each(|(v, w)| *v = 0.5 * (*v + w));
                m
            };
            (mid(&c.initial_eps, &c.truth_eps), mid(&c.initial_sigma, &c.truth_sigma))
        }
    };
    let eps = eps.project(&cfg.admissible, &mask);
    let sigma = sigma.project(&cfg.admissible, &mask);

    let obs = match &cfg.observation.file {
        Some(p) => io::read_trace(p, &observation_grid(cfg)?, cfg.observation.sides)?.resample_to(&g)?,
        None => {
            let e = setup.solve(&c.truth_eps, &c.truth_sigma)?;
            let clean = BoundaryTrace::extract(&e, cfg.observation.sides)?;
            add_noise(&clean, cfg.noise.model, cfg.noise.level, cfg.noise.seed)?
        }
    };
    let reg = RegularizationParams {
        gamma_eps0: cfg.regularization.gamma_eps,
        gamma_sigma0: cfg.regularization.gamma_sigma,
        p: cfg.regularization.p,
        prior_eps: c.initial_eps,
        prior_sigma: c.initial_sigma,
    };
    let (gamma_eps, gamma_sigma) = reg.gammas_at(0);

    let nodes: Vec<usize> = match &gc.nodes {
        Some(list) => list.iter().map(|&(i, j)| g.index(i, j)).collect(),
        None => {
            let inner: Vec<usize> = mask.inner_nodes().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(gc.seed);
            inner.choose_multiple(&mut rng, gc.count.min(inner.len())).copied().collect()
        }
    };
    ctx.start(cfg)?;
    ctx.say(format!("grad-check: {} nodes on {}x{}, h_fd = {:e}", nodes.len(), g.nx, g.ny, gc.h_fd));

    let e = setup.solve(&eps, &sigma)?;
    let residual = BoundaryTrace::extract(&e, obs.sides())?.difference(&obs)?;
    let lambda = solve_adjoint(&g, &eps, &sigma, &residual, &setup.bc, &setup.source)?;
    let (g_eps, g_sigma) = assemble_gradients(&e, &lambda, &eps, &sigma, &reg, gamma_eps, gamma_sigma, &mask)?;

    let fd_ctx = FdContext {
        setup: &setup,
        eps: &eps,
        sigma: &sigma,
        obs: &obs,
        reg: &reg,
        gamma_eps,
        gamma_sigma,
        mask: &mask,
        adm: &cfg.admissible,
    };
    let tasks: Vec<(usize, Role)> = nodes
        .iter()
        .flat_map(|&k| [(k, Role::Epsilon), (k, Role::Sigma)])
        .collect();
    let fd = parallel_probes(&fd_ctx, &tasks, gc.h_fd)?;

    let sign = if gc.flip_sign { -1.0 } else { 1.0 };
    let rows: Vec<GradCheckRow> = tasks
        .iter()
        .zip(&fd)
        .map(|(&(k, which), &fd)| {
            let adjoint = sign
                * match which {
                    Role::Epsilon => g_eps.values[k],
                    Role::Sigma => g_sigma.values[k],
                };
            let (x, y) = g.coords(k);
            GradCheckRow {
                x,
                y,
                which,
                adjoint,
                fd,
                rel_err: relative_mismatch(adjoint, fd),
            }
        })
        .collect();
    io::write_gradcheck(&ctx.path("gradcheck.csv"), &rows)?;

    // nodes where F is nearly flat compared with the sample are not judged
    let scale = |role: Role| {
        rows.iter()
            .filter(|r| r.which == role)
            .map(|r| r.fd.abs())
            .fold(0.0, f64::max)
    };
    let (max_eps, max_sigma) = (scale(Role::Epsilon), scale(Role::Sigma));
    let mut judged = 0;
    let mut failures = 0;
    for r in &rows {
        let max = if r.which == Role::Epsilon { max_eps } else { max_sigma };
        if r.fd.abs() >= gc.threshold * max && max > 0.0 {
            judged += 1;
            if !(r.rel_err <= gc.tolerance) {
                failures += 1;
            }
        }
        ctx.say(format!(
            "({:.4}, {:.4}) {:5}  adjoint {:+.6e}  fd {:+.6e}  rel {:.3e}",
            r.x,
            r.y,
            if r.which == Role::Epsilon { "eps" } else { "sigma" },
            r.adjoint,
            r.fd,
            r.rel_err
        ));
    }
    if failures > 0 {
        return Err(CliError::CheckFailed(format!(
            "{failures} of {judged} judged entries exceed relative mismatch {}",
            gc.tolerance
        )));
    }
    ctx.say(format!("all {judged} judged entries within {}", gc.tolerance));
    Ok(GradCheckReport { rows, failures, judged })
}

/// Finite-difference probes spread over the available cores, in task order.
fn parallel_probes(ctx: &FdContext<'_>, tasks: &[(usize, Role)], h_fd: f64) -> Result<Vec<f64>> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(tasks.len().max(1));
    let chunk = tasks.len().div_ceil(workers).max(1);
    thread::scope(|s| {
        let handles: Vec<_> = tasks
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|&(k, which)| ctx.probe(k, which, h_fd))
                        .collect::<wavecip_core::Result<Vec<f64>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(tasks.len());
        for h in handles {
            out.extend(h.join().expect("probe thread panicked")?);
        }
        Ok(out)
    })
}
