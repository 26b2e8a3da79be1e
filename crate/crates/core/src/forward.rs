//! Explicit leapfrog solver for `ε ∂ₜₜE + σ ∂ₜE − ΔE = f`.
//!
//! The scheme is written in mass-weighted form. With `M` the trapezoidal
//! nodal weights, `K` the ghost-node Neumann stiffness (so `−M⁻¹K` is the
//! 5-point Laplacian with mirrored ghosts) and `A` the line weights of the
//! currently absorbing sides, step `n` reads
//!
//! ```text
//! Mε (Eⁿ⁺¹ − 2Eⁿ + Eⁿ⁻¹)/dt² + (Mσ + A)(Eⁿ⁺¹ − Eⁿ⁻¹)/(2dt) + K Eⁿ = M fⁿ + B gⁿ
//! ```
//!
//! where `B gⁿ` collects the Neumann data `∂ₙE = g` of source or prescribed
//! sides. Dividing by `M` gives the per-node update with ghost values
//! `ghost = mirror + 2h·∂ₙE`; the absorbing condition `∂ₙE = −∂ₜE` uses the
//! centred time difference so every node stays explicit. The first step is
//! the Taylor start, i.e. step 0 with `E⁻¹ = E¹ − 2dt·f₁`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fields::{BoundaryTrace, CoefficientField, FieldRole, Side, SideSet, SpaceTimeField};
use crate::grid::Grid2D;
use crate::math;

/// Boundary condition of one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// `∂ₙE = a·sin(ωt)` while `t ≤ t_on`, absorbing afterwards.
    SourceThenAbsorbing,
    /// First-order absorbing `∂ₙE = −∂ₜE`.
    Absorbing,
    NeumannZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BcConfig {
    /// Indexed by side number − 1 (left, bottom, right, top).
    pub sides: [BoundaryCondition; 4],
}

impl Default for BcConfig {
    /// Plane wave from the left, absorbing right side, reflecting top and bottom.
    fn default() -> Self {
        use BoundaryCondition::*;
        Self {
            sides: [SourceThenAbsorbing, NeumannZero, Absorbing, NeumannZero],
        }
    }
}

impl BcConfig {
    pub fn all(bc: BoundaryCondition) -> Self {
        Self { sides: [bc; 4] }
    }

    pub fn get(&self, s: Side) -> BoundaryCondition {
        self.sides[s.slot()]
    }

    pub fn set(&mut self, s: Side, bc: BoundaryCondition) {
        self.sides[s.slot()] = bc;
    }

    pub fn validate(&self) -> Result<()> {
        let sources = self
            .sides
            .iter()
            .filter(|b| **b == BoundaryCondition::SourceThenAbsorbing)
            .count();
        if sources > 1 {
            return Err(Error::InvalidParameter(
                "at most one side may carry the source".into(),
            ));
        }
        Ok(())
    }

    /// Sides absorbing at time `t`.
    pub fn absorbing_at(&self, t: f64, source: &SourceSpec) -> SideSet {
        let mut set = SideSet::empty();
        for s in Side::ALL {
            match self.get(s) {
                BoundaryCondition::Absorbing => set.insert(s),
                BoundaryCondition::SourceThenAbsorbing if !source.is_on(t) => set.insert(s),
                _ => {}
            }
        }
        set
    }

    /// Side driven by the source at time `t`, if any.
    pub fn source_at(&self, t: f64, source: &SourceSpec) -> Option<Side> {
        Side::ALL
            .into_iter()
            .find(|s| self.get(*s) == BoundaryCondition::SourceThenAbsorbing && source.is_on(t))
    }
}

/// Windowed sinusoidal Neumann source `∂ₙE = amplitude·sin(ωt)` for `t ≤ t_on`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub omega: f64,
    pub t_on: f64,
    pub amplitude: f64,
}

impl Default for SourceSpec {
    /// One period of `sin(20t)`.
    fn default() -> Self {
        Self::one_period(20.0)
    }
}

impl SourceSpec {
    pub fn one_period(omega: f64) -> Self {
        Self {
            omega,
            t_on: 2.0 * core::f64::consts::PI / omega,
            amplitude: 1.0,
        }
    }

    pub fn silent() -> Self {
        Self {
            amplitude: 0.0,
            ..Self::default()
        }
    }

    #[inline]
    pub fn is_on(&self, t: f64) -> bool {
        t <= self.t_on
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * math::sin(self.omega * t)
    }
}

/// Volumetric right-hand side `f(x, y, t)`.
#[derive(Clone, Copy)]
pub enum VolumeForcing<'a> {
    Analytic(&'a dyn Fn(f64, f64, f64) -> f64),
    Sampled(&'a SpaceTimeField),
}

/// Ghost-node stencil data shared by the forward and adjoint marches.
pub(crate) struct WaveStencil {
    pub grid: Grid2D,
    pub mass: Vec<f64>,
    /// `Mε/dt²`
    pub inertia: Vec<f64>,
    /// `Mσ/(2dt)`
    pub damping: Vec<f64>,
}

impl WaveStencil {
    pub fn new(grid: &Grid2D, eps: &CoefficientField, sigma: &CoefficientField) -> Result<Self> {
        if !eps.grid.same_space(grid) || !sigma.grid.same_space(grid) {
            return Err(Error::GridMismatch("coefficients and solver grid"));
        }
        let limit = grid.cfl_bound(eps.min());
        if !(eps.min() > 0.0) || grid.dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt: grid.dt, limit });
        }
        let mass = grid.area_weights();
        let dt = grid.dt;
        let inertia = mass.iter().zip(&eps.values).map(|(w, e)| w * e / (dt * dt)).collect();
        let damping = mass.iter().zip(&sigma.values).map(|(w, s)| w * s / (2.0 * dt)).collect();
        Ok(Self {
            grid: *grid,
            mass,
            inertia,
            damping,
        })
    }

    /// `out = K u`.
    pub fn stiffness(&self, u: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let row = nx + 1;
        for j in 0..=ny {
            // x-edges on the bottom and top rows carry half a dual face
            let kx = if j == 0 || j == ny { 0.5 } else { 1.0 };
            for i in 0..=nx {
                let k = j * row + i;
                let c = u[k];
                let ky = if i == 0 || i == nx { 0.5 } else { 1.0 };
                let mut acc = 0.0;
                if i > 0 {
                    acc += kx * (c - u[k - 1]);
                }
                if i < nx {
                    acc += kx * (c - u[k + 1]);
                }
                if j > 0 {
                    acc += ky * (c - u[k - row]);
                }
                if j < ny {
                    acc += ky * (c - u[k + row]);
                }
                out[k] = acc;
            }
        }
    }

    /// `A/(2dt)` for the given absorbing sides.
    pub fn absorption(&self, sides: SideSet) -> Vec<f64> {
        let g = &self.grid;
        let mut out = vec![0.0; g.node_count()];
        for s in sides.iter() {
            for idx in 0..s.len(g) {
                out[s.node(g, idx)] += s.weight(g, idx) / (2.0 * g.dt);
            }
        }
        out
    }

    /// One leapfrog step.
    pub fn advance(
        &self,
        prev: &[f64],
        cur: &[f64],
        next: &mut [f64],
        absorb: &[f64],
        rhs: &[f64],
        scratch: &mut [f64],
    ) {
        self.stiffness(cur, scratch);
        for k in 0..next.len() {
            let drag = self.damping[k] + absorb[k];
            next[k] = (2.0 * self.inertia[k] * cur[k] - scratch[k] - (self.inertia[k] - drag) * prev[k]
                + rhs[k])
                / (self.inertia[k] + drag);
        }
    }

    /// Taylor start: step 0 with the fictitious level `E⁻¹ = E¹ − 2dt·rate`.
    pub fn start(
        &self,
        cur: &[f64],
        rate: Option<&[f64]>,
        next: &mut [f64],
        absorb: &[f64],
        rhs: &[f64],
        scratch: &mut [f64],
    ) {
        self.stiffness(cur, scratch);
        let dt = self.grid.dt;
        for k in 0..next.len() {
            let drag = self.damping[k] + absorb[k];
            let r = rate.map_or(0.0, |r| r[k]);
            next[k] = (2.0 * self.inertia[k] * cur[k] - scratch[k]
                + 2.0 * (self.inertia[k] - drag) * dt * r
                + rhs[k])
                / (2.0 * self.inertia[k]);
        }
    }
}

/// Absorption profile cache keyed by the absorbing side set.
pub(crate) struct AbsorptionCache {
    sides: Option<SideSet>,
    values: Vec<f64>,
}

impl AbsorptionCache {
    pub fn new() -> Self {
        Self {
            sides: None,
            values: Vec::new(),
        }
    }

    pub fn get(&mut self, stencil: &WaveStencil, sides: SideSet) -> &[f64] {
        if self.sides != Some(sides) {
            self.values = stencil.absorption(sides);
            self.sides = Some(sides);
        }
        &self.values
    }
}

/// Adds `Σ ℓ·value` over the boundary nodes of side `s`.
pub(crate) fn add_side_flux(grid: &Grid2D, s: Side, values: impl Fn(usize) -> f64, rhs: &mut [f64]) {
    for idx in 0..s.len(grid) {
        rhs[s.node(grid, idx)] += s.weight(grid, idx) * values(idx);
    }
}

/// A fully specified forward solve.
#[derive(Clone, Copy)]
pub struct ForwardProblem<'a> {
    pub grid: &'a Grid2D,
    pub eps: &'a CoefficientField,
    pub sigma: &'a CoefficientField,
    pub source: SourceSpec,
    pub bc: BcConfig,
    pub forcing: Option<VolumeForcing<'a>>,
    /// `E(x, 0)`; zero if absent.
    pub initial_value: Option<&'a [f64]>,
    /// `∂ₜE(x, 0)`; zero if absent.
    pub initial_rate: Option<&'a [f64]>,
    /// Extra Neumann data `∂ₙE = g` on the trace's sides.
    pub neumann_data: Option<&'a BoundaryTrace>,
}

impl<'a> ForwardProblem<'a> {
    pub fn new(
        grid: &'a Grid2D,
        eps: &'a CoefficientField,
        sigma: &'a CoefficientField,
        source: SourceSpec,
        bc: BcConfig,
    ) -> Self {
        Self {
            grid,
            eps,
            sigma,
            source,
            bc,
            forcing: None,
            initial_value: None,
            initial_rate: None,
            neumann_data: None,
        }
    }

    pub fn with_forcing(mut self, forcing: VolumeForcing<'a>) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn with_initial(mut self, value: Option<&'a [f64]>, rate: Option<&'a [f64]>) -> Self {
        self.initial_value = value;
        self.initial_rate = rate;
        self
    }

    pub fn with_neumann_data(mut self, data: &'a BoundaryTrace) -> Self {
        self.neumann_data = Some(data);
        self
    }

    fn validate(&self) -> Result<()> {
        self.bc.validate()?;
        let nn = self.grid.node_count();
        if self.initial_value.is_some_and(|v| v.len() != nn)
            || self.initial_rate.is_some_and(|v| v.len() != nn)
        {
            return Err(Error::GridMismatch("initial data length"));
        }
        if let Some(VolumeForcing::Sampled(f)) = self.forcing {
            if !f.grid.same_spacetime(self.grid) {
                return Err(Error::GridMismatch("sampled forcing"));
            }
        }
        if let Some(d) = self.neumann_data {
            if !d.grid.same_spacetime(self.grid) {
                return Err(Error::TraceMismatch("Neumann data and solver grid"));
            }
        }
        Ok(())
    }

    /// Mass-weighted right-hand side `M fⁿ + B gⁿ` of step `n`.
    pub(crate) fn rhs(&self, n: usize, mass: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let t = g.time(n);
        match self.forcing {
            None => out.iter_mut().for_each(|v| *v = 0.0),
            Some(VolumeForcing::Analytic(f)) => {
                for (k, v) in out.iter_mut().enumerate() {
                    let (x, y) = g.coords(k);
                    *v = mass[k] * f(x, y, t);
                }
            }
            Some(VolumeForcing::Sampled(field)) => {
                for ((v, w), f) in out.iter_mut().zip(mass).zip(field.snapshot(n)) {
                    *v = w * f;
                }
            }
        }
        if let Some(s) = self.bc.source_at(t, &self.source) {
            let value = self.source.value(t);
            if value != 0.0 {
                add_side_flux(g, s, |_| value, out);
            }
        }
        if let Some(data) = self.neumann_data {
            for s in data.sides().iter() {
                let vals = data.side(n, s).expect("declared side");
                add_side_flux(g, s, |idx| vals[idx], out);
            }
        }
    }

    pub(crate) fn absorbing_at(&self, n: usize) -> SideSet {
        self.bc.absorbing_at(self.grid.time(n), &self.source)
    }

    pub fn solve(&self) -> Result<SpaceTimeField> {
        self.validate()?;
        let stencil = WaveStencil::new(self.grid, self.eps, self.sigma)?;
        let g = self.grid;
        let nn = g.node_count();
        let mut field = SpaceTimeField::zeros(g, FieldRole::State);
        if let Some(v) = self.initial_value {
            field.snapshot_mut(0).copy_from_slice(v);
        }
        let mut rhs = vec![0.0; nn];
        let mut scratch = vec![0.0; nn];
        let mut cache = AbsorptionCache::new();

        self.rhs(0, &stencil.mass, &mut rhs);
        {
            let absorb = cache.get(&stencil, self.absorbing_at(0));
            let (head, tail) = field.as_mut_slice().split_at_mut(nn);
            stencil.start(head, self.initial_rate, &mut tail[..nn], absorb, &rhs, &mut scratch);
        }
        check_finite(field.snapshot(1), 1)?;
        for n in 1..g.nt {
            self.rhs(n, &stencil.mass, &mut rhs);
            let absorb = cache.get(&stencil, self.absorbing_at(n));
            let (prev, cur, next) = field.split_step(n);
            stencil.advance(prev, cur, next, absorb, &rhs, &mut scratch);
            check_finite(field.snapshot(n + 1), n + 1)?;
        }
        Ok(field)
    }
}

pub(crate) fn check_finite(level: &[f64], step: usize) -> Result<()> {
    if level.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}

/// Grid, source and boundary conditions shared by every solve of one
/// reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSetup {
    pub grid: Grid2D,
    pub source: SourceSpec,
    pub bc: BcConfig,
}

impl WaveSetup {
    pub fn new(grid: Grid2D, source: SourceSpec, bc: BcConfig) -> Self {
        Self { grid, source, bc }
    }

    pub fn problem<'a>(
        &'a self,
        eps: &'a CoefficientField,
        sigma: &'a CoefficientField,
    ) -> ForwardProblem<'a> {
        ForwardProblem::new(&self.grid, eps, sigma, self.source, self.bc)
    }

    pub fn solve(&self, eps: &CoefficientField, sigma: &CoefficientField) -> Result<SpaceTimeField> {
        self.problem(eps, sigma).solve()
    }

    /// Same source and boundary conditions on another grid.
    pub fn on_grid(&self, grid: Grid2D) -> Self {
        Self { grid, ..*self }
    }
}

/// Forward solve with zero initial data and no volumetric forcing.
pub fn solve_forward(
    grid: &Grid2D,
    eps: &CoefficientField,
    sigma: &CoefficientField,
    source: &SourceSpec,
    bc: &BcConfig,
) -> Result<SpaceTimeField> {
    ForwardProblem::new(grid, eps, sigma, *source, *bc).solve()
}

/// Leapfrog energy between levels `n−1` and `n`:
/// `‖(Eⁿ − Eⁿ⁻¹)/dt‖²_ε + ⟨∇Eⁿ, ∇Eⁿ⁻¹⟩`, both with nodal quadrature.
///
/// The gradient term pairs the two levels, which is the quantity the
/// scheme conserves exactly without damping or absorption. It is positive
/// under the CFL condition.
pub fn discrete_energy(
    field: &SpaceTimeField,
    eps: &CoefficientField,
    _sigma: &CoefficientField,
    n: usize,
) -> f64 {
    assert!(n >= 1 && n <= field.grid.nt, "energy level {n} out of range");
    let g = &field.grid;
    let mass = g.area_weights();
    let (a, b) = (field.snapshot(n - 1), field.snapshot(n));
    let mut kinetic = 0.0;
    for k in 0..g.node_count() {
        let v = (b[k] - a[k]) / g.dt;
        kinetic += mass[k] * eps.values[k] * v * v;
    }
    kinetic + stiffness_pairing(g, b, a)
}

/// `⟨K u, v⟩`, the discrete `∫ ∇u·∇v`.
pub fn stiffness_pairing(grid: &Grid2D, u: &[f64], v: &[f64]) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let row = nx + 1;
    let mut s = 0.0;
    for j in 0..=ny {
        let kx = if j == 0 || j == ny { 0.5 } else { 1.0 };
        for i in 0..nx {
            let k = j * row + i;
            s += kx * (u[k + 1] - u[k]) * (v[k + 1] - v[k]);
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            let ky = if i == 0 || i == nx { 0.5 } else { 1.0 };
            let k = j * row + i;
            s += ky * (u[k + row] - u[k]) * (v[k + row] - v[k]);
        }
    }
    s
}
