//! Coefficient fields, space-time fields, boundary traces and the operations
//! that build, constrain, perturb and transfer them.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, RegionMask};
use crate::math;

/// Which coefficient a field holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Epsilon,
    Sigma,
}

/// Box constraints and background values of the two coefficients.
///
/// Conductivity is the scaled quantity of the damped wave model, so both
/// coefficients are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleSet {
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_background: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_background: f64,
}

impl Default for AdmissibleSet {
    fn default() -> Self {
        Self {
            eps_min: 1.0,
            eps_max: 10.0,
            eps_background: 1.0,
            sigma_min: 1.0,
            sigma_max: 10.0,
            sigma_background: 1.0,
        }
    }
}

impl AdmissibleSet {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_min >= 1.0
            && self.eps_background >= 1.0
            && self.eps_max >= self.eps_background
            && self.eps_max >= self.eps_min
            && self.sigma_min >= 0.0
            && self.sigma_max >= self.sigma_min;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(alloc::format!(
                "inconsistent admissible set {self:?}"
            )))
        }
    }

    pub fn bounds(&self, role: Role) -> (f64, f64) {
        match role {
            Role::Epsilon => (self.eps_min, self.eps_max),
            Role::Sigma => (self.sigma_min, self.sigma_max),
        }
    }

    pub fn background(&self, role: Role) -> f64 {
        match role {
            Role::Epsilon => self.eps_background,
            Role::Sigma => self.sigma_background,
        }
    }
}

/// Nodal values of `ε` or `σ` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub grid: Grid2D,
    pub role: Role,
    pub values: Vec<f64>,
}

impl CoefficientField {
    pub fn constant(grid: &Grid2D, role: Role, value: f64) -> Self {
        Self {
            grid: *grid,
            role,
            values: vec![value; grid.node_count()],
        }
    }

    pub fn from_fn(grid: &Grid2D, role: Role, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|k| {
                let (x, y) = grid.coords(k);
                f(x, y)
            })
            .collect();
        Self {
            grid: *grid,
            role,
            values,
        }
    }

    pub fn from_values(grid: &Grid2D, role: Role, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch("value count differs from node count"));
        }
        Ok(Self {
            grid: *grid,
            role,
            values,
        })
    }

    /// `base + amp·exp(−|x − c|²/width)` sampled at the nodes.
    pub fn gaussian(
        grid: &Grid2D,
        role: Role,
        base: f64,
        amp: f64,
        center: (f64, f64),
        width: f64,
    ) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "gaussian width must be positive, got {width}"
            )));
        }
        Ok(Self::from_fn(grid, role, |x, y| {
            let r2 = (x - center.0) * (x - center.0) + (y - center.1) * (y - center.1);
            base + amp * math::exp(-r2 / width)
        }))
    }

    /// Adds `scale·‖v‖∞·x²y²(1−x)²(1−y)²` in coordinates normalised to the
    /// domain, a smooth bump that vanishes on ∂Ω.
    pub fn with_polynomial_bump(&self, scale: f64) -> Self {
        let sup = math::max_abs(&self.values);
        let g = &self.grid;
        let mut out = self.clone();
        for (k, v) in out.values.iter_mut().enumerate() {
            let (x, y) = g.coords(k);
            let u = (x - g.origin.0) / g.extent.0;
            let w = (y - g.origin.1) / g.extent.1;
            let b = u * w * (1.0 - u) * (1.0 - w);
            *v += scale * sup * b * b;
        }
        out
    }

    /// Clamp inner nodes into the role's bounds and pin frame nodes to the
    /// background.
    pub fn project(&self, adm: &AdmissibleSet, mask: &RegionMask) -> Self {
        let mut out = self.clone();
        out.project_in_place(adm, mask);
        out
    }

    pub fn project_in_place(&mut self, adm: &AdmissibleSet, mask: &RegionMask) {
        let (lo, hi) = adm.bounds(self.role);
        let bg = adm.background(self.role);
        for (k, v) in self.values.iter_mut().enumerate() {
            *v = if mask.is_frame(k) { bg } else { v.clamp(lo, hi) };
        }
    }

    pub fn is_admissible(&self, adm: &AdmissibleSet, mask: &RegionMask) -> bool {
        let (lo, hi) = adm.bounds(self.role);
        let bg = adm.background(self.role);
        self.values.iter().enumerate().all(|(k, &v)| {
            if mask.is_frame(k) {
                v == bg
            } else {
                v >= lo && v <= hi
            }
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Area-quadrature L² norm.
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.area_weights();
        math::sqrt(math::weighted_dot(&w, &self.values, &self.values))
    }

    /// Bilinear interpolation onto the factor-2 refinement `fine`.
    pub fn refine_to(&self, fine: &Grid2D) -> Result<Self> {
        if !self.grid.is_refined_by(fine) {
            return Err(Error::NotNested);
        }
        let c = &self.grid;
        let mut values = Vec::with_capacity(fine.node_count());
        for jf in 0..=fine.ny {
            for i_f in 0..=fine.nx {
                let (i0, i1) = (i_f / 2, (i_f + 1) / 2);
                let (j0, j1) = (jf / 2, (jf + 1) / 2);
                let v = 0.25
                    * (self.values[c.index(i0, j0)]
                        + self.values[c.index(i1, j0)]
                        + self.values[c.index(i0, j1)]
                        + self.values[c.index(i1, j1)]);
                values.push(v);
            }
        }
        Ok(Self {
            grid: *fine,
            role: self.role,
            values,
        })
    }

    /// Injection onto the coarse grid that `self.grid` refines.
    pub fn restrict_to(&self, coarse: &Grid2D) -> Result<Self> {
        if !coarse.is_refined_by(&self.grid) {
            return Err(Error::NotNested);
        }
        let f = &self.grid;
        let mut values = Vec::with_capacity(coarse.node_count());
        for j in 0..=coarse.ny {
            for i in 0..=coarse.nx {
                values.push(self.values[f.index(2 * i, 2 * j)]);
            }
        }
        Ok(Self {
            grid: *coarse,
            role: self.role,
            values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    /// The forward field `E`.
    State,
    /// The adjoint multiplier `λ`.
    Adjoint,
}

/// All time levels `0..=nt` of a nodal field, stored level-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub grid: Grid2D,
    pub role: FieldRole,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid2D, role: FieldRole) -> Self {
        Self {
            grid: *grid,
            role,
            data: vec![0.0; (grid.nt + 1) * grid.node_count()],
        }
    }

    pub fn from_fn(grid: &Grid2D, role: FieldRole, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, role);
        let nn = grid.node_count();
        for n in 0..=grid.nt {
            let t = grid.time(n);
            for k in 0..nn {
                let (x, y) = grid.coords(k);
                out.data[n * nn + k] = f(x, y, t);
            }
        }
        out
    }

    #[inline]
    pub fn levels(&self) -> usize {
        self.grid.nt + 1
    }

    #[inline]
    pub fn snapshot(&self, n: usize) -> &[f64] {
        let nn = self.grid.node_count();
        &self.data[n * nn..(n + 1) * nn]
    }

    #[inline]
    pub fn snapshot_mut(&mut self, n: usize) -> &mut [f64] {
        let nn = self.grid.node_count();
        &mut self.data[n * nn..(n + 1) * nn]
    }

    /// Three consecutive levels `(n−1, n)` read-only and `n+1` writable.
    pub(crate) fn split_step(&mut self, n: usize) -> (&[f64], &[f64], &mut [f64]) {
        let nn = self.grid.node_count();
        let (head, tail) = self.data.split_at_mut((n + 1) * nn);
        let prev = &head[(n - 1) * nn..n * nn];
        let cur = &head[n * nn..];
        (prev, cur, &mut tail[..nn])
    }

    /// Levels `(m+1, m)` read-only and `m−1` writable, for backward marches.
    pub(crate) fn split_step_reverse(&mut self, m: usize) -> (&[f64], &[f64], &mut [f64]) {
        let nn = self.grid.node_count();
        let (head, tail) = self.data.split_at_mut(m * nn);
        let later = &tail[nn..2 * nn];
        let cur = &tail[..nn];
        (later, cur, &mut head[(m - 1) * nn..])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        math::max_abs(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Space-time L² norm with area and trapezoidal time quadrature.
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.area_weights();
        let mut s = 0.0;
        for n in 0..self.levels() {
            let u = self.snapshot(n);
            s += self.grid.time_weight(n) * math::weighted_dot(&w, u, u);
        }
        math::sqrt(s)
    }
}

/// The four sides of the rectangle, numbered as in the file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left = 1,
    Bottom = 2,
    Right = 3,
    Top = 4,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Bottom, Side::Right, Side::Top];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Side> {
        match n {
            1 => Some(Side::Left),
            2 => Some(Side::Bottom),
            3 => Some(Side::Right),
            4 => Some(Side::Top),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn slot(self) -> usize {
        self as usize - 1
    }

    /// Number of nodes on this side, corners included.
    pub fn len(self, grid: &Grid2D) -> usize {
        match self {
            Side::Left | Side::Right => grid.ny + 1,
            Side::Bottom | Side::Top => grid.nx + 1,
        }
    }

    /// Grid node of boundary index `idx` along the side.
    #[inline]
    pub fn node(self, grid: &Grid2D, idx: usize) -> usize {
        match self {
            Side::Left => grid.index(0, idx),
            Side::Right => grid.index(grid.nx, idx),
            Side::Bottom => grid.index(idx, 0),
            Side::Top => grid.index(idx, grid.ny),
        }
    }

    /// Trapezoidal line weight of boundary index `idx`.
    #[inline]
    pub fn weight(self, grid: &Grid2D, idx: usize) -> f64 {
        if idx == 0 || idx + 1 == self.len(grid) {
            0.5 * grid.h
        } else {
            grid.h
        }
    }
}

/// Subset of the four sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct SideSet(u8);

impl SideSet {
    pub const ALL: SideSet = SideSet(0b1111);

    pub fn empty() -> Self {
        SideSet(0)
    }

    pub fn from_sides(sides: &[Side]) -> Self {
        SideSet(sides.iter().fold(0, |m, s| m | 1 << s.slot()))
    }

    pub fn contains(self, s: Side) -> bool {
        self.0 & (1 << s.slot()) != 0
    }

    pub fn insert(&mut self, s: Side) {
        self.0 |= 1 << s.slot();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Side> {
        Side::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

/// Boundary values on a set of sides for every time level, laid out
/// `[time][side][index]` with sides in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub grid: Grid2D,
    sides: SideSet,
    offsets: [usize; 4],
    per_level: usize,
    values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn zeros(grid: &Grid2D, sides: SideSet) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::EmptySideSet);
        }
        let mut offsets = [usize::MAX; 4];
        let mut per_level = 0;
        for s in sides.iter() {
            offsets[s.slot()] = per_level;
            per_level += s.len(grid);
        }
        Ok(Self {
            grid: *grid,
            sides,
            offsets,
            per_level,
            values: vec![0.0; per_level * (grid.nt + 1)],
        })
    }

    /// Restriction of `field` to the boundary nodes of `sides`.
    pub fn extract(field: &SpaceTimeField, sides: SideSet) -> Result<Self> {
        let mut trace = Self::zeros(&field.grid, sides)?;
        let g = field.grid;
        for n in 0..=g.nt {
            let snap = field.snapshot(n);
            for s in sides.iter() {
                let off = trace.offset(n, s);
                for idx in 0..s.len(&g) {
                    trace.values[off + idx] = snap[s.node(&g, idx)];
                }
            }
        }
        Ok(trace)
    }

    #[inline]
    pub fn sides(&self) -> SideSet {
        self.sides
    }

    #[inline]
    pub fn levels(&self) -> usize {
        self.grid.nt + 1
    }

    /// Entries per time level (corner nodes count once per side).
    #[inline]
    pub fn per_level(&self) -> usize {
        self.per_level
    }

    /// Number of distinct grid nodes covered by the trace.
    pub fn distinct_nodes(&self) -> usize {
        let g = &self.grid;
        let mut nodes: Vec<usize> = self
            .sides
            .iter()
            .flat_map(|s| (0..s.len(g)).map(move |i| s.node(g, i)))
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes.len()
    }

    #[inline]
    fn offset(&self, n: usize, s: Side) -> usize {
        n * self.per_level + self.offsets[s.slot()]
    }

    /// Values of side `s` at level `n`; `None` if the side carries no data.
    pub fn side(&self, n: usize, s: Side) -> Option<&[f64]> {
        if !self.sides.contains(s) {
            return None;
        }
        let off = self.offset(n, s);
        Some(&self.values[off..off + s.len(&self.grid)])
    }

    pub fn side_mut(&mut self, n: usize, s: Side) -> Option<&mut [f64]> {
        if !self.sides.contains(s) {
            return None;
        }
        let off = self.offset(n, s);
        let len = s.len(&self.grid);
        Some(&mut self.values[off..off + len])
    }

    pub fn get(&self, n: usize, s: Side, idx: usize) -> f64 {
        self.side(n, s).map_or(0.0, |v| v[idx])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        math::max_abs(&self.values)
    }

    pub fn same_layout(&self, other: &BoundaryTrace) -> bool {
        self.sides == other.sides && self.grid.same_spacetime(&other.grid)
    }

    pub fn check_layout(&self, other: &BoundaryTrace) -> Result<()> {
        if self.sides != other.sides {
            return Err(Error::TraceMismatch("side sets differ"));
        }
        if !self.grid.same_spacetime(&other.grid) {
            return Err(Error::TraceMismatch("grids or time levels differ"));
        }
        Ok(())
    }

    /// `self − other`, entrywise.
    pub fn difference(&self, other: &BoundaryTrace) -> Result<Self> {
        self.check_layout(other)?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `⟨⟨a, b⟩⟩` over the observed part of Γ × [0, T], trapezoidal in
    /// both time and arc length.
    pub fn inner(&self, other: &BoundaryTrace) -> Result<f64> {
        self.check_layout(other)?;
        let g = &self.grid;
        let mut total = 0.0;
        for n in 0..=g.nt {
            let mut level = 0.0;
            for s in self.sides.iter() {
                let off = self.offset(n, s);
                for idx in 0..s.len(g) {
                    level += s.weight(g, idx) * self.values[off + idx] * other.values[off + idx];
                }
            }
            total += g.time_weight(n) * level;
        }
        Ok(total)
    }

    pub fn l2_norm(&self) -> f64 {
        math::sqrt(self.inner(self).expect("same layout"))
    }

    /// Linear interpolation in time onto the fine time levels, injection at
    /// coincident boundary nodes and midpoint averaging in between.
    pub fn refine_to(&self, fine: &Grid2D) -> Result<Self> {
        if !self.grid.is_refined_by(fine) || self.grid.t_final != fine.t_final {
            return Err(Error::NotNested);
        }
        let coarse = &self.grid;
        let mut out = Self::zeros(fine, self.sides)?;
        for nf in 0..=fine.nt {
            let (n0, n1, theta) = bracket(coarse, fine.time(nf));
            for s in self.sides.iter() {
                let a = self.side(n0, s).expect("declared side");
                let b = self.side(n1, s).expect("declared side");
                let dst = out.side_mut(nf, s).expect("declared side");
                for (idx, v) in dst.iter_mut().enumerate() {
                    let at = |src: &[f64]| {
                        if idx % 2 == 0 {
                            src[idx / 2]
                        } else {
                            0.5 * (src[idx / 2] + src[idx / 2 + 1])
                        }
                    };
                    *v = (1.0 - theta) * at(a) + theta * at(b);
                }
            }
        }
        Ok(out)
    }

    /// Piecewise-linear resampling in time and along each side onto another
    /// grid of the same domain and final time. Aligned nodes are copied, so
    /// onto a coarser nested grid this is injection.
    pub fn resample_to(&self, target: &Grid2D) -> Result<Self> {
        let src = &self.grid;
        if src.origin != target.origin || src.extent != target.extent || src.t_final != target.t_final {
            return Err(Error::NotNested);
        }
        if src.same_spacetime(target) {
            return Ok(self.clone());
        }
        let mut out = Self::zeros(target, self.sides)?;
        let ratio = target.h / src.h;
        for nt in 0..=target.nt {
            let (n0, n1, theta) = bracket(src, target.time(nt));
            for s in self.sides.iter() {
                let last = s.len(src) - 1;
                let a = self.side(n0, s).expect("declared side");
                let b = self.side(n1, s).expect("declared side");
                let dst = out.side_mut(nt, s).expect("declared side");
                for (idx, v) in dst.iter_mut().enumerate() {
                    let mut pos = idx as f64 * ratio;
                    let near = math::floor(pos + 0.5);
                    if (pos - near).abs() < 1e-9 {
                        pos = near;
                    }
                    let i0 = (math::floor(pos) as usize).min(last);
                    let i1 = (i0 + 1).min(last);
                    let w = if i1 == i0 { 0.0 } else { pos - i0 as f64 };
                    let at = |src: &[f64]| (1.0 - w) * src[i0] + w * src[i1];
                    *v = (1.0 - theta) * at(a) + theta * at(b);
                }
            }
        }
        Ok(out)
    }

    /// Linear interpolation of the trace to time `t` at boundary index
    /// `idx` of side `s`.
    pub fn sample_time(&self, s: Side, idx: usize, t: f64) -> f64 {
        let (n0, n1, theta) = bracket(&self.grid, t);
        (1.0 - theta) * self.get(n0, s, idx) + theta * self.get(n1, s, idx)
    }
}

/// Coarse levels bracketing time `t` and the interpolation weight.
fn bracket(grid: &Grid2D, t: f64) -> (usize, usize, f64) {
    let pos = (t / grid.dt).clamp(0.0, grid.nt as f64);
    let n0 = (math::floor(pos) as usize).min(grid.nt);
    let n1 = (n0 + 1).min(grid.nt);
    let theta = if n1 == n0 { 0.0 } else { pos - n0 as f64 };
    (n0, n1, theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// I.i.d. `N(0, level²)` per space-time sample.
    AdditiveGaussian,
    /// I.i.d. `N(0, (level·max|trace|)²)` per space-time sample.
    RelativeGaussian,
}

/// Adds seeded Gaussian noise to every entry of the trace.
pub fn add_noise(trace: &BoundaryTrace, model: NoiseModel, level: f64, seed: u64) -> Result<BoundaryTrace> {
    if !(level >= 0.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "noise level must be non-negative, got {level}"
        )));
    }
    let mut out = trace.clone();
    if level == 0.0 {
        return Ok(out);
    }
    let std = match model {
        NoiseModel::AdditiveGaussian => level,
        NoiseModel::RelativeGaussian => level * trace.max_abs(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.values.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += std * z;
    }
    Ok(out)
}
