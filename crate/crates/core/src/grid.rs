//! Uniform Cartesian grid over a rectangle, the pinned frame mask and
//! nested factor-2 refinement.
//!
//! Nodes are numbered row-major, `k = j * (nx + 1) + i`, with `i` along x.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub origin: (f64, f64),
    pub extent: (f64, f64),
    /// Cell width, equal along both axes.
    pub h: f64,
    pub dt: f64,
    pub nt: usize,
    pub t_final: f64,
    pub level: usize,
    /// Fraction of the CFL bound used when choosing `dt`.
    pub cfl_safety: f64,
    /// Smallest permittivity the time step must stay stable for.
    pub eps_min: f64,
}

impl Grid2D {
    /// Grid on the unit square.
    pub fn new(nx: usize, ny: usize, t_final: f64, cfl_safety: f64, eps_min: f64) -> Result<Self> {
        Self::with_domain(nx, ny, (0.0, 0.0), (1.0, 1.0), t_final, cfl_safety, eps_min)
    }

    pub fn with_domain(
        nx: usize,
        ny: usize,
        origin: (f64, f64),
        extent: (f64, f64),
        t_final: f64,
        cfl_safety: f64,
        eps_min: f64,
    ) -> Result<Self> {
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells per axis, got {nx}x{ny}"
            )));
        }
        if !(extent.0 > 0.0 && extent.1 > 0.0) {
            return Err(Error::InvalidGrid(format!("non-positive extent {extent:?}")));
        }
        let hx = extent.0 / nx as f64;
        let hy = extent.1 / ny as f64;
        if (hx - hy).abs() > 1e-12 * hx {
            return Err(Error::InvalidGrid(format!(
                "cells are not square: hx = {hx}, hy = {hy}"
            )));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidGrid(format!("final time must be positive, got {t_final}")));
        }
        if !(cfl_safety > 0.0 && cfl_safety < 1.0) {
            return Err(Error::InvalidGrid(format!(
                "cfl_safety must lie in (0, 1), got {cfl_safety}"
            )));
        }
        if !(eps_min >= 1.0) {
            return Err(Error::InvalidGrid(format!("eps_min must be >= 1, got {eps_min}")));
        }
        let h = hx;
        let dt_max = cfl_safety * cfl_limit(h, eps_min);
        let nt = math::ceil(t_final / dt_max) as usize;
        let dt = t_final / nt as f64;
        Ok(Self {
            nx,
            ny,
            origin,
            extent,
            h,
            dt,
            nt,
            t_final,
            level: 0,
            cfl_safety,
            eps_min,
        })
    }

    /// Factor-2 refinement in space; the time step is re-derived from the
    /// same CFL rule.
    pub fn refine(&self) -> Self {
        let mut fine = Self::with_domain(
            2 * self.nx,
            2 * self.ny,
            self.origin,
            self.extent,
            self.t_final,
            self.cfl_safety,
            self.eps_min,
        )
        .expect("refining a valid grid yields a valid grid");
        fine.level = self.level + 1;
        fine
    }

    #[inline]
    pub fn nodes_x(&self) -> usize {
        self.nx + 1
    }

    #[inline]
    pub fn nodes_y(&self) -> usize {
        self.ny + 1
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % (self.nx + 1), k / (self.nx + 1))
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.origin.0 + i as f64 * self.h
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.origin.1 + j as f64 * self.h
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.x(i), self.y(j))
    }

    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Trapezoidal area weight of node `(i, j)`: `h²` inside, `h²/2` on
    /// edges, `h²/4` at corners.
    #[inline]
    pub fn area_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        wx * wy * self.h * self.h
    }

    pub fn area_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.node_count());
        for j in 0..=self.ny {
            for i in 0..=self.nx {
                w.push(self.area_weight(i, j));
            }
        }
        w
    }

    /// Trapezoidal time weight of level `n`.
    #[inline]
    pub fn time_weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.nt {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// Mesh function `h|_K`; constant on a uniform grid.
    pub fn mesh_function(&self) -> Vec<f64> {
        alloc::vec![self.h; self.nx * self.ny]
    }

    /// Whether `fine` is exactly the factor-2 refinement of `self` in space.
    pub fn is_refined_by(&self, fine: &Grid2D) -> bool {
        fine.nx == 2 * self.nx
            && fine.ny == 2 * self.ny
            && self.origin == fine.origin
            && self.extent == fine.extent
    }

    pub fn same_space(&self, other: &Grid2D) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.origin == other.origin
            && self.extent == other.extent
    }

    pub fn same_spacetime(&self, other: &Grid2D) -> bool {
        self.same_space(other) && self.nt == other.nt && self.dt == other.dt
    }

    /// Largest stable step of the explicit scheme for permittivity `eps_min`.
    pub fn cfl_bound(&self, eps_min: f64) -> f64 {
        cfl_limit(self.h, eps_min)
    }
}

/// `h·√ε_min / √2`, the 2D leapfrog stability bound for wave speed `1/√ε_min`.
pub fn cfl_limit(h: f64, eps_min: f64) -> f64 {
    h * math::sqrt(eps_min) / core::f64::consts::SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Inner,
    Frame,
}

/// Node classification into the update region and the pinned frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    pub frame_width: usize,
    classes: Vec<NodeClass>,
}

impl RegionMask {
    pub fn new(grid: &Grid2D, frame_width: usize) -> Result<Self> {
        if 2 * frame_width >= grid.nx.min(grid.ny) {
            return Err(Error::FrameTooWide {
                frame_width,
                nx: grid.nx,
                ny: grid.ny,
            });
        }
        let fw = frame_width;
        let mut classes = Vec::with_capacity(grid.node_count());
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                let frame = i < fw || j < fw || i + fw > grid.nx || j + fw > grid.ny;
                classes.push(if frame { NodeClass::Frame } else { NodeClass::Inner });
            }
        }
        Ok(Self { frame_width, classes })
    }

    #[inline]
    pub fn class(&self, k: usize) -> NodeClass {
        self.classes[k]
    }

    #[inline]
    pub fn is_frame(&self, k: usize) -> bool {
        self.classes[k] == NodeClass::Frame
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn frame_count(&self) -> usize {
        self.classes.iter().filter(|c| **c == NodeClass::Frame).count()
    }

    pub fn inner_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == NodeClass::Inner)
            .map(|(k, _)| k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_spacing() {
        let g = Grid2D::new(10, 10, 1.2, 0.5, 1.0).unwrap();
        assert_eq!(g.h, 0.1);
        assert_eq!(g.node_count(), 121);
    }

    #[test]
    fn time_step_from_cfl_rule() {
        let g = Grid2D::new(100, 100, 1.2, 0.5, 1.0).unwrap();
        let bound = 0.5 * 0.01 / 2f64.sqrt();
        assert!(g.dt <= bound);
        assert!((g.nt as f64 * g.dt - 1.2).abs() <= g.dt * 1e-12);
        // snapping only shortens the step by less than one part in nt
        assert!(g.dt > bound * (1.0 - 1.0 / g.nt as f64));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(Grid2D::new(4, 10, 1.2, 0.5, 1.0), Err(Error::InvalidGrid(_))));
        assert!(Grid2D::new(10, 10, 0.0, 0.5, 1.0).is_err());
        assert!(Grid2D::new(10, 10, -1.0, 0.5, 1.0).is_err());
        assert!(Grid2D::new(10, 10, 1.2, 1.0, 1.0).is_err());
        assert!(Grid2D::new(10, 10, 1.2, 0.5, 0.5).is_err());
        assert!(Grid2D::with_domain(10, 20, (0.0, 0.0), (1.0, 1.0), 1.2, 0.5, 1.0).is_err());
        assert!(Grid2D::with_domain(10, 20, (0.0, 0.0), (1.0, 2.0), 1.2, 0.5, 1.0).is_ok());
    }

    #[test]
    fn frame_mask_counts() {
        let g = Grid2D::new(10, 10, 1.2, 0.5, 1.0).unwrap();
        let none = RegionMask::new(&g, 0).unwrap();
        assert_eq!(none.frame_count(), 0);
        let one = RegionMask::new(&g, 1).unwrap();
        assert_eq!(one.frame_count(), 4 * 11 - 4);
        for j in 0..=10 {
            for i in 0..=10 {
                let on_boundary = i == 0 || j == 0 || i == 10 || j == 10;
                assert_eq!(one.is_frame(g.index(i, j)), on_boundary);
            }
        }
        let two = RegionMask::new(&g, 2).unwrap();
        assert_eq!(two.frame_count(), 121 - 49);
        assert!(matches!(RegionMask::new(&g, 6), Err(Error::FrameTooWide { .. })));
        assert!(RegionMask::new(&g, 5).is_err());
        assert_eq!(RegionMask::new(&g, 2).unwrap(), two);
    }

    #[test]
    fn refinement_nests() {
        let g = Grid2D::new(50, 50, 1.2, 0.5, 1.0).unwrap();
        let f = g.refine();
        assert_eq!((f.nx, f.level), (100, 1));
        assert!((f.h - 0.01).abs() < 1e-15);
        let ff = f.refine();
        assert!((ff.h - g.h / 4.0).abs() < 1e-15);
        for gr in [f, ff] {
            assert!((gr.nt as f64 * gr.dt - gr.t_final).abs() <= gr.dt * 1e-12);
        }
        assert!(g.is_refined_by(&f));
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                assert!((g.x(i) - f.x(2 * i)).abs() < 1e-14);
                assert!((g.y(j) - f.y(2 * j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn weights_integrate_area() {
        let g = Grid2D::with_domain(8, 16, (0.0, 0.0), (1.0, 2.0), 1.0, 0.5, 1.0).unwrap();
        let total: f64 = g.area_weights().iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        let t: f64 = (0..=g.nt).map(|n| g.time_weight(n)).sum();
        assert!((t - 1.0).abs() < 1e-12);
    }
}
