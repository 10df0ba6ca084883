//! Flat periodic grids on `[0, 2π)^{dim}`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::error::{AkError, Result};

/// A structured periodic grid. Axis `j` carries `resolutions[j]` equally
/// spaced points on `[0, 2π)`; a resolution of 1 means "constant along this
/// axis" and every derivative in that direction is identically zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodicGrid {
    dim: usize,
    resolutions: Vec<usize>,
    fd_order: usize,
    /// Row-major strides into the flattened point index.
    strides: Vec<usize>,
    points: usize,
}

impl PeriodicGrid {
    /// Build a grid for a `dim`-dimensional torus (`dim` even, >= 2) with the
    /// given per-axis resolutions and central-difference order (2, 4, 6 or 8).
    pub fn new(dim: usize, resolutions: &[usize], fd_order: usize) -> Result<Self> {
        if dim < 2 || dim % 2 != 0 {
            return Err(AkError::Config(format!(
                "manifold dimension must be even and >= 2, got {dim}"
            )));
        }
        if resolutions.len() != dim {
            return Err(AkError::Config(format!(
                "expected {dim} axis resolutions, got {}",
                resolutions.len()
            )));
        }
        if !matches!(fd_order, 2 | 4 | 6 | 8) {
            return Err(AkError::Config(format!(
                "finite-difference order must be one of 2, 4, 6, 8, got {fd_order}"
            )));
        }
        for (axis, &r) in resolutions.iter().enumerate() {
            if r == 0 {
                return Err(AkError::Config(format!("axis {axis} has resolution 0")));
            }
            if r > 1 && r <= fd_order {
                return Err(AkError::Config(format!(
                    "axis {axis}: resolution {r} does not fit an order-{fd_order} stencil"
                )));
            }
        }
        let mut strides = alloc::vec![0usize; dim];
        let mut acc = 1usize;
        for axis in (0..dim).rev() {
            strides[axis] = acc;
            acc *= resolutions[axis];
        }
        Ok(Self {
            dim,
            resolutions: resolutions.to_vec(),
            fd_order,
            strides,
            points: acc,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions
    }

    pub fn fd_order(&self) -> usize {
        self.fd_order
    }

    /// Total number of grid points.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Grid spacing along `axis` (`2π` for constant axes).
    pub fn spacing(&self, axis: usize) -> f64 {
        TAU / self.resolutions[axis] as f64
    }

    /// Lattice coordinates of flattened point index `p`.
    pub fn point_indices(&self, p: usize) -> Vec<usize> {
        let mut out = alloc::vec![0usize; self.dim];
        let mut rem = p;
        for axis in 0..self.dim {
            out[axis] = rem / self.strides[axis];
            rem %= self.strides[axis];
        }
        out
    }

    /// Physical coordinates of flattened point index `p`.
    pub fn point_coords(&self, p: usize) -> Vec<f64> {
        self.point_indices(p)
            .iter()
            .enumerate()
            .map(|(axis, &i)| i as f64 * self.spacing(axis))
            .collect()
    }

    /// Coordinate along a single axis, avoiding the full decode.
    pub fn coord(&self, p: usize, axis: usize) -> f64 {
        let i = (p / self.strides[axis]) % self.resolutions[axis];
        i as f64 * self.spacing(axis)
    }

    /// Flattened index of the point shifted `offset` steps along `axis`,
    /// wrapping periodically.
    pub fn shift(&self, p: usize, axis: usize, offset: isize) -> usize {
        let r = self.resolutions[axis] as isize;
        let i = ((p / self.strides[axis]) % self.resolutions[axis]) as isize;
        let j = (i + offset).rem_euclid(r) as usize;
        (p as isize + (j as isize - i) * self.strides[axis] as isize) as usize
    }

    /// Flattened index from per-axis lattice indices.
    pub fn flat_index(&self, indices: &[usize]) -> usize {
        indices
            .iter()
            .zip(&self.strides)
            .map(|(&i, &s)| i * s)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_dimension() {
        assert!(PeriodicGrid::new(3, &[8, 8, 8], 2).is_err());
    }

    #[test]
    fn rejects_stencil_misfit() {
        // resolution 4 cannot hold an order-4 stencil
        assert!(PeriodicGrid::new(2, &[4, 1], 4).is_err());
        assert!(PeriodicGrid::new(2, &[5, 1], 4).is_ok());
    }

    #[test]
    fn shift_wraps() {
        let g = PeriodicGrid::new(2, &[8, 1], 2).unwrap();
        assert_eq!(g.shift(0, 0, -1), 7);
        assert_eq!(g.shift(7, 0, 1), 0);
        assert_eq!(g.shift(3, 1, 5), 3); // constant axis
    }

    #[test]
    fn coords_roundtrip() {
        let g = PeriodicGrid::new(4, &[6, 1, 7, 1], 2).unwrap();
        for p in 0..g.points() {
            assert_eq!(g.flat_index(&g.point_indices(p)), p);
        }
        let c = g.point_coords(g.points() - 1);
        assert!(c[0] > 0.0 && c[2] > 0.0);
    }
}
