use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Periodic box `[-L, L)^d` sampled with `n` points per axis.
///
/// Grid points are `x_i = -L + i dx` with `dx = 2L/n`; there is no duplicate
/// endpoint. Wavenumbers follow the standard FFT ordering
/// `k_j = pi j / L`, `j = 0, 1, .., n/2-1, -n/2, .., -1`.
pub struct Grid {
    d: usize,
    l: f64,
    n: usize,
    dx: f64,
    coords: Vec<f64>,
    wavenumbers: Vec<f64>,
    fft_forward: Arc<dyn Fft<f64>>,
    fft_inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("d", &self.d)
            .field("l", &self.l)
            .field("n", &self.n)
            .finish()
    }
}

impl Grid {
    pub fn new(d: usize, l: f64, n: usize) -> Result<Arc<Grid>> {
        if d != 1 && d != 2 {
            return Err(Error::UnsupportedDimension(d));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::BadBoxSize(l));
        }
        if n < 64 || !n.is_power_of_two() {
            return Err(Error::BadGridSize(n));
        }
        let dx = 2.0 * l / n as f64;
        let coords = (0..n).map(|i| -l + i as f64 * dx).collect();
        let wavenumbers = (0..n)
            .map(|j| {
                let j = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
                PI * j as f64 / l
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft_forward = planner.plan_fft_forward(n);
        let fft_inverse = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid {
            d,
            l,
            n,
            dx,
            coords,
            wavenumbers,
            fft_forward,
            fft_inverse,
        }))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Half-width of the box.
    pub fn half_width(&self) -> f64 {
        self.l
    }

    /// Samples per axis.
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.dx
    }

    /// Total number of samples, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one sample, `dx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.d as i32)
    }

    /// Coordinate along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        self.coords[i]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// FFT-ordered wavenumber of mode `j` along one axis.
    pub fn wavenumber(&self, j: usize) -> f64 {
        self.wavenumbers[j]
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Largest resolved wavenumber, `pi n / (2 L)`.
    pub fn nyquist(&self) -> f64 {
        PI * self.n as f64 / (2.0 * self.l)
    }

    /// Position of the flattened sample `idx` (axis 0 slowest).
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match self.d {
            1 => [self.coords[idx], 0.0],
            _ => [self.coords[idx / self.n], self.coords[idx % self.n]],
        }
    }

    pub(crate) fn fft_forward(&self) -> &Arc<dyn Fft<f64>> {
        &self.fft_forward
    }

    pub(crate) fn fft_inverse(&self) -> &Arc<dyn Fft<f64>> {
        &self.fft_inverse
    }

    /// True when `p` keeps `margin` distance from every box face.
    pub fn in_safe_region(&self, p: &[f64], margin: f64) -> bool {
        p.iter().take(self.d).all(|&x| x.abs() <= self.l - margin)
    }
}

/// Two grids are interchangeable when their geometry matches.
pub fn same_grid(a: &Grid, b: &Grid) -> bool {
    a.d == b.d && a.n == b.n && a.l == b.l
}
