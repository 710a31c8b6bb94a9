//! Cubic spline on uniform knots with clamped end slopes.

use super::linalg::solve_tridiagonal;
use crate::error::Result;

/// C2 interpolant of samples `y_i` at `x_i = x0 + i h`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    /// Build a clamped spline with prescribed end slopes.
    pub fn clamped(x0: f64, h: f64, y: Vec<f64>, slope_left: f64, slope_right: f64) -> Result<Self> {
        let n = y.len();
        assert!(n >= 3, "spline needs at least 3 knots");
        let mut lower = vec![1.0; n];
        let mut diag = vec![4.0; n];
        let mut upper = vec![1.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            rhs[i] = 6.0 / (h * h) * (y[i - 1] - 2.0 * y[i] + y[i + 1]);
        }
        // Clamped ends: s'(x0) and s'(xn) prescribed.
        diag[0] = 2.0;
        upper[0] = 1.0;
        rhs[0] = 6.0 / h * ((y[1] - y[0]) / h - slope_left);
        diag[n - 1] = 2.0;
        lower[n - 1] = 1.0;
        rhs[n - 1] = 6.0 / h * (slope_right - (y[n - 1] - y[n - 2]) / h);
        let m = solve_tridiagonal(&lower, &diag, &upper, &rhs, "cubic spline")?;
        Ok(CubicSpline { x0, h, y, m })
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.y.len();
        let u = (x - self.x0) / self.h;
        let i = (u.floor() as isize).clamp(0, n as isize - 2) as usize;
        (i, x - (self.x0 + i as f64 * self.h))
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x0, self.x0 + (self.y.len() - 1) as f64 * self.h)
    }

    pub fn value(&self, x: f64) -> f64 {
        let (i, dx) = self.locate(x);
        let h = self.h;
        let a = (self.y[i + 1] - self.y[i]) / h - h / 6.0 * (self.m[i + 1] + 2.0 * self.m[i]);
        self.y[i] + a * dx + self.m[i] / 2.0 * dx * dx
            + (self.m[i + 1] - self.m[i]) / (6.0 * h) * dx * dx * dx
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (i, dx) = self.locate(x);
        let h = self.h;
        let a = (self.y[i + 1] - self.y[i]) / h - h / 6.0 * (self.m[i + 1] + 2.0 * self.m[i]);
        a + self.m[i] * dx + (self.m[i + 1] - self.m[i]) / (2.0 * h) * dx * dx
    }
}
