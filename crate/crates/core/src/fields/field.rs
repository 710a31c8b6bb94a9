use std::sync::Arc;

use num_complex::Complex64;

use super::fft::fft_all_axes;
use super::grid::{same_grid, Grid};
use crate::error::{Error, Result};

/// Complex-valued grid function on a periodic box.
///
/// Values are stored flattened with axis 0 slowest. Public operations return
/// new fields; a field is never mutated after it leaves this module.
#[derive(Clone)]
pub struct ComplexField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

/// Norms of a field; `sigma` carries the `|x|`-weight of the box coordinate.
#[derive(Debug, Clone, Copy)]
pub struct Norms {
    pub l2: f64,
    pub h1: f64,
    pub sigma: f64,
    pub lp: f64,
    pub p: f64,
}

impl std::fmt::Debug for ComplexField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ComplexField")
            .field("grid", &self.grid)
            .field("max_abs", &self.max_abs())
            .finish()
    }
}

impl ComplexField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ComplexField {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Sample `f` at every grid point.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let p = grid.point(idx);
            values.push(f(&p[..grid.dim()]));
        }
        ComplexField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SnapshotFormat(format!(
                "value count {} does not match grid ({})",
                values.len(),
                grid.len()
            )));
        }
        let f = ComplexField {
            grid: grid.clone(),
            values,
        };
        f.ensure_finite("from_values")?;
        Ok(f)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut Vec<Complex64> {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    fn check_grid(&self, other: &ComplexField) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: Complex64, other: &ComplexField) -> Result<ComplexField> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(ComplexField {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn add(&self, other: &ComplexField) -> Result<ComplexField> {
        self.axpy(Complex64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &ComplexField) -> Result<ComplexField> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    pub fn scale(&self, c: Complex64) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|z| c * z).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Pointwise product `self * other`.
    pub fn mul_pointwise(&self, other: &ComplexField) -> Result<ComplexField> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(ComplexField {
            grid: self.grid.clone(),
            values,
        })
    }

    /// Forward FFT coefficients scaled by `1/n^d`, FFT mode ordering.
    pub fn spectral(&self) -> Vec<Complex64> {
        let mut data = self.values.clone();
        fft_all_axes(&self.grid, &mut data, false);
        let scale = 1.0 / self.grid.len() as f64;
        for z in &mut data {
            *z *= scale;
        }
        data
    }

    /// Inverse of [`ComplexField::spectral`].
    pub fn from_spectral(grid: &Arc<Grid>, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::SnapshotFormat(format!(
                "coefficient count {} does not match grid ({})",
                coeffs.len(),
                grid.len()
            )));
        }
        fft_all_axes(grid, &mut coeffs, true);
        Ok(ComplexField {
            grid: grid.clone(),
            values: coeffs,
        })
    }

    /// Exact Fourier-collocation derivative along every axis.
    pub fn gradient(&self) -> Result<Vec<ComplexField>> {
        self.ensure_finite("gradient input")?;
        let n = self.grid.points_per_axis();
        let d = self.grid.dim();
        let coeffs = self.spectral();
        let mut out = Vec::with_capacity(d);
        for axis in 0..d {
            let mut data = coeffs.clone();
            for (idx, z) in data.iter_mut().enumerate() {
                let j = if d == 1 {
                    idx
                } else if axis == 0 {
                    idx / n
                } else {
                    idx % n
                };
                // Nyquist mode carries no usable odd-derivative information.
                if j == n / 2 {
                    *z = Complex64::new(0.0, 0.0);
                } else {
                    *z *= Complex64::new(0.0, self.grid.wavenumber(j));
                }
            }
            fft_all_axes(&self.grid, &mut data, true);
            out.push(ComplexField {
                grid: self.grid.clone(),
                values: data,
            });
        }
        Ok(out)
    }

    /// Spectral Laplacian.
    pub fn laplacian(&self) -> Result<ComplexField> {
        self.ensure_finite("laplacian input")?;
        let n = self.grid.points_per_axis();
        let d = self.grid.dim();
        let mut data = self.values.clone();
        fft_all_axes(&self.grid, &mut data, false);
        let scale = 1.0 / self.grid.len() as f64;
        for (idx, z) in data.iter_mut().enumerate() {
            let k2 = if d == 1 {
                let k = self.grid.wavenumber(idx);
                k * k
            } else {
                let k0 = self.grid.wavenumber(idx / n);
                let k1 = self.grid.wavenumber(idx % n);
                k0 * k0 + k1 * k1
            };
            *z *= -k2 * scale;
        }
        fft_all_axes(&self.grid, &mut data, true);
        Ok(ComplexField {
            grid: self.grid.clone(),
            values: data,
        })
    }

    /// `<f, g> = sum f conj(g) dx^d`, fixed summation order.
    pub fn inner_product(&self, other: &ComplexField) -> Result<Complex64> {
        self.check_grid(other)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a * b.conj();
        }
        Ok(acc * self.grid.cell_volume())
    }

    pub fn l2_norm_sq(&self) -> f64 {
        let mut acc = 0.0;
        for z in &self.values {
            acc += z.norm_sqr();
        }
        acc * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn h1_norm(&self) -> Result<f64> {
        let mut acc = self.l2_norm_sq();
        for g in self.gradient()? {
            acc += g.l2_norm_sq();
        }
        Ok(acc.sqrt())
    }

    /// All norms at once; `p` selects the Lp member.
    pub fn norms(&self, p: f64) -> Result<Norms> {
        let l2sq = self.l2_norm_sq();
        let mut h1sq = l2sq;
        for g in self.gradient()? {
            h1sq += g.l2_norm_sq();
        }
        let mut xsq = 0.0;
        for (idx, z) in self.values.iter().enumerate() {
            let pt = self.grid.point(idx);
            let r2 = pt[0] * pt[0] + if self.grid.dim() == 2 { pt[1] * pt[1] } else { 0.0 };
            xsq += r2 * z.norm_sqr();
        }
        xsq *= self.grid.cell_volume();
        let mut lp = 0.0;
        for z in &self.values {
            lp += z.norm().powf(p);
        }
        lp = (lp * self.grid.cell_volume()).powf(1.0 / p);
        Ok(Norms {
            l2: l2sq.sqrt(),
            h1: h1sq.sqrt(),
            sigma: (h1sq + xsq).sqrt(),
            lp,
            p,
        })
    }

    /// Spectral Sobolev norm `(sum (1+|k|^2)^s |c_k|^2 (2L)^d)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        self.ensure_finite("sobolev_norm input")?;
        let n = self.grid.points_per_axis();
        let d = self.grid.dim();
        let coeffs = self.spectral();
        let mut acc = 0.0;
        for (idx, c) in coeffs.iter().enumerate() {
            let k2 = if d == 1 {
                let k = self.grid.wavenumber(idx);
                k * k
            } else {
                let k0 = self.grid.wavenumber(idx / n);
                let k1 = self.grid.wavenumber(idx % n);
                k0 * k0 + k1 * k1
            };
            acc += (1.0 + k2).powf(s) * c.norm_sqr();
        }
        Ok((acc * (2.0 * self.grid.half_width()).powi(d as i32)).sqrt())
    }

    /// Translate by `delta` through the Fourier shift theorem (unitary).
    pub fn shift(&self, delta: &[f64]) -> Result<ComplexField> {
        self.ensure_finite("shift input")?;
        let n = self.grid.points_per_axis();
        let d = self.grid.dim();
        let mut data = self.values.clone();
        fft_all_axes(&self.grid, &mut data, false);
        let scale = 1.0 / self.grid.len() as f64;
        for (idx, z) in data.iter_mut().enumerate() {
            let mut phase = 0.0;
            for axis in 0..d {
                let j = if d == 1 {
                    idx
                } else if axis == 0 {
                    idx / n
                } else {
                    idx % n
                };
                phase += self.grid.wavenumber(j) * delta[axis];
            }
            *z *= Complex64::from_polar(scale, phase);
        }
        fft_all_axes(&self.grid, &mut data, true);
        Ok(ComplexField {
            grid: self.grid.clone(),
            values: data,
        })
    }

    /// Evaluate the trigonometric interpolant on a tensor grid of points
    /// (one coordinate list per axis). Points may lie anywhere; the periodic
    /// extension is evaluated. Output is flattened with axis 0 slowest.
    pub fn fourier_eval_tensor(&self, axes: &[Vec<f64>]) -> Result<Vec<Complex64>> {
        self.ensure_finite("fourier_eval_tensor input")?;
        let d = self.grid.dim();
        if axes.len() != d {
            return Err(Error::SnapshotFormat(format!(
                "expected {} coordinate lists, got {}",
                d,
                axes.len()
            )));
        }
        let n = self.grid.points_per_axis();
        let l = self.grid.half_width();
        let coeffs = self.spectral();
        // Per-axis evaluation matrices e^{i k_j (x + L)}, Nyquist symmetrized.
        let basis: Vec<Vec<Complex64>> = axes
            .iter()
            .map(|xs| {
                let mut m = Vec::with_capacity(xs.len() * n);
                for &x in xs {
                    for j in 0..n {
                        let k = self.grid.wavenumber(j);
                        let e = Complex64::from_polar(1.0, k * (x + l));
                        // Split the Nyquist mode evenly between +/- k.
                        if j == n / 2 {
                            let em = Complex64::from_polar(1.0, -k * (x + l));
                            m.push(0.5 * (e + em));
                        } else {
                            m.push(e);
                        }
                    }
                }
                Ok(m)
            })
            .collect::<Result<_>>()?;
        match d {
            1 => {
                let xs = &axes[0];
                let mut out = Vec::with_capacity(xs.len());
                for pi in 0..xs.len() {
                    let row = &basis[0][pi * n..(pi + 1) * n];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (c, e) in coeffs.iter().zip(row) {
                        acc += c * e;
                    }
                    out.push(acc);
                }
                Ok(out)
            }
            _ => {
                let (p0, p1) = (axes[0].len(), axes[1].len());
                // Contract axis 1 first: partial[j0 * p1 + q] = sum_j1 c[j0,j1] e1[q,j1].
                let mut partial = vec![Complex64::new(0.0, 0.0); n * p1];
                for j0 in 0..n {
                    let crow = &coeffs[j0 * n..(j0 + 1) * n];
                    for q in 0..p1 {
                        let erow = &basis[1][q * n..(q + 1) * n];
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (c, e) in crow.iter().zip(erow) {
                            acc += c * e;
                        }
                        partial[j0 * p1 + q] = acc;
                    }
                }
                let mut out = vec![Complex64::new(0.0, 0.0); p0 * p1];
                for p in 0..p0 {
                    let erow = &basis[0][p * n..(p + 1) * n];
                    for q in 0..p1 {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for j0 in 0..n {
                            acc += erow[j0] * partial[j0 * p1 + q];
                        }
                        out[p * p1 + q] = acc;
                    }
                }
                Ok(out)
            }
        }
    }
}
