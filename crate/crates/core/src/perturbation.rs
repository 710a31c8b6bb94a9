//! Lower-order coefficient fields `a1, a0` built from spatial functions
//! `phi_l` and temporal paths `h_l`: flatness-compliant builders, Brownian
//! ensembles, coefficient assembly, and the gauge (Doss-Sussman) phase.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ComplexField, Grid};

/// Spatial envelope of the flat builders.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Envelope {
    /// `exp(-|x|^2 / (2 w^2))`
    Gaussian { width: f64 },
    /// Compactly supported `exp(1 - 1/(1 - |x|^2/R^2))`, zero for `|x| >= R`
    Bump { radius: f64 },
}

impl Envelope {
    fn eval(&self, r2: f64) -> f64 {
        match *self {
            Envelope::Gaussian { width } => (-r2 / (2.0 * width * width)).exp(),
            Envelope::Bump { radius } => {
                let u = r2 / (radius * radius);
                if u >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - u)).exp()
                }
            }
        }
    }
}

/// Closed-form description of a flat spatial factor; used for off-grid
/// evaluation when certifying flatness.
#[derive(Debug, Clone)]
pub struct FlatSpatialSpec {
    pub singularities: Vec<Vec<f64>>,
    pub power: i32,
    pub envelope: Envelope,
    pub amplitude: f64,
}

impl FlatSpatialSpec {
    pub fn eval(&self, pt: &[f64]) -> f64 {
        let r2: f64 = pt.iter().map(|x| x * x).sum();
        let mut v = self.amplitude * self.envelope.eval(r2);
        for x in &self.singularities {
            let s: f64 = pt.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            let sp = s.powi(self.power);
            v *= sp / (1.0 + sp);
        }
        v
    }
}

/// A smooth spatial factor with its spectrally cached derivatives.
#[derive(Debug, Clone)]
pub struct PhiFunction {
    field: ComplexField,
    grad: Vec<ComplexField>,
    laplacian: ComplexField,
    /// Row-major upper triangle: d=1 `[xx]`, d=2 `[xx, xy, yy]`.
    hessian: Vec<ComplexField>,
    bilaplacian: ComplexField,
    analytic: Option<FlatSpatialSpec>,
}

impl PhiFunction {
    /// Cache all derivatives of a sampled real profile.
    pub fn from_samples(field: ComplexField) -> Result<Self> {
        field.ensure_finite("phi samples")?;
        let grad = field.gradient()?;
        let laplacian = field.laplacian()?;
        let mut hessian = Vec::new();
        for (axis, g) in grad.iter().enumerate() {
            for g2 in g.gradient()?.into_iter().skip(axis) {
                hessian.push(g2);
            }
        }
        let bilaplacian = laplacian.laplacian()?;
        Ok(PhiFunction {
            field,
            grad,
            laplacian,
            hessian,
            bilaplacian,
            analytic: None,
        })
    }

    pub fn analytic(&self) -> Option<&FlatSpatialSpec> {
        self.analytic.as_ref()
    }

    pub fn field(&self) -> &ComplexField {
        &self.field
    }

    pub fn grad(&self) -> &[ComplexField] {
        &self.grad
    }

    pub fn laplacian(&self) -> &ComplexField {
        &self.laplacian
    }

    /// `d^2 phi / dx_i dx_j` from the cached upper triangle.
    pub fn hessian(&self, i: usize, j: usize) -> &ComplexField {
        let d = self.grad.len();
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        // index into the packed upper triangle
        let idx = a * d - a * (a.saturating_sub(1)) / 2 + (b - a);
        let idx = if d == 1 { 0 } else { idx };
        &self.hessian[idx]
    }

    pub fn bilaplacian(&self) -> &ComplexField {
        &self.bilaplacian
    }
}

/// Flat spatial factor: `amplitude * envelope(x) * prod_k m(|x - x_k|^2)`
/// with `m(s) = s^p / (1 + s^p)`.
///
/// The certified flatness order is `flat_order`; the construction vanishes
/// to order `2p = 2 flat_order + 4`, which keeps every finite-difference
/// reading up to `flat_order` at the singularities below the 1e-6 gate
/// (vanishing to the minimal order would leak the next Taylor coefficient
/// into the stencils at O(dx^2)).
pub fn build_flat_spatial(
    grid: &Arc<Grid>,
    singularities: &[Vec<f64>],
    flat_order: usize,
    envelope: Envelope,
    amplitude: f64,
) -> Result<PhiFunction> {
    for x in singularities {
        if !grid.in_safe_region(x, crate::profiles::SAFE_MARGIN) {
            return Err(Error::OutsideSafeRegion {
                point: x.clone(),
                margin: crate::profiles::SAFE_MARGIN,
            });
        }
    }
    let spec = FlatSpatialSpec {
        singularities: singularities.to_vec(),
        power: (flat_order + 2) as i32,
        envelope,
        amplitude,
    };
    let d = grid.dim();
    let field = ComplexField::from_fn(grid, |pt| Complex64::new(spec.eval(&pt[..d]), 0.0));
    let mut phi = PhiFunction::from_samples(field)?;
    phi.analytic = Some(spec);
    Ok(phi)
}

/// Central finite-difference coefficients for the n-th derivative
/// (minimal stencil; odd orders convolve with the centered first
/// difference).
fn fd_stencil(n: usize) -> Vec<f64> {
    let conv = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    };
    let mut c = vec![1.0];
    for _ in 0..n / 2 {
        c = conv(&c, &[1.0, -2.0, 1.0]);
    }
    if n % 2 == 1 {
        c = conv(&c, &[-0.5, 0.0, 0.5]);
    }
    c
}

/// Max absolute finite-difference derivative reading of orders
/// `1..=order` at each point (snapped to the nearest grid node).
pub fn verify_flatness(f: &ComplexField, points: &[Vec<f64>], order: usize) -> f64 {
    let grid = f.grid().clone();
    let n = grid.points_per_axis();
    let d = grid.dim();
    let h = grid.spacing();
    let snap = |x: f64| -> usize {
        (((x + grid.half_width()) / h).round() as isize).rem_euclid(n as isize) as usize
    };
    let value = |i: isize, j: isize| -> Complex64 {
        let ii = i.rem_euclid(n as isize) as usize;
        let jj = j.rem_euclid(n as isize) as usize;
        if d == 1 {
            f.values()[ii]
        } else {
            f.values()[ii * n + jj]
        }
    };
    let mut worst: f64 = 0.0;
    for pt in points {
        let i0 = snap(pt[0]) as isize;
        let j0 = if d == 2 { snap(pt[1]) as isize } else { 0 };
        for total in 1..=order {
            for ax in 0..=total {
                let ay = total - ax;
                if d == 1 && ay > 0 {
                    continue;
                }
                let sx = fd_stencil(ax);
                let sy = fd_stencil(ay);
                let rx = (sx.len() / 2) as isize;
                let ry = (sy.len() / 2) as isize;
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, &cx) in sx.iter().enumerate() {
                    for (b, &cy) in sy.iter().enumerate() {
                        if cx == 0.0 || cy == 0.0 {
                            continue;
                        }
                        acc += cx * cy * value(i0 + a as isize - rx, j0 + b as isize - ry);
                    }
                }
                let reading = acc.norm() / h.powi(total as i32);
                worst = worst.max(reading);
            }
        }
    }
    worst
}

/// Like [`verify_flatness`] but for a closed-form function, evaluated on
/// local stencils of step `h` independent of any grid.
pub fn verify_flatness_analytic(
    f: &dyn Fn(&[f64]) -> f64,
    d: usize,
    points: &[Vec<f64>],
    order: usize,
    h: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for pt in points {
        for total in 1..=order {
            for ax in 0..=total {
                let ay = total - ax;
                if d == 1 && ay > 0 {
                    continue;
                }
                let sx = fd_stencil(ax);
                let sy = fd_stencil(ay);
                let rx = (sx.len() / 2) as isize;
                let ry = (sy.len() / 2) as isize;
                let mut acc = 0.0;
                for (a, &cx) in sx.iter().enumerate() {
                    for (b, &cy) in sy.iter().enumerate() {
                        if cx == 0.0 || cy == 0.0 {
                            continue;
                        }
                        let mut q = vec![0.0; d];
                        q[0] = pt[0] + (a as isize - rx) as f64 * h;
                        if d == 2 {
                            q[1] = pt[1] + (b as isize - ry) as f64 * h;
                        }
                        acc += cx * cy * f(&q);
                    }
                }
                worst = worst.max(acc.abs() / h.powi(total as i32));
            }
        }
    }
    worst
}

/// Brownian paths on a strictly increasing time grid: `h_l(t_0) = 0`,
/// independent `N(0, dt)` increments, fully determined by the seed.
pub fn sample_brownian(n_noise: usize, times: &[f64], seed: u64) -> Vec<Vec<f64>> {
    assert!(
        times.windows(2).all(|w| w[1] > w[0]),
        "time grid must be strictly increasing"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    (0..n_noise)
        .map(|_| {
            let mut path = Vec::with_capacity(times.len());
            let mut h = 0.0;
            path.push(h);
            for w in times.windows(2) {
                let dt = w[1] - w[0];
                let z: f64 = normal.sample(&mut rng);
                h += dt.sqrt() * z;
                path.push(h);
            }
            path
        })
        .collect()
}

/// Spatial factors with temporal paths; the complete description of the
/// lower-order perturbation.
pub struct PerturbationModel {
    phi: Vec<PhiFunction>,
    times: Vec<f64>,
    paths: Vec<Vec<f64>>,
    flat_order: usize,
    seed: Option<u64>,
}

impl PerturbationModel {
    /// `n_noise = 0`: the unperturbed equation.
    pub fn trivial() -> Self {
        PerturbationModel {
            phi: Vec::new(),
            times: Vec::new(),
            paths: Vec::new(),
            flat_order: 0,
            seed: None,
        }
    }

    pub fn new(
        phi: Vec<PhiFunction>,
        times: Vec<f64>,
        paths: Vec<Vec<f64>>,
        flat_order: usize,
        seed: Option<u64>,
    ) -> Self {
        assert_eq!(phi.len(), paths.len(), "one path per spatial factor");
        for p in &paths {
            assert_eq!(p.len(), times.len());
        }
        PerturbationModel {
            phi,
            times,
            paths,
            flat_order,
            seed,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn n_noise(&self) -> usize {
        self.phi.len()
    }

    pub fn flat_order(&self) -> usize {
        self.flat_order
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn phi(&self) -> &[PhiFunction] {
        &self.phi
    }

    pub fn path_times(&self) -> &[f64] {
        &self.times
    }

    pub fn paths(&self) -> &[Vec<f64>] {
        &self.paths
    }

    /// Piecewise-linear path value.
    pub fn h(&self, l: usize, t: f64) -> Result<f64> {
        let times = &self.times;
        let lo = times[0];
        let hi = *times.last().unwrap();
        if t < lo - 1e-12 || t > hi + 1e-12 {
            return Err(Error::TimeOutOfDomain { t, lo, hi });
        }
        let i = match times.binary_search_by(|v| v.partial_cmp(&t).expect("finite times")) {
            Ok(i) => return Ok(self.paths[l][i]),
            Err(i) => i.clamp(1, times.len() - 1),
        };
        let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
        Ok(self.paths[l][i - 1] * (1.0 - w) + self.paths[l][i] * w)
    }

    /// Paths as CSV: `t, h_1 .. h_N`.
    pub fn paths_csv(&self) -> String {
        let mut out = String::from("t");
        for l in 1..=self.n_noise() {
            out.push_str(&format!(",h_{l}"));
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for path in &self.paths {
                out.push_str(&format!(",{}", path[i]));
            }
            out.push('\n');
        }
        out
    }

    /// Certify flatness of every spatial factor at the given points; the
    /// analytic sampler is preferred (grid-independent stencil step).
    pub fn certify_flatness(&self, points: &[Vec<f64>]) -> f64 {
        self.phi
            .iter()
            .map(|p| match p.analytic() {
                Some(spec) => {
                    let d = points[0].len();
                    verify_flatness_analytic(
                        &|q: &[f64]| spec.eval(q),
                        d,
                        points,
                        self.flat_order,
                        0.01,
                    )
                }
                None => verify_flatness(p.field(), points, self.flat_order),
            })
            .fold(0.0, f64::max)
    }
}

/// The assembled coefficients at one time.
pub struct CoefficientSlice {
    /// `a1 = 2i sum_l grad(phi_l) h_l(t)`; purely imaginary by construction.
    pub a1: Vec<ComplexField>,
    /// `a0 = -sum_j (sum_l d_j phi_l h_l)^2 + i sum_l lap(phi_l) h_l`.
    pub a0: ComplexField,
    pub t: f64,
}

/// Assemble `a1, a0` from the cached spectral derivatives.
pub fn assemble_coefficients(
    model: &PerturbationModel,
    grid: &Arc<Grid>,
    t: f64,
) -> Result<CoefficientSlice> {
    let d = grid.dim();
    let len = grid.len();
    if model.is_trivial() {
        return Ok(CoefficientSlice {
            a1: (0..d).map(|_| ComplexField::zeros(grid)).collect(),
            a0: ComplexField::zeros(grid),
            t,
        });
    }
    let h: Vec<f64> = (0..model.n_noise())
        .map(|l| model.h(l, t))
        .collect::<Result<_>>()?;
    // G_j = sum_l d_j phi_l h_l (real)
    let mut g = vec![vec![0.0; len]; d];
    let mut lap = vec![0.0; len];
    for (l, phi) in model.phi.iter().enumerate() {
        for (axis, gphi) in phi.grad().iter().enumerate() {
            for (dst, src) in g[axis].iter_mut().zip(gphi.values()) {
                *dst += h[l] * src.re;
            }
        }
        for (dst, src) in lap.iter_mut().zip(phi.laplacian().values()) {
            *dst += h[l] * src.re;
        }
    }
    let a1 = g
        .iter()
        .map(|gj| {
            ComplexField::from_values(
                grid,
                gj.iter().map(|&v| Complex64::new(0.0, 2.0 * v)).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let a0_values = (0..len)
        .map(|i| {
            let re: f64 = -(0..d).map(|j| g[j][i] * g[j][i]).sum::<f64>();
            Complex64::new(re, lap[i])
        })
        .collect();
    let a0 = ComplexField::from_values(grid, a0_values)?;
    Ok(CoefficientSlice { a1, a0, t })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeDirection {
    Forward,
    Inverse,
}

/// The gauge phase `X = e^{i sum_l phi_l h_l(t)} v` (forward), or its
/// conjugate (inverse). Pointwise unimodular.
pub fn doss_sussman(
    v: &ComplexField,
    model: &PerturbationModel,
    t: f64,
    direction: GaugeDirection,
) -> Result<ComplexField> {
    if model.is_trivial() {
        return Ok(v.clone());
    }
    let h: Vec<f64> = (0..model.n_noise())
        .map(|l| model.h(l, t))
        .collect::<Result<_>>()?;
    let sign = match direction {
        GaugeDirection::Forward => 1.0,
        GaugeDirection::Inverse => -1.0,
    };
    let grid = v.grid().clone();
    let mut values = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let mut phase = 0.0;
        for (l, phi) in model.phi.iter().enumerate() {
            phase += phi.field().values()[idx].re * h[l];
        }
        values.push(v.values()[idx] * Complex64::from_polar(1.0, sign * phase));
    }
    ComplexField::from_values(&grid, values)
}

/// Flat complex residue: the phi builder with flatness order `2m`, complex
/// amplitude along `(1+i)/sqrt(2)`, rescaled so the `H^{2m+2+d}` norm
/// equals `alpha_star`.
pub fn build_regular_residue(
    grid: &Arc<Grid>,
    gs_dim: usize,
    singularities: &[Vec<f64>],
    m: usize,
    envelope: Envelope,
    alpha_star: f64,
) -> Result<ComplexField> {
    if alpha_star == 0.0 {
        return Ok(ComplexField::zeros(grid));
    }
    let shape = build_flat_spatial(grid, singularities, 2 * m, envelope, 1.0)?;
    let s = (2 * m + 2 + gs_dim) as f64;
    let norm = shape.field().sobolev_norm(s)?;
    let scale = Complex64::from_polar(alpha_star / norm, std::f64::consts::FRAC_PI_4);
    Ok(shape.field().scale(scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_grid;
    use approx::assert_relative_eq;

    fn grid1() -> Arc<Grid> {
        make_grid(1, 10.0, 2048).unwrap()
    }

    #[test]
    fn builder_is_flat_at_single_singularity() {
        let grid = grid1();
        let phi = build_flat_spatial(
            &grid,
            &[vec![0.0]],
            5,
            Envelope::Gaussian { width: 1.25 },
            1.0,
        )
        .unwrap();
        let worst = verify_flatness(phi.field(), &[vec![0.0]], 5);
        assert!(worst < 1e-6, "flatness residual {worst:.3e}");
    }

    #[test]
    fn builder_flat_at_two_singularities() {
        let grid = grid1();
        let phi = build_flat_spatial(
            &grid,
            &[vec![-3.0], vec![3.0]],
            5,
            Envelope::Bump { radius: 7.0 },
            1.0,
        )
        .unwrap();
        let worst = verify_flatness(phi.field(), &[vec![-3.0], vec![3.0]], 5);
        assert!(worst < 1e-6, "flatness residual {worst:.3e}");
        // and the factor is not trivially zero
        assert!(phi.field().max_abs() > 0.1);
    }

    #[test]
    fn builder_zero_amplitude_gives_zero() {
        let grid = grid1();
        let phi = build_flat_spatial(
            &grid,
            &[vec![0.0]],
            5,
            Envelope::Gaussian { width: 1.25 },
            0.0,
        )
        .unwrap();
        assert_eq!(phi.field().max_abs(), 0.0);
    }

    #[test]
    fn plain_gaussian_fails_flatness() {
        let grid = grid1();
        let f = ComplexField::from_fn(&grid, |p| Complex64::new((-p[0] * p[0]).exp(), 0.0));
        let worst = verify_flatness(&f, &[vec![0.0]], 2);
        // second derivative of e^{-x^2} at 0 is -2
        assert!(worst > 1.0, "detector reading {worst}");
    }

    #[test]
    fn flatness_2d_builder() {
        let grid = make_grid(2, 10.0, 256).unwrap();
        let phi = build_flat_spatial(
            &grid,
            &[vec![-2.0, 1.0], vec![2.0, -1.0]],
            5,
            Envelope::Bump { radius: 7.0 },
            1.0,
        )
        .unwrap();
        let spec = phi.analytic().unwrap();
        let worst = verify_flatness_analytic(
            &|q: &[f64]| spec.eval(q),
            2,
            &[vec![-2.0, 1.0], vec![2.0, -1.0]],
            5,
            0.01,
        );
        assert!(worst < 1e-6, "flatness residual {worst:.3e}");
    }

    #[test]
    fn brownian_is_deterministic() {
        let times: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
        let a = sample_brownian(3, &times, 42);
        let b = sample_brownian(3, &times, 42);
        for (pa, pb) in a.iter().zip(&b) {
            for (x, y) in pa.iter().zip(pb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(a[0][0], 0.0);
    }

    #[test]
    fn brownian_variance_matches_time() {
        // Monte-Carlo oracle: Var h(0.5) ~ 0.5 within 5%
        let times: Vec<f64> = (0..51).map(|i| i as f64 * 0.01).collect();
        let n = 10_000;
        let mut acc = 0.0;
        for seed in 0..n {
            let p = sample_brownian(1, &times, seed);
            acc += p[0][50] * p[0][50];
        }
        let var = acc / n as f64;
        assert!((var - 0.5).abs() < 0.025, "sample variance {var}");
    }

    #[test]
    fn brownian_increments_pass_ks_normality() {
        let times: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
        let paths = sample_brownian(100, &times, 7);
        let mut z: Vec<f64> = Vec::new();
        for p in &paths {
            for w in p.windows(2) {
                z.push((w[1] - w[0]) / 0.01f64.sqrt());
            }
        }
        z.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // A&S 7.1.26 erf approximation, |error| < 1.5e-7
        let cdf = |x: f64| -> f64 {
            let t = x / std::f64::consts::SQRT_2;
            let s = t.signum();
            let t = t.abs();
            let u = 1.0 / (1.0 + 0.3275911 * t);
            let poly = u
                * (0.254829592
                    + u * (-0.284496736 + u * (1.421413741 + u * (-1.453152027 + u * 1.061405429))));
            let erf = s * (1.0 - poly * (-t * t).exp());
            0.5 * (1.0 + erf)
        };
        let n = z.len() as f64;
        let mut d_stat: f64 = 0.0;
        for (i, &x) in z.iter().enumerate() {
            let f = cdf(x);
            d_stat = d_stat.max((f - i as f64 / n).abs());
            d_stat = d_stat.max(((i + 1) as f64 / n - f).abs());
        }
        let critical = 1.6276 / n.sqrt(); // 1% level
        assert!(d_stat < critical, "KS statistic {d_stat} vs {critical}");
    }

    fn test_model(grid: &Arc<Grid>) -> PerturbationModel {
        let times: Vec<f64> = (0..51).map(|i| 0.5 + i as f64 * 0.01).collect();
        let paths = sample_brownian(2, &times, 5);
        let phi = vec![
            build_flat_spatial(
                grid,
                &[vec![-4.0], vec![4.0]],
                5,
                Envelope::Bump { radius: 7.0 },
                0.05,
            )
            .unwrap(),
            build_flat_spatial(
                grid,
                &[vec![-4.0], vec![4.0]],
                5,
                Envelope::Gaussian { width: 1.25 },
                0.05,
            )
            .unwrap(),
        ];
        PerturbationModel::new(phi, times, paths, 5, Some(5))
    }

    #[test]
    fn coefficients_match_definitions() {
        let grid = grid1();
        let model = test_model(&grid);
        let t = 0.77;
        let slice = assemble_coefficients(&model, &grid, t).unwrap();
        // a1 purely imaginary, exactly
        for a in &slice.a1 {
            assert!(a.values().iter().all(|z| z.re == 0.0));
        }
        // recompute from the model definition
        let h: Vec<f64> = (0..2).map(|l| model.h(l, t).unwrap()).collect();
        let mut worst: f64 = 0.0;
        for idx in 0..grid.len() {
            let mut grad_sum = 0.0;
            let mut lap_sum = 0.0;
            for (l, phi) in model.phi().iter().enumerate() {
                grad_sum += h[l] * phi.grad()[0].values()[idx].re;
                lap_sum += h[l] * phi.laplacian().values()[idx].re;
            }
            let a1 = Complex64::new(0.0, 2.0 * grad_sum);
            let a0 = Complex64::new(-grad_sum * grad_sum, lap_sum);
            worst = worst.max((slice.a1[0].values()[idx] - a1).norm());
            worst = worst.max((slice.a0.values()[idx] - a0).norm());
        }
        assert!(worst < 1e-12, "reassembly residual {worst:.3e}");
    }

    #[test]
    fn zero_paths_give_zero_coefficients() {
        let grid = grid1();
        let times = vec![0.0, 1.0];
        let phi = vec![build_flat_spatial(
            &grid,
            &[vec![0.0]],
            5,
            Envelope::Gaussian { width: 1.25 },
            1.0,
        )
        .unwrap()];
        let model = PerturbationModel::new(phi, times, vec![vec![0.0, 0.0]], 5, None);
        let slice = assemble_coefficients(&model, &grid, 0.5).unwrap();
        assert_eq!(slice.a1[0].max_abs(), 0.0);
        assert_eq!(slice.a0.max_abs(), 0.0);
    }

    #[test]
    fn single_phi_unit_path_closed_form() {
        // h = 1: Re a0 = -|grad phi|^2, Im a0 = lap phi pointwise
        let grid = grid1();
        let phi = build_flat_spatial(
            &grid,
            &[vec![-4.0], vec![4.0]],
            5,
            Envelope::Bump { radius: 7.0 },
            0.3,
        )
        .unwrap();
        let gphi = phi.grad()[0].clone();
        let lphi = phi.laplacian().clone();
        let model = PerturbationModel::new(
            vec![phi],
            vec![0.0, 1.0],
            vec![vec![1.0, 1.0]],
            5,
            None,
        );
        let slice = assemble_coefficients(&model, &grid, 0.5).unwrap();
        let mut worst: f64 = 0.0;
        for idx in 0..grid.len() {
            let g = gphi.values()[idx].re;
            worst = worst.max((slice.a0.values()[idx].re + g * g).abs());
            worst = worst.max((slice.a0.values()[idx].im - lphi.values()[idx].re).abs());
        }
        assert!(worst < 1e-10, "pointwise residual {worst:.3e}");
    }

    #[test]
    fn gauge_phase_round_trip() {
        let grid = grid1();
        let model = test_model(&grid);
        let v = ComplexField::from_fn(&grid, |p| {
            Complex64::new((-p[0] * p[0] / 3.0).exp(), 0.2 * p[0].sin())
        });
        let t = 0.9;
        let x = doss_sussman(&v, &model, t, GaugeDirection::Forward).unwrap();
        assert_relative_eq!(x.l2_norm(), v.l2_norm(), max_relative = 1e-14);
        let back = doss_sussman(&x, &model, t, GaugeDirection::Inverse).unwrap();
        let diff = back.sub(&v).unwrap();
        assert!(diff.max_abs() < 1e-14);
        // pointwise modulus preserved
        for (a, b) in x.values().iter().zip(v.values()) {
            assert_relative_eq!(a.norm(), b.norm(), epsilon = 1e-14);
        }
    }

    #[test]
    fn residue_builder_flat_and_scaled() {
        let grid = grid1();
        let m = 4;
        let z = build_regular_residue(
            &grid,
            1,
            &[vec![-4.0], vec![4.0]],
            m,
            Envelope::Bump { radius: 7.0 },
            1e-3,
        )
        .unwrap();
        let worst = verify_flatness(&z, &[vec![-4.0], vec![4.0]], 2 * m);
        assert!(worst < 1e-5, "flatness residual {worst:.3e}");
        let s = (2 * m + 2 + 1) as f64;
        assert_relative_eq!(z.sobolev_norm(s).unwrap(), 1e-3, max_relative = 1e-6);
    }

    #[test]
    fn residue_builder_order_six() {
        let grid = grid1();
        let z = build_regular_residue(
            &grid,
            1,
            &[vec![0.0]],
            3,
            Envelope::Gaussian { width: 1.25 },
            1e-2,
        )
        .unwrap();
        let worst = verify_flatness(&z, &[vec![0.0]], 6);
        assert!(worst < 1e-5, "flatness residual {worst:.3e}");
    }
}
