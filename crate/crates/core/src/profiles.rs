//! Explicit solution profiles: pseudo-conformal blow-up bubbles, solitary
//! waves, modulated bubbles, and the pseudo-conformal transform pair.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ComplexField, Grid};
use crate::groundstate::GroundStateTable;

/// Profiles sharper than this multiple of the grid spacing are rejected.
pub const RESOLUTION_FACTOR: f64 = 8.0;

/// Margin (length units) that singularities and soliton centers must keep
/// from the box boundary.
pub const SAFE_MARGIN: f64 = 3.0;

/// One bubble of a multi-bubble configuration. `x` is the singularity on
/// the blow-up side; `c` the velocity of the corresponding solitary wave
/// (the transform identifies `x = c`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BubbleSpec {
    pub w: f64,
    pub x: Vec<f64>,
    pub theta: f64,
    pub c: Vec<f64>,
}

impl BubbleSpec {
    pub fn pseudoconformal(w: f64, x: Vec<f64>, theta: f64) -> Self {
        let c = x.clone();
        BubbleSpec { w, x, theta, c }
    }

    pub fn soliton(w: f64, c: Vec<f64>, theta: f64) -> Self {
        let x = c.clone();
        BubbleSpec { w, x, theta, c }
    }
}

/// Modulation parameters of one bubble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub theta: f64,
}

impl BubbleParams {
    pub fn dof(d: usize) -> usize {
        2 * d + 3
    }

    /// Flatten into the fit ordering `(lambda, alpha.., beta.., gamma, theta)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.lambda];
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.beta);
        v.push(self.gamma);
        v.push(self.theta);
        v
    }

    pub fn from_slice(d: usize, s: &[f64]) -> Self {
        BubbleParams {
            lambda: s[0],
            alpha: s[1..1 + d].to_vec(),
            beta: s[1 + d..1 + 2 * d].to_vec(),
            gamma: s[1 + 2 * d],
            theta: s[2 + 2 * d],
        }
    }
}

/// Per-bubble parameter tuples at one time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulationState {
    pub t: f64,
    pub bubbles: Vec<BubbleParams>,
}

impl ModulationState {
    /// Exact decomposition of the pseudo-conformal sum at boundary time:
    /// `(w_k(T-t), x_k, 0, w_k^2(T-t), w_k^{-2}(T-t)^{-1} + theta_k)`.
    pub fn boundary(specs: &[BubbleSpec], big_t: f64, t: f64) -> Self {
        let s = big_t - t;
        let bubbles = specs
            .iter()
            .map(|b| BubbleParams {
                lambda: b.w * s,
                alpha: b.x.clone(),
                beta: vec![0.0; b.x.len()],
                gamma: b.w * b.w * s,
                theta: 1.0 / (b.w * b.w * s) + b.theta,
            })
            .collect();
        ModulationState { t, bubbles }
    }
}

fn check_resolved(grid: &Grid, lambda: f64) -> Result<()> {
    let min_scale = RESOLUTION_FACTOR * grid.spacing();
    if lambda < min_scale {
        Err(Error::UnderResolved {
            scale: lambda,
            min_scale,
        })
    } else {
        Ok(())
    }
}

/// Sum of pseudo-conformal blow-up bubbles at time `t < T`.
pub fn eval_pseudoconformal(
    specs: &[BubbleSpec],
    gs: &GroundStateTable,
    grid: &Arc<Grid>,
    big_t: f64,
    t: f64,
) -> Result<ComplexField> {
    let s = big_t - t;
    assert!(s > 0.0, "pseudo-conformal profile needs t < T");
    let d = grid.dim();
    for b in specs {
        check_resolved(grid, b.w * s)?;
    }
    let mut out = ComplexField::zeros(grid);
    for b in specs {
        let lam = b.w * s;
        let amp = lam.powf(-(d as f64) / 2.0);
        let phase_t = 1.0 / (b.w * b.w * s) + b.theta;
        for (idx, z) in out.values_mut().iter_mut().enumerate() {
            let p = grid.point(idx);
            let mut r2 = 0.0;
            for axis in 0..d {
                let dx = p[axis] - b.x[axis];
                r2 += dx * dx;
            }
            let q = gs.q(r2.sqrt() / lam);
            let phase = -r2 / (4.0 * s) + phase_t;
            *z += Complex64::from_polar(amp * q, phase);
        }
    }
    out.ensure_finite("eval_pseudoconformal")?;
    Ok(out)
}

/// Sum of solitary waves at time `t`.
pub fn eval_soliton(
    specs: &[BubbleSpec],
    gs: &GroundStateTable,
    grid: &Arc<Grid>,
    t: f64,
) -> Result<ComplexField> {
    let d = grid.dim();
    for b in specs {
        let center: Vec<f64> = b.c.iter().map(|c| c * t).collect();
        if !grid.in_safe_region(&center, SAFE_MARGIN) {
            return Err(Error::OutsideSafeRegion {
                point: center,
                margin: SAFE_MARGIN,
            });
        }
        check_resolved(grid, b.w)?;
    }
    let mut out = ComplexField::zeros(grid);
    for b in specs {
        let amp = b.w.powf(-(d as f64) / 2.0);
        let c2: f64 = b.c.iter().map(|c| c * c).sum();
        let phase_t = -0.25 * c2 * t + t / (b.w * b.w) + b.theta;
        for (idx, z) in out.values_mut().iter_mut().enumerate() {
            let p = grid.point(idx);
            let mut r2 = 0.0;
            let mut cx = 0.0;
            for axis in 0..d {
                let dx = p[axis] - b.c[axis] * t;
                r2 += dx * dx;
                cx += b.c[axis] * p[axis];
            }
            let q = gs.q(r2.sqrt() / b.w);
            *z += Complex64::from_polar(amp * q, 0.5 * cx + phase_t);
        }
    }
    out.ensure_finite("eval_soliton")?;
    Ok(out)
}

/// The modulated bubble family and its companions.
pub struct ModulatedProfiles {
    /// `U_k`
    pub bubbles: Vec<ComplexField>,
    /// `grad U_k` (spectral), per bubble per axis
    pub grads: Vec<Vec<ComplexField>>,
    /// `Lambda_k U_k` (spectral)
    pub lambda_u: Vec<ComplexField>,
    /// `varrho_k` (rho in place of Q)
    pub varrho: Vec<ComplexField>,
    /// `U = sum_k U_k`
    pub total: ComplexField,
}

/// Evaluate one modulated profile with `g` as the radial shape.
fn modulated_field(
    params: &BubbleParams,
    grid: &Arc<Grid>,
    shape: &dyn Fn(f64) -> f64,
) -> ComplexField {
    let d = grid.dim();
    let lam = params.lambda;
    let amp = lam.powf(-(d as f64) / 2.0);
    ComplexField::from_fn(grid, |p| {
        let mut y2 = 0.0;
        let mut by = 0.0;
        for axis in 0..d {
            let y = (p[axis] - params.alpha[axis]) / lam;
            y2 += y * y;
            by += params.beta[axis] * y;
        }
        let g = shape(y2.sqrt());
        let phase = by - 0.25 * params.gamma * y2 + params.theta;
        Complex64::from_polar(amp * g, phase)
    })
}

/// `U_k` alone (hot path of the parameter fit).
pub fn eval_bubble(
    params: &BubbleParams,
    gs: &GroundStateTable,
    grid: &Arc<Grid>,
) -> Result<ComplexField> {
    check_resolved(grid, params.lambda)?;
    Ok(modulated_field(params, grid, &|r| gs.q(r)))
}

/// Sum of `U_k` over all bubbles.
pub fn eval_bubble_sum(
    state: &ModulationState,
    gs: &GroundStateTable,
    grid: &Arc<Grid>,
) -> Result<ComplexField> {
    let mut total = ComplexField::zeros(grid);
    for params in &state.bubbles {
        total = total.add(&eval_bubble(params, gs, grid)?)?;
    }
    Ok(total)
}

/// Evaluate `U_k`, `Lambda_k U_k`, `varrho_k` per bubble and the sum `U`.
pub fn eval_modulated(
    state: &ModulationState,
    gs: &GroundStateTable,
    grid: &Arc<Grid>,
) -> Result<ModulatedProfiles> {
    let d = grid.dim();
    let mut bubbles = Vec::with_capacity(state.bubbles.len());
    let mut all_grads = Vec::with_capacity(state.bubbles.len());
    let mut lambda_u = Vec::with_capacity(state.bubbles.len());
    let mut varrho = Vec::with_capacity(state.bubbles.len());
    let mut total = ComplexField::zeros(grid);
    for params in &state.bubbles {
        let u = eval_bubble(params, gs, grid)?;
        // Lambda_k = d/2 + (x - alpha_k) . grad, gradient taken spectrally
        let grads = u.gradient()?;
        let mut lam_u = u.scale(Complex64::new(d as f64 / 2.0, 0.0));
        for (axis, g) in grads.iter().enumerate() {
            let weighted = {
                let mut w = g.clone();
                for (idx, z) in w.values_mut().iter_mut().enumerate() {
                    *z *= grid.point(idx)[axis] - params.alpha[axis];
                }
                w
            };
            lam_u = lam_u.add(&weighted)?;
        }
        let rho = modulated_field(params, grid, &|r| gs.rho(r));
        total = total.add(&u)?;
        bubbles.push(u);
        all_grads.push(grads);
        lambda_u.push(lam_u);
        varrho.push(rho);
    }
    Ok(ModulatedProfiles {
        bubbles,
        grads: all_grads,
        lambda_u,
        varrho,
        total,
    })
}

/// A time-indexed field source for the transform pair.
pub trait TrajectorySampler {
    fn time_range(&self) -> (f64, f64);
    fn sample(&self, t: f64) -> Result<ComplexField>;
}

/// Closure-backed sampler for analytic trajectories.
pub struct AnalyticSampler<F: Fn(f64) -> Result<ComplexField>> {
    range: (f64, f64),
    f: F,
}

impl<F: Fn(f64) -> Result<ComplexField>> AnalyticSampler<F> {
    pub fn new(range: (f64, f64), f: F) -> Self {
        AnalyticSampler { range, f }
    }
}

impl<F: Fn(f64) -> Result<ComplexField>> TrajectorySampler for AnalyticSampler<F> {
    fn time_range(&self) -> (f64, f64) {
        self.range
    }

    fn sample(&self, t: f64) -> Result<ComplexField> {
        if t < self.range.0 - 1e-12 || t > self.range.1 + 1e-12 {
            return Err(Error::TimeOutOfDomain {
                t,
                lo: self.range.0,
                hi: self.range.1,
            });
        }
        (self.f)(t)
    }
}

/// Stored snapshots with linear interpolation in time.
pub struct RecordSampler {
    times: Vec<f64>,
    fields: Vec<ComplexField>,
}

impl RecordSampler {
    pub fn new(mut pairs: Vec<(f64, ComplexField)>) -> Result<Self> {
        assert!(!pairs.is_empty(), "sampler needs at least one snapshot");
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
        let (times, fields) = pairs.into_iter().unzip();
        Ok(RecordSampler { times, fields })
    }
}

impl TrajectorySampler for RecordSampler {
    fn time_range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn sample(&self, t: f64) -> Result<ComplexField> {
        let (lo, hi) = self.time_range();
        if t < lo - 1e-12 || t > hi + 1e-12 {
            return Err(Error::TimeOutOfDomain { t, lo, hi });
        }
        let i = match self
            .times
            .binary_search_by(|v| v.partial_cmp(&t).expect("finite times"))
        {
            Ok(i) => return Ok(self.fields[i].clone()),
            Err(i) => i.clamp(1, self.times.len() - 1),
        };
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        self.fields[i - 1]
            .scale(Complex64::new(1.0 - w, 0.0))
            .add(&self.fields[i].scale(Complex64::new(w, 0.0)))
    }
}

/// Shared body of the transform pair:
/// `out(x) = s^{-d/2} inner(x/s) e^{i sign |x|^2 / (4 s)}`.
fn scaled_eval(
    inner: &ComplexField,
    out_grid: &Arc<Grid>,
    s: f64,
    sign: f64,
) -> Result<ComplexField> {
    let d = out_grid.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|_| out_grid.coords().iter().map(|x| x / s).collect())
        .collect();
    let sampled = inner.fourier_eval_tensor(&axes)?;
    let amp = s.abs().powf(-(d as f64) / 2.0);
    let mut values = Vec::with_capacity(out_grid.len());
    for (idx, v) in sampled.into_iter().enumerate() {
        let p = out_grid.point(idx);
        let r2: f64 = p[..d].iter().map(|x| x * x).sum();
        values.push(v * Complex64::from_polar(amp, sign * r2 / (4.0 * s)));
    }
    ComplexField::from_values(out_grid, values)
}

/// Pseudo-conformal transform
/// `C_T(u)(t, x) = (T-t)^{-d/2} u(1/(T-t), x/(T-t)) e^{-i|x|^2/(4(T-t))}`.
///
/// Points `x/(T-t)` outside the sampler's box evaluate the periodic
/// extension; compare only on the overlap region.
pub fn pseudoconformal_transform(
    u: &dyn TrajectorySampler,
    out_grid: &Arc<Grid>,
    big_t: f64,
    t: f64,
) -> Result<ComplexField> {
    let s = big_t - t;
    assert!(s != 0.0, "transform undefined at t = T");
    let inner = u.sample(1.0 / s)?;
    scaled_eval(&inner, out_grid, s, -1.0)
}

/// Inverse transform
/// `C_T^{-1}(z)(t, x) = t^{-d/2} z(T - 1/t, x/t) e^{i|x|^2/(4t)}`.
pub fn inverse_pseudoconformal_transform(
    z: &dyn TrajectorySampler,
    out_grid: &Arc<Grid>,
    big_t: f64,
    t: f64,
) -> Result<ComplexField> {
    assert!(t != 0.0, "inverse transform undefined at t = 0");
    let inner = z.sample(big_t - 1.0 / t)?;
    scaled_eval(&inner, out_grid, t, 1.0)
}
