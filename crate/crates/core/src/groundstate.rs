//! Ground state Q, the rho profile, and the linearized operators around Q.
//!
//! `d = 1` uses the closed form `Q(x) = 3^{1/4} sech^{1/2}(2x)`; `d = 2`
//! shoots on the radial ODE with bisection on `Q(0)` and repairs the far
//! tail by a backward integration seeded from the asymptotic decay (the
//! decaying branch is attracting in the backward direction, so this is
//! stable where forward shooting is not).

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{snapshot, ComplexField, Grid};
use crate::util::hermite::QuinticHermite;
use crate::util::linalg::{solve_dense, solve_tridiagonal};
use crate::util::quad::{integral_even_whole_line, simpson};
use crate::util::spline::CubicSpline;

pub const Q0_1D: f64 = 1.316_074_012_952_492_4; // 3^(1/4)

/// Which linearized operator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearized {
    /// `L+ = -Lap + 1 - (1 + 4/d) Q^{4/d}`
    Plus,
    /// `L- = -Lap + 1 - Q^{4/d}`
    Minus,
}

#[derive(Debug, Clone)]
enum QEval {
    /// d = 1 closed form, exact everywhere.
    ClosedForm,
    /// d = 2: clamped spline of log Q inside `r_fit`, asymptotic tail beyond.
    Spline {
        log_q: CubicSpline,
        /// Scale of the `r^{-1/2} e^{-r}` tail, fitted at `r_fit`.
        tail_scale: f64,
        r_fit: f64,
    },
}

/// Radial table of Q and rho with mass and weighted-norm constants.
#[derive(Debug, Clone)]
pub struct GroundStateTable {
    d: usize,
    r_max: f64,
    m: usize,
    h: f64,
    q_samples: Vec<f64>,
    rho_samples: Vec<f64>,
    q_eval: QEval,
    /// Spline of Q' from the integrated slopes (d = 2 only).
    q_prime_spline: Option<CubicSpline>,
    rho_spline: Option<CubicSpline>,
    q0: f64,
    mass_q: f64,
    y_q2: f64,
}

/// JSON sidecar persisted next to the binary table.
#[derive(Debug, Serialize, Deserialize)]
pub struct GroundStateSidecar {
    pub q0: f64,
    pub mass_q: f64,
    pub y_q2: f64,
    pub d: usize,
    pub r_max: f64,
    pub m: usize,
}

fn sech(u: f64) -> f64 {
    // 2e^{-|u|} / (1 + e^{-2|u|}), stable for large |u|
    let e = (-u.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

fn closed_form_q1(r: f64) -> f64 {
    Q0_1D * sech(2.0 * r).sqrt()
}

/// `r^{-1/2} e^{-r}` with the first Bessel-type corrections; shape of the
/// decaying solution of the d = 2 far-field equation.
fn tail_shape_2d(r: f64) -> f64 {
    (-r).exp() / r.sqrt() * (1.0 - 1.0 / (8.0 * r) + 9.0 / (128.0 * r * r))
}

fn tail_shape_2d_deriv(r: f64) -> f64 {
    let s = 1.0 - 1.0 / (8.0 * r) + 9.0 / (128.0 * r * r);
    let sp = 1.0 / (8.0 * r * r) - 9.0 / (64.0 * r * r * r);
    (-r).exp() / r.sqrt() * (sp - s * (1.0 + 0.5 / r))
}

/// Radial RHS of the shooting system `(Q, P)' = (P, rhs)`.
fn radial_rhs(d: usize, r: f64, q: f64, p: f64) -> f64 {
    let nonlinear = q - q.abs().powf(4.0 / d as f64) * q;
    if r < 1e-12 {
        nonlinear / d as f64
    } else {
        -((d - 1) as f64) * p / r + nonlinear
    }
}

fn rk4_radial_step(d: usize, r: f64, q: &mut f64, p: &mut f64, h: f64) {
    let k1q = *p;
    let k1p = radial_rhs(d, r, *q, *p);
    let k2q = *p + 0.5 * h * k1p;
    let k2p = radial_rhs(d, r + 0.5 * h, *q + 0.5 * h * k1q, *p + 0.5 * h * k1p);
    let k3q = *p + 0.5 * h * k2p;
    let k3p = radial_rhs(d, r + 0.5 * h, *q + 0.5 * h * k2q, *p + 0.5 * h * k2p);
    let k4q = *p + h * k3p;
    let k4p = radial_rhs(d, r + h, *q + h * k3q, *p + h * k3p);
    *q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    *p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
}

/// Even Taylor coefficients `(c2, c4, c6, c8)` of the d = 2 profile at the
/// origin, from matching `Lap Q = Q - Q^3` term by term.
fn origin_series_2d(a: f64) -> (f64, f64, f64, f64) {
    let a2 = a * a;
    let c2 = (a - a * a2) / 4.0;
    let c4 = c2 * (1.0 - 3.0 * a2) / 16.0;
    let c6 = (c4 * (1.0 - 3.0 * a2) - 3.0 * a * c2 * c2) / 36.0;
    let c8 = (c6 * (1.0 - 3.0 * a2) - 6.0 * a * c2 * c4 - c2 * c2 * c2) / 64.0;
    (c2, c4, c6, c8)
}

/// Forward-integrate from the origin; returns samples and whether Q stayed
/// positive all the way to `r_max`. The first nodes come from the Taylor
/// series (avoiding the apparent 1/r singularity in the RK4 stages) and the
/// segment below r = 0.5 is integrated with quarter steps.
fn shoot(d: usize, a: f64, h: f64, m: usize) -> (Vec<f64>, Vec<f64>, bool) {
    debug_assert_eq!(d, 2, "shooting path is the d = 2 route");
    let (c2, c4, c6, c8) = origin_series_2d(a);
    let series = |r: f64| a + c2 * r * r + c4 * r.powi(4) + c6 * r.powi(6) + c8 * r.powi(8);
    let series_d = |r: f64| {
        2.0 * c2 * r + 4.0 * c4 * r.powi(3) + 6.0 * c6 * r.powi(5) + 8.0 * c8 * r.powi(7)
    };
    let n_series = ((0.035 / h).ceil() as usize).clamp(4, m / 2);
    let mut samples = Vec::with_capacity(m);
    let mut slopes = Vec::with_capacity(m);
    for i in 0..=n_series {
        samples.push(series(i as f64 * h));
        slopes.push(series_d(i as f64 * h));
    }
    let mut q = samples[n_series];
    let mut p = slopes[n_series];
    let mut positive = true;
    for i in n_series..m - 1 {
        let r = i as f64 * h;
        for sub in 0..4 {
            rk4_radial_step(d, r + sub as f64 * h / 4.0, &mut q, &mut p, h / 4.0);
        }
        samples.push(q);
        slopes.push(p);
        if q < 0.0 {
            positive = false;
            break;
        }
        if q > 2.0 * a {
            // runaway growth; clearly the undershooting branch
            break;
        }
    }
    (samples, slopes, positive)
}

fn solve_townes(r_max: f64, m: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let h = r_max / (m - 1) as f64;
    let (mut lo, mut hi) = (2.0, 2.5);
    let (_, _, lo_pos) = shoot(2, lo, h, m);
    let (_, _, hi_pos) = shoot(2, hi, h, m);
    if !(lo_pos && !hi_pos) {
        return Err(Error::ShootingBracket { lo, hi });
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let (_, _, pos) = shoot(2, mid, h, m);
        if pos {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    let (mut samples, mut slopes, _) = shoot(2, a, h, m);
    samples.resize(m, 0.0);
    slopes.resize(m, 0.0);

    // Repair the tail: forward samples are trustworthy until Q drops to
    // `q_switch`; beyond that the growing mode dominates. Integrate the
    // full ODE backward from r_max (stable direction) and match the scale.
    let q_switch = 1e-5;
    let mut i_t = samples
        .iter()
        .position(|&q| q < q_switch)
        .unwrap_or(m - 1);
    i_t = i_t.max(8).min(m - 8);
    let r_end = r_max;
    let mut q = tail_shape_2d(r_end);
    let mut p = tail_shape_2d_deriv(r_end);
    let mut tail = vec![0.0; m];
    let mut tail_slope = vec![0.0; m];
    tail[m - 1] = q;
    tail_slope[m - 1] = p;
    for i in (i_t..m - 1).rev() {
        let r = (i + 1) as f64 * h;
        for sub in 0..4 {
            rk4_radial_step(2, r - sub as f64 * h / 4.0, &mut q, &mut p, -h / 4.0);
        }
        tail[i] = q;
        tail_slope[i] = p;
    }
    let scale = samples[i_t] / tail[i_t];
    for i in i_t..m {
        samples[i] = scale * tail[i];
        slopes[i] = scale * tail_slope[i];
    }
    Ok((samples, slopes, a))
}

impl GroundStateTable {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn sample_count(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn q_samples(&self) -> &[f64] {
        &self.q_samples
    }

    pub fn rho_samples(&self) -> &[f64] {
        &self.rho_samples
    }

    pub fn has_rho(&self) -> bool {
        !self.rho_samples.is_empty()
    }

    /// `Q(0)`.
    pub fn q0(&self) -> f64 {
        self.q0
    }

    /// `||Q||_{L2}^2`.
    pub fn mass_q(&self) -> f64 {
        self.mass_q
    }

    /// `||y Q||_{L2}^2`.
    pub fn y_q2(&self) -> f64 {
        self.y_q2
    }

    /// Radial evaluation of Q at any `r >= 0`.
    pub fn q(&self, r: f64) -> f64 {
        let r = r.abs();
        match &self.q_eval {
            QEval::ClosedForm => closed_form_q1(r),
            QEval::Spline {
                log_q,
                tail_scale,
                r_fit,
            } => {
                if r <= *r_fit {
                    log_q.value(r).exp()
                } else {
                    tail_scale * tail_shape_2d(r)
                }
            }
        }
    }

    /// `Q^{4/d}(r)`.
    pub fn q_power(&self, r: f64) -> f64 {
        match &self.q_eval {
            // exact: Q^4 = 3 sech^2(2r)
            QEval::ClosedForm => {
                let s = sech(2.0 * r.abs());
                3.0 * s * s
            }
            _ => {
                let q = self.q(r);
                if self.d == 2 {
                    q * q
                } else {
                    q * q * q * q
                }
            }
        }
    }

    /// Radial derivative `Q'(r)`, exact in d = 1, from the integrated
    /// slopes in d = 2.
    pub fn q_prime(&self, r: f64) -> f64 {
        let r = r.abs();
        match &self.q_eval {
            QEval::ClosedForm => {
                // Q' = -Q tanh(2r)
                -closed_form_q1(r) * (2.0 * r).tanh()
            }
            QEval::Spline {
                tail_scale, r_fit, ..
            } => {
                if r <= *r_fit {
                    self.q_prime_spline
                        .as_ref()
                        .expect("slope spline present for d = 2")
                        .value(r)
                } else {
                    tail_scale * tail_shape_2d_deriv(r)
                }
            }
        }
    }

    /// Radial evaluation of rho; zero beyond the table (rho decays fast).
    pub fn rho(&self, r: f64) -> f64 {
        let r = r.abs();
        match &self.rho_spline {
            Some(s) => {
                if r < self.r_max {
                    s.value(r)
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }

    /// Sample Q as a Cartesian field centered at the origin.
    pub fn q_field(&self, grid: &Arc<Grid>) -> ComplexField {
        ComplexField::from_fn(grid, |p| {
            let r = radius(p);
            Complex64::new(self.q(r), 0.0)
        })
    }

    /// Sample rho as a Cartesian field centered at the origin.
    pub fn rho_field(&self, grid: &Arc<Grid>) -> ComplexField {
        ComplexField::from_fn(grid, |p| {
            let r = radius(p);
            Complex64::new(self.rho(r), 0.0)
        })
    }

    /// Max-norm residual of the ground-state ODE over the radial grid,
    /// evaluated with 6th-order differences. The stencil stride targets a
    /// step near 0.008 so truncation and 1/h^2 roundoff stay balanced; near
    /// the origin the stride drops to 1 (the 1/r advection term divides the
    /// stencil error by r). The right end is extended by the evaluator.
    pub fn q_residual(&self) -> f64 {
        self.q_residual_detail().0
    }

    /// Residual and the radius where it peaks.
    pub fn q_residual_detail(&self) -> (f64, f64) {
        let m = self.m;
        let h = self.h;
        let wide: isize = ((0.008 / h).round() as isize).max(1);
        let ext = |i: isize| -> f64 {
            if i < 0 {
                self.q_samples[(-i) as usize]
            } else if (i as usize) < m {
                self.q_samples[i as usize]
            } else {
                self.q(i as f64 * h)
            }
        };
        let d2c = [1.0 / 90.0, -3.0 / 20.0, 1.5, -49.0 / 18.0, 1.5, -3.0 / 20.0, 1.0 / 90.0];
        let d1c = [-1.0 / 60.0, 3.0 / 20.0, -0.75, 0.0, 0.75, -3.0 / 20.0, 1.0 / 60.0];
        let mut worst: f64 = 0.0;
        let mut worst_r = 0.0;
        for i in 0..m {
            let ii = i as isize;
            let stride = if self.d > 1 && ii < 8 * wide {
                wide.min(4).max(2)
            } else {
                wide
            };
            let hs = h * stride as f64;
            let mut d2 = 0.0;
            let mut d1 = 0.0;
            for (j, (&c2, &c1)) in d2c.iter().zip(d1c.iter()).enumerate() {
                let v = ext(ii + (j as isize - 3) * stride);
                d2 += c2 * v;
                d1 += c1 * v;
            }
            d2 /= hs * hs;
            d1 /= hs;
            let q = self.q_samples[i];
            let nl = q.abs().powf(4.0 / self.d as f64) * q;
            let lap = if i == 0 {
                self.d as f64 * d2
            } else {
                d2 + (self.d - 1) as f64 * d1 / (i as f64 * h)
            };
            let r = (lap - q + nl).abs();
            if r > worst {
                worst = r;
                worst_r = i as f64 * h;
            }
        }
        (worst, worst_r)
    }
}

fn radius(p: &[f64]) -> f64 {
    if p.len() == 1 {
        p[0].abs()
    } else {
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }
}

/// Default table domains: large enough that both Q and rho are at their
/// decay floors before the working boxes' corners.
pub fn default_table(d: usize) -> Result<GroundStateTable> {
    match d {
        1 => solve_rho(&solve_ground_state(1, 34.0, 27200)?),
        2 => solve_rho(&solve_ground_state(2, 34.0, 24480)?),
        _ => Err(Error::UnsupportedDimension(d)),
    }
}

/// Grid wide enough for identity/coercivity checks on the table itself
/// (profile tails below 1e-10 at the seam).
pub fn identity_grid(d: usize) -> Result<Arc<Grid>> {
    match d {
        1 => Grid::new(1, 30.0, 4096),
        2 => Grid::new(2, 26.0, 512),
        _ => Err(Error::UnsupportedDimension(d)),
    }
}

/// Solve the ground-state profile and its quadrature constants.
pub fn solve_ground_state(d: usize, r_max: f64, m: usize) -> Result<GroundStateTable> {
    if d != 1 && d != 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    assert!(r_max >= 15.0, "radial cutoff below 15");
    assert!(m >= 4000, "radial sample count below 4000");
    let h = r_max / (m - 1) as f64;
    let (q_samples, q_slopes, q0) = match d {
        1 => {
            let samples: Vec<f64> = (0..m).map(|i| closed_form_q1(i as f64 * h)).collect();
            (samples, Vec::new(), Q0_1D)
        }
        _ => {
            let (samples, slopes, a) = solve_townes(r_max, m)?;
            (samples, slopes, a)
        }
    };

    // Quadrature constants.
    let q2: Vec<f64> = q_samples.iter().map(|q| q * q).collect();
    let (mass_q, y_q2) = match d {
        1 => {
            let yq: Vec<f64> = q2
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let r = i as f64 * h;
                    r * r * v
                })
                .collect();
            (
                integral_even_whole_line(&q2, h),
                integral_even_whole_line(&yq, h),
            )
        }
        _ => {
            let rq: Vec<f64> = q2
                .iter()
                .enumerate()
                .map(|(i, v)| i as f64 * h * v)
                .collect();
            let r3q: Vec<f64> = q2
                .iter()
                .enumerate()
                .map(|(i, v)| (i as f64 * h).powi(3) * v)
                .collect();
            let tau = std::f64::consts::TAU;
            (tau * simpson(&rq, h), tau * simpson(&r3q, h))
        }
    };

    let q_eval = match d {
        1 => QEval::ClosedForm,
        _ => {
            // spline log Q inside the fit radius, asymptotic tail beyond
            let r_fit = r_max - 2.0;
            let n_fit = ((r_fit / h).floor() as usize).min(m - 1);
            let logs: Vec<f64> = q_samples[..=n_fit].iter().map(|q| q.ln()).collect();
            let right_slope = tail_shape_2d_deriv(n_fit as f64 * h) / tail_shape_2d(n_fit as f64 * h);
            let log_q = CubicSpline::clamped(0.0, h, logs, 0.0, right_slope)?;
            let r_fit = n_fit as f64 * h;
            let tail_scale = q_samples[n_fit] / tail_shape_2d(r_fit);
            QEval::Spline {
                log_q,
                tail_scale,
                r_fit,
            }
        }
    };

    let q_prime_spline = if d == 2 {
        Some(CubicSpline::clamped(
            0.0,
            h,
            q_slopes.clone(),
            // Q''(0) = (Q - Q^3)/d at the origin
            (q0 - q0 * q0 * q0) / 2.0,
            end_curv_at(&q_samples, &q_slopes, r_max),
        )?)
    } else {
        None
    };
    let table = GroundStateTable {
        d,
        r_max,
        m,
        h,
        q_samples,
        rho_samples: Vec::new(),
        q_eval,
        q_prime_spline,
        rho_spline: None,
        q0,
        mass_q,
        y_q2,
    };

    // Construction invariants.
    if table.q_samples.iter().any(|&q| q <= 0.0) {
        return Err(Error::ResidualTooLarge {
            what: "ground state positivity",
            value: 1.0,
            tol: 0.0,
        });
    }
    let end = *table.q_samples.last().unwrap();
    if end >= 1e-9 {
        return Err(Error::ResidualTooLarge {
            what: "ground state tail Q(r_max)",
            value: end,
            tol: 1e-9,
        });
    }
    let (residual, worst_r) = table.q_residual_detail();
    if residual >= 1e-9 {
        eprintln!("ground-state residual {residual:.3e} peaks at r = {worst_r:.4}");
        return Err(Error::ResidualTooLarge {
            what: "ground state equation residual",
            value: residual,
            tol: 1e-9,
        });
    }
    Ok(table)
}

/// Q'' at the outer edge from the ODE itself.
fn end_curv_at(q_samples: &[f64], q_slopes: &[f64], r_max: f64) -> f64 {
    let q = *q_samples.last().unwrap();
    let p = *q_slopes.last().unwrap();
    -p / r_max + q - q * q * q
}

/// Finite-difference solve of `L+ rho = -r^2 Q` on the radial grid at
/// spacing `h` over `n` nodes; Dirichlet at the outer edge, symmetric at 0.
fn rho_fd_solve(gs: &GroundStateTable, n: usize, h: f64) -> Result<Vec<f64>> {
    let d = gs.d as f64;
    let c = 1.0 + 4.0 / d;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let r = i as f64 * h;
        let v = 1.0 - c * gs.q_power(r);
        if i == 0 {
            // radial Laplacian limit d * rho''(0) with rho'(0) = 0
            diag[0] = 2.0 * d / (h * h) + v;
            upper[0] = -2.0 * d / (h * h);
            rhs[0] = 0.0;
        } else if i == n - 1 {
            lower[i] = 0.0;
            diag[i] = 1.0;
            rhs[i] = 0.0;
        } else {
            let inv_h2 = 1.0 / (h * h);
            let adv = (d - 1.0) / (2.0 * h * r);
            lower[i] = -inv_h2 + adv;
            diag[i] = 2.0 * inv_h2 + v;
            upper[i] = -inv_h2 - adv;
            rhs[i] = -r * r * gs.q(r);
        }
    }
    let x = solve_tridiagonal(&lower, &diag, &upper, &rhs, "rho radial solve")?;
    // linear-solve residual, scaled by the system size (rows carry 1/h^2)
    let mut res: f64 = 0.0;
    let mut row_norm: f64 = 0.0;
    let mut x_norm: f64 = 0.0;
    for i in 0..n {
        let mut acc = diag[i] * x[i] - rhs[i];
        if i > 0 {
            acc += lower[i] * x[i - 1];
        }
        if i < n - 1 {
            acc += upper[i] * x[i + 1];
        }
        res = res.max(acc.abs());
        row_norm = row_norm.max(lower[i].abs() + diag[i].abs() + upper[i].abs());
        x_norm = x_norm.max(x[i].abs());
    }
    let scaled = res / (row_norm * x_norm).max(1e-300);
    if scaled >= 1e-8 {
        return Err(Error::ResidualTooLarge {
            what: "rho linear-solve residual",
            value: scaled,
            tol: 1e-8,
        });
    }
    Ok(x)
}

/// Solve the rho-profile equation and return the completed table.
///
/// Second-order solves at `h/2` and `h/4` are Richardson-combined on the
/// internally refined grid; the interpolating spline lives there while the
/// published samples sit on the table's own radial grid.
pub fn solve_rho(gs: &GroundStateTable) -> Result<GroundStateTable> {
    let m = gs.m;
    let h = gs.h;
    let m2 = 2 * m - 1;
    let coarse = rho_fd_solve(gs, m2, 0.5 * h)?;
    let fine = rho_fd_solve(gs, 2 * m2 - 1, 0.25 * h)?;
    let mut refined = Vec::with_capacity(m2);
    for i in 0..m2 {
        refined.push((4.0 * fine[2 * i] - coarse[i]) / 3.0);
    }
    let samples: Vec<f64> = (0..m).map(|i| refined[2 * i]).collect();
    if samples[m - 1].abs() >= 1e-6 {
        return Err(Error::ResidualTooLarge {
            what: "rho tail decay",
            value: samples[m - 1].abs(),
            tol: 1e-6,
        });
    }
    let end_slope = (refined[m2 - 1] - refined[m2 - 2]) / (0.5 * h);
    let rho_spline = CubicSpline::clamped(0.0, 0.5 * h, refined, 0.0, end_slope)?;
    let mut out = gs.clone();
    out.rho_samples = samples;
    out.rho_spline = Some(rho_spline);
    Ok(out)
}

/// Apply `L+` or `L-` on the radial grid with 4th-order differences
/// (symmetric extension at the origin). The last two nodes reuse the
/// outermost centered stencil; values there are at the decay floor.
pub fn apply_linearized_radial(which: Linearized, gs: &GroundStateTable, f: &[f64]) -> Vec<f64> {
    let m = f.len();
    let h = gs.r_max / (m - 1) as f64;
    let d = gs.d as f64;
    let c = match which {
        Linearized::Plus => 1.0 + 4.0 / d,
        Linearized::Minus => 1.0,
    };
    let ext = |i: isize| -> f64 {
        if i < 0 {
            f[(-i) as usize]
        } else if (i as usize) < m {
            f[i as usize]
        } else {
            0.0
        }
    };
    let d2c = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
    let d1c = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let ii = i as isize;
        let mut d2 = 0.0;
        let mut d1 = 0.0;
        for j in 0..5 {
            let v = ext(ii + j as isize - 2);
            d2 += d2c[j] * v;
            d1 += d1c[j] * v;
        }
        d2 /= h * h;
        d1 /= h;
        let r = i as f64 * h;
        let lap = if i == 0 { d * d2 } else { d2 + (d - 1.0) * d1 / r };
        out.push(-lap + f[i] - c * gs.q_power(r) * f[i]);
    }
    out
}

/// Apply `L+` or `L-` to a Cartesian field (spectral Laplacian, radially
/// interpolated potential).
pub fn apply_linearized(
    which: Linearized,
    gs: &GroundStateTable,
    f: &ComplexField,
) -> Result<ComplexField> {
    let lap = f.laplacian()?;
    let grid = f.grid().clone();
    let c = match which {
        Linearized::Plus => 1.0 + 4.0 / gs.d as f64,
        Linearized::Minus => 1.0,
    };
    let mut values = Vec::with_capacity(grid.len());
    for (idx, (z, l)) in f.values().iter().zip(lap.values()).enumerate() {
        let p = grid.point(idx);
        let pot = c * gs.q_power(radius(&p[..grid.dim()]));
        values.push(-l + z * (1.0 - pot));
    }
    ComplexField::from_values(&grid, values)
}

/// `Lambda f = d/2 f + x . grad f` about the origin.
pub fn lambda_field(f: &ComplexField) -> Result<ComplexField> {
    let grid = f.grid().clone();
    let grads = f.gradient()?;
    let dhalf = grid.dim() as f64 / 2.0;
    let mut values = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let p = grid.point(idx);
        let mut acc = f.values()[idx] * dhalf;
        for (axis, g) in grads.iter().enumerate() {
            acc += p[axis] * g.values()[idx];
        }
        values.push(acc);
    }
    ComplexField::from_values(&grid, values)
}

/// Residual report for the six generalized-null-space identities.
#[derive(Debug, Clone)]
pub struct KernelReport {
    /// `[L+ grad Q, L+ Lambda Q + 2Q, L+ rho + |x|^2 Q, L- Q, L- xQ + 2 grad Q, L- |x|^2 Q + 4 Lambda Q]`
    pub residuals: [f64; 6],
    pub tol: f64,
}

impl KernelReport {
    pub fn pass(&self) -> bool {
        self.residuals.iter().all(|&r| r < self.tol)
    }
}

/// Gradient of Q as analytic radial samples, `grad Q = Q'(r) x / r`.
pub fn q_gradient_fields(gs: &GroundStateTable, grid: &Arc<Grid>) -> Vec<ComplexField> {
    let d = grid.dim();
    (0..d)
        .map(|axis| {
            ComplexField::from_fn(grid, |p| {
                let r = radius(p);
                if r < 1e-14 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(gs.q_prime(r) * p[axis] / r, 0.0)
                }
            })
        })
        .collect()
}

/// `Lambda Q = d/2 Q + r Q'(r)` as analytic radial samples.
pub fn lambda_q_field(gs: &GroundStateTable, grid: &Arc<Grid>) -> ComplexField {
    let dhalf = grid.dim() as f64 / 2.0;
    ComplexField::from_fn(grid, |p| {
        let r = radius(p);
        Complex64::new(dhalf * gs.q(r) + r * gs.q_prime(r), 0.0)
    })
}

/// Check all six kernel identities on a Cartesian grid.
///
/// The test fields are built from the radial evaluators (values and
/// slopes), so the only spectral differentiation is the Laplacian inside
/// the operator itself.
pub fn check_kernel_identities(gs: &GroundStateTable, grid: &Arc<Grid>) -> Result<KernelReport> {
    let d = grid.dim();
    let q = gs.q_field(grid);
    let rho = gs.rho_field(grid);
    let grads = q_gradient_fields(gs, grid);
    let lam = lambda_q_field(gs, grid);

    let weight = |f: &ComplexField, w: &dyn Fn(&[f64]) -> f64| -> ComplexField {
        let mut g = f.clone();
        for (idx, z) in g.values_mut().iter_mut().enumerate() {
            let p = grid.point(idx);
            *z *= w(&p[..d]);
        }
        g
    };
    let r2 = |p: &[f64]| -> f64 { p.iter().map(|x| x * x).sum() };

    // L+ grad Q = 0
    let mut r1: f64 = 0.0;
    for g in &grads {
        r1 = r1.max(apply_linearized(Linearized::Plus, gs, g)?.max_abs());
    }
    // L+ Lambda Q = -2 Q
    let r2v = apply_linearized(Linearized::Plus, gs, &lam)?
        .axpy(Complex64::new(2.0, 0.0), &q)?
        .max_abs();
    // L+ rho = -|x|^2 Q
    let x2q = weight(&q, &r2);
    let r3 = apply_linearized(Linearized::Plus, gs, &rho)?
        .add(&x2q)?
        .max_abs();
    // L- Q = 0
    let r4 = apply_linearized(Linearized::Minus, gs, &q)?.max_abs();
    // L- (x Q) = -2 grad Q
    let mut r5: f64 = 0.0;
    for (axis, g) in grads.iter().enumerate() {
        let xq = weight(&q, &|p: &[f64]| p[axis]);
        r5 = r5.max(
            apply_linearized(Linearized::Minus, gs, &xq)?
                .axpy(Complex64::new(2.0, 0.0), g)?
                .max_abs(),
        );
    }
    // L- (|x|^2 Q) = -4 Lambda Q
    let r6 = apply_linearized(Linearized::Minus, gs, &x2q)?
        .axpy(Complex64::new(4.0, 0.0), &lam)?
        .max_abs();

    let tol = if gs.d == 1 { 1e-6 } else { 1e-5 };
    Ok(KernelReport {
        residuals: [r1, r2v, r3, r4, r5, r6],
        tol,
    })
}

/// Exponential plateau cutoff `phi(x/A)`: 1 inside `A`, `e^{-|x|/A}` beyond
/// `2A`, C2 quintic blend between.
pub fn plateau_cutoff(r_over_a: f64) -> f64 {
    let u = r_over_a;
    if u <= 1.0 {
        1.0
    } else if u >= 2.0 {
        (-u).exp()
    } else {
        let blend = QuinticHermite::new(
            1.0,
            2.0,
            (1.0, 0.0, 0.0),
            ((-2.0f64).exp(), -(-2.0f64).exp(), (-2.0f64).exp()),
        );
        blend.value(u)
    }
}

/// One draw of the localized-coercivity ratio with the unstable directions
/// projected out.
pub fn coercivity_sample(
    gs: &GroundStateTable,
    grid: &Arc<Grid>,
    a: f64,
    seed: u64,
) -> Result<f64> {
    assert!(a >= 10.0, "cutoff scale below 10");
    let f = random_band_limited(grid, seed);
    let f = project_out_unstable(gs, grid, &f)?;
    coercivity_ratio(gs, grid, a, &f)
}

/// The quadratic-form ratio of the localized coercivity inequality.
pub fn coercivity_ratio(
    gs: &GroundStateTable,
    grid: &Arc<Grid>,
    a: f64,
    f: &ComplexField,
) -> Result<f64> {
    let d = grid.dim();
    let grads = f.gradient()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for idx in 0..grid.len() {
        let p = grid.point(idx);
        let r = radius(&p[..d]);
        let phi = plateau_cutoff(r / a);
        let z = f.values()[idx];
        let mut grad2 = 0.0;
        for g in &grads {
            grad2 += g.values()[idx].norm_sqr();
        }
        let qp = gs.q_power(r);
        num += (z.norm_sqr() + grad2) * phi
            - (1.0 + 4.0 / gs.d as f64) * qp * z.re * z.re
            - qp * z.im * z.im;
        den += (grad2 + z.norm_sqr()) * phi;
    }
    let vol = grid.cell_volume();
    num *= vol;
    den *= vol;
    if den.abs() < 1e-14 {
        return Err(Error::DegenerateRatio(den));
    }
    Ok(num / den)
}

/// Smooth random field with modes limited to `|k| <= 4`.
pub fn random_band_limited(grid: &Arc<Grid>, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.points_per_axis();
    let d = grid.dim();
    let k_cut = 4.0;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (idx, c) in coeffs.iter_mut().enumerate() {
        let (k0, k1) = if d == 1 {
            (grid.wavenumber(idx), 0.0)
        } else {
            (grid.wavenumber(idx / n), grid.wavenumber(idx % n))
        };
        if (k0 * k0 + k1 * k1).sqrt() <= k_cut {
            *c = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
    }
    ComplexField::from_spectral(grid, coeffs).expect("band-limited synthesis")
}

/// Remove the six unstable components so that `Scal(f) = 0`: the real part
/// is orthogonalized against `{Q, xQ, |x|^2 Q}`, the imaginary part against
/// `{grad Q, Lambda Q, rho}`.
pub fn project_out_unstable(
    gs: &GroundStateTable,
    grid: &Arc<Grid>,
    f: &ComplexField,
) -> Result<ComplexField> {
    let dirs_re = real_directions(gs, grid)?;
    let dirs_im = imag_directions(gs, grid)?;
    let real = |g: &ComplexField| g.map(|z| Complex64::new(z.re, 0.0));
    let imag = |g: &ComplexField| g.map(|z| Complex64::new(z.im, 0.0));

    let project = |part: ComplexField, dirs: &[ComplexField]| -> Result<ComplexField> {
        let n = dirs.len();
        let mut gram = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = dirs[i].inner_product(&dirs[j])?.re;
            }
            rhs[i] = part.inner_product(&dirs[i])?.re;
        }
        let coef = solve_dense(gram, rhs, "unstable-direction Gram")?;
        let mut out = part;
        for (c, dir) in coef.iter().zip(dirs) {
            out = out.axpy(Complex64::new(-c, 0.0), dir)?;
        }
        Ok(out)
    };

    let f1 = project(real(f), &dirs_re)?;
    let f2 = project(imag(f), &dirs_im)?;
    f1.axpy(Complex64::new(0.0, 1.0), &f2)
}

/// `{Q, x_j Q, |x|^2 Q}` sampled on the grid.
pub fn real_directions(gs: &GroundStateTable, grid: &Arc<Grid>) -> Result<Vec<ComplexField>> {
    let d = grid.dim();
    let q = gs.q_field(grid);
    let mut dirs = vec![q.clone()];
    for axis in 0..d {
        let mut g = q.clone();
        for (idx, z) in g.values_mut().iter_mut().enumerate() {
            *z *= grid.point(idx)[axis];
        }
        dirs.push(g);
    }
    let mut g = q.clone();
    for (idx, z) in g.values_mut().iter_mut().enumerate() {
        let p = grid.point(idx);
        *z *= p[..d].iter().map(|x| x * x).sum::<f64>();
    }
    dirs.push(g);
    Ok(dirs)
}

/// `{grad Q, Lambda Q, rho}` sampled on the grid.
pub fn imag_directions(gs: &GroundStateTable, grid: &Arc<Grid>) -> Result<Vec<ComplexField>> {
    let mut dirs = q_gradient_fields(gs, grid);
    dirs.push(lambda_q_field(gs, grid));
    dirs.push(gs.rho_field(grid));
    Ok(dirs)
}

/// Rayleigh quotient of the lowest mode of `L+`, found by preconditioned
/// inverse iteration; negative for the ground-state linearization.
pub fn lowest_lplus_eigenvalue(gs: &GroundStateTable, grid: &Arc<Grid>) -> Result<f64> {
    let shift = 20.0;
    let mut v = random_band_limited(grid, 7);
    v = v.map(|z| Complex64::new(z.re + z.norm(), 0.0));
    let mut ray = 0.0;
    for _ in 0..40 {
        let u = cg_solve_shifted_lplus(gs, &v, shift, 200, 1e-10)?;
        let norm = u.l2_norm();
        v = u.scale(Complex64::new(1.0 / norm, 0.0));
        let lv = apply_linearized(Linearized::Plus, gs, &v)?;
        ray = v.inner_product(&lv)?.re / v.l2_norm_sq();
    }
    Ok(ray)
}

/// Conjugate gradients on `(L+ + shift) u = b` with the Fourier-diagonal
/// preconditioner `(-Lap + 1 + shift)^{-1}`.
fn cg_solve_shifted_lplus(
    gs: &GroundStateTable,
    b: &ComplexField,
    shift: f64,
    max_iter: usize,
    tol: f64,
) -> Result<ComplexField> {
    let grid = b.grid().clone();
    let apply = |u: &ComplexField| -> Result<ComplexField> {
        let lu = apply_linearized(Linearized::Plus, gs, u)?;
        lu.axpy(Complex64::new(shift, 0.0), u)
    };
    let precond = |r: &ComplexField| -> ComplexField {
        let n = grid.points_per_axis();
        let mut coeffs = r.spectral();
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k2 = if grid.dim() == 1 {
                let k = grid.wavenumber(idx);
                k * k
            } else {
                let k0 = grid.wavenumber(idx / n);
                let k1 = grid.wavenumber(idx % n);
                k0 * k0 + k1 * k1
            };
            *c /= k2 + 1.0 + shift;
        }
        ComplexField::from_spectral(&grid, coeffs).expect("preconditioner synthesis")
    };

    let mut x = ComplexField::zeros(&grid);
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.inner_product(&z)?.re;
    let b_norm = b.l2_norm().max(1e-300);
    for _ in 0..max_iter {
        let ap = apply(&p)?;
        let alpha = rz / p.inner_product(&ap)?.re;
        x = x.axpy(Complex64::new(alpha, 0.0), &p)?;
        r = r.axpy(Complex64::new(-alpha, 0.0), &ap)?;
        if r.l2_norm() / b_norm < tol {
            break;
        }
        z = precond(&r);
        let rz_new = r.inner_product(&z)?.re;
        let beta = rz_new / rz;
        rz = rz_new;
        p = z.axpy(Complex64::new(beta, 0.0), &p)?;
    }
    Ok(x)
}

/// Persist table + sidecar: `<prefix>.nlsf` holds (Q, rho) interleaved as
/// (re, im); `<prefix>.json` carries the constants.
pub fn save_table(gs: &GroundStateTable, prefix: &Path) -> Result<()> {
    let values: Vec<Complex64> = (0..gs.m)
        .map(|i| {
            Complex64::new(
                gs.q_samples[i],
                if gs.has_rho() { gs.rho_samples[i] } else { 0.0 },
            )
        })
        .collect();
    snapshot::write_record(
        &prefix.with_extension("nlsf"),
        &snapshot::SnapshotRecord {
            d: 1,
            n: gs.m as u32,
            l: gs.r_max,
            t: 0.0,
            values,
        },
    )?;
    let sidecar = GroundStateSidecar {
        q0: gs.q0,
        mass_q: gs.mass_q,
        y_q2: gs.y_q2,
        d: gs.d,
        r_max: gs.r_max,
        m: gs.m,
    };
    std::fs::write(
        prefix.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn table_1d() -> GroundStateTable {
        default_table(1).unwrap()
    }

    #[test]
    fn closed_form_constants() {
        let gs = solve_ground_state(1, 34.0, 27200).unwrap();
        assert_relative_eq!(gs.q0(), 3.0f64.powf(0.25), epsilon = 1e-14);
        // ||Q||^2 = sqrt(3) pi / 2
        assert_relative_eq!(gs.mass_q(), 3.0f64.sqrt() * PI / 2.0, max_relative = 1e-10);
    }

    #[test]
    fn q_residual_is_tiny_1d() {
        let gs = solve_ground_state(1, 34.0, 27200).unwrap();
        assert!(gs.q_residual() < 1e-9, "residual {}", gs.q_residual());
    }

    #[test]
    fn townes_profile() {
        let gs = solve_ground_state(2, 34.0, 24480).unwrap();
        assert!(gs.q0() > 2.205 && gs.q0() < 2.208, "Q(0) = {}", gs.q0());
        assert!(
            gs.mass_q() > 11.68 && gs.mass_q() < 11.72,
            "mass = {}",
            gs.mass_q()
        );
        // monotone decreasing, positive
        for w in gs.q_samples().windows(2) {
            assert!(w[1] < w[0] && w[1] > 0.0);
        }
    }

    #[test]
    fn townes_grid_refinement_stable() {
        let a = solve_ground_state(2, 34.0, 12240).unwrap();
        let b = solve_ground_state(2, 34.0, 24480).unwrap();
        assert_relative_eq!(a.mass_q(), b.mass_q(), max_relative = 1e-6);
        assert_relative_eq!(a.q0(), b.q0(), max_relative = 1e-6);
    }

    #[test]
    fn rho_defining_equation() {
        let gs = table_1d();
        let lrho = apply_linearized_radial(Linearized::Plus, &gs, gs.rho_samples());
        let mut err: f64 = 0.0;
        for (i, v) in lrho.iter().enumerate().take(gs.sample_count() - 4) {
            let r = i as f64 * gs.spacing();
            err = err.max((v + r * r * gs.q(r)).abs());
        }
        assert!(err < 1e-7, "L+ rho residual {err}");
    }

    #[test]
    fn rho_decays() {
        let gs = table_1d();
        assert!(gs.rho(gs.r_max() / 2.0).abs() < 1e-3);
        assert!(gs.rho_samples().last().unwrap().abs() < 1e-6);
    }

    #[test]
    fn rho_grid_refinement_reproducible() {
        let a = solve_rho(&solve_ground_state(1, 34.0, 6800).unwrap()).unwrap();
        let b = solve_rho(&solve_ground_state(1, 34.0, 13600).unwrap()).unwrap();
        let ip = |gs: &GroundStateTable| -> f64 {
            let prod: Vec<f64> = gs
                .rho_samples()
                .iter()
                .zip(gs.q_samples())
                .map(|(r, q)| r * q)
                .collect();
            integral_even_whole_line(&prod, gs.spacing())
        };
        assert_relative_eq!(ip(&a), ip(&b), max_relative = 1e-5);
    }

    #[test]
    fn kernel_identities_1d() {
        let gs = table_1d();
        let grid = identity_grid(1).unwrap();
        let rep = check_kernel_identities(&gs, &grid).unwrap();
        assert!(
            rep.pass(),
            "kernel identity residuals: {:?}",
            rep.residuals
        );
    }

    #[test]
    fn kernel_identities_detect_corruption() {
        // Corrupt the whole table (samples and evaluator) by 1%.
        let gs = table_1d();
        let scaled: Vec<f64> = gs.q_samples().iter().map(|q| 1.01 * q).collect();
        let logs: Vec<f64> = scaled.iter().map(|q| q.ln()).collect();
        let log_q = CubicSpline::clamped(0.0, gs.spacing(), logs, 0.0, -2.0).unwrap();
        let mut corrupt = gs.clone();
        corrupt.q_samples = scaled;
        corrupt.q_eval = QEval::Spline {
            log_q,
            tail_scale: 0.0,
            r_fit: gs.r_max(),
        };
        let grid = crate::fields::make_grid(1, 10.0, 512).unwrap();
        let q = corrupt.q_field(&grid);
        let resid = apply_linearized(Linearized::Minus, &corrupt, &q).unwrap();
        assert!(
            resid.max_abs() > 1e-3,
            "detector failed: residual {}",
            resid.max_abs()
        );
    }

    #[test]
    fn kernel_identities_2d() {
        let gs = default_table(2).unwrap();
        let grid = identity_grid(2).unwrap();
        let rep = check_kernel_identities(&gs, &grid).unwrap();
        assert!(
            rep.pass(),
            "kernel identity residuals: {:?}",
            rep.residuals
        );
    }

    #[test]
    fn coercivity_positive_after_projection() {
        let gs = table_1d();
        let grid = crate::fields::make_grid(1, 30.0, 1024).unwrap();
        // (1+i)Q: the real part is annihilated by the projection (Q is an
        // unstable direction), the imaginary part survives it.
        let q = gs.q_field(&grid).scale(Complex64::new(1.0, 1.0));
        let f = project_out_unstable(&gs, &grid, &q).unwrap();
        assert!(f.l2_norm() > 0.1);
        let ratio = coercivity_ratio(&gs, &grid, 20.0, &f).unwrap();
        assert!(ratio > 0.0, "ratio {ratio}");
    }

    #[test]
    fn coercivity_fails_without_projection() {
        let gs = table_1d();
        let grid = crate::fields::make_grid(1, 30.0, 1024).unwrap();
        let q = gs.q_field(&grid);
        let ratio = coercivity_ratio(&gs, &grid, 20.0, &q).unwrap();
        assert!(ratio <= 0.0, "unprojected Q should expose the negative direction, got {ratio}");
    }

    #[test]
    fn lplus_has_negative_direction() {
        let gs = table_1d();
        let grid = crate::fields::make_grid(1, 30.0, 512).unwrap();
        let ev = lowest_lplus_eigenvalue(&gs, &grid).unwrap();
        assert!(ev < -1e-3, "lowest L+ eigenvalue {ev}");
    }

    #[test]
    fn table_persistence_round_trip() {
        let gs = table_1d();
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("gs1");
        save_table(&gs, &prefix).unwrap();
        let rec = snapshot::read_record(&prefix.with_extension("nlsf")).unwrap();
        assert_eq!(rec.n as usize, gs.sample_count());
        assert_eq!(rec.values[0].re.to_bits(), gs.q_samples()[0].to_bits());
        let side: GroundStateSidecar =
            serde_json::from_str(&std::fs::read_to_string(prefix.with_extension("json")).unwrap())
                .unwrap();
        assert_eq!(side.mass_q.to_bits(), gs.mass_q().to_bits());
    }
}
