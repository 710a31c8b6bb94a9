//! Remainder-based functionals: the generalized energy with its Morawetz
//! correction, the eta residual of the modulated profile, and the error
//! budgets that gate the monotonicity and lower-bound checks.

use num_complex::Complex64;

use super::CutoffChi;
use crate::decomposition::{DecompositionRow, LocalizerSet, ParamDerivatives};
use crate::error::Result;
use crate::fields::ComplexField;
use crate::groundstate::GroundStateTable;
use crate::perturbation::{assemble_coefficients, PerturbationModel};
use crate::profiles::{eval_modulated, ModulatedProfiles, ModulationState};

fn f_power(d: usize) -> f64 {
    4.0 / d as f64
}

/// `f(v) = |v|^{4/d} v`.
fn f_nl(z: Complex64, d: usize) -> Complex64 {
    z * z.norm_sqr().powf(f_power(d) / 2.0)
}

/// `F(v) = d/(2d+4) |v|^{2+4/d}`.
fn f_cap(z: Complex64, d: usize) -> f64 {
    let dd = d as f64;
    dd / (2.0 * dd + 4.0) * z.norm().powf(2.0 + 4.0 / dd)
}

/// The generalized energy: remainder-quadratic terms, the nonlinear excess
/// beyond its linearization at `U + z`, and the Morawetz correction with
/// the plateau cutoff evaluated at the renormalized point.
pub fn generalized_energy(
    r: &ComplexField,
    state: &ModulationState,
    z: &ComplexField,
    v: &ComplexField,
    profiles: &ModulatedProfiles,
    loc: &LocalizerSet,
    chi: &CutoffChi,
) -> Result<f64> {
    let grid = r.grid().clone();
    let d = grid.dim();
    let vol = grid.cell_volume();
    let grads = r.gradient()?;

    let mut quad_grad = 0.0;
    for g in &grads {
        quad_grad += g.l2_norm_sq();
    }
    let mut total = 0.5 * quad_grad;

    for (params, phi) in state.bubbles.iter().zip(&loc.fields) {
        let mut acc = 0.0;
        for (rv, pv) in r.values().iter().zip(phi.values()) {
            acc += rv.norm_sqr() * pv.re;
        }
        total += 0.5 * acc * vol / (params.lambda * params.lambda);
    }

    // -Re int F(v) - F(U+z) - f(U+z) conj(R)
    let mut nonlinear = 0.0;
    for idx in 0..grid.len() {
        let vv = v.values()[idx];
        let uz = profiles.total.values()[idx] + z.values()[idx];
        let rr = r.values()[idx];
        nonlinear += f_cap(vv, d) - f_cap(uz, d) - (f_nl(uz, d) * rr.conj()).re;
    }
    total -= nonlinear * vol;

    // Morawetz: sum_k gamma_k/(2 lambda_k) Im int grad(chi_A)((x-a)/l) . grad R conj(R) Phi_k
    for (k, params) in state.bubbles.iter().enumerate() {
        let mut acc = 0.0;
        for idx in 0..grid.len() {
            let p = grid.point(idx);
            let u: Vec<f64> = (0..d)
                .map(|a| (p[a] - params.alpha[a]) / params.lambda)
                .collect();
            let w = chi.grad_chi_a(&u);
            let mut dir = Complex64::new(0.0, 0.0);
            for (axis, g) in grads.iter().enumerate() {
                dir += w[axis] * g.values()[idx];
            }
            acc += (dir * r.values()[idx].conj()).im * loc.fields[k].values()[idx].re;
        }
        total += params.gamma / (2.0 * params.lambda) * acc * vol;
    }
    Ok(total)
}

/// Norms of the eta residual and its four-way split.
#[derive(Debug, Clone)]
pub struct EtaReport {
    /// `||eta||_{L2}` assembled directly from the fitted derivatives.
    pub total: f64,
    /// Modulation part (the five parameter combinations).
    pub eta1: f64,
    /// Interaction with the regular profile.
    pub eta2: f64,
    /// Interactions between distinct bubbles.
    pub eta3: f64,
    /// Lower-order coefficient part.
    pub eta4: f64,
    /// `||eta_direct - (eta1 + eta2 + eta3 + eta4)||_{L2}` - the algebraic
    /// identity between the two assembly routes.
    pub consistency: f64,
}

/// Assemble `eta = i dU/dt + lap U + a1 . grad U + a0 U + f(U+z) - f(z)`
/// from fitted parameter derivatives, together with its split.
pub fn eta_residual(
    state: &ModulationState,
    derivs: &[ParamDerivatives],
    model: &PerturbationModel,
    gs: &GroundStateTable,
    z: &ComplexField,
    t: f64,
) -> Result<EtaReport> {
    let grid = z.grid().clone();
    let d = grid.dim();
    let profiles = eval_modulated(state, gs, &grid)?;
    let u = &profiles.total;

    // dU/dt by the chain rule:
    // dU/d lambda = -Lambda_k U_k / lambda, dU/d alpha_j = -d_j U_k,
    // dU/d beta_j = i y_j U_k, dU/d gamma = -(i/4)|y|^2 U_k, dU/d theta = i U_k
    let mut dudt = ComplexField::zeros(&grid);
    for (k, (params, dp)) in state.bubbles.iter().zip(derivs).enumerate() {
        let uk = &profiles.bubbles[k];
        let lam = params.lambda;
        let mut contrib = profiles.lambda_u[k].scale(Complex64::new(-dp.lambda_dot / lam, 0.0));
        for (axis, g) in profiles.grads[k].iter().enumerate() {
            contrib = contrib.axpy(Complex64::new(-dp.alpha_dot[axis], 0.0), g)?;
        }
        let mut pointwise = uk.clone();
        for (idx, zv) in pointwise.values_mut().iter_mut().enumerate() {
            let p = grid.point(idx);
            let mut phase = Complex64::new(0.0, dp.theta_dot);
            let mut y2 = 0.0;
            for a in 0..d {
                let y = (p[a] - params.alpha[a]) / lam;
                y2 += y * y;
                phase += Complex64::new(0.0, dp.beta_dot[a] * y);
            }
            phase += Complex64::new(0.0, -0.25 * dp.gamma_dot * y2);
            *zv *= phase;
        }
        contrib = contrib.add(&pointwise)?;
        dudt = dudt.add(&contrib)?;
    }

    let lap_u = u.laplacian()?;
    let slice = assemble_coefficients(model, &grid, t)?;
    let grads_u: Vec<ComplexField> = {
        // gradient of the total profile from the per-bubble gradients
        let mut acc: Vec<ComplexField> =
            (0..d).map(|_| ComplexField::zeros(&grid)).collect();
        for gk in &profiles.grads {
            for (axis, g) in gk.iter().enumerate() {
                acc[axis] = acc[axis].add(g)?;
            }
        }
        acc
    };

    let mut eta_direct = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let uv = u.values()[idx];
        let zv = z.values()[idx];
        let mut val = Complex64::new(0.0, 1.0) * dudt.values()[idx] + lap_u.values()[idx];
        for (axis, g) in grads_u.iter().enumerate() {
            val += slice.a1[axis].values()[idx] * g.values()[idx];
        }
        val += slice.a0.values()[idx] * uv;
        val += f_nl(uv + zv, d) - f_nl(zv, d);
        eta_direct.push(val);
    }
    let eta_direct = ComplexField::from_values(&grid, eta_direct)?;

    // eta1: the Psi_k combinations of the same derivatives
    let mut eta1 = ComplexField::zeros(&grid);
    for (params, dp) in state.bubbles.iter().zip(derivs) {
        let lam = params.lambda;
        let beta_sq: f64 = params.beta.iter().map(|x| x * x).sum();
        let c_theta = lam * lam * dp.theta_dot - 1.0 - beta_sq;
        let c_beta: Vec<f64> = dp
            .beta_dot
            .iter()
            .zip(&params.beta)
            .map(|(bd, be)| lam * lam * bd + params.gamma * be)
            .collect();
        let c_gamma = lam * lam * dp.gamma_dot + params.gamma * params.gamma;
        let c_alpha: Vec<f64> = dp
            .alpha_dot
            .iter()
            .zip(&params.beta)
            .map(|(ad, be)| lam * ad - 2.0 * be)
            .collect();
        let c_lambda = lam * dp.lambda_dot + params.gamma;
        let amp = lam.powf(-2.0 - d as f64 / 2.0);
        let mut field = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let p = grid.point(idx);
            let mut y = [0.0; 2];
            let mut y2 = 0.0;
            let mut by = 0.0;
            for a in 0..d {
                y[a] = (p[a] - params.alpha[a]) / lam;
                y2 += y[a] * y[a];
                by += params.beta[a] * y[a];
            }
            let r = y2.sqrt();
            let q = gs.q(r);
            let qp = gs.q_prime(r);
            let inner_phase = Complex64::from_polar(1.0, by - 0.25 * params.gamma * y2);
            let qk = q * inner_phase;
            // grad_y Q_k = [Q'(y) y/r + i Q (beta - gamma y / 2)] e^{i phase}
            let mut grad_qk = [Complex64::new(0.0, 0.0); 2];
            for a in 0..d {
                let radial = if r > 1e-14 { qp * y[a] / r } else { 0.0 };
                grad_qk[a] = (Complex64::new(radial, 0.0)
                    + Complex64::new(0.0, q * (params.beta[a] - 0.5 * params.gamma * y[a])))
                    * inner_phase;
            }
            let mut lam_qk = qk * (d as f64 / 2.0);
            for a in 0..d {
                lam_qk += y[a] * grad_qk[a];
            }
            let mut psi = -c_theta * qk + 0.25 * c_gamma * y2 * qk;
            for a in 0..d {
                psi -= c_beta[a] * y[a] * qk;
                psi -= Complex64::new(0.0, c_alpha[a]) * grad_qk[a];
            }
            psi -= Complex64::new(0.0, c_lambda) * lam_qk;
            field.push(Complex64::from_polar(amp, params.theta) * psi);
        }
        eta1 = eta1.add(&ComplexField::from_values(&grid, field)?)?;
    }

    // eta2 = f(U+z) - f(U) - f(z); eta3 = f(U) - sum_k f(U_k)
    let mut eta2 = Vec::with_capacity(grid.len());
    let mut eta3 = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let uv = u.values()[idx];
        let zv = z.values()[idx];
        eta2.push(f_nl(uv + zv, d) - f_nl(uv, d) - f_nl(zv, d));
        let mut sum_fk = Complex64::new(0.0, 0.0);
        for uk in &profiles.bubbles {
            sum_fk += f_nl(uk.values()[idx], d);
        }
        eta3.push(f_nl(uv, d) - sum_fk);
    }
    let eta2 = ComplexField::from_values(&grid, eta2)?;
    let eta3 = ComplexField::from_values(&grid, eta3)?;

    // eta4 = a1 . grad U + a0 U
    let mut eta4 = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let mut val = slice.a0.values()[idx] * u.values()[idx];
        for (axis, g) in grads_u.iter().enumerate() {
            val += slice.a1[axis].values()[idx] * g.values()[idx];
        }
        eta4.push(val);
    }
    let eta4 = ComplexField::from_values(&grid, eta4)?;

    let sum = eta1.add(&eta2)?.add(&eta3)?.add(&eta4)?;
    let consistency = eta_direct.sub(&sum)?.l2_norm();
    Ok(EtaReport {
        total: eta_direct.l2_norm(),
        eta1: eta1.l2_norm(),
        eta2: eta2.l2_norm(),
        eta3: eta3.l2_norm(),
        eta4: eta4.l2_norm(),
        consistency,
    })
}

/// Scenario-level constants entering the error budgets.
#[derive(Debug, Clone, Copy)]
pub struct BudgetParams {
    pub big_t: f64,
    pub alpha_star: f64,
    pub m: usize,
    pub upsilon_star: usize,
    /// Decoupling knob: frequency spread or inverse separation.
    pub eps_knob: f64,
    pub d: usize,
}

/// The monotonicity error budget evaluated from one fitted row:
/// localized-mass, modulation, smallness and interaction terms plus the
/// exponential floor.
pub fn monotonicity_budget(
    row: &DecompositionRow,
    mod_total: f64,
    lambda_dots: &[f64],
    bp: &BudgetParams,
) -> f64 {
    let s = bp.big_t - row.t;
    let d_size = row.d_size;
    let mut total = 0.0;
    for (k, params) in row.params.bubbles.iter().enumerate() {
        let lam = params.lambda;
        let combo = (lam * lambda_dots[k] + params.gamma).abs();
        total += combo / lam.powi(4) * row.mass_local[k].abs();
        total += row.mass_local[k] * row.mass_local[k] / s.powi(3);
    }
    total += (mod_total / s.powi(3)
        + bp.alpha_star * s.powf(bp.m as f64 - 3.0 + bp.d as f64 / 2.0)
        + s.powf(bp.upsilon_star as f64 - 3.0))
        * d_size;
    total += d_size * d_size / (s * s);
    total += bp.eps_knob * d_size * d_size / s.powi(3);
    total += (-1.0 / s).exp();
    total
}

/// Pinned constants of the generalized-energy lower bound:
/// `I >= C_LOW D^2/(T-t)^2 - C_MASS sum M_k^2/(T-t)^2 - C_EXP e^{-1/(T-t)}`.
pub const I_LOWER_COEF: f64 = 0.01;
pub const I_LOWER_MASS: f64 = 100.0;
pub const I_LOWER_EXP: f64 = 10.0;

/// The mass/exponential allowance on the right side of the lower bound.
pub fn lower_bound_allowance(row: &DecompositionRow, big_t: f64) -> f64 {
    let s = big_t - row.t;
    let mass_sq: f64 = row.mass_local.iter().map(|m| m * m).sum();
    I_LOWER_MASS * mass_sq / (s * s) + I_LOWER_EXP * (-1.0 / s).exp()
}
