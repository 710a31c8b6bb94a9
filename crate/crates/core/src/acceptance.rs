//! The acceptance suite: every exit criterion implemented with its
//! tolerance pinned in code, runnable both as an integration test and
//! through the command line. Criteria never panic; failures carry their
//! measurements in the details string.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomposition::{
    build_localizers, fit_parameters, LocalizerSet,
};
use crate::diagnostics::{
    diagnostics_series, energy, energy_variation_rhs, mass_quantization, rate_fit,
    lower_bound_allowance, I_LOWER_COEF, QUANTIZATION_RADIUS,
};
use crate::error::Result;
use crate::evolution::{
    construct_approximation, evolve, localizers_for, regular_profile_record, ConstructionRun,
    EvolutionState, Stepper, TrajectoryRecord,
};
use crate::fields::{make_grid, ComplexField};
use crate::groundstate::{
    check_kernel_identities, coercivity_sample, default_table, identity_grid,
    lowest_lplus_eigenvalue, solve_ground_state, GroundStateTable, Q0_1D,
};
use crate::perturbation::{build_flat_spatial, sample_brownian, Envelope, PerturbationModel};
use crate::profiles::{
    eval_pseudoconformal, eval_soliton, inverse_pseudoconformal_transform,
    pseudoconformal_transform, AnalyticSampler, BubbleSpec, ModulationState,
};
use crate::scenario::{Scenario, ScenarioContext};

/// Pinned constant of the monotonicity-up-to-budget gate:
/// `dI >= -C A budget dt`.
pub const MONOTONICITY_C: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub details: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {:<28} {:>7.1}s  {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.details
        )
    }
}

fn outcome(
    id: usize,
    name: &'static str,
    started: Instant,
    body: Result<(bool, String)>,
) -> CriterionResult {
    let (pass, details) = match body {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult {
        id,
        name,
        pass,
        details,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn criterion_1() -> CriterionResult {
    let t0 = Instant::now();
    let body = (|| {
        let gs = solve_ground_state(1, 34.0, 27200)?;
        let elapsed = t0.elapsed().as_secs_f64();
        let mut worst: f64 = 0.0;
        let h = gs.spacing();
        for (i, &q) in gs.q_samples().iter().enumerate() {
            let r = i as f64 * h;
            let want = Q0_1D * (1.0 / (2.0 * r).cosh()).sqrt();
            worst = worst.max((q - want).abs());
        }
        let mass_want = 3.0f64.sqrt() * std::f64::consts::PI / 2.0;
        let mass_rel = (gs.mass_q() - mass_want).abs() / mass_want;
        let pass = worst < 1e-8 && mass_rel < 1e-8 && elapsed < 1.0;
        Ok((
            pass,
            format!(
                "max|Q - closed form| = {worst:.2e}, mass rel err = {mass_rel:.2e}, solve {elapsed:.2}s"
            ),
        ))
    })();
    outcome(1, "ground state d=1", t0, body)
}

fn criterion_2() -> CriterionResult {
    let t0 = Instant::now();
    let body = (|| {
        let build = Instant::now();
        let gs = solve_ground_state(2, 34.0, 24480)?;
        let elapsed = build.elapsed().as_secs_f64();
        let coarse = solve_ground_state(2, 34.0, 12240)?;
        let q0_ok = gs.q0() > 2.205 && gs.q0() < 2.208;
        let mass_ok = gs.mass_q() > 11.68 && gs.mass_q() < 11.72;
        let ref_q0 = (gs.q0() - coarse.q0()).abs() / gs.q0();
        let ref_mass = (gs.mass_q() - coarse.mass_q()).abs() / gs.mass_q();
        let pass = q0_ok && mass_ok && ref_q0 < 1e-6 && ref_mass < 1e-6 && elapsed < 10.0;
        Ok((
            pass,
            format!(
                "Q(0) = {:.5}, mass = {:.4}, refinement drift ({ref_q0:.1e}, {ref_mass:.1e}), solve {elapsed:.2}s",
                gs.q0(),
                gs.mass_q()
            ),
        ))
    })();
    outcome(2, "ground state d=2 (shooting)", t0, body)
}

fn criterion_3(gs1: &GroundStateTable, gs2: &GroundStateTable) -> CriterionResult {
    let t0 = Instant::now();
    let body = (|| {
        let rep1 = check_kernel_identities(gs1, &identity_grid(1)?)?;
        let rep2 = check_kernel_identities(gs2, &identity_grid(2)?)?;
        let max1 = rep1.residuals.iter().fold(0.0f64, |m, &r| m.max(r));
        let max2 = rep2.residuals.iter().fold(0.0f64, |m, &r| m.max(r));
        let pass = rep1.pass() && rep2.pass();
        Ok((
            pass,
            format!("six residuals: d=1 max {max1:.2e} (<1e-6), d=2 max {max2:.2e} (<1e-5)"),
        ))
    })();
    outcome(3, "kernel identities", t0, body)
}

fn criterion_4(gs1: &GroundStateTable) -> CriterionResult {
    let t0 = Instant::now();
    let body = (|| {
        let inner_grid = make_grid(1, 24.0, 2048)?;
        let out_grid = make_grid(1, 10.0, 2048)?;
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let w = 0.8 + 0.45 * rng.random::<f64>();
            let c = 0.8 * (rng.random::<f64>() - 0.5);
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            let big_t = 1.3 + 0.9 * rng.random::<f64>();
            let spec_w = [BubbleSpec::soliton(w, vec![c], theta)];
            let sampler = AnalyticSampler::new((0.0, 20.0), |tau| {
                eval_soliton(&spec_w, gs1, &inner_grid, tau)
            });
            let t = big_t - 1.25;
            let got = pseudoconformal_transform(&sampler, &out_grid, big_t, t)?;
            let spec_s = [BubbleSpec::pseudoconformal(w, vec![c], theta)];
            let want = eval_pseudoconformal(&spec_s, gs1, &out_grid, big_t, t)?;
            worst = worst.max(got.sub(&want)?.max_abs());
        }
        Ok((
            worst < 1e-9,
            format!("max pointwise |C_T(W) - S_T| over 5 draws = {worst:.2e} (<1e-9)"),
        ))
    })();
    outcome(4, "pseudo-conformal identity", t0, body)
}

struct PropagationArtifacts {
    initial: ComplexField,
    final_field: ComplexField,
}

fn criterion_5(gs1: &GroundStateTable) -> (CriterionResult, Option<PropagationArtifacts>) {
    let t0 = Instant::now();
    let mut artifacts = None;
    let body = (|| {
        let grid = make_grid(1, 10.0, 2048)?;
        let spec = [BubbleSpec::pseudoconformal(1.0, vec![0.0], 0.0)];
        let model = PerturbationModel::trivial();
        let init = eval_pseudoconformal(&spec, gs1, &grid, 1.0, 0.5)?;
        let want = eval_pseudoconformal(&spec, gs1, &grid, 1.0, 0.88)?;
        let run = |dt: f64| -> Result<(f64, ComplexField)> {
            let rec = evolve(EvolutionState::new(init.clone(), 0.5), &model, 0.88, dt, &[])?;
            let last = rec.fields.last().expect("endpoint").clone();
            Ok((last.sub(&want)?.l2_norm() / want.l2_norm(), last))
        };
        let (e_coarse, final_field) = run(2e-4)?;
        let (e_fine, _) = run(1e-4)?;
        let elapsed = t0.elapsed().as_secs_f64();
        let ratio = e_coarse / e_fine;
        let pass = e_coarse < 1e-5 && ratio >= 8.0 && elapsed < 60.0;
        artifacts = Some(PropagationArtifacts {
            initial: init,
            final_field,
        });
        Ok((
            pass,
            format!(
                "rel L2 error {e_coarse:.2e} at dt=2e-4 (<1e-5), halving ratio {ratio:.1} (>=8), {elapsed:.1}s"
            ),
        ))
    })();
    (outcome(5, "exact-solution propagation", t0, body), artifacts)
}

fn criterion_6(prop: Option<&PropagationArtifacts>) -> CriterionResult {
    let t0 = Instant::now();
    let body = (|| {
        let prop = prop.ok_or(crate::Error::BadRateFitInput)?;
        // conservation on the criterion-5 run
        let m0 = prop.initial.l2_norm_sq();
        let e0 = energy(&prop.initial)?;
        let m1 = prop.final_field.l2_norm_sq();
        let e1 = energy(&prop.final_field)?;
        let mass_drift = ((m1 - m0) / m0).abs();
        let energy_drift = ((e1 - e0) / e0).abs();

        // noise run. The paths are piecewise linear at the scenario step,
        // so E(t) is smooth only inside single segments; the finite
        // difference uses eighth-step samples and a five-point interior
        // stencil, whose error sits orders below the 1e-6 gate.
        let grid = prop.initial.grid().clone();
        let dt = 2e-4;
        let nodes: Vec<f64> = (0..=2300).map(|i| 0.45 + i as f64 * dt).collect();
        let paths = sample_brownian(2, &nodes, 31);
        let phi = vec![
            build_flat_spatial(&grid, &[vec![0.0]], 5, Envelope::Bump { radius: 7.0 }, 0.2)?,
            build_flat_spatial(
                &grid,
                &[vec![0.0]],
                5,
                Envelope::Gaussian { width: 1.25 },
                0.15,
            )?,
        ];
        let model = PerturbationModel::new(phi, nodes, paths, 5, Some(31));
        let sub = dt / 8.0;
        let stepper = Stepper::new(&grid, sub);
        let mut state = EvolutionState::new(prop.initial.clone(), 0.5);
        let noise_m0 = state.mass();
        let mut e_series: Vec<f64> = vec![energy(&state.field)?];
        let mut formulas: Vec<(usize, f64)> = Vec::new();
        let total_sub = ((0.62 - 0.5) / sub).round() as usize;
        for i in 1..=total_sub {
            state = stepper.step(&state, &model)?;
            state.t = 0.5 + i as f64 * sub;
            e_series.push(energy(&state.field)?);
            if i % 8 == 4 {
                formulas.push((i, energy_variation_rhs(&state.field, &model, state.t)?));
            }
        }
        let window = state.t - 0.5;
        let noise_mass_drift = ((state.mass() - noise_m0) / noise_m0).abs() / window;
        let mut worst_rel: f64 = 0.0;
        let mut gated = 0usize;
        for &(mid, formula) in &formulas {
            if mid + 2 >= e_series.len() || formula.abs() <= 1e-6 {
                continue;
            }
            // five-point centered first derivative, all inside one segment
            let fd = (8.0 * (e_series[mid + 1] - e_series[mid - 1])
                - (e_series[mid + 2] - e_series[mid - 2]))
                / (12.0 * sub);
            gated += 1;
            worst_rel = worst_rel.max((formula - fd).abs() / formula.abs());
        }
        let pass = mass_drift < 1e-9
            && energy_drift < 1e-7
            && noise_mass_drift < 1e-8
            && gated > 50
            && worst_rel < 0.01;
        Ok((
            pass,
            format!(
                "a=0: mass {mass_drift:.1e} (<1e-9), energy {energy_drift:.1e} (<1e-7); noise: mass/time {noise_mass_drift:.1e} (<1e-8), dE/dt vs FD worst {:.3e} rel over {gated} gated points (<0.01)",
                worst_rel
            ),
        ))
    })();
    outcome(6, "conservation and dE/dt", t0, body)
}

fn criterion_7(gs1: &GroundStateTable) -> CriterionResult {
    let t0 = Instant::now();
    let body = (|| {
        let grid = make_grid(1, 10.0, 2048)?;
        let z = crate::perturbation::build_regular_residue(
            &grid,
            1,
            &[vec![-4.0], vec![4.0]],
            4,
            Envelope::Bump { radius: 7.0 },
            1e-3,
        )?;
        let loc = build_localizers(&[vec![-4.0], vec![4.0]], &grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut worst_param: f64 = 0.0;
        let mut failures = 0usize;
        for _ in 0..100 {
            let truth = ModulationState {
                t: 0.6,
                bubbles: (0..2)
                    .map(|k| crate::profiles::BubbleParams {
                        lambda: 0.25 + 0.25 * rng.random::<f64>(),
                        alpha: vec![(k as f64 * 8.0 - 4.0) + 0.2 * (rng.random::<f64>() - 0.5)],
                        beta: vec![0.1 * (rng.random::<f64>() - 0.5)],
                        gamma: 0.2 + 0.3 * rng.random::<f64>(),
                        theta: 6.0 * rng.random::<f64>(),
                    })
                    .collect(),
            };
            let u = crate::profiles::eval_bubble_sum(&truth, gs1, &grid)?;
            let v = u.add(&z)?;
            let mut guess = truth.clone();
            for b in &mut guess.bubbles {
                b.lambda *= 1.0 + 0.1 * (2.0 * rng.random::<f64>() - 1.0);
                b.alpha[0] += 0.1 * (2.0 * rng.random::<f64>() - 1.0);
            }
            let row = fit_parameters(&v, &z, &guess, gs1, &loc, 1.0)?;
            if !row.converged {
                failures += 1;
                continue;
            }
            for (fit, want) in row.params.bubbles.iter().zip(&truth.bubbles) {
                for (a, b) in fit.to_vec().iter().zip(want.to_vec()) {
                    worst_param = worst_param.max((a - b).abs());
                }
            }
        }
        // boundary-data fit returns the boundary tuple with zero remainder
        let specs = [
            BubbleSpec::pseudoconformal(1.0, vec![-4.0], 0.0),
            BubbleSpec::pseudoconformal(1.0, vec![4.0], 0.9),
        ];
        let s = eval_pseudoconformal(&specs, gs1, &grid, 1.0, 0.6)?;
        let v = s.add(&z)?;
        let boundary = ModulationState::boundary(&specs, 1.0, 0.6);
        let mut guess = boundary.clone();
        guess.bubbles[0].lambda *= 1.05;
        guess.bubbles[1].alpha[0] += 0.05;
        let row = fit_parameters(&v, &z, &guess, gs1, &loc, 1.0)?;
        let mut boundary_err: f64 = 0.0;
        for (fit, want) in row.params.bubbles.iter().zip(&boundary.bubbles) {
            for (a, b) in fit.to_vec().iter().zip(want.to_vec()) {
                boundary_err = boundary_err.max((a - b).abs());
            }
        }
        let pass =
            failures == 0 && worst_param < 1e-8 && boundary_err < 1e-8 && row.d_size < 1e-8;
        Ok((
            pass,
            format!(
                "100 draws: {failures} failures, worst recovery {worst_param:.2e} (<1e-8); boundary fit: params {boundary_err:.2e}, D = {:.2e} (<1e-8)",
                row.d_size
            ),
        ))
    })();
    outcome(7, "decomposition round-trip", t0, body)
}

struct ConstructionArtifacts {
    ctx: ScenarioContext,
    z_rec: TrajectoryRecord,
    loc: LocalizerSet,
    runs: Vec<ConstructionRun>,
}

fn criterion_8() -> (CriterionResult, Option<ConstructionArtifacts>) {
    let t0 = Instant::now();
    let mut artifacts = None;
    let body = (|| {
        let scn = Scenario::default_two_bubble();
        let ctx = ScenarioContext::prepare(&scn)?;
        let z_rec = regular_profile_record(&ctx)?;
        let loc = localizers_for(&ctx)?;
        let mut runs = Vec::new();
        for n in 0..=scn.schedule.n_max {
            runs.push(construct_approximation(&ctx, &z_rec, &loc, n)?);
        }
        let all_converged = runs
            .iter()
            .all(|run| run.rows.iter().all(|r| r.converged));
        // Mod_k < 1e-2 throughout, and decreasing toward the boundary time
        let mut mod_max: f64 = 0.0;
        let mut trend_ok = true;
        for run in runs.iter().skip(2) {
            let mods: Vec<f64> = run
                .rows
                .iter()
                .filter_map(|r| r.mod_k.as_ref().map(|m| m.iter().sum::<f64>()))
                .collect();
            if mods.is_empty() {
                trend_ok = false;
                continue;
            }
            mod_max = mod_max.max(mods.iter().cloned().fold(0.0, f64::max));
            let q = mods.len() / 4;
            let head: f64 = mods[..q.max(1)].iter().sum::<f64>() / q.max(1) as f64;
            let tail: f64 = mods[mods.len() - q.max(1)..].iter().sum::<f64>() / q.max(1) as f64;
            if tail > head {
                trend_ok = false;
            }
        }
        // D(t_j) along the deepest run: monotone through the schedule, and
        // the measured decay law over t_0..t_{n_max - 1} (the boundary time
        // itself carries D = 0 by construction)
        let deepest = runs.last().expect("runs");
        let mut sched: Vec<(f64, f64)> = Vec::new();
        for j in 0..=scn.schedule.n_max {
            let tj = scn.t_n(j);
            if let Some(row) = deepest.rows.iter().find(|r| (r.t - tj).abs() < 1e-9) {
                sched.push((tj, row.d_size));
            }
        }
        let monotone = sched.windows(2).all(|w| w[1].1 < w[0].1);
        let fit = rate_fit(&sched[..sched.len() - 1], scn.big_t)?;
        let elapsed = t0.elapsed().as_secs_f64();
        let pass = all_converged
            && mod_max < 1e-2
            && trend_ok
            && monotone
            && fit.slope >= 2.0
            && fit.r_squared > 0.9
            && elapsed < 600.0;
        let details = format!(
            "converged {all_converged}, Mod max {mod_max:.2e} (<1e-2, trend {trend_ok}), D(t_j) monotone {monotone}, slope {:.2} (>=2), r2 {:.3} (>0.9), {elapsed:.0}s (<600)",
            fit.slope, fit.r_squared
        );
        artifacts = Some(ConstructionArtifacts {
            ctx,
            z_rec,
            loc,
            runs,
        });
        Ok((pass, details))
    })();
    (outcome(8, "two-bubble construction", t0, body), artifacts)
}

fn criterion_9(art: Option<&ConstructionArtifacts>) -> CriterionResult {
    let t0 = Instant::now();
    let body = (|| {
        let art = art.ok_or(crate::Error::BadRateFitInput)?;
        let scn = &art.ctx.scenario;
        let t6 = scn.t_n(scn.schedule.n_max);
        let deepest = art.runs.last().expect("runs");
        let v = deepest
            .record
            .field_at(t6)
            .ok_or(crate::Error::TimeOutOfDomain {
                t: t6,
                lo: scn.t_star(),
                hi: scn.big_t,
            })?;
        let z = art
            .z_rec
            .field_at(t6)
            .ok_or(crate::Error::TimeOutOfDomain {
                t: t6,
                lo: scn.t_star(),
                hi: scn.big_t,
            })?;
        let split = mass_quantization(v, &scn.singularities(), QUANTIZATION_RADIUS)?;
        let mass_q = art.ctx.gs.mass_q();
        let worst_ball = split
            .ball
            .iter()
            .map(|b| (b - mass_q).abs())
            .fold(0.0, f64::max);
        let z_mass = z.l2_norm_sq();
        let ext_err = (split.exterior - z_mass).abs();
        let pass = worst_ball < 1e-3 && ext_err < 1e-3;
        Ok((
            pass,
            format!(
                "ball mass error {worst_ball:.2e} (<1e-3), exterior vs ||z||^2 error {ext_err:.2e} (<1e-3)"
            ),
        ))
    })();
    outcome(9, "mass quantization", t0, body)
}

fn criterion_10(art: Option<&ConstructionArtifacts>) -> CriterionResult {
    let t0 = Instant::now();
    let body = (|| {
        let art = art.ok_or(crate::Error::BadRateFitInput)?;
        let scn = &art.ctx.scenario;
        let a = scn.cutoff_a;
        let mut rows_checked = 0usize;
        let mut lower_failures = 0usize;
        let mut mono_failures = 0usize;
        let mut worst_margin = f64::INFINITY;
        for run in art.runs.iter().skip(1) {
            let diag = diagnostics_series(&art.ctx, run, &art.z_rec, &art.loc)?;
            for (row, d) in run.rows.iter().zip(&diag) {
                if !row.converged {
                    continue;
                }
                rows_checked += 1;
                let s = scn.big_t - row.t;
                let need = I_LOWER_COEF * row.d_size * row.d_size / (s * s)
                    - lower_bound_allowance(row, scn.big_t);
                let margin = d.gen_energy - need;
                worst_margin = worst_margin.min(margin);
                if margin < 0.0 {
                    lower_failures += 1;
                }
            }
            for w in diag.windows(2) {
                let dt = w[1].t - w[0].t;
                let budget = w[0].budget.max(w[1].budget);
                if w[1].gen_energy - w[0].gen_energy < -MONOTONICITY_C * a * budget * dt {
                    mono_failures += 1;
                }
            }
        }
        let pass = lower_failures == 0 && mono_failures == 0 && rows_checked > 100;
        Ok((
            pass,
            format!(
                "{rows_checked} rows: lower bound failures {lower_failures} (worst margin {worst_margin:.2e}), monotonicity failures {mono_failures}"
            ),
        ))
    })();
    outcome(10, "generalized-energy bounds", t0, body)
}

fn criterion_11(gs1: &GroundStateTable) -> CriterionResult {
    let t0 = Instant::now();
    let body = (|| {
        let grid = make_grid(1, 30.0, 1024)?;
        let mut min_ratio = f64::INFINITY;
        for seed in 0..100 {
            min_ratio = min_ratio.min(coercivity_sample(gs1, &grid, 20.0, seed)?);
        }
        let ev_grid = make_grid(1, 30.0, 512)?;
        let lowest = lowest_lplus_eigenvalue(gs1, &ev_grid)?;
        let pass = min_ratio > 1e-3 && lowest < 0.0;
        Ok((
            pass,
            format!(
                "min coercivity ratio over 100 seeds = {min_ratio:.3e} (>1e-3); lowest L+ mode {lowest:.3} (<0)"
            ),
        ))
    })();
    outcome(11, "localized coercivity", t0, body)
}

fn criterion_12(gs1: &GroundStateTable) -> CriterionResult {
    let t0 = Instant::now();
    let body = (|| {
        let inner_grid = make_grid(1, 24.0, 2048)?;
        let out_grid = make_grid(1, 10.0, 2048)?;
        let (w, c, theta, big_t) = (1.0, 0.3, 0.5, 1.8);
        let spec_s = [BubbleSpec::pseudoconformal(w, vec![c], theta)];
        let sampler = AnalyticSampler::new((0.0, big_t - 1e-6), |tau| {
            eval_pseudoconformal(&spec_s, gs1, &inner_grid, big_t, tau)
        });
        let spec_w = [BubbleSpec::soliton(w, vec![c], theta)];
        let mut worst_rel: f64 = 0.0;
        for t in [1.05, 1.2, 1.35] {
            let got = inverse_pseudoconformal_transform(&sampler, &out_grid, big_t, t)?;
            let want = eval_soliton(&spec_w, gs1, &out_grid, t)?;
            worst_rel = worst_rel.max(got.sub(&want)?.l2_norm() / want.l2_norm());
        }
        Ok((
            worst_rel < 1e-4,
            format!("rel L2 |C_T^inv(S) - W| over the mapped window = {worst_rel:.2e} (<1e-4)"),
        ))
    })();
    outcome(12, "soliton correspondence", t0, body)
}

/// Run every criterion in order; heavy artifacts are shared along the way.
pub fn run_all() -> Vec<CriterionResult> {
    let mut results = Vec::with_capacity(12);
    results.push(criterion_1());
    results.push(criterion_2());
    let gs1 = default_table(1).expect("d=1 table");
    let gs2 = default_table(2).expect("d=2 table");
    results.push(criterion_3(&gs1, &gs2));
    results.push(criterion_4(&gs1));
    let (r5, prop) = criterion_5(&gs1);
    results.push(r5);
    results.push(criterion_6(prop.as_ref()));
    results.push(criterion_7(&gs1));
    let (r8, art) = criterion_8();
    results.push(r8);
    results.push(criterion_9(art.as_ref()));
    results.push(criterion_10(art.as_ref()));
    results.push(criterion_11(&gs1));
    results.push(criterion_12(&gs1));
    results
}

pub fn format_table(results: &[CriterionResult]) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(out, "{}", r.line());
    }
    let passed = results.iter().filter(|r| r.pass).count();
    let _ = writeln!(out, "{passed}/{} criteria passed", results.len());
    out
}

