//! Experiment descriptions: JSON-backed scenarios, validation with
//! path-labeled errors, derived schedules, and the prepared context
//! (tables, noise model, residue, localizers) shared by every run.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{ComplexField, Grid};
use crate::groundstate::{self, GroundStateTable};
use crate::perturbation::{
    build_flat_spatial, build_regular_residue, sample_brownian, Envelope, PerturbationModel,
};
use crate::profiles::{BubbleSpec, RESOLUTION_FACTOR, SAFE_MARGIN};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub l: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BubbleInput {
    pub w: f64,
    pub x: Vec<f64>,
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleSpec {
    /// `t_n = T - base * ratio^n`, `t_star = T - base`.
    pub base: f64,
    pub ratio: f64,
    pub n_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub n_noise: usize,
    pub upsilon_star: usize,
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidueSpec {
    pub m: usize,
    pub alpha_star: f64,
}

/// Full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub d: usize,
    pub bubbles: Vec<BubbleInput>,
    #[serde(rename = "T")]
    pub big_t: f64,
    pub grid: GridSpec,
    pub dt: f64,
    pub schedule: ScheduleSpec,
    /// Decomposition sample times per run (uniform, plus schedule times).
    pub sample_count: usize,
    pub noise: NoiseSpec,
    pub residue: ResidueSpec,
    /// Morawetz cutoff scale.
    pub cutoff_a: f64,
}

impl Scenario {
    /// The shipped two-bubble configuration.
    pub fn default_two_bubble() -> Scenario {
        Scenario {
            d: 1,
            bubbles: vec![
                BubbleInput {
                    w: 1.0,
                    x: vec![-4.0],
                    theta: 0.0,
                },
                BubbleInput {
                    w: 1.0,
                    x: vec![4.0],
                    theta: 0.0,
                },
            ],
            big_t: 1.0,
            grid: GridSpec { l: 10.0, n: 2048 },
            dt: 2e-4,
            schedule: ScheduleSpec {
                base: 0.5,
                ratio: 0.75,
                n_max: 6,
            },
            sample_count: 65,
            noise: NoiseSpec {
                n_noise: 2,
                upsilon_star: 5,
                amplitude: 0.05,
                seed: 7,
            },
            residue: ResidueSpec {
                m: 4,
                alpha_star: 1e-3,
            },
            cutoff_a: 20.0,
        }
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        let scn: Scenario = serde_json::from_str(&text).map_err(|e| Error::Scenario {
            path: format!("{}:{}:{}", path.display(), e.line(), e.column()),
            message: e.to_string(),
        })?;
        Ok(scn)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Canonical content hash.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(self)?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// `kappa = (m + d/2 - 1) ^ (upsilon* - 2)` (minimum).
    pub fn kappa(&self) -> f64 {
        let a = self.residue.m as f64 + self.d as f64 / 2.0 - 1.0;
        let b = self.noise.upsilon_star as f64 - 2.0;
        a.min(b)
    }

    pub fn t_star(&self) -> f64 {
        self.big_t - self.schedule.base
    }

    pub fn t_n(&self, n: usize) -> f64 {
        self.big_t - self.schedule.base * self.schedule.ratio.powi(n as i32)
    }

    /// Boundary times `t_0..t_{n_max}`.
    pub fn schedule_times(&self) -> Vec<f64> {
        (0..=self.schedule.n_max).map(|n| self.t_n(n)).collect()
    }

    /// Decomposition sample times for run `n`: log-uniform in `T - t` over
    /// `[t_star, t_n]` (so centered differences of the self-similar
    /// parameter curves carry a uniformly small relative error), joined
    /// with every earlier boundary time.
    pub fn sample_times(&self, n: usize) -> Vec<f64> {
        let t0 = self.t_star();
        let t1 = self.t_n(n);
        if (t1 - t0).abs() < 1e-14 {
            return vec![t0];
        }
        let s0 = self.big_t - t0;
        let s1 = self.big_t - t1;
        let ratio = (s1 / s0).powf(1.0 / (self.sample_count - 1) as f64);
        let mut times: Vec<f64> = (0..self.sample_count)
            .map(|i| self.big_t - s0 * ratio.powi(i as i32))
            .collect();
        for j in 0..=n.min(self.schedule.n_max) {
            let tj = self.t_n(j);
            if tj <= t1 + 1e-12 {
                times.push(tj);
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-10);
        times
    }

    pub fn specs(&self) -> Vec<BubbleSpec> {
        self.bubbles
            .iter()
            .map(|b| BubbleSpec::pseudoconformal(b.w, b.x.clone(), b.theta))
            .collect()
    }

    pub fn singularities(&self) -> Vec<Vec<f64>> {
        self.bubbles.iter().map(|b| b.x.clone()).collect()
    }

    /// Hard validation plus the advisory warnings echoed from the
    /// admissibility hypotheses.
    pub fn validate(&self) -> Result<Vec<String>> {
        let err = |path: &str, message: String| Error::Scenario {
            path: path.to_string(),
            message,
        };
        if self.d != 1 && self.d != 2 {
            return Err(err("d", format!("must be 1 or 2, got {}", self.d)));
        }
        if self.bubbles.is_empty() {
            return Err(err("bubbles", "need at least one bubble".into()));
        }
        if !(self.grid.l > 0.0) {
            return Err(err("grid.l", format!("must be positive, got {}", self.grid.l)));
        }
        if self.grid.n < 64 || !self.grid.n.is_power_of_two() {
            return Err(err(
                "grid.n",
                format!("must be a power of two >= 64, got {}", self.grid.n),
            ));
        }
        if !(self.dt > 0.0) {
            return Err(err("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.schedule.base > 0.0)
            || !(self.schedule.ratio > 0.0 && self.schedule.ratio < 1.0)
        {
            return Err(err(
                "schedule",
                "base must be positive and ratio in (0,1)".into(),
            ));
        }
        if self.sample_count < 4 {
            return Err(err("sample_count", "need at least 4 sample times".into()));
        }
        for (i, b) in self.bubbles.iter().enumerate() {
            if !(b.w > 0.0) {
                return Err(err(
                    &format!("bubbles[{i}].w"),
                    format!("must be positive, got {}", b.w),
                ));
            }
            if b.x.len() != self.d {
                return Err(err(
                    &format!("bubbles[{i}].x"),
                    format!("expected {} coordinates, got {}", self.d, b.x.len()),
                ));
            }
            if b.x.iter().any(|c| c.abs() > self.grid.l - SAFE_MARGIN) {
                return Err(err(
                    &format!("bubbles[{i}].x"),
                    format!("singularity {:?} within {SAFE_MARGIN} of the boundary", b.x),
                ));
            }
            for (j, other) in self.bubbles.iter().enumerate().skip(i + 1) {
                let dist: f64 = b
                    .x
                    .iter()
                    .zip(&other.x)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                if dist < 1e-9 {
                    return Err(err(
                        &format!("bubbles[{j}]"),
                        "singularities must be pairwise distinct".into(),
                    ));
                }
            }
        }
        // resolution guard at the deepest boundary time
        let dx = 2.0 * self.grid.l / self.grid.n as f64;
        let min_scale: f64 = self
            .bubbles
            .iter()
            .map(|b| b.w * (self.big_t - self.t_n(self.schedule.n_max)))
            .fold(f64::INFINITY, f64::min);
        if min_scale < RESOLUTION_FACTOR * dx {
            return Err(err(
                "schedule.n_max",
                format!(
                    "deepest profile scale {min_scale:.4e} under-resolved (needs >= {:.4e})",
                    RESOLUTION_FACTOR * dx
                ),
            ));
        }

        let mut warnings = Vec::new();
        if self.noise.n_noise > 0 && self.noise.upsilon_star < 5 {
            warnings.push(format!(
                "flatness order upsilon* = {} below the admissible minimum 5",
                self.noise.upsilon_star
            ));
        }
        let m_min = if self.d == 2 { 3 } else { 4 };
        if self.residue.m < m_min {
            warnings.push(format!(
                "residue order m = {} below the admissible minimum {m_min} for d = {}",
                self.residue.m, self.d
            ));
        }
        // decoupling knobs: frequency spread and inverse separation
        let w_mean: f64 =
            self.bubbles.iter().map(|b| b.w).sum::<f64>() / self.bubbles.len() as f64;
        let spread = self
            .bubbles
            .iter()
            .map(|b| (b.w - w_mean).abs())
            .fold(0.0, f64::max);
        let min_sep = self.min_separation();
        warnings.push(format!(
            "decoupling: frequency spread {spread:.3e} (case I), min separation {min_sep:.3} (case II knob 1/sep = {:.3e})",
            if min_sep.is_finite() { 1.0 / min_sep } else { 0.0 }
        ));
        // boundary amplitude of the widest profile at t_star
        let widest = self
            .bubbles
            .iter()
            .map(|b| {
                let lam = b.w * self.schedule.base;
                let dist = self.grid.l
                    - b.x.iter().map(|c| c.abs()).fold(0.0, f64::max);
                (lam, dist)
            })
            .map(|(lam, dist)| (-dist / lam).exp() / lam.sqrt())
            .fold(0.0, f64::max);
        if widest > 1e-10 {
            warnings.push(format!(
                "profile boundary amplitude ~{widest:.2e} at t_star exceeds the 1e-10 target; periodic images enter at this level"
            ));
        }
        Ok(warnings)
    }

    pub fn min_separation(&self) -> f64 {
        let mut m = f64::INFINITY;
        for (i, a) in self.bubbles.iter().enumerate() {
            for b in self.bubbles.iter().skip(i + 1) {
                let dist: f64 = a
                    .x
                    .iter()
                    .zip(&b.x)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
                m = m.min(dist);
            }
        }
        m
    }

    /// The decoupling knob entering the error budgets.
    pub fn eps_knob(&self) -> f64 {
        let sep = self.min_separation();
        if sep.is_finite() {
            1.0 / sep
        } else {
            0.0
        }
    }
}

/// Everything a run needs, prepared once per scenario.
pub struct ScenarioContext {
    pub scenario: Scenario,
    pub grid: Arc<Grid>,
    pub gs: GroundStateTable,
    pub model: PerturbationModel,
    pub z_star: ComplexField,
    pub warnings: Vec<String>,
}

impl ScenarioContext {
    /// Validate, build tables, noise model and residue. The Brownian time
    /// grid covers `[t_star, T]` at the scenario step.
    pub fn prepare(scenario: &Scenario) -> Result<ScenarioContext> {
        let warnings = scenario.validate()?;
        let grid = Grid::new(scenario.d, scenario.grid.l, scenario.grid.n)?;
        let gs = groundstate::default_table(scenario.d)?;
        let singularities = scenario.singularities();

        let model = if scenario.noise.n_noise == 0 || scenario.noise.amplitude == 0.0 {
            PerturbationModel::trivial()
        } else {
            // path nodes at the integration step over the full window
            let t0 = scenario.t_star() - 64.0 * scenario.dt;
            let steps = ((scenario.big_t - t0) / scenario.dt).ceil() as usize + 2;
            let times: Vec<f64> = (0..=steps).map(|i| t0 + i as f64 * scenario.dt).collect();
            let paths = sample_brownian(scenario.noise.n_noise, &times, scenario.noise.seed);
            let phi = (0..scenario.noise.n_noise)
                .map(|l| {
                    build_flat_spatial(
                        &grid,
                        &singularities,
                        scenario.noise.upsilon_star,
                        if l % 2 == 0 {
                            Envelope::Bump {
                                radius: scenario.grid.l - SAFE_MARGIN,
                            }
                        } else {
                            Envelope::Gaussian {
                                width: scenario.grid.l / 8.0,
                            }
                        },
                        scenario.noise.amplitude,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let model = PerturbationModel::new(
                phi,
                times,
                paths,
                scenario.noise.upsilon_star,
                Some(scenario.noise.seed),
            );
            // flatness certification at the scenario's own order
            let worst = model.certify_flatness(&singularities);
            if worst >= 1e-5 {
                return Err(Error::ResidualTooLarge {
                    what: "noise flatness at singularities",
                    value: worst,
                    tol: 1e-5,
                });
            }
            model
        };

        let z_star = build_regular_residue(
            &grid,
            scenario.d,
            &singularities,
            scenario.residue.m,
            Envelope::Bump {
                radius: scenario.grid.l - SAFE_MARGIN,
            },
            scenario.residue.alpha_star,
        )?;

        Ok(ScenarioContext {
            scenario: scenario.clone(),
            grid,
            gs,
            model,
            z_star,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_is_valid() {
        let scn = Scenario::default_two_bubble();
        let warnings = scn.validate().unwrap();
        assert!(warnings.iter().any(|w| w.contains("decoupling")));
        assert_eq!(scn.kappa(), 3.0); // min(4 + 0.5 - 1, 5 - 2)
    }

    #[test]
    fn schedule_arithmetic() {
        let scn = Scenario::default_two_bubble();
        assert!((scn.t_star() - 0.5).abs() < 1e-15);
        assert!((scn.t_n(0) - 0.5).abs() < 1e-15);
        assert!((scn.t_n(6) - (1.0 - 0.5 * 0.75f64.powi(6))).abs() < 1e-15);
        let samples = scn.sample_times(3);
        assert!(samples.windows(2).all(|w| w[1] > w[0]));
        assert!((samples[0] - scn.t_star()).abs() < 1e-12);
        assert!((samples.last().unwrap() - scn.t_n(3)).abs() < 1e-12);
        // schedule times t_0..t_3 are all included
        for j in 0..=3 {
            assert!(samples.iter().any(|&t| (t - scn.t_n(j)).abs() < 1e-10));
        }
    }

    #[test]
    fn validation_catches_schema_violations() {
        let mut scn = Scenario::default_two_bubble();
        scn.grid.n = 100;
        assert!(matches!(scn.validate(), Err(Error::Scenario { .. })));

        let mut scn = Scenario::default_two_bubble();
        scn.bubbles[1].x = vec![-4.0];
        assert!(scn.validate().is_err());

        let mut scn = Scenario::default_two_bubble();
        scn.schedule.n_max = 12; // under-resolved at the deepest time
        assert!(scn.validate().is_err());

        let mut scn = Scenario::default_two_bubble();
        scn.bubbles[0].x = vec![-9.0];
        assert!(scn.validate().is_err());
    }

    #[test]
    fn json_round_trip_and_hash() {
        let scn = Scenario::default_two_bubble();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        scn.save(&path).unwrap();
        let loaded = Scenario::load(&path).unwrap();
        assert_eq!(scn.hash().unwrap(), loaded.hash().unwrap());
        assert_eq!(loaded.bubbles.len(), 2);
    }

    #[test]
    fn context_prepares_and_certifies() {
        let mut scn = Scenario::default_two_bubble();
        scn.grid.n = 1024; // cheaper table for this test
        scn.schedule.n_max = 4;
        let ctx = ScenarioContext::prepare(&scn).unwrap();
        assert_eq!(ctx.model.n_noise(), 2);
        assert!(ctx.z_star.l2_norm() > 0.0);
    }
}
