//! Numerical checkers for the L₂-differentiability hypotheses.
//!
//! A checker cannot prove a limit. Every check evaluates a statistic along a
//! ladder of control values and judges the trajectory: `Pass` means the
//! statistic decreased as required, `Fail` means it demonstrably did not
//! (divergence, a flat trajectory, a domain witness), and `Inconclusive`
//! covers everything in between.

mod deterministic;
mod remainder;
mod stochastic;

pub use deterministic::{
    check_feller, check_info_cont_det, check_lindeberg, feller_statistic, hat_matrix, info_cont_det_sum,
    lindeberg_sums,
};
pub use remainder::{check_remainder_rate, l2_remainder, remainder_directions};
pub use stochastic::{check_cond_ii, check_cond_iii, cond_iii_cell, hill_tail_index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::norm_quantile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    Remainder,
    CondIi,
    CondIii,
    Lindeberg,
    Feller,
    InfoContDet,
}

impl ConditionId {
    pub fn name(self) -> &'static str {
        match self {
            ConditionId::Remainder => "remainder",
            ConditionId::CondIi => "cond_ii",
            ConditionId::CondIii => "cond_iii",
            ConditionId::Lindeberg => "lindeberg",
            ConditionId::Feller => "feller",
            ConditionId::InfoContDet => "info_cont_det",
        }
    }
}

impl std::str::FromStr for ConditionId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        use ConditionId::*;
        [Remainder, CondIi, CondIii, Lindeberg, Feller, InfoContDet]
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown condition '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub control: f64,
    pub value: f64,
}

/// A labelled sub-trajectory, e.g. one ε of a Lindeberg sweep or one
/// direction of the remainder ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub verdict: Verdict,
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub verdict: Verdict,
    pub trajectory: Vec<TrajectoryPoint>,
    pub tolerance: f64,
    pub diagnostics: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<Series>,
    /// Hypotheses the check relies on but cannot test.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumptions: Vec<String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
    pub config: CheckConfig,
    pub seed: Option<u64>,
}

impl ConditionReport {
    fn new(condition: ConditionId, cfg: &CheckConfig, seed: Option<u64>) -> Self {
        Self {
            condition,
            verdict: Verdict::Inconclusive,
            trajectory: Vec::new(),
            tolerance: 0.0,
            diagnostics: String::new(),
            series: Vec::new(),
            assumptions: Vec::new(),
            details: serde_json::Value::Null,
            config: cfg.clone(),
            seed,
        }
    }

    fn failed(mut self, why: String) -> Self {
        self.verdict = Verdict::Fail;
        self.diagnostics = why;
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

fn points(control: &[f64], value: &[f64]) -> Vec<TrajectoryPoint> {
    control.iter().zip(value).map(|(&control, &value)| TrajectoryPoint { control, value }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckConfig {
    /// Step sizes for the remainder ladder, strictly decreasing.
    pub h_ladder: Vec<f64>,
    /// Base Monte Carlo size N; condition (ii) also evaluates 2N and 4N.
    pub n_draws: usize,
    pub seed: u64,
    /// Radius of the local-parameter ball.
    pub b: f64,
    /// Number of directions on the radius-b sphere.
    pub t_grid: usize,
    /// Shrinking factors for condition (iii), strictly decreasing.
    pub s_ladder: Vec<f64>,
    /// Sample sizes of the triangular array, strictly increasing.
    pub n_ladder: Vec<usize>,
    /// Primary Lindeberg threshold.
    pub epsilon: f64,
    pub epsilon_sweep: Vec<f64>,
    pub quad_nodes: usize,
    pub quad_grading: u32,
    /// Relative change allowed between successive N-doublings.
    pub tol_stab: f64,
    /// Required ratio last/first along the s-ladder.
    pub tol_cont: f64,
    /// Minimal decrease factor of remainder(h)/|h|² per halving.
    pub rate_factor: f64,
    /// Hill tail index below which a mean is considered finite.
    pub tail_pass: f64,
    /// Hill tail index from which a mean is considered infinite.
    pub tail_fail: f64,
    /// n-ladder statistics must end below `decay_ratio` times their start.
    pub decay_ratio: f64,
    /// An n-ladder statistic ending above `flat_ratio` times its start is flat.
    pub flat_ratio: f64,
    /// Values below this are treated as zero.
    pub abs_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            h_ladder: (0..7).map(|j| 0.1 * 0.5f64.powi(j)).collect(),
            n_draws: 100_000,
            seed: 42,
            b: 1.0,
            t_grid: 64,
            s_ladder: vec![0.1, 1e-2, 1e-3, 1e-4, 1e-5],
            n_ladder: vec![50, 100, 200, 400],
            epsilon: 0.5,
            epsilon_sweep: vec![1.0, 0.5, 0.1],
            quad_nodes: crate::quadrature::DEFAULT_NODES,
            quad_grading: crate::quadrature::DEFAULT_GRADING,
            tol_stab: 5e-3,
            tol_cont: 1e-3,
            rate_factor: 1.5,
            tail_pass: 0.75,
            tail_fail: 1.0,
            decay_ratio: 0.5,
            flat_ratio: 0.9,
            abs_tol: 1e-12,
        }
    }
}

impl CheckConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let decreasing = |v: &[f64]| !v.is_empty() && v.iter().all(|x| *x > 0.0) && v.windows(2).all(|w| w[1] < w[0]);
        if !decreasing(&self.h_ladder) {
            return bad("h_ladder must be positive and strictly decreasing");
        }
        if !decreasing(&self.s_ladder) {
            return bad("s_ladder must be positive and strictly decreasing");
        }
        if self.n_ladder.is_empty() || self.n_ladder[0] == 0 || self.n_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return bad("n_ladder must be positive and strictly increasing");
        }
        if self.n_draws < 10_000 {
            return bad("n_draws must be at least 10^4");
        }
        if !(self.b > 0.0) || self.t_grid == 0 {
            return bad("b must be positive and t_grid at least 1");
        }
        if !(self.epsilon > 0.0) || self.epsilon_sweep.iter().any(|e| !(*e > 0.0)) {
            return bad("epsilon values must be positive");
        }
        if self.quad_nodes == 0 || self.quad_grading == 0 {
            return bad("quadrature needs nodes and grading ≥ 1");
        }
        Ok(())
    }

    /// ε values to evaluate: the sweep plus the primary ε.
    pub(crate) fn epsilons(&self) -> Vec<f64> {
        let mut e = self.epsilon_sweep.clone();
        if !e.contains(&self.epsilon) {
            e.push(self.epsilon);
        }
        e
    }
}

/// Judge of a statistic along the n-ladder that should decrease to 0.
pub(crate) fn judge_decay(values: &[f64], cfg: &CheckConfig) -> Verdict {
    if values.is_empty() {
        return Verdict::Inconclusive;
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Verdict::Fail;
    }
    let first = values[0];
    let last = *values.last().unwrap();
    if values.iter().all(|v| v.abs() <= cfg.abs_tol) {
        return Verdict::Pass;
    }
    let non_increasing = values.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + cfg.abs_tol);
    if non_increasing && (last <= cfg.decay_ratio * first || last <= cfg.abs_tol) {
        Verdict::Pass
    } else if last >= cfg.flat_ratio * first {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

/// Deterministic directions on the sphere of radius `b` in ℝᵖ: ±b for p = 1,
/// equally spaced angles for p = 2, and a Halton sequence pushed through the
/// normal quantile and normalised for p ≥ 3.
pub fn sphere_directions(p: usize, count: usize, b: f64) -> Vec<Vec<f64>> {
    match p {
        0 => Vec::new(),
        1 => vec![vec![b], vec![-b]],
        2 => (0..count)
            .map(|j| {
                let a = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                vec![b * a.cos(), b * a.sin()]
            })
            .collect(),
        _ => {
            let primes = first_primes(p);
            (1..=count)
                .map(|j| {
                    let z: Vec<f64> = primes.iter().map(|&q| norm_quantile(radical_inverse(j, q))).collect();
                    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    z.iter().map(|v| b * v / norm).collect()
                })
                .collect()
        }
    }
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn first_primes(n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2;
    while out.len() < n {
        if out.iter().all(|&q| c % q != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// Whether an error is a per-point evaluation failure (domain, guard band,
/// support) that a checker reports as a witness rather than propagating.
pub(crate) fn is_witness(e: &Error) -> bool {
    match e {
        Error::Domain { .. } | Error::Singularity { .. } | Error::OutsideSupport { .. } => true,
        Error::AtRegressor { source, .. } => is_witness(source),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_have_radius_b() {
        for p in 1..5 {
            let d = sphere_directions(p, 16, 2.0);
            assert!(!d.is_empty());
            for t in &d {
                let r = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((r - 2.0).abs() < 1e-12);
            }
        }
        assert_eq!(sphere_directions(2, 64, 1.0).len(), 64);
    }

    #[test]
    fn decay_judge() {
        let cfg = CheckConfig::default();
        assert_eq!(judge_decay(&[0.02, 0.01, 0.005, 0.0025], &cfg), Verdict::Pass);
        assert_eq!(judge_decay(&[0.98, 0.99, 0.995, 0.997], &cfg), Verdict::Fail);
        assert_eq!(judge_decay(&[1.0, 0.8, 0.7, 0.6], &cfg), Verdict::Inconclusive);
        assert_eq!(judge_decay(&[0.0, 0.0], &cfg), Verdict::Pass);
        assert_eq!(judge_decay(&[1.0, f64::INFINITY], &cfg), Verdict::Fail);
    }

    #[test]
    fn config_validation() {
        assert!(CheckConfig::default().validate().is_ok());
        let cfg = CheckConfig { n_draws: 100, ..CheckConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = CheckConfig { s_ladder: vec![0.1, 0.2], ..CheckConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = CheckConfig { n_ladder: vec![100, 50], ..CheckConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn report_json_key_order() {
        let r = ConditionReport::new(ConditionId::Feller, &CheckConfig::default(), Some(1));
        let v = serde_json::to_string(&r).unwrap();
        let c = v.find("\"condition\"").unwrap();
        let vd = v.find("\"verdict\"").unwrap();
        let t = v.find("\"trajectory\"").unwrap();
        let cf = v.find("\"config\"").unwrap();
        let s = v.find("\"seed\"").unwrap();
        assert!(c < vd && vd < t && t < cf && cf < s);
        let back: ConditionReport = serde_json::from_str(&v).unwrap();
        assert_eq!(back, r);
    }
}
