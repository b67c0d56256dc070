//! Extreme-value time series whose scale and shape follow GLM links of the
//! log of past observations:
//!
//! σ_t = ℓ_σ(Σ_j β_σ,j log x̃_{t−j}),  ξ_t = ℓ_ξ(Σ_j β_ξ,j log x̃_{t−j}),
//! X_t ∼ GEVD/GPD(σ_t, ξ_t),
//!
//! where x̃ = max(x, x_min). Past values at or below `x_min` are clipped
//! before the log and every step where that happens is counted.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::ErrorFamily;
use crate::glm::PastFamily;
use crate::link::ScalarLink;
use crate::mc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsConfig {
    pub family: PastFamily,
    pub beta_sigma: Vec<f64>,
    pub beta_xi: Vec<f64>,
    pub scale_link: ScalarLink,
    pub shape_link: ScalarLink,
    /// x_{−1}, x_{−2}, …; needs max(p₁, p₂) entries (missing ones are 1).
    pub start: Vec<f64>,
    pub length: usize,
    pub x_min: f64,
    pub seed: u64,
    /// Steps excluded from summaries; `None` means 10·max(p₁, p₂).
    pub burn_in: Option<usize>,
    /// Warn when some ξ_t is negative (bounded support above, so clipping
    /// may fire for long stretches).
    pub warn_negative_xi: bool,
}

impl Default for TsConfig {
    fn default() -> Self {
        Self {
            family: PastFamily::Gevd,
            beta_sigma: vec![0.0],
            beta_xi: vec![0.0],
            scale_link: ScalarLink::Log,
            shape_link: ScalarLink::ShapeGevdShifted,
            start: Vec::new(),
            length: 1000,
            x_min: 1e-6,
            seed: 42,
            burn_in: None,
            warn_negative_xi: true,
        }
    }
}

impl TsConfig {
    pub fn max_lag(&self) -> usize {
        self.beta_sigma.len().max(self.beta_xi.len())
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(10 * self.max_lag())
    }

    fn error_family(&self) -> ErrorFamily<f64> {
        match self.family {
            PastFamily::Gevd => ErrorFamily::Gevd,
            PastFamily::Gpd => ErrorFamily::Gpd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.length == 0 {
            return bad("series length must be ≥ 1".into());
        }
        if !(self.x_min > 0.0 && self.x_min.is_finite()) {
            return bad(format!("x_min must be positive, got {}", self.x_min));
        }
        if self.start.len() > self.max_lag() {
            return bad(format!("{} starting values for maximal lag {}", self.start.len(), self.max_lag()));
        }
        if let Some(s) = self.start.iter().find(|&&s| !(s >= self.x_min) || !s.is_finite()) {
            return bad(format!("starting value {s} below x_min = {}", self.x_min));
        }
        if self.beta_sigma.iter().chain(&self.beta_xi).any(|b| !b.is_finite()) {
            return bad("non-finite coefficient".into());
        }
        if !matches!(self.shape_link, ScalarLink::ShapeGevd | ScalarLink::ShapeGevdShifted | ScalarLink::ShapeGpd) {
            return bad(format!("{} is not a shape link", self.shape_link));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsRow {
    pub t: usize,
    pub sigma: f64,
    pub xi: f64,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TsSeries {
    pub rows: Vec<TsRow>,
    pub clipped_steps: usize,
    pub burn_in: usize,
}

impl TsSeries {
    pub fn xs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.x).collect()
    }

    /// Fraction of steps whose lagged values needed clipping.
    pub fn clipping_rate(&self) -> f64 {
        self.clipped_steps as f64 / self.rows.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,sigma,xi,x")?;
        for r in &self.rows {
            writeln!(w, "{},{:.16e},{:.16e},{:.16e}", r.t, r.sigma, r.xi, r.x)?;
        }
        Ok(())
    }

    /// Mean ξ_t over steps whose previous observation is in the top decile.
    pub fn conditional_mean_xi(&self, quantile: f64) -> f64 {
        let kept = &self.rows[self.burn_in.min(self.rows.len())..];
        if kept.len() < 2 {
            return f64::NAN;
        }
        let past: Vec<f64> = kept[..kept.len() - 1].iter().map(|r| r.x).collect();
        let thr = empirical_quantile(&past, quantile);
        let sel: Vec<f64> = kept.windows(2).filter(|w| w[0].x >= thr).map(|w| w[1].xi).collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    }

    pub fn summary(&self, cluster_quantile: f64) -> Result<TsSummary> {
        let kept = &self.rows[self.burn_in.min(self.rows.len())..];
        if kept.is_empty() {
            return Err(Error::InvalidConfig(format!("burn-in {} consumes the whole series", self.burn_in)));
        }
        let xs: Vec<f64> = kept.iter().map(|r| r.x).collect();
        let xi = kept.iter().map(|r| r.xi);
        Ok(TsSummary {
            steps: self.rows.len(),
            burn_in: self.burn_in,
            clipped_steps: self.clipped_steps,
            clipping_rate: self.clipping_rate(),
            xi_min: xi.clone().fold(f64::INFINITY, f64::min),
            xi_max: xi.clone().fold(f64::NEG_INFINITY, f64::max),
            mean_xi: xi.sum::<f64>() / kept.len() as f64,
            cond_mean_xi_top_decile: self.conditional_mean_xi(0.9),
            cluster: cluster_summary(&xs, cluster_quantile)?,
            warnings: Vec::new(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub quantile: f64,
    pub threshold: f64,
    pub exceedances: usize,
    pub clusters: usize,
    pub mean_cluster_size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TsSummary {
    pub steps: usize,
    pub burn_in: usize,
    pub clipped_steps: usize,
    pub clipping_rate: f64,
    pub xi_min: f64,
    pub xi_max: f64,
    pub mean_xi: f64,
    pub cond_mean_xi_top_decile: f64,
    pub cluster: ClusterSummary,
    pub warnings: Vec<String>,
}

fn empirical_quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

/// Runs declustering: clusters are maximal runs of consecutive values above
/// the empirical `u`-quantile.
pub fn cluster_summary(series: &[f64], u: f64) -> Result<ClusterSummary> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidProbability(u));
    }
    if series.is_empty() {
        return Err(Error::InvalidConfig("empty series".into()));
    }
    if series.iter().any(|v| v.is_nan()) {
        return Err(Error::NanInput("cluster_summary"));
    }
    let threshold = empirical_quantile(series, u);
    let mut exceedances = 0;
    let mut clusters = 0;
    let mut inside = false;
    for &x in series {
        let above = x > threshold;
        exceedances += above as usize;
        clusters += (above && !inside) as usize;
        inside = above;
    }
    let mean_cluster_size = if clusters == 0 { 0.0 } else { exceedances as f64 / clusters as f64 };
    Ok(ClusterSummary { quantile: u, threshold, exceedances, clusters, mean_cluster_size })
}

/// Runs the recursion for `cfg.length` steps.
pub fn simulate(cfg: &TsConfig) -> Result<TsSeries> {
    cfg.validate()?;
    let family = cfg.error_family();
    let lag = cfg.max_lag();
    // history holds log x̃, most recent last
    let mut history: Vec<f64> = (0..lag).rev().map(|j| cfg.start.get(j).copied().unwrap_or(1.0).ln()).collect();
    let mut raw_history: Vec<f64> = (0..lag).rev().map(|j| cfg.start.get(j).copied().unwrap_or(1.0)).collect();
    let mut rng = mc::stream_rng(cfg.seed, 0);
    let mut rows = Vec::with_capacity(cfg.length);
    let mut clipped_steps = 0;
    let predictor = |beta: &[f64], hist: &[f64]| -> f64 {
        beta.iter().enumerate().map(|(j, b)| b * hist[hist.len() - 1 - j]).sum()
    };
    for t in 0..cfg.length {
        let n = raw_history.len();
        if raw_history[n - lag..].iter().any(|&x| x <= cfg.x_min) {
            clipped_steps += 1;
        }
        let eta = [predictor(&cfg.beta_sigma, &history), predictor(&cfg.beta_xi, &history)];
        let sigma = cfg.scale_link.apply(eta[0]);
        let xi = cfg.shape_link.apply(eta[1]);
        let theta = family
            .theta(&[sigma, xi])
            .map_err(|e| Error::AtStep { t, theta: eta.to_vec(), source: Box::new(e) })?;
        let x = family.draw(&theta, &mut rng);
        rows.push(TsRow { t, sigma, xi, x });
        if lag > 0 {
            history.push(x.max(cfg.x_min).ln());
            raw_history.push(x);
            if history.len() > 4 * lag + 64 {
                history.drain(..history.len() - lag);
                raw_history.drain(..raw_history.len() - lag);
            }
        }
    }
    let burn_in = cfg.burn_in().min(rows.len().saturating_sub(1));
    Ok(TsSeries { rows, clipped_steps, burn_in })
}

/// `simulate` followed by `summary`, with the optional negative-shape warning.
pub fn simulate_with_summary(cfg: &TsConfig, cluster_quantile: f64) -> Result<(TsSeries, TsSummary)> {
    let series = simulate(cfg)?;
    let mut summary = series.summary(cluster_quantile)?;
    if cfg.warn_negative_xi && summary.xi_min < 0.0 {
        summary.warnings.push(format!(
            "negative shape reached (min xi = {:.4}); the support is bounded above and clipping may dominate",
            summary.xi_min
        ));
    }
    if summary.clipping_rate > 0.0 {
        summary.warnings.push(format!("past values clipped at x_min in {:.2}% of steps", 100.0 * summary.clipping_rate));
    }
    Ok((series, summary))
}
