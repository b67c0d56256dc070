//! Maximum likelihood by Fisher scoring in β-space.
//!
//! β ← β + step · I_n(β)⁻¹ Σ_i Λ^P_β(x_i, y_i), with the step halved while
//! the log-likelihood would decrease or some ϑ_i leaves the family domain.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::ErrorFamily;
use crate::glm::GlmSpec;
use crate::linalg::Matrix;
use crate::link::ScalarLink;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitConfig {
    pub tol_score: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { tol_score: 1e-8, max_iter: 200, max_halvings: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub score_norm: f64,
    pub step_norm: f64,
    pub halvings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
    pub fisher: Matrix<f64>,
    pub trace: Vec<IterationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl FitResult {
    /// √diag(I_n(β̂)⁻¹).
    pub fn standard_errors(&self) -> Result<Vec<f64>> {
        standard_errors(&self.fisher)
    }
}

pub fn standard_errors<S: Scalar>(fisher: &Matrix<S>) -> Result<Vec<S>> {
    fisher.cholesky().map_err(|_| Error::SingularMatrix {
        context: "Fisher information at the estimate",
        condition: fisher.condition_number().unwrap_or(f64::INFINITY),
    })?;
    Ok(fisher.inverse()?.diagonal().into_iter().map(|v| v.sqrt()).collect())
}

fn check_data<S: Scalar>(spec: &GlmSpec<S>, xs: &[Vec<S>], ys: &[S]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidConfig("no observations".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { what: "responses", expected: xs.len(), got: ys.len() });
    }
    if let Some(x) = xs.iter().find(|x| x.len() != spec.p()) {
        return Err(Error::DimensionMismatch { what: "regressor row", expected: spec.p(), got: x.len() });
    }
    Ok(())
}

/// Log-likelihood, or the index of the first observation that is infeasible.
fn loglik<S: Scalar>(spec: &GlmSpec<S>, beta: &[S], xs: &[Vec<S>], ys: &[S]) -> std::result::Result<f64, (usize, String)> {
    let mut total = 0.0;
    for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
        match spec.log_density(beta, x, y) {
            Ok(l) if l.is_finite() => total += l.to_f64_lossy(),
            Ok(_) => return Err((i, format!("y = {y} outside the support"))),
            Err(e) => return Err((i, e.to_string())),
        }
    }
    Ok(total)
}

fn score_and_fisher<S: Scalar>(spec: &GlmSpec<S>, beta: &[S], xs: &[Vec<S>], ys: &[S]) -> Result<(Vec<S>, Matrix<S>)> {
    let p = spec.p();
    let mut g = vec![S::zero(); p];
    let mut info = Matrix::zeros(p, p);
    for (x, &y) in xs.iter().zip(ys) {
        for (a, b) in g.iter_mut().zip(spec.glm_score(beta, x, y)?) {
            *a = *a + b;
        }
        info.add_scaled(&spec.per_x_fisher(beta, x)?, S::one())?;
    }
    info.symmetrize();
    Ok((g, info))
}

fn norm<S: Scalar>(v: &[S]) -> f64 {
    v.iter().map(|x| x.to_f64_lossy().powi(2)).sum::<f64>().sqrt()
}

/// Fisher scoring from `beta0`.
///
/// Returns `Ok` with `converged = false` when the iteration budget runs out
/// or the information at the end is not positive definite, and an error
/// when no step of the line search is feasible.
pub fn fisher_scoring_fit<S: Scalar>(
    spec: &GlmSpec<S>,
    xs: &[Vec<S>],
    ys: &[S],
    beta0: &[S],
    cfg: &FitConfig,
) -> Result<FitResult> {
    check_data(spec, xs, ys)?;
    if beta0.len() != spec.p() {
        return Err(Error::DimensionMismatch { what: "start", expected: spec.p(), got: beta0.len() });
    }
    let mut beta = beta0.to_vec();
    let mut ll = loglik(spec, &beta, xs, ys).map_err(|(i, why)| {
        Error::InvalidConfig(format!("start value infeasible at observation {i}: {why}"))
    })?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let (mut g, mut info) = score_and_fisher(spec, &beta, xs, ys)?;
    loop {
        let gnorm = norm(&g);
        if gnorm <= cfg.tol_score {
            converged = true;
            trace.push(record(&beta, ll, gnorm, 0.0, 0));
            break;
        }
        if iterations == cfg.max_iter {
            trace.push(record(&beta, ll, gnorm, 0.0, 0));
            break;
        }
        let delta = info.solve_spd(&g).map_err(|_| Error::SingularMatrix {
            context: "Fisher scoring step",
            condition: info.condition_number().unwrap_or(f64::INFINITY),
        })?;
        let mut step = S::one();
        let mut accepted = None;
        let mut last_issue = String::new();
        for halvings in 0..=cfg.max_halvings {
            let cand: Vec<S> = beta.iter().zip(&delta).map(|(&b, &d)| b + step * d).collect();
            match loglik(spec, &cand, xs, ys) {
                // ulp-level slack so that rounding noise at the optimum is not
                // mistaken for a decrease
                Ok(lc) if lc >= ll - 8.0 * f64::EPSILON * ll.abs().max(1.0) => {
                    accepted = Some((cand, lc, halvings));
                    break;
                }
                Ok(lc) => last_issue = format!("log-likelihood decreases to {lc}"),
                Err((i, why)) => last_issue = format!("observation {i}: {why}"),
            }
            step = step * S::half();
        }
        let Some((cand, lc, halvings)) = accepted else {
            if gnorm <= cfg.tol_score.sqrt() * 1e-2 {
                // no representable improvement left; the score is already tiny
                trace.push(record(&beta, ll, gnorm, 0.0, cfg.max_halvings));
                break;
            }
            return Err(Error::NoConvergence(format!(
                "no admissible step after {} halvings at iteration {iterations} ({last_issue})",
                cfg.max_halvings
            )));
        };
        let step_norm = norm(&cand.iter().zip(&beta).map(|(&a, &b)| a - b).collect::<Vec<_>>());
        trace.push(record(&beta, ll, gnorm, step_norm, halvings));
        beta = cand;
        ll = lc;
        iterations += 1;
        (g, info) = score_and_fisher(spec, &beta, xs, ys)?;
    }
    let fisher = info.to_f64();
    let mut message = None;
    let se = match standard_errors(&fisher) {
        Ok(se) => se,
        Err(e) => {
            converged = false;
            message = Some(e.to_string());
            vec![f64::NAN; spec.p()]
        }
    };
    if !converged && message.is_none() {
        message = Some(format!("score norm {:.3e} above {:.1e} after {} iterations", norm(&g), cfg.tol_score, iterations));
    }
    Ok(FitResult {
        beta: beta.iter().map(|b| b.to_f64_lossy()).collect(),
        se,
        loglik: ll,
        iterations,
        converged,
        score_norm: norm(&g),
        fisher,
        trace,
        message,
    })
}

fn record<S: Scalar>(beta: &[S], loglik: f64, score_norm: f64, step_norm: f64, halvings: usize) -> IterationRecord {
    IterationRecord { beta: beta.iter().map(|b| b.to_f64_lossy()).collect(), loglik, score_norm, step_norm, halvings }
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Generalised inverse of an increasing scalar link by bracketing and bisection.
pub fn invert_link(link: ScalarLink, target: f64) -> Option<f64> {
    let f = |u: f64| link.apply(u) - target;
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..200 {
        if f(lo) <= 0.0 {
            break;
        }
        lo *= 2.0;
    }
    for _ in 0..200 {
        if f(hi) >= 0.0 {
            break;
        }
        hi *= 2.0;
    }
    if !(f(lo) <= 0.0 && f(hi) >= 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// β₀ = 0 except the scale intercept of GEVD/GPD models: the first
/// coordinate of the scale block that equals 1 on every row is set so that
/// ℓ_σ gives a quantile-based scale estimate, enlarged if needed so that all
/// responses lie in the support at the starting shape.
pub fn default_start<S: Scalar>(spec: &GlmSpec<S>, xs: &[Vec<S>], ys: &[S]) -> Result<Vec<S>> {
    check_data(spec, xs, ys)?;
    let mut beta = vec![S::zero(); spec.p()];
    let (is_gevd, is_gpd) = match spec.family() {
        ErrorFamily::Gevd => (true, false),
        ErrorFamily::Gpd => (false, true),
        _ => return Ok(beta),
    };
    let block = spec.partition().block(0);
    let Some(icpt) = block.clone().find(|&j| xs.iter().all(|x| x[j] == S::one())) else {
        return Ok(beta);
    };
    let mut y: Vec<f64> = ys.iter().map(|v| v.to_f64_lossy()).collect();
    y.sort_by(f64::total_cmp);
    let mut sigma = if is_gpd {
        // exponential median σ log 2
        quantile_sorted(&y, 0.5) / std::f64::consts::LN_2
    } else {
        // Gumbel interquartile range 1.5725 σ
        (quantile_sorted(&y, 0.75) - quantile_sorted(&y, 0.25)) / 1.5725
    };
    if !(sigma > 0.0) || !sigma.is_finite() {
        sigma = 1.0;
    }
    // shape at β = 0
    let xi = spec.link().links()[1].apply(0.0f64);
    let (ymin, ymax) = (y[0], y[y.len() - 1]);
    if xi > 0.0 && is_gevd && ymin < 0.0 {
        sigma = sigma.max(1.1 * xi * -ymin);
    }
    if xi < 0.0 && ymax > 0.0 {
        sigma = sigma.max(1.1 * -xi * ymax);
    }
    if let Some(b) = invert_link(spec.link().links()[0], sigma) {
        beta[icpt] = S::lit(b);
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::PartitionSpec;

    #[test]
    fn one_observation_poisson_identity() {
        let spec =
            GlmSpec::new(ErrorFamily::<f64>::Poisson, "identity".parse().unwrap(), PartitionSpec::single(1).unwrap())
                .unwrap();
        let fit = fisher_scoring_fit(&spec, &[vec![1.0]], &[3.0], &[1.0], &FitConfig::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.beta[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_fit_is_ols_after_one_step() {
        let spec = GlmSpec::new(
            ErrorFamily::<f64>::GaussLoc { sd: 1.0 },
            "identity".parse().unwrap(),
            PartitionSpec::single(2).unwrap(),
        )
        .unwrap();
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64 / 7.0]).collect();
        let ys: Vec<f64> = (0..20).map(|i| 0.3 + 0.8 * i as f64 / 7.0 + ((i * 37 % 11) as f64 - 5.0) / 10.0).collect();
        let fit = fisher_scoring_fit(&spec, &xs, &ys, &[5.0, -3.0], &FitConfig::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.trace[0].halvings, 0);
        assert!(fit.trace[1].score_norm < 1e-8);
        // normal equations
        let xtx = Matrix::from_fn(2, 2, |a, b| xs.iter().map(|x| x[a] * x[b]).sum());
        let xty: Vec<f64> = (0..2).map(|a| xs.iter().zip(&ys).map(|(x, y)| x[a] * y).sum()).collect();
        let ols = xtx.solve_spd(&xty).unwrap();
        for (b, o) in fit.beta.iter().zip(&ols) {
            assert!((b - o).abs() < 1e-8);
        }
    }

    #[test]
    fn standard_errors_closed_form() {
        let f = Matrix::diag(&[4.0, 100.0]);
        assert_eq!(standard_errors(&f).unwrap(), vec![0.5, 0.1]);
        assert!(standard_errors(&Matrix::diag(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn infeasible_start_is_reported() {
        let spec =
            GlmSpec::new(ErrorFamily::<f64>::Poisson, "identity".parse().unwrap(), PartitionSpec::single(1).unwrap())
                .unwrap();
        assert!(fisher_scoring_fit(&spec, &[vec![1.0]], &[3.0], &[-1.0], &FitConfig::default()).is_err());
        assert!(fisher_scoring_fit(&spec, &[], &[], &[1.0], &FitConfig::default()).is_err());
    }

    #[test]
    fn link_inverse() {
        for l in crate::link::ALL_LINKS {
            let v = l.apply(0.7f64);
            let u = invert_link(l, v).unwrap();
            assert!((u - 0.7).abs() < 1e-9, "{l}");
        }
        assert!(invert_link(ScalarLink::Log, -1.0).is_none());
    }

    #[test]
    fn gpd_start_is_feasible_and_fit_converges() {
        let spec = GlmSpec::new(
            ErrorFamily::<f64>::Gpd,
            "log,shape_gpd".parse().unwrap(),
            PartitionSpec::singletons(2).unwrap(),
        )
        .unwrap();
        let fam = ErrorFamily::<f64>::Gpd;
        let ys = fam.sample(&fam.theta(&[3.0, 0.2]).unwrap(), 4000, 11).unwrap();
        let xs = vec![vec![1.0, 1.0]; ys.len()];
        let b0 = default_start(&spec, &xs, &ys).unwrap();
        assert!((b0[0] - 3.0f64.ln()).abs() < 0.5);
        let fit = fisher_scoring_fit(&spec, &xs, &ys, &b0, &FitConfig::default()).unwrap();
        assert!(fit.converged, "{:?}", fit.message);
        assert!((fit.beta[0].exp() - 3.0).abs() < 4.0 * 3.0 * fit.se[0]);
        assert!(fit.trace.windows(2).all(|w| w[1].loglik >= w[0].loglik - 1e-9));
    }
}
