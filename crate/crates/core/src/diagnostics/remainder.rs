//! The L₂ expansion remainder ‖√dQ_{ϑ+h} − √dQ_ϑ (1 + ½ Λᵀh)‖².

use serde_json::json;

use super::{points, CheckConfig, ConditionId, ConditionReport, Series, Verdict};
use crate::error::{Error, Result};
use crate::family::{ErrorFamily, Theta, DISCRETE_TAIL};
use crate::quadrature::QuantileGrid;
use crate::scalar::Scalar;

/// Squared L₂ remainder at step `h`.
///
/// On the support of Q_ϑ the integrand is (√(q_{ϑ+h}/q_ϑ) − 1 − ½Λᵀh)²
/// integrated against Q_ϑ; the mass Q_{ϑ+h} places outside that support is
/// added separately (it matters for the moving endpoints of GEVD/GPD).
pub fn l2_remainder<S: Scalar>(
    family: &ErrorFamily<S>,
    theta: &Theta<S>,
    h: &[S],
    grid: &QuantileGrid<S>,
) -> Result<S> {
    if h.len() != family.dim() {
        return Err(Error::DimensionMismatch { what: "remainder step", expected: family.dim(), got: h.len() });
    }
    let shifted: Vec<S> = theta.as_slice().iter().zip(h).map(|(&a, &b)| a + b).collect();
    let theta_h = family.theta(&shifted)?;
    if h.iter().all(|v| *v == S::zero()) {
        return Ok(S::zero());
    }
    let mut err = None;
    let mut integrand = |y: S| -> S {
        let run = || -> Result<S> {
            let lp0 = family.log_density(theta, y)?;
            let lph = family.log_density(&theta_h, y)?;
            let s = family.score(theta, y)?;
            let lin: S = s.iter().zip(h).map(|(&a, &b)| a * b).sum();
            let root = if lph == S::neg_infinity() { S::zero() } else { ((lph - lp0) * S::half()).exp() };
            let r = root - S::one() - S::half() * lin;
            Ok(r * r)
        };
        run().unwrap_or_else(|e| {
            err.get_or_insert(e);
            S::zero()
        })
    };
    let inside = if family.is_discrete() {
        family.support_points(theta, S::lit(DISCRETE_TAIL * 1e-3)).into_iter().map(|(y, p)| p * integrand(y)).sum()
    } else {
        grid.integrate(|u, uc| integrand(family.quantile_split(theta, u, uc)))
    };
    if let Some(e) = err {
        return Err(e);
    }
    Ok(inside + outside_mass(family, theta, &theta_h))
}

// Q_{ϑ+h} mass beyond the support endpoints of Q_ϑ.
fn outside_mass<S: Scalar>(family: &ErrorFamily<S>, theta: &Theta<S>, theta_h: &Theta<S>) -> S {
    match family {
        ErrorFamily::Gevd | ErrorFamily::Gpd => {
            let (sigma, xi) = (theta[0], theta[1]);
            if xi == S::zero() {
                return S::zero();
            }
            let endpoint = -sigma / xi;
            if xi < S::zero() {
                S::one() - family.cdf(theta_h, endpoint)
            } else if matches!(family, ErrorFamily::Gevd) {
                family.cdf(theta_h, endpoint)
            } else {
                S::zero()
            }
        }
        _ => S::zero(),
    }
}

/// Unit coordinate directions plus the normalised diagonal.
pub fn remainder_directions<S: Scalar>(k: usize) -> Vec<Vec<S>> {
    let mut dirs: Vec<Vec<S>> = (0..k).map(|i| (0..k).map(|j| if i == j { S::one() } else { S::zero() }).collect()).collect();
    if k > 1 {
        let c = S::from_usize_lossy(k).sqrt().recip();
        dirs.push(vec![c; k]);
    }
    dirs
}

/// remainder(h)/|h|² along the h-ladder in k + 1 directions. Passes when
/// every halving shrinks the normalised remainder by at least
/// `cfg.rate_factor` in every direction.
pub fn check_remainder_rate<S: Scalar>(
    family: &ErrorFamily<S>,
    theta: &Theta<S>,
    cfg: &CheckConfig,
) -> Result<ConditionReport> {
    cfg.validate()?;
    let mut report = ConditionReport::new(ConditionId::Remainder, cfg, None);
    report.tolerance = cfg.rate_factor;
    let grid = QuantileGrid::new(cfg.quad_nodes, cfg.quad_grading);
    let mut worst: Option<(f64, Vec<f64>)> = None;
    let mut all_pass = true;
    for (d, dir) in remainder_directions::<S>(family.dim()).into_iter().enumerate() {
        let mut normalized = Vec::with_capacity(cfg.h_ladder.len());
        for &hs in &cfg.h_ladder {
            let h: Vec<S> = dir.iter().map(|&v| v * S::lit(hs)).collect();
            match l2_remainder(family, theta, &h, &grid) {
                Ok(r) => normalized.push(r.to_f64_lossy() / (hs * hs)),
                Err(e @ (Error::Domain { .. } | Error::OutsideSupport { .. })) => {
                    report.verdict = Verdict::Inconclusive;
                    report.diagnostics = format!("ladder leaves the domain at |h| = {hs} in direction {d}: {e}");
                    report.details = json!({ "direction": d, "h": hs });
                    return Ok(report);
                }
                Err(e) => return Err(e),
            }
        }
        let ratios: Vec<f64> = normalized.windows(2).map(|w| w[0] / w[1]).collect();
        let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let ok = normalized.iter().all(|v| v.is_finite()) && min_ratio >= cfg.rate_factor;
        all_pass &= ok;
        report.series.push(Series {
            label: format!("direction {d}"),
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            trajectory: points(&cfg.h_ladder, &normalized),
        });
        if worst.as_ref().is_none_or(|(m, _)| min_ratio < *m || min_ratio.is_nan()) {
            worst = Some((min_ratio, normalized));
        }
    }
    let (min_ratio, traj) = worst.expect("at least one direction");
    report.trajectory = points(&cfg.h_ladder, &traj);
    report.verdict = if all_pass { Verdict::Pass } else { Verdict::Fail };
    report.diagnostics = format!(
        "remainder(h)/|h|^2 over {} directions; smallest decrease factor per halving {:.4} (required {})",
        report.series.len(),
        min_ratio,
        cfg.rate_factor
    );
    report.details = json!({ "family": family.name(), "theta": theta.to_f64(), "min_ratio": min_ratio });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step_gives_zero() {
        let g = QuantileGrid::<f64>::new(1000, 2);
        let f = ErrorFamily::<f64>::Gpd;
        let t = f.theta(&[1.0, 0.3]).unwrap();
        assert_eq!(l2_remainder(&f, &t, &[0.0, 0.0], &g).unwrap(), 0.0);
    }

    #[test]
    fn poisson_remainder_matches_direct_sum() {
        let f = ErrorFamily::<f64>::Poisson;
        let t = f.theta(&[2.0]).unwrap();
        let g = QuantileGrid::<f64>::default();
        let h = 0.1;
        let mut direct = 0.0;
        for y in 0..=200 {
            let y = y as f64;
            let p0 = f.log_density(&t, y).unwrap().exp();
            let ph = f.log_density(&f.theta(&[2.1]).unwrap(), y).unwrap().exp();
            let lam = y / 2.0 - 1.0;
            direct += (ph.sqrt() - p0.sqrt() * (1.0 + 0.5 * lam * h)).powi(2);
        }
        let r = l2_remainder(&f, &t, &[h], &g).unwrap();
        assert!(r > 0.0);
        assert!((r - direct).abs() < 1e-9 * direct, "{r} vs {direct}");
        let r2 = l2_remainder(&f, &t, &[h / 2.0], &g).unwrap();
        assert!(r2 / (h / 2.0).powi(2) < r / (h * h));
    }

    #[test]
    fn remainder_positive_for_nonzero_steps() {
        let g = QuantileGrid::<f64>::default();
        let cases: Vec<(ErrorFamily<f64>, Vec<f64>)> = vec![
            (ErrorFamily::Gevd, vec![1.0, 0.2]),
            (ErrorFamily::Gpd, vec![1.0, 0.3]),
            (ErrorFamily::Poisson, vec![2.0]),
            (ErrorFamily::Binomial { m: 5 }, vec![0.3]),
            (ErrorFamily::GaussLoc { sd: 1.0 }, vec![0.0]),
        ];
        for (f, v) in cases {
            let t = f.theta(&v).unwrap();
            for dir in remainder_directions::<f64>(f.dim()) {
                let h: Vec<f64> = dir.iter().map(|x| 0.1 * x).collect();
                assert!(l2_remainder(&f, &t, &h, &g).unwrap() > 0.0, "{f}");
            }
        }
    }

    #[test]
    fn rate_check_gauss_and_poisson_pass() {
        let cfg = CheckConfig::default();
        let f = ErrorFamily::<f64>::GaussLoc { sd: 1.0 };
        let r = check_remainder_rate(&f, &f.theta(&[0.0]).unwrap(), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.diagnostics);
        let f = ErrorFamily::<f64>::Poisson;
        let r = check_remainder_rate(&f, &f.theta(&[2.0]).unwrap(), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.diagnostics);
        assert_eq!(r.series.len(), 1);
    }

    #[test]
    fn rate_check_leaving_domain_is_inconclusive() {
        let f = ErrorFamily::<f64>::Binomial { m: 3 };
        // p + 0.1 leaves (0, 1)
        let r = check_remainder_rate(&f, &f.theta(&[0.95]).unwrap(), &CheckConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(r.diagnostics.contains("|h| = 0.1"));
    }
}
