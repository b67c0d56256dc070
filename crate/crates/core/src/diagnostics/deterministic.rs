//! Checks for a deterministic carrier: hat matrix and Feller statistic,
//! Lindeberg sums and continuity of the information along the n-ladder.
//!
//! With C_i = diag(ℓ̇_i) (I^Q_i)^{1/2} the per-observation factor is
//! L_i = ρ_π(C_i, x_i) (p×k), so that Σ L_i L_iᵀ = I_n and
//! H = [L_iᵀ I_n⁻¹ L_j] is the (nk)×(nk) projector of rank p.

use rayon::prelude::*;
use serde_json::json;

use super::{is_witness, judge_decay, points, sphere_directions, CheckConfig, ConditionId, ConditionReport, Series, Verdict};
use crate::error::{Error, Result};
use crate::glm::{with_witness, Design, DesignScheme, GlmSpec};
use crate::linalg::Matrix;
use crate::quadrature::QuantileGrid;
use crate::scalar::Scalar;

fn l_factors<S: Scalar>(spec: &GlmSpec<S>, beta: &[S], design: &Design<S>) -> Result<Vec<Matrix<S>>> {
    spec.check_design(design)?;
    design
        .rows()
        .iter()
        .map(|x| {
            let (theta, jac) = spec.theta_and_jacobian(beta, x).map_err(|e| with_witness(e, x))?;
            let root = spec.family().fisher_info(&theta).map_err(|e| with_witness(e, x))?.sqrt_psd()?;
            let c = Matrix::from_fn(spec.k(), spec.k(), |i, j| jac[i] * root[(i, j)]);
            spec.partition().rho_pi_matrix(&c, x)
        })
        .collect()
}

fn inverse_info<S: Scalar>(l: &[Matrix<S>], p: usize) -> Result<Matrix<S>> {
    let mut info = Matrix::zeros(p, p);
    for li in l {
        info.add_scaled(&li.matmul(&li.transpose())?, S::one())?;
    }
    info.symmetrize();
    let cond = info.condition_number().unwrap_or(f64::INFINITY);
    if !(cond < 1e14) {
        return Err(Error::SingularMatrix { context: "total Fisher information", condition: cond });
    }
    info.inverse()
}

/// Hat matrix H with k×k blocks H_{ij} = L_iᵀ I_n⁻¹ L_j.
pub fn hat_matrix<S: Scalar>(spec: &GlmSpec<S>, beta: &[S], design: &Design<S>) -> Result<Matrix<S>> {
    let l = l_factors(spec, beta, design)?;
    let inv = inverse_info(&l, spec.p())?;
    let k = spec.k();
    let n = l.len();
    let right: Vec<Matrix<S>> = l.iter().map(|lj| inv.matmul(lj)).collect::<Result<_>>()?;
    let mut h = Matrix::zeros(n * k, n * k);
    for i in 0..n {
        let lit = l[i].transpose();
        for j in 0..n {
            let block = lit.matmul(&right[j])?;
            for a in 0..k {
                for b in 0..k {
                    h[(i * k + a, j * k + b)] = block[(a, b)];
                }
            }
        }
    }
    Ok(h)
}

/// max diagonal entry of the hat matrix, computed without forming it.
pub fn feller_statistic<S: Scalar>(spec: &GlmSpec<S>, beta: &[S], design: &Design<S>) -> Result<S> {
    let l = l_factors(spec, beta, design)?;
    let inv = inverse_info(&l, spec.p())?;
    let mut best = S::neg_infinity();
    for li in &l {
        let block = li.transpose().matmul(&inv.matmul(li)?)?;
        for d in block.diagonal() {
            best = best.max(d);
        }
    }
    Ok(best)
}

fn t_n_vectors<S: Scalar>(spec: &GlmSpec<S>, beta: &[S], design: &Design<S>, b: f64, t_grid: usize) -> Result<Vec<Vec<S>>> {
    let info = spec.total_fisher_design(beta, design)?;
    let cond = info.condition_number().unwrap_or(f64::INFINITY);
    if !(cond < 1e14) {
        return Err(Error::SingularMatrix { context: "total Fisher information", condition: cond });
    }
    let root = info.inv_sqrt_pd()?;
    sphere_directions(spec.p(), t_grid, b)
        .into_iter()
        .map(|t| root.matvec(&t.iter().map(|&v| S::lit(v)).collect::<Vec<_>>()))
        .collect()
}

/// Lindeberg sums Σ_i E[U_i² 1{|U_i| > ε}], U_i = t_nᵀ Λ^P_i, maximised over
/// the t-directions, one value per ε in `epsilons`.
pub fn lindeberg_sums<S: Scalar>(
    spec: &GlmSpec<S>,
    beta: &[S],
    design: &Design<S>,
    epsilons: &[f64],
    cfg: &CheckConfig,
) -> Result<Vec<f64>> {
    let t_n = t_n_vectors(spec, beta, design, cfg.b, cfg.t_grid)?;
    let grid = QuantileGrid::<S>::new(cfg.quad_nodes, cfg.quad_grading);
    let nt = t_n.len();
    let ne = epsilons.len();
    let per_obs: Vec<Result<Vec<f64>>> = design
        .rows()
        .par_iter()
        .map(|x| {
            let (theta, jac) = spec.theta_and_jacobian(beta, x).map_err(|e| with_witness(e, x))?;
            // w_j = ℓ̇ ∘ T_π(t_n^(j), x), so U = w_jᵀ Λ^Q(y)
            let w: Vec<Vec<f64>> = t_n
                .iter()
                .map(|t| {
                    let v = spec.partition().t_pi(t, x)?;
                    Ok(v.iter().zip(&jac).map(|(a, d)| (*a * *d).to_f64_lossy()).collect())
                })
                .collect::<Result<_>>()?;
            let mut acc = vec![0.0; nt * ne];
            for (wt, y) in spec.family().expectation_nodes(&theta, &grid) {
                let s = spec.family().score(&theta, y).map_err(|e| with_witness(e, x))?;
                let wt = wt.to_f64_lossy();
                for (j, wj) in w.iter().enumerate() {
                    let u: f64 = wj.iter().zip(s.iter()).map(|(a, b)| a * b.to_f64_lossy()).sum();
                    let u2 = u * u;
                    for (e, &eps) in epsilons.iter().enumerate() {
                        if u.abs() > eps {
                            acc[j * ne + e] += wt * u2;
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![0.0; nt * ne];
    for r in per_obs {
        for (a, b) in total.iter_mut().zip(r?) {
            *a += b;
        }
    }
    Ok((0..ne).map(|e| (0..nt).map(|j| total[j * ne + e]).fold(f64::NEG_INFINITY, f64::max)).collect())
}

/// sup_t |Σ_i t_nᵀ (I^P_{n,i}(β + t_n) − I^P_{n,i}(β)) t_n|.
pub fn info_cont_det_sum<S: Scalar>(spec: &GlmSpec<S>, beta: &[S], design: &Design<S>, cfg: &CheckConfig) -> Result<f64> {
    let t_n = t_n_vectors(spec, beta, design, cfg.b, cfg.t_grid)?;
    let mut best = 0.0f64;
    for t in &t_n {
        let moved: Vec<S> = beta.iter().zip(t).map(|(&a, &b)| a + b).collect();
        let mut sum = S::zero();
        for x in design.rows() {
            let v = spec.partition().t_pi(t, x)?;
            let c1 = spec.reduced_info(&moved, x).map_err(|e| with_witness(e, x))?;
            let c0 = spec.reduced_info(beta, x).map_err(|e| with_witness(e, x))?;
            sum = sum + c1.sub(&c0)?.bilinear(&v, &v)?;
        }
        best = best.max(sum.to_f64_lossy().abs());
    }
    Ok(best)
}

fn ladder_report<S: Scalar>(
    id: ConditionId,
    spec: &GlmSpec<S>,
    scheme: &DesignScheme,
    cfg: &CheckConfig,
    mut stat: impl FnMut(&Design<S>) -> Result<f64>,
) -> Result<ConditionReport> {
    cfg.validate()?;
    let mut report = ConditionReport::new(id, cfg, None);
    report.tolerance = cfg.decay_ratio;
    let mut values = Vec::with_capacity(cfg.n_ladder.len());
    let controls: Vec<f64> = cfg.n_ladder.iter().map(|&n| n as f64).collect();
    for &n in &cfg.n_ladder {
        let design = scheme.design::<S>(n)?;
        spec.check_design(&design)?;
        match stat(&design) {
            Ok(v) => values.push(v),
            Err(e @ Error::SingularMatrix { .. }) => {
                report.trajectory = points(&controls, &values);
                return Ok(report.failed(format!("n = {n}: {e}")));
            }
            Err(e) if is_witness(&e) => {
                report.trajectory = points(&controls, &values);
                return Ok(report.failed(format!("n = {n}: {e}")));
            }
            Err(e) => return Err(e),
        }
    }
    report.trajectory = points(&controls, &values);
    report.verdict = judge_decay(&values, cfg);
    report.diagnostics = trajectory_text(&values, cfg);
    Ok(report)
}

fn trajectory_text(values: &[f64], cfg: &CheckConfig) -> String {
    let first = values.first().copied().unwrap_or(f64::NAN);
    let last = values.last().copied().unwrap_or(f64::NAN);
    format!(
        "statistic {first:.4e} -> {last:.4e} over the n-ladder (pass: non-increasing and last <= {} x first; flat: last >= {} x first)",
        cfg.decay_ratio, cfg.flat_ratio
    )
}

/// Feller condition: max_i H_ii → 0 along the n-ladder.
pub fn check_feller<S: Scalar>(
    spec: &GlmSpec<S>,
    beta: &[S],
    scheme: &DesignScheme,
    cfg: &CheckConfig,
) -> Result<ConditionReport> {
    ladder_report(ConditionId::Feller, spec, scheme, cfg, |d| Ok(feller_statistic(spec, beta, d)?.to_f64_lossy()))
}

/// Information continuity for the deterministic carrier along the n-ladder.
pub fn check_info_cont_det<S: Scalar>(
    spec: &GlmSpec<S>,
    beta: &[S],
    scheme: &DesignScheme,
    cfg: &CheckConfig,
) -> Result<ConditionReport> {
    ladder_report(ConditionId::InfoContDet, spec, scheme, cfg, |d| info_cont_det_sum(spec, beta, d, cfg))
}

/// Lindeberg condition along the n-ladder for every ε of the sweep. Fails
/// as soon as one ε gives a flat trajectory, since the condition must hold
/// for all ε.
pub fn check_lindeberg<S: Scalar>(
    spec: &GlmSpec<S>,
    beta: &[S],
    scheme: &DesignScheme,
    cfg: &CheckConfig,
) -> Result<ConditionReport> {
    cfg.validate()?;
    let eps = cfg.epsilons();
    let mut report = ConditionReport::new(ConditionId::Lindeberg, cfg, None);
    report.tolerance = cfg.decay_ratio;
    let controls: Vec<f64> = cfg.n_ladder.iter().map(|&n| n as f64).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_ladder.len());
    for &n in &cfg.n_ladder {
        let design = scheme.design::<S>(n)?;
        match lindeberg_sums(spec, beta, &design, &eps, cfg) {
            Ok(v) => rows.push(v),
            Err(e) if matches!(e, Error::SingularMatrix { .. }) || is_witness(&e) => {
                return Ok(report.failed(format!("n = {n}: {e}")));
            }
            Err(e) => return Err(e),
        }
    }
    let mut verdicts = Vec::with_capacity(eps.len());
    for (e, &epsilon) in eps.iter().enumerate() {
        let values: Vec<f64> = rows.iter().map(|r| r[e]).collect();
        let verdict = judge_decay(&values, cfg);
        verdicts.push(verdict);
        if epsilon == cfg.epsilon {
            report.trajectory = points(&controls, &values);
            report.diagnostics = format!("eps = {epsilon}: {}", trajectory_text(&values, cfg));
        }
        report.series.push(Series { label: format!("epsilon = {epsilon}"), verdict, trajectory: points(&controls, &values) });
    }
    report.verdict = if verdicts.contains(&Verdict::Fail) {
        Verdict::Fail
    } else if verdicts.iter().all(|v| *v == Verdict::Pass) {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    report.details = json!({ "epsilons": eps });
    Ok(report)
}
