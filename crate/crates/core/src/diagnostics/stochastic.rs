//! Conditions (ii) and (iii) for a stochastic carrier x ~ K.

use serde_json::json;

use super::{is_witness, points, sphere_directions, CheckConfig, ConditionId, ConditionReport, Verdict};
use crate::error::Result;
use crate::glm::{with_witness, GlmSpec, RegressorSampler};
use crate::mc;
use crate::scalar::Scalar;

const ASSUMPTION: &str =
    "regularity (H.1)-(H.3) of the error family holds P-a.e.; assumed per family, not tested numerically";

/// Hill estimate of the tail index from the top ⌊√n⌋ order statistics.
/// Returns 0 when the tail is not strictly positive (bounded integrands).
pub fn hill_tail_index(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 16 {
        return f64::NAN;
    }
    let k = ((n as f64).sqrt() as usize).max(10).min(n - 1);
    let mut v = values.to_vec();
    // v[..=k] holds the k + 1 largest values, v[k] the (k+1)-th
    v.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let threshold = v[k];
    if !(threshold > 0.0) {
        return 0.0;
    }
    v[..k].iter().map(|x| (x / threshold).ln()).sum::<f64>() / k as f64
}

/// Condition (ii): ∫ |I^P_ϑ(x)| K(dx) < ∞.
///
/// Running Monte Carlo means at N, 2N and 4N draws share a common prefix.
/// The verdict combines their stabilisation with a Hill estimate of the
/// integrand's tail index: a mean is finite for indices below 1.
pub fn check_cond_ii<S: Scalar>(
    spec: &GlmSpec<S>,
    beta: &[S],
    sampler: &RegressorSampler,
    cfg: &CheckConfig,
) -> Result<ConditionReport> {
    cfg.validate()?;
    sampler.check_dim(spec.p())?;
    spec.linear_predictor(beta, &vec![S::zero(); spec.p()])?;
    let mut report = ConditionReport::new(ConditionId::CondIi, cfg, Some(cfg.seed));
    report.tolerance = cfg.tol_stab;
    report.assumptions.push(ASSUMPTION.into());
    let total = 4 * cfg.n_draws;
    let chunks = mc::map_chunks(total, cfg.seed, |rng, range| -> Result<Vec<f64>> {
        range
            .map(|_| {
                let x: Vec<S> = sampler.draw(rng);
                spec.per_x_fisher_norm(beta, &x).map(|v| v.to_f64_lossy()).map_err(|e| with_witness(e, &x))
            })
            .collect()
    });
    let mut values = Vec::with_capacity(total);
    for c in chunks {
        match c {
            Ok(v) => values.extend(v),
            Err(e) if is_witness(&e) => return Ok(report.failed(format!("integrand undefined: {e}"))),
            Err(e) => return Err(e),
        }
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        let mut rng_witness = None;
        // regenerate the offending draw for the report
        let chunk = i / mc::CHUNK_SIZE;
        let mut rng = mc::stream_rng(cfg.seed, chunk as u64);
        for _ in chunk * mc::CHUNK_SIZE..=i {
            rng_witness = Some(sampler.draw::<f64>(&mut rng));
        }
        report.details = json!({ "draw": i, "x": rng_witness });
        report.trajectory = points(&[total as f64], &[f64::INFINITY]);
        return Ok(report.failed(format!("integrand overflows at draw {i}: |I(x)| is not finite")));
    }
    let n = cfg.n_draws;
    let prefix_mean = |m: usize| values[..m].iter().sum::<f64>() / m as f64;
    let means = [prefix_mean(n), prefix_mean(2 * n), prefix_mean(4 * n)];
    let rel = |a: f64, b: f64| if b == 0.0 { (a - b).abs() } else { ((a - b) / b).abs() };
    let changes = [rel(means[0], means[1]), rel(means[1], means[2])];
    let stable = changes.iter().all(|c| *c < cfg.tol_stab);
    let gamma = hill_tail_index(&values);
    report.trajectory = points(&[n as f64, 2.0 * n as f64, 4.0 * n as f64], &means);
    report.details = json!({ "hill_tail_index": gamma, "relative_changes": changes, "draws": total });
    report.verdict = if gamma >= cfg.tail_fail {
        Verdict::Fail
    } else if stable && gamma < cfg.tail_pass {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    report.diagnostics = format!(
        "running means {:.6e}, {:.6e}, {:.6e}; relative changes {:.2e}, {:.2e} (tol {}); Hill tail index {:.3} (finite mean below {}, divergence from {})",
        means[0], means[1], means[2], changes[0], changes[1], cfg.tol_stab, gamma, cfg.tail_pass, cfg.tail_fail
    );
    Ok(report)
}

struct Cells {
    shifted: Vec<Vec<Vec<f64>>>,
}

fn build_cells<S: Scalar>(beta: &[S], s_values: &[f64], dirs: &[Vec<f64>]) -> Cells {
    let shifted = s_values
        .iter()
        .map(|&s| dirs.iter().map(|t| beta.iter().zip(t).map(|(&b, &tv)| b.to_f64_lossy() + s * tv).collect()).collect())
        .collect();
    Cells { shifted }
}

// Σ over draws of | |I(β + s t, x)| − |I(β, x)| | for every (s, t) cell.
fn cell_sums<S: Scalar>(
    spec: &GlmSpec<S>,
    beta: &[S],
    sampler: &RegressorSampler,
    cells: &Cells,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let ns = cells.shifted.len();
    let nt = cells.shifted.first().map_or(0, Vec::len);
    let shifted: Vec<Vec<Vec<S>>> = cells
        .shifted
        .iter()
        .map(|row| row.iter().map(|b| b.iter().map(|&v| S::lit(v)).collect()).collect())
        .collect();
    let parts = mc::map_chunks(n, seed, |rng, range| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; ns * nt];
        for _ in range {
            let x: Vec<S> = sampler.draw(rng);
            let base = spec.per_x_fisher_norm(beta, &x).map_err(|e| with_witness(e, &x))?.to_f64_lossy();
            for (i, row) in shifted.iter().enumerate() {
                for (j, b) in row.iter().enumerate() {
                    let v = spec.per_x_fisher_norm(b, &x).map_err(|e| with_witness(e, &x))?.to_f64_lossy();
                    acc[i * nt + j] += (v - base).abs();
                }
            }
        }
        Ok(acc)
    });
    let mut total = vec![0.0; ns * nt];
    for p in parts {
        for (a, b) in total.iter_mut().zip(p?) {
            *a += b;
        }
    }
    Ok(total)
}

/// Condition (iii): lim_{s→0} sup_{|t|≤b} ∫ | |I^P_{ϑ_st}(x)| − |I^P_{ϑ₀}(x)| | K(dx) = 0,
/// with ϑ_st = ℓ(T_π(x, β + s t)).
///
/// The sup runs over `cfg.t_grid` directions on the sphere |t| = b; every
/// (s, t) cell integrates over the same x-draws. A final s = 0 row is
/// appended as a sanity anchor.
pub fn check_cond_iii<S: Scalar>(
    spec: &GlmSpec<S>,
    beta: &[S],
    sampler: &RegressorSampler,
    cfg: &CheckConfig,
) -> Result<ConditionReport> {
    cfg.validate()?;
    sampler.check_dim(spec.p())?;
    spec.linear_predictor(beta, &vec![S::zero(); spec.p()])?;
    let mut report = ConditionReport::new(ConditionId::CondIii, cfg, Some(cfg.seed));
    report.tolerance = cfg.tol_cont;
    report.assumptions.push(ASSUMPTION.into());
    report.assumptions.push(format!(
        "sup over |t| <= b approximated on {} directions of the sphere |t| = b",
        cfg.t_grid
    ));
    let dirs = sphere_directions(spec.p(), cfg.t_grid, cfg.b);
    let mut s_values = cfg.s_ladder.clone();
    s_values.push(0.0);
    let cells = build_cells(beta, &s_values, &dirs);
    let sums = match cell_sums(spec, beta, sampler, &cells, cfg.n_draws, cfg.seed) {
        Ok(s) => s,
        Err(e) if is_witness(&e) => return Ok(report.failed(format!("integrand undefined: {e}"))),
        Err(e) => return Err(e),
    };
    let nt = dirs.len();
    let nf = cfg.n_draws as f64;
    let mut sup = Vec::with_capacity(s_values.len());
    let mut argmax = Vec::with_capacity(s_values.len());
    for i in 0..s_values.len() {
        let row = &sums[i * nt..(i + 1) * nt];
        let (j, v) = row.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
        sup.push(v / nf);
        argmax.push(j);
    }
    report.trajectory = points(&s_values, &sup);
    report.details = json!({
        "argmax_direction": argmax,
        "directions": dirs,
    });
    let ladder = &sup[..cfg.s_ladder.len()];
    let first = ladder[0];
    let last = *ladder.last().unwrap();
    if sup.iter().any(|v| !v.is_finite()) {
        return Ok(report.failed("non-finite cell integral".into()));
    }
    let monotone = ladder.windows(2).all(|w| w[1] <= w[0] + cfg.abs_tol);
    let small = first <= cfg.abs_tol || last <= cfg.tol_cont * first;
    report.verdict = if monotone && small {
        Verdict::Pass
    } else if last >= cfg.flat_ratio * first {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    report.diagnostics = format!(
        "sup_t integral from {:.4e} at s={} to {:.4e} at s={} (ratio {:.3e}, tol {}); monotone: {}",
        first,
        cfg.s_ladder[0],
        last,
        cfg.s_ladder.last().unwrap(),
        if first > 0.0 { last / first } else { 0.0 },
        cfg.tol_cont,
        monotone
    );
    Ok(report)
}

/// Recomputes one (s, t) cell of [`check_cond_iii`] from the seed in `cfg`.
pub fn cond_iii_cell<S: Scalar>(
    spec: &GlmSpec<S>,
    beta: &[S],
    sampler: &RegressorSampler,
    cfg: &CheckConfig,
    s: f64,
    t: &[f64],
) -> Result<f64> {
    let cells = build_cells(beta, &[s], &[t.to_vec()]);
    Ok(cell_sums(spec, beta, sampler, &cells, cfg.n_draws, cfg.seed)?[0] / cfg.n_draws as f64)
}
