//! GLM assembly: error family + componentwise link + partition.
//!
//! With θ = T_π(x, β) and ϑ = ℓ(θ), the score is
//! Λ^P_β(x, y) = ρ_π(ℓ̇(θ) Λ^Q_ϑ(y), x) and the per-x information is
//! M_π(ℓ̇ I^Q_ϑ ℓ̇, x, x).

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{ErrorFamily, ParamVec, Theta};
use crate::linalg::Matrix;
use crate::link::LinkFunction;
use crate::mc;
use crate::partition::PartitionSpec;
use crate::scalar::Scalar;
use crate::special::norm_quantile;

#[derive(Clone, Debug, PartialEq)]
pub struct GlmSpec<S> {
    family: ErrorFamily<S>,
    link: LinkFunction,
    partition: PartitionSpec,
}

impl<S: Scalar> GlmSpec<S> {
    pub fn new(family: ErrorFamily<S>, link: LinkFunction, partition: PartitionSpec) -> Result<Self> {
        let k = family.dim();
        if link.k() != k {
            return Err(Error::DimensionMismatch { what: "link coordinates", expected: k, got: link.k() });
        }
        if partition.k() != k {
            return Err(Error::DimensionMismatch { what: "partition blocks", expected: k, got: partition.k() });
        }
        Ok(Self { family, link, partition })
    }

    pub fn family(&self) -> &ErrorFamily<S> {
        &self.family
    }

    pub fn link(&self) -> &LinkFunction {
        &self.link
    }

    pub fn partition(&self) -> &PartitionSpec {
        &self.partition
    }

    /// Regression dimension p.
    pub fn p(&self) -> usize {
        self.partition.p()
    }

    /// Parameter dimension k.
    pub fn k(&self) -> usize {
        self.family.dim()
    }

    fn check_beta(&self, beta: &[S]) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::DimensionMismatch { what: "beta", expected: self.p(), got: beta.len() });
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig("beta entries must be finite".into()));
        }
        Ok(())
    }

    /// θ = T_π(x, β).
    pub fn linear_predictor(&self, beta: &[S], x: &[S]) -> Result<Vec<S>> {
        self.check_beta(beta)?;
        self.partition.t_pi(x, beta)
    }

    /// ϑ = ℓ(θ) and the diagonal of ℓ̇(θ).
    pub fn theta_and_jacobian(&self, beta: &[S], x: &[S]) -> Result<(Theta<S>, Vec<S>)> {
        let lp = self.linear_predictor(beta, x)?;
        let theta = self.link.apply_theta(&self.family, &lp)?;
        Ok((theta, self.link.jacobian_diag(&lp)?))
    }

    pub fn theta_at(&self, beta: &[S], x: &[S]) -> Result<Theta<S>> {
        Ok(self.theta_and_jacobian(beta, x)?.0)
    }

    /// log p_β(y | x).
    pub fn log_density(&self, beta: &[S], x: &[S], y: S) -> Result<S> {
        let theta = self.theta_at(beta, x)?;
        self.family.log_density(&theta, y)
    }

    /// Λ^P_β(x, y), a p-vector.
    pub fn glm_score(&self, beta: &[S], x: &[S], y: S) -> Result<Vec<S>> {
        let (theta, jac) = self.theta_and_jacobian(beta, x)?;
        let s = self.family.score(&theta, y)?;
        let w: Vec<S> = jac.iter().zip(s.iter()).map(|(&d, &v)| d * v).collect();
        self.partition.rho_pi(&w, x)
    }

    /// ℓ̇ I^Q_ϑ ℓ̇, the k×k information in θ.
    pub fn reduced_info(&self, beta: &[S], x: &[S]) -> Result<Matrix<S>> {
        let (theta, jac) = self.theta_and_jacobian(beta, x)?;
        let info = self.family.fisher_info(&theta)?;
        Ok(Matrix::from_fn(self.k(), self.k(), |i, j| jac[i] * info[(i, j)] * jac[j]))
    }

    /// I^P_ϑ(x) = M_π(ℓ̇ I^Q ℓ̇, x, x).
    pub fn per_x_fisher(&self, beta: &[S], x: &[S]) -> Result<Matrix<S>> {
        let c = self.reduced_info(beta, x)?;
        self.partition.m_pi(&c, x, x)
    }

    /// Frobenius norm of I^P_ϑ(x) without forming it or touching the heap;
    /// this sits in the innermost loop of the stochastic checks.
    pub fn per_x_fisher_norm(&self, beta: &[S], x: &[S]) -> Result<S> {
        self.check_beta(beta)?;
        if x.len() != self.p() {
            return Err(Error::DimensionMismatch { what: "regressor", expected: self.p(), got: x.len() });
        }
        let k = self.k();
        let mut values = ParamVec::<S>::new();
        let mut jac = ParamVec::<S>::new();
        let mut sq = ParamVec::<S>::new();
        for (h, link) in self.link.links().iter().enumerate() {
            let r = self.partition.block(h);
            let eta: S = x[r.clone()].iter().zip(&beta[r.clone()]).map(|(&a, &b)| a * b).sum();
            values.push(link.apply(eta));
            jac.push(link.deriv(eta));
            sq.push(x[r].iter().map(|&v| v * v).sum());
        }
        let theta = self.family.theta(&values)?;
        let f = self.family.fisher_packed(&theta)?;
        let entry = |i: usize, j: usize| f[i + j] * jac[i] * jac[j];
        let mut acc = S::zero();
        for i in 0..k {
            for j in 0..k {
                let c = entry(i, j);
                acc = acc + c * c * sq[i] * sq[j];
            }
        }
        Ok(acc.sqrt())
    }

    /// Σᵢ I^P(xᵢ) over a deterministic design.
    pub fn total_fisher_design(&self, beta: &[S], design: &Design<S>) -> Result<Matrix<S>> {
        self.check_design(design)?;
        let mut total = Matrix::zeros(self.p(), self.p());
        for x in design.rows() {
            total.add_scaled(&self.per_x_fisher(beta, x)?, S::one())?;
        }
        total.symmetrize();
        Ok(total)
    }

    /// Monte Carlo estimate of ∫ I^P(x) K(dx) with its standard-error matrix.
    /// The first draw that leaves the family domain aborts the run and is
    /// reported together with its x.
    pub fn total_fisher_mc(&self, beta: &[S], sampler: &RegressorSampler, n: usize, seed: u64) -> Result<McMatrix> {
        self.check_beta(beta)?;
        sampler.check_dim(self.p())?;
        if n < 2 {
            return Err(Error::InvalidConfig("need at least two draws".into()));
        }
        let p = self.p();
        let parts = mc::map_chunks(n, seed, |rng, range| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut s1 = vec![0.0; p * p];
            let mut s2 = vec![0.0; p * p];
            for _ in range {
                let x: Vec<S> = sampler.draw(rng);
                let m = self.per_x_fisher(beta, &x).map_err(|e| with_witness(e, &x))?;
                for (i, v) in m.as_slice().iter().enumerate() {
                    let v = v.to_f64_lossy();
                    s1[i] += v;
                    s2[i] += v * v;
                }
            }
            Ok((s1, s2))
        });
        let mut s1 = vec![0.0; p * p];
        let mut s2 = vec![0.0; p * p];
        for part in parts {
            let (a, b) = part?;
            for i in 0..p * p {
                s1[i] += a[i];
                s2[i] += b[i];
            }
        }
        let nf = n as f64;
        let mean = Matrix::from_fn(p, p, |i, j| s1[i * p + j] / nf);
        let se = Matrix::from_fn(p, p, |i, j| {
            let m = s1[i * p + j] / nf;
            ((s2[i * p + j] / nf - m * m).max(0.0) / (nf - 1.0)).sqrt()
        });
        Ok(McMatrix { n, mean, se })
    }

    pub fn check_design(&self, design: &Design<S>) -> Result<()> {
        if design.p() != self.p() {
            return Err(Error::DimensionMismatch { what: "design columns", expected: self.p(), got: design.p() });
        }
        Ok(())
    }
}

/// Attaches the offending regressor to an evaluation error.
pub(crate) fn with_witness<S: Scalar>(e: Error, x: &[S]) -> Error {
    Error::AtRegressor { x: x.iter().map(|v| v.to_f64_lossy()).collect(), source: Box::new(e) }
}

#[derive(Clone, Debug, Serialize)]
pub struct McMatrix {
    pub n: usize,
    pub mean: Matrix<f64>,
    pub se: Matrix<f64>,
}

/// Rows x_{n,1}, …, x_{n,n} of a deterministic carrier.
#[derive(Clone, Debug, PartialEq)]
pub struct Design<S> {
    p: usize,
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> Design<S> {
    pub fn new(rows: Vec<Vec<S>>) -> Result<Self> {
        let p = rows.first().map(Vec::len).ok_or_else(|| Error::InvalidConfig("design has no rows".into()))?;
        if p == 0 {
            return Err(Error::InvalidConfig("design rows are empty".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch { what: "design row", expected: p, got: bad.len() });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("design entries must be finite".into()));
        }
        Ok(Self { p, rows })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }
}

/// How the n-th design of a triangular array is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum DesignScheme {
    /// Every coordinate of every row equals 1/n.
    InverseN { p: usize },
    /// Row i is `rows[i mod rows.len()]`.
    Cyclic { rows: Vec<Vec<f64>> },
    /// Cyclic rows with the first row multiplied by n, so its leverage tends to 1.
    Spike { rows: Vec<Vec<f64>> },
}

impl DesignScheme {
    pub fn p(&self) -> usize {
        match self {
            DesignScheme::InverseN { p } => *p,
            DesignScheme::Cyclic { rows } | DesignScheme::Spike { rows } => rows.first().map_or(0, Vec::len),
        }
    }

    pub fn design<S: Scalar>(&self, n: usize) -> Result<Design<S>> {
        if n == 0 {
            return Err(Error::InvalidConfig("design size must be ≥ 1".into()));
        }
        let rows = match self {
            DesignScheme::InverseN { p } => vec![vec![S::from_usize_lossy(n).recip(); *p]; n],
            DesignScheme::Cyclic { rows } | DesignScheme::Spike { rows } => {
                if rows.is_empty() {
                    return Err(Error::InvalidConfig("design scheme has no base rows".into()));
                }
                let mut out: Vec<Vec<S>> =
                    (0..n).map(|i| rows[i % rows.len()].iter().map(|&v| S::lit(v)).collect()).collect();
                if matches!(self, DesignScheme::Spike { .. }) {
                    let f = S::from_usize_lossy(n);
                    for v in &mut out[0] {
                        *v = *v * f;
                    }
                }
                out
            }
        };
        Design::new(rows)
    }
}

/// Law of the past observation behind a `LogPast` regressor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PastFamily {
    Gevd,
    Gpd,
}

/// One coordinate of a regressor draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordSampler {
    Const { value: f64 },
    StdNormal,
    LogNormal { mu: f64, sd: f64 },
    Cauchy,
    /// log(max(X, floor)) with X from a GEVD/GPD(σ, ξ); the regressor the
    /// time-series model feeds into its links.
    LogPast { family: PastFamily, sigma: f64, xi: f64, floor: f64 },
}

impl CoordSampler {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            CoordSampler::Const { value } => value.is_finite(),
            CoordSampler::StdNormal | CoordSampler::Cauchy => true,
            CoordSampler::LogNormal { mu, sd } => mu.is_finite() && *sd > 0.0 && sd.is_finite(),
            CoordSampler::LogPast { family, sigma, xi, floor } => {
                let fam: ErrorFamily<f64> = match family {
                    PastFamily::Gevd => ErrorFamily::Gevd,
                    PastFamily::Gpd => ErrorFamily::Gpd,
                };
                fam.theta(&[*sigma, *xi])?;
                *floor > 0.0 && floor.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid regressor sampler {self:?}")))
        }
    }

    fn draw(&self, rng: &mut impl RngCore) -> f64 {
        match self {
            CoordSampler::Const { value } => *value,
            CoordSampler::StdNormal => std_normal(rng),
            CoordSampler::LogNormal { mu, sd } => (mu + sd * std_normal(rng)).exp(),
            CoordSampler::Cauchy => (std::f64::consts::PI * (mc::open_uniform(rng) - 0.5)).tan(),
            CoordSampler::LogPast { family, sigma, xi, floor } => {
                let fam: ErrorFamily<f64> = match family {
                    PastFamily::Gevd => ErrorFamily::Gevd,
                    PastFamily::Gpd => ErrorFamily::Gpd,
                };
                let theta = fam.theta(&[*sigma, *xi]).expect("validated on construction");
                fam.draw(&theta, rng).max(*floor).ln()
            }
        }
    }
}

fn std_normal(rng: &mut impl RngCore) -> f64 {
    let u = mc::open_uniform(rng);
    if u < 0.5 {
        norm_quantile(u)
    } else {
        -norm_quantile(1.0 - u)
    }
}

/// The regressor law K of a stochastic carrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "snake_case")]
pub enum RegressorSampler {
    /// Uniform over a fixed list of points (an empirical K).
    Points { points: Vec<Vec<f64>> },
    /// Independent coordinates.
    Coords { coords: Vec<CoordSampler> },
}

impl RegressorSampler {
    pub fn points(points: Vec<Vec<f64>>) -> Result<Self> {
        let s = RegressorSampler::Points { points };
        s.validate()?;
        Ok(s)
    }

    pub fn coords(coords: Vec<CoordSampler>) -> Result<Self> {
        let s = RegressorSampler::Coords { coords };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RegressorSampler::Points { points } => {
                let p = points.first().map(Vec::len).unwrap_or(0);
                if p == 0 || points.iter().any(|r| r.len() != p || r.iter().any(|v| !v.is_finite())) {
                    return Err(Error::InvalidConfig("point sampler needs equal-length finite rows".into()));
                }
                Ok(())
            }
            RegressorSampler::Coords { coords } => {
                if coords.is_empty() {
                    return Err(Error::InvalidConfig("coordinate sampler needs at least one coordinate".into()));
                }
                coords.iter().try_for_each(CoordSampler::validate)
            }
        }
    }

    pub fn p(&self) -> usize {
        match self {
            RegressorSampler::Points { points } => points.first().map_or(0, Vec::len),
            RegressorSampler::Coords { coords } => coords.len(),
        }
    }

    pub fn check_dim(&self, p: usize) -> Result<()> {
        if self.p() == p {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { what: "regressor sampler", expected: p, got: self.p() })
        }
    }

    pub fn draw<S: Scalar>(&self, rng: &mut impl RngCore) -> Vec<S> {
        match self {
            RegressorSampler::Points { points } => {
                let i = ((mc::open_uniform(rng) * points.len() as f64) as usize).min(points.len() - 1);
                points[i].iter().map(|&v| S::lit(v)).collect()
            }
            RegressorSampler::Coords { coords } => coords.iter().map(|c| S::lit(c.draw(rng))).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(fam: ErrorFamily<f64>, link: &str, blocks: Vec<usize>) -> GlmSpec<f64> {
        GlmSpec::new(fam, link.parse().unwrap(), PartitionSpec::new(blocks).unwrap()).unwrap()
    }

    #[test]
    fn construction_checks_dimensions() {
        let r = GlmSpec::new(ErrorFamily::<f64>::Gpd, "log".parse().unwrap(), PartitionSpec::single(2).unwrap());
        assert!(r.is_err());
        let r = GlmSpec::new(ErrorFamily::<f64>::Gpd, "log,shape_gpd".parse().unwrap(), PartitionSpec::single(2).unwrap());
        assert!(r.is_err());
    }

    #[test]
    fn linear_predictor_examples() {
        let s = spec(ErrorFamily::Gpd, "log,shape_gpd", vec![2, 1]);
        assert_eq!(s.linear_predictor(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap(), vec![14.0, 18.0]);
        assert_eq!(s.linear_predictor(&[0.0; 3], &[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let s = spec(ErrorFamily::Gpd, "log,shape_gpd", vec![1, 1]);
        assert_eq!(s.linear_predictor(&[2.0, 3.0], &[5.0, 7.0]).unwrap(), vec![10.0, 21.0]);
    }

    #[test]
    fn score_examples() {
        let s = spec(ErrorFamily::Poisson, "log", vec![1]);
        assert_eq!(s.glm_score(&[0.0], &[1.0], 2.0).unwrap(), vec![1.0]);
        let s = spec(ErrorFamily::Binomial { m: 1 }, "logit", vec![1]);
        assert_eq!(s.glm_score(&[0.0], &[1.0], 1.0).unwrap(), vec![0.5]);
        let s = spec(ErrorFamily::Poisson, "log", vec![2]);
        assert_eq!(s.glm_score(&[0.0, 0.0], &[1.0, 3.0], 1.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn per_x_fisher_examples() {
        let s = spec(ErrorFamily::Poisson, "log", vec![2]);
        let m = s.per_x_fisher(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(m.to_rows(), vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!((s.per_x_fisher_norm(&[0.0, 0.0], &[1.0, 2.0]).unwrap() - m.frobenius()).abs() < 1e-14);
        let s = spec(ErrorFamily::Binomial { m: 1 }, "logit", vec![1]);
        assert_eq!(s.per_x_fisher(&[0.0], &[1.0]).unwrap()[(0, 0)], 0.25);
        assert_eq!(s.per_x_fisher(&[0.3], &[0.0]).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn total_fisher_design_examples() {
        let s = spec(ErrorFamily::Poisson, "log", vec![1]);
        let d = Design::new(vec![vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(s.total_fisher_design(&[0.0], &d).unwrap()[(0, 0)], 2.0);
        let s = spec(ErrorFamily::Poisson, "identity", vec![1]);
        for n in [10, 50, 400] {
            let d = DesignScheme::InverseN { p: 1 }.design::<f64>(n).unwrap();
            assert!((s.total_fisher_design(&[1.0], &d).unwrap()[(0, 0)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn total_fisher_mc_linear_regression() {
        let s = spec(ErrorFamily::GaussLoc { sd: 1.0 }, "identity", vec![1]);
        let k = RegressorSampler::coords(vec![CoordSampler::StdNormal]).unwrap();
        let r = s.total_fisher_mc(&[0.7], &k, 200_000, 3).unwrap();
        assert!((r.mean[(0, 0)] - 1.0).abs() < 3.0 * r.se[(0, 0)]);
        assert_eq!(r.mean, s.total_fisher_mc(&[0.7], &k, 200_000, 3).unwrap().mean);
    }

    #[test]
    fn mc_domain_error_reports_witness() {
        // identity link on a Poisson rate goes negative for negative x
        let s = spec(ErrorFamily::Poisson, "identity", vec![1]);
        let k = RegressorSampler::coords(vec![CoordSampler::StdNormal]).unwrap();
        match s.total_fisher_mc(&[1.0], &k, 10_000, 1) {
            Err(Error::AtRegressor { x, source }) => {
                assert!(x[0] < 0.0);
                assert!(matches!(*source, Error::Domain { .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn design_schemes() {
        let spike = DesignScheme::Spike { rows: vec![vec![1.0], vec![-1.0]] };
        let d = spike.design::<f64>(4).unwrap();
        assert_eq!(d.rows(), &[vec![4.0], vec![-1.0], vec![1.0], vec![-1.0]]);
        assert_eq!(DesignScheme::InverseN { p: 2 }.design::<f64>(4).unwrap().rows()[3], vec![0.25, 0.25]);
        assert!(Design::<f64>::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn samplers() {
        let k = RegressorSampler::coords(vec![
            CoordSampler::Const { value: 1.0 },
            CoordSampler::LogPast { family: PastFamily::Gevd, sigma: 1.0, xi: 0.3, floor: 1.0 },
        ])
        .unwrap();
        let mut rng = mc::stream_rng(1, 0);
        for _ in 0..1000 {
            let x: Vec<f64> = k.draw(&mut rng);
            assert_eq!(x[0], 1.0);
            assert!(x[1] >= 0.0);
        }
        assert!(RegressorSampler::coords(vec![CoordSampler::LogNormal { mu: 0.0, sd: -1.0 }]).is_err());
        assert!(RegressorSampler::points(vec![vec![1.0], vec![]]).is_err());
        let pts = RegressorSampler::points(vec![vec![1.0], vec![2.0]]).unwrap();
        let x: Vec<f64> = pts.draw(&mut rng);
        assert!(x[0] == 1.0 || x[0] == 2.0);
    }
}
