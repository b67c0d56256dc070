//! Error-distribution catalogue: log-density, score, closed-form Fisher
//! information, cdf, quantile and sampling.
//!
//! GEVD and GPD carry (σ, ξ) with location/threshold fixed at 0. Poisson (λ),
//! Binomial (p, known m) and Gaussian location (μ, known sd) are the
//! one-parameter references.

use std::fmt;

use rand::RngCore;
use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mc;
use crate::quadrature::QuantileGrid;
use crate::scalar::Scalar;
use crate::special::{digamma, gamma, ln_factorial, ln_gamma, norm_cdf, norm_quantile, trigamma, EULER_GAMMA};

/// Half-width of the excluded band around ξ = −1/2 (both GEVD and GPD).
pub const XI_GUARD: f64 = 1e-4;
/// Half-width of the excluded band around ξ = 0 for the GEVD Fisher
/// information. The closed form loses digits like ξ⁻⁴·ε near the pole;
/// at 1e-3 the relative error is still below 5e-4.
pub const GEVD_ZERO_GUARD: f64 = 1e-3;
/// Tail mass left out when enumerating discrete supports.
pub const DISCRETE_TAIL: f64 = 1e-12;

pub type ParamVec<S> = SmallVec<[S; 2]>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorFamily<S> {
    /// GEVD(0, σ, ξ), ξ ∈ (−1/2, 0) ∪ (0, ∞)
    Gevd,
    /// GPD(0, σ, ξ), ξ > −1/2
    Gpd,
    Poisson,
    Binomial { m: u32 },
    /// N(μ, sd²) with known sd
    GaussLoc { sd: S },
}

/// Parameter ϑ, validated against the family domain on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Theta<S>(ParamVec<S>);

impl<S: Scalar> Theta<S> {
    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.to_f64_lossy()).collect()
    }
}

impl<S> std::ops::Index<usize> for Theta<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.0[i]
    }
}

impl<S: Scalar> fmt::Display for ErrorFamily<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorFamily::Binomial { m } => write!(f, "binomial(m={m})"),
            ErrorFamily::GaussLoc { sd } => write!(f, "gauss_loc(sd={sd})"),
            other => f.write_str(other.name()),
        }
    }
}

// log1p(a)/ξ with the ξ → 0 value z
#[inline]
fn log_ratio<S: Scalar>(xi: S, z: S) -> S {
    if xi == S::zero() {
        z
    } else {
        (xi * z).ln_1p() / xi
    }
}

// (log1p(a) − a/(1+a)) / a², series near 0
#[inline]
fn phi<S: Scalar>(a: S) -> S {
    if a.abs() < S::lit(1e-2) {
        // Σ (−1)ⁿ (n+1)/(n+2) aⁿ
        let mut acc = S::zero();
        let mut pow = S::one();
        for n in 0..10 {
            let c = S::lit(((n + 1) as f64) / ((n + 2) as f64));
            acc = if n % 2 == 0 { acc + c * pow } else { acc - c * pow };
            pow = pow * a;
        }
        acc
    } else {
        (a.ln_1p() - a / (S::one() + a)) / (a * a)
    }
}

impl<S: Scalar> ErrorFamily<S> {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorFamily::Gevd => "gevd",
            ErrorFamily::Gpd => "gpd",
            ErrorFamily::Poisson => "poisson",
            ErrorFamily::Binomial { .. } => "binomial",
            ErrorFamily::GaussLoc { .. } => "gauss_loc",
        }
    }

    /// Parameter dimension k.
    pub fn dim(&self) -> usize {
        match self {
            ErrorFamily::Gevd | ErrorFamily::Gpd => 2,
            _ => 1,
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ErrorFamily::Gevd | ErrorFamily::Gpd => &["sigma", "xi"],
            ErrorFamily::Poisson => &["lambda"],
            ErrorFamily::Binomial { .. } => &["p"],
            ErrorFamily::GaussLoc { .. } => &["mu"],
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ErrorFamily::Poisson | ErrorFamily::Binomial { .. })
    }

    /// Signed distance of `values` to the domain boundary; positive inside.
    pub fn domain_distance(&self, values: &[S]) -> f64 {
        let v: SmallVec<[f64; 2]> = values.iter().map(|x| x.to_f64_lossy()).collect();
        if v.len() != self.dim() || v.iter().any(|x| !x.is_finite()) {
            return f64::NEG_INFINITY;
        }
        match self {
            ErrorFamily::Gevd => v[0].min(v[1] + 0.5).min(v[1].abs()),
            ErrorFamily::Gpd => v[0].min(v[1] + 0.5),
            ErrorFamily::Poisson => v[0],
            ErrorFamily::Binomial { .. } => v[0].min(1.0 - v[0]),
            ErrorFamily::GaussLoc { .. } => f64::INFINITY,
        }
    }

    pub fn theta(&self, values: &[S]) -> Result<Theta<S>> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch { what: "theta", expected: self.dim(), got: values.len() });
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::NanInput("theta"));
        }
        if let ErrorFamily::Binomial { m: 0 } = self {
            return Err(Error::InvalidConfig("binomial needs m ≥ 1".into()));
        }
        if let ErrorFamily::GaussLoc { sd } = self {
            if !(*sd > S::zero()) || !sd.is_finite() {
                return Err(Error::InvalidConfig(format!("gauss_loc needs sd > 0, got {sd}")));
            }
        }
        let distance = self.domain_distance(values);
        if !(distance > 0.0) {
            let detail = self
                .param_names()
                .iter()
                .zip(values)
                .map(|(n, v)| format!("{n}={v}"))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::Domain { family: self.name(), detail, distance });
        }
        Ok(Theta(values.iter().copied().collect()))
    }

    fn check_theta(&self, theta: &Theta<S>) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::DimensionMismatch { what: "theta", expected: self.dim(), got: theta.dim() });
        }
        Ok(())
    }

    fn is_count(y: S) -> bool {
        y >= S::zero() && y == y.floor() && y.is_finite()
    }

    /// Whether the score is defined at y (support interior).
    pub fn in_support_interior(&self, theta: &Theta<S>, y: S) -> bool {
        if !y.is_finite() {
            return false;
        }
        match self {
            ErrorFamily::Gevd => S::one() + theta[1] * y / theta[0] > S::zero(),
            ErrorFamily::Gpd => y > S::zero() && S::one() + theta[1] * y / theta[0] > S::zero(),
            ErrorFamily::Poisson => Self::is_count(y),
            ErrorFamily::Binomial { m } => Self::is_count(y) && y <= S::from_u32(*m).unwrap(),
            ErrorFamily::GaussLoc { .. } => true,
        }
    }

    /// Log of the density w.r.t. Lebesgue (continuous) or counting measure
    /// (discrete); −∞ outside the support.
    pub fn log_density(&self, theta: &Theta<S>, y: S) -> Result<S> {
        self.check_theta(theta)?;
        if y.is_nan() {
            return Err(Error::NanInput("log_density observation"));
        }
        let ninf = S::neg_infinity();
        Ok(match self {
            ErrorFamily::Gevd | ErrorFamily::Gpd => {
                let (sigma, xi) = (theta[0], theta[1]);
                let z = y / sigma;
                let a = xi * z;
                if !(S::one() + a > S::zero()) || !y.is_finite() {
                    return Ok(ninf);
                }
                if matches!(self, ErrorFamily::Gpd) && y < S::zero() {
                    return Ok(ninf);
                }
                let l = log_ratio(xi, z);
                let base = -sigma.ln() - l - a.ln_1p();
                if matches!(self, ErrorFamily::Gevd) {
                    base - (-l).exp()
                } else {
                    base
                }
            }
            ErrorFamily::Poisson => {
                if !Self::is_count(y) {
                    return Ok(ninf);
                }
                let lambda = theta[0];
                y * lambda.ln() - lambda - ln_factorial(y)
            }
            ErrorFamily::Binomial { m } => {
                let ms = S::from_u32(*m).unwrap();
                if !Self::is_count(y) || y > ms {
                    return Ok(ninf);
                }
                let p = theta[0];
                ln_gamma(ms + S::one()) - ln_gamma(y + S::one()) - ln_gamma(ms - y + S::one())
                    + y * p.ln()
                    + (ms - y) * (-p).ln_1p()
            }
            ErrorFamily::GaussLoc { sd } => {
                if !y.is_finite() {
                    return Ok(ninf);
                }
                let r = (y - theta[0]) / *sd;
                -S::half() * r * r - sd.ln() - S::lit(0.5 * (2.0 * std::f64::consts::PI).ln())
            }
        })
    }

    /// Score Λ^Q_ϑ(y) = ∇_ϑ log density.
    pub fn score(&self, theta: &Theta<S>, y: S) -> Result<ParamVec<S>> {
        self.check_theta(theta)?;
        if y.is_nan() {
            return Err(Error::NanInput("score observation"));
        }
        if !self.in_support_interior(theta, y) {
            return Err(Error::OutsideSupport { family: self.name(), y: y.to_f64_lossy() });
        }
        let one = S::one();
        Ok(match self {
            ErrorFamily::Gevd | ErrorFamily::Gpd => {
                let (sigma, xi) = (theta[0], theta[1]);
                let z = y / sigma;
                let a = xi * z;
                let t = one + a;
                let mut ds = -one + (one + xi) * z / t;
                let mut dx = z * z * phi(a) - z / t;
                if matches!(self, ErrorFamily::Gevd) {
                    let e = (-log_ratio(xi, z)).exp(); // t^(−1/ξ)
                    ds = ds - z * e / t;
                    dx = dx - z * z * phi(a) * e;
                }
                smallvec::smallvec![ds / sigma, dx]
            }
            ErrorFamily::Poisson => smallvec::smallvec![y / theta[0] - one],
            ErrorFamily::Binomial { m } => {
                let p = theta[0];
                let ms = S::from_u32(*m).unwrap();
                smallvec::smallvec![(y - ms * p) / (p * (one - p))]
            }
            ErrorFamily::GaussLoc { sd } => smallvec::smallvec![(y - theta[0]) / (*sd * *sd)],
        })
    }

    /// Closed-form Fisher information I^Q_ϑ (k×k).
    ///
    /// GEVD: ξ⁻² D B D with D⁻¹ = diag(σ, ξ) and the Γ/ψ expressions for B.
    /// The derivative symbols Γ′(ξ), Γ′(1) and Γ″(1) + Γ′(1)² of the usual
    /// presentation are ψ(ξ), ψ(1) and ψ′(1) + ψ(1)²; the literal Γ-derivative
    /// reading does not reproduce E[ΛΛᵀ].
    pub fn fisher_info(&self, theta: &Theta<S>) -> Result<Matrix<S>> {
        let f = self.fisher_packed(theta)?;
        Ok(match f.len() {
            1 => Matrix::diag(&[f[0]]),
            _ => Matrix::from_fn(2, 2, |i, j| f[i + j]),
        })
    }

    /// Fisher information from raw parameter values. Points inside a guard
    /// band (including the excluded GEVD shape ξ = 0) are reported as
    /// singularities before the domain check runs.
    pub fn fisher_info_at(&self, values: &[S]) -> Result<Matrix<S>> {
        if let (ErrorFamily::Gevd, [sigma, xi]) = (self, values) {
            if *sigma > S::zero() && xi.abs() < S::lit(GEVD_ZERO_GUARD) {
                return Err(Error::Singularity {
                    family: "gevd",
                    parameter: "xi",
                    pole: 0.0,
                    value: xi.to_f64_lossy(),
                    guard: GEVD_ZERO_GUARD,
                });
            }
        }
        self.fisher_info(&self.theta(values)?)
    }

    /// Upper triangle of I^Q_ϑ, row-major: [I₁₁] or [I₁₁, I₁₂, I₂₂].
    pub(crate) fn fisher_packed(&self, theta: &Theta<S>) -> Result<SmallVec<[S; 3]>> {
        self.check_theta(theta)?;
        let one = S::one();
        match self {
            ErrorFamily::Gevd => {
                let (sigma, xi) = (theta[0], theta[1]);
                self.guard_minus_half(xi)?;
                if xi.abs() < S::lit(GEVD_ZERO_GUARD) {
                    return Err(Error::Singularity {
                        family: "gevd",
                        parameter: "xi",
                        pole: 0.0,
                        value: xi.to_f64_lossy(),
                        guard: GEVD_ZERO_GUARD,
                    });
                }
                let two = S::two();
                let xp1 = xi + one;
                let psi1 = S::lit(-EULER_GAMMA);
                let g1 = gamma(xi + one);
                let p = xp1 * xp1 * gamma(two * xi + one);
                let psi_xi = digamma(xi);
                let b_ss = p - two * xp1 * g1 + one;
                let b_sx = -p + (xi * xi + S::lit(4.0) * xi + S::lit(3.0)) * g1 + (xi * xi + xi) * psi_xi * g1
                    - xi * psi1
                    - xi
                    - one;
                let b_xx = p - two * gamma(xi + S::lit(3.0)) - two * xi * psi_xi * gamma(xi + two)
                    + two * xi * xp1 * psi1
                    + xi * xi * (trigamma(one) + psi1 * psi1)
                    + xp1 * xp1;
                let xi2 = xi * xi;
                let i_ss = b_ss / (xi2 * sigma * sigma);
                let i_sx = b_sx / (xi2 * sigma * xi);
                let i_xx = b_xx / (xi2 * xi2);
                Ok(smallvec![i_ss, i_sx, i_xx])
            }
            ErrorFamily::Gpd => {
                let (sigma, xi) = (theta[0], theta[1]);
                self.guard_minus_half(xi)?;
                let c = (one + S::two() * xi).recip();
                let xp1 = xi + one;
                let i_ss = c / (sigma * sigma);
                let i_sx = c / (sigma * xp1);
                let i_xx = c * S::two() * xp1 / (xp1 * xp1);
                Ok(smallvec![i_ss, i_sx, i_xx])
            }
            ErrorFamily::Poisson => Ok(smallvec![theta[0].recip()]),
            ErrorFamily::Binomial { m } => {
                let p = theta[0];
                Ok(smallvec![S::from_u32(*m).unwrap() / (p * (one - p))])
            }
            ErrorFamily::GaussLoc { sd } => Ok(smallvec![(*sd * *sd).recip()]),
        }
    }

    fn guard_minus_half(&self, xi: S) -> Result<()> {
        if xi + S::half() < S::lit(XI_GUARD) {
            return Err(Error::Singularity {
                family: self.name(),
                parameter: "xi",
                pole: -0.5,
                value: xi.to_f64_lossy(),
                guard: XI_GUARD,
            });
        }
        Ok(())
    }

    pub fn cdf(&self, theta: &Theta<S>, y: S) -> S {
        let one = S::one();
        match self {
            ErrorFamily::Gevd | ErrorFamily::Gpd => {
                let (sigma, xi) = (theta[0], theta[1]);
                let z = y / sigma;
                let gpd = matches!(self, ErrorFamily::Gpd);
                if gpd && y <= S::zero() {
                    return S::zero();
                }
                if !(one + xi * z > S::zero()) {
                    // beyond an endpoint
                    return if xi > S::zero() { S::zero() } else { one };
                }
                if y == S::infinity() {
                    return one;
                }
                let e = (-log_ratio(xi, z)).exp();
                if gpd {
                    -(-log_ratio(xi, z)).exp_m1()
                } else {
                    (-e).exp()
                }
            }
            ErrorFamily::Poisson | ErrorFamily::Binomial { .. } => {
                if y < S::zero() {
                    return S::zero();
                }
                let top = y.floor();
                let mut acc = S::zero();
                let mut k = S::zero();
                while k <= top {
                    acc = acc + self.log_density(theta, k).map(|l| l.exp()).unwrap_or(S::zero());
                    if acc >= one {
                        return one;
                    }
                    k = k + one;
                }
                acc.min(one)
            }
            ErrorFamily::GaussLoc { sd } => norm_cdf((y - theta[0]) / *sd),
        }
    }

    /// F⁻¹(u) for u ∈ (0, 1).
    pub fn quantile(&self, theta: &Theta<S>, u: S) -> Result<S> {
        self.check_theta(theta)?;
        if !(u > S::zero() && u < S::one()) {
            return Err(Error::InvalidProbability(u.to_f64_lossy()));
        }
        Ok(self.quantile_split(theta, u, S::one() - u))
    }

    /// Quantile given both u and uc = 1 − u, so the upper tail keeps its
    /// precision. Callers guarantee 0 < u < 1.
    pub fn quantile_split(&self, theta: &Theta<S>, u: S, uc: S) -> S {
        let half = S::half();
        match self {
            ErrorFamily::Gevd => {
                let (sigma, xi) = (theta[0], theta[1]);
                // w = −ln u
                let w = if u < half { -u.ln() } else { -(-uc).ln_1p() };
                sigma * (-xi * w.ln()).exp_m1() / xi
            }
            ErrorFamily::Gpd => {
                let (sigma, xi) = (theta[0], theta[1]);
                let lc = if uc < half { uc.ln() } else { (-u).ln_1p() };
                if xi == S::zero() {
                    -sigma * lc
                } else {
                    sigma * (-xi * lc).exp_m1() / xi
                }
            }
            ErrorFamily::Poisson | ErrorFamily::Binomial { .. } => self.discrete_quantile(theta, u),
            ErrorFamily::GaussLoc { sd } => {
                let z = if u < half { norm_quantile(u) } else { -norm_quantile(uc) };
                theta[0] + *sd * z
            }
        }
    }

    fn discrete_quantile(&self, theta: &Theta<S>, u: S) -> S {
        let (lo, hi) = self.discrete_range(theta, S::lit(DISCRETE_TAIL * 1e-3));
        let mut acc = S::zero();
        let mut y = S::zero();
        // mass below `lo` is negligible; fold it in through the cdf when lo > 0
        if lo > S::zero() {
            acc = self.cdf(theta, lo - S::one());
            y = lo;
        }
        loop {
            acc = acc + self.log_density(theta, y).map(|l| l.exp()).unwrap_or(S::zero());
            if acc >= u || y >= hi {
                return y;
            }
            y = y + S::one();
        }
    }

    /// Range [lo, hi] of counts carrying all but ~`tail` of the mass.
    fn discrete_range(&self, theta: &Theta<S>, tail: S) -> (S, S) {
        let z = (-(tail.ln()) * S::two()).sqrt() + S::lit(3.0);
        match self {
            ErrorFamily::Poisson => {
                let l = theta[0];
                let sd = l.sqrt();
                let lo = (l - z * sd - S::lit(10.0)).floor().max(S::zero());
                let hi = (l + z * z + z * sd + S::lit(10.0)).ceil();
                (lo, hi)
            }
            ErrorFamily::Binomial { m } => (S::zero(), S::from_u32(*m).unwrap()),
            _ => (S::zero(), S::zero()),
        }
    }

    /// Support points and probabilities of a discrete family, enumerated
    /// until the cumulative mass reaches 1 − `tail`.
    pub fn support_points(&self, theta: &Theta<S>, tail: S) -> Vec<(S, S)> {
        if !self.is_discrete() {
            return Vec::new();
        }
        let (lo, hi) = self.discrete_range(theta, tail);
        let mut out = Vec::new();
        let mut acc = if lo > S::zero() { self.cdf(theta, lo - S::one()) } else { S::zero() };
        let mut y = lo;
        while y <= hi {
            let p = self.log_density(theta, y).map(|l| l.exp()).unwrap_or(S::zero());
            out.push((y, p));
            acc = acc + p;
            if acc >= S::one() - tail && y >= theta[0] * self.mean_scale() {
                break;
            }
            y = y + S::one();
        }
        out
    }

    fn mean_scale(&self) -> S {
        match self {
            ErrorFamily::Binomial { m } => S::from_u32(*m).unwrap(),
            _ => S::one(),
        }
    }

    /// Nodes (weight, y) of the expectation rule under Q_ϑ: quantile-scale
    /// quadrature for continuous families, support enumeration for discrete
    /// ones.
    pub fn expectation_nodes(&self, theta: &Theta<S>, grid: &QuantileGrid<S>) -> Vec<(S, S)> {
        if self.is_discrete() {
            self.support_points(theta, S::lit(DISCRETE_TAIL)).into_iter().map(|(y, p)| (p, y)).collect()
        } else {
            grid.nodes().iter().map(|n| (n.weight, self.quantile_split(theta, n.u, n.uc))).collect()
        }
    }

    /// E_ϑ[f(Y)] over [`Self::expectation_nodes`].
    pub fn expect(&self, theta: &Theta<S>, grid: &QuantileGrid<S>, mut f: impl FnMut(S) -> S) -> S {
        if self.is_discrete() {
            self.support_points(theta, S::lit(DISCRETE_TAIL)).into_iter().map(|(y, p)| p * f(y)).sum()
        } else {
            grid.integrate(|u, uc| f(self.quantile_split(theta, u, uc)))
        }
    }

    /// One draw by inversion.
    pub fn draw(&self, theta: &Theta<S>, rng: &mut impl RngCore) -> S {
        let u = mc::open_uniform(rng);
        self.quantile_split(theta, S::lit(u), S::lit(1.0 - u))
    }

    /// `n` i.i.d. draws by inversion; deterministic in `seed`.
    pub fn sample(&self, theta: &Theta<S>, n: usize, seed: u64) -> Result<Vec<S>> {
        self.check_theta(theta)?;
        if n == 0 {
            return Err(Error::InvalidConfig("sample size must be ≥ 1".into()));
        }
        Ok(mc::draws(n, seed, |rng| self.draw(theta, rng)))
    }

    /// Monte Carlo first and second moments of the score with standard
    /// errors, from `n` draws.
    pub fn mc_score_moments(&self, theta: &Theta<S>, n: usize, seed: u64) -> Result<ScoreMoments> {
        self.check_theta(theta)?;
        let k = self.dim();
        let parts = mc::map_chunks(n, seed, |rng, range| -> Result<MomentSums> {
            let mut acc = MomentSums::new(k);
            for _ in range {
                let y = self.draw(theta, rng);
                let s = self.score(theta, y)?;
                let s: Vec<f64> = s.iter().map(|v| v.to_f64_lossy()).collect();
                acc.push(&s);
            }
            Ok(acc)
        });
        let mut total = MomentSums::new(k);
        for p in parts {
            total.merge(&p?);
        }
        Ok(total.finish())
    }
}

#[derive(Clone, Debug)]
struct MomentSums {
    n: usize,
    s1: Vec<f64>,
    s1sq: Vec<f64>,
    s2: Vec<f64>,
    s2sq: Vec<f64>,
    k: usize,
}

impl MomentSums {
    fn new(k: usize) -> Self {
        Self { n: 0, s1: vec![0.0; k], s1sq: vec![0.0; k], s2: vec![0.0; k * k], s2sq: vec![0.0; k * k], k }
    }

    fn push(&mut self, s: &[f64]) {
        self.n += 1;
        for i in 0..self.k {
            self.s1[i] += s[i];
            self.s1sq[i] += s[i] * s[i];
            for j in 0..self.k {
                let v = s[i] * s[j];
                self.s2[i * self.k + j] += v;
                self.s2sq[i * self.k + j] += v * v;
            }
        }
    }

    fn merge(&mut self, o: &Self) {
        self.n += o.n;
        for (a, b) in self.s1.iter_mut().zip(&o.s1) {
            *a += b;
        }
        for (a, b) in self.s1sq.iter_mut().zip(&o.s1sq) {
            *a += b;
        }
        for (a, b) in self.s2.iter_mut().zip(&o.s2) {
            *a += b;
        }
        for (a, b) in self.s2sq.iter_mut().zip(&o.s2sq) {
            *a += b;
        }
    }

    fn finish(&self) -> ScoreMoments {
        let n = self.n as f64;
        let se = |sum: f64, sumsq: f64| {
            let m = sum / n;
            ((sumsq / n - m * m).max(0.0) / (n - 1.0).max(1.0)).sqrt()
        };
        let k = self.k;
        ScoreMoments {
            n: self.n,
            mean: self.s1.iter().map(|v| v / n).collect(),
            mean_se: self.s1.iter().zip(&self.s1sq).map(|(&a, &b)| se(a, b)).collect(),
            second: Matrix::from_fn(k, k, |i, j| self.s2[i * k + j] / n),
            second_se: Matrix::from_fn(k, k, |i, j| se(self.s2[i * k + j], self.s2sq[i * k + j])),
        }
    }
}

/// MC estimates of E[Λ] and E[ΛΛᵀ] with their standard errors.
#[derive(Clone, Debug)]
pub struct ScoreMoments {
    pub n: usize,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub second: Matrix<f64>,
    pub second_se: Matrix<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn th<S: Scalar>(f: ErrorFamily<S>, v: &[S]) -> Theta<S> {
        f.theta(v).unwrap()
    }

    #[test]
    fn fisher_at_raw_values() {
        let g = ErrorFamily::<f64>::Gevd;
        assert!(matches!(g.fisher_info_at(&[1.0, 0.0]), Err(Error::Singularity { .. })));
        assert!(matches!(g.fisher_info_at(&[-1.0, 0.0]), Err(Error::Domain { .. })));
        let m = ErrorFamily::<f64>::Gpd.fisher_info_at(&[1.0, 0.0]).unwrap();
        assert_eq!(m.to_rows(), vec![vec![1.0, 1.0], vec![1.0, 2.0]]);
    }

    #[test]
    fn domain_checks() {
        let g = ErrorFamily::<f64>::Gevd;
        assert!(g.theta(&[1.0, 0.0]).is_err());
        assert!(g.theta(&[1.0, -0.5]).is_err());
        assert!(g.theta(&[0.0, 0.3]).is_err());
        assert!(g.theta(&[1.0, -0.3]).is_ok());
        assert!(ErrorFamily::<f64>::Gpd.theta(&[1.0, 0.0]).is_ok());
        assert!(ErrorFamily::<f64>::Poisson.theta(&[0.0]).is_err());
        assert!(ErrorFamily::<f64>::Binomial { m: 3 }.theta(&[1.0]).is_err());
        assert!(ErrorFamily::<f64>::Poisson.theta(&[f64::NAN]).is_err());
        match g.theta(&[1.0, -0.6]) {
            Err(Error::Domain { distance, .. }) => assert!((distance + 0.1).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_density_examples() {
        let gpd = ErrorFamily::<f64>::Gpd;
        let l = gpd.log_density(&th(gpd, &[1.0, 1.0]), 1.0).unwrap();
        assert!((l + 2.0 * 2f64.ln()).abs() < 1e-14);
        let p = ErrorFamily::<f64>::Poisson;
        assert!((p.log_density(&th(p, &[1.0]), 0.0).unwrap() + 1.0).abs() < 1e-15);
        let g = ErrorFamily::<f64>::Gevd;
        assert_eq!(g.log_density(&th(g, &[1.0, 1.0]), -2.0).unwrap(), f64::NEG_INFINITY);
        assert!(g.log_density(&th(g, &[1.0, 1.0]), f64::NAN).is_err());
    }

    #[test]
    fn score_examples() {
        let gpd = ErrorFamily::<f64>::Gpd;
        let s = gpd.score(&th(gpd, &[1.0, 1.0]), 1.0).unwrap();
        assert!(s[0].abs() < 1e-15);
        assert!((s[1] - (2f64.ln() - 1.0)).abs() < 1e-14);
        let p = ErrorFamily::<f64>::Poisson;
        assert_eq!(p.score(&th(p, &[2.0]), 2.0).unwrap()[0], 0.0);
        let b = ErrorFamily::<f64>::Binomial { m: 1 };
        assert_eq!(b.score(&th(b, &[0.5]), 1.0).unwrap()[0], 2.0);
        let g = ErrorFamily::<f64>::Gevd;
        assert!(matches!(g.score(&th(g, &[1.0, 1.0]), -1.0), Err(Error::OutsideSupport { .. })));
        assert!(gpd.score(&th(gpd, &[1.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn gpd_score_continuous_through_zero_shape() {
        let gpd = ErrorFamily::<f64>::Gpd;
        let at0 = gpd.score(&th(gpd, &[1.3, 0.0]), 2.0).unwrap();
        let near = gpd.score(&th(gpd, &[1.3, 1e-9]), 2.0).unwrap();
        assert!((at0[0] - near[0]).abs() < 1e-8 && (at0[1] - near[1]).abs() < 1e-8);
        // exponential limit: ∂ξ log f = z²/2 − z
        let z = 2.0 / 1.3;
        assert!((at0[1] - (z * z / 2.0 - z)).abs() < 1e-14);
    }

    #[test]
    fn fisher_examples() {
        let gpd = ErrorFamily::<f64>::Gpd;
        let i = gpd.fisher_info(&th(gpd, &[1.0, 0.0])).unwrap();
        assert_eq!(i.to_rows(), vec![vec![1.0, 1.0], vec![1.0, 2.0]]);
        let p = ErrorFamily::<f64>::Poisson;
        assert_eq!(p.fisher_info(&th(p, &[2.0])).unwrap()[(0, 0)], 0.5);
        let g = ErrorFamily::<f64>::Gevd;
        let i = g.fisher_info(&th(g, &[1.0, 1.0])).unwrap();
        assert!((i[(0, 0)] - 5.0).abs() < 1e-12);
        let b = ErrorFamily::<f64>::Binomial { m: 4 };
        assert!((b.fisher_info(&th(b, &[0.2])).unwrap()[(0, 0)] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_guard_bands() {
        let g = ErrorFamily::<f64>::Gevd;
        match g.fisher_info(&th(g, &[1.0, 5e-4])) {
            Err(Error::Singularity { pole, .. }) => assert_eq!(pole, 0.0),
            other => panic!("{other:?}"),
        }
        match g.fisher_info(&th(g, &[1.0, -0.49995])) {
            Err(Error::Singularity { pole, .. }) => assert_eq!(pole, -0.5),
            other => panic!("{other:?}"),
        }
        let gpd = ErrorFamily::<f64>::Gpd;
        assert!(gpd.fisher_info(&th(gpd, &[1.0, -0.49995])).is_err());
        assert!(gpd.fisher_info(&th(gpd, &[1.0, -0.4998])).is_ok());
    }

    #[test]
    fn gevd_fisher_diverges_towards_poles() {
        let g = ErrorFamily::<f64>::Gevd;
        let norm = |xi: f64| g.fisher_info(&th(g, &[1.0, xi])).unwrap().frobenius();
        assert!(norm(-0.49) > norm(-0.4));
        assert!(norm(0.01) > norm(0.1));
    }

    #[test]
    fn quantile_examples() {
        let gpd = ErrorFamily::<f64>::Gpd;
        assert!((gpd.quantile(&th(gpd, &[1.0, 1.0]), 0.5).unwrap() - 1.0).abs() < 1e-14);
        let g = ErrorFamily::<f64>::Gevd;
        let q = g.quantile(&th(g, &[1.0, 1.0]), 0.5).unwrap();
        assert!((q - (1.0 / 2f64.ln() - 1.0)).abs() < 1e-14);
        assert!((g.cdf(&th(g, &[1.0, 1.0]), q) - 0.5).abs() < 1e-14);
        assert!(g.quantile(&th(g, &[1.0, 1.0]), 1.0).is_err());
        assert!(g.quantile(&th(g, &[1.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn quantile_cdf_round_trip_on_grid() {
        let cases: Vec<(ErrorFamily<f64>, Vec<f64>)> = vec![
            (ErrorFamily::Gevd, vec![1.5, 0.4]),
            (ErrorFamily::Gevd, vec![0.7, -0.3]),
            (ErrorFamily::Gpd, vec![2.0, 0.3]),
            (ErrorFamily::Gpd, vec![2.0, -0.2]),
            (ErrorFamily::Gpd, vec![2.0, 0.0]),
            (ErrorFamily::GaussLoc { sd: 2.0 }, vec![1.0]),
        ];
        for (f, v) in cases {
            let t = th(f, &v);
            for i in 1..40 {
                let u = i as f64 / 40.0;
                let y = f.quantile(&t, u).unwrap();
                let back = f.quantile(&t, f.cdf(&t, y)).unwrap();
                assert!((back - y).abs() < 1e-10 * y.abs().max(1.0), "{f} u={u} y={y} back={back}");
            }
        }
        let p = ErrorFamily::<f64>::Poisson;
        let t = th(p, &[3.5]);
        for y in 0..15 {
            let y = y as f64;
            assert_eq!(p.quantile(&t, p.cdf(&t, y)).unwrap(), y);
        }
        let b = ErrorFamily::<f64>::Binomial { m: 7 };
        let t = th(b, &[0.35]);
        for y in 0..=7 {
            let y = y as f64;
            assert_eq!(b.quantile(&t, b.cdf(&t, y).min(1.0 - 1e-16)).unwrap(), y);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let gpd = ErrorFamily::<f64>::Gpd;
        let t = th(gpd, &[1.0, 0.3]);
        assert_eq!(gpd.sample(&t, 1000, 5).unwrap(), gpd.sample(&t, 1000, 5).unwrap());
        assert_ne!(gpd.sample(&t, 1000, 5).unwrap(), gpd.sample(&t, 1000, 6).unwrap());
        assert!(gpd.sample(&t, 0, 5).is_err());
    }

    #[test]
    fn poisson_large_rate_quantile() {
        let p = ErrorFamily::<f64>::Poisson;
        let t = th(p, &[2000.0]);
        let med = p.quantile(&t, 0.5).unwrap();
        assert!((med - 2000.0).abs() <= 1.0);
        let pts = p.support_points(&t, 1e-12);
        let mass: f64 = pts.iter().map(|x| x.1).sum();
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn expectation_of_score_is_zero_by_quadrature() {
        let grid = QuantileGrid::<f64>::default();
        let cases: Vec<(ErrorFamily<f64>, Vec<f64>)> = vec![
            (ErrorFamily::Gevd, vec![1.0, 0.3]),
            (ErrorFamily::Gpd, vec![1.0, 0.3]),
            (ErrorFamily::Poisson, vec![2.5]),
            (ErrorFamily::Binomial { m: 6 }, vec![0.3]),
            (ErrorFamily::GaussLoc { sd: 1.5 }, vec![0.2]),
        ];
        for (f, v) in cases {
            let t = th(f, &v);
            for c in 0..f.dim() {
                let m = f.expect(&t, &grid, |y| f.score(&t, y).unwrap()[c]);
                assert!(m.abs() < 1e-4, "{f} component {c}: {m}");
            }
        }
    }

    #[test]
    fn single_precision_family() {
        let gpd = ErrorFamily::<f32>::Gpd;
        let t = gpd.theta(&[1.0_f32, 0.0]).unwrap();
        let i = gpd.fisher_info(&t).unwrap();
        assert_eq!(i[(1, 1)], 2.0_f32);
    }
}
