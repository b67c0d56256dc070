//! Componentwise link functions ℓ: ℝᵏ → Θ and the slowly growing shape link.
//!
//! The shape link is ℓ(u) = log f(u) with
//! f(u) = u²/2 + u + 1 for u > 0 and f(u) = a₁ / log²(a₂ − u) + a₃ for u ≤ 0.
//! The constants make f continuous with slope 1 at the knot and keep
//! f > a₃ = e^{−1/2}, so ℓ > −1/2 everywhere.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{ErrorFamily, Theta};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeLinkConstants {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl ShapeLinkConstants {
    /// Newton iteration on a₂ log a₂ = 2(1 − e^{−1/2}) from 1.5.
    pub fn solve() -> Result<Self> {
        let a3 = (-0.5f64).exp();
        let target = 2.0 * (1.0 - a3);
        let mut a2 = 1.5f64;
        for _ in 0..100 {
            let step = (a2 * a2.ln() - target) / (a2.ln() + 1.0);
            a2 -= step;
            if step.abs() < 1e-12 {
                let a1 = 0.5 * a2 * a2.ln().powi(3);
                return Ok(Self { a1, a2, a3 });
            }
        }
        Err(Error::NoConvergence("shape link constant a2".into()))
    }
}

/// Process-wide constants, solved on first use.
pub fn shape_constants() -> &'static ShapeLinkConstants {
    static CONSTANTS: OnceLock<ShapeLinkConstants> = OnceLock::new();
    CONSTANTS.get_or_init(|| ShapeLinkConstants::solve().expect("Newton iteration for a2 converges from 1.5"))
}

pub fn shape_f<S: Scalar>(x: S, c: &ShapeLinkConstants) -> S {
    if x > S::zero() {
        x * x * S::half() + x + S::one()
    } else {
        let l = (S::lit(c.a2) - x).ln();
        S::lit(c.a1) / (l * l) + S::lit(c.a3)
    }
}

pub fn shape_f_deriv<S: Scalar>(x: S, c: &ShapeLinkConstants) -> S {
    if x > S::zero() {
        x + S::one()
    } else {
        let d = S::lit(c.a2) - x;
        let l = d.ln();
        S::two() * S::lit(c.a1) / (d * l * l * l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarLink {
    Identity,
    /// ϑ = e^θ
    Log,
    /// ϑ = e^θ / (1 + e^θ)
    Logit,
    /// log f(θ)
    ShapeGevd,
    /// log f(θ) + 1/2, positive shapes only
    ShapeGevdShifted,
    /// log(θ + 1) for θ > 0, log f(θ) below: linear rather than quadratic growth
    ShapeGpd,
    /// logistic(θ)/2 − 1/2, range (−1/2, 0)
    BinomialRescaled,
}

pub const ALL_LINKS: [ScalarLink; 7] = [
    ScalarLink::Identity,
    ScalarLink::Log,
    ScalarLink::Logit,
    ScalarLink::ShapeGevd,
    ScalarLink::ShapeGevdShifted,
    ScalarLink::ShapeGpd,
    ScalarLink::BinomialRescaled,
];

fn logistic<S: Scalar>(u: S) -> S {
    if u >= S::zero() {
        (S::one() + (-u).exp()).recip()
    } else {
        let e = u.exp();
        e / (S::one() + e)
    }
}

impl ScalarLink {
    pub fn name(self) -> &'static str {
        match self {
            ScalarLink::Identity => "identity",
            ScalarLink::Log => "log",
            ScalarLink::Logit => "logit",
            ScalarLink::ShapeGevd => "shape_gevd",
            ScalarLink::ShapeGevdShifted => "shape_gevd_shifted",
            ScalarLink::ShapeGpd => "shape_gpd",
            ScalarLink::BinomialRescaled => "binomial_rescaled",
        }
    }

    pub fn apply<S: Scalar>(self, u: S) -> S {
        let c = shape_constants();
        match self {
            ScalarLink::Identity => u,
            ScalarLink::Log => u.exp(),
            ScalarLink::Logit => logistic(u),
            ScalarLink::ShapeGevd => shape_f(u, c).ln(),
            ScalarLink::ShapeGevdShifted => shape_f(u, c).ln() + S::half(),
            ScalarLink::ShapeGpd => {
                if u > S::zero() {
                    u.ln_1p()
                } else {
                    shape_f(u, c).ln()
                }
            }
            ScalarLink::BinomialRescaled => -logistic(-u) * S::half(),
        }
    }

    /// dℓ/du
    pub fn deriv<S: Scalar>(self, u: S) -> S {
        let c = shape_constants();
        match self {
            ScalarLink::Identity => S::one(),
            ScalarLink::Log => u.exp(),
            ScalarLink::Logit => {
                let p = logistic(u);
                p * logistic(-u)
            }
            ScalarLink::ShapeGevd | ScalarLink::ShapeGevdShifted => shape_f_deriv(u, c) / shape_f(u, c),
            ScalarLink::ShapeGpd => {
                if u > S::zero() {
                    (S::one() + u).recip()
                } else {
                    shape_f_deriv(u, c) / shape_f(u, c)
                }
            }
            ScalarLink::BinomialRescaled => logistic(u) * logistic(-u) * S::half(),
        }
    }
}

impl fmt::Display for ScalarLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalarLink {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ALL_LINKS
            .iter()
            .copied()
            .find(|l| l.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown link '{s}'")))
    }
}

/// ℓ(θ) = (ℓ₁(θ₁), …, ℓ_k(θ_k)).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkFunction {
    links: Vec<ScalarLink>,
}

impl LinkFunction {
    pub fn new(links: Vec<ScalarLink>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::InvalidConfig("link needs at least one coordinate".into()));
        }
        Ok(Self { links })
    }

    pub fn k(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[ScalarLink] {
        &self.links
    }

    fn check(&self, theta: usize) -> Result<()> {
        if theta == self.k() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { what: "link input", expected: self.k(), got: theta })
        }
    }

    /// Raw ℓ(θ) without a domain check.
    pub fn apply<S: Scalar>(&self, theta: &[S]) -> Result<Vec<S>> {
        self.check(theta.len())?;
        if theta.iter().any(|t| t.is_nan()) {
            return Err(Error::NanInput("link input"));
        }
        Ok(self.links.iter().zip(theta).map(|(l, &t)| l.apply(t)).collect())
    }

    /// ℓ(θ) validated against `family`.
    pub fn apply_theta<S: Scalar>(&self, family: &ErrorFamily<S>, theta: &[S]) -> Result<Theta<S>> {
        family.theta(&self.apply(theta)?)
    }

    /// Diagonal of ℓ̇(θ).
    pub fn jacobian_diag<S: Scalar>(&self, theta: &[S]) -> Result<Vec<S>> {
        self.check(theta.len())?;
        Ok(self.links.iter().zip(theta).map(|(l, &t)| l.deriv(t)).collect())
    }

    pub fn jacobian<S: Scalar>(&self, theta: &[S]) -> Result<Matrix<S>> {
        Ok(Matrix::diag(&self.jacobian_diag(theta)?))
    }
}

impl FromStr for LinkFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::new(s.split(',').map(str::parse).collect::<Result<_>>()?)
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.links.iter().map(|l| l.name()).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinkRow {
    pub u: f64,
    pub link: f64,
    pub deriv: f64,
}

pub fn emit_link_table(link: ScalarLink, grid: &[f64]) -> Result<Vec<LinkRow>> {
    if let Some(&u) = grid.iter().find(|u| !u.is_finite()) {
        return Err(Error::InvalidConfig(format!("link grid value {u} is not finite")));
    }
    Ok(grid.iter().map(|&u| LinkRow { u, link: link.apply(u), deriv: link.deriv(u) }).collect())
}

/// `u,link,deriv` CSV with 17 significant digits.
pub fn write_link_table_csv(rows: &[LinkRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "u,link,deriv")?;
    for r in rows {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", r.u, r.link, r.deriv)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        let c = ShapeLinkConstants::solve().unwrap();
        assert!((c.a3 - 0.60653).abs() < 1e-5);
        assert!((c.a2 - 1.624).abs() < 1e-3);
        // a₁ = (1 − a₃) log²a₂ from continuity, the same value
        assert!((c.a1 - 0.09243).abs() < 1e-5);
        assert!((c.a1 - (1.0 - c.a3) * c.a2.ln().powi(2)).abs() < 1e-12);
        assert!((c.a2 * c.a2.ln() - 2.0 * (1.0 - c.a3)).abs() < 1e-12);
        assert!((2.0 * c.a1 / (c.a2 * c.a2.ln().powi(3)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn knot_is_c1() {
        let c = shape_constants();
        assert!((shape_f(0.0f64, c) - 1.0).abs() < 1e-10);
        assert!((shape_f_deriv(0.0f64, c) - 1.0).abs() < 1e-10);
        assert!((shape_f(1e-300f64, c) - 1.0).abs() < 1e-10);
        assert!((shape_f_deriv(1e-300f64, c) - 1.0).abs() < 1e-10);
        assert_eq!(shape_f(2.0, c), 5.0);
        let far = shape_f(-1e6, c);
        assert!((far - (c.a3 + c.a1 / (c.a2 + 1e6).ln().powi(2))).abs() < 1e-15);
        assert!((far - 0.60702).abs() < 1e-5);
    }

    #[test]
    fn scalar_link_examples() {
        assert_eq!(ScalarLink::Logit.apply(0.0), 0.5);
        assert_eq!(ScalarLink::Logit.deriv(0.0), 0.25);
        assert_eq!(ScalarLink::Log.apply(0.0), 1.0);
        assert_eq!(ScalarLink::Log.deriv(0.0), 1.0);
        assert!((ScalarLink::ShapeGevd.apply(15f64.ln()) - 1.998).abs() < 1e-3);
        assert!(ScalarLink::ShapeGevd.apply(193f64.ln()) < 3.0 + 2e-3);
        assert_eq!(ScalarLink::BinomialRescaled.apply(0.0), -0.25);
        assert_eq!(ScalarLink::ShapeGevdShifted.apply(0.0), 0.5);
    }

    #[test]
    fn level_two_crossing() {
        // ℓ(u) = 2 ⟺ u²/2 + u + 1 = e² ⟺ u = √(2e² − 1) − 1
        let u = (2.0 * 1f64.exp().powi(2) - 1.0).sqrt() - 1.0;
        assert!((u - 2.712).abs() < 1e-3);
        assert!((ScalarLink::ShapeGevd.apply(u) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn parse_and_display() {
        let l: LinkFunction = "log,shape_gevd_shifted".parse().unwrap();
        assert_eq!(l.links(), &[ScalarLink::Log, ScalarLink::ShapeGevdShifted]);
        assert_eq!(l.to_string(), "log,shape_gevd_shifted");
        assert!("log,foo".parse::<LinkFunction>().is_err());
    }

    #[test]
    fn unshifted_shape_link_can_leave_positive_domain() {
        let l: LinkFunction = "log,shape_gevd".parse().unwrap();
        let gpd = ErrorFamily::<f64>::Gpd;
        assert!(l.apply_theta(&gpd, &[0.0, -1.0]).is_ok());
        let gevd = ErrorFamily::<f64>::Gevd;
        // log f(0) = 0 is the excluded GEVD shape
        assert!(l.apply_theta(&gevd, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn link_table_csv() {
        let grid: Vec<f64> = (-5..=5).map(f64::from).collect();
        let rows = emit_link_table(ScalarLink::ShapeGevd, &grid).unwrap();
        assert_eq!(rows.len(), 11);
        assert!(rows.windows(2).all(|w| w[1].link > w[0].link));
        let mut buf = Vec::new();
        write_link_table_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("u,link,deriv\n"));
        assert_eq!(text.lines().count(), 12);
        assert!(emit_link_table(ScalarLink::Log, &[f64::NAN]).is_err());
    }
}
