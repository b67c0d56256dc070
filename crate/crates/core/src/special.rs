//! Gamma-family special functions and the standard normal cdf/quantile.
//!
//! Gamma, log-gamma, digamma and trigamma are evaluated natively in the
//! scalar type. The normal cdf and quantile are computed in double precision
//! and converted.

use crate::scalar::Scalar;

/// Euler–Mascheroni constant γ = −ψ(1).
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum<S: Scalar>(z: S) -> S {
    // z is the shifted argument (x - 1)
    let mut acc = S::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + S::lit(c) / (z + S::from_usize_lossy(i));
    }
    acc
}

/// ln Γ(x) for x > 0 (reflection is used below 1/2).
pub fn ln_gamma<S: Scalar>(x: S) -> S {
    if x.is_nan() {
        return x;
    }
    if x < S::half() {
        // ln Γ(x) = ln π − ln|sin πx| − ln Γ(1 − x)
        let pi = S::PI();
        return pi.ln() - (pi * x).sin().abs().ln() - ln_gamma(S::one() - x);
    }
    let z = x - S::one();
    let t = z + S::lit(LANCZOS_G + 0.5);
    S::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (z + S::half()) * t.ln() - t
        + lanczos_sum(z).ln()
}

/// Γ(x). Accurate for positive arguments up to the overflow point; negative
/// non-integers go through the reflection formula.
pub fn gamma<S: Scalar>(x: S) -> S {
    if x.is_nan() {
        return x;
    }
    if x < S::half() {
        let pi = S::PI();
        return pi / ((pi * x).sin() * gamma(S::one() - x));
    }
    if x > S::lit(171.7) {
        return S::infinity();
    }
    let z = x - S::one();
    let t = z + S::lit(LANCZOS_G + 0.5);
    // split the power to postpone overflow
    let p = t.powf((z + S::half()) * S::half());
    S::lit((2.0 * std::f64::consts::PI).sqrt()) * p * (p * (-t).exp()) * lanczos_sum(z)
}

/// Digamma ψ(x) = Γ'(x)/Γ(x).
pub fn digamma<S: Scalar>(x: S) -> S {
    if x.is_nan() || x == S::neg_infinity() {
        return S::nan();
    }
    if x <= S::zero() {
        if x == x.floor() {
            return S::nan();
        }
        // ψ(x) = ψ(1 − x) − π / tan(πx)
        let pi = S::PI();
        return digamma(S::one() - x) - pi / (pi * x).tan();
    }
    let mut x = x;
    let mut acc = S::zero();
    let shift = S::lit(12.0);
    while x < shift {
        acc = acc - x.recip();
        x = x + S::one();
    }
    let inv2 = (x * x).recip();
    // asymptotic series with Bernoulli numbers
    let series = inv2
        * (S::lit(-1.0 / 12.0)
            + inv2
                * (S::lit(1.0 / 120.0)
                    + inv2
                        * (S::lit(-1.0 / 252.0)
                            + inv2
                                * (S::lit(1.0 / 240.0)
                                    + inv2 * (S::lit(-1.0 / 132.0) + inv2 * S::lit(691.0 / 32760.0))))));
    acc + x.ln() - S::half() / x + series
}

/// Trigamma ψ'(x) for x > 0.
pub fn trigamma<S: Scalar>(x: S) -> S {
    if x.is_nan() {
        return x;
    }
    if x <= S::zero() {
        if x == x.floor() {
            return S::nan();
        }
        // ψ'(1 − x) + ψ'(x) = π² / sin²(πx)
        let pi = S::PI();
        let s = (pi * x).sin();
        return pi * pi / (s * s) - trigamma(S::one() - x);
    }
    let mut x = x;
    let mut acc = S::zero();
    let shift = S::lit(12.0);
    while x < shift {
        acc = acc + (x * x).recip();
        x = x + S::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv
        + S::half() * inv2
        + inv * inv2
            * (S::lit(1.0 / 6.0)
                + inv2
                    * (S::lit(-1.0 / 30.0)
                        + inv2
                            * (S::lit(1.0 / 42.0) + inv2 * (S::lit(-1.0 / 30.0) + inv2 * S::lit(5.0 / 66.0)))));
    acc + series
}

/// ln(n!) for a non-negative integer valued argument.
pub fn ln_factorial<S: Scalar>(n: S) -> S {
    if n < S::lit(2.0) {
        S::zero()
    } else {
        ln_gamma(n + S::one())
    }
}

/// Standard normal cdf Φ(x).
pub fn norm_cdf<S: Scalar>(x: S) -> S {
    S::lit(0.5 * libm::erfc(-x.to_f64_lossy() / std::f64::consts::SQRT_2))
}

/// Standard normal upper tail 1 − Φ(x), accurate far into the tail.
pub fn norm_sf<S: Scalar>(x: S) -> S {
    S::lit(0.5 * libm::erfc(x.to_f64_lossy() / std::f64::consts::SQRT_2))
}

/// Standard normal quantile Φ⁻¹(p), Wichura's AS 241 (PPND16).
pub fn norm_quantile<S: Scalar>(p: S) -> S {
    S::lit(ppnd16(p.to_f64_lossy()))
}

fn ppnd16(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.010_334_399_292_288e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn gamma_at_integers_and_half() {
        assert!(close(gamma(1.0_f64), 1.0, 1e-14));
        assert!(close(gamma(5.0_f64), 24.0, 1e-14));
        assert!(close(gamma(0.5_f64), std::f64::consts::PI.sqrt(), 1e-14));
        assert!(close(gamma(0.2_f64), 4.590_843_711_998_803, 1e-13));
        assert!(close(gamma(-0.5_f64), -2.0 * std::f64::consts::PI.sqrt(), 1e-13));
        assert!(close(ln_gamma(100.0_f64), 359.134_205_369_575_4, 1e-14));
        assert!(close(ln_gamma(0.01_f64), 4.599_479_878_042_022, 1e-13));
    }

    #[test]
    fn gamma_near_zero_argument() {
        // Γ(x) ~ 1/x − γ as x → 0
        let x = 2e-4_f64;
        assert!(close(gamma(x), 1.0 / x - EULER_GAMMA + 0.989_055 * x, 1e-9));
    }

    #[test]
    fn digamma_reference_values() {
        assert!(close(digamma(1.0_f64), -EULER_GAMMA, 1e-15));
        assert!(close(digamma(0.5_f64), -EULER_GAMMA - 2.0 * 2f64.ln(), 1e-14));
        assert!(close(digamma(10.0_f64), 2.251_752_589_066_721, 1e-14));
        // recurrence ψ(x + 1) = ψ(x) + 1/x on the negative axis
        let x = -0.3_f64;
        assert!(close(digamma(x + 1.0), digamma(x) + 1.0 / x, 1e-13));
    }

    #[test]
    fn trigamma_reference_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!(close(trigamma(1.0_f64), pi2_6, 1e-14));
        assert!(close(trigamma(0.5_f64), 3.0 * pi2_6, 1e-14));
        assert!(close(trigamma(2.0_f64), pi2_6 - 1.0, 1e-14));
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-300, 1e-12, 0.001, 0.2, 0.5, 0.77, 0.999_999] {
            let x: f64 = norm_quantile(p);
            assert!(close(norm_cdf(x), p, 1e-12), "p={p}");
        }
        assert!(close(norm_quantile(0.975_f64), 1.959_963_984_540_054, 1e-14));
    }

    #[test]
    fn single_precision_agrees() {
        assert!((gamma(3.5_f32) - 3.323_351).abs() < 1e-5);
        assert!((digamma(2.0_f32) - 0.422_784_33).abs() < 1e-5);
    }
}
