//! Standard normal distribution: density, distribution function, its
//! logarithm with a stable lower tail, and the quantile function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument the lower tail goes through the Mills-ratio
/// continued fraction instead of `erfc`.
const TAIL_CUTOFF: f64 = -20.0;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(t: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * t * t).exp()
}

/// Standard normal distribution function, via the complementary error function.
#[inline]
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t * FRAC_1_SQRT_2)
}

/// Mills ratio `Φ(-x) / φ(x)` for `x ≥ 5` by backward evaluation of the
/// continued fraction `1 / (x + 1/(x + 2/(x + 3/(x + ...))))`.
fn mills_ratio_tail(x: f64) -> f64 {
    let mut f = x;
    for k in (1..=60).rev() {
        f = x + k as f64 / f;
    }
    1.0 / f
}

/// `log Φ(t)`, accurate far into the lower tail where `Φ(t)` underflows.
pub fn log_std_normal_cdf(t: f64) -> f64 {
    log_cdf_and_hazard(t).0
}

/// Returns `(log Φ(t), φ(t) / Φ(t))`.
///
/// The second component is the derivative of `log Φ` and drives every
/// probit-type score in the crate.
#[inline]
pub fn log_cdf_and_hazard(t: f64) -> (f64, f64) {
    if t < TAIL_CUTOFF {
        let r = mills_ratio_tail(-t);
        (-0.5 * t * t - LN_SQRT_2PI + r.ln(), 1.0 / r)
    } else if t <= 0.0 {
        let cdf = std_normal_cdf(t);
        (cdf.ln(), std_normal_pdf(t) / cdf)
    } else {
        let upper = 0.5 * libm::erfc(t * FRAC_1_SQRT_2);
        (libm::log1p(-upper), std_normal_pdf(t) / (1.0 - upper))
    }
}

/// Standard normal quantile function (Wichura's AS 241, refined by one Halley step).
///
/// Returns `-inf` for `p == 0`, `+inf` for `p == 1` and NaN outside `[0, 1]`.
pub fn std_normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = as241(p);
    // Halley refinement; skipped in the far tails where Φ loses relative precision.
    if x.abs() < 30.0 {
        let e = std_normal_cdf(x) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x - u / (1.0 + 0.5 * x * u)
    } else {
        x
    }
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[allow(clippy::excessive_precision)]
fn as241(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608_0e0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083_0e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061_0e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561_0e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34e0,
        4.630_337_846_156_545_295_90e0,
        5.769_497_221_460_691_405_50e0,
        3.647_848_324_763_204_605_04e0,
        1.270_458_252_452_368_382_58e0,
        2.417_807_251_774_506_117_70e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_40e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87e0,
        1.676_384_830_183_803_849_40e0,
        6.897_673_349_851_000_045_50e-1,
        1.481_039_764_274_800_745_90e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946_00e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_20e0,
        5.463_784_911_164_114_369_90e0,
        1.784_826_539_917_291_335_80e0,
        2.965_605_718_285_048_912_30e-1,
        2.653_218_952_657_612_309_30e-2,
        1.242_660_947_388_078_438_60e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_90e-1,
        1.369_298_809_227_358_053_10e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591_00e-4,
        1.846_318_317_510_054_681_80e-5,
        1.421_511_758_316_445_888_70e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
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

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        // 15-digit table value of Φ(1).
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_543).abs() < 1e-12);
        assert!((std_normal_cdf(-2.0) - 0.022_750_131_948_179_2).abs() < 1e-12);
        assert_eq!(std_normal_cdf(-1e9), 0.0);
        assert_eq!(std_normal_cdf(1e9), 1.0);
    }

    #[test]
    fn pdf_reference_values() {
        assert!((std_normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        // exp(-2)/sqrt(2π)
        assert!((std_normal_pdf(2.0) - 0.053_990_966_513_188_06).abs() < 1e-15);
        assert_eq!(std_normal_pdf(2.0), std_normal_pdf(-2.0));
    }

    #[test]
    fn cdf_symmetry_and_monotone() {
        let mut prev = 0.0;
        for i in 0..=1600 {
            let t = -8.0 + i as f64 * 0.01;
            let c = std_normal_cdf(t);
            assert!((c + std_normal_cdf(-t) - 1.0).abs() < 1e-12);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn derivative_of_cdf_is_pdf() {
        let h = 1e-5;
        for i in 0..100 {
            let t = -5.0 + 10.0 * i as f64 / 99.0;
            // Difference the tail side to avoid cancellation near 1.
            let s = if t > 0.0 { -t } else { t };
            let fd = (std_normal_cdf(s + h) - std_normal_cdf(s - h)) / (2.0 * h);
            let rel = (fd - std_normal_pdf(t)).abs() / std_normal_pdf(t);
            assert!(rel < 1e-6, "t={t} rel={rel}");
        }
    }

    #[test]
    fn log_cdf_continuous_across_tail_branch() {
        let below = log_std_normal_cdf(TAIL_CUTOFF - 1e-9);
        let above = log_std_normal_cdf(TAIL_CUTOFF + 1e-9);
        assert!((below - above).abs() < 1e-6);
        let (_, h_below) = log_cdf_and_hazard(TAIL_CUTOFF - 1e-9);
        let (_, h_above) = log_cdf_and_hazard(TAIL_CUTOFF + 1e-9);
        assert!((h_below - h_above).abs() / h_above < 1e-10);
    }

    #[test]
    fn log_cdf_deep_tail() {
        // Asymptotic: log Φ(t) ≈ -t²/2 - log(-t) - log√(2π) - 1/t² for t → -∞.
        let t = -40.0f64;
        let approx = -0.5 * t * t - (-t).ln() - LN_SQRT_2PI - 1.0 / (t * t) + 2.5 / t.powi(4);
        assert!((log_std_normal_cdf(t) - approx).abs() < 1e-7);
        assert!(log_std_normal_cdf(-1e3).is_finite());
        assert!((log_std_normal_cdf(10.0) + 7.619_853_024_160_527e-24).abs() < 1e-35);
    }

    #[test]
    fn hazard_matches_derivative_of_log_cdf() {
        for &t in &[-35.0f64, -21.0, -19.0, -3.0, 0.0, 0.7, 4.0] {
            let h = 1e-6 * (1.0f64).max(t.abs());
            let fd = (log_std_normal_cdf(t + h) - log_std_normal_cdf(t - h)) / (2.0 * h);
            let (_, hz) = log_cdf_and_hazard(t);
            assert!((fd - hz).abs() / hz.abs().max(1e-12) < 1e-6, "t={t}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        assert_eq!(std_normal_quantile(0.5), 0.0);
        assert!((std_normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
        assert!((std_normal_quantile(0.75) - 0.674_489_750_196_081_7).abs() < 1e-14);
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = std_normal_quantile(p);
            assert!((std_normal_cdf(x) - p).abs() < 1e-15);
        }
        assert!((std_normal_quantile(1e-20) + 9.262_340_089_798_408).abs() < 1e-9);
        assert!(std_normal_quantile(1.5).is_nan());
    }
}
