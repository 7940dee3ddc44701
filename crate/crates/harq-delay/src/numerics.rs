//! Scalar special functions and adaptive quadrature used by the analytic layer.

use crate::error::{Error, Result};

/// Complementary error function `erfc(x) = 1 - erf(x)`.
///
/// Delegates to `libm` (the FreeBSD msun port); peak error is a few ulps
/// over the whole double range, far inside the 1e-12 budget the feedback
/// formulas need.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

// 15-point Kronrod nodes on [-1,1] (positive half) and weights, with the
// embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_67,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut result_gauss = WG[3] * fc;
    let mut result_kronrod = WGK[7] * fc;
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        result_kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            result_gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let integral = result_kronrod * half;
    let err = ((result_kronrod - result_gauss) * half).abs();
    (integral, err)
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Adaptive Gauss-Kronrod integration over the segments defined by
/// `breakpoints` (sorted, at least two entries). The worst segment is
/// bisected until the summed error estimate meets the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_subdivisions: usize,
) -> Result<Quadrature> {
    assert!(breakpoints.len() >= 2, "need at least one segment");

    struct Seg {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
    }

    let mut segs: Vec<Seg> = breakpoints
        .windows(2)
        .map(|w| {
            let (value, error) = gauss_kronrod_15(&f, w[0], w[1]);
            Seg { a: w[0], b: w[1], value, error }
        })
        .collect();

    for _ in 0..max_subdivisions {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.error).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Quadrature { value: total, error: err });
        }
        // bisect the segment with the largest error estimate
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap();
        let Seg { a, b, .. } = segs[worst];
        let mid = 0.5 * (a + b);
        let (v1, e1) = gauss_kronrod_15(&f, a, mid);
        let (v2, e2) = gauss_kronrod_15(&f, mid, b);
        segs[worst] = Seg { a, b: mid, value: v1, error: e1 };
        segs.push(Seg { a: mid, b, value: v2, error: e2 });
    }

    let err: f64 = segs.iter().map(|s| s.error).sum();
    Err(Error::QuadratureNotConverged { error: err, subdivisions: max_subdivisions })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent erfc oracle: Maclaurin series for erf on [0, 2.5], Lentz
    // continued fraction for erfc beyond. Shares no code with the rational
    // approximation above.
    fn erfc_oracle(x: f64) -> f64 {
        if x < 0.0 {
            return 2.0 - erfc_oracle(-x);
        }
        if x <= 2.5 {
            // erf(x) = 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1))
            let mut term = x;
            let mut sum = x;
            let mut n = 1.0f64;
            while term.abs() > 1e-20 {
                term *= -x * x / n;
                sum += term / (2.0 * n + 1.0);
                n += 1.0;
            }
            1.0 - sum * 2.0 / std::f64::consts::PI.sqrt()
        } else {
            // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
            let mut f = x;
            for k in (1..=60).rev() {
                f = x + (k as f64 / 2.0) / f;
            }
            (-x * x).exp() / std::f64::consts::PI.sqrt() / f
        }
    }

    #[test]
    fn erfc_at_zero_and_one() {
        assert_eq!(erfc(0.0), 1.0);
        assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-14);
    }

    #[test]
    fn erfc_matches_independent_oracle() {
        let mut x = -10.0;
        while x <= 10.0 {
            let got = erfc(x);
            let want = erfc_oracle(x);
            assert!(
                (got - want).abs() <= 1e-12,
                "erfc({x}) = {got}, oracle {want}"
            );
            x += 0.0625;
        }
    }

    #[test]
    fn erfc_reflection() {
        for &x in &[0.1, 0.5, 1.0, 2.0, 3.5, 7.0] {
            let s = erfc(x) + erfc(-x);
            assert!((s - 2.0).abs() < 1e-14, "erfc({x})+erfc(-{x}) = {s}");
        }
    }

    #[test]
    fn normal_cdf_basics() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!(normal_cdf(-40.0) >= 0.0);
        assert!(normal_cdf(40.0) <= 1.0);
    }

    #[test]
    fn quadrature_polynomial() {
        let q = integrate(|x| x * x, &[0.0, 1.0], 1e-14, 1e-12, 100).unwrap();
        assert!((q.value - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_oscillatory() {
        // \int_0^pi sin(x) dx = 2, forced through subdivision
        let q = integrate(|x| (10.0 * x).sin().powi(2), &[0.0, std::f64::consts::PI], 1e-13, 1e-12, 1000)
            .unwrap();
        assert!((q.value - std::f64::consts::PI / 2.0).abs() < 1e-10, "{}", q.value);
    }

    #[test]
    fn quadrature_reports_non_convergence() {
        let r = integrate(|x| (1e6 * x).sin(), &[0.0, 1.0], 1e-16, 1e-16, 3);
        assert!(matches!(r, Err(Error::QuadratureNotConverged { .. })));
    }
}
