//! Distribution helpers and summary statistics.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};
use statrs::function::gamma::gamma_lr;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_sf(x: f64) -> f64 {
    std_normal().sf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Two-sided critical value `z_{1 - alpha/2}`.
pub fn z_two_sided(alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha / 2.0)
}

/// Upper tail `P(X > x)` for `X ~ chi^2_df`.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).expect("positive df").sf(x)
}

/// Quantile of `chi^2_df`: Wilson-Hilferty start refined by safeguarded Newton steps.
pub fn chi_square_quantile(p: f64, df: f64) -> f64 {
    assert!(df > 0.0, "df must be positive");
    assert!((0.0..1.0).contains(&p), "p must be in [0, 1)");
    if p == 0.0 {
        return 0.0;
    }
    let dist = ChiSquared::new(df).expect("positive df");
    let k = df / 2.0;
    let cdf = |x: f64| gamma_lr(k, x / 2.0);

    let z = normal_quantile(p);
    let h = 2.0 / (9.0 * df);
    let mut x = df * (1.0 - h + z * h.sqrt()).powi(3);
    if !(x > 0.0) {
        // small df / small p: invert the leading term of the series, F(x) ~ (x/2)^k / Gamma(k+1)
        x = 2.0 * (p * statrs::function::gamma::gamma(k + 1.0)).powf(1.0 / k);
    }

    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let f = cdf(x) - p;
        if f.abs() <= 1e-15 * p.max(1e-300) {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = dist.pdf(x);
        let mut next = x - f / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1e-300) };
        }
        if (next - x).abs() <= 1e-15 * x {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Power of the two-sided z test for a difference `d` with standard error `se`.
pub fn two_sided_power(d: f64, se: f64, alpha: f64) -> f64 {
    let z = z_two_sided(alpha);
    let r = d.abs() / se;
    normal_cdf(r - z) + normal_cdf(-r - z)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with divisor `n - 1`.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile (the default in R and numpy).
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with scipy.stats.
    const Q95: [(f64, f64); 7] = [
        (1.0, 3.841458820694124),
        (2.0, 5.991464547107979),
        (3.0, 7.814727903251179),
        (4.0, 9.487729036781154),
        (5.0, 11.070497693516351),
        (10.0, 18.307038053275146),
        (30.0, 43.77297182574219),
    ];
    const Q50: [(f64, f64); 7] = [
        (1.0, 0.454936423119572),
        (2.0, 1.386294361119891),
        (3.0, 2.3659738843753377),
        (4.0, 3.3566939800333224),
        (5.0, 4.351460191095526),
        (10.0, 9.34181776559197),
        (30.0, 29.336031516661585),
    ];
    const Q01: [(f64, f64); 7] = [
        (1.0, 0.00015708785790970184),
        (2.0, 0.020100671707002873),
        (3.0, 0.11483180189911707),
        (4.0, 0.2971094805065319),
        (5.0, 0.5542980767282772),
        (10.0, 2.5582121601872063),
        (30.0, 14.953456528455435),
    ];

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn chi_square_quantiles_match_reference() {
        for (p, table) in [(0.95, Q95), (0.5, Q50), (0.01, Q01)] {
            for (df, want) in table {
                let got = chi_square_quantile(p, df);
                assert!(rel(got, want) < 1e-10, "p {p} df {df}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn chi_square_survival_matches_reference() {
        let cases = [
            (3.0, 1.0, 0.08326451666355042),
            (1.0, 2.0, 0.6065306597126334),
            (7.0, 3.0, 0.07189777249646509),
            (0.5, 4.0, 0.9735009788392561),
            (25.0, 10.0, 0.005345505487134069),
        ];
        for (x, df, want) in cases {
            let got = chi_square_sf(x, df);
            assert!(rel(got, want) < 1e-10, "sf({x}; {df}) = {got}");
        }
    }

    #[test]
    fn normal_critical_value() {
        assert!((z_two_sided(0.05) - 1.959963984540054).abs() < 1e-12);
    }

    #[test]
    fn power_at_two_standard_errors() {
        assert!((two_sided_power(2.0, 1.0, 0.05) - 0.5160052739761748).abs() < 1e-12);
        assert!((two_sided_power(-2.0, 1.0, 0.05) - 0.5160052739761748).abs() < 1e-12);
        assert!((two_sided_power(0.0, 1.0, 0.05) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn type7_quantiles() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&xs, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn sd_uses_n_minus_one() {
        assert!((sample_sd(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert!(sample_sd(&[1.0]).is_nan());
    }
}
