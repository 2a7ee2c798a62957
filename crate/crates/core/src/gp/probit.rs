const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
const TAIL_START: f64 = -8.0;

/// `Φ(z)` via the complementary error function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `ln Φ(z)`, using the asymptotic tail series below `z = -8`.
pub fn log_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z >= TAIL_START {
        return normal_cdf(z).ln();
    }
    // Φ(z) ≈ φ(z)/(-z) · Σ_k (-1)^k (2k-1)!! / z^{2k}
    let inv_z2 = 1.0 / (z * z);
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..=10 {
        term *= -((2 * k - 1) as f64) * inv_z2;
        series += term;
    }
    -0.5 * z * z - HALF_LN_2PI - (-z).ln() + series.ln()
}

fn log_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - HALF_LN_2PI
}

/// `φ(z) / Φ(z)`, stable in both tails.
pub fn inverse_mills_ratio(z: f64) -> f64 {
    (log_normal_pdf(z) - log_normal_cdf(z)).exp()
}

/// `ln p(y | f) = ln Φ(y f)` for labels `y ∈ {-1, +1}`.
pub fn probit_log_likelihood(y: f64, f: f64) -> f64 {
    log_normal_cdf(y * f)
}

/// First and negated second derivative of `ln Φ(y f)` with respect to `f`.
pub(crate) fn probit_derivatives(y: f64, f: f64) -> (f64, f64) {
    let z = y * f;
    let r = inverse_mills_ratio(z);
    (y * r, r * (r + z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_at_zero() {
        assert!((probit_log_likelihood(1.0, 0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((probit_log_likelihood(-1.0, 0.0) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturates() {
        assert!(probit_log_likelihood(1.0, 30.0).abs() < 1e-12);
    }

    #[test]
    fn tenth_quantile() {
        let v = probit_log_likelihood(-1.0, 1.2816);
        // erf-based oracle: Φ(-1.2816) = 0.5 erfc(1.2816/√2)
        let oracle = (0.5 * libm::erfc(1.2816 / std::f64::consts::SQRT_2)).ln();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v.exp() - 0.1).abs() < 1e-4);
    }

    #[test]
    fn tail_series_is_continuous() {
        let below = log_normal_cdf(-8.0 - 1e-12);
        let above = (0.5 * libm::erfc(8.0 / std::f64::consts::SQRT_2)).ln();
        assert!((below - above).abs() < 1e-9);
        for z in [-9.0, -12.0, -20.0] {
            let direct = (0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)).ln();
            assert!((log_normal_cdf(z) - direct).abs() < 1e-9 * direct.abs());
        }
        assert!(log_normal_cdf(-1e3).is_finite());
    }

    #[test]
    fn mills_ratio_limits() {
        // φ(0)/Φ(0) = 2φ(0)
        assert!((inverse_mills_ratio(0.0) - 2.0 * (-HALF_LN_2PI).exp()).abs() < 1e-15);
        // approaches -z in the left tail
        assert!((inverse_mills_ratio(-40.0) / 40.0 - 1.0).abs() < 1e-3);
        assert!(inverse_mills_ratio(40.0) < 1e-300);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &(y, f) in &[(1.0, 0.3), (-1.0, 2.0), (1.0, -5.0), (-1.0, -0.7)] {
            let (g, w) = probit_derivatives(y, f);
            let h = 1e-5;
            let fd1 = (probit_log_likelihood(y, f + h) - probit_log_likelihood(y, f - h)) / (2.0 * h);
            let (g_up, _) = probit_derivatives(y, f + h);
            let (g_dn, _) = probit_derivatives(y, f - h);
            let fd2 = -(g_up - g_dn) / (2.0 * h);
            assert!((g - fd1).abs() < 1e-7);
            assert!((w - fd2).abs() < 1e-6);
            assert!(w > 0.0);
        }
    }
}
