//! Acquisition scores used to pick the next evaluation point.
//!
//! Both are written for a *minimization* objective and return scores to be
//! maximized over candidates.

use statrs::function::erf::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF via the complementary error function (stable in both
/// tails).
fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below the incumbent `y_best`:
/// EI = (y_best − mean)·Φ(z) + std·φ(z), z = (y_best − mean)/std.
///
/// Degenerates to the hard improvement max(y_best − mean, 0) at zero
/// predictive spread.
pub fn acquisition_ei(mean: f64, std: f64, y_best: f64) -> f64 {
    if std <= 0.0 {
        return (y_best - mean).max(0.0);
    }
    let z = (y_best - mean) / std;
    (y_best - mean) * normal_cdf(z) + std * normal_pdf(z)
}

/// Lower-confidence-bound score: −(mean − beta·std), so that maximizing the
/// score hunts for the smallest plausible objective value.
pub fn acquisition_lcb(mean: f64, std: f64, beta: f64) -> f64 {
    -(mean - beta * std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ei_at_the_incumbent_with_unit_spread_is_the_normal_density_peak() {
        assert_relative_eq!(acquisition_ei(1.0, 1.0, 1.0), INV_SQRT_2PI, epsilon = 1e-12);
    }

    #[test]
    fn ei_with_zero_spread_is_the_hard_improvement() {
        assert_eq!(acquisition_ei(2.0, 0.0, 1.0), 0.0);
        assert_relative_eq!(acquisition_ei(0.25, 0.0, 1.0), 0.75);
    }

    #[test]
    fn ei_is_nonnegative_and_monotone_in_the_spread() {
        let mut prev = 0.0;
        for i in 1..=100 {
            let std = i as f64 * 0.05;
            let ei = acquisition_ei(0.5, std, 0.0); // mean above incumbent
            assert!(ei >= 0.0);
            assert!(ei > prev, "EI must grow with spread: {ei} vs {prev}");
            prev = ei;
        }
    }

    #[test]
    fn lcb_reduces_to_the_mean_without_exploration() {
        assert_relative_eq!(acquisition_lcb(1.3, 7.0, 0.0), -1.3);
        // beta = 0.5 at mean 1, std 2 cancels exactly.
        assert_relative_eq!(acquisition_lcb(1.0, 2.0, 0.5), 0.0);
    }

    #[test]
    fn lcb_prefers_spread_at_equal_means() {
        assert!(acquisition_lcb(1.0, 2.0, 5.0) > acquisition_lcb(1.0, 1.0, 5.0));
    }
}
