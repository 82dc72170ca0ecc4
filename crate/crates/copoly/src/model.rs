//! Charge laws, moment generating function, Cramér rate function and the
//! closed-form bound curves h^(m).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distribution of a single charge. Both laws are centered with unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChargeLaw {
    /// P(w = +1) = P(w = -1) = 1/2.
    BernoulliSymmetric,
    /// N(0, 1).
    StandardGaussian,
}

impl ChargeLaw {
    pub fn tag(self) -> &'static str {
        match self {
            ChargeLaw::BernoulliSymmetric => "bernoulli",
            ChargeLaw::StandardGaussian => "gaussian",
        }
    }
}

impl std::fmt::Display for ChargeLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for ChargeLaw {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s.to_ascii_lowercase().as_str() {
            "bernoulli" | "binary" => Ok(ChargeLaw::BernoulliSymmetric),
            "gaussian" | "normal" => Ok(ChargeLaw::StandardGaussian),
            other => Err(ModelError::UnknownLaw(other.to_owned())),
        }
    }
}

/// Coupling strength and bias of the interaction, together with the charge law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolymerParams {
    pub lambda: f64,
    pub h: f64,
    pub law: ChargeLaw,
}

impl PolymerParams {
    pub fn new(lambda: f64, h: f64, law: ChargeLaw) -> Result<Self, ModelError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(ModelError::NegativeParam("lambda", lambda));
        }
        if !(h >= 0.0) || !h.is_finite() {
            return Err(ModelError::NegativeParam("h", h));
        }
        Ok(PolymerParams { lambda, h, law })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown charge law `{0}` (expected `bernoulli` or `gaussian`)")]
    UnknownLaw(String),
    #[error("{0} must be finite and non-negative, got {1}")]
    NegativeParam(&'static str, f64),
    #[error("the bound curve h^(m) is defined by its slope at lambda = 0; pass lambda > 0")]
    ZeroLambda,
    #[error("slope parameter m must be positive, got {0}")]
    NonPositiveSlope(f64),
}

/// ln(cosh(x)) without overflow for large |x|.
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Moment generating function E[exp(alpha * w)].
pub fn mgf(law: ChargeLaw, alpha: f64) -> f64 {
    match law {
        ChargeLaw::BernoulliSymmetric => alpha.cosh(),
        ChargeLaw::StandardGaussian => (alpha * alpha / 2.0).exp(),
    }
}

/// log of the moment generating function, stable for large arguments.
pub fn log_mgf(law: ChargeLaw, alpha: f64) -> f64 {
    match law {
        ChargeLaw::BernoulliSymmetric => log_cosh(alpha),
        ChargeLaw::StandardGaussian => alpha * alpha / 2.0,
    }
}

/// The bound-curve family h^(m)(lambda) = log M(-2 m lambda) / (2 m lambda).
///
/// m = 2/3 gives the lower bound on the critical curve, m = 1 the upper bound.
pub fn h_m(law: ChargeLaw, m: f64, lambda: f64) -> Result<f64, ModelError> {
    if !(m > 0.0) {
        return Err(ModelError::NonPositiveSlope(m));
    }
    if !(lambda > 0.0) {
        return Err(ModelError::ZeroLambda);
    }
    Ok(match law {
        // M(-x) = M(x) for both laws; for the Gaussian the ratio is exactly m*lambda.
        ChargeLaw::BernoulliSymmetric => log_cosh(2.0 * m * lambda) / (2.0 * m * lambda),
        ChargeLaw::StandardGaussian => m * lambda,
    })
}

/// Lower bound curve on the critical line (slope 2/3 at the origin).
pub fn h_lower(law: ChargeLaw, lambda: f64) -> Result<f64, ModelError> {
    h_m(law, 2.0 / 3.0, lambda)
}

/// Upper bound curve on the critical line (slope 1 at the origin).
pub fn h_upper(law: ChargeLaw, lambda: f64) -> Result<f64, ModelError> {
    h_m(law, 1.0, lambda)
}

/// Cramér rate function Sigma(q) = sup_a { a q - log M(a) }, in closed form.
///
/// Outside the Bernoulli support the rate is `f64::INFINITY`; callers treat
/// that as "a stretch at this level is impossible".
pub fn cramer_rate(law: ChargeLaw, q: f64) -> f64 {
    match law {
        ChargeLaw::StandardGaussian => q * q / 2.0,
        ChargeLaw::BernoulliSymmetric => {
            if q.abs() > 1.0 {
                f64::INFINITY
            } else if q.abs() == 1.0 {
                std::f64::consts::LN_2
            } else {
                let p = (1.0 + q) / 2.0;
                let r = (1.0 - q) / 2.0;
                let term = |x: f64| if x == 0.0 { 0.0 } else { x * (2.0 * x).ln() };
                term(p) + term(r)
            }
        }
    }
}

/// The tilted mean q0 = M'(-4 lambda / 3) / M(-4 lambda / 3).
///
/// This is the optimal stretch level for the lower-bound strategy: it satisfies
/// (-4 lambda / 3) q0 - Sigma(q0) = log M(-4 lambda / 3).
pub fn optimal_q(law: ChargeLaw, lambda: f64) -> f64 {
    let alpha = -4.0 * lambda / 3.0;
    match law {
        ChargeLaw::BernoulliSymmetric => alpha.tanh(),
        ChargeLaw::StandardGaussian => alpha,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAWS: [ChargeLaw; 2] = [ChargeLaw::BernoulliSymmetric, ChargeLaw::StandardGaussian];

    /// Legendre transform by golden-section search, used as an independent
    /// route to the closed-form rate function.
    fn legendre_numeric(law: ChargeLaw, q: f64) -> f64 {
        let f = |a: f64| a * q - log_mgf(law, a);
        let (mut lo, mut hi) = (-60.0, 60.0);
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (hi - inv_phi * (hi - lo), lo + inv_phi * (hi - lo));
        let (mut fa, mut fb) = (f(a), f(b));
        for _ in 0..120 {
            if fa > fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - inv_phi * (hi - lo);
                fa = f(a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + inv_phi * (hi - lo);
                fb = f(b);
            }
        }
        f(0.5 * (lo + hi))
    }

    #[test]
    fn mgf_values() {
        assert_eq!(mgf(ChargeLaw::BernoulliSymmetric, 0.0), 1.0);
        assert_eq!(mgf(ChargeLaw::StandardGaussian, 0.0), 1.0);
        assert!((mgf(ChargeLaw::StandardGaussian, 2.0) - 2f64.exp()).abs() < 1e-12);
        // independent scalar route: (e^-0.8 + e^0.8) / 2
        let direct = ((-0.8f64).exp() + (0.8f64).exp()) / 2.0;
        assert!((mgf(ChargeLaw::BernoulliSymmetric, -0.8) - direct).abs() < 1e-15);
        assert!((direct - 1.3374349463048447).abs() < 1e-12);
    }

    #[test]
    fn bound_curve_values() {
        // Gaussian closed form is exact.
        assert_eq!(h_m(ChargeLaw::StandardGaussian, 0.9, 0.5).unwrap(), 0.45);
        // rounded table values for lambda = 0.6
        let lo = h_lower(ChargeLaw::BernoulliSymmetric, 0.6).unwrap();
        let hi = h_upper(ChargeLaw::BernoulliSymmetric, 0.6).unwrap();
        assert!((lo - 0.363).abs() < 5e-4, "h_lower(0.6) = {lo}");
        assert!((hi - 0.495).abs() < 5e-4, "h_upper(0.6) = {hi}");
        assert_eq!(h_m(ChargeLaw::BernoulliSymmetric, 1.0, 0.0), Err(ModelError::ZeroLambda));
        assert!(h_m(ChargeLaw::BernoulliSymmetric, 0.0, 1.0).is_err());
    }

    #[test]
    fn bound_curves_ordered() {
        for law in LAWS {
            for &l in &[0.05, 0.1, 0.3, 0.6, 1.0, 2.0, 4.0, 8.0] {
                let lo = h_lower(law, l).unwrap();
                let hi = h_upper(law, l).unwrap();
                assert!(lo < hi, "ordering failed at lambda = {l} for {law:?}");
            }
        }
    }

    #[test]
    fn bound_curve_slope_at_origin() {
        for law in LAWS {
            for &m in &[2.0 / 3.0, 0.9, 1.0] {
                for &l in &[1e-3, 1e-4] {
                    let ratio = h_m(law, m, l).unwrap() / l;
                    assert!((ratio - m).abs() < 1e-2 * m, "slope {ratio} vs {m} at {l}");
                }
            }
        }
    }

    #[test]
    fn log_cosh_large_argument() {
        // cosh overflows near 710; the stable form must not.
        let v = h_m(ChargeLaw::BernoulliSymmetric, 1.0, 600.0).unwrap();
        assert!(v.is_finite());
        // log cosh x ~ x - log 2 for large x
        let expect = (1200.0 - std::f64::consts::LN_2) / 1200.0;
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn rate_function_values() {
        assert_eq!(cramer_rate(ChargeLaw::StandardGaussian, 0.0), 0.0);
        assert_eq!(cramer_rate(ChargeLaw::BernoulliSymmetric, 0.0), 0.0);
        assert!((cramer_rate(ChargeLaw::BernoulliSymmetric, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((cramer_rate(ChargeLaw::BernoulliSymmetric, -1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(cramer_rate(ChargeLaw::BernoulliSymmetric, -1.5), f64::INFINITY);
        assert_eq!(cramer_rate(ChargeLaw::BernoulliSymmetric, 2.0), f64::INFINITY);
        // frozen from the golden-section oracle below
        let direct = legendre_numeric(ChargeLaw::BernoulliSymmetric, -0.5);
        assert!((direct - 0.13081203594113694).abs() < 1e-9);
        assert!((cramer_rate(ChargeLaw::BernoulliSymmetric, -0.5) - 0.13081203594113694).abs() < 1e-12);
    }

    #[test]
    fn rate_function_duality() {
        for law in LAWS {
            let grid: Vec<f64> = (-9..=9).map(|i| i as f64 / 10.0).collect();
            for &q in &grid {
                let closed = cramer_rate(law, q);
                let numeric = legendre_numeric(law, q);
                assert!(
                    (closed - numeric).abs() < 1e-8,
                    "duality gap {} at q = {q} for {law:?}",
                    (closed - numeric).abs()
                );
            }
        }
    }

    #[test]
    fn rate_function_convex_nonnegative() {
        for law in LAWS {
            let grid: Vec<f64> = (-99..=99).map(|i| i as f64 / 100.0).collect();
            for w in grid.windows(3) {
                let (a, b, c) = (cramer_rate(law, w[0]), cramer_rate(law, w[1]), cramer_rate(law, w[2]));
                assert!(b >= 0.0);
                assert!(a + c - 2.0 * b >= -1e-12, "convexity violated near q = {}", w[1]);
            }
            assert_eq!(cramer_rate(law, 0.0), 0.0);
        }
    }

    #[test]
    fn optimal_q_values() {
        assert_eq!(optimal_q(ChargeLaw::StandardGaussian, 0.75), -1.0);
        let q = optimal_q(ChargeLaw::BernoulliSymmetric, 0.6);
        assert!((q - (-0.8f64).tanh()).abs() < 1e-15);
        assert!((q + 0.664036770267849).abs() < 1e-12);
        // small-lambda linearization q0 ~ -4 lambda / 3
        let q_small = optimal_q(ChargeLaw::BernoulliSymmetric, 1e-4);
        assert!((q_small + 4.0 * 1e-4 / 3.0).abs() < 1e-9);
        assert!((q_small + 1.3333e-4).abs() < 1e-7);
    }

    #[test]
    fn optimal_q_fixed_point() {
        for law in LAWS {
            for &l in &[0.1, 0.6, 1.0, 4.0] {
                let alpha = -4.0 * l / 3.0;
                let q0 = optimal_q(law, l);
                let gap = alpha * q0 - cramer_rate(law, q0) - log_mgf(law, alpha);
                assert!(gap.abs() < 1e-10, "fixed point gap {gap} at lambda {l} for {law:?}");
            }
        }
    }
}
