//! Delocalization diagnostics (endpoint profile against the Brownian-meander
//! prediction) and the critical-curve estimation pipeline.

use crate::disorder::{self, DisorderError, Environment, StretchRecord};
use crate::engine::{self, EngineError, SweepOptions, Window};
use crate::model::{self, ChargeLaw, PolymerParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("pinned value does not straddle 1 on the bracket: log Z = {f_lo:.3e} at h = {lo}, {f_hi:.3e} at h = {hi}")]
    BracketFailure { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("no slope in (0, 2] matches the anchored bound curve")]
    SlopeNotBracketed,
    #[error("no critical-curve point at the anchor lambda = {0}")]
    AnchorMissing(f64),
    #[error("point list is empty")]
    EmptyPoints,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Disorder(#[from] DisorderError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
}

/// Endpoint density of the Brownian meander: `x exp(-x^2/2)` on `x >= 0`.
pub fn meander_density(x: f64) -> f64 {
    if x >= 0.0 {
        x * (-x * x / 2.0).exp()
    } else {
        0.0
    }
}

/// Discretized meander mass at even walk height `x` for a polymer of size
/// `n`: the density at `x / sqrt(n)` times the lattice spacing `2 / sqrt(n)`.
pub fn meander_target(x: i64, size: usize) -> f64 {
    let root = (size as f64).sqrt();
    2.0 / root * meander_density(x as f64 / root)
}

/// Total discretized meander mass over the even lattice (tends to 1; a
/// sanity check for the normalization convention).
pub fn meander_target_mass(size: usize) -> f64 {
    let mut x = 0i64;
    let mut total = 0.0;
    loop {
        let t = meander_target(x, size);
        total += t;
        x += 2;
        if x as f64 > 10.0 * (size as f64).sqrt() {
            return total;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanderDistanceResult {
    /// l1 distance between the endpoint law and the meander discretization.
    pub distance: f64,
    pub system_size: usize,
    pub lambda: f64,
    pub h: f64,
    /// `(seed, sample_index)` of the environment.
    pub env_id: (u64, u64),
}

/// l1 distance between the endpoint distribution of the size-`size` polymer
/// under the backward environment and the discretized meander profile.
pub fn meander_distance(
    env: &Environment,
    params: &PolymerParams,
    size: usize,
    window: Option<Window>,
) -> Result<MeanderDistanceResult, AnalysisError> {
    let reversed = env.reversed(size)?;
    let opts = SweepOptions { window, want_profile: true, ..Default::default() };
    let result = engine::sweep(reversed, params, size, &opts)?;
    let profile = result.profile.expect("profile requested");
    let mass = profile.total_mass();
    let mut distance = 0.0;
    for (x, v) in profile.heights() {
        distance += (v / mass - meander_target(x, size)).abs();
    }
    Ok(MeanderDistanceResult {
        distance,
        system_size: size,
        lambda: params.lambda,
        h: params.h,
        env_id: (env.seed(), env.sample_index()),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalCurvePoint {
    pub lambda: f64,
    pub h_hat: f64,
    /// Sweep size used for the estimate (`2N` in the half-size convention).
    pub size: usize,
    pub env_id: (u64, u64),
    pub bisection_width: f64,
    /// True when the root is pressed against the saturation bias of the
    /// charge sequence (unbounded-charge effect at large coupling).
    pub saturated: bool,
}

/// Estimate of the critical bias at fixed coupling: the `h` solving
/// `Z_size(0) = 1`, found by bisection using the monotonicity of the pinned
/// value in `h`. The default bracket is `(0, min(h_sat, 2))`.
pub fn estimate_h_hat(
    env: &Environment,
    lambda: f64,
    size: usize,
    tol: f64,
    bracket: Option<(f64, f64)>,
    window: Option<Window>,
) -> Result<CriticalCurvePoint, AnalysisError> {
    let law = env.law();
    let h_sat = env.saturation_bias(size);
    let (mut lo, mut hi) = bracket.unwrap_or((0.0, 2.0));
    hi = hi.min(h_sat);
    let opts = SweepOptions { window, ..Default::default() };
    let pinned = |h: f64| -> Result<f64, AnalysisError> {
        let p = PolymerParams::new(lambda, h, law)?;
        Ok(engine::sweep(env.view(), &p, size, &opts)?.pinned_log)
    };
    let f_lo = pinned(lo)?;
    let f_hi = pinned(hi)?;
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(AnalysisError::BracketFailure { lo, hi, f_lo, f_hi });
    }
    for _ in 0..60 {
        if hi - lo < tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pinned(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h_hat = 0.5 * (lo + hi);
    let width = 0.5 * (hi - lo);
    Ok(CriticalCurvePoint {
        lambda,
        h_hat,
        size,
        env_id: (env.seed(), env.sample_index()),
        bisection_width: width,
        saturated: h_hat + width >= h_sat,
    })
}

/// How the slope of the fitted bound curve is selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitCriterion {
    /// Solve `h^(m)(lambda0) = h_hat(lambda0)` for `m`.
    AnchorAtLambda(f64),
    /// Largest `h_hat / lambda` over the points (exact for Gaussian charges,
    /// where `h^(m)` is the straight line `m lambda`).
    MaxRatio,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeFit {
    pub m: f64,
    /// Per-point relative errors `(h^(m)(lambda) - h_hat) / h_hat`.
    pub relative_errors: Vec<(f64, f64)>,
}

/// Fit the one-parameter family `h^(m)` through the estimated critical points.
pub fn fit_m(
    points: &[CriticalCurvePoint],
    law: ChargeLaw,
    criterion: FitCriterion,
) -> Result<SlopeFit, AnalysisError> {
    if points.is_empty() {
        return Err(AnalysisError::EmptyPoints);
    }
    let m = match criterion {
        FitCriterion::MaxRatio => points
            .iter()
            .map(|p| p.h_hat / p.lambda)
            .fold(f64::NEG_INFINITY, f64::max),
        FitCriterion::AnchorAtLambda(lambda0) => {
            let anchor = points
                .iter()
                .find(|p| (p.lambda - lambda0).abs() < 1e-12)
                .ok_or(AnalysisError::AnchorMissing(lambda0))?;
            // h^(m)(lambda) is increasing in m, so bisect on (0, 2].
            let target = anchor.h_hat;
            let g = |m: f64| model::h_m(law, m, lambda0).unwrap() - target;
            let (mut lo, mut hi) = (1e-9, 2.0);
            if !(g(lo) < 0.0 && g(hi) > 0.0) {
                return Err(AnalysisError::SlopeNotBracketed);
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-12 {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
    };
    let relative_errors = points
        .iter()
        .map(|p| {
            let curve = model::h_m(law, m, p.lambda).unwrap();
            (p.lambda, (curve - p.h_hat) / p.h_hat)
        })
        .collect();
    Ok(SlopeFit { m, relative_errors })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthScan {
    /// `(size, pinned log-value)` along one sweep.
    pub trace: Vec<(usize, f64)>,
    /// Max over the trace of `log Z(0) + (1/2) log size`, relative to its
    /// median. Free-walk decay makes this flat; sudden growth episodes
    /// (atypical stretches) push it up.
    pub spike_stat: f64,
    /// True when the spike statistic exceeds 2 natural-log units.
    pub spike_flag: bool,
}

/// Record the pinned log-value at each grid size along a single sweep and
/// summarize the deviation from square-root decay.
pub fn checkpoint_growth_scan(
    env: &Environment,
    params: &PolymerParams,
    n_max: usize,
    grid: &[usize],
    window: Option<Window>,
) -> Result<GrowthScan, AnalysisError> {
    let opts = SweepOptions {
        window,
        checkpoints: grid.to_vec(),
        ..Default::default()
    };
    let result = engine::sweep(env.view(), params, n_max, &opts)?;
    let trace = result.crossing_trace.unwrap_or_default();
    let adjusted: Vec<f64> = trace
        .iter()
        .filter(|&&(n, _)| n > 0)
        .map(|&(n, logz)| logz + 0.5 * (n as f64).ln())
        .collect();
    let spike_stat = if adjusted.is_empty() {
        0.0
    } else {
        let max = adjusted.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        max - crate::stats::median(&adjusted)
    };
    Ok(GrowthScan { trace, spike_stat, spike_flag: spike_stat > 2.0 })
}

/// Rigorous part of the stretch lower bound: `log` of the guaranteed pinned
/// value at the stretch stopping time, as a function of the scan length `a`
/// and slack `epsilon`, with the stretch level at its optimal tilt.
pub fn certificate_exponent(law: ChargeLaw, lambda: f64, h: f64, a: usize, epsilon: f64) -> f64 {
    // return-law constant: K(x) >= sqrt(2/pi) x^(-3/2) on the even lattice
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let log_c_prime = (c * c / (8.0 * std::f64::consts::SQRT_2)).ln();
    let af = a as f64;
    let bracket = model::log_mgf(law, -4.0 * lambda / 3.0) - (4.0 * lambda / 3.0) * h
        - af.ln() / af
        - epsilon;
    log_c_prime + 1.5 * af * bracket
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StretchCertificate {
    pub record: StretchRecord,
    /// Measured pinned log-value at the stopping time (None when censored).
    pub log_z_at_t: Option<f64>,
    /// Analytic lower bound on that value from the stretch construction.
    pub analytic_bound: f64,
    /// True when the measured value is positive, the finite-volume witness
    /// of localization.
    pub measured_positive: bool,
}

/// Locate the stretch stopping time at the optimally tilted level, evaluate
/// the true pinned value there, and report it next to the analytic bound.
pub fn stretch_certificate(
    env: &Environment,
    params: &PolymerParams,
    q: Option<f64>,
    a: usize,
    epsilon: f64,
    cap: usize,
    window: Option<Window>,
) -> Result<StretchCertificate, AnalysisError> {
    let q = q.unwrap_or_else(|| model::optimal_q(env.law(), params.lambda));
    let record = disorder::find_t(env, q, a, epsilon, cap)?;
    let analytic_bound = certificate_exponent(env.law(), params.lambda, params.h, a, epsilon);
    let log_z_at_t = match record.t {
        Some(t) => {
            let opts = SweepOptions { window, ..Default::default() };
            Some(engine::sweep(env.view(), params, t, &opts)?.pinned_log)
        }
        None => None,
    };
    Ok(StretchCertificate {
        record,
        log_z_at_t,
        analytic_bound,
        measured_positive: log_z_at_t.is_some_and(|v| v > 0.0),
    })
}

pub fn write_meander_csv<W: std::io::Write>(
    rows: &[MeanderDistanceResult],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "seed,sample_index,size,lambda,h,distance")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{:.16e}",
            r.env_id.0, r.env_id.1, r.system_size, r.lambda, r.h, r.distance
        )?;
    }
    Ok(())
}

pub fn write_critical_curve_csv<W: std::io::Write>(
    points: &[CriticalCurvePoint],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "lambda,h_hat,width,size,saturated")?;
    for p in points {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{},{}",
            p.lambda, p.h_hat, p.bisection_width, p.size, p.saturated
        )?;
    }
    Ok(())
}

pub fn write_relative_errors_csv<W: std::io::Write>(
    errors: &[(f64, f64)],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "lambda,relative_error")?;
    for &(l, e) in errors {
        writeln!(out, "{:.16e},{:.16e}", l, e)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::generate;

    fn bparams(lambda: f64, h: f64) -> PolymerParams {
        PolymerParams::new(lambda, h, ChargeLaw::BernoulliSymmetric).unwrap()
    }

    #[test]
    fn meander_target_mass_approaches_one() {
        let m = meander_target_mass(10_000);
        assert!((m - 1.0).abs() < 5e-3, "target mass {m}");
        let m = meander_target_mass(1_000_000);
        assert!((m - 1.0).abs() < 5e-4, "target mass {m}");
    }

    /// Independent route to the free-walk distance: exact binomial endpoint
    /// probabilities against the discretized meander.
    fn free_walk_distance(size: usize) -> f64 {
        // central probability by the ratio recursion, then outward ratios
        let half = size / 2;
        let mut center = 1.0f64;
        for i in 1..=half {
            center *= (2 * i - 1) as f64 / (2 * i) as f64;
        }
        // p(2y) for y = 0..half: p_(y+1) = p_y * (half - y) / (half + y + 1)
        let mut dist = (center - meander_target(0, size)).abs();
        let mut p = center;
        for y in 0..half as i64 {
            p *= (half as f64 - y as f64) / (half as f64 + y as f64 + 1.0);
            let x = 2 * (y + 1);
            dist += (p - meander_target(x, size)).abs(); // positive side
            dist += p; // negative side: target is zero there
        }
        dist
    }

    #[test]
    fn free_walk_profile_is_not_a_meander() {
        let size = 10_000;
        let env = generate(ChargeLaw::BernoulliSymmetric, size, 3, 0).unwrap();
        let r = meander_distance(&env, &bparams(0.0, 0.0), size, None).unwrap();
        let reference = free_walk_distance(size);
        assert!(
            (r.distance - reference).abs() < 1e-8,
            "engine {} vs binomial {}",
            r.distance,
            reference
        );
        // half the mass sits on the negative side plus the shape mismatch
        assert!((reference - 1.157).abs() < 0.02, "reference {reference}");
    }

    #[test]
    fn meander_distance_decreases_deep_in_delocalized_phase() {
        // far above the upper bound curve the endpoint law approaches the
        // meander along a dyadic ladder
        let env = generate(ChargeLaw::BernoulliSymmetric, 64_000, 5, 0).unwrap();
        let p = bparams(0.1, 0.5);
        let mut prev = f64::INFINITY;
        for &size in &[16_000usize, 32_000, 64_000] {
            let d = meander_distance(&env, &p, size, Some(Window::PAPER)).unwrap().distance;
            assert!(d < prev, "distance {d} did not decrease at size {size}");
            prev = d;
        }
        assert!(prev < 0.2);
    }

    #[test]
    fn h_hat_bisection_brackets_root() {
        let size = 20_000;
        let env = generate(ChargeLaw::BernoulliSymmetric, size, 8, 0).unwrap();
        let point = estimate_h_hat(&env, 1.0, size, 1e-6, None, Some(Window::PAPER)).unwrap();
        assert!(point.bisection_width <= 5e-7);
        assert!(point.h_hat > 0.3 && point.h_hat < 1.0, "h_hat = {}", point.h_hat);
        assert!(!point.saturated);
        // re-evaluate the bracket certificate
        let opts = SweepOptions { window: Some(Window::PAPER), ..Default::default() };
        let below = engine::sweep(
            env.view(),
            &bparams(1.0, point.h_hat - point.bisection_width),
            size,
            &opts,
        )
        .unwrap()
        .pinned_log;
        let above = engine::sweep(
            env.view(),
            &bparams(1.0, point.h_hat + point.bisection_width),
            size,
            &opts,
        )
        .unwrap()
        .pinned_log;
        assert!(below > 0.0 && above < 0.0);
        // reproducible to the last bit
        let again = estimate_h_hat(&env, 1.0, size, 1e-6, None, Some(Window::PAPER)).unwrap();
        assert_eq!(point.h_hat.to_bits(), again.h_hat.to_bits());
    }

    #[test]
    fn h_hat_free_walk_fails_bracket() {
        let env = generate(ChargeLaw::BernoulliSymmetric, 2000, 9, 0).unwrap();
        match estimate_h_hat(&env, 0.0, 2000, 1e-6, None, None) {
            Err(AnalysisError::BracketFailure { f_lo, .. }) => assert!(f_lo < 0.0),
            other => panic!("expected bracket failure, got {other:?}"),
        }
    }

    #[test]
    fn bernoulli_saturation_bias_is_one() {
        let env = generate(ChargeLaw::BernoulliSymmetric, 10_000, 10, 0).unwrap();
        assert_eq!(env.saturation_bias(10_000), 1.0);
    }

    #[test]
    fn fit_m_exact_linear_family() {
        let points: Vec<CriticalCurvePoint> = [0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&l| CriticalCurvePoint {
                lambda: l,
                h_hat: 0.8 * l,
                size: 100,
                env_id: (0, 0),
                bisection_width: 0.0,
                saturated: false,
            })
            .collect();
        let fit = fit_m(&points, ChargeLaw::StandardGaussian, FitCriterion::MaxRatio).unwrap();
        assert!((fit.m - 0.8).abs() < 1e-15);
        for &(_, e) in &fit.relative_errors {
            assert!(e.abs() < 1e-12);
        }
    }

    #[test]
    fn fit_m_max_ratio_with_noise() {
        let m_true = 0.8;
        let points: Vec<CriticalCurvePoint> = [0.5, 1.0, 2.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, &l)| CriticalCurvePoint {
                lambda: l,
                h_hat: m_true * l + if i % 2 == 0 { 1e-6 } else { -1e-6 },
                size: 100,
                env_id: (0, 0),
                bisection_width: 0.0,
                saturated: false,
            })
            .collect();
        let fit = fit_m(&points, ChargeLaw::StandardGaussian, FitCriterion::MaxRatio).unwrap();
        assert!((fit.m - m_true).abs() < 1e-5, "recovered {}", fit.m);
    }

    #[test]
    fn fit_m_anchored_solves_curve_equation() {
        // synthetic points taken on a Bernoulli bound curve with known slope
        let m_true = 0.84;
        let law = ChargeLaw::BernoulliSymmetric;
        let points: Vec<CriticalCurvePoint> = [0.5, 1.0, 4.0]
            .iter()
            .map(|&l| CriticalCurvePoint {
                lambda: l,
                h_hat: model::h_m(law, m_true, l).unwrap(),
                size: 100,
                env_id: (0, 0),
                bisection_width: 0.0,
                saturated: false,
            })
            .collect();
        let fit = fit_m(&points, law, FitCriterion::AnchorAtLambda(4.0)).unwrap();
        assert!((fit.m - m_true).abs() < 1e-9, "recovered {}", fit.m);
        // single point degenerate cases
        let single = &points[2..];
        let anchored = fit_m(single, law, FitCriterion::AnchorAtLambda(4.0)).unwrap();
        assert!((anchored.m - m_true).abs() < 1e-9);
        let ratio = fit_m(single, law, FitCriterion::MaxRatio).unwrap();
        assert!((ratio.m - points[2].h_hat / 4.0).abs() < 1e-15);
        assert!(matches!(
            fit_m(&points, law, FitCriterion::AnchorAtLambda(3.0)),
            Err(AnalysisError::AnchorMissing(_))
        ));
        assert!(matches!(
            fit_m(&[], law, FitCriterion::MaxRatio),
            Err(AnalysisError::EmptyPoints)
        ));
    }

    #[test]
    fn growth_scan_free_walk_is_flat() {
        let env = generate(ChargeLaw::BernoulliSymmetric, 40_000, 12, 0).unwrap();
        let grid: Vec<usize> = (1..=40).map(|i| i * 1000).collect();
        let scan =
            checkpoint_growth_scan(&env, &bparams(0.0, 0.0), 40_000, &grid, None).unwrap();
        assert_eq!(scan.trace.len(), 40);
        assert!(scan.spike_stat < 0.1, "spike stat {}", scan.spike_stat);
        assert!(!scan.spike_flag);
        // the adjusted trace hugs log sqrt(2/pi)
        let c = 0.5 * (2.0 / std::f64::consts::PI).ln();
        for &(n, logz) in &scan.trace[4..] {
            assert!((logz + 0.5 * (n as f64).ln() - c).abs() < 0.05, "at size {n}");
        }
    }

    #[test]
    fn certificate_exponent_monotone_in_scan_length() {
        // positive-margin regime: exponent increases with the scan length
        let mut prev = f64::NEG_INFINITY;
        for &a in &[8usize, 16, 32, 64, 128] {
            let e = certificate_exponent(ChargeLaw::BernoulliSymmetric, 0.6, 0.1, a, 0.05);
            assert!(e > prev);
            prev = e;
        }
        // vacuous regime: horizontal asymptote is negative for h above the
        // upper bound curve
        for &a in &[64usize, 256, 1024] {
            let e = certificate_exponent(ChargeLaw::BernoulliSymmetric, 0.6, 0.55, a, 0.05);
            assert!(e < 0.0);
        }
    }

    #[test]
    fn stretch_certificate_positive_in_localized_phase() {
        // h far below the lower bound curve: both the analytic bound and the
        // measured value certify localization at moderate scan lengths
        let p = bparams(0.6, 0.10);
        // guaranteed sign of the analytic bound at moderate scan length
        assert!(certificate_exponent(ChargeLaw::BernoulliSymmetric, 0.6, 0.10, 40, 0.05) > 0.0);
        // measured side: a loose rate slack accepts the first finite stretch,
        // whose endpoint is deep enough for the pinned value to be positive
        let mut non_censored = 0usize;
        let mut measured = 0usize;
        for seed in 0..8u64 {
            let env = generate(ChargeLaw::BernoulliSymmetric, 200_000, 900 + seed, 0).unwrap();
            let cert =
                stretch_certificate(&env, &p, None, 30, 0.5, 200_000, Some(Window::PAPER)).unwrap();
            if cert.record.censored() {
                continue;
            }
            non_censored += 1;
            assert!(cert.record.ell.unwrap() >= 30);
            assert_eq!(cert.record.t, cert.record.tau);
            if cert.measured_positive {
                measured += 1;
            }
        }
        assert!(non_censored >= 6, "too many censored runs: {non_censored}");
        assert_eq!(measured, non_censored, "measured pinned value not positive at T");
    }

    #[test]
    fn stretch_certificate_censored_propagates() {
        let env = disorder::from_charges(ChargeLaw::BernoulliSymmetric, vec![1.0; 100]).unwrap();
        let cert =
            stretch_certificate(&env, &bparams(0.6, 0.3), None, 10, 0.05, 100, None).unwrap();
        assert!(cert.record.censored());
        assert_eq!(cert.log_z_at_t, None);
        assert!(!cert.measured_positive);
    }
}
