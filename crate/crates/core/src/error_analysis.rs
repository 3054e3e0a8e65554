//! The paper's two error metrics and the doubling-in-N scaling classifier.
//!
//! For an approximation `q̂` of the exact QSD `q` (Eqs 4.1–4.2):
//!
//! ```text
//! Err₁ = max_i |q̂_i − q_i|          (worst pointwise deviation)
//! Err₂ = ½ Σ_i |q̂_i − q_i|          (total variation distance)
//! ```
//!
//! Both are computed in working precision — the interesting values reach
//! 10⁻⁶¹, far below anything `f64` subtraction could resolve — and only
//! converted to `f64` for reporting. Eq (4.3) bounds every pointwise
//! deviation by Err₁ (trivially, it is the max) and by 2·Err₂ (a single
//! term never exceeds the sum); the paper notes the pointwise analogue
//! for Err₂ itself fails, and a recorded counterexample in the test suite
//! exhibits that failure.
//!
//! [`classify_scaling`] operationalizes the paper's verbal §4 claims
//! ("divided by approximately 2", "approximately squared for each
//! doubling of N") into ratio bands; the bands are a decision of this
//! library, chosen so that every column of the published tables lands in
//! its stated class while the three classes stay disjoint on those same
//! columns (see the constants for the calibration note).

use std::fmt;

use thiserror::Error;

use crate::approx::ApproxKind;
use crate::numerics::{stable_sum, NumericsError, Real};
use crate::qsd::Distribution;

/// Errors from metric evaluation and scaling classification.
#[derive(Debug, Error)]
pub enum ErrorAnalysisError {
    /// The two distributions live on different supports.
    #[error("distributions have different lengths: {left} vs {right}")]
    LengthMismatch { left: u32, right: u32 },
    /// A report violates the metric inequalities it must satisfy.
    #[error("invalid error report: {detail}")]
    InvalidReport { detail: String },
    /// The doubling-experiment inputs are malformed.
    #[error("invalid scaling samples: {detail}")]
    InvalidSamples { detail: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn check_lengths<T: Real>(
    qhat: &Distribution<T>,
    q: &Distribution<T>,
) -> Result<(), ErrorAnalysisError> {
    if qhat.n() != q.n() {
        return Err(ErrorAnalysisError::LengthMismatch {
            left: qhat.n(),
            right: q.n(),
        });
    }
    Ok(())
}

/// `Err₁ = max_i |q̂_i − q_i|` (Eq 4.1), in working precision.
pub fn err1<T: Real>(
    qhat: &Distribution<T>,
    q: &Distribution<T>,
) -> Result<T, ErrorAnalysisError> {
    check_lengths(qhat, q)?;
    let mut worst = T::zero();
    for (a, b) in qhat.probs().iter().zip(q.probs()) {
        let deviation = (a.clone() - b).abs();
        if deviation > worst {
            worst = deviation;
        }
    }
    Ok(worst)
}

/// `Err₂ = ½ Σ_i |q̂_i − q_i|` (Eq 4.2) — the total variation distance —
/// in working precision.
pub fn err2<T: Real>(
    qhat: &Distribution<T>,
    q: &Distribution<T>,
) -> Result<T, ErrorAnalysisError> {
    check_lengths(qhat, q)?;
    let deviations: Vec<T> = qhat
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a.clone() - b).abs())
        .collect();
    let total = stable_sum(&deviations)?;
    let two = total.int_like(2);
    Ok(total / &two)
}

/// Relative slack allowed when re-checking the metric inequalities on
/// `f64` snapshots: covers the final rounding from working precision.
const REPORT_SLACK: f64 = 1e-9;

/// One grid cell's error measurement, downconverted to `f64` for
/// reporting. Construction re-validates the metric inequalities
/// (`err1 ≤ 2·err2`, `err2 ≤ (N/2)·err1`, `0 ≤ err2 ≤ 1`), so a report
/// that exists is internally consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub approx: ApproxKind,
    pub n: u32,
    pub r0: f64,
    pub err1: f64,
    pub err2: f64,
    /// Significand bits of the context the cell was computed under.
    pub precision_bits: u32,
}

impl ErrorReport {
    pub fn new(
        approx: ApproxKind,
        n: u32,
        r0: f64,
        err1: f64,
        err2: f64,
        precision_bits: u32,
    ) -> Result<Self, ErrorAnalysisError> {
        let fail = |detail: String| Err(ErrorAnalysisError::InvalidReport { detail });
        if n == 0 || !r0.is_finite() || r0 <= 0.0 {
            return fail(format!("bad cell identity N = {n}, R0 = {r0}"));
        }
        if !err1.is_finite() || !err2.is_finite() || err1 < 0.0 || err2 < 0.0 {
            return fail(format!("errors must be finite and non-negative, got ({err1}, {err2})"));
        }
        if err2 > 1.0 + REPORT_SLACK {
            return fail(format!("err2 = {err2} exceeds 1, impossible for sub-probability vectors"));
        }
        if err1 > 2.0 * err2 * (1.0 + REPORT_SLACK) {
            return fail(format!("err1 = {err1} exceeds 2·err2 = {}", 2.0 * err2));
        }
        if err2 > (n as f64 / 2.0) * err1 * (1.0 + REPORT_SLACK) {
            return fail(format!("err2 = {err2} exceeds (N/2)·err1 = {}", n as f64 / 2.0 * err1));
        }
        Ok(ErrorReport {
            approx,
            n,
            r0,
            err1,
            err2,
            precision_bits,
        })
    }
}

/// The asymptotic order classes of §4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingClass {
    /// Error divided by ≈ 2 per doubling of N (decays like 1/N).
    Polynomial1OverN,
    /// Error approximately squared per doubling (decays like e^(−cN)).
    ExponentiallySmall,
    /// Error practically independent of N.
    Constant,
    /// None of the signatures matched.
    Inconclusive,
}

impl ScalingClass {
    pub fn label(&self) -> &'static str {
        match self {
            ScalingClass::Polynomial1OverN => "polynomial_1_over_N",
            ScalingClass::ExponentiallySmall => "exponentially_small",
            ScalingClass::Constant => "constant",
            ScalingClass::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for ScalingClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Outcome of a doubling experiment for one approximation at fixed R₀.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingVerdict {
    pub approx: ApproxKind,
    pub r0: f64,
    pub sampled_n: Vec<u32>,
    pub errors: Vec<f64>,
    pub verdict: ScalingClass,
}

/// Successive-ratio band for `polynomial_1_over_N`: halving per doubling,
/// with generous margin ("approximately 2" in the paper's words).
const POLY_BAND: (f64, f64) = (1.0 / 3.0, 2.0 / 3.0);
/// Successive-ratio band for `constant`.
const CONSTANT_BAND: (f64, f64) = (2.0 / 3.0, 1.5);
/// Band for the log-error ratio `log e(2N) / log e(N)` that identifies
/// squaring of the error. A clean e^(−cN) decay gives exactly 2; finite-N
/// prefactors drag the first doubling down (the sharpest above-threshold
/// columns of the published tables start near 1.56), so the lower edge
/// sits at 1.5 — still well clear of the 1/N signature, whose log-ratios
/// on table-sized errors stay below 1.3.
const EXP_LOG_BAND: (f64, f64) = (1.5, 2.4);

/// Classifies how an approximation's error scales as N doubles.
///
/// Inputs are the errors measured at `N, 2N, 4N, …` (at least three
/// samples). The decision rule, applied in order:
///
/// 1. every successive ratio `e(2N)/e(N)` in `[1/3, 2/3]` →
///    [`ScalingClass::Polynomial1OverN`];
/// 2. every ratio in `[2/3, 3/2]` → [`ScalingClass::Constant`];
/// 3. all errors below 1 and every `log e(2N)/log e(N)` in `[1.5, 2.4]`
///    → [`ScalingClass::ExponentiallySmall`];
/// 4. otherwise [`ScalingClass::Inconclusive`].
pub fn classify_scaling(
    approx: ApproxKind,
    r0: f64,
    sampled_n: &[u32],
    errors: &[f64],
) -> Result<ScalingVerdict, ErrorAnalysisError> {
    let invalid = |detail: String| Err(ErrorAnalysisError::InvalidSamples { detail });
    if sampled_n.len() < 3 {
        return invalid(format!(
            "need at least 3 doubling samples, got {}",
            sampled_n.len()
        ));
    }
    if sampled_n.len() != errors.len() {
        return invalid(format!(
            "{} population sizes but {} errors",
            sampled_n.len(),
            errors.len()
        ));
    }
    for window in sampled_n.windows(2) {
        if window[0] == 0 || window[0].checked_mul(2) != Some(window[1]) {
            return invalid(format!(
                "population sizes must double at each step, got {} then {}",
                window[0], window[1]
            ));
        }
    }
    for &e in errors {
        if !e.is_finite() || e <= 0.0 {
            return invalid(format!("errors must be finite and positive, got {e}"));
        }
    }

    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    let all_in = |band: (f64, f64)| ratios.iter().all(|r| *r >= band.0 && *r <= band.1);

    let verdict = if all_in(POLY_BAND) {
        ScalingClass::Polynomial1OverN
    } else if all_in(CONSTANT_BAND) {
        ScalingClass::Constant
    } else if errors.iter().all(|e| *e < 1.0)
        && errors
            .windows(2)
            .all(|w| {
                let log_ratio = w[1].ln() / w[0].ln();
                log_ratio >= EXP_LOG_BAND.0 && log_ratio <= EXP_LOG_BAND.1
            })
    {
        ScalingClass::ExponentiallySmall
    } else {
        ScalingClass::Inconclusive
    };

    Ok(ScalingVerdict {
        approx,
        r0,
        sampled_n: sampled_n.to_vec(),
        errors: errors.to_vec(),
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{default_context, rel_diff, MpFloat, PrecisionContext};
    use num_traits::Zero;
    use crate::qsd::ModelTag;

    fn mp(v: f64, ctx: &PrecisionContext) -> MpFloat {
        MpFloat::from_f64(v, ctx)
    }

    fn dist(probs: &[f64], ctx: &PrecisionContext) -> Distribution<MpFloat> {
        let tag = ModelTag::new(probs.len() as u32, 2.0, 0.0);
        Distribution::from_probs(probs.iter().map(|p| mp(*p, ctx)).collect(), tag, ctx).unwrap()
    }

    #[test]
    fn err_metrics_by_hand() {
        let ctx = default_context(2, 2.0);
        let a = dist(&[1.0, 0.0], &ctx);
        let b = dist(&[0.25, 0.75], &ctx);
        let c = dist(&[0.0, 1.0], &ctx);
        assert!(err1(&a, &a).unwrap().to_f64() == 0.0);
        assert!(err2(&a, &a).unwrap().to_f64() == 0.0);
        assert_eq!(err1(&a, &b).unwrap().to_f64(), 0.75);
        assert_eq!(err2(&a, &b).unwrap().to_f64(), 0.75);
        // Disjoint point masses are at full total-variation distance.
        assert_eq!(err2(&a, &c).unwrap().to_f64(), 1.0);
        assert_eq!(err1(&a, &c).unwrap().to_f64(), 1.0);
    }

    #[test]
    fn err_metrics_are_symmetric_and_triangular() {
        let ctx = default_context(3, 2.0);
        let a = dist(&[0.5, 0.25, 0.25], &ctx);
        let b = dist(&[0.125, 0.75, 0.125], &ctx);
        let c = dist(&[0.25, 0.25, 0.5], &ctx);
        assert!(rel_diff(&err1(&a, &b).unwrap(), &err1(&b, &a).unwrap()).is_zero());
        assert!(rel_diff(&err2(&a, &b).unwrap(), &err2(&b, &a).unwrap()).is_zero());
        let direct = err2(&a, &c).unwrap();
        let detour = err2(&a, &b).unwrap() + &err2(&b, &c).unwrap();
        assert!(direct <= detour);
    }

    #[test]
    fn err_metrics_reject_length_mismatch() {
        let ctx = default_context(3, 2.0);
        let a = dist(&[0.5, 0.5], &ctx);
        let b = dist(&[0.25, 0.5, 0.25], &ctx);
        assert!(matches!(
            err1(&a, &b),
            Err(ErrorAnalysisError::LengthMismatch { left: 2, right: 3 })
        ));
        assert!(matches!(
            err2(&a, &b),
            Err(ErrorAnalysisError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn error_report_enforces_the_metric_inequalities() {
        let ok = ErrorReport::new(ApproxKind::P0, 50, 2.0, 1e-3, 6e-4, 512);
        assert!(ok.is_ok());
        // err1 > 2·err2 is impossible.
        assert!(ErrorReport::new(ApproxKind::P0, 50, 2.0, 1e-3, 4e-4, 512).is_err());
        // err2 > (N/2)·err1 is impossible.
        assert!(ErrorReport::new(ApproxKind::P0, 4, 2.0, 1e-4, 3e-4, 512).is_err());
        // err2 is capped at 1.
        assert!(ErrorReport::new(ApproxKind::P0, 50, 2.0, 1.8, 1.2, 512).is_err());
        // Boundary cases survive the f64 slack.
        assert!(ErrorReport::new(ApproxKind::P0, 2, 2.0, 1.0, 0.5, 512).is_ok());
        assert!(ErrorReport::new(ApproxKind::P0, 2, 2.0, 0.0, 0.0, 512).is_ok());
        assert!(ErrorReport::new(ApproxKind::P0, 50, -1.0, 1e-3, 6e-4, 512).is_err());
        assert!(ErrorReport::new(ApproxKind::P0, 50, 2.0, f64::NAN, 6e-4, 512).is_err());
    }

    #[test]
    fn classifier_identifies_halving_as_polynomial() {
        let v = classify_scaling(ApproxKind::P1, 2.0, &[25, 50, 100], &[1.0e-2, 5.0e-3, 2.5e-3])
            .unwrap();
        assert_eq!(v.verdict, ScalingClass::Polynomial1OverN);
        // Published below-threshold p⁽¹⁾ column at R0 = 0.5.
        let table = classify_scaling(
            ApproxKind::P1,
            0.5,
            &[25, 50, 100],
            &[13e-3, 7.9e-3, 4.4e-3],
        )
        .unwrap();
        assert_eq!(table.verdict, ScalingClass::Polynomial1OverN);
    }

    #[test]
    fn classifier_identifies_squaring_as_exponential() {
        let v = classify_scaling(ApproxKind::P0, 2.0, &[25, 50, 100], &[1e-4, 1e-8, 1e-16])
            .unwrap();
        assert_eq!(v.verdict, ScalingClass::ExponentiallySmall);
        // Published p⁽⁰⁾ column at R0 = 2.
        let p0 = classify_scaling(
            ApproxKind::P0,
            2.0,
            &[25, 50, 100],
            &[7.5e-3, 9.0e-5, 8.1e-9],
        )
        .unwrap();
        assert_eq!(p0.verdict, ScalingClass::ExponentiallySmall);
        // Published OV3 column at R0 = 2: its first log-ratio is ≈ 1.56,
        // the case that pins the band's lower edge.
        let ov3 = classify_scaling(
            ApproxKind::Ov3,
            2.0,
            &[25, 50, 100],
            &[8.1e-4, 1.5e-5, 1.4e-9],
        )
        .unwrap();
        assert_eq!(ov3.verdict, ScalingClass::ExponentiallySmall);
    }

    #[test]
    fn classifier_identifies_flat_errors_as_constant() {
        // Published below-threshold p⁽⁰⁾ column at R0 = 0.5: "practically
        // independent of the population size".
        let v = classify_scaling(ApproxKind::P0, 0.5, &[25, 50, 100], &[0.19, 0.20, 0.21])
            .unwrap();
        assert_eq!(v.verdict, ScalingClass::Constant);
    }

    #[test]
    fn classifier_band_edges_and_fallback() {
        // Ratio exactly 2/3 (to the f64 ulp) belongs to the polynomial
        // class — the first matching band wins.
        let edge = classify_scaling(ApproxKind::G1, 0.5, &[10, 20, 40], &[0.75, 0.5, 1.0 / 3.0])
            .unwrap();
        assert_eq!(edge.verdict, ScalingClass::Polynomial1OverN);
        // Growing errors above 1 match no signature.
        let grow = classify_scaling(ApproxKind::G1, 0.5, &[10, 20, 40], &[2.0, 4.0, 16.0]).unwrap();
        assert_eq!(grow.verdict, ScalingClass::Inconclusive);
    }

    #[test]
    fn classifier_rejects_malformed_experiments() {
        let errs = [1e-2, 5e-3, 2.5e-3];
        assert!(classify_scaling(ApproxKind::P0, 2.0, &[25, 50], &errs[..2]).is_err());
        assert!(classify_scaling(ApproxKind::P0, 2.0, &[25, 50, 90], &errs).is_err());
        assert!(classify_scaling(ApproxKind::P0, 2.0, &[25, 50, 100], &[1e-2, 0.0, 1e-3]).is_err());
        assert!(classify_scaling(ApproxKind::P0, 2.0, &[25, 50, 100], &errs[..2]).is_err());
    }
}
