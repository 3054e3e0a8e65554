//! Working-precision contract and numeric utilities shared by every module.
//!
//! The quantities in this crate span an enormous dynamic range: the weight
//! `π_n` involves `N!/(N−n)!` (up to ~10¹⁵⁷ at N = 100) multiplied by
//! `(R₀/N)ⁿ` (down to ~10⁻¹⁷⁰), and the error metrics subtract nearly equal
//! probabilities at relative scales down to 10⁻⁶¹. Plain `f64` cannot resolve
//! that; log-space arithmetic cannot either, because the error metrics need
//! true subtraction. Everything therefore runs on arbitrary-precision binary
//! floating point with a wide exponent range, behind the [`Real`]
//! abstraction:
//!
//! * [`PrecisionContext`] — the immutable precision/tolerance contract that
//!   every numeric operation takes explicitly. Precision is chosen per
//!   `(N, R₀)` pair by [`default_context`], so extreme cells do not slow the
//!   benign ones.
//! * [`Real`] — the scalar abstraction. Two instantiations are provided:
//!   plain `f64` (fast, limited range; fine for small models and for
//!   exploratory use) and [`MpFloat`] (MPFR-backed, used for everything the
//!   acceptance tables require).
//! * [`stable_sum`] — compensated (Kahan–Neumaier) summation, used for the
//!   normalizing denominators.
//! * [`rel_diff`] — guarded relative difference, the solver/oracle agreement
//!   metric.
//!
//! Tolerances are stored as powers of two (`2^-k`) rather than as scalar
//! fields: at the Table-1 extreme (1163 significand bits) the equality
//! tolerance is ~2⁻⁸⁷², far below the subnormal range of any fixed-width
//! float, so a tolerance can only be materialized inside the working type
//! itself (see [`PrecisionContext::fixed_point_tol`]).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{One, Zero};
use rug::float::Round;
use rug::ops::{CompleteRound, Pow};
use rug::Float;
use thiserror::Error;

/// Errors from precision configuration and numeric utilities.
#[derive(Debug, Error)]
pub enum NumericsError {
    /// `significand_bits` below the supported minimum of 64.
    #[error("significand_bits must be at least 64, got {0}")]
    PrecisionTooLow(u32),
    /// A tolerance exponent that the configured precision cannot represent
    /// with headroom (spec: `tol ≥ 2^(−significand_bits+8)`), or a tolerance
    /// outside `(0, 1)`.
    #[error("tolerance 2^-{exponent} is outside (0,1) or lacks headroom at {bits} significand bits")]
    ToleranceOutOfRange { exponent: u32, bits: u32 },
    /// The exponent range of the working scalar type was exhausted (overflow
    /// to infinity or total loss to NaN) — a precision-configuration
    /// problem, not a modelling one.
    #[error("exponent range of the working precision exceeded during {context}")]
    ExponentOverflow { context: &'static str },
}

/// Immutable working-precision contract threaded through every computation.
///
/// Holds the significand width in bits and two relative tolerances, each
/// stored as the (positive) exponent `k` of `2^-k`:
///
/// * `fixed_point_tol` — convergence tolerance for the iterative QSD
///   solvers; defaults to `2^-(bits/2)`.
/// * `equality_tol` — tolerance for cross-checking two computations of the
///   same quantity (closed form vs running product, solver vs oracle
///   normalization, …); defaults to `2^-(3·bits/4)`, which sits safely
///   between accumulated roundoff (~`2^-bits` plus slack) and
///   `fixed_point_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecisionContext {
    significand_bits: u32,
    fixed_point_tol_log2: u32,
    equality_tol_log2: u32,
}

impl PrecisionContext {
    /// Builds a context, validating the invariants:
    /// `bits ≥ 64`, both tolerances in `(0, 1)` (exponent ≥ 1), and both
    /// representable with headroom (exponent ≤ bits − 8).
    pub fn new(
        significand_bits: u32,
        fixed_point_tol_log2: u32,
        equality_tol_log2: u32,
    ) -> Result<Self, NumericsError> {
        if significand_bits < 64 {
            return Err(NumericsError::PrecisionTooLow(significand_bits));
        }
        for exponent in [fixed_point_tol_log2, equality_tol_log2] {
            if exponent < 1 || exponent > significand_bits - 8 {
                return Err(NumericsError::ToleranceOutOfRange {
                    exponent,
                    bits: significand_bits,
                });
            }
        }
        Ok(Self {
            significand_bits,
            fixed_point_tol_log2,
            equality_tol_log2,
        })
    }

    /// Builds a context from a bare precision with the standard tolerance
    /// schedule: `fixed_point_tol = 2^-(bits/2)` and
    /// `equality_tol = 2^-(3·bits/4)` (the halves left between them absorb
    /// accumulated rounding without ever tripping a legitimate identity).
    pub fn from_bits(significand_bits: u32) -> Result<Self, NumericsError> {
        Self::new(
            significand_bits,
            significand_bits / 2,
            3 * significand_bits / 4,
        )
    }

    /// Working precision in significand bits.
    pub fn significand_bits(&self) -> u32 {
        self.significand_bits
    }

    /// Exponent `k` of the convergence tolerance `2^-k`.
    pub fn fixed_point_tol_log2(&self) -> u32 {
        self.fixed_point_tol_log2
    }

    /// Exponent `k` of the cross-check tolerance `2^-k`.
    pub fn equality_tol_log2(&self) -> u32 {
        self.equality_tol_log2
    }

    /// The convergence tolerance materialized in the working type.
    pub fn fixed_point_tol<T: Real>(&self) -> T {
        T::pow2(-(self.fixed_point_tol_log2 as i64), self)
    }

    /// The cross-check tolerance materialized in the working type.
    pub fn equality_tol<T: Real>(&self) -> T {
        T::pow2(-(self.equality_tol_log2 as i64), self)
    }
}

/// Chooses a sufficient working precision for a given `(N, R₀)` cell.
///
/// The significand width is `max(256, ceil(3.5·N·log₂(max(R₀, 1/R₀, 2))))`.
/// The `N·log₂(…)` term tracks the dynamic range of the weights `π_n`
/// (factorial ratio times `(R₀/N)ⁿ`), and the factor 3.5 provides the
/// headroom needed to resolve Table 1's smallest errors (~10⁻⁶¹ at N = 100,
/// R₀ = 10, where this formula yields 1163 bits) through the cancellations
/// in the error metrics. The paper does not state the precision its Maple
/// runs used; this bound is validated end-to-end by the solver/oracle
/// agreement criterion and the table reproductions.
///
/// # Panics
///
/// Panics if `n == 0` or `r0` is not a positive finite number (caller
/// contract: valid model parameters).
pub fn default_context(n: u32, r0: f64) -> PrecisionContext {
    assert!(n >= 1, "default_context requires N >= 1");
    assert!(
        r0.is_finite() && r0 > 0.0,
        "default_context requires finite R0 > 0"
    );
    let range = r0.max(1.0 / r0).max(2.0);
    let scaled = (3.5 * n as f64 * range.log2()).ceil() as u32;
    let bits = scaled.max(256);
    PrecisionContext::from_bits(bits)
        .expect("derived context always satisfies its own invariants")
}

/// Scalar abstraction over the working number type.
///
/// Implemented for `f64` and [`MpFloat`]. The trait is deliberately small:
/// field operations (by value and by reference on the right), ordering, the
/// few transcendentals the paper needs (`sqrt` for Eq 24, `exp` for Eq 3.2,
/// integer powers for the weight formulas), and context-aware constructors.
/// `Zero`/`One` (from `num_traits`) produce exact small integers; mixed-
/// precision arithmetic always rounds at the *larger* operand precision, so
/// default-precision constants never degrade a computation.
pub trait Real:
    Clone
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Self, Output = Self>
    + Sub<Self, Output = Self>
    + Mul<Self, Output = Self>
    + Div<Self, Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
    + Send
    + Sync
    + 'static
{
    /// Embeds an unsigned integer at the context's working precision.
    fn from_u64(value: u64, ctx: &PrecisionContext) -> Self;

    /// Embeds an `f64` at the context's working precision (exact: every
    /// finite `f64` is representable at ≥ 64 bits).
    fn from_f64(value: f64, ctx: &PrecisionContext) -> Self;

    /// `2^exponent` at the context's working precision (exact).
    fn pow2(exponent: i64, ctx: &PrecisionContext) -> Self;

    /// An integer carrying the same precision as `self` — the workhorse for
    /// rate formulas, which need small integers next to model scalars.
    fn int_like(&self, value: u64) -> Self;

    /// Nearest `f64` (for reporting; may underflow/overflow to 0/±∞).
    fn to_f64(&self) -> f64;

    /// Absolute value (exact).
    fn abs(&self) -> Self;

    /// Square root, correctly rounded at the operand's precision.
    fn sqrt(&self) -> Self;

    /// Natural exponential at the operand's precision.
    fn exp(&self) -> Self;

    /// `self^exponent` for small non-negative integer exponents.
    fn powi(&self, exponent: u32) -> Self;

    /// False for NaN and ±∞.
    fn is_finite(&self) -> bool;

    /// Significand bits this value carries (53 for `f64`).
    fn precision_bits(&self) -> u32;

    /// True while the magnitude is comfortably inside the type's exponent
    /// range; used as the running-product overflow guard in weight
    /// computations. Zero is always within headroom.
    fn exponent_within_headroom(&self) -> bool;

    /// A smallest-normal-scale positive constant at `self`'s precision,
    /// used to guard denominators (see [`rel_diff`]).
    fn tiny_guard(&self) -> Self;
}

impl Real for f64 {
    fn from_u64(value: u64, _ctx: &PrecisionContext) -> Self {
        value as f64
    }

    fn from_f64(value: f64, _ctx: &PrecisionContext) -> Self {
        value
    }

    fn pow2(exponent: i64, _ctx: &PrecisionContext) -> Self {
        f64::powi(2.0, exponent as i32)
    }

    fn int_like(&self, value: u64) -> Self {
        value as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }

    fn exp(&self) -> Self {
        f64::exp(*self)
    }

    fn powi(&self, exponent: u32) -> Self {
        f64::powi(*self, exponent as i32)
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn precision_bits(&self) -> u32 {
        53
    }

    fn exponent_within_headroom(&self) -> bool {
        // 2^900 leaves ~124 binary orders of magnitude before f64 overflow.
        f64::is_finite(*self) && f64::abs(*self) < 2.0_f64.powi(900)
    }

    fn tiny_guard(&self) -> Self {
        f64::MIN_POSITIVE
    }
}

/// Arbitrary-precision binary float (MPFR-backed) with max-precision
/// operation semantics.
///
/// A thin wrapper around [`rug::Float`] that repairs the one property the
/// raw type lacks for generic code: binary operations between operands of
/// different precision round at the *maximum* of the two precisions, never
/// the left-hand one. With that rule, exact default-precision constants
/// (`Zero::zero()`, `One::one()`, integer embeddings) mix freely with
/// high-precision values without silently truncating them.
#[derive(Clone, Debug)]
pub struct MpFloat(Float);

/// Precision used for context-free constants (`zero()`, `one()`). These are
/// exact small integers, so the max-precision operation rule makes the
/// choice observationally irrelevant.
const MP_CONST_PREC: u32 = 64;

impl MpFloat {
    /// Wraps an existing [`rug::Float`].
    pub fn from_raw(value: Float) -> Self {
        MpFloat(value)
    }

    /// Borrows the underlying [`rug::Float`].
    pub fn as_raw(&self) -> &Float {
        &self.0
    }

    fn promote_to(self, bits: u32) -> Float {
        let mut inner = self.0;
        if inner.prec() < bits {
            // Growing precision is exact; RoundingMode is immaterial.
            inner.set_prec_round(bits, Round::Nearest);
        }
        inner
    }
}

impl fmt::Display for MpFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl PartialEq for MpFloat {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl PartialOrd for MpFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

macro_rules! mp_binop {
    ($trait:ident, $method:ident, $assign_trait:ident, $assign_method:ident) => {
        impl $trait<&MpFloat> for MpFloat {
            type Output = MpFloat;
            fn $method(self, rhs: &MpFloat) -> MpFloat {
                // Promote-then-operate keeps rounding at max precision while
                // reusing the left operand's allocation in the common
                // equal-precision case. Promotion is exact, so the operation
                // rounds the mathematical result exactly once.
                let mut lhs = self.promote_to(rhs.0.prec());
                std::ops::$assign_trait::$assign_method(&mut lhs, &rhs.0);
                MpFloat(lhs)
            }
        }

        impl $trait<MpFloat> for MpFloat {
            type Output = MpFloat;
            fn $method(self, rhs: MpFloat) -> MpFloat {
                $trait::$method(self, &rhs)
            }
        }
    };
}

mp_binop!(Add, add, AddAssign, add_assign);
mp_binop!(Sub, sub, SubAssign, sub_assign);
mp_binop!(Mul, mul, MulAssign, mul_assign);
mp_binop!(Div, div, DivAssign, div_assign);

impl Neg for MpFloat {
    type Output = MpFloat;
    fn neg(self) -> MpFloat {
        MpFloat(-self.0)
    }
}

impl Zero for MpFloat {
    fn zero() -> Self {
        MpFloat(Float::new(MP_CONST_PREC))
    }

    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl One for MpFloat {
    fn one() -> Self {
        MpFloat(Float::with_val(MP_CONST_PREC, 1u32))
    }
}

impl Real for MpFloat {
    fn from_u64(value: u64, ctx: &PrecisionContext) -> Self {
        MpFloat(Float::with_val(ctx.significand_bits(), value))
    }

    fn from_f64(value: f64, ctx: &PrecisionContext) -> Self {
        MpFloat(Float::with_val(ctx.significand_bits(), value))
    }

    fn pow2(exponent: i64, ctx: &PrecisionContext) -> Self {
        let mut x = Float::with_val(ctx.significand_bits(), 1u32);
        // Shifts only adjust the exponent field: exact in either direction.
        if exponent >= 0 {
            x <<= exponent as u32;
        } else {
            x >>= exponent.unsigned_abs() as u32;
        }
        MpFloat(x)
    }

    fn int_like(&self, value: u64) -> Self {
        MpFloat(Float::with_val(self.0.prec(), value))
    }

    fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    fn abs(&self) -> Self {
        MpFloat(self.0.clone().abs())
    }

    fn sqrt(&self) -> Self {
        MpFloat(self.0.clone().sqrt())
    }

    fn exp(&self) -> Self {
        MpFloat(self.0.clone().exp())
    }

    fn powi(&self, exponent: u32) -> Self {
        MpFloat((&self.0).pow(exponent).complete(self.0.prec()))
    }

    fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    fn precision_bits(&self) -> u32 {
        self.0.prec()
    }

    fn exponent_within_headroom(&self) -> bool {
        // MPFR's default exponent range is ±(2³⁰−1); leave 2²⁰ of headroom.
        const LIMIT: i32 = (1 << 30) - (1 << 20);
        match self.0.get_exp() {
            Some(e) => e.abs() < LIMIT,
            None => !self.0.is_infinite() && !self.0.is_nan(),
        }
    }

    fn tiny_guard(&self) -> Self {
        // Far below any probability mass the models produce, far above emin.
        let mut x = Float::with_val(self.0.prec(), 1u32);
        x >>= 1u32 << 28;
        MpFloat(x)
    }
}

/// Compensated (Kahan–Neumaier) summation.
///
/// Returns the sum with error bounded by one unit in the last place of the
/// working precision times the condition number of the sum — at the mandated
/// precisions this is negligible relative to `fixed_point_tol`. The empty
/// sum is zero. Exhausting the exponent range (or a non-finite input)
/// surfaces as [`NumericsError::ExponentOverflow`].
pub fn stable_sum<T: Real>(values: &[T]) -> Result<T, NumericsError> {
    let mut iter = values.iter();
    let mut sum = match iter.next() {
        None => return Ok(T::zero()),
        Some(first) => first.clone(),
    };
    let mut compensation = sum.int_like(0);
    for value in iter {
        let tentative = sum.clone() + value;
        // Neumaier's variant: recover the rounding error from whichever
        // operand was larger, since its low bits survive the addition.
        let correction = if sum.abs() >= value.abs() {
            (sum.clone() - &tentative) + value
        } else {
            (value.clone() - &tentative) + &sum
        };
        compensation = compensation + correction;
        sum = tentative;
    }
    let total = sum + &compensation;
    if !total.is_finite() {
        return Err(NumericsError::ExponentOverflow {
            context: "stable_sum",
        });
    }
    Ok(total)
}

/// Relative difference `|a − b| / max(|a|, |b|, guard)`, with a
/// smallest-normal-scale guard so that `rel_diff(0, 0) = 0`.
///
/// Symmetric in its arguments; the agreement metric for solver/oracle
/// cross-checks.
pub fn rel_diff<T: Real>(a: &T, b: &T) -> T {
    let diff = (a.clone() - b).abs();
    let mut denom = a.abs();
    let abs_b = b.abs();
    if abs_b > denom {
        denom = abs_b;
    }
    let guard = a.tiny_guard();
    if guard > denom {
        denom = guard;
    }
    diff / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx256() -> PrecisionContext {
        PrecisionContext::new(256, 128, 192).unwrap()
    }

    #[test]
    fn default_context_extreme_cell_reaches_1163_bits() {
        let ctx = default_context(100, 10.0);
        assert!(ctx.significand_bits() >= 1163);
        assert_eq!(ctx.significand_bits(), 1163);
    }

    #[test]
    fn default_context_floor_is_256_bits() {
        let ctx = default_context(2, 2.0);
        assert_eq!(ctx.significand_bits(), 256);
    }

    #[test]
    fn default_context_below_threshold_uses_reciprocal() {
        // R0 = 0.1 must be as expensive as R0 = 10.
        assert_eq!(
            default_context(100, 0.1).significand_bits(),
            default_context(100, 10.0).significand_bits()
        );
    }

    #[test]
    fn default_context_satisfies_invariants() {
        // Constructive check: building the (N=50, R0=5) context succeeds.
        let ctx = default_context(50, 5.0);
        assert!(ctx.significand_bits() >= 64);
        assert!(ctx.fixed_point_tol_log2() >= 1);
        assert!(ctx.fixed_point_tol_log2() <= ctx.significand_bits() - 8);
    }

    #[test]
    fn context_rejects_low_precision_and_headroomless_tolerance() {
        assert!(matches!(
            PrecisionContext::new(32, 16, 16),
            Err(NumericsError::PrecisionTooLow(32))
        ));
        assert!(matches!(
            PrecisionContext::new(64, 60, 32),
            Err(NumericsError::ToleranceOutOfRange { .. })
        ));
        assert!(matches!(
            PrecisionContext::new(64, 0, 32),
            Err(NumericsError::ToleranceOutOfRange { .. })
        ));
    }

    #[test]
    fn tolerances_materialize_as_powers_of_two() {
        let ctx = ctx256();
        let tol: f64 = ctx.fixed_point_tol();
        assert_eq!(tol, 2.0_f64.powi(-128));
        let tol: MpFloat = ctx.equality_tol();
        let expected = MpFloat::pow2(-192, &ctx);
        assert_eq!(tol, expected);
    }

    #[test]
    fn stable_sum_empty_is_zero() {
        let sum: f64 = stable_sum::<f64>(&[]).unwrap();
        assert_eq!(sum, 0.0);
    }

    #[test]
    fn stable_sum_of_ones() {
        let ctx = ctx256();
        let ones: Vec<MpFloat> = (0..3).map(|_| MpFloat::from_u64(1, &ctx)).collect();
        let sum = stable_sum(&ones).unwrap();
        assert_eq!(sum, MpFloat::from_u64(3, &ctx));
    }

    #[test]
    fn stable_sum_cancellation_at_256_bits() {
        // [1e40, 1, -1e40] → exactly 1: at 256 bits the powers of ten are
        // exact integers, so only the compensation path is exercised.
        let ctx = ctx256();
        let big = MpFloat::from_f64(10.0, &ctx).powi(40);
        let values = [
            big.clone(),
            MpFloat::from_u64(1, &ctx),
            MpFloat::from_u64(0, &ctx) - &big,
        ];
        let sum = stable_sum(&values).unwrap();
        assert_eq!(sum, MpFloat::from_u64(1, &ctx));
    }

    #[test]
    fn stable_sum_compensates_in_f64_too() {
        // The same cancellation pattern scaled into f64 range, where the
        // naive left-to-right sum loses the small addend entirely.
        let values = [1.0e17_f64, 1.0, -1.0e17];
        assert_eq!(values.iter().sum::<f64>(), 0.0);
        assert_eq!(stable_sum(&values).unwrap(), 1.0);
    }

    #[test]
    fn stable_sum_flags_overflow() {
        let values = [f64::MAX, f64::MAX];
        assert!(matches!(
            stable_sum(&values),
            Err(NumericsError::ExponentOverflow { .. })
        ));
    }

    #[test]
    fn rel_diff_examples() {
        assert_eq!(rel_diff(&5.0_f64, &5.0), 0.0);
        assert_eq!(rel_diff(&0.0_f64, &0.0), 0.0);
        assert_eq!(rel_diff(&1.0_f64, &2.0), 0.5);
    }

    #[test]
    fn rel_diff_is_symmetric_in_mp() {
        let ctx = ctx256();
        let a = MpFloat::from_f64(3.25, &ctx);
        let b = MpFloat::from_f64(-1.5, &ctx);
        assert_eq!(rel_diff(&a, &b), rel_diff(&b, &a));
        assert_eq!(rel_diff(&a, &a), MpFloat::zero());
    }

    #[test]
    fn mixed_precision_ops_round_at_max_precision() {
        let ctx = ctx256();
        // one() carries 64 bits; adding it to a 256-bit value must produce
        // a 256-bit result with no intermediate truncation.
        let small = MpFloat::pow2(-200, &ctx);
        let x = MpFloat::one() + &small;
        assert_eq!(x.precision_bits(), 256);
        let back = x - &MpFloat::one();
        assert_eq!(back, small);
    }

    #[test]
    fn pow2_handles_huge_negative_exponents() {
        let ctx = PrecisionContext::new(2048, 1024, 1536).unwrap();
        let tol: MpFloat = ctx.fixed_point_tol();
        assert!(tol > MpFloat::zero());
        assert!(tol < MpFloat::one());
        // Round-trip through the exponent accessor instead of f64 (which
        // would underflow): tol * 2^1024 == 1.
        let unscaled = tol * &MpFloat::pow2(1024, &ctx);
        assert_eq!(unscaled, MpFloat::one());
    }

    #[test]
    fn headroom_guard_trips_near_overflow() {
        assert!(1.0e270_f64.exponent_within_headroom());
        assert!(!1.0e271_f64.exponent_within_headroom());
        assert!(!f64::INFINITY.exponent_within_headroom());
        let ctx = ctx256();
        assert!(MpFloat::from_u64(1, &ctx).exponent_within_headroom());
        assert!(MpFloat::zero().exponent_within_headroom());
    }
}
