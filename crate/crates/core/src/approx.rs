//! Closed-form approximations of the QSD: the auxiliary-process stationary
//! distributions `p⁽⁰⁾`/`p⁽¹⁾`, the Ovaskainen chain (F-factor, OVb, OV1,
//! OV2, OV3), the geometric approximations G1/G2, and a moment-matched
//! beta-binomial.
//!
//! Two scalings coexist in §3 of the paper and are kept deliberately
//! distinct here:
//!
//! * `OV1` is the literal one-stage modification (Eqs 3.7–3.8):
//!   `q_i = F_i·q_i⁽ᴼⱽᵇ⁾`, including the possibly negative final entry.
//! * `OV2` is implemented through the identity of Eq (3.11),
//!   `q_i⁽ᴼⱽ²⁾ = π_i·[1 − (N/((N−1)R₀))^i]`, which the paper derives from
//!   Eq (3.9) via a large-`N` simplification of `N!`. At finite `N` the two
//!   routes differ by an `i`-independent Stirling-type factor; the factor
//!   cancels in OV3's normalization, so OV3 — the distribution the tables
//!   evaluate — is identical either way. The (3.11) form keeps OV2 on the
//!   same scale as the stationary weights, makes its positivity for
//!   `R₀ > N/(N−1)` manifest, and is the form the identity test suite pins.
//!   The constant of proportionality between OV1 and OV2 is itself covered
//!   by a test.
//!
//! Weight vectors are computed by running products (never literal
//! factorials); every step is guarded by an exponent-headroom check that
//! *fails loudly* instead of rescaling, because the unnormalized entries
//! are part of the public contract and a silent rescale would change them.
//! With the multiprecision backend the guard is unreachable for any
//! realistic `N`; with `f64` it turns overflow into a typed error.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::BirthDeathModel;
use crate::numerics::{stable_sum, NumericsError, PrecisionContext, Real};
use crate::qsd::{Distribution, DistributionError, ModelTag};

/// Errors from approximation construction.
#[derive(Debug, Error)]
pub enum ApproxError {
    /// The approximation is defined for the SIS model only (`α = 0`).
    #[error("{operation} requires an SIS model (alpha = 0)")]
    RequiresSis { operation: &'static str },
    /// The approximation needs at least two states.
    #[error("{operation} requires N >= 2")]
    PopulationTooSmall { operation: &'static str },
    /// Parameters outside the regime where the approximation exists.
    #[error("invalid regime: {detail}")]
    InvalidRegime { detail: String },
    /// The beta-binomial moment equations have no valid solution.
    #[error("beta-binomial fit failure: {detail}")]
    FitFailure { detail: String },
    /// The supplied distribution does not match the requested support.
    #[error("length mismatch: distribution has {actual} states, expected {expected}")]
    LengthMismatch { expected: u32, actual: u32 },
    /// A scalar parameter is out of its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    /// A weight left the representable range or came out non-finite.
    #[error("weight for state {state} is not finite in working precision")]
    NonFiniteWeight { state: u32 },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Which family an unnormalized [`WeightVector`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Pi,
    Rho,
    Ovb,
    Ov1,
    Ov2,
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self {
            WeightKind::Pi => "pi",
            WeightKind::Rho => "rho",
            WeightKind::Ovb => "ovb",
            WeightKind::Ov1 => "ov1",
            WeightKind::Ov2 => "ov2",
        };
        f.write_str(label)
    }
}

/// Unnormalized masses indexed by state `n = 1..N`. Entries are finite in
/// working precision but not necessarily positive: `ovb`/`ov1` carry a
/// possibly negative final entry by construction, and `ov1`/`ov2` go
/// negative below `R₀ = N/(N−1)`.
#[derive(Debug, Clone)]
pub struct WeightVector<T> {
    weights: Vec<T>,
    kind: WeightKind,
}

impl<T: Real> WeightVector<T> {
    fn new(weights: Vec<T>, kind: WeightKind) -> Result<Self, ApproxError> {
        for (index, w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(ApproxError::NonFiniteWeight {
                    state: index as u32 + 1,
                });
            }
        }
        Ok(WeightVector { weights, kind })
    }

    /// Number of states `N`.
    pub fn n(&self) -> u32 {
        self.weights.len() as u32
    }

    /// All weights, index 0 holding state 1.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Weight of `state` (1-indexed).
    ///
    /// # Panics
    ///
    /// Panics if `state` is outside `1..=N`.
    pub fn weight(&self, state: u32) -> &T {
        assert!(
            (1..=self.n()).contains(&state),
            "state {state} outside 1..={}",
            self.n()
        );
        &self.weights[(state - 1) as usize]
    }

    /// The family label.
    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    fn into_weights(self) -> Vec<T> {
        self.weights
    }
}

/// The approximating distributions the error tables evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ApproxKind {
    BetaBinomial,
    P1,
    P0,
    Ov3,
    G1,
    G2,
}

impl ApproxKind {
    /// All kinds, in the column order of the above-threshold table followed
    /// by the below-threshold additions.
    pub const ALL: [ApproxKind; 6] = [
        ApproxKind::BetaBinomial,
        ApproxKind::P1,
        ApproxKind::P0,
        ApproxKind::Ov3,
        ApproxKind::G1,
        ApproxKind::G2,
    ];

    /// Stable text label (used in CLI arguments and report output).
    pub fn label(&self) -> &'static str {
        match self {
            ApproxKind::BetaBinomial => "beta_binomial",
            ApproxKind::P1 => "p1",
            ApproxKind::P0 => "p0",
            ApproxKind::Ov3 => "ov3",
            ApproxKind::G1 => "g1",
            ApproxKind::G2 => "g2",
        }
    }
}

impl fmt::Display for ApproxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Error for unrecognized approximation labels.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown approximation `{given}`; valid labels: beta_binomial, p1, p0, ov3, g1, g2")]
pub struct UnknownApprox {
    pub given: String,
}

impl FromStr for ApproxKind {
    type Err = UnknownApprox;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "beta_binomial" => Ok(ApproxKind::BetaBinomial),
            "p1" => Ok(ApproxKind::P1),
            "p0" => Ok(ApproxKind::P0),
            "ov3" => Ok(ApproxKind::Ov3),
            "g1" => Ok(ApproxKind::G1),
            "g2" => Ok(ApproxKind::G2),
            _ => Err(UnknownApprox {
                given: s.to_string(),
            }),
        }
    }
}

/// Which auxiliary process a stationary-weight product describes (the
/// solver's starters use these on arbitrary rate functions, so this stays
/// rate-generic while the public `pi_weights`/`rho_weights` are SIS-only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ProductFamily {
    /// Absorption removed: `w_{k+1} = w_k·λ_k/μ_{k+1}` (the π family).
    Pi,
    /// Deaths shifted down one state: `w_{k+1} = w_k·λ_k/μ_k` (the ρ family).
    Rho,
}

pub(crate) fn product_weights<T: Real>(
    model: &BirthDeathModel<T>,
    family: ProductFamily,
    ctx: &PrecisionContext,
) -> Result<Vec<T>, ApproxError> {
    let n = model.n();
    let mut weights = Vec::with_capacity(n as usize);
    weights.push(T::from_u64(1, ctx));
    for k in 1..n {
        let death = match family {
            ProductFamily::Pi => model.death_rate(k + 1),
            ProductFamily::Rho => model.death_rate(k),
        };
        let next = weights[(k - 1) as usize].clone() * &(model.birth_rate(k) / &death);
        if !next.exponent_within_headroom() {
            return Err(NumericsError::ExponentOverflow {
                context: "stationary weight product",
            }
            .into());
        }
        weights.push(next);
    }
    Ok(weights)
}

fn require_sis<T: Real>(
    model: &BirthDeathModel<T>,
    operation: &'static str,
) -> Result<(), ApproxError> {
    if model.is_sis() {
        Ok(())
    } else {
        Err(ApproxError::RequiresSis { operation })
    }
}

fn require_two_states<T: Real>(
    model: &BirthDeathModel<T>,
    operation: &'static str,
) -> Result<(), ApproxError> {
    if model.n() >= 2 {
        Ok(())
    } else {
        Err(ApproxError::PopulationTooSmall { operation })
    }
}

/// Stationary weights `π_n` of the auxiliary process with absorption
/// removed (Eq 2.3: `π₁ = 1`, `π_{n+1} = π_n·λ_n/μ_{n+1}`), equal to the
/// factorial closed form of Eq (2.5).
pub fn pi_weights<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
) -> Result<WeightVector<T>, ApproxError> {
    require_sis(model, "pi_weights")?;
    WeightVector::new(product_weights(model, ProductFamily::Pi, ctx)?, WeightKind::Pi)
}

/// Stationary weights `ρ_n` of the auxiliary process with one immortal
/// individual (Eq 2.4: `ρ₁ = 1`, `ρ_{n+1} = ρ_n·λ_n/μ_n`), equal to the
/// closed form of Eq (2.6); satisfies `ρ_n = n·π_n`.
pub fn rho_weights<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
) -> Result<WeightVector<T>, ApproxError> {
    require_sis(model, "rho_weights")?;
    WeightVector::new(product_weights(model, ProductFamily::Rho, ctx)?, WeightKind::Rho)
}

/// Direct factorial-form evaluation of Eq (2.5),
/// `π_n = (1/n)(1/R₀)·(N!/(N−n)!)·(R₀/N)ⁿ` — the cross-check oracle for
/// the running product of [`pi_weights`].
pub fn closed_form_pi<T: Real>(
    n: u32,
    r0: &T,
    state: u32,
    ctx: &PrecisionContext,
) -> Result<T, ApproxError> {
    Ok(closed_form_rho(n, r0, state, ctx)? / &T::from_u64(state as u64, ctx))
}

/// Direct factorial-form evaluation of Eq (2.6),
/// `ρ_n = (1/R₀)·(N!/(N−n)!)·(R₀/N)ⁿ`.
pub fn closed_form_rho<T: Real>(
    n: u32,
    r0: &T,
    state: u32,
    ctx: &PrecisionContext,
) -> Result<T, ApproxError> {
    if state < 1 || state > n {
        return Err(ApproxError::InvalidParameter("state outside 1..=N"));
    }
    let ratio = r0.clone() / &T::from_u64(n as u64, ctx);
    let mut value = ratio.powi(state) / r0;
    // Falling factorial N·(N−1)···(N−state+1) = N!/(N−state)!.
    for j in 0..state {
        value = value * &T::from_u64((n - j) as u64, ctx);
        if !value.exponent_within_headroom() {
            return Err(NumericsError::ExponentOverflow {
                context: "falling factorial",
            }
            .into());
        }
    }
    Ok(value)
}

/// The stationary distribution `p⁽⁰⁾` of the auxiliary process without
/// absorption: `π` normalized (Eq 2.1).
pub fn p0_distribution<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
) -> Result<Distribution<T>, ApproxError> {
    let weights = pi_weights(model, ctx)?;
    Ok(Distribution::normalized(
        weights.into_weights(),
        ModelTag::for_model(model),
        ctx,
    )?)
}

/// The stationary distribution `p⁽¹⁾` of the auxiliary process with one
/// immortal individual: `ρ` normalized (Eq 2.2).
pub fn p1_distribution<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
) -> Result<Distribution<T>, ApproxError> {
    let weights = rho_weights(model, ctx)?;
    Ok(Distribution::normalized(
        weights.into_weights(),
        ModelTag::for_model(model),
        ctx,
    )?)
}

/// The Ovaskainen prefactor of Eq (3.2):
///
/// ```text
/// F_i(N, R₀) = (1 − N/((N−1)R₀)) · exp(−N/R₀) · (1 − (N/((N−1)R₀))^i)
/// ```
///
/// Well-defined for all `R₀ > 0`; vanishes identically at `R₀ = N/(N−1)`
/// and for `i = 0`.
pub fn f_factor<T: Real>(
    n: u32,
    r0: &T,
    i: u32,
    ctx: &PrecisionContext,
) -> Result<T, ApproxError> {
    if n < 2 {
        return Err(ApproxError::PopulationTooSmall {
            operation: "f_factor",
        });
    }
    if !r0.is_finite() || !(*r0 > T::zero()) {
        return Err(ApproxError::InvalidParameter("R0 must be positive"));
    }
    let big_n = T::from_u64(n as u64, ctx);
    let c = big_n.clone() / &(T::from_u64((n - 1) as u64, ctx) * r0);
    let damping = (T::zero() - &(big_n / r0)).exp();
    Ok((T::one() - &c) * &damping * &(T::one() - &c.powi(i)))
}

/// The raw Ovaskainen approximation `q⁽ᴼⱽᵇ⁾` (Eqs 3.4–3.5):
/// `q_i = N/(i·(N−i)!)·(N/R₀)^{N−i}` for `i < N` and
/// `q_N = 1 − N²/((N−1)R₀)` — the final entry is negative whenever
/// `R₀ < N²/(N−1)`, which is the §3 motivation for the later stages.
pub fn ovb_weights<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
) -> Result<WeightVector<T>, ApproxError> {
    require_sis(model, "ovb_weights")?;
    require_two_states(model, "ovb_weights")?;
    let n = model.n();
    let r0 = model.r0();
    let big_n = T::from_u64(n as u64, ctx);
    let n_over_r0 = big_n.clone() / r0;

    // Build i = N−1 down to 1 by the exact step ratio
    // q_i/q_{i+1} = (N/R₀)·(i+1)/(i·(N−i)), then reverse.
    let mut descending = Vec::with_capacity((n - 1) as usize);
    let start = (big_n.clone() / &T::from_u64((n - 1) as u64, ctx)) * &n_over_r0;
    descending.push(start);
    for i in (1..n - 1).rev() {
        let scale = T::from_u64((i + 1) as u64, ctx)
            / &(T::from_u64(i as u64, ctx) * &T::from_u64((n - i) as u64, ctx));
        let next = descending.last().expect("non-empty").clone() * &(n_over_r0.clone() * &scale);
        if !next.exponent_within_headroom() {
            return Err(NumericsError::ExponentOverflow {
                context: "Ovaskainen weight product",
            }
            .into());
        }
        descending.push(next);
    }
    descending.reverse();

    let mut weights = descending;
    let final_entry =
        T::one() - &(big_n.clone() * &big_n / &(T::from_u64((n - 1) as u64, ctx) * r0));
    weights.push(final_entry);
    WeightVector::new(weights, WeightKind::Ovb)
}

/// The one-stage modification `q⁽ᴼⱽ¹⁾` (Eqs 3.7–3.8): `F_i·q_i⁽ᴼⱽᵇ⁾`
/// for every `i` including `N`. The final entry inherits OVb's sign, which
/// is the documented weakness this stage leaves unfixed.
pub fn ov1_weights<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
) -> Result<WeightVector<T>, ApproxError> {
    let base = ovb_weights(model, ctx)?;
    let factors = f_factors(model.n(), model.r0(), ctx);
    let weights = base
        .into_weights()
        .into_iter()
        .zip(factors)
        .map(|(w, f)| w * &f)
        .collect();
    WeightVector::new(weights, WeightKind::Ov1)
}

/// The two-stage modification `q⁽ᴼⱽ²⁾` in the form of Eq (3.11):
/// `q_i = π_i·[1 − (N/((N−1)R₀))^i]`. Strictly positive exactly when
/// `R₀ > N/(N−1)`; see the module docs for the scale relation to OV1.
pub fn ov2_weights<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
) -> Result<WeightVector<T>, ApproxError> {
    require_sis(model, "ov2_weights")?;
    require_two_states(model, "ov2_weights")?;
    let pi = product_weights(model, ProductFamily::Pi, ctx)?;
    let c = T::from_u64(model.n() as u64, ctx)
        / &(T::from_u64((model.n() - 1) as u64, ctx) * model.r0());
    let mut c_power = T::one();
    let mut weights = Vec::with_capacity(pi.len());
    for w in pi {
        c_power = c_power * &c;
        weights.push(w * &(T::one() - &c_power));
    }
    WeightVector::new(weights, WeightKind::Ov2)
}

/// The normalized three-stage approximation `q⁽ᴼⱽ³⁾` (Eq 3.10):
/// OV2 divided by its sum. Signals [`ApproxError::InvalidRegime`] when the
/// sum is non-positive, which happens exactly for `R₀ ≤ N/(N−1)` — callers
/// probing below the threshold get the error rather than garbage.
pub fn ov3_distribution<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
) -> Result<Distribution<T>, ApproxError> {
    let weights = ov2_weights(model, ctx)?.into_weights();
    let total = stable_sum(&weights)?;
    if !(total > T::zero()) {
        return Err(ApproxError::InvalidRegime {
            detail: format!(
                "OV2 weights sum to a non-positive value at N = {}, R0 = {}; \
                 OV3 requires R0 > N/(N-1)",
                model.n(),
                model.r0()
            ),
        });
    }
    let probs = weights.into_iter().map(|w| w / &total).collect();
    Ok(Distribution::from_probs(
        probs,
        ModelTag::for_model(model),
        ctx,
    )?)
}

/// `F_i` for `i = 1..N` with the `c^i` running product shared across
/// entries (same formula as [`f_factor`], evaluated in O(N) total).
fn f_factors<T: Real>(n: u32, r0: &T, ctx: &PrecisionContext) -> Vec<T> {
    let big_n = T::from_u64(n as u64, ctx);
    let c = big_n.clone() / &(T::from_u64((n - 1) as u64, ctx) * r0);
    let prefactor = (T::one() - &c) * &(T::zero() - &(big_n / r0)).exp();
    let mut c_power = T::one();
    (0..n)
        .map(|_| {
            c_power = c_power.clone() * &c;
            prefactor.clone() * &(T::one() - &c_power)
        })
        .collect()
}

/// Which geometric approximation a parameter set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometricVariant {
    /// Cumulant-matched: `κ₁` solves `2κ² − Aκ − N/R₀ = 0` (Eqs 24–25).
    G1,
    /// Asymptotic mean: `κ₁ = 1/(1−R₀)`, defined for `R₀ < 1` only (Eq 26).
    G2,
}

impl fmt::Display for GeometricVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeometricVariant::G1 => "G1",
            GeometricVariant::G2 => "G2",
        })
    }
}

/// Parameters of a geometric approximation: the target expectation `κ₁`
/// (≥ 1 always — a geometric distribution on {1,2,…} cannot have mean
/// below 1), the Eq (25) intermediate `A`, and the variant.
#[derive(Debug, Clone)]
pub struct GeometricParams<T> {
    kappa1: T,
    a: T,
    variant: GeometricVariant,
    tag: ModelTag,
}

impl<T: Real> GeometricParams<T> {
    /// Assembles parameters by hand (tests and synthetic inputs); rejects
    /// `κ₁ < 1` or non-finite values.
    pub fn new(
        kappa1: T,
        a: T,
        variant: GeometricVariant,
        tag: ModelTag,
    ) -> Result<Self, ApproxError> {
        if !kappa1.is_finite() || !a.is_finite() || kappa1 < T::one() {
            return Err(ApproxError::InvalidRegime {
                detail: "geometric expectation kappa1 must be finite and >= 1".to_string(),
            });
        }
        Ok(GeometricParams {
            kappa1,
            a,
            variant,
            tag,
        })
    }

    pub fn kappa1(&self) -> &T {
        &self.kappa1
    }

    /// The Eq (25) intermediate `A = 1 − N(1−R₀)/R₀`.
    pub fn a(&self) -> &T {
        &self.a
    }

    pub fn variant(&self) -> GeometricVariant {
        self.variant
    }

    pub fn tag(&self) -> &ModelTag {
        &self.tag
    }
}

/// Computes the geometric expectation for the requested variant:
/// G1 via `A = 1 − N(1−R₀)/R₀`, `κ₁ = (A + √(A² + 8N/R₀))/4`; G2 via
/// `κ₁ = 1/(1−R₀)` (rejected for `R₀ ≥ 1`). G1's `κ₁ ≥ 1` holds for every
/// `N ≥ 1`, `R₀ > 0` (squaring the defining relation reduces it to
/// `N ≥ 1`), but the constructor re-checks it defensively.
pub fn geometric_params<T: Real>(
    model: &BirthDeathModel<T>,
    variant: GeometricVariant,
    ctx: &PrecisionContext,
) -> Result<GeometricParams<T>, ApproxError> {
    require_sis(model, "geometric_params")?;
    let big_n = T::from_u64(model.n() as u64, ctx);
    let r0 = model.r0();
    let a = T::one() - &(big_n.clone() * &(T::one() - r0) / r0);
    let kappa1 = match variant {
        GeometricVariant::G1 => {
            let discriminant =
                a.clone() * &a + &(T::from_u64(8, ctx) * &big_n / r0);
            (a.clone() + &discriminant.sqrt()) / &T::from_u64(4, ctx)
        }
        GeometricVariant::G2 => {
            if !(*r0 < T::one()) {
                return Err(ApproxError::InvalidRegime {
                    detail: format!("G2 requires R0 < 1, got R0 = {r0}"),
                });
            }
            T::one() / &(T::one() - r0)
        }
    };
    GeometricParams::new(kappa1, a, variant, ModelTag::for_model(model))
}

/// Materializes a geometric approximation on states `{1..n}`: success
/// probability `p = 1/κ₁`, mass `p(1−p)^{i−1}`, *without* renormalization
/// — the error metrics read pointwise masses, and renormalizing would
/// shift every entry by the tail mass. The truncated tail `(1−p)ⁿ` is
/// declared to the [`Distribution`] as its allowed normalization defect.
pub fn geometric_distribution<T: Real>(
    params: &GeometricParams<T>,
    n: u32,
    ctx: &PrecisionContext,
) -> Result<Distribution<T>, ApproxError> {
    if n < 1 {
        return Err(ApproxError::PopulationTooSmall {
            operation: "geometric_distribution",
        });
    }
    let p = T::from_u64(1, ctx) / params.kappa1();
    let miss = T::one() - &p;
    let mut probs = Vec::with_capacity(n as usize);
    probs.push(p);
    for _ in 1..n {
        probs.push(probs.last().expect("non-empty").clone() * &miss);
    }
    let tail_bound = miss.powi(n);
    let tag = ModelTag {
        n,
        ..*params.tag()
    };
    Ok(Distribution::sub_normalized(probs, tag, &tail_bound, ctx)?)
}

/// The shifted beta-binomial pmf on `{1,…,n}`: a standard beta-binomial
/// with `k = n−1` trials and shapes `(α, β)` on `{0,…,k}`, shifted up by
/// one. Evaluated gamma-free: `P(0) = Π_{j<k} (β+j)/(α+β+j)` and the ratio
/// recurrence `P(y+1) = P(y)·(k−y)(α+y) / ((y+1)(β+k−y−1))`.
pub fn beta_binomial_pmf<T: Real>(
    alpha: &T,
    beta: &T,
    n: u32,
    ctx: &PrecisionContext,
) -> Result<Vec<T>, ApproxError> {
    if n < 1 {
        return Err(ApproxError::PopulationTooSmall {
            operation: "beta_binomial_pmf",
        });
    }
    if !alpha.is_finite() || !beta.is_finite() || !(*alpha > T::zero()) || !(*beta > T::zero()) {
        return Err(ApproxError::InvalidParameter(
            "beta-binomial shapes must be positive",
        ));
    }
    let k = n - 1;
    let s = alpha.clone() + beta;
    let mut head = T::from_u64(1, ctx);
    for j in 0..k {
        let shift = T::from_u64(j as u64, ctx);
        head = head * &((beta.clone() + &shift) / &(s.clone() + &shift));
    }
    let mut probs = Vec::with_capacity(n as usize);
    probs.push(head);
    for y in 0..k {
        let up = T::from_u64((k - y) as u64, ctx) * &(alpha.clone() + &T::from_u64(y as u64, ctx));
        let down = T::from_u64((y + 1) as u64, ctx)
            * &(beta.clone() + &T::from_u64((k - y - 1) as u64, ctx));
        probs.push(probs.last().expect("non-empty").clone() * &(up / &down));
    }
    Ok(probs)
}

/// Fits a beta-binomial on the shifted support `{1,…,N}` to the mean and
/// variance of `q_exact` by the method of moments. With `k = N−1`,
/// `π̂ = (mean−1)/k` and `w = π̂(1−π̂)`, the common shape scale is
/// `s = (k²w − v)/(v − kw)`; the fit exists iff `kw < v < k²w` (a
/// beta-binomial is overdispersed relative to the binomial but cannot
/// exceed the two-point extreme), otherwise a
/// [`ApproxError::FitFailure`] reports which side failed.
pub fn beta_binomial_fit<T: Real>(
    q_exact: &Distribution<T>,
    n: u32,
    ctx: &PrecisionContext,
) -> Result<Distribution<T>, ApproxError> {
    if n < 2 {
        return Err(ApproxError::PopulationTooSmall {
            operation: "beta_binomial_fit",
        });
    }
    if q_exact.n() != n {
        return Err(ApproxError::LengthMismatch {
            expected: n,
            actual: q_exact.n(),
        });
    }
    let mean = q_exact.mean()?;
    let variance = q_exact.variance(&mean)?;
    let k = T::from_u64((n - 1) as u64, ctx);
    let pihat = (mean - &T::one()) / &k;
    if !(pihat > T::zero()) || !(pihat < T::one()) {
        return Err(ApproxError::FitFailure {
            detail: format!(
                "mean {:.6} is not interior to (1, N); no beta-binomial matches",
                pihat.to_f64() * (n as f64 - 1.0) + 1.0
            ),
        });
    }
    let spread = pihat.clone() * &(T::one() - &pihat);
    let binomial_floor = k.clone() * &spread;
    let two_point_ceiling = k.clone() * &binomial_floor;
    if !(variance > binomial_floor) {
        return Err(ApproxError::FitFailure {
            detail: format!(
                "variance {:.6e} at or below the binomial floor {:.6e}; \
                 distribution too concentrated for a beta-binomial",
                variance.to_f64(),
                binomial_floor.to_f64()
            ),
        });
    }
    if !(variance < two_point_ceiling) {
        return Err(ApproxError::FitFailure {
            detail: format!(
                "variance {:.6e} at or above the two-point ceiling {:.6e}; \
                 distribution too dispersed for a beta-binomial",
                variance.to_f64(),
                two_point_ceiling.to_f64()
            ),
        });
    }
    let scale = (two_point_ceiling - &variance) / &(variance - &binomial_floor);
    let alpha = pihat.clone() * &scale;
    let beta = (T::one() - &pihat) * &scale;
    let probs = beta_binomial_pmf(&alpha, &beta, n, ctx)?;
    Ok(Distribution::from_probs(probs, *q_exact.tag(), ctx)?)
}
