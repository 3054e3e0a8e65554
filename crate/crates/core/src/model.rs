//! The SIS and Verhulst birth-death chains and their threshold diagnostics.
//!
//! A [`BirthDeathModel`] is the rate structure of a finite birth-death chain
//! on states `0..=N` with an absorbing origin:
//!
//! ```text
//! λ_n = μ·R₀·(1 − n/N)·n          (Eq 1.1, births / new infections)
//! μ_n = μ·(1 + α·n/N)·n           (Eq 1.3, deaths / recoveries)
//! ```
//!
//! `α = 0` recovers the SIS model (Eq 1.2, `μ_n = μ·n`); `α > 0` is the
//! stochastic Verhulst generalization. Rates are evaluated on demand from
//! `(N, R₀, μ, α)` in whatever precision those scalars carry, rather than
//! precomputed into arrays — models are built once per precision context and
//! shared freely (they are immutable).
//!
//! The module also exposes the two scalar threshold quantities of §3:
//! [`ovaskainen_r0`] (Eq 3.1) translating between this paper's `R₀` and
//! Ovaskainen's, and the validity diagnostic [`k_function`] (Eq 3.6). `K` is
//! a diagnostic only: the small-`N` adjustment Ovaskainen applies when
//! `K > 1` "plays no role in this paper" and is not implemented.

use thiserror::Error;

use crate::numerics::Real;

/// Errors from model construction and the threshold diagnostics.
#[derive(Debug, Error)]
pub enum ModelError {
    /// A constructor argument violates its domain (`N ≥ 1`, `R₀ > 0`,
    /// `μ > 0`, `α ≥ 0`, finite).
    #[error("invalid model parameter: {0}")]
    InvalidParameter(&'static str),
    /// `ovaskainen_r0`/`k_function` need `N ≥ 2`.
    #[error("{0} requires N >= 2")]
    PopulationTooSmall(&'static str),
    /// `k_function` evaluated at its pole `(N−1)·R₀ = N`.
    #[error("k_function is singular at (N-1)*R0 = N")]
    SingularParameter,
}

/// Rate structure of the logistic birth-death chain (SIS for `α = 0`,
/// Verhulst for `α > 0`).
///
/// Immutable after construction; safe to share across threads. The scalar
/// type `T` fixes the precision of every rate the model produces.
#[derive(Debug, Clone)]
pub struct BirthDeathModel<T> {
    n: u32,
    r0: T,
    mu: T,
    alpha: T,
}

impl<T: Real> BirthDeathModel<T> {
    /// Builds the SIS model (Eqs 1.1–1.2): `λ_n = μ·R₀·(1−n/N)·n`,
    /// `μ_n = μ·n`. Rejects `N = 0` and non-positive `R₀` or `μ`.
    pub fn sis(n: u32, r0: T, mu: T) -> Result<Self, ModelError> {
        let alpha = r0.int_like(0);
        Self::verhulst(n, r0, mu, alpha)
    }

    /// Builds the Verhulst model (Eqs 1.1 and 1.3): births as SIS, deaths
    /// `μ_n = μ·(1 + α·n/N)·n`. Rejects `α < 0` in addition to the SIS
    /// constraints.
    pub fn verhulst(n: u32, r0: T, mu: T, alpha: T) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidParameter("N must be at least 1"));
        }
        let zero = T::zero();
        if !r0.is_finite() || !(r0 > zero) {
            return Err(ModelError::InvalidParameter("R0 must be positive"));
        }
        if !mu.is_finite() || !(mu > zero) {
            return Err(ModelError::InvalidParameter("mu must be positive"));
        }
        if !alpha.is_finite() || alpha < zero {
            return Err(ModelError::InvalidParameter("alpha must be non-negative"));
        }
        Ok(Self { n, r0, mu, alpha })
    }

    /// Population size `N`.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Threshold parameter `R₀`.
    pub fn r0(&self) -> &T {
        &self.r0
    }

    /// Recovery rate `μ`.
    pub fn mu(&self) -> &T {
        &self.mu
    }

    /// Crowding parameter `α` (zero for SIS).
    pub fn alpha(&self) -> &T {
        &self.alpha
    }

    /// Whether this is the SIS special case (`α = 0`).
    pub fn is_sis(&self) -> bool {
        self.alpha.is_zero()
    }

    /// Birth rate `λ_n = μ·R₀·(1 − n/N)·n` (Eq 1.1), evaluated as
    /// `μ·R₀·(n·(N−n))/N` so the zeros at `n = 0` and `n = N` are exact.
    ///
    /// # Panics
    ///
    /// Panics if `state > N` (rates are defined on `0..=N`).
    pub fn birth_rate(&self, state: u32) -> T {
        assert!(state <= self.n, "birth_rate: state {state} beyond N={}", self.n);
        let parabola = u64::from(state) * u64::from(self.n - state);
        self.mu.clone() * &self.r0 * &self.mu.int_like(parabola) / &self.mu.int_like(u64::from(self.n))
    }

    /// Death rate `μ_n = μ·(1 + α·n/N)·n` (Eq 1.3; reduces to Eq 1.2's
    /// `μ·n` exactly when `α = 0`).
    ///
    /// # Panics
    ///
    /// Panics if `state > N`.
    pub fn death_rate(&self, state: u32) -> T {
        assert!(state <= self.n, "death_rate: state {state} beyond N={}", self.n);
        let linear = self.mu.clone() * &self.mu.int_like(u64::from(state));
        if self.alpha.is_zero() {
            return linear;
        }
        let crowding = self.alpha.clone() * &self.alpha.int_like(u64::from(state))
            / &self.alpha.int_like(u64::from(self.n));
        linear * &(T::one() + &crowding)
    }
}

/// Ovaskainen's threshold parameter (Eq 3.1): `(N−1)/N · R₀`.
///
/// Translates between this paper's `R₀` and the parametrization used in
/// Ovaskainen's asymptotic results; approaches `R₀` monotonically from
/// below as `N` grows.
pub fn ovaskainen_r0<T: Real>(n: u32, r0: &T) -> Result<T, ModelError> {
    if n < 2 {
        return Err(ModelError::PopulationTooSmall("ovaskainen_r0"));
    }
    Ok(r0.clone() * &r0.int_like(u64::from(n - 1)) / &r0.int_like(u64::from(n)))
}

/// Ovaskainen's validity diagnostic (Eq 3.6):
/// `K = 2(N−1)²R₀² / (N·[(N−1)R₀ − N]²)`.
///
/// The paper's asymptotics assume `K < 1` (which holds for `R₀ > 1` and `N`
/// large); the `K > 1` small-`N` adjustment is deliberately not implemented.
/// Signals [`ModelError::SingularParameter`] at the pole `(N−1)R₀ = N`.
pub fn k_function<T: Real>(n: u32, r0: &T) -> Result<T, ModelError> {
    if n < 2 {
        return Err(ModelError::PopulationTooSmall("k_function"));
    }
    let n_minus_1 = r0.int_like(u64::from(n - 1));
    let n_scalar = r0.int_like(u64::from(n));
    let root_gap = n_minus_1.clone() * r0 - &n_scalar;
    if root_gap.is_zero() {
        return Err(ModelError::SingularParameter);
    }
    let numerator = r0.int_like(2) * &(n_minus_1 * r0).powi(2);
    Ok(numerator / &(n_scalar * &root_gap.powi(2)))
}
