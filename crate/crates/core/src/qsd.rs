//! Exact quasi-stationary distribution: probability container, fixed-point
//! solver, and an independent power-iteration oracle.
//!
//! The QSD `q = (q₁,…,q_N)` of a birth-death chain absorbed at 0 satisfies
//! the quasi-stationarity balance
//!
//! ```text
//! λ_{n−1}q_{n−1} − (λ_n + μ_n)q_n + μ_{n+1}q_{n+1} + μ₁q₁·q_n = 0,
//! q₀ = q_{N+1} = 0,   Σ q_n = 1,
//! ```
//!
//! a nonlinear eigenproblem (the `μ₁q₁` term is the decay rate of the
//! conditioned process). The paper evaluates the QSD numerically but gives
//! no algorithm; two methodologically independent ones live here:
//!
//! * [`solve_qsd`] — the primary solver. Telescoping the balance equations
//!   over `n ≤ m` gives the forward recursion
//!   `μ_{m+1}q_{m+1} = λ_m q_m + μ₁q₁(1 − Σ_{k≤m} q_k)`; a sweep runs it in
//!   O(N) from the current `q₁`, then normalizes. Iterating this map
//!   converges to the QSD from the paper's own closed-form starters
//!   (`p⁽⁰⁾` above threshold, `p⁽¹⁾` below — and from a uniform start too,
//!   just more slowly).
//! * [`qsd_power_oracle`] — uniformizes the killed generator restricted to
//!   `{1..N}` into the substochastic step matrix `M = I + Q*/Λ` with
//!   `Λ = 2·max_n(λ_n + μ_n)` and left-iterates `v ← vM/‖vM‖₁`. The factor
//!   2 keeps every eigenvalue of `M` in `[0, 1]`, so the iteration converges
//!   monotonically in spectrum to the left Perron vector of the restricted
//!   chain — the QSD. Nothing is shared with the solver beyond the rate
//!   functions.
//!
//! Both stop on the componentwise *relative* difference between successive
//! (normalized) iterates, tightened by a geometric-ratio extrapolation: with
//! observed contraction `r`, the distance to the limit is ≈ `δ·r/(1−r)`, and
//! iteration continues until that estimate is below `fixed_point_tol/2`.
//! This is what lets the solver/oracle agreement criterion
//! (`rel_diff < 10·fixed_point_tol` componentwise) hold with headroom.
//!
//! μ-invariance: dividing the balance by μ shows the QSD depends only on
//! `(N, R₀, α)`; `μ` enters only through the decay rate `μ₁q₁`
//! ([`decay_rate`]).

use thiserror::Error;

use crate::approx::{product_weights, ProductFamily};
use crate::model::BirthDeathModel;
use crate::numerics::{rel_diff, stable_sum, NumericsError, PrecisionContext, Real};

/// Errors from building a [`Distribution`].
#[derive(Debug, Error)]
pub enum DistributionError {
    /// Zero-length probability vector.
    #[error("distribution must have at least one state")]
    Empty,
    /// A negative or non-finite entry.
    #[error("entry for state {state} is negative or non-finite")]
    InvalidEntry { state: u32 },
    /// Entries do not sum to 1 within the required tolerance.
    #[error("probabilities sum to 1 {deviation:+.3e}, outside tolerance")]
    NotNormalized { deviation: f64 },
    /// Weights to normalize sum to zero or below.
    #[error("weights sum to a non-positive value")]
    NonPositiveSum,
    /// Summation overflowed the working exponent range.
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Errors from the QSD solvers.
#[derive(Debug, Error)]
pub enum QsdError {
    /// The iteration cap was reached before the convergence criterion.
    #[error(
        "no convergence within {iterations} iterations \
         (last max relative update {last_delta:.3e})"
    )]
    NonConvergence { iterations: u64, last_delta: f64 },
    /// The iteration produced values the working precision cannot support
    /// (non-finite entries, non-positive total mass, or a non-positive
    /// converged component).
    #[error("precision failure during QSD iteration: {detail}")]
    PrecisionFailure { detail: String },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Approx(Box<crate::approx::ApproxError>),
}

impl From<crate::approx::ApproxError> for QsdError {
    fn from(err: crate::approx::ApproxError) -> Self {
        QsdError::Approx(Box::new(err))
    }
}

/// Identifies the model a distribution was computed for (`μ` is omitted
/// deliberately: the QSD is μ-invariant). Snapshot values are nearest-`f64`
/// for diagnostics and reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelTag {
    pub n: u32,
    pub r0: f64,
    pub alpha: f64,
}

impl ModelTag {
    /// Builds a tag by hand (for synthetic distributions in tests and
    /// error-metric inputs).
    pub fn new(n: u32, r0: f64, alpha: f64) -> Self {
        ModelTag { n, r0, alpha }
    }

    /// Snapshot of a model's identifying parameters.
    pub fn for_model<T: Real>(model: &BirthDeathModel<T>) -> Self {
        ModelTag {
            n: model.n(),
            r0: model.r0().to_f64(),
            alpha: model.alpha().to_f64(),
        }
    }
}

/// A probability vector on states `{1,…,N}` — the universal currency for
/// the exact QSD and every approximating distribution.
///
/// Entries are non-negative and sum to 1 within `equality_tol` of the
/// context that built them (relaxed to "1 minus a declared truncated-tail
/// bound" for truncated supports, see [`Distribution::sub_normalized`]).
#[derive(Debug, Clone)]
pub struct Distribution<T> {
    probs: Vec<T>,
    tag: ModelTag,
}

impl<T: Real> Distribution<T> {
    /// Wraps an already-normalized probability vector, validating
    /// non-negativity and `|Σp − 1| ≤ equality_tol`.
    pub fn from_probs(
        probs: Vec<T>,
        tag: ModelTag,
        ctx: &PrecisionContext,
    ) -> Result<Self, DistributionError> {
        Self::validate_entries(&probs)?;
        let sum = stable_sum(&probs)?;
        let deviation = sum - &T::one();
        if deviation.abs() > ctx.equality_tol() {
            return Err(DistributionError::NotNormalized {
                deviation: deviation.to_f64(),
            });
        }
        Ok(Distribution { probs, tag })
    }

    /// Normalizes non-negative weights into a distribution (the weights
    /// must have a strictly positive sum).
    pub fn normalized(
        weights: Vec<T>,
        tag: ModelTag,
        ctx: &PrecisionContext,
    ) -> Result<Self, DistributionError> {
        Self::validate_entries(&weights)?;
        let sum = stable_sum(&weights)?;
        if !(sum > T::zero()) {
            return Err(DistributionError::NonPositiveSum);
        }
        let probs: Vec<T> = weights.into_iter().map(|w| w / &sum).collect();
        Self::from_probs(probs, tag, ctx)
    }

    /// Wraps a deliberately sub-normalized vector (truncated support): the
    /// sum must lie within `equality_tol` of `[1 − tail_bound, 1]`.
    pub fn sub_normalized(
        probs: Vec<T>,
        tag: ModelTag,
        tail_bound: &T,
        ctx: &PrecisionContext,
    ) -> Result<Self, DistributionError> {
        Self::validate_entries(&probs)?;
        let sum = stable_sum(&probs)?;
        let tol: T = ctx.equality_tol();
        let floor = T::one() - tail_bound - &tol;
        let ceiling = T::one() + &tol;
        if sum < floor || sum > ceiling {
            return Err(DistributionError::NotNormalized {
                deviation: (sum - &T::one()).to_f64(),
            });
        }
        Ok(Distribution { probs, tag })
    }

    fn validate_entries(probs: &[T]) -> Result<(), DistributionError> {
        if probs.is_empty() {
            return Err(DistributionError::Empty);
        }
        for (index, p) in probs.iter().enumerate() {
            if !p.is_finite() || *p < T::zero() {
                return Err(DistributionError::InvalidEntry {
                    state: index as u32 + 1,
                });
            }
        }
        Ok(())
    }

    /// Number of states `N`.
    pub fn n(&self) -> u32 {
        self.probs.len() as u32
    }

    /// The probability masses, index 0 holding state 1.
    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Mass at `state` (1-indexed).
    ///
    /// # Panics
    ///
    /// Panics if `state` is outside `1..=N`.
    pub fn prob(&self, state: u32) -> &T {
        assert!(
            (1..=self.n()).contains(&state),
            "state {state} outside 1..={}",
            self.n()
        );
        &self.probs[(state - 1) as usize]
    }

    /// The model identity this distribution belongs to.
    pub fn tag(&self) -> &ModelTag {
        &self.tag
    }

    /// Mean `Σ i·q_i` of the state index.
    pub fn mean(&self) -> Result<T, NumericsError> {
        let terms: Vec<T> = self
            .probs
            .iter()
            .enumerate()
            .map(|(index, p)| p.clone() * &p.int_like(index as u64 + 1))
            .collect();
        stable_sum(&terms)
    }

    /// Variance `Σ (i − mean)²·q_i` of the state index.
    pub fn variance(&self, mean: &T) -> Result<T, NumericsError> {
        let terms: Vec<T> = self
            .probs
            .iter()
            .enumerate()
            .map(|(index, p)| {
                let centered = p.int_like(index as u64 + 1) - mean;
                p.clone() * &centered.powi(2)
            })
            .collect();
        stable_sum(&terms)
    }
}

/// Starting vector for [`solve_qsd_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// `p⁽⁰⁾` above threshold (R₀ > 1), `p⁽¹⁾` at or below — the paper's
    /// own closed-form starters, which make convergence fast.
    #[default]
    Auto,
    /// Uniform start; converges to the same fixed point (exercised in
    /// tests), typically in more sweeps.
    Uniform,
}

/// Knobs for the fixed-point solver (and iteration cap for the oracle).
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub init: InitStrategy,
    /// Sweep cap before [`QsdError::NonConvergence`] (default 10⁶).
    pub max_iterations: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            init: InitStrategy::Auto,
            max_iterations: 1_000_000,
        }
    }
}

/// Tracks the geometric-extrapolation stopping rule shared by the solver
/// and the oracle: converged once the measured update `δ` is below `tol`
/// *and* the estimated remaining distance `δ·r/(1−r)` (with `r` the
/// observed update contraction) is below `tol/2`.
struct ConvergenceGauge<T> {
    tol: T,
    half_tol: T,
    previous_delta: Option<T>,
}

impl<T: Real> ConvergenceGauge<T> {
    fn new(ctx: &PrecisionContext) -> Self {
        let tol: T = ctx.fixed_point_tol();
        let half_tol = tol.clone() / &tol.int_like(2);
        ConvergenceGauge {
            tol,
            half_tol,
            previous_delta: None,
        }
    }

    /// Feeds the latest successive-iterate difference; returns true when
    /// the stopping rule is satisfied.
    fn converged(&mut self, delta: &T) -> Result<bool, QsdError> {
        if !delta.is_finite() {
            return Err(QsdError::PrecisionFailure {
                detail: "non-finite update in iteration".to_string(),
            });
        }
        if delta.is_zero() {
            return Ok(true);
        }
        let verdict = match &self.previous_delta {
            Some(previous) if delta < &self.tol && previous > delta => {
                // r/(1−r) with r = delta/previous, rearranged to avoid the
                // intermediate ratio: remaining ≈ δ²/(previous − δ).
                let remaining = delta.clone() * delta / &(previous.clone() - delta);
                remaining < self.half_tol
            }
            _ => false,
        };
        self.previous_delta = Some(delta.clone());
        Ok(verdict)
    }

    fn last_delta(&self) -> f64 {
        self.previous_delta
            .as_ref()
            .map(|d| d.to_f64())
            .unwrap_or(f64::NAN)
    }
}

/// Solves for the QSD with default options ([`InitStrategy::Auto`], cap
/// 10⁶ sweeps). See the module docs for the algorithm.
pub fn solve_qsd<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
) -> Result<Distribution<T>, QsdError> {
    solve_qsd_with(model, ctx, SolveOptions::default())
}

/// [`solve_qsd`] with explicit options.
pub fn solve_qsd_with<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
    options: SolveOptions,
) -> Result<Distribution<T>, QsdError> {
    let n = model.n() as usize;
    let tag = ModelTag::for_model(model);
    if n == 1 {
        // Single transient state: conditioning on non-extinction pins it.
        return Ok(Distribution {
            probs: vec![T::from_u64(1, ctx)],
            tag,
        });
    }

    let mut q = initial_vector(model, ctx, options.init)?;

    // Per-state sweep coefficients: q_{m+1} = a_m·q_m + b_m·q₁·(1 − S_m)
    // for m = 1..N−1, from telescoping the balance equations.
    let mut forward = Vec::with_capacity(n - 1);
    let mut injection = Vec::with_capacity(n - 1);
    let mu1 = model.death_rate(1);
    for m in 1..n {
        let mu_next = model.death_rate(m as u32 + 1);
        forward.push(model.birth_rate(m as u32) / &mu_next);
        injection.push(mu1.clone() / &mu_next);
    }

    let one = T::from_u64(1, ctx);
    let mut gauge = ConvergenceGauge::new(ctx);
    let mut last_direction: Option<bool> = None;
    for iteration in 0..options.max_iterations {
        let q1 = q[0].clone();
        let mut swept: Vec<T> = Vec::with_capacity(n);
        swept.push(q1.clone());
        let mut remainder = one.clone() - &q1;
        for m in 1..n {
            let value =
                forward[m - 1].clone() * &swept[m - 1] + (injection[m - 1].clone() * &q1) * &remainder;
            remainder = remainder - &value;
            swept.push(value);
        }

        let total = stable_sum(&swept)?;
        if !total.is_finite() || !(total > T::zero()) {
            return Err(QsdError::PrecisionFailure {
                detail: format!("non-positive sweep mass at iteration {iteration}"),
            });
        }
        let mut next: Vec<T> = swept.into_iter().map(|v| v / &total).collect();

        // Damping on detected oscillation: if the q₁ update flips sign on
        // consecutive sweeps, replace the iterate by the average of the
        // last two — this kills the alternating mode without touching the
        // fixed point.
        let rising = next[0] > q[0];
        let falling = next[0] < q[0];
        if let (Some(was_rising), true) = (last_direction, rising || falling) {
            if was_rising != rising {
                let two = T::from_u64(2, ctx);
                for (value, previous) in next.iter_mut().zip(q.iter()) {
                    *value = (value.clone() + previous) / &two;
                }
            }
        }
        last_direction = if rising {
            Some(true)
        } else if falling {
            Some(false)
        } else {
            last_direction
        };

        let delta = max_rel_update(&next, &q);
        q = next;
        if gauge.converged(&delta)? {
            return finish(q, tag, ctx, iteration + 1);
        }
    }

    Err(QsdError::NonConvergence {
        iterations: options.max_iterations,
        last_delta: gauge.last_delta(),
    })
}

/// Computes the QSD by the independent uniformization/power-iteration
/// route with the default iteration cap. See the module docs.
pub fn qsd_power_oracle<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
) -> Result<Distribution<T>, QsdError> {
    qsd_power_oracle_with(model, ctx, SolveOptions::default().max_iterations)
}

/// [`qsd_power_oracle`] with an explicit sweep cap.
pub fn qsd_power_oracle_with<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
    max_iterations: u64,
) -> Result<Distribution<T>, QsdError> {
    let n = model.n() as usize;
    let tag = ModelTag::for_model(model);
    if n == 1 {
        return Ok(Distribution {
            probs: vec![T::from_u64(1, ctx)],
            tag,
        });
    }

    // Uniformization constant Λ = 2·max(λ_i + μ_i): the factor 2 keeps the
    // spectrum of M = I + Q*/Λ inside [0, 1], so no alternating mode can
    // compete with the Perron vector.
    let mut rates = Vec::with_capacity(n);
    let mut max_total: Option<T> = None;
    for state in 1..=n as u32 {
        let birth = model.birth_rate(state);
        let death = model.death_rate(state);
        let total = birth.clone() + &death;
        max_total = Some(match max_total {
            Some(current) if current >= total => current,
            _ => total.clone(),
        });
        rates.push((birth, death));
    }
    let uniformization = max_total.expect("n >= 2") * &T::from_u64(2, ctx);

    let mut up = Vec::with_capacity(n);
    let mut down = Vec::with_capacity(n);
    let mut stay = Vec::with_capacity(n);
    for (birth, death) in &rates {
        up.push(birth.clone() / &uniformization);
        down.push(death.clone() / &uniformization);
        stay.push(T::one() - &((birth.clone() + death) / &uniformization));
    }

    let uniform_mass = T::from_u64(1, ctx) / &T::from_u64(n as u64, ctx);
    let mut v: Vec<T> = (0..n).map(|_| uniform_mass.clone()).collect();
    let mut snapshot = v.clone();
    let mut gauge = ConvergenceGauge::new(ctx);

    // Convergence is re-measured every few sweeps: the snapshot distance is
    // still geometric (ratio γ^CHECK_EVERY), so the gauge extrapolation
    // applies unchanged, and the rel_diff scan stays off the hot path.
    const CHECK_EVERY: u64 = 8;
    for sweep in 1..=max_iterations {
        let mut next: Vec<T> = Vec::with_capacity(n);
        for j in 0..n {
            let mut mass = stay[j].clone() * &v[j];
            if j > 0 {
                mass = mass + &(up[j - 1].clone() * &v[j - 1]);
            }
            if j + 1 < n {
                mass = mass + &(down[j + 1].clone() * &v[j + 1]);
            }
            next.push(mass);
        }
        let total = stable_sum(&next)?;
        if !total.is_finite() || !(total > T::zero()) {
            return Err(QsdError::PrecisionFailure {
                detail: format!("non-positive mass in power iteration at sweep {sweep}"),
            });
        }
        v = next.into_iter().map(|value| value / &total).collect();

        if sweep % CHECK_EVERY == 0 {
            let delta = max_rel_update(&v, &snapshot);
            snapshot = v.clone();
            if gauge.converged(&delta)? {
                return finish(v, tag, ctx, sweep);
            }
        }
    }

    Err(QsdError::NonConvergence {
        iterations: max_iterations,
        last_delta: gauge.last_delta(),
    })
}

/// Absorption flux `μ₁·q₁` — the exponential decay rate of the survival
/// probability from quasi-stationarity. The only place `μ` re-enters after
/// cancelling from the balance equations.
pub fn decay_rate<T: Real>(q: &Distribution<T>, model: &BirthDeathModel<T>) -> T {
    model.death_rate(1) * q.prob(1)
}

/// Max over `n` of the absolute quasi-stationarity balance residual of `q`:
///
/// ```text
/// λ_{n−1}q_{n−1} − (λ_n + μ_n)q_n + μ_{n+1}q_{n+1} + μ₁q₁·q_n
/// ```
///
/// Diagnostic for tests: a converged QSD keeps this below
/// `fixed_point_tol · max(λ_n + μ_n)`.
pub fn max_balance_residual<T: Real>(q: &Distribution<T>, model: &BirthDeathModel<T>) -> T {
    let n = model.n();
    let decay = decay_rate(q, model);
    let mut worst = T::zero();
    for state in 1..=n {
        let mut residual = decay.clone() * q.prob(state)
            - &((model.birth_rate(state) + &model.death_rate(state)) * q.prob(state));
        if state > 1 {
            residual = residual + &(model.birth_rate(state - 1) * q.prob(state - 1));
        }
        if state < n {
            residual = residual + &(model.death_rate(state + 1) * q.prob(state + 1));
        }
        let magnitude = residual.abs();
        if magnitude > worst {
            worst = magnitude;
        }
    }
    worst
}

fn initial_vector<T: Real>(
    model: &BirthDeathModel<T>,
    ctx: &PrecisionContext,
    init: InitStrategy,
) -> Result<Vec<T>, QsdError> {
    let n = model.n() as usize;
    let weights = match init {
        InitStrategy::Uniform => {
            let mass = T::from_u64(1, ctx) / &T::from_u64(n as u64, ctx);
            return Ok((0..n).map(|_| mass.clone()).collect());
        }
        InitStrategy::Auto => {
            // The paper's starters: stationary weights of the auxiliary
            // chain without absorption (π/p⁽⁰⁾-family) above threshold,
            // the shifted-death variant (ρ/p⁽¹⁾-family) at or below.
            let family = if *model.r0() > T::one() {
                ProductFamily::Pi
            } else {
                ProductFamily::Rho
            };
            product_weights(model, family, ctx)?
        }
    };
    let total = stable_sum(&weights)?;
    if !(total > T::zero()) {
        return Err(QsdError::PrecisionFailure {
            detail: "non-positive starting mass".to_string(),
        });
    }
    Ok(weights.into_iter().map(|w| w / &total).collect())
}

fn max_rel_update<T: Real>(current: &[T], previous: &[T]) -> T {
    let mut worst = T::zero();
    for (new, old) in current.iter().zip(previous) {
        let difference = rel_diff(new, old);
        if difference > worst {
            worst = difference;
        }
    }
    worst
}

fn finish<T: Real>(
    probs: Vec<T>,
    tag: ModelTag,
    ctx: &PrecisionContext,
    _iterations: u64,
) -> Result<Distribution<T>, QsdError> {
    for (index, p) in probs.iter().enumerate() {
        if !(*p > T::zero()) {
            return Err(QsdError::PrecisionFailure {
                detail: format!(
                    "converged mass at state {} is not positive (irreducibility demands q_n > 0)",
                    index + 1
                ),
            });
        }
    }
    Ok(Distribution::from_probs(probs, tag, ctx)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{default_context, MpFloat};
    use num_traits::{One, Zero};

    fn mp(v: f64, ctx: &PrecisionContext) -> MpFloat {
        MpFloat::from_f64(v, ctx)
    }

    fn sis(n: u32, r0: f64, mu: f64, ctx: &PrecisionContext) -> BirthDeathModel<MpFloat> {
        BirthDeathModel::sis(n, mp(r0, ctx), mp(mu, ctx)).unwrap()
    }

    #[test]
    fn single_state_chain_is_a_point_mass() {
        let ctx = default_context(1, 3.0);
        let model = sis(1, 3.0, 2.0, &ctx);
        let q = solve_qsd(&model, &ctx).unwrap();
        assert_eq!(q.n(), 1);
        assert_eq!(q.prob(1).to_f64(), 1.0);
        let oracle = qsd_power_oracle(&model, &ctx).unwrap();
        assert_eq!(oracle.prob(1).to_f64(), 1.0);
        // decay rate = μ₁·q₁ = μ.
        assert_eq!(decay_rate(&q, &model).to_f64(), 2.0);
    }

    #[test]
    fn two_state_chain_solves_the_hand_derived_quadratic() {
        // (N=2, R0=2, μ=1): the balance reduces to q₁² − 4q₁ + 2 = 0,
        // so q₁ = 2 − √2 and q₂ = √2 − 1.
        let ctx = default_context(2, 2.0);
        let model = sis(2, 2.0, 1.0, &ctx);
        let q = solve_qsd(&model, &ctx).unwrap();

        let tol: MpFloat = ctx.fixed_point_tol();
        let two = mp(2.0, &ctx);
        let expected_q1 = two.clone() - &two.sqrt();
        let expected_q2 = two.sqrt() - &MpFloat::one();
        assert!(rel_diff(q.prob(1), &expected_q1) < tol);
        assert!(rel_diff(q.prob(2), &expected_q2) < tol);
        assert!((q.prob(1).to_f64() - 0.585786).abs() < 1e-6);

        // decay_rate = μ₁q₁ = 2 − √2.
        assert!(rel_diff(&decay_rate(&q, &model), &expected_q1) < ctx.fixed_point_tol());
    }

    #[test]
    fn oracle_agrees_with_the_quadratic_and_the_solver() {
        let ctx = default_context(2, 2.0);
        let model = sis(2, 2.0, 1.0, &ctx);
        let solved = solve_qsd(&model, &ctx).unwrap();
        let oracle = qsd_power_oracle(&model, &ctx).unwrap();
        let tol: MpFloat = ctx.fixed_point_tol();
        let ten = mp(10.0, &ctx);
        for state in 1..=2 {
            let agreement = rel_diff(solved.prob(state), oracle.prob(state));
            assert!(agreement < tol.clone() * &ten);
        }
    }

    #[test]
    fn uniform_start_reaches_the_same_fixed_point() {
        let ctx = default_context(12, 4.0);
        let model = sis(12, 4.0, 1.0, &ctx);
        let auto = solve_qsd(&model, &ctx).unwrap();
        let uniform = solve_qsd_with(
            &model,
            &ctx,
            SolveOptions {
                init: InitStrategy::Uniform,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        let tol: MpFloat = ctx.fixed_point_tol();
        let ten = mp(10.0, &ctx);
        for state in 1..=12 {
            assert!(rel_diff(auto.prob(state), uniform.prob(state)) < tol.clone() * &ten);
        }
    }

    #[test]
    fn qsd_is_mu_invariant_and_decay_rate_is_not() {
        let ctx = default_context(9, 0.5);
        let lazy = sis(9, 0.5, 1.0, &ctx);
        let fast = sis(9, 0.5, 7.0, &ctx);
        let q_lazy = solve_qsd(&lazy, &ctx).unwrap();
        let q_fast = solve_qsd(&fast, &ctx).unwrap();
        let tol: MpFloat = ctx.fixed_point_tol();
        for state in 1..=9 {
            assert!(rel_diff(q_lazy.prob(state), q_fast.prob(state)) < tol);
        }
        // μ scales the absorption flux linearly.
        let ratio = decay_rate(&q_fast, &fast) / &decay_rate(&q_lazy, &lazy);
        assert!(rel_diff(&ratio, &mp(7.0, &ctx)) < mp(1e-30, &ctx));
    }

    #[test]
    fn balance_residual_is_tiny_after_convergence() {
        let ctx = default_context(20, 3.0);
        let model = sis(20, 3.0, 2.0, &ctx);
        let q = solve_qsd(&model, &ctx).unwrap();
        let residual = max_balance_residual(&q, &model);

        let mut max_rate = MpFloat::zero();
        for state in 1..=20 {
            let total = model.birth_rate(state) + &model.death_rate(state);
            if total > max_rate {
                max_rate = total;
            }
        }
        let bound = ctx.fixed_point_tol::<MpFloat>() * &max_rate;
        assert!(residual < bound);
    }

    #[test]
    fn verhulst_models_solve_too() {
        let ctx = default_context(10, 2.0);
        let model =
            BirthDeathModel::verhulst(10, mp(2.0, &ctx), mp(1.0, &ctx), mp(0.5, &ctx)).unwrap();
        let q = solve_qsd(&model, &ctx).unwrap();
        let oracle = qsd_power_oracle(&model, &ctx).unwrap();
        let tol: MpFloat = ctx.fixed_point_tol();
        let ten = mp(10.0, &ctx);
        for state in 1..=10 {
            assert!(*q.prob(state) > MpFloat::zero());
            assert!(rel_diff(q.prob(state), oracle.prob(state)) < tol.clone() * &ten);
        }
        // Crowding (α > 0) pushes mass down relative to SIS.
        let sis_q = solve_qsd(&sis(10, 2.0, 1.0, &ctx), &ctx).unwrap();
        let crowd_mean = q.mean().unwrap();
        let sis_mean = sis_q.mean().unwrap();
        assert!(crowd_mean < sis_mean);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let ctx = default_context(10, 2.0);
        let model = sis(10, 2.0, 1.0, &ctx);
        let result = solve_qsd_with(
            &model,
            &ctx,
            SolveOptions {
                init: InitStrategy::Uniform,
                max_iterations: 2,
            },
        );
        assert!(matches!(result, Err(QsdError::NonConvergence { .. })));
    }

    #[test]
    fn distribution_construction_validates() {
        let ctx = default_context(2, 2.0);
        let tag = ModelTag::new(2, 2.0, 0.0);
        let half = mp(0.5, &ctx);
        assert!(Distribution::from_probs(vec![half.clone(), half.clone()], tag, &ctx).is_ok());
        assert!(matches!(
            Distribution::from_probs(vec![half.clone(), mp(0.6, &ctx)], tag, &ctx),
            Err(DistributionError::NotNormalized { .. })
        ));
        assert!(matches!(
            Distribution::from_probs(vec![mp(1.5, &ctx), mp(-0.5, &ctx)], tag, &ctx),
            Err(DistributionError::InvalidEntry { state: 2 })
        ));
        assert!(matches!(
            Distribution::<MpFloat>::from_probs(vec![], tag, &ctx),
            Err(DistributionError::Empty)
        ));
        assert!(matches!(
            Distribution::normalized(vec![mp(0.0, &ctx), mp(0.0, &ctx)], tag, &ctx),
            Err(DistributionError::NonPositiveSum)
        ));
    }

    #[test]
    fn sub_normalized_accepts_declared_tail_only() {
        let ctx = default_context(2, 2.0);
        let tag = ModelTag::new(2, 2.0, 0.0);
        let probs = vec![mp(0.5, &ctx), mp(0.3, &ctx)];
        // Sum 0.8: fine for tail bound 0.25, not for 0.1.
        assert!(
            Distribution::sub_normalized(probs.clone(), tag, &mp(0.25, &ctx), &ctx).is_ok()
        );
        assert!(matches!(
            Distribution::sub_normalized(probs, tag, &mp(0.1, &ctx), &ctx),
            Err(DistributionError::NotNormalized { .. })
        ));
    }

    #[test]
    fn mean_and_variance_by_hand() {
        let ctx = default_context(3, 2.0);
        let tag = ModelTag::new(3, 2.0, 0.0);
        let q = Distribution::from_probs(
            vec![mp(0.25, &ctx), mp(0.5, &ctx), mp(0.25, &ctx)],
            tag,
            &ctx,
        )
        .unwrap();
        let mean = q.mean().unwrap();
        assert_eq!(mean.to_f64(), 2.0);
        let variance = q.variance(&mean).unwrap();
        assert_eq!(variance.to_f64(), 0.5);
    }
}
