//! Grid experiments over `(R₀, N)` cells: reproduce the published error
//! tables, run doubling-in-N scaling classifications, and render reports.
//!
//! A run walks the configured grid in deterministic order (R₀ outer, N
//! inner, approximations in list order). Each cell solves the exact QSD
//! once, cross-checks it against the independent power-iteration oracle,
//! then evaluates every requested approximation against it. Failures are
//! contained: a failed cell (or a single failed approximation) is recorded
//! and rendered as such while the rest of the grid proceeds.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::approx::{
    beta_binomial_fit, geometric_distribution, geometric_params, ov3_distribution,
    p0_distribution, p1_distribution, ApproxError, ApproxKind, GeometricVariant,
};
use crate::error_analysis::{classify_scaling, err1, err2, ErrorReport, ScalingVerdict};
use crate::model::BirthDeathModel;
use crate::numerics::{rel_diff, MpFloat, PrecisionContext, Real};
use crate::qsd::{qsd_power_oracle, solve_qsd, Distribution};

/// Errors that abort a run outright (per-cell trouble is captured in
/// [`CellFailure`] instead).
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {detail}")]
    InvalidConfig { detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_error<T>(detail: String) -> Result<T, ExperimentError> {
    Err(ExperimentError::InvalidConfig { detail })
}

/// The built-in experiment shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Above-threshold error table (R₀ ∈ {2, 5, 10}).
    Table1,
    /// Below-threshold error table (R₀ ∈ {0.5, 0.2, 0.1}).
    Table2,
    /// Error-order classification over doubling N.
    Scaling,
    /// A caller-specified grid with no extra semantics.
    Single,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::Table1 => "table1",
            ExperimentKind::Table2 => "table2",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Single => "single",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ExperimentKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table1" => Ok(ExperimentKind::Table1),
            "table2" => Ok(ExperimentKind::Table2),
            "scaling" => Ok(ExperimentKind::Scaling),
            "single" => Ok(ExperimentKind::Single),
            other => config_error(format!(
                "unknown experiment `{other}`; valid experiments: table1, table2, scaling, single"
            )),
        }
    }
}

/// Report rendering formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    /// Machine-readable grid: `r0,n,approx,err1,err2,precision_bits`.
    Csv,
    /// Aligned table mirroring the paper's layout (rows `(R₀, N)`, one
    /// Err₁ column per approximation).
    TextTable,
    /// One JSON record per report (plus failure/verdict records).
    JsonLines,
}

impl OutputFormat {
    pub fn label(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::TextTable => "text-table",
            OutputFormat::JsonLines => "json-lines",
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for OutputFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "text-table" => Ok(OutputFormat::TextTable),
            "json-lines" => Ok(OutputFormat::JsonLines),
            other => config_error(format!(
                "unknown output format `{other}`; valid formats: csv, text-table, json-lines"
            )),
        }
    }
}

/// A fully specified experiment: grid, approximations, precision, output.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub r0_values: Vec<f64>,
    pub n_values: Vec<u32>,
    pub approximations: Vec<ApproxKind>,
    /// Overrides the per-cell `default_context` precision when set.
    pub precision_bits: Option<u32>,
    pub output_format: OutputFormat,
    pub output_path: Option<std::path::PathBuf>,
}

impl ExperimentConfig {
    /// The above-threshold table: R₀ ∈ {2, 5, 10} × N ∈ {25, 50, 100},
    /// columns beta-binomial, p⁽¹⁾, p⁽⁰⁾, OV3.
    pub fn table1_defaults() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Table1,
            r0_values: vec![2.0, 5.0, 10.0],
            n_values: vec![25, 50, 100],
            approximations: vec![
                ApproxKind::BetaBinomial,
                ApproxKind::P1,
                ApproxKind::P0,
                ApproxKind::Ov3,
            ],
            precision_bits: None,
            output_format: OutputFormat::TextTable,
            output_path: None,
        }
    }

    /// The below-threshold table: R₀ ∈ {0.5, 0.2, 0.1} × N ∈ {25, 50, 100},
    /// columns G1, G2, p⁽⁰⁾, p⁽¹⁾.
    pub fn table2_defaults() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Table2,
            r0_values: vec![0.5, 0.2, 0.1],
            n_values: vec![25, 50, 100],
            approximations: vec![
                ApproxKind::G1,
                ApproxKind::G2,
                ApproxKind::P0,
                ApproxKind::P1,
            ],
            ..Self::table1_defaults()
        }
    }

    /// Scaling classification over the above-threshold grid (the N values
    /// are consecutive doublings already).
    pub fn scaling_defaults() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Scaling,
            ..Self::table1_defaults()
        }
    }

    /// A bare single-grid run: the caller must supply `r0`/`n`; the
    /// default approximations are the two auxiliary-process distributions.
    pub fn single_defaults() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Single,
            r0_values: vec![],
            n_values: vec![],
            approximations: vec![ApproxKind::P0, ApproxKind::P1],
            ..Self::table1_defaults()
        }
    }

    /// The default configuration for an experiment kind.
    pub fn defaults_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Table1 => Self::table1_defaults(),
            ExperimentKind::Table2 => Self::table2_defaults(),
            ExperimentKind::Scaling => Self::scaling_defaults(),
            ExperimentKind::Single => Self::single_defaults(),
        }
    }

    /// Validates the configuration; returns advisory warnings (currently:
    /// OV3 requested outside its claimed regime). Hard errors: empty grid
    /// axes, non-positive parameters, an unusable precision override,
    /// non-doubling N for scaling runs, and G2 anywhere at R₀ ≥ 1.
    pub fn validate(&self) -> Result<Vec<String>, ExperimentError> {
        if self.r0_values.is_empty() {
            return config_error("no R0 values given (use --r0)".to_string());
        }
        if self.n_values.is_empty() {
            return config_error("no N values given (use --n)".to_string());
        }
        if self.approximations.is_empty() {
            return config_error("no approximations given (use --approx)".to_string());
        }
        for &r0 in &self.r0_values {
            if !r0.is_finite() || r0 <= 0.0 {
                return config_error(format!("R0 values must be positive and finite, got {r0}"));
            }
        }
        if self.n_values.contains(&0) {
            return config_error("N values must be at least 1".to_string());
        }
        if let Some(bits) = self.precision_bits {
            if let Err(e) = PrecisionContext::from_bits(bits) {
                return config_error(format!("unusable precision override {bits}: {e}"));
            }
        }
        if self.experiment == ExperimentKind::Scaling {
            if self.n_values.len() < 3 {
                return config_error(format!(
                    "scaling needs at least 3 doubling N values, got {}",
                    self.n_values.len()
                ));
            }
            for pair in self.n_values.windows(2) {
                if pair[0].checked_mul(2) != Some(pair[1]) {
                    return config_error(format!(
                        "scaling N values must be consecutive doublings, got {} then {}",
                        pair[0], pair[1]
                    ));
                }
            }
        }
        if self.approximations.contains(&ApproxKind::G2) {
            if let Some(&bad) = self.r0_values.iter().find(|r| **r >= 1.0) {
                return config_error(format!(
                    "g2 is defined only below threshold (R0 < 1), but R0 = {bad} was requested"
                ));
            }
        }
        let mut warnings = Vec::new();
        if self.approximations.contains(&ApproxKind::Ov3) {
            if let Some(&low) = self.r0_values.iter().find(|r| **r <= 1.0) {
                warnings.push(format!(
                    "ov3 requested at R0 = {low}: the approximation is only claimed for R0 > 1, \
                     and cells at R0 <= N/(N-1) will fail to normalize"
                ));
            }
        }
        Ok(warnings)
    }
}

/// One cell×approximation slot that could not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub r0: f64,
    pub n: u32,
    pub approx: ApproxKind,
    pub precision_bits: u32,
    pub message: String,
}

/// Outcome of one cell×approximation slot, in grid order.
#[derive(Debug, Clone)]
pub enum CellOutcome {
    Success(ErrorReport),
    Failure(CellFailure),
}

impl CellOutcome {
    fn r0(&self) -> f64 {
        match self {
            CellOutcome::Success(r) => r.r0,
            CellOutcome::Failure(f) => f.r0,
        }
    }

    fn n(&self) -> u32 {
        match self {
            CellOutcome::Success(r) => r.n,
            CellOutcome::Failure(f) => f.n,
        }
    }
}

/// Everything a run produced, in deterministic grid order.
#[derive(Debug)]
pub struct ExperimentResult {
    cells: Vec<CellOutcome>,
    /// One verdict per (approximation, R₀) pair, scaling runs only.
    pub verdicts: Vec<ScalingVerdict>,
    /// Scaling classifications that could not be made (missing or
    /// degenerate samples), as human-readable messages.
    pub verdict_failures: Vec<String>,
    approximations: Vec<ApproxKind>,
}

impl ExperimentResult {
    /// All slots in grid order.
    pub fn cells(&self) -> &[CellOutcome] {
        &self.cells
    }

    /// The successful reports, in grid order.
    pub fn reports(&self) -> impl Iterator<Item = &ErrorReport> {
        self.cells.iter().filter_map(|c| match c {
            CellOutcome::Success(r) => Some(r),
            CellOutcome::Failure(_) => None,
        })
    }

    /// The failed slots, in grid order.
    pub fn failures(&self) -> impl Iterator<Item = &CellFailure> {
        self.cells.iter().filter_map(|c| match c {
            CellOutcome::Failure(f) => Some(f),
            CellOutcome::Success(_) => None,
        })
    }

    /// True when any slot failed or any verdict was skipped (drives the
    /// CLI exit code).
    pub fn has_failures(&self) -> bool {
        !self.verdict_failures.is_empty()
            || self.cells.iter().any(|c| matches!(c, CellOutcome::Failure(_)))
    }
}

/// Evaluates one approximation against the exact QSD's model and value
/// (`q_exact` is consumed by the beta-binomial moment fit; the others
/// derive everything from the model).
pub fn evaluate_approx<T: Real>(
    kind: ApproxKind,
    model: &BirthDeathModel<T>,
    q_exact: &Distribution<T>,
    ctx: &PrecisionContext,
) -> Result<Distribution<T>, ApproxError> {
    match kind {
        ApproxKind::BetaBinomial => beta_binomial_fit(q_exact, model.n(), ctx),
        ApproxKind::P1 => p1_distribution(model, ctx),
        ApproxKind::P0 => p0_distribution(model, ctx),
        ApproxKind::Ov3 => ov3_distribution(model, ctx),
        ApproxKind::G1 => {
            let params = geometric_params(model, GeometricVariant::G1, ctx)?;
            geometric_distribution(&params, model.n(), ctx)
        }
        ApproxKind::G2 => {
            let params = geometric_params(model, GeometricVariant::G2, ctx)?;
            geometric_distribution(&params, model.n(), ctx)
        }
    }
}

/// Runs the configured grid. Cell-level trouble lands in the result as
/// [`CellFailure`] entries; only configuration problems abort the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;

    let mut cells = Vec::new();
    for &r0 in &config.r0_values {
        for &n in &config.n_values {
            let ctx = match config.precision_bits {
                Some(bits) => PrecisionContext::from_bits(bits)
                    .expect("validated by ExperimentConfig::validate"),
                None => crate::numerics::default_context(n, r0),
            };
            run_cell(r0, n, &ctx, &config.approximations, &mut cells);
        }
    }

    let mut verdicts = Vec::new();
    let mut verdict_failures = Vec::new();
    if config.experiment == ExperimentKind::Scaling {
        for &approx in &config.approximations {
            for &r0 in &config.r0_values {
                let errors: Vec<f64> = cells
                    .iter()
                    .filter_map(|c| match c {
                        CellOutcome::Success(rep)
                            if rep.approx == approx && rep.r0 == r0 =>
                        {
                            Some(rep.err1)
                        }
                        _ => None,
                    })
                    .collect();
                if errors.len() != config.n_values.len() {
                    verdict_failures.push(format!(
                        "scaling classification skipped for {} at R0 = {r0}: \
                         {} of {} cells usable",
                        approx.label(),
                        errors.len(),
                        config.n_values.len()
                    ));
                    continue;
                }
                match classify_scaling(approx, r0, &config.n_values, &errors) {
                    Ok(verdict) => verdicts.push(verdict),
                    Err(e) => verdict_failures.push(format!(
                        "scaling classification failed for {} at R0 = {r0}: {e}",
                        approx.label()
                    )),
                }
            }
        }
    }

    Ok(ExperimentResult {
        cells,
        verdicts,
        verdict_failures,
        approximations: config.approximations.clone(),
    })
}

/// Solves one `(R₀, N)` cell and appends one outcome per approximation.
fn run_cell(
    r0: f64,
    n: u32,
    ctx: &PrecisionContext,
    approximations: &[ApproxKind],
    cells: &mut Vec<CellOutcome>,
) {
    let bits = ctx.significand_bits();
    let fail_all = |message: String, cells: &mut Vec<CellOutcome>| {
        for &approx in approximations {
            cells.push(CellOutcome::Failure(CellFailure {
                r0,
                n,
                approx,
                precision_bits: bits,
                message: message.clone(),
            }));
        }
    };

    // Lift R₀ exactly: its binary64 value *is* the cell's parameter.
    let model = match BirthDeathModel::sis(
        n,
        MpFloat::from_f64(r0, ctx),
        MpFloat::from_u64(1, ctx),
    ) {
        Ok(m) => m,
        Err(e) => return fail_all(format!("model construction failed: {e}"), cells),
    };

    let exact = match solve_qsd(&model, ctx) {
        Ok(q) => q,
        Err(e) => return fail_all(format!("exact QSD solve failed: {e}"), cells),
    };

    // Cross-check against the methodologically independent oracle before
    // trusting the cell: absolute agreement on every state (the Err₁
    // gauge the reported metrics live in) plus relative agreement at the
    // mode. Tail states far below the working precision's share of the
    // tail mass cannot carry a *relative* bound through the sweep's
    // 1 − Σq cancellation, and never matter at reporting scale.
    let oracle = match qsd_power_oracle(&model, ctx) {
        Ok(q) => q,
        Err(e) => return fail_all(format!("power-iteration oracle failed: {e}"), cells),
    };
    let tolerance = ctx.fixed_point_tol::<MpFloat>() * &MpFloat::from_u64(10, ctx);
    let mut mode = 1u32;
    for state in 2..=n {
        if exact.prob(state) > exact.prob(mode) {
            mode = state;
        }
    }
    let mode_gap = rel_diff(exact.prob(mode), oracle.prob(mode));
    if !(mode_gap < tolerance) {
        return fail_all(
            format!(
                "solver/oracle disagreement at the mode (state {mode}): rel_diff {:.3e} \
                 exceeds 10·fixed_point_tol",
                mode_gap.to_f64()
            ),
            cells,
        );
    }
    for state in 1..=n {
        let gap = (exact.prob(state).clone() - oracle.prob(state)).abs();
        if !(gap < tolerance) {
            return fail_all(
                format!(
                    "solver/oracle disagreement at state {state}: |Δ| {:.3e} \
                     exceeds 10·fixed_point_tol",
                    gap.to_f64()
                ),
                cells,
            );
        }
    }

    for &approx in approximations {
        let outcome = evaluate_approx(approx, &model, &exact, ctx)
            .map_err(|e| e.to_string())
            .and_then(|qhat| {
                let e1 = err1(&qhat, &exact).map_err(|e| e.to_string())?;
                let e2 = err2(&qhat, &exact).map_err(|e| e.to_string())?;
                ErrorReport::new(approx, n, r0, e1.to_f64(), e2.to_f64(), bits)
                    .map_err(|e| e.to_string())
            });
        cells.push(match outcome {
            Ok(report) => CellOutcome::Success(report),
            Err(message) => CellOutcome::Failure(CellFailure {
                r0,
                n,
                approx,
                precision_bits: bits,
                message,
            }),
        });
    }
}

/// Renders a result to a string in the requested format (the writing side
/// of [`emit_report`], split out so determinism is testable byte-for-byte).
pub fn render_report(result: &ExperimentResult, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => render_csv(result),
        OutputFormat::TextTable => render_text_table(result),
        OutputFormat::JsonLines => render_json_lines(result),
    }
}

/// Renders and writes to `path`, or to standard output when `path` is
/// `None`.
pub fn emit_report(
    result: &ExperimentResult,
    format: OutputFormat,
    path: Option<&Path>,
) -> Result<(), ExperimentError> {
    let rendered = render_report(result, format);
    match path {
        Some(p) => std::fs::write(p, rendered)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(rendered.as_bytes())?;
        }
    }
    Ok(())
}

fn render_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("r0,n,approx,err1,err2,precision_bits\n");
    for cell in &result.cells {
        match cell {
            CellOutcome::Success(r) => {
                writeln!(
                    out,
                    "{},{},{},{:.5e},{:.5e},{}",
                    r.r0,
                    r.n,
                    r.approx.label(),
                    r.err1,
                    r.err2,
                    r.precision_bits
                )
                .expect("string writes are infallible");
            }
            CellOutcome::Failure(f) => {
                writeln!(
                    out,
                    "{},{},{},NaN,NaN,{}",
                    f.r0,
                    f.n,
                    f.approx.label(),
                    f.precision_bits
                )
                .expect("string writes are infallible");
            }
        }
    }
    out
}

/// Two-significant-figure scientific notation; `{:.1e}` rounds half to
/// even on the exact binary value, matching the table-reproduction
/// rounding rule.
fn table_number(value: f64) -> String {
    format!("{value:.1e}")
}

fn render_text_table(result: &ExperimentResult) -> String {
    let k = result.approximations.len();
    let mut header: Vec<String> = vec!["r0".to_string(), "n".to_string()];
    header.extend(result.approximations.iter().map(|a| a.label().to_string()));

    let mut rows: Vec<Vec<String>> = Vec::new();
    for chunk in result.cells.chunks(k) {
        let mut row = vec![
            format!("{}", chunk[0].r0()),
            format!("{}", chunk[0].n()),
        ];
        for cell in chunk {
            row.push(match cell {
                CellOutcome::Success(r) => table_number(r.err1),
                CellOutcome::Failure(_) => "failed".to_string(),
            });
        }
        rows.push(row);
    }

    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, value) in widths.iter_mut().zip(row) {
            *w = (*w).max(value.len());
        }
    }

    let render_row = |row: &[String]| -> String {
        row.iter()
            .zip(&widths)
            .map(|(value, width)| format!("{value:>width$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };

    let mut out = render_row(&header);
    out.push('\n');
    for row in &rows {
        out.push_str(&render_row(row));
        out.push('\n');
    }

    if !result.verdicts.is_empty() || !result.verdict_failures.is_empty() {
        out.push_str("\nscaling verdicts:\n");
        for v in &result.verdicts {
            writeln!(
                out,
                "  {} @ R0={}: {}",
                v.approx.label(),
                v.r0,
                v.verdict
            )
            .expect("string writes are infallible");
        }
        for miss in &result.verdict_failures {
            writeln!(out, "  {miss}").expect("string writes are infallible");
        }
    }
    out
}

#[derive(Serialize)]
struct ReportRecord<'a> {
    r0: f64,
    n: u32,
    approx: &'a str,
    err1: f64,
    err2: f64,
    precision_bits: u32,
}

#[derive(Serialize)]
struct FailureRecord<'a> {
    r0: f64,
    n: u32,
    approx: &'a str,
    precision_bits: u32,
    error: &'a str,
}

#[derive(Serialize)]
struct VerdictRecord<'a> {
    approx: &'a str,
    r0: f64,
    verdict: &'a str,
    sampled_n: &'a [u32],
    errors: &'a [f64],
}

fn render_json_lines(result: &ExperimentResult) -> String {
    let mut out = String::new();
    for cell in &result.cells {
        let line = match cell {
            CellOutcome::Success(r) => serde_json::to_string(&ReportRecord {
                r0: r.r0,
                n: r.n,
                approx: r.approx.label(),
                err1: r.err1,
                err2: r.err2,
                precision_bits: r.precision_bits,
            }),
            CellOutcome::Failure(f) => serde_json::to_string(&FailureRecord {
                r0: f.r0,
                n: f.n,
                approx: f.approx.label(),
                precision_bits: f.precision_bits,
                error: &f.message,
            }),
        };
        out.push_str(&line.expect("plain records serialize infallibly"));
        out.push('\n');
    }
    for v in &result.verdicts {
        let line = serde_json::to_string(&VerdictRecord {
            approx: v.approx.label(),
            r0: v.r0,
            verdict: v.verdict.label(),
            sampled_n: &v.sampled_n,
            errors: &v.errors,
        });
        out.push_str(&line.expect("plain records serialize infallibly"));
        out.push('\n');
    }
    out
}
