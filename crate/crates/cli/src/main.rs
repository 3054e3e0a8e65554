//! `qsd` — grid experiments on the stochastic logistic SIS model.
//!
//! Reproduces the published above/below-threshold error tables, runs
//! doubling-in-N scaling classifications, or evaluates custom `(R₀, N)`
//! grids, rendering CSV, aligned text, or JSON lines.
//!
//! Configuration precedence: command-line flags override config-file
//! values, which override the selected experiment's defaults. Exit codes:
//! 0 on full success, 1 when any grid cell failed (partial results are
//! still emitted), 2 on configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Parser;
use sis_qsd::{
    emit_report, run_experiment, ApproxKind, ExperimentConfig, ExperimentKind, OutputFormat,
};

#[derive(Debug, Parser)]
#[command(
    name = "qsd",
    version,
    arg_required_else_help = true,
    about = "Quasi-stationary distribution of the stochastic logistic SIS model: \
             error tables for its closed-form approximations and scaling classification"
)]
struct Cli {
    /// Experiment to run: table1, table2, scaling, or single
    #[arg(long, value_name = "KIND")]
    experiment: Option<String>,

    /// Comma-separated basic reproduction ratios, e.g. 2,5,10
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    r0: Option<Vec<f64>>,

    /// Comma-separated population sizes, e.g. 25,50,100
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    n: Option<Vec<u32>>,

    /// Comma-separated approximations: beta_binomial, p1, p0, ov3, g1, g2
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    approx: Option<Vec<String>>,

    /// Override the automatic working precision (significand bits)
    #[arg(long, value_name = "BITS")]
    precision_bits: Option<u32>,

    /// Output format: csv, text-table, or json-lines
    #[arg(long, value_name = "FORMAT")]
    format: Option<String>,

    /// Write the report to this file instead of standard output
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Flat key-value config file (keys match the long flags)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

/// Values read from a `--config` file; each is optional so the file can
/// set any subset and leave the rest to flags or defaults.
#[derive(Debug, Default)]
struct FileValues {
    experiment: Option<String>,
    r0: Option<Vec<f64>>,
    n: Option<Vec<u32>>,
    approx: Option<Vec<String>>,
    precision_bits: Option<u32>,
    format: Option<String>,
    out: Option<PathBuf>,
}

fn parse_list<T: FromStr>(value: &str, line: usize, key: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|item| {
            item.trim()
                .parse::<T>()
                .map_err(|e| format!("config line {line}: bad `{key}` entry `{}`: {e}", item.trim()))
        })
        .collect()
}

/// Parses the flat `key = value` config format. Blank lines and `#`
/// comments are ignored; list values are comma-separated; keys are the
/// long flag names.
fn parse_config_file(text: &str) -> Result<FileValues, String> {
    let mut values = FileValues::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!(
                "config line {lineno}: expected `key = value`, got `{line}`"
            ));
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "experiment" => values.experiment = Some(value.to_string()),
            "r0" => values.r0 = Some(parse_list(value, lineno, "r0")?),
            "n" => values.n = Some(parse_list(value, lineno, "n")?),
            "approx" => {
                values.approx = Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "precision-bits" => {
                values.precision_bits = Some(value.parse().map_err(|e| {
                    format!("config line {lineno}: bad `precision-bits` value `{value}`: {e}")
                })?)
            }
            "format" => values.format = Some(value.to_string()),
            "out" => values.out = Some(PathBuf::from(value)),
            other => {
                return Err(format!(
                    "config line {lineno}: unknown key `{other}`; valid keys: \
                     experiment, r0, n, approx, precision-bits, format, out"
                ))
            }
        }
    }
    Ok(values)
}

fn parse_approximations(labels: &[String]) -> Result<Vec<ApproxKind>, String> {
    labels
        .iter()
        .map(|label| label.parse::<ApproxKind>().map_err(|e| e.to_string()))
        .collect()
}

/// Builds the effective configuration: experiment defaults, overlaid with
/// config-file values, overlaid with flags; then validated. Returns the
/// config together with any advisory warnings.
fn resolve_config(cli: Cli) -> Result<(ExperimentConfig, Vec<String>), String> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
            parse_config_file(&text)?
        }
        None => FileValues::default(),
    };

    let kind = match cli.experiment.as_deref().or(file.experiment.as_deref()) {
        Some(label) => label.parse::<ExperimentKind>().map_err(|e| e.to_string())?,
        None => ExperimentKind::Single,
    };
    let mut config = ExperimentConfig::defaults_for(kind);

    if let Some(r0) = file.r0 {
        config.r0_values = r0;
    }
    if let Some(n) = file.n {
        config.n_values = n;
    }
    if let Some(labels) = &file.approx {
        config.approximations = parse_approximations(labels)?;
    }
    if let Some(bits) = file.precision_bits {
        config.precision_bits = Some(bits);
    }
    if let Some(format) = &file.format {
        config.output_format = format.parse().map_err(|e: sis_qsd::ExperimentError| e.to_string())?;
    }
    if let Some(out) = file.out {
        config.output_path = Some(out);
    }

    if let Some(r0) = cli.r0 {
        config.r0_values = r0;
    }
    if let Some(n) = cli.n {
        config.n_values = n;
    }
    if let Some(labels) = &cli.approx {
        config.approximations = parse_approximations(labels)?;
    }
    if let Some(bits) = cli.precision_bits {
        config.precision_bits = Some(bits);
    }
    if let Some(format) = &cli.format {
        config.output_format = format.parse().map_err(|e: sis_qsd::ExperimentError| e.to_string())?;
    }
    if let Some(out) = cli.out {
        config.output_path = Some(out);
    }

    let warnings = config.validate().map_err(|e| e.to_string())?;
    Ok((config, warnings))
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let (config, warnings) = match resolve_config(cli) {
        Ok(resolved) => resolved,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }

    let result = match run_experiment(&config) {
        Ok(result) => result,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    if let Err(e) = emit_report(&result, config.output_format, config.output_path.as_deref()) {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(2);
    }

    // Per-cell trouble goes to stderr so grids stay machine-readable.
    for failure in result.failures() {
        eprintln!(
            "cell failure: R0 = {}, N = {}, {}: {}",
            failure.r0,
            failure.n,
            failure.approx.label(),
            failure.message
        );
    }
    for miss in &result.verdict_failures {
        eprintln!("{miss}");
    }
    // CSV carries only the cell grid; echo scaling verdicts on stderr
    // (text-table and json-lines embed them in the report itself).
    if config.output_format == OutputFormat::Csv {
        for v in &result.verdicts {
            eprintln!(
                "scaling verdict: {} @ R0={}: {}",
                v.approx.label(),
                v.r0,
                v.verdict
            );
        }
    }

    if result.has_failures() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
