//! End-to-end orchestration behind the command-line tool.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::bootstrap::{run_bootstrap, BootstrapError, BootstrapRun, IntervalSummary};
use crate::cohort::{
    read_cohort_csv, validate_cohort, write_cohort_csv, CohortDataset, CohortError, CsvSchema,
    EventKind,
};
use crate::config::{ConfigError, ContrastSpec, Mode, RunConfig};
use crate::engine::{
    positivity_warnings, Analysis, Effect, EngineError, ExposureContrast, RegimeValue,
};
use crate::oracle::{generate_cohort, true_conditional_effects, true_effects, OracleError, TrueEffects};
use crate::report::{format_number, render_table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Validation(String),
    #[error("model fitting failed: {0}")]
    Fitting(String),
    #[error("bootstrap failed: {0}")]
    Bootstrap(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) => 1,
            RunError::Validation(_) => 2,
            RunError::Fitting(_) => 3,
            RunError::Bootstrap(_) => 4,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(..) => RunError::Io(e.to_string()),
            _ => RunError::Validation(e.to_string()),
        }
    }
}

impl From<CohortError> for RunError {
    fn from(e: CohortError) -> Self {
        match e {
            CohortError::Io(_) => RunError::Io(e.to_string()),
            CohortError::Validation(v) => RunError::Validation(match v.issues().first() {
                Some(first) if v.issues().len() > 1 => {
                    format!("cohort validation: {first} (and {} more)", v.issues().len() - 1)
                }
                Some(first) => format!("cohort validation: {first}"),
                None => "cohort validation failed".into(),
            }),
            other => RunError::Validation(other.to_string()),
        }
    }
}

impl From<EngineError> for RunError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Cohort(c) => c.into(),
            EngineError::EmptyCohort | EngineError::InvalidContrast(_) => RunError::Validation(e.to_string()),
            _ => RunError::Fitting(e.to_string()),
        }
    }
}

impl From<BootstrapError> for RunError {
    fn from(e: BootstrapError) -> Self {
        match e {
            BootstrapError::PlugIn(inner) => inner.into(),
            BootstrapError::TooManyFailures { .. } => RunError::Bootstrap(e.to_string()),
            _ => RunError::Validation(e.to_string()),
        }
    }
}

impl From<OracleError> for RunError {
    fn from(e: OracleError) -> Self {
        RunError::Validation(e.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Suppress progress and warnings on stderr.
    pub quiet: bool,
    /// Write the full-cohort fitted models here as JSON.
    pub dump_models: Option<PathBuf>,
}

/// Artifacts of a run, also written to the configured destinations.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub json: String,
    pub table: String,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct Metadata {
    tool: &'static str,
    version: &'static str,
}

const METADATA: Metadata = Metadata {
    tool: "gformula",
    version: VERSION,
};

#[derive(Serialize)]
struct CohortSummary {
    n_subjects: usize,
    n_visits: usize,
    n_outcome_events: usize,
    n_competing_deaths: usize,
    n_censored: usize,
}

impl CohortSummary {
    fn of(c: &CohortDataset) -> Self {
        let count = |k| c.subjects.iter().filter(|s| s.event == k).count();
        CohortSummary {
            n_subjects: c.n_subjects(),
            n_visits: c.n_visits(),
            n_outcome_events: count(EventKind::Outcome),
            n_competing_deaths: count(EventKind::CompetingDeath),
            n_censored: count(EventKind::Censored),
        }
    }
}

#[derive(Serialize)]
struct ScaleDoc {
    point: f64,
    lower: f64,
    upper: f64,
    bootstrap_sd: f64,
    plug_in: f64,
}

impl ScaleDoc {
    fn new(s: &IntervalSummary, plug_in: f64) -> Self {
        ScaleDoc {
            point: s.point,
            lower: s.lower,
            upper: s.upper,
            bootstrap_sd: s.sd,
            plug_in,
        }
    }
}

#[derive(Serialize)]
struct EffectDoc {
    effect: Effect,
    label: &'static str,
    hazard_diff_per_100k: ScaleDoc,
    surv_prob_diff_pct: ScaleDoc,
}

#[derive(Serialize)]
struct AnalysisDoc<'a> {
    analysis: Analysis,
    ci_level: f64,
    effects: Vec<EffectDoc>,
    plug_in_regimes: &'a [RegimeValue],
}

#[derive(Serialize)]
struct BootstrapDiagnostics<'a> {
    n_iterations: usize,
    n_failed: usize,
    failures: &'a [(usize, String)],
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    warnings: &'a [String],
    models: &'a [String],
    bootstrap: BootstrapDiagnostics<'a>,
    clamped_survival_predictions: usize,
}

#[derive(Serialize)]
struct ResultsDocument<'a> {
    metadata: Metadata,
    seed: u64,
    config: &'a RunConfig,
    cohort: CohortSummary,
    contrast: ExposureContrast,
    diagnostics: Diagnostics<'a>,
    analyses: Vec<AnalysisDoc<'a>>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|e| RunError::Io(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

pub fn load_cohort(config: &RunConfig) -> Result<CohortDataset, RunError> {
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| RunError::Validation("input is required".into()))?;
    let file = fs::File::open(path).map_err(|e| RunError::Io(format!("cannot read {}: {e}", path.display())))?;
    let schema = CsvSchema {
        visit_times: config.grid(),
        horizon: config.horizon,
        exposure_column: config.exposure.clone(),
        covariates: config.covariates.clone(),
    };
    let raw = read_cohort_csv(BufReader::new(file), &schema)?;
    Ok(validate_cohort(raw).map_err(CohortError::from)?)
}

pub fn resolve_contrast(spec: ContrastSpec, cohort: &CohortDataset) -> Result<ExposureContrast, RunError> {
    Ok(match spec {
        ContrastSpec::Percentiles(r, c) => ExposureContrast::from_percentiles(cohort, r, c)?,
        ContrastSpec::Levels(r, c) => ExposureContrast::new(r, c)?,
    })
}

fn analyses(mode: Mode) -> Vec<Analysis> {
    match mode {
        Mode::CompetingRisks => vec![Analysis::CompetingRisks],
        Mode::ConditionalOnSurvival => vec![Analysis::ConditionalOnSurvival],
        Mode::Both => vec![Analysis::ConditionalOnSurvival, Analysis::CompetingRisks],
        Mode::Simulate => vec![],
    }
}

/// Run the configured mode and write its artifacts.
pub fn execute(config: &RunConfig, options: &RunOptions) -> Result<RunOutput, RunError> {
    config.validate()?;
    if config.mode == Mode::Simulate {
        return simulate(config);
    }
    run(config, options)
}

/// Estimate effects with bootstrap intervals on the configured cohort.
pub fn run(config: &RunConfig, options: &RunOptions) -> Result<RunOutput, RunError> {
    config.validate()?;
    let cohort = load_cohort(config)?;
    let contrast = resolve_contrast(config.contrast, &cohort)?;
    let warnings = positivity_warnings(&cohort, &contrast);
    if !options.quiet {
        for w in &warnings {
            eprintln!("warning: {w}");
        }
    }

    let total = config.bootstrap.n_iterations;
    let step = (total / 10).max(1);
    let quiet = options.quiet;
    let progress = move |done: usize| {
        if !quiet && (done % step == 0 || done == total) {
            eprintln!("bootstrap: {done}/{total}");
        }
    };
    let result = run_bootstrap(
        &cohort,
        &contrast,
        &config.engine,
        &config.bootstrap,
        &analyses(config.mode),
        &progress,
    )?;

    if let Some(path) = &options.dump_models {
        write_file(path, &to_json(&result.full_models))?;
    }
    if !options.quiet {
        for d in &result.full_models.diagnostics {
            eprintln!("note: {d}");
        }
    }

    let json = to_json(&document(config, &cohort, &contrast, &warnings, &result));
    let table = render_table(&result.results);
    if let Some(path) = &config.output.json {
        write_file(path, &json)?;
    }
    match &config.output.table {
        Some(path) => write_file(path, &table)?,
        None => print!("{table}"),
    }
    Ok(RunOutput { json, table, warnings })
}

fn document<'a>(
    config: &'a RunConfig,
    cohort: &CohortDataset,
    contrast: &ExposureContrast,
    warnings: &'a [String],
    run: &'a BootstrapRun,
) -> ResultsDocument<'a> {
    let analyses = run
        .results
        .iter()
        .map(|r| AnalysisDoc {
            analysis: r.analysis,
            ci_level: r.ci_level,
            effects: r
                .effects
                .iter()
                .map(|e| EffectDoc {
                    effect: e.effect,
                    label: e.effect.description(),
                    hazard_diff_per_100k: ScaleDoc::new(&e.hazard_diff, e.plug_in.hazard_diff),
                    surv_prob_diff_pct: ScaleDoc::new(&e.surv_prob_diff, e.plug_in.surv_prob_diff),
                })
                .collect(),
            plug_in_regimes: &r.plug_in.regimes,
        })
        .collect();
    ResultsDocument {
        metadata: METADATA,
        seed: config.bootstrap.master_seed,
        config,
        cohort: CohortSummary::of(cohort),
        contrast: *contrast,
        diagnostics: Diagnostics {
            warnings,
            models: &run.full_models.diagnostics,
            bootstrap: BootstrapDiagnostics {
                n_iterations: run.n_iterations,
                n_failed: run.n_failed,
                failures: &run.failures,
            },
            clamped_survival_predictions: run.results.iter().map(|r| r.plug_in.clamped()).sum(),
        },
        analyses,
    }
}

#[derive(Serialize)]
struct TruthDocument<'a> {
    metadata: Metadata,
    seed: u64,
    n: usize,
    dgp: &'a crate::oracle::StructuralDgp,
    contrast: ExposureContrast,
    competing_risks: TrueEffects,
    conditional_on_survival: TrueEffects,
}

/// Draw a cohort from the configured structural model and compute its true
/// effects. Writes the cohort CSV and the truth document.
pub fn simulate(config: &RunConfig) -> Result<RunOutput, RunError> {
    let dgp = config
        .dgp
        .as_ref()
        .ok_or_else(|| RunError::Validation("mode simulate needs a dgp section".into()))?;
    let sim = &config.simulate;
    if sim.n == 0 {
        return Err(RunError::Validation("simulate.n must be at least 1".into()));
    }
    let cohort = generate_cohort(dgp, sim.n, sim.seed)?;
    let contrast = resolve_contrast(config.contrast, &cohort)?;
    let competing = true_effects(dgp, &contrast, sim.n_mc, sim.seed)?;
    let conditional = true_conditional_effects(dgp, &contrast, sim.n_mc, sim.seed)?;

    let mut csv = Vec::new();
    write_cohort_csv(&mut csv, &cohort)?;
    let csv = String::from_utf8(csv).expect("csv writer emits utf-8");

    let mut table = format!(
        "True effects, contrast {} vs {} ({} Monte Carlo subjects)\n",
        contrast.a_ref, contrast.a_cmp, sim.n_mc
    );
    for (name, t) in [("Without competing risks", &conditional), ("With competing risks", &competing)] {
        table.push_str(&format!("{name}\n"));
        for e in &t.effects {
            table.push_str(&format!(
                "  {:<62} {:>10} (se {})   {:>8} (se {})\n",
                e.effect.description(),
                format_number(e.hazard_diff, 1),
                format_number(e.hazard_se, 2),
                format_number(e.surv_prob_diff, 2),
                format_number(e.surv_se, 3),
            ));
        }
    }

    let json = to_json(&TruthDocument {
        metadata: METADATA,
        seed: sim.seed,
        n: sim.n,
        dgp,
        contrast,
        competing_risks: competing,
        conditional_on_survival: conditional,
    });

    match &sim.cohort_csv {
        Some(path) => write_file(path, &csv)?,
        None => return Err(RunError::Validation("simulate.cohort_csv is required".into())),
    }
    if let Some(path) = &sim.truth_json {
        write_file(path, &json)?;
    }
    match &config.output.table {
        Some(path) => write_file(path, &table)?,
        None => print!("{table}"),
    }
    Ok(RunOutput {
        json,
        table,
        warnings: Vec::new(),
    })
}
