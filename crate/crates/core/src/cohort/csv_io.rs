//! Cohort CSV format.
//!
//! Header: `id, exposure, l0_1..l0_p, m_1..m_K, d_1..d_K, time, event` with
//! `event` in {0 = censored, 1 = outcome, 2 = competing death}. Mediator
//! cells holding the literal `DEATH` are death-truncated; empty or `NA`
//! cells are missing. The visit grid and horizon are not part of the file.

use std::io::{Read, Write};

use super::{CohortDataset, CohortError, EventKind, MediatorValue, SubjectRecord};

pub const DEATH_TOKEN: &str = "DEATH";

/// Column layout and visit grid used to interpret a cohort CSV.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub visit_times: Vec<f64>,
    pub horizon: f64,
    pub exposure_column: String,
    /// Baseline covariate columns; `None` selects every `l0_*` column in
    /// header order.
    pub covariates: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn new(visit_times: Vec<f64>, horizon: f64) -> Self {
        CsvSchema {
            visit_times,
            horizon,
            exposure_column: "exposure".to_string(),
            covariates: None,
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CohortError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CohortError::Csv {
            line: 1,
            message: format!("missing column `{name}`"),
        })
}

fn parse_f64(cell: &str, line: usize, name: &str) -> Result<f64, CohortError> {
    cell.parse::<f64>().map_err(|_| CohortError::Csv {
        line,
        message: format!("column `{name}`: cannot parse `{cell}` as a number"),
    })
}

/// Parse a cohort. The result is not validated; run
/// [`validate_cohort`](super::validate_cohort) on it.
pub fn read_cohort_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<CohortDataset, CohortError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let k = schema.visit_times.len().saturating_sub(1);

    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .filter(|h| h.starts_with("l0_"))
            .map(str::to_string)
            .collect(),
    };
    let id_col = column(&headers, "id")?;
    let exposure_col = column(&headers, &schema.exposure_column)?;
    let cov_cols = covariate_names
        .iter()
        .map(|n| column(&headers, n))
        .collect::<Result<Vec<_>, _>>()?;
    let m_cols = (1..=k)
        .map(|j| column(&headers, &format!("m_{j}")))
        .collect::<Result<Vec<_>, _>>()?;
    let d_cols = (1..=k)
        .map(|j| column(&headers, &format!("d_{j}")))
        .collect::<Result<Vec<_>, _>>()?;
    let time_col = column(&headers, "time")?;
    let event_col = column(&headers, "event")?;

    let mut subjects = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cell = |c: usize| record.get(c).unwrap_or("");

        let mediator = m_cols
            .iter()
            .map(|&c| match cell(c) {
                DEATH_TOKEN => Ok(MediatorValue::DeathTruncated),
                "" | "NA" | "NaN" | "nan" => Ok(MediatorValue::Missing),
                v => parse_f64(v, line, &headers[c]).map(MediatorValue::Observed),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let death = d_cols
            .iter()
            .map(|&c| match cell(c) {
                "0" => Ok(false),
                "1" => Ok(true),
                v => Err(CohortError::Csv {
                    line,
                    message: format!("column `{}`: expected 0 or 1, got `{v}`", &headers[c]),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let event = cell(event_col)
            .parse::<u8>()
            .ok()
            .and_then(EventKind::from_code)
            .ok_or_else(|| CohortError::Csv {
                line,
                message: format!("column `event`: expected 0, 1 or 2, got `{}`", cell(event_col)),
            })?;

        subjects.push(SubjectRecord {
            id: cell(id_col).to_string(),
            exposure: parse_f64(cell(exposure_col), line, &schema.exposure_column)?,
            baseline: cov_cols
                .iter()
                .map(|&c| parse_f64(cell(c), line, &headers[c]))
                .collect::<Result<Vec<_>, _>>()?,
            mediator,
            death,
            event_time: parse_f64(cell(time_col), line, "time")?,
            event,
        });
    }

    Ok(CohortDataset::new(
        subjects,
        schema.visit_times.clone(),
        schema.horizon,
        covariate_names,
    ))
}

/// Write a cohort. Floats use the shortest representation that parses back
/// to the same value, so output is byte-stable and round-trips exactly.
pub fn write_cohort_csv<W: Write>(writer: W, cohort: &CohortDataset) -> Result<(), CohortError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let k = cohort.n_visits();

    let mut header = vec!["id".to_string(), "exposure".to_string()];
    header.extend(cohort.covariate_names.iter().cloned());
    header.extend((1..=k).map(|j| format!("m_{j}")));
    header.extend((1..=k).map(|j| format!("d_{j}")));
    header.push("time".into());
    header.push("event".into());
    wtr.write_record(&header)?;

    for s in &cohort.subjects {
        let mut row = Vec::with_capacity(header.len());
        row.push(s.id.clone());
        row.push(s.exposure.to_string());
        row.extend(s.baseline.iter().map(f64::to_string));
        row.extend(s.mediator.iter().map(|m| match m {
            MediatorValue::Observed(v) => v.to_string(),
            MediatorValue::DeathTruncated => DEATH_TOKEN.to_string(),
            MediatorValue::Missing => "NA".to_string(),
        }));
        row.extend(s.death.iter().map(|&d| if d { "1" } else { "0" }.to_string()));
        row.push(s.event_time.to_string());
        row.push(s.event.code().to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
