//! Trajectory persistence. CSV for the step records (one row per logged
//! step, floats at full precision so a written file reloads bit-for-bit),
//! pretty JSON for whole documents.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use halypo_core::projection::Regime;
use halypo_core::StepRecord;

/// Frozen column set; parsers check it verbatim.
pub const CSV_HEADER: &str = "step,eta,lambda,d_norm,V,cos_phi,conflict,J_team,regime";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// `{:.17e}` keeps 18 significant digits: every f64 survives the round trip
/// exactly, including negative zero's sign.
fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

#[must_use]
pub fn records_to_csv(records: &[StepRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let cos = match r.cos_phi {
            Some(c) => fmt_f64(c),
            None => "nan".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.k,
            fmt_f64(r.eta),
            fmt_f64(r.lambda_star),
            fmt_f64(r.d_norm),
            fmt_f64(r.v),
            cos,
            r.conflict,
            fmt_f64(r.j_team),
            r.regime,
        ));
    }
    out
}

pub fn write_csv(path: &Path, records: &[StepRecord]) -> Result<(), PersistError> {
    fs::write(path, records_to_csv(records))
        .map_err(|source| PersistError::Io { path: path.to_path_buf(), source })
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, PersistError> {
    s.parse().map_err(|_| PersistError::Csv {
        line,
        msg: format!("could not parse {what} from {s:?}"),
    })
}

pub fn parse_csv(text: &str) -> Result<Vec<StepRecord>, PersistError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(PersistError::Csv {
                line: 1,
                msg: format!("unexpected header {header:?}, expected {CSV_HEADER:?}"),
            })
        }
        None => return Err(PersistError::Csv { line: 1, msg: "empty file".into() }),
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() != 9 {
            return Err(PersistError::Csv {
                line,
                msg: format!("expected 9 columns, found {}", cols.len()),
            });
        }
        let cos_phi = if cols[5] == "nan" {
            None
        } else {
            Some(parse_field::<f64>(cols[5], line, "cos_phi")?)
        };
        let conflict = match cols[6] {
            "true" => true,
            "false" => false,
            other => {
                return Err(PersistError::Csv {
                    line,
                    msg: format!("conflict must be true or false, got {other:?}"),
                })
            }
        };
        let regime = match cols[8] {
            "inactive" => Regime::Inactive,
            "active" => Regime::Active,
            other => {
                return Err(PersistError::Csv {
                    line,
                    msg: format!("regime must be inactive or active, got {other:?}"),
                })
            }
        };
        records.push(StepRecord {
            k: parse_field(cols[0], line, "step")?,
            eta: parse_field(cols[1], line, "eta")?,
            lambda_star: parse_field(cols[2], line, "lambda")?,
            d_norm: parse_field(cols[3], line, "d_norm")?,
            v: parse_field(cols[4], line, "V")?,
            cos_phi,
            conflict,
            j_team: parse_field(cols[7], line, "J_team")?,
            regime,
        });
    }
    Ok(records)
}

pub fn load_csv(path: &Path) -> Result<Vec<StepRecord>, PersistError> {
    let text = fs::read_to_string(path)
        .map_err(|source| PersistError::Io { path: path.to_path_buf(), source })?;
    parse_csv(&text)
}

/// Pretty JSON with a trailing newline; the canonical on-disk form.
pub fn json_string<T: Serialize>(value: &T) -> Result<String, PersistError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PersistError> {
    fs::write(path, json_string(value)?)
        .map_err(|source| PersistError::Io { path: path.to_path_buf(), source })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, PersistError> {
    let text = fs::read_to_string(path)
        .map_err(|source| PersistError::Io { path: path.to_path_buf(), source })?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<StepRecord> {
        vec![
            StepRecord {
                k: 0,
                eta: 0.1,
                lambda_star: 0.25,
                d_norm: 1.25_f64.sqrt(),
                v: 1.0,
                cos_phi: Some(-0.123456789012345678),
                conflict: true,
                j_team: -0.5,
                regime: Regime::Active,
            },
            StepRecord {
                k: 1,
                eta: 1e-300,
                lambda_star: 0.0,
                d_norm: 3.0e222,
                v: 0.9125,
                cos_phi: None,
                conflict: false,
                j_team: -0.0,
                regime: Regime::Inactive,
            },
        ]
    }

    #[test]
    fn header_is_frozen() {
        assert_eq!(CSV_HEADER, "step,eta,lambda,d_norm,V,cos_phi,conflict,J_team,regime");
        assert!(records_to_csv(&[]).starts_with(CSV_HEADER));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let records = sample_records();
        let text = records_to_csv(&records);
        let back = parse_csv(&text).unwrap();
        assert_eq!(back, records);
        // Bit-exact including -0.0, which PartialEq does not distinguish.
        assert_eq!(back[1].j_team.to_bits(), (-0.0_f64).to_bits());
        // Serializing the parse is byte-identical to the original text.
        assert_eq!(records_to_csv(&back), text);
    }

    #[test]
    fn missing_cos_phi_round_trips_as_nan_token() {
        let text = records_to_csv(&sample_records());
        let nan_line = text.lines().nth(2).unwrap();
        assert!(nan_line.contains(",nan,"), "got: {nan_line}");
        assert_eq!(parse_csv(&text).unwrap()[1].cos_phi, None);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let mut text = records_to_csv(&sample_records());
        text.push_str("2,bad\n");
        let err = parse_csv(&text).unwrap_err();
        assert!(err.to_string().contains("line 4"), "got: {err}");

        let wrong_header = text.replace("step,", "iter,");
        let err = parse_csv(&wrong_header).unwrap_err();
        assert!(err.to_string().contains("line 1"), "got: {err}");

        let bad_regime = records_to_csv(&sample_records()).replace("active", "actove");
        let err = parse_csv(&bad_regime).unwrap_err();
        assert!(err.to_string().contains("actove"), "got: {err}");
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let records = sample_records();
        let text = json_string(&records).unwrap();
        assert!(text.ends_with('\n'));
        let back: Vec<StepRecord> = serde_json::from_str(&text).unwrap();
        assert_eq!(json_string(&back).unwrap(), text);
    }

    #[test]
    fn files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("run.csv");
        let records = sample_records();
        write_csv(&csv, &records).unwrap();
        assert_eq!(load_csv(&csv).unwrap(), records);

        let json = dir.path().join("run.json");
        write_json(&json, &records).unwrap();
        let back: Vec<StepRecord> = load_json(&json).unwrap();
        assert_eq!(back, records);
    }
}
