//! File formats: map samples and return logs as CSV, fits, analysis reports
//! and signatures as JSON.
//!
//! CSV floats are written with 17 significant digits so they read back
//! bit-identically. Lines starting with `#` are comments (used for an optional
//! timestamp) and are skipped on reading.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hybrid::{MmoSignature, ReturnRecord};
use crate::map_fit::{FitReport, PiecewisePolyMap, PolyPiece};
use crate::mmo_analysis::{FixedPointResult, FunnelEntry};
use crate::singular_maps::{Branch, MapId, MapSample, MapSampleEntry};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

pub const MAP_SAMPLE_HEADER: &str = "map,lambda,branch,z_in,z_out,status";
pub const RETURN_LOG_HEADER: &str = "return_index,y_pre,z_pre,sao_count";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Data lines of a CSV file with their 1-based line numbers, header checked.
fn csv_records<R: BufRead>(reader: R, header: &str) -> Result<Vec<(usize, Vec<String>)>, FormatError> {
    let mut out = Vec::new();
    let mut seen_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !seen_header {
            if t != header {
                return Err(FormatError::Csv {
                    line: i + 1,
                    msg: format!("expected header '{header}'"),
                });
            }
            seen_header = true;
            continue;
        }
        out.push((i + 1, t.split(',').map(|f| f.trim().to_string()).collect()));
    }
    if !seen_header {
        return Err(FormatError::Csv {
            line: 0,
            msg: "missing header".into(),
        });
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &[String], idx: usize, line: usize, name: &str) -> Result<T, FormatError> {
    rec.get(idx).and_then(|s| s.parse().ok()).ok_or_else(|| FormatError::Csv {
        line,
        msg: format!("bad or missing '{name}'"),
    })
}

fn write_comment<W: Write>(w: &mut W, timestamp: Option<&str>) -> std::io::Result<()> {
    if let Some(ts) = timestamp {
        writeln!(w, "# generated {ts}")?;
    }
    Ok(())
}

pub fn write_map_sample_csv<W: Write>(mut w: W, sample: &MapSample, timestamp: Option<&str>) -> Result<(), FormatError> {
    write_comment(&mut w, timestamp)?;
    writeln!(w, "{MAP_SAMPLE_HEADER}")?;
    for e in &sample.entries {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            sample.map_id.as_str(),
            num(sample.lambda),
            e.branch.as_str(),
            num(e.z_in),
            num(e.z_out),
            e.status.as_str()
        )?;
    }
    Ok(())
}

pub fn read_map_sample_csv<R: BufRead>(reader: R) -> Result<MapSample, FormatError> {
    let records = csv_records(reader, MAP_SAMPLE_HEADER)?;
    let mut header: Option<(MapId, f64)> = None;
    let mut entries = Vec::with_capacity(records.len());
    for (line, rec) in records {
        if rec.len() != 6 {
            return Err(FormatError::Csv {
                line,
                msg: format!("expected 6 fields, found {}", rec.len()),
            });
        }
        let map_id: MapId = field(&rec, 0, line, "map")?;
        let lambda: f64 = field(&rec, 1, line, "lambda")?;
        match header {
            None => header = Some((map_id, lambda)),
            Some(h) if h.0 != map_id || h.1.to_bits() != lambda.to_bits() => {
                return Err(FormatError::Csv {
                    line,
                    msg: "map and lambda must be the same on every line".into(),
                })
            }
            _ => {}
        }
        entries.push(MapSampleEntry {
            branch: field::<Branch>(&rec, 2, line, "branch")?,
            z_in: field(&rec, 3, line, "z_in")?,
            z_out: field(&rec, 4, line, "z_out")?,
            status: field(&rec, 5, line, "status")?,
        });
    }
    let (map_id, lambda) = header.ok_or(FormatError::Csv {
        line: 0,
        msg: "no data lines".into(),
    })?;
    Ok(MapSample { map_id, lambda, entries })
}

pub fn write_return_log_csv<W: Write>(mut w: W, log: &[ReturnRecord], timestamp: Option<&str>) -> Result<(), FormatError> {
    write_comment(&mut w, timestamp)?;
    writeln!(w, "{RETURN_LOG_HEADER}")?;
    for r in log {
        writeln!(w, "{},{},{},{}", r.return_index, num(r.y_pre), num(r.z_pre), r.sao_count)?;
    }
    Ok(())
}

pub fn read_return_log_csv<R: BufRead>(reader: R) -> Result<Vec<ReturnRecord>, FormatError> {
    csv_records(reader, RETURN_LOG_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(ReturnRecord {
                return_index: field(&rec, 0, line, "return_index")?,
                y_pre: field(&rec, 1, line, "y_pre")?,
                z_pre: field(&rec, 2, line, "z_pre")?,
                sao_count: field(&rec, 3, line, "sao_count")?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceJson {
    pub degree: usize,
    pub coeffs: Vec<f64>,
    pub domain: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorsJson {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// Fitted map; pieces are `[single]` or `[upper, lower]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitJson {
    pub map: MapId,
    pub lambda: f64,
    pub pieces: Vec<PieceJson>,
    pub errors: ErrorsJson,
}

impl From<&PiecewisePolyMap> for FitJson {
    fn from(m: &PiecewisePolyMap) -> Self {
        Self {
            map: m.map_id,
            lambda: m.lambda,
            pieces: m
                .pieces
                .iter()
                .map(|p| PieceJson {
                    degree: p.degree,
                    coeffs: p.coeffs.clone(),
                    domain: p.domain,
                })
                .collect(),
            errors: ErrorsJson {
                l1: m.fit_report.e_l1,
                l2: m.fit_report.e_l2,
                linf: m.fit_report.e_linf,
            },
        }
    }
}

impl FitJson {
    /// Rebuild the fitted map. Sample counts and spacing are not stored and come back as zero.
    pub fn to_map(&self) -> Result<PiecewisePolyMap, FormatError> {
        let branches: &[Branch] = match self.pieces.len() {
            1 => &[Branch::Single],
            2 => &[Branch::Upper, Branch::Lower],
            n => {
                return Err(FormatError::Json(serde::de::Error::custom(format!("expected 1 or 2 pieces, found {n}"))));
            }
        };
        let pieces: Vec<PolyPiece> = self
            .pieces
            .iter()
            .zip(branches)
            .map(|(p, &branch)| PolyPiece {
                branch,
                degree: p.degree,
                coeffs: p.coeffs.clone(),
                domain: p.domain,
            })
            .collect();
        if pieces.iter().any(|p| p.coeffs.len() != p.degree + 1) {
            return Err(FormatError::Json(serde::de::Error::custom("degree does not match coefficient count")));
        }
        let breakpoint = (pieces.len() == 2).then(|| pieces[0].domain[0].max(pieces[1].domain[0]));
        let continuity_residual = breakpoint.map_or(0.0, |b| (pieces[0].eval(b) - pieces[1].eval(b)).abs());
        Ok(PiecewisePolyMap {
            map_id: self.map,
            lambda: self.lambda,
            pieces,
            breakpoint,
            continuity_residual,
            fit_report: FitReport {
                e_l1: self.errors.l1,
                e_l2: self.errors.l2,
                e_linf: self.errors.linf,
                n_samples: 0,
                h: 0.0,
                domain_length: 0.0,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointJson {
    pub lambda: f64,
    pub z_star: f64,
    pub multiplier: f64,
    pub stable: bool,
    pub boundary: bool,
}

impl FixedPointJson {
    pub fn new(lambda: f64, fp: &FixedPointResult) -> Self {
        Self {
            lambda,
            z_star: fp.z_star,
            multiplier: fp.derivative,
            stable: fp.stable,
            boundary: fp.on_domain_boundary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunnelMarginJson {
    pub lambda: f64,
    pub z_in: f64,
    pub z_at_l_mu: f64,
    pub margin: f64,
}

impl FunnelMarginJson {
    pub fn new(lambda: f64, e: &FunnelEntry) -> Self {
        Self {
            lambda,
            z_in: e.z_in,
            z_at_l_mu: e.z_at_l_mu,
            margin: e.margin,
        }
    }
}

/// Analysis report. `lambda_r` is located on the fitted maps and
/// `lambda_r_direct` with direct trajectory evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub lambda_r: Option<f64>,
    pub lambda_r_direct: Option<f64>,
    pub fixed_points: Vec<FixedPointJson>,
    pub funnel_margins: Vec<FunnelMarginJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureReport {
    pub params: serde_json::Value,
    /// Canonical `L^s` string, `null` when aperiodic.
    pub signature: Option<String>,
    pub period: Option<usize>,
    pub aperiodic: bool,
}

impl SignatureReport {
    pub fn new(params: serde_json::Value, sig: &MmoSignature) -> Self {
        Self {
            params,
            signature: sig.canonical.clone(),
            period: sig.period,
            aperiodic: sig.aperiodic(),
        }
    }
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<(), FormatError> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_json<R: std::io::Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<T, FormatError> {
    Ok(serde_json::from_reader(r)?)
}

/// `m_<id>_lambda_<value>.csv`, e.g. `m_j_lambda_-7.csv`.
pub fn map_sample_file_name(map_id: MapId, lambda: f64) -> String {
    format!("{}_lambda_{lambda}.csv", map_id.as_str())
}
