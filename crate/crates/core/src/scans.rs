//! Scan files: `direction,temperature_K,p_in_mW,p_out_mW` rows, one file per
//! measurement session. Rows are grouped into one [`PowerScan`] per
//! (temperature, direction).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{Direction, PowerScan};
use crate::units::{mw_to_w, w_to_mw};

/// Samples keyed by (temperature bits, direction), with the temperature itself.
type Groups = BTreeMap<(u64, Direction), (f64, Vec<(f64, f64)>)>;

pub const SCAN_HEADER: [&str; 4] = ["direction", "temperature_K", "p_in_mW", "p_out_mW"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ScanRow {
    direction: Direction,
    #[serde(rename = "temperature_K")]
    temperature_k: f64,
    #[serde(rename = "p_in_mW")]
    p_in_mw: f64,
    #[serde(rename = "p_out_mW")]
    p_out_mw: f64,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses scan rows; `excess_loss_on` is the switch calibration applied to
/// every `on` scan. Scans come back ordered by temperature, `on` before `off`.
pub fn parse_scan_set(text: &str, path: &Path, excess_loss_on: f64) -> Result<Vec<PowerScan>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if header.iter().ne(SCAN_HEADER.iter().copied()) {
        return Err(parse_err(
            path,
            1,
            format!("header must be exactly '{}'", SCAN_HEADER.join(",")),
        ));
    }
    let mut groups = Groups::new();
    for rec in rdr.deserialize::<ScanRow>() {
        let row = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        if !(row.temperature_k >= 0.0) {
            return Err(parse_err(
                path,
                0,
                format!("negative temperature {}", row.temperature_k),
            ));
        }
        if !(row.p_in_mw > 0.0 && row.p_out_mw > 0.0) {
            return Err(Error::Data(format!(
                "{}: non-positive power ({} mW in, {} mW out)",
                path.display(),
                row.p_in_mw,
                row.p_out_mw
            )));
        }
        groups
            .entry((row.temperature_k.to_bits(), row.direction))
            .or_insert_with(|| (row.temperature_k, Vec::new()))
            .1
            .push((mw_to_w(row.p_in_mw), mw_to_w(row.p_out_mw)));
    }
    groups
        .into_iter()
        .map(|((_, dir), (t, samples))| PowerScan::new(dir, t, samples, excess_loss_on))
        .collect()
}

pub fn load_scan_set(path: &Path, excess_loss_on: f64) -> Result<Vec<PowerScan>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scan_set(&text, path, excess_loss_on)
}

pub fn scans_to_csv(scans: &[PowerScan]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in scans {
        for (pi, po) in &s.samples {
            w.serialize(ScanRow {
                direction: s.direction,
                temperature_k: s.temperature,
                p_in_mw: w_to_mw(*pi),
                p_out_mw: w_to_mw(*po),
            })
            .map_err(|e| Error::Data(e.to_string()))?;
        }
    }
    if scans.is_empty() {
        w.write_record(SCAN_HEADER).map_err(|e| Error::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_scan_set(path: &Path, scans: &[PowerScan]) -> Result<()> {
    std::fs::write(path, scans_to_csv(scans)?).map_err(|e| Error::io(path, e))
}
