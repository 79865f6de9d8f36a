//! Writing and reading detection statistics.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::detection::DetectionStats;

pub const CSV_HEADER: [&str; 11] =
    ["estimator", "assignment", "D", "nu_AP", "nu_UE", "N_D", "T", "trials", "successes", "prob", "ci95"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        }
    }

    /// Guess from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(ExportFormat::Csv),
            "json" => Some(ExportFormat::Json),
            _ => None,
        }
    }
}

pub fn write_csv<W: Write>(stats: &DetectionStats, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in stats.rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_results(stats: &DetectionStats, path: &Path, format: ExportFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        ExportFormat::Csv => write_csv(stats, &mut out).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?,
        ExportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, stats).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_stats_json(path: &Path) -> Result<DetectionStats> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Estimator;
    use crate::harness::detection::{AssignmentMode, ConfigPoint};

    fn one_row() -> DetectionStats {
        let mut s = DetectionStats::new();
        let p = ConfigPoint { estimator: Estimator::Sco, assignment: AssignmentMode::Ra, d: 16, nu_ap: 4, nu_ue: 2, n_d: 2, t: 10 };
        s.entry(p).record(&[true, false, false, true], 4);
        s
    }

    #[test]
    fn empty_stats_give_header_only() {
        let mut buf = Vec::new();
        write_csv(&DetectionStats::new(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_HEADER.join(",") + "\n");
    }

    #[test]
    fn one_row_in_declared_order() {
        let mut buf = Vec::new();
        write_csv(&one_row(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let ci = one_row().rows()[0].ci95;
        assert_eq!(lines[1], format!("sco,ra,16,4,2,2,10,4,2,0.5,{ci}"));
    }

    #[test]
    fn json_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.json");
        export_results(&one_row(), &path, ExportFormat::Json).unwrap();
        assert_eq!(read_stats_json(&path).unwrap(), one_row());
    }

    #[test]
    fn io_errors_name_the_path() {
        let path = Path::new("/nonexistent-dir/stats.csv");
        let err = export_results(&one_row(), path, ExportFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/stats.csv"));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(ExportFormat::from_path(Path::new("a/b.CSV")), Some(ExportFormat::Csv));
        assert_eq!(ExportFormat::from_path(Path::new("b.json")), Some(ExportFormat::Json));
        assert_eq!(ExportFormat::from_path(Path::new("b.txt")), None);
    }
}
