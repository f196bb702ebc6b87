use std::io::Write;

use serde::Serialize;

use ccr_core::axioms::AxiomVerdict;
use ccr_core::EstimatorStats;

use crate::error::CliError;
use crate::spec::Format;

/// One estimated quantity with its reproducibility metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub style: String,
    pub quantity: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub n_paths: u64,
    pub seed: u64,
    pub oracle_value: Option<f64>,
    pub z_vs_oracle: Option<f64>,
}

impl ReportRow {
    pub fn new(style: &str, quantity: &str, stats: &EstimatorStats, seed: u64, oracle: Option<f64>) -> Self {
        // adding zero folds signed zeros into +0
        let oracle = oracle.filter(|o| o.is_finite()).map(|o| o + 0.0);
        let z = oracle.map(|o| stats.z_score(o)).filter(|z| z.is_finite());
        ReportRow {
            style: style.to_string(),
            quantity: quantity.to_string(),
            estimate: stats.mean + 0.0,
            std_error: Some(stats.std_error),
            n_paths: stats.n,
            seed,
            oracle_value: oracle,
            z_vs_oracle: z,
        }
    }
}

/// One cell of the styles x axioms verdict matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictCell {
    pub style: String,
    pub axiom: String,
    pub verdict: String,
    pub p_value: Option<f64>,
    pub detail: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub note: String,
}

impl VerdictCell {
    pub fn new(v: &AxiomVerdict, n_paths: u64, seed: u64) -> Self {
        VerdictCell {
            style: v.style.name().to_string(),
            axiom: v.axiom.name().to_string(),
            verdict: v.verdict.label().to_string(),
            p_value: v.verdict.p_value(),
            detail: v.detail,
            n_paths,
            seed,
            note: v.note.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Rows(Vec<ReportRow>),
    Matrix(Vec<VerdictCell>),
}

impl Report {
    pub fn write<W: Write>(&self, format: Format, out: W) -> Result<(), CliError> {
        match self {
            Report::Rows(rows) => write_records(rows, format, out),
            Report::Matrix(cells) => write_records(cells, format, out),
        }
    }

    pub fn to_bytes(&self, format: Format) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        self.write(format, &mut buf)?;
        Ok(buf)
    }
}

fn write_records<T: Serialize, W: Write>(records: &[T], format: Format, mut out: W) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| CliError::Write(e.to_string()))?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, records)?;
            writeln!(out).map_err(|e| CliError::Write(e.to_string()))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ReportRow {
        let stats = EstimatorStats {
            mean: 0.1,
            std_error: 1e-5,
            n: 100,
        };
        ReportRow::new("ucva_only", "cva", &stats, 3, Some(0.1 + 2e-5))
    }

    #[test]
    fn csv_has_header_and_shortest_floats() {
        let text = String::from_utf8(Report::Rows(vec![row()]).to_bytes(Format::Csv).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "style,quantity,estimate,std_error,n_paths,seed,oracle_value,z_vs_oracle"
        );
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields[2], "0.1");
        assert_eq!(fields[3].parse::<f64>().unwrap(), 1e-5);
    }

    #[test]
    fn missing_oracle_leaves_empty_cells() {
        let stats = EstimatorStats {
            mean: 1.0,
            std_error: 0.0,
            n: 5,
        };
        let r = ReportRow::new("s", "q", &stats, 0, None);
        let text = String::from_utf8(Report::Rows(vec![r]).to_bytes(Format::Csv).unwrap()).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",,"));
        let json: serde_json::Value = serde_json::from_slice(&Report::Rows(vec![row()]).to_bytes(Format::Json).unwrap()).unwrap();
        assert_eq!(json[0]["quantity"], "cva");
        assert_eq!(json[0]["n_paths"], 100);
    }
}
