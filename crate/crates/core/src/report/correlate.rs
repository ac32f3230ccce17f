//! Correlation of our scores against externally computed similarity metrics.
//!
//! The external file is a CSV `problem_id,<metric>...` with cells in [0, 1];
//! an empty cell or `--` is treated as undefined. Our divergences enter as
//! similarities (1 − score) so that both sides point the same way; BEF
//! enters raw. Rows are joined on `problem_id` and any row with an undefined
//! cell on either side is dropped before correlating.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::{pearson, ReportError};
use crate::divergence::StabilityScores;
use crate::metrics::ProblemMetrics;

pub const OUR_COLUMNS: [&str; 6] = [
    "1-sctd_jsd",
    "1-sctd_tau",
    "1-dctd_jsd",
    "1-dctd_tau",
    "bef_jsd",
    "bef_tau",
];

fn our_values(s: &StabilityScores) -> [Option<f64>; 6] {
    let sim = |v: Option<f64>| v.map(|x| 1.0 - x);
    [
        sim(s.sctd_jsd),
        sim(s.sctd_tau),
        sim(s.dctd_jsd),
        sim(s.dctd_tau),
        s.bef_jsd,
        s.bef_tau,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalMetrics {
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
}

pub fn parse_external(path: &Path, text: &str) -> Result<ExternalMetrics, ReportError> {
    let bad = |reason: String| ReportError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.get(0) != Some("problem_id") {
        return Err(bad("first column must be problem_id".into()));
    }
    if headers.len() < 2 {
        return Err(bad("no metric columns".into()));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let pid = record[0].to_string();
        let mut cells = Vec::with_capacity(columns.len());
        for (cell, name) in record.iter().skip(1).zip(&columns) {
            if cell.is_empty() || cell == "--" {
                cells.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(format!("row {}: {name} = {cell:?} is not a number", line + 2)))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("row {}: {name} = {v} lies outside [0, 1]", line + 2)));
            }
            cells.push(Some(v));
        }
        if rows.insert(pid.clone(), cells).is_some() {
            return Err(bad(format!("duplicate problem_id {pid:?}")));
        }
    }
    Ok(ExternalMetrics { columns, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    /// Symmetric; `None` where undefined (fewer than two rows or a constant column).
    pub values: Vec<Vec<Option<f64>>>,
    /// Rows entering the correlation.
    pub n_rows: usize,
    /// Our problems absent from the external file.
    pub missing_external: usize,
    /// Joined problems dropped for an undefined cell.
    pub incomplete: usize,
}

pub fn correlate_external(problems: &[ProblemMetrics], external: &ExternalMetrics) -> CorrelationMatrix {
    let columns: Vec<String> = OUR_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(external.columns.iter().cloned())
        .collect();
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let (mut missing_external, mut incomplete) = (0, 0);
    for p in problems {
        let Some(theirs) = external.rows.get(&p.problem_id) else {
            missing_external += 1;
            continue;
        };
        let row: Option<Vec<f64>> = our_values(&p.scores).into_iter().chain(theirs.iter().copied()).collect();
        match row {
            Some(row) => {
                for (col, v) in data.iter_mut().zip(row) {
                    col.push(v);
                }
            }
            None => incomplete += 1,
        }
    }
    let n_rows = data[0].len();
    let values = (0..columns.len())
        .map(|i| (0..columns.len()).map(|j| pearson(&data[i], &data[j])).collect())
        .collect();
    CorrelationMatrix {
        columns,
        values,
        n_rows,
        missing_external,
        incomplete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CohortLabel;

    fn problem(id: &str, sctd: f64, dctd: Option<f64>) -> ProblemMetrics {
        ProblemMetrics {
            problem_id: id.into(),
            cohort: CohortLabel::AllSuccess,
            n: 5,
            m: 5,
            interpreter_version: None,
            scores: StabilityScores {
                sctd_jsd: Some(sctd),
                sctd_tau: Some(sctd / 2.0),
                dctd_jsd: dctd,
                dctd_tau: dctd,
                bef_jsd: dctd.map(|d| sctd / d),
                bef_tau: dctd.map(|d| sctd / d),
                m_used: 5,
                r_used: 1,
            },
        }
    }

    fn external(text: &str) -> ExternalMetrics {
        parse_external(Path::new("ext.csv"), text).unwrap()
    }

    #[test]
    fn self_correlation_is_one() {
        let ours = vec![
            problem("a", 0.1, Some(0.2)),
            problem("b", 0.3, Some(0.1)),
            problem("c", 0.2, Some(0.4)),
        ];
        let ext = external("problem_id,ast\na,0.9\nb,0.7\nc,0.8\n");
        let m = correlate_external(&ours, &ext);
        assert_eq!(m.columns.len(), 7);
        assert_eq!(m.n_rows, 3);
        let r = m.values[0][6].unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(m.values[6][0], m.values[0][6]);
    }

    #[test]
    fn join_drops_and_counts() {
        let ours = vec![
            problem("a", 0.1, Some(0.2)),
            problem("b", 0.3, Some(0.1)),
            problem("c", 0.2, None),
            problem("d", 0.5, Some(0.3)),
        ];
        let ext = external("problem_id,ast\na,0.9\nb,0.7\nc,0.8\nz,0.1\n");
        let m = correlate_external(&ours, &ext);
        assert_eq!((m.n_rows, m.missing_external, m.incomplete), (2, 1, 1));
    }

    #[test]
    fn fewer_than_two_rows_is_undefined() {
        let ours = vec![problem("a", 0.1, Some(0.2))];
        let m = correlate_external(&ours, &external("problem_id,ast\na,0.9\n"));
        assert!(m.values.iter().flatten().all(Option::is_none));
    }

    #[test]
    fn external_file_validation() {
        let p = Path::new("x.csv");
        assert!(parse_external(p, "id,ast\na,0.1\n").is_err());
        assert!(parse_external(p, "problem_id\na\n").is_err());
        assert!(parse_external(p, "problem_id,ast\na,1.5\n").is_err());
        assert!(parse_external(p, "problem_id,ast\na,x\n").is_err());
        assert!(parse_external(p, "problem_id,ast\na,0.1\na,0.2\n").is_err());
        let ok = parse_external(p, "problem_id,ast,tsed\na,--,0.5\n").unwrap();
        assert_eq!(ok.rows["a"], vec![None, Some(0.5)]);
    }
}
