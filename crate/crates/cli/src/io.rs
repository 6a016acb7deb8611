//! File formats: CSV matrices, trajectory CSV, and JSON reports, with
//! re-validation used by `--validate`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use tvconsensus_core::optimizer::Trajectory;
use tvconsensus_core::StochasticMatrix;

#[derive(Debug)]
pub struct ParseError {
    pub path: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.path, self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

fn err(path: &Path, line: usize, message: impl Into<String>) -> ParseError {
    ParseError { path: path.display().to_string(), line, message: message.into() }
}

/// Raw numeric grid from a CSV file; rejects ragged and non-square input
/// with line numbers.
pub fn read_square_csv(path: &Path) -> Result<(usize, Vec<f64>), ParseError> {
    let text = fs::read_to_string(path)
        .map_err(|e| err(path, 0, format!("cannot read file: {e}")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in trimmed.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(path, line_no, format!("not a number: {:?}", field.trim())))?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(err(
                    path,
                    line_no,
                    format!("ragged row: {} fields, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(err(path, 0, "empty matrix"));
    }
    if rows.len() != rows[0].len() {
        return Err(err(
            path,
            rows.len(),
            format!("not square: {} rows of {} columns", rows.len(), rows[0].len()),
        ));
    }
    let n = rows.len();
    Ok((n, rows.into_iter().flatten().collect()))
}

/// Entries are printed with 17 significant digits, enough to round-trip f64.
pub fn write_matrix_csv(path: &Path, m: &StochasticMatrix) -> std::io::Result<()> {
    let n = m.order();
    let mut out = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:.16e}", m.get(i, j))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)
}

pub const TRAJECTORY_HEADER: &str = "k,consensus_error,f_mean,f_y,method,seed";

pub fn write_trajectory_csv(path: &Path, t: &Trajectory) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{TRAJECTORY_HEADER}")?;
    for r in &t.records {
        writeln!(
            f,
            "{},{:.16e},{:.16e},{:.16e},{},{}",
            r.k,
            r.consensus_error,
            r.f_mean,
            r.f_y,
            t.method.name(),
            t.state_seed
        )?;
    }
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

/// Schema re-checks for `--validate`: every emitted file must re-read
/// cleanly and match its documented shape.
pub fn validate_file(path: &Path) -> Result<(), ParseError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let text = fs::read_to_string(path)
                .map_err(|e| err(path, 0, format!("cannot read file: {e}")))?;
            serde_json::from_str::<serde_json::Value>(&text)
                .map_err(|e| err(path, e.line(), format!("invalid JSON: {e}")))?;
            Ok(())
        }
        Some("csv") if name.starts_with("A_") => {
            read_square_csv(path).map(|_| ())
        }
        Some("csv") => validate_trajectory_csv(path),
        _ => Ok(()),
    }
}

fn validate_trajectory_csv(path: &Path) -> Result<(), ParseError> {
    let text = fs::read_to_string(path)
        .map_err(|e| err(path, 0, format!("cannot read file: {e}")))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRAJECTORY_HEADER => {}
        Some((_, h)) => return Err(err(path, 1, format!("bad header: {h:?}"))),
        None => return Err(err(path, 0, "empty trajectory file")),
    }
    let mut prev_k: Option<i64> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(err(path, line_no, format!("expected 6 fields, got {}", fields.len())));
        }
        let k: i64 = fields[0]
            .parse()
            .map_err(|_| err(path, line_no, "k is not an integer"))?;
        if let Some(p) = prev_k {
            if k != p + 1 {
                return Err(err(path, line_no, "non-consecutive iteration index"));
            }
        } else if k != 0 {
            return Err(err(path, line_no, "first record must have k = 0"));
        }
        prev_k = Some(k);
        for f in &fields[1..4] {
            f.parse::<f64>()
                .map_err(|_| err(path, line_no, format!("not a number: {f:?}")))?;
        }
        fields[5]
            .parse::<u64>()
            .map_err(|_| err(path, line_no, "seed is not an integer"))?;
    }
    Ok(())
}
