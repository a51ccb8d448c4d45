//! Trajectory files: CSV with a fixed header (t, gamma, loss, inner_product,
//! theta_0…theta_{q−1}) and 17-significant-digit float rendering, so that a
//! write/read round trip reproduces every record bit-for-bit and identical
//! runs produce byte-identical files.

use std::io::Write;
use std::path::Path;

use sa_core::runner::{Trajectory, TrajectoryRecord};
use sa_core::ParameterVector;

use crate::error::HarnessError;

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn header(q: usize) -> String {
    let mut columns = vec![
        "t".to_string(),
        "gamma".to_string(),
        "loss".to_string(),
        "inner_product".to_string(),
    ];
    columns.extend((0..q).map(|i| format!("theta_{i}")));
    columns.join(",")
}

fn format_record(record: &TrajectoryRecord) -> String {
    let mut fields = vec![
        record.t.to_string(),
        format_f64(record.gamma),
        record.loss.map(format_f64).unwrap_or_default(),
        record.inner_product.map(format_f64).unwrap_or_default(),
    ];
    fields.extend(record.theta.as_slice().iter().map(|v| format_f64(*v)));
    fields.join(",")
}

pub fn render(trajectory: &Trajectory, q: usize) -> String {
    let mut out = String::new();
    out.push_str(&header(q));
    out.push('\n');
    for record in &trajectory.records {
        out.push_str(&format_record(record));
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, trajectory: &Trajectory, q: usize) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    let mut file = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(render(trajectory, q).as_bytes())
        .map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn parse_field(field: &str, path: &Path) -> Result<f64, HarnessError> {
    field.parse::<f64>().map_err(|e| {
        HarnessError::Config(format!(
            "malformed float `{field}` in {}: {e}",
            path.display()
        ))
    })
}

/// Reads a trajectory file back into records.
pub fn read(path: &Path) -> Result<Vec<TrajectoryRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| HarnessError::Config(format!("{} is empty", path.display())))?;
    let columns: Vec<&str> = header_line.split(',').collect();
    if columns.len() < 5 || columns[..4] != ["t", "gamma", "loss", "inner_product"] {
        return Err(HarnessError::Config(format!(
            "{} does not carry a trajectory header",
            path.display()
        )));
    }
    let q = columns.len() - 4;
    let mut records = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != q + 4 {
            return Err(HarnessError::Config(format!(
                "row with {} fields in a {}-column file: {}",
                fields.len(),
                q + 4,
                path.display()
            )));
        }
        let t = fields[0].parse::<u64>().map_err(|e| {
            HarnessError::Config(format!("malformed iteration index `{}`: {e}", fields[0]))
        })?;
        let gamma = parse_field(fields[1], path)?;
        let loss = if fields[2].is_empty() {
            None
        } else {
            Some(parse_field(fields[2], path)?)
        };
        let inner_product = if fields[3].is_empty() {
            None
        } else {
            Some(parse_field(fields[3], path)?)
        };
        let theta = fields[4..]
            .iter()
            .map(|f| parse_field(f, path))
            .collect::<Result<Vec<f64>, _>>()?;
        records.push(TrajectoryRecord {
            t,
            theta: ParameterVector::new(theta)?,
            gamma,
            loss,
            inner_product,
        });
    }
    Ok(records)
}
