//! One CSV file per snapshot matrix: header `t,x_1,...,x_n`, one snapshot per row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::TrajectoryData;

/// Paths of the per-matrix files; absent blocks are `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryFiles {
    pub displacement: PathBuf,
    pub velocity: Option<PathBuf>,
    pub acceleration: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub force: Option<PathBuf>,
}

impl TrajectoryFiles {
    /// `<stem>_X.csv`, `<stem>_Xd.csv`, `<stem>_Xdd.csv`, `<stem>_U.csv`, `<stem>_F.csv` in `dir`.
    pub fn in_dir(dir: &Path, stem: &str) -> Self {
        let p = |suffix: &str| dir.join(format!("{stem}_{suffix}.csv"));
        Self {
            displacement: p("X"),
            velocity: Some(p("Xd")),
            acceleration: Some(p("Xdd")),
            input: Some(p("U")),
            force: Some(p("F")),
        }
    }

    /// Like [`TrajectoryFiles::in_dir`] but keeps only optional files that exist.
    pub fn existing_in(dir: &Path, stem: &str) -> Self {
        let mut files = Self::in_dir(dir, stem);
        for slot in [
            &mut files.velocity,
            &mut files.acceleration,
            &mut files.input,
            &mut files.force,
        ] {
            if slot.as_ref().is_some_and(|p| !p.exists()) {
                *slot = None;
            }
        }
        files
    }
}

pub(crate) fn write_matrix_csv(path: &Path, prefix: &str, times: &[f64], m: &Matrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header = String::from("t");
    for i in 1..=m.nrows() {
        header.push_str(&format!(",{prefix}_{i}"));
    }
    writeln!(w, "{header}").map_err(io)?;
    let mut line = String::new();
    for (j, t) in times.iter().enumerate() {
        line.clear();
        line.push_str(&format!("{t:.16e}"));
        for i in 0..m.nrows() {
            line.push_str(&format!(",{:.16e}", m[(i, j)]));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub(crate) fn read_matrix_csv(path: &Path) -> Result<(Vec<f64>, Matrix)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::format(path, 1, "empty file"));
    }
    if header[0].trim() != "t" {
        return Err(Error::format(path, 1, "first header field must be `t`"));
    }
    let rows = header.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::format(path, line, format!("non-numeric field `{field}` in column {}", col + 1))
            })?;
            if col == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if times.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no snapshots", path.display())));
    }
    let m = Matrix::from_vec(rows, times.len(), values);
    Ok((times, m))
}

fn csv_error(path: &Path, e: ::csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        ::csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::format(
            path,
            line,
            format!("ragged row: {len} fields, expected {expected_len}"),
        ),
        ::csv::ErrorKind::Io(_) => Error::format(path, line, e.to_string()),
        _ => Error::format(path, line, e.to_string()),
    }
}

/// Writes every present block of `data`. Absent blocks are skipped even when a path is given.
pub fn save_csv(data: &TrajectoryData, files: &TrajectoryFiles) -> Result<()> {
    write_matrix_csv(&files.displacement, "x", data.times(), data.displacement())?;
    let optional = [
        (&files.velocity, data.velocity(), "xd"),
        (&files.acceleration, data.acceleration(), "xdd"),
        (&files.input, data.input(), "u"),
        (&files.force, data.force(), "f"),
    ];
    for (path, block, prefix) in optional {
        if let (Some(path), Some(block)) = (path, block) {
            write_matrix_csv(path, prefix, data.times(), block)?;
        }
    }
    Ok(())
}

pub fn load_csv(files: &TrajectoryFiles) -> Result<TrajectoryData> {
    let (times, x) = read_matrix_csv(&files.displacement)?;
    let mut data = TrajectoryData::new(times, x)?;
    let read = |path: &Path| -> Result<Matrix> {
        let (t, m) = read_matrix_csv(path)?;
        let reference = data.times();
        let mismatch = t.len() != reference.len()
            || t.iter()
                .zip(reference)
                .any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0));
        if mismatch {
            return Err(Error::InvalidInput(format!(
                "{} uses a different time grid than {}",
                path.display(),
                files.displacement.display()
            )));
        }
        Ok(m)
    };
    let xd = files.velocity.as_deref().map(read).transpose()?;
    let xdd = files.acceleration.as_deref().map(read).transpose()?;
    let u = files.input.as_deref().map(read).transpose()?;
    let f = files.force.as_deref().map(read).transpose()?;
    if let Some(xd) = xd {
        data = data.with_velocity(xd)?;
    }
    if let Some(xdd) = xdd {
        data = data.with_acceleration(xdd)?;
    }
    if let Some(u) = u {
        data = data.with_input(u)?;
    }
    if let Some(f) = f {
        data = data.with_force(f)?;
    }
    Ok(data)
}
