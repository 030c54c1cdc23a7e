//! CSV readers and writers.
//!
//! Measures use a headed CSV `w,x1,...,xD`; matrices and vectors are
//! headerless. Floats are written with 17 significant digits, which
//! round-trips every `f64`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::flows::Trajectory;
use crate::measure::DiscreteMeasure;

/// Formats `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse {field:?} as a number")))
}

pub fn write_measure<W: Write>(m: &DiscreteMeasure, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["w".to_string()];
    header.extend((1..=m.dim()).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for (i, row) in m.points().rows().into_iter().enumerate() {
        let mut rec = vec![fmt_f64(m.weights()[i])];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_measure<R: Read>(input: R) -> Result<DiscreteMeasure> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("w") || header.len() < 2 {
        return Err(Error::Parse("measure CSV needs a header w,x1,...,xD".into()));
    }
    let dim = header.len() - 1;
    let mut weights = Vec::new();
    let mut coords = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::Parse(format!("line {}: expected {} fields, got {}", i + 2, dim + 1, rec.len())));
        }
        weights.push(parse_f64(&rec[0], i + 2)?);
        for field in rec.iter().skip(1) {
            coords.push(parse_f64(field, i + 2)?);
        }
    }
    let points = Array2::from_shape_vec((weights.len(), dim), coords).expect("row lengths checked");
    DiscreteMeasure::new(points, weights)
}

pub fn write_matrix<W: Write>(m: &Array2<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in m.rows() {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(input: R) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut cols = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::Parse(format!("line {}: expected {c} fields, got {}", i + 1, rec.len())))
            }
            _ => {}
        }
        for field in rec.iter() {
            values.push(parse_f64(field, i + 1)?);
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::Empty)?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("row lengths checked"))
}

/// Reads a headerless vector laid out as one column or one row.
pub fn read_vector<R: Read>(input: R) -> Result<Vec<f64>> {
    let m = read_matrix(input)?;
    if m.nrows() != 1 && m.ncols() != 1 {
        return Err(Error::Parse(format!("expected a vector, got a {}x{} matrix", m.nrows(), m.ncols())));
    }
    Ok(m.into_iter().collect())
}

pub fn write_vector<W: Write>(v: &[f64], mut out: W) -> Result<()> {
    for x in v {
        writeln!(out, "{}", fmt_f64(*x))?;
    }
    Ok(())
}

pub fn load_measure(path: &Path) -> Result<DiscreteMeasure> {
    read_measure(File::open(path)?)
}

pub fn save_measure(m: &DiscreteMeasure, path: &Path) -> Result<()> {
    write_measure(m, File::create(path)?)
}

pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    read_matrix(File::open(path)?)
}

pub fn save_matrix(m: &Array2<f64>, path: &Path) -> Result<()> {
    write_matrix(m, File::create(path)?)
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    read_vector(File::open(path)?)
}

/// Writes `snap_{iter}.csv` for every snapshot and `trace.csv` with columns
/// `iteration,loss` into `dir`, creating it if needed.
pub fn save_trajectory(t: &Trajectory, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for s in &t.snapshots {
        save_measure(&s.system.measure(), &dir.join(format!("snap_{}.csv", s.iteration)))?;
    }
    let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
    w.write_record(["iteration", "loss"])?;
    for p in &t.trace {
        w.write_record([p.iteration.to_string(), fmt_f64(p.loss)])?;
    }
    w.flush()?;
    Ok(())
}
