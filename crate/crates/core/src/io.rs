//! CSV encoding of paths.
//!
//! Vector paths use the header `t,x1,...,xd`; operator paths use
//! `t,z11,z12,...,zmn` (row-major, indices joined with `_` once either
//! exceeds 9) or `t,z` for scalar integrands. Every number is written with
//! 17 significant digits so files round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::integrate::{OperatorPath, OperatorShape};
use crate::path::SampledPath;

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows<W: Write>(out: W, header: Vec<String>, path: &SampledPath) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(path.dim() + 1);
    for (t, row) in path.times().iter().zip(path.rows()) {
        record.clear();
        record.push(format_f64(*t));
        record.extend(row.iter().map(|&v| format_f64(v)));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read>(input: R) -> Result<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 2 || header[0] != "t" {
        return Err(Error::Csv(format!(
            "header must start with 't' and name at least one component, got {header:?}"
        )));
    }
    let dim = header.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::Csv(format!(
                "row {} has {} fields, expected {}",
                line + 1,
                rec.len(),
                dim + 1
            )));
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Csv(format!("row {}: cannot parse '{field}' as a number", line + 1)))?;
            if k == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    Ok((header, times, values))
}

pub fn write_path_csv<W: Write>(out: W, path: &SampledPath) -> Result<()> {
    let mut header = vec!["t".to_owned()];
    header.extend((1..=path.dim()).map(|k| format!("x{k}")));
    write_rows(out, header, path)
}

pub fn read_path_csv<R: Read>(input: R) -> Result<SampledPath> {
    let (header, times, values) = read_rows(input)?;
    SampledPath::new(times, values, header.len() - 1)
}

fn operator_header(rows: usize, cols: usize) -> Vec<String> {
    let wide = rows > 9 || cols > 9;
    let mut header = vec!["t".to_owned()];
    for i in 1..=rows {
        for j in 1..=cols {
            header.push(if wide { format!("z{i}_{j}") } else { format!("z{i}{j}") });
        }
    }
    header
}

fn parse_entry_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix('z')?;
    if let Some((i, j)) = rest.split_once('_') {
        return Some((i.parse().ok()?, j.parse().ok()?));
    }
    let mut chars = rest.chars();
    let i = chars.next()?.to_digit(10)? as usize;
    let j = chars.next()?.to_digit(10)? as usize;
    chars.next().is_none().then_some((i, j))
}

pub fn write_operator_csv<W: Write>(out: W, op: &OperatorPath) -> Result<()> {
    let header = match op.shape() {
        OperatorShape::Scalar => vec!["t".to_owned(), "z".to_owned()],
        OperatorShape::Matrix { rows, cols } => operator_header(rows, cols),
    };
    write_rows(out, header, op.path())
}

pub fn read_operator_csv<R: Read>(input: R) -> Result<OperatorPath> {
    let (header, times, values) = read_rows(input)?;
    let dim = header.len() - 1;
    let path = SampledPath::new(times, values, dim)?;
    if header[1] == "z" && dim == 1 {
        return OperatorPath::scalar(path);
    }
    let (rows, cols) = parse_entry_name(&header[dim]).ok_or_else(|| {
        Error::Csv(format!(
            "cannot read matrix shape from '{}'; expected t,z or t,z11,...",
            header[dim]
        ))
    })?;
    if operator_header(rows, cols) != header {
        return Err(Error::Csv(format!(
            "operator header does not list a row-major {rows}x{cols} matrix"
        )));
    }
    OperatorPath::matrix(path, rows, cols)
}

fn open(file: &Path) -> Result<File> {
    File::open(file).map_err(|e| Error::Io(format!("cannot open {}: {e}", file.display())))
}

fn create(file: &Path) -> Result<File> {
    File::create(file).map_err(|e| Error::Io(format!("cannot create {}: {e}", file.display())))
}

/// Prefixes CSV errors with the file name.
fn in_file<T>(file: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Csv(m) => Error::Csv(format!("{}: {m}", file.display())),
        other => other,
    })
}

pub fn save_path(file: impl AsRef<Path>, path: &SampledPath) -> Result<()> {
    write_path_csv(BufWriter::new(create(file.as_ref())?), path)
}

pub fn load_path(file: impl AsRef<Path>) -> Result<SampledPath> {
    let file = file.as_ref();
    in_file(file, read_path_csv(BufReader::new(open(file)?)))
}

pub fn save_operator(file: impl AsRef<Path>, op: &OperatorPath) -> Result<()> {
    write_operator_csv(BufWriter::new(create(file.as_ref())?), op)
}

pub fn load_operator(file: impl AsRef<Path>) -> Result<OperatorPath> {
    let file = file.as_ref();
    in_file(file, read_operator_csv(BufReader::new(open(file)?)))
}
