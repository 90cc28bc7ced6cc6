use std::fs::File;
use std::io::{BufWriter, ErrorKind, Write};
use std::path::Path;

use serde_json::{Map, Value};
use youngflow::io::format_f64;
use youngflow::SolutionField;

use crate::CliError;

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("cannot write {}: {e}", path.display()))
}

/// Adds `command` and `version` to a JSON object.
pub fn envelope(command: &str, body: Value) -> Value {
    let mut map = match body {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    };
    map.insert("command".into(), Value::from(command));
    map.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
    Value::Object(map)
}

pub fn emit(command: &str, body: Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&envelope(command, body)).expect("JSON values serialize");
    print_line(&text)
}

/// Writes to stdout; a closed pipe is not an error.
pub fn print_line(text: &str) -> Result<(), CliError> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(CliError::Usage(format!("cannot write to stdout: {e}"))),
        _ => Ok(()),
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| io_error(path, e))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

/// One time slice of a PDE solution: `x1,...,xd,u,du1,...,dud`.
pub fn write_slice(path: &Path, sol: &SolutionField, k: usize) -> Result<(), CliError> {
    let d = sol.dim();
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("u".into());
    header.extend((1..=d).map(|i| format!("du{i}")));
    w.write_record(&header).map_err(|e| io_error(path, e))?;
    for (p, x) in sol.points.iter().enumerate() {
        let mut row: Vec<String> = x.iter().map(|&v| format_f64(v)).collect();
        row.push(format_f64(sol.u[k][p]));
        row.extend(sol.du[k][p].iter().map(|&v| format_f64(v)));
        w.write_record(&row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}
