//! Trace files: CSV with a unit-annotated header, or JSON lines.

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use super::{MpcDiagnostics, Trace, TraceRecord};
use crate::error::{Error, Result};
use crate::so3::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "jsonl" => Ok(TraceFormat::Jsonl),
            other => Err(Error::Parse(format!("unknown trace format {other:?}"))),
        }
    }
}

/// Column names and units, in file order.
pub const COLUMNS: [(&str, &str); 39] = [
    ("t", "s"),
    ("p_x", "m"),
    ("p_y", "m"),
    ("p_z", "m"),
    ("v_x", "m/s"),
    ("v_y", "m/s"),
    ("v_z", "m/s"),
    ("w_x", "rad/s"),
    ("w_y", "rad/s"),
    ("w_z", "rad/s"),
    ("R_00", "-"),
    ("R_01", "-"),
    ("R_02", "-"),
    ("R_10", "-"),
    ("R_11", "-"),
    ("R_12", "-"),
    ("R_20", "-"),
    ("R_21", "-"),
    ("R_22", "-"),
    ("K", "J"),
    ("U", "J"),
    ("V", "J"),
    ("eps", "-"),
    ("d", "m^2"),
    ("constraint_g", "-"),
    ("a_x", "N*m*s/rad"),
    ("a_y", "N*m*s/rad"),
    ("a_z", "N*m*s/rad"),
    ("tau_prime_x", "N*m"),
    ("tau_prime_y", "N*m"),
    ("tau_prime_z", "N*m"),
    ("tau_total_x", "N*m"),
    ("tau_total_y", "N*m"),
    ("tau_total_z", "N*m"),
    ("mpc_cost", "N^2*m^2"),
    ("mpc_violation", "-"),
    ("mpc_iters", "-"),
    ("mpc_converged", "-"),
    ("mpc_active", "-"),
];

const N_REAL: usize = 34;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Cell {
    Real(f64),
    Count(usize),
    Flag(bool),
    Empty,
}

fn cells(r: &TraceRecord) -> Vec<Cell> {
    let mut out = Vec::with_capacity(COLUMNS.len());
    out.push(r.t);
    out.extend(r.p.iter());
    out.extend(r.v.iter());
    out.extend(r.w.iter());
    for i in 0..3 {
        for j in 0..3 {
            out.push(r.r[(i, j)]);
        }
    }
    out.extend([r.kinetic, r.potential, r.lyapunov, r.eps, r.d, r.constraint_g]);
    out.extend(r.a.iter());
    out.extend(r.tau_prime.iter());
    out.extend(r.tau_total.iter());
    let mut cells: Vec<Cell> = out.into_iter().map(Cell::Real).collect();
    match r.mpc {
        Some(m) => cells.extend([
            Cell::Real(m.cost),
            Cell::Real(m.violation),
            Cell::Count(m.iterations),
            Cell::Flag(m.converged),
            Cell::Flag(true),
        ]),
        None => cells.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Flag(false)]),
    }
    cells
}

fn from_cells(c: &[Cell]) -> Result<TraceRecord> {
    let real = |i: usize| match c[i] {
        Cell::Real(x) => Ok(x),
        other => Err(Error::Parse(format!("column {}: expected a number, got {other:?}", COLUMNS[i].0))),
    };
    let vec3 = |i: usize| -> Result<Vec3> { Ok(Vec3::new(real(i)?, real(i + 1)?, real(i + 2)?)) };
    let mut r = [0.0; 9];
    for (k, slot) in r.iter_mut().enumerate() {
        *slot = real(10 + k)?;
    }
    let active = match c[38] {
        Cell::Flag(b) => b,
        other => return Err(Error::Parse(format!("column mpc_active: expected a flag, got {other:?}"))),
    };
    let mpc = if active {
        let iterations = match c[36] {
            Cell::Count(n) => n,
            other => return Err(Error::Parse(format!("column mpc_iters: expected a count, got {other:?}"))),
        };
        let converged = match c[37] {
            Cell::Flag(b) => b,
            other => {
                return Err(Error::Parse(format!(
                    "column mpc_converged: expected a flag, got {other:?}"
                )))
            }
        };
        Some(MpcDiagnostics {
            cost: real(34)?,
            violation: real(35)?,
            iterations,
            converged,
        })
    } else {
        if c[34..38].iter().any(|x| *x != Cell::Empty) {
            return Err(Error::Parse("mpc columns set on a record without an MPC solve".into()));
        }
        None
    };
    Ok(TraceRecord {
        t: real(0)?,
        p: vec3(1)?,
        v: vec3(4)?,
        w: vec3(7)?,
        r: Mat3::from_row_slice(&r),
        kinetic: real(19)?,
        potential: real(20)?,
        lyapunov: real(21)?,
        eps: real(22)?,
        d: real(23)?,
        constraint_g: real(24)?,
        a: vec3(25)?,
        tau_prime: vec3(28)?,
        tau_total: vec3(31)?,
        mpc,
    })
}

fn kind(i: usize) -> fn(&str) -> Result<Cell> {
    match i {
        _ if i < N_REAL + 2 => |s: &str| {
            if s.is_empty() {
                return Ok(Cell::Empty);
            }
            s.parse::<f64>()
                .map(Cell::Real)
                .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
        },
        36 => |s: &str| {
            if s.is_empty() {
                return Ok(Cell::Empty);
            }
            s.parse::<usize>()
                .map(Cell::Count)
                .map_err(|e| Error::Parse(format!("bad count {s:?}: {e}")))
        },
        _ => |s: &str| match s {
            "" => Ok(Cell::Empty),
            "true" => Ok(Cell::Flag(true)),
            "false" => Ok(Cell::Flag(false)),
            other => Err(Error::Parse(format!("bad flag {other:?}"))),
        },
    }
}

fn csv_text(c: Cell) -> String {
    match c {
        Cell::Real(x) => format!("{x:.16e}"),
        Cell::Count(n) => n.to_string(),
        Cell::Flag(b) => b.to_string(),
        Cell::Empty => String::new(),
    }
}

fn json_value(c: Cell) -> Value {
    match c {
        Cell::Real(x) => serde_json::Number::from_f64(x)
            .map(Value::Number)
            .unwrap_or_else(|| Value::String(x.to_string())),
        Cell::Count(n) => Value::from(n),
        Cell::Flag(b) => Value::Bool(b),
        Cell::Empty => Value::Null,
    }
}

fn json_cell(i: usize, v: &Value) -> Result<Cell> {
    let bad = || Error::Parse(format!("column {}: unexpected value {v}", COLUMNS[i].0));
    Ok(match v {
        Value::Null => Cell::Empty,
        Value::Bool(b) if i >= N_REAL + 3 => Cell::Flag(*b),
        Value::Number(n) if i == N_REAL + 2 => Cell::Count(n.as_u64().ok_or_else(bad)? as usize),
        Value::Number(n) if i < N_REAL + 2 => Cell::Real(n.as_f64().ok_or_else(bad)?),
        Value::String(s) if i < N_REAL + 2 => Cell::Real(s.parse().map_err(|_| bad())?),
        _ => return Err(bad()),
    })
}

pub fn header_row() -> Vec<String> {
    COLUMNS.iter().map(|(n, u)| format!("{n}[{u}]")).collect()
}

pub fn write_trace_to<W: Write>(trace: &Trace, out: W, format: TraceFormat) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<trace>", e);
    match format {
        TraceFormat::Csv => {
            let mut out = out;
            for line in &trace.header {
                for part in line.lines() {
                    writeln!(out, "# {part}").map_err(io)?;
                }
            }
            let mut w = csv::WriterBuilder::new().from_writer(out);
            w.write_record(header_row()).map_err(csv_error)?;
            for r in &trace.records {
                w.write_record(cells(r).into_iter().map(csv_text)).map_err(csv_error)?;
            }
            w.flush().map_err(io)?;
        }
        TraceFormat::Jsonl => {
            let mut out = std::io::BufWriter::new(out);
            for r in &trace.records {
                let obj: Map<String, Value> = COLUMNS
                    .iter()
                    .zip(cells(r))
                    .map(|((n, _), c)| (n.to_string(), json_value(c)))
                    .collect();
                serde_json::to_writer(&mut out, &obj).map_err(|e| Error::Parse(e.to_string()))?;
                out.write_all(b"\n").map_err(io)?;
            }
            out.flush().map_err(io)?;
        }
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

pub fn write_trace(trace: &Trace, path: &Path, format: TraceFormat) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_to(trace, std::io::BufWriter::new(file), format).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Reads a CSV trace. Leading `#` lines become the header.
pub fn read_trace_csv(text: &str) -> Result<Trace> {
    let mut header = Vec::new();
    let mut rest = text;
    while let Some(line) = rest.strip_prefix('#') {
        let (line, tail) = line.split_once('\n').unwrap_or((line, ""));
        let line = line.strip_suffix('\r').unwrap_or(line);
        header.push(line.strip_prefix(' ').unwrap_or(line).to_string());
        rest = tail;
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    let names = rdr.headers().map_err(csv_error)?;
    if names.len() != COLUMNS.len() {
        return Err(Error::Parse(format!(
            "expected {} columns, found {}",
            COLUMNS.len(),
            names.len()
        )));
    }
    for (i, (got, (name, _))) in names.iter().zip(COLUMNS.iter()).enumerate() {
        let bare = got.split('[').next().unwrap_or(got).trim();
        if bare != *name {
            return Err(Error::Parse(format!("column {i}: expected {name:?}, found {got:?}")));
        }
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let c = row
            .iter()
            .enumerate()
            .map(|(i, s)| kind(i)(s))
            .collect::<Result<Vec<_>>>()?;
        records.push(from_cells(&c)?);
    }
    check_time(&records)?;
    Ok(Trace {
        header,
        records,
        mpc_failures: 0,
    })
}

/// Reads a JSON-lines trace; blank lines are ignored.
pub fn read_trace_jsonl(text: &str) -> Result<Trace> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> =
            serde_json::from_str(line).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        let c = COLUMNS
            .iter()
            .enumerate()
            .map(|(i, (name, _))| {
                let v = obj
                    .get(*name)
                    .ok_or_else(|| Error::Parse(format!("line {}: missing field {name:?}", n + 1)))?;
                json_cell(i, v)
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(from_cells(&c)?);
    }
    check_time(&records)?;
    Ok(Trace {
        header: Vec::new(),
        records,
        mpc_failures: 0,
    })
}

fn check_time(records: &[TraceRecord]) -> Result<()> {
    match records.windows(2).position(|w| !(w[1].t > w[0].t)) {
        Some(k) => Err(Error::Parse(format!("time is not strictly increasing at record {}", k + 1))),
        None => Ok(()),
    }
}

/// Reads a trace, choosing the format from the extension (`.jsonl` or CSV).
pub fn read_trace(path: &Path) -> Result<Trace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => read_trace_jsonl(&text),
        _ => read_trace_csv(&text),
    }
}
