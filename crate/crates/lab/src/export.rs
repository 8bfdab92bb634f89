//! CSV and JSON-lines writers with a fixed, bit-stable number format.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use edgeprice_core::IterationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct ExportError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(u64),
    Real(f64),
    Bool(bool),
}

/// Renders `v` with 17 significant digits, like C's `%.17g`: fixed notation
/// for decimal exponents in `[-5, 17)`, scientific otherwise, trailing zeros
/// trimmed. Every finite `f64` survives a round trip through `str::parse`.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let mut out = String::from(sign);
    if (-5..17).contains(&exp) {
        if exp < 0 {
            out.push_str("0.");
            out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
            out.push_str(&digits);
        } else {
            let point = exp as usize + 1;
            out.push_str(&digits[..point]);
            out.push('.');
            out.push_str(&digits[point..]);
        }
        trim_fraction(&mut out);
    } else {
        let mut m = format!("{}.{}", &digits[..1], &digits[1..]);
        trim_fraction(&mut m);
        let _ = write!(out, "{m}e{exp}");
    }
    out
}

fn trim_fraction(s: &mut String) {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
}

impl Value {
    fn csv(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Real(r) => format_real(*r),
            Value::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> String {
        match self {
            Value::Real(r) if !r.is_finite() => "null".into(),
            other => other.csv(),
        }
    }
}

/// Column names plus rows of values, ready to export.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn from_trace(trace: &[IterationRecord]) -> Self {
        Self {
            header: ["iter", "p_h", "p_t", "u_h", "u_t", "delta"]
                .map(String::from)
                .to_vec(),
            rows: trace
                .iter()
                .map(|r| {
                    vec![
                        Value::Int(r.iteration as u64),
                        Value::Real(r.p_h),
                        Value::Real(r.p_t),
                        Value::Real(r.u_h),
                        Value::Real(r.u_t),
                        Value::Real(r.delta),
                    ]
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Value::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push('{');
            for (i, (name, v)) in self.header.iter().zip(row).enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "\"{name}\":{}", v.json());
            }
            out.push_str("}\n");
        }
        out
    }
}

/// Writes `table` to `path` in the given format.
pub fn export_results(table: &Table, path: &Path, format: Format) -> Result<(), ExportError> {
    let body = match format {
        Format::Csv => table.to_csv(),
        Format::Jsonl => table.to_jsonl(),
    };
    let wrap = |source| ExportError {
        path: path.to_owned(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(wrap)?;
    f.write_all(body.as_bytes()).map_err(wrap)?;
    f.flush().map_err(wrap)
}
