//! JSON and CSV emission. Floats are written with 17 significant digits.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};

use crate::CliError;

/// Compact JSON with every `f64` as `{:.16e}`.
struct FullPrecision(CompactFormatter);

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", float(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// `{:.16e}` for finite values, `nan`/`inf` spelled out otherwise.
pub fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision(CompactFormatter));
    value.serialize(&mut ser).map_err(|e| CliError::Io(e.to_string()))?;
    let mut s = String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// CSV with a header row; float cells use [`float`].
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// Writes to the file if given, to stdout otherwise.
pub fn emit(data: &str, path: Option<&str>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, data).map_err(|e| CliError::Io(format!("cannot write {p}: {e}"))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(data.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_floats_round_trip_exactly() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: Vec<f64>,
            c: Option<f64>,
        }
        let v = S { a: std::f64::consts::PI, b: vec![0.1, -2.5e-300, 1.0 / 3.0], c: None };
        let s = to_json(&v).unwrap();
        assert!(s.contains("3.1415926535897931e0"), "{s}");
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), std::f64::consts::PI);
        assert_eq!(back["b"][2].as_f64().unwrap(), 1.0 / 3.0);
        assert!(back["c"].is_null());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = to_csv(&["t", "x"], &[vec![float(0.0), float(1.5)]]).unwrap();
        assert_eq!(s, "t,x\n0.0000000000000000e0,1.5000000000000000e0\n");
    }
}
