//! Measure files: UTF-8 CSV with header `w,x1,...,xd`, one atom per row.

use std::fmt::Write as _;
use std::path::Path;

use super::DiscreteMeasure;
use crate::error::{Error, Result};

pub fn load_measure(path: impl AsRef<Path>) -> Result<DiscreteMeasure> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_measure(&text)
}

pub fn parse_measure(text: &str) -> Result<DiscreteMeasure> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::MalformedFile { line: 1, reason: "missing header".into() })?;
    let dim = parse_header(header)?;

    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(Error::MalformedFile {
                line: lineno,
                reason: format!("expected {} fields, found {}", dim + 1, fields.len()),
            });
        }
        for (k, field) in fields.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::MalformedFile {
                line: lineno,
                reason: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedFile { line: lineno, reason: format!("non-finite value {field:?}") });
            }
            if k == 0 {
                weights.push(v);
            } else {
                points.push(v);
            }
        }
    }
    if weights.is_empty() {
        return Err(Error::EmptySupport);
    }
    DiscreteMeasure::new(points, dim, weights)
}

fn parse_header(header: &str) -> Result<usize> {
    let fields: Vec<&str> = header.trim_start_matches('\u{feff}').split(',').map(str::trim).collect();
    let bad = |reason: String| Error::MalformedFile { line: 1, reason };
    if fields.len() < 2 || fields[0] != "w" {
        return Err(bad(format!("header must read `w,x1,...,xd`, found {header:?}")));
    }
    for (k, f) in fields[1..].iter().enumerate() {
        if *f != format!("x{}", k + 1) {
            return Err(bad(format!("header column {} should be `x{}`, found {f:?}", k + 2, k + 1)));
        }
    }
    Ok(fields.len() - 1)
}

/// Serializes with round-trip exact number formatting.
pub fn format_measure(m: &DiscreteMeasure) -> String {
    let mut out = String::from("w");
    for k in 1..=m.dim() {
        let _ = write!(out, ",x{k}");
    }
    out.push('\n');
    for (x, w) in m.iter() {
        let _ = write!(out, "{w:?}");
        for c in x {
            let _ = write!(out, ",{c:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_measure(m: &DiscreteMeasure, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_measure(m)).map_err(|e| Error::io(path, e))
}
