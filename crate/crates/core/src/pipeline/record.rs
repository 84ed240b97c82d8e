//! Patch-level CSV records.
//!
//! Schema: `subject_id,device,region,angle,r,g,b`, UTF-8, comma separated,
//! one header row. The RGB columns are either 8-bit integers (0–255) or
//! unit-interval decimals; the type is detected per file and must not mix.
//! Row numbers in errors are file line numbers, the header being row 1.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::colorspace::SrgbColor;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["subject_id", "device", "region", "angle", "r", "g", "b"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatchRgb {
    Bits8([u8; 3]),
    Unit([f64; 3]),
}

impl PatchRgb {
    pub fn to_srgb(self) -> SrgbColor {
        match self {
            PatchRgb::Bits8(v) => SrgbColor::from_u8(v[0], v[1], v[2]),
            PatchRgb::Unit(v) => SrgbColor::new(v[0], v[1], v[2]),
        }
    }

    fn is_bits8(&self) -> bool {
        matches!(self, PatchRgb::Bits8(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub subject_id: String,
    pub device: String,
    pub region: String,
    pub angle: u32,
    pub rgb: PatchRgb,
}

impl PatchRecord {
    pub fn key(&self) -> (&str, &str, &str, u32) {
        (&self.subject_id, &self.device, &self.region, self.angle)
    }
}

/// Checks that a label can be written back unquoted.
pub fn validate_label(label: &str, what: &str) -> std::result::Result<(), String> {
    if label.is_empty() {
        return Err(format!("empty {what}"));
    }
    if label.trim() != label {
        return Err(format!("{what} `{label}` has surrounding whitespace"));
    }
    if label.contains([',', '"', '\n', '\r']) {
        return Err(format!("{what} `{label}` contains a comma, quote or line break"));
    }
    Ok(())
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Vec<PatchRecord>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&bytes, &path.display().to_string())
}

/// Parses CSV bytes; `file` only labels error messages.
pub fn parse_csv(bytes: &[u8], file: &str) -> Result<Vec<PatchRecord>> {
    let err = |row: usize, column: &str, message: String| Error::Csv {
        file: file.to_string(),
        row,
        column: column.to_string(),
        message,
    };
    let text = std::str::from_utf8(bytes)
        .map_err(|e| err(0, "-", format!("not valid UTF-8: {e}")))?;
    if text.trim().is_empty() {
        return Err(err(1, "-", "empty file".into()));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();

    let header = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(err(1, "-", e.to_string())),
        None => return Err(err(1, "-", "empty file".into())),
    };
    let names: Vec<&str> = header.iter().collect();
    for name in &names {
        if !CSV_HEADER.contains(name) {
            return Err(err(1, name, format!("unknown column `{name}`")));
        }
    }
    for expected in CSV_HEADER {
        if !names.contains(&expected) {
            return Err(err(1, expected, format!("missing column `{expected}`")));
        }
    }
    if names != CSV_HEADER {
        return Err(err(
            1,
            "-",
            format!("columns must appear in the order {}", CSV_HEADER.join(",")),
        ));
    }

    let mut raw: Vec<(usize, csv::StringRecord)> = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, "-", e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() == 1 && row.get(0) == Some("") {
            continue;
        }
        if row.len() != CSV_HEADER.len() {
            return Err(err(
                line,
                "-",
                format!("expected {} fields, found {}", CSV_HEADER.len(), row.len()),
            ));
        }
        raw.push((line, row));
    }
    if raw.is_empty() {
        return Err(err(2, "-", "no data rows".into()));
    }

    // A file is decimal if any RGB cell carries a decimal point or exponent.
    let decimal = raw
        .iter()
        .any(|(_, row)| (4..7).any(|i| row[i].contains(['.', 'e', 'E'])));

    let mut records = Vec::with_capacity(raw.len());
    let mut seen: HashMap<(&str, &str, &str, u32), usize> = HashMap::with_capacity(raw.len());
    for (line, row) in &raw {
        let line = *line;
        for (i, what) in [(0, "subject_id"), (1, "device"), (2, "region")] {
            validate_label(&row[i], what).map_err(|m| err(line, what, m))?;
        }
        let angle: u32 = row[3]
            .parse()
            .map_err(|_| err(line, "angle", format!("angle `{}` is not a non-negative integer", &row[3])))?;

        let mut channels = [0.0f64; 3];
        let mut codes = [0u8; 3];
        for c in 0..3 {
            let column = CSV_HEADER[4 + c];
            let cell = &row[4 + c];
            if decimal {
                if !cell.contains(['.', 'e', 'E']) {
                    return Err(err(
                        line,
                        column,
                        format!("integer `{cell}` in a file of unit-interval decimals"),
                    ));
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| err(line, column, format!("`{cell}` is not a number")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(err(line, column, format!("value {cell} outside [0, 1]")));
                }
                channels[c] = v;
            } else {
                let v: i64 = cell
                    .parse()
                    .map_err(|_| err(line, column, format!("`{cell}` is not an integer")))?;
                if !(0..=255).contains(&v) {
                    return Err(err(line, column, format!("value {v} outside 0-255")));
                }
                codes[c] = v as u8;
            }
        }

        let key = (&row[0], &row[1], &row[2], angle);
        if let Some(first) = seen.get(&key) {
            return Err(err(
                line,
                "-",
                format!(
                    "duplicate record ({}, {}, {}, {}); first seen at row {first}",
                    key.0, key.1, key.2, key.3
                ),
            ));
        }
        seen.insert(key, line);

        records.push(PatchRecord {
            subject_id: key.0.to_string(),
            device: key.1.to_string(),
            region: key.2.to_string(),
            angle,
            rgb: if decimal {
                PatchRgb::Unit(channels)
            } else {
                PatchRgb::Bits8(codes)
            },
        });
    }
    Ok(records)
}

/// Serializes records in input order. Decimals use the shortest
/// representation that parses back to the same `f64`.
pub fn records_to_csv(records: &[PatchRecord]) -> Result<String> {
    if let Some(first) = records.first() {
        if records.iter().any(|r| r.rgb.is_bits8() != first.rgb.is_bits8()) {
            return Err(Error::Domain(
                "cannot write a file mixing 8-bit and decimal RGB".into(),
            ));
        }
    }
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in records {
        for (label, what) in [
            (&r.subject_id, "subject_id"),
            (&r.device, "device"),
            (&r.region, "region"),
        ] {
            validate_label(label, what).map_err(Error::Domain)?;
        }
        let _ = write!(out, "{},{},{},{},", r.subject_id, r.device, r.region, r.angle);
        let _ = match r.rgb {
            PatchRgb::Bits8([x, y, z]) => writeln!(out, "{x},{y},{z}"),
            PatchRgb::Unit([x, y, z]) => writeln!(out, "{x:?},{y:?},{z:?}"),
        };
    }
    Ok(out)
}

pub fn write_csv(path: impl AsRef<Path>, records: &[PatchRecord]) -> Result<()> {
    let path = path.as_ref();
    let text = records_to_csv(records)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "subject_id,device,region,angle,r,g,b\n";

    fn parse(body: &str) -> Result<Vec<PatchRecord>> {
        parse_csv(format!("{HEADER}{body}").as_bytes(), "test.csv")
    }

    fn csv_error(e: Error) -> (usize, String, String) {
        match e {
            Error::Csv {
                row,
                column,
                message,
                ..
            } => (row, column, message),
            other => panic!("expected a CSV error, got {other:?}"),
        }
    }

    #[test]
    fn two_rows() {
        let recs = parse("s1,dslr,chin,0,200,150,120\ns1,tablet,chin,0,190,140,100\n").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].device, "tablet");
        assert_eq!(recs[0].rgb, PatchRgb::Bits8([200, 150, 120]));
    }

    #[test]
    fn out_of_range_cites_row_and_column() {
        let mut body = String::new();
        for i in 0..5 {
            body.push_str(&format!("s{i},dslr,chin,0,10,10,10\n"));
        }
        body.push_str("s9,dslr,chin,0,256,10,10\n");
        let (row, column, message) = csv_error(parse(&body).unwrap_err());
        assert_eq!((row, column.as_str()), (7, "r"));
        assert!(message.contains("256"));
    }

    #[test]
    fn structural_errors() {
        let e = parse_csv(b"", "x").unwrap_err();
        assert!(csv_error(e).2.contains("empty"));
        let e = parse_csv(HEADER.as_bytes(), "x").unwrap_err();
        assert_eq!(csv_error(e).0, 2);
        let e = parse_csv(b"subject_id,device,region,angle,r,g,b,extra\n", "x").unwrap_err();
        assert_eq!(csv_error(e).1, "extra");
        let e = parse_csv(b"subject_id,device,region,angle,r,g\n", "x").unwrap_err();
        assert_eq!(csv_error(e).1, "b");
        let e = parse("s1,dslr,chin,0,1,2,3\ns1,dslr,chin,0,4,5,6\n").unwrap_err();
        let (row, _, message) = csv_error(e);
        assert_eq!(row, 3);
        assert!(message.contains("row 2"));
        let e = parse("s1,dslr,chin,x,1,2,3\n").unwrap_err();
        assert_eq!(csv_error(e).1, "angle");
        let e = parse("s1,dslr,chin,0,1,2\n").unwrap_err();
        assert_eq!(csv_error(e).0, 2);
        let e = parse("s1,,chin,0,1,2,3\n").unwrap_err();
        assert_eq!(csv_error(e).1, "device");
    }

    #[test]
    fn decimals_are_detected_and_never_mixed() {
        let recs = parse("s1,dslr,chin,0,0.5,0.25,1.0\n").unwrap();
        assert_eq!(recs[0].rgb, PatchRgb::Unit([0.5, 0.25, 1.0]));
        let e = parse("s1,dslr,chin,0,0.5,0.25,1.0\ns2,dslr,chin,0,1,0,0\n").unwrap_err();
        let (row, column, _) = csv_error(e);
        assert_eq!((row, column.as_str()), (3, "r"));
        let e = parse("s1,dslr,chin,0,0.5,1.5,0.1\n").unwrap_err();
        assert_eq!(csv_error(e).1, "g");
        let e = parse("s1,dslr,chin,0,-1,0,0\n").unwrap_err();
        assert_eq!(csv_error(e).1, "r");
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let text = format!(
            "{HEADER}s1,dslr,chin,0,0.1,0.30000000000000004,1.0\ns2,phone,forehead,3,0.0,1e-5,0.5\n"
        );
        let recs = parse_csv(text.as_bytes(), "x").unwrap();
        let again = records_to_csv(&recs).unwrap();
        let recs2 = parse_csv(again.as_bytes(), "x").unwrap();
        assert_eq!(recs, recs2);
        assert_eq!(records_to_csv(&recs2).unwrap(), again);

        let ints = format!("{HEADER}s1,dslr,chin,0,0,128,255\n");
        assert_eq!(records_to_csv(&parse_csv(ints.as_bytes(), "x").unwrap()).unwrap(), ints);
    }

    #[test]
    fn crlf_and_missing_final_newline() {
        let recs = parse_csv(
            b"subject_id,device,region,angle,r,g,b\r\ns1,dslr,chin,0,1,2,3",
            "x",
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
    }
}
