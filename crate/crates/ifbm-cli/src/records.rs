//! Columnar first-zero records file.
//!
//! Layout: a fixed magic line, `# key = value` header lines carrying the
//! producing configuration, a column declaration, then one
//! `path_index z_index censored` row per synthesized series. Numbers are
//! printed with Rust's shortest round-trip formatting, so read-back is
//! bit-exact.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ifbm::simulate::FirstZeroRecord;
use ifbm::toeplitz::PrecisionMode;

pub const MAGIC_LINE: &str = "# ifbm-records v1";
pub const COLUMNS_LINE: &str = "# columns = path_index z_index censored";

#[derive(Debug)]
pub enum RecordsError {
    Io(io::Error),
    Parse(String),
}

impl fmt::Display for RecordsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordsError::Io(e) => write!(f, "records io failure: {e}"),
            RecordsError::Parse(msg) => write!(f, "records file malformed: {msg}"),
        }
    }
}

impl From<io::Error> for RecordsError {
    fn from(e: io::Error) -> Self {
        RecordsError::Io(e)
    }
}

/// Provenance block stored ahead of the rows; enough to re-derive the
/// synthesis table and the serial layout without the original command line.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordsHeader {
    pub version: String,
    pub h: f64,
    pub n0: u32,
    pub eps_l: f64,
    pub delta: f64,
    pub n_rows: u32,
    pub precision: PrecisionMode,
    pub seed: u64,
    pub series: u32,
    pub n_total: u64,
    pub config_hash: String,
}

pub fn write_records(
    path: &Path,
    header: &RecordsHeader,
    records: &[FirstZeroRecord],
) -> Result<(), RecordsError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MAGIC_LINE}")?;
    writeln!(w, "# version = {}", header.version)?;
    writeln!(w, "# h = {}", header.h)?;
    writeln!(w, "# n0 = {}", header.n0)?;
    writeln!(w, "# eps_l = {}", header.eps_l)?;
    writeln!(w, "# delta = {}", header.delta)?;
    writeln!(w, "# n_rows = {}", header.n_rows)?;
    writeln!(w, "# precision = {}", header.precision)?;
    writeln!(w, "# seed = {}", header.seed)?;
    writeln!(w, "# series = {}", header.series)?;
    writeln!(w, "# n_total = {}", header.n_total)?;
    writeln!(w, "# config_hash = {}", header.config_hash)?;
    writeln!(w, "{COLUMNS_LINE}")?;
    for (i, r) in records.iter().enumerate() {
        writeln!(w, "{} {} {}", i, r.z_index, u8::from(r.censored))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, RecordsError> {
    value
        .parse()
        .map_err(|_| RecordsError::Parse(format!("bad value '{value}' for {key}")))
}

pub fn read_records(path: &Path) -> Result<(RecordsHeader, Vec<FirstZeroRecord>), RecordsError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();

    match lines.next() {
        Some(Ok(first)) if first == MAGIC_LINE => {}
        Some(Ok(first)) => {
            return Err(RecordsError::Parse(format!(
                "expected magic line '{MAGIC_LINE}', found '{first}'"
            )))
        }
        Some(Err(e)) => return Err(e.into()),
        None => return Err(RecordsError::Parse("empty file".into())),
    }

    let mut fields: Vec<(String, String)> = Vec::new();
    let mut saw_columns = false;
    let mut records = Vec::new();
    let mut row_no: u64 = 0;

    for line in lines {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# ") {
            if line == COLUMNS_LINE {
                saw_columns = true;
                continue;
            }
            let (key, value) = rest
                .split_once(" = ")
                .ok_or_else(|| RecordsError::Parse(format!("bad header line '{line}'")))?;
            fields.push((key.to_string(), value.to_string()));
            continue;
        }
        if !saw_columns {
            return Err(RecordsError::Parse(
                "data row before column declaration".into(),
            ));
        }
        let mut cols = line.split_ascii_whitespace();
        let idx: u64 = parse_field(cols.next().unwrap_or(""), "path_index")?;
        let z_index: u32 = parse_field(cols.next().unwrap_or(""), "z_index")?;
        let censored_raw: u8 = parse_field(cols.next().unwrap_or(""), "censored")?;
        if cols.next().is_some() {
            return Err(RecordsError::Parse(format!("trailing columns in row {row_no}")));
        }
        if idx != row_no {
            return Err(RecordsError::Parse(format!(
                "path_index {idx} out of order at row {row_no}"
            )));
        }
        let censored = match censored_raw {
            0 => false,
            1 => true,
            other => {
                return Err(RecordsError::Parse(format!(
                    "censored flag must be 0 or 1, found {other}"
                )))
            }
        };
        records.push(FirstZeroRecord { z_index, censored });
        row_no += 1;
    }

    let get = |key: &str| -> Result<&str, RecordsError> {
        fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| RecordsError::Parse(format!("missing header field {key}")))
    };

    let header = RecordsHeader {
        version: get("version")?.to_string(),
        h: parse_field(get("h")?, "h")?,
        n0: parse_field(get("n0")?, "n0")?,
        eps_l: parse_field(get("eps_l")?, "eps_l")?,
        delta: parse_field(get("delta")?, "delta")?,
        n_rows: parse_field(get("n_rows")?, "n_rows")?,
        precision: get("precision")?
            .parse()
            .map_err(RecordsError::Parse)?,
        seed: parse_field(get("seed")?, "seed")?,
        series: parse_field(get("series")?, "series")?,
        n_total: parse_field(get("n_total")?, "n_total")?,
        config_hash: get("config_hash")?.to_string(),
    };

    if header.n_total != records.len() as u64 {
        return Err(RecordsError::Parse(format!(
            "header declares {} rows, file holds {}",
            header.n_total,
            records.len()
        )));
    }
    let last_row = header.n_rows.saturating_sub(1);
    for (i, r) in records.iter().enumerate() {
        if r.z_index > last_row {
            return Err(RecordsError::Parse(format!(
                "row {i}: z_index {} beyond grid end {last_row}",
                r.z_index
            )));
        }
        if r.censored && r.z_index != last_row {
            return Err(RecordsError::Parse(format!(
                "row {i}: censored row must sit at the grid end"
            )));
        }
    }
    Ok((header, records))
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_header(n_total: u64) -> RecordsHeader {
        RecordsHeader {
            version: "0.1.0".into(),
            h: 0.5,
            n0: 50,
            eps_l: 1e-4,
            delta: 0.072_551_974_569_368_71,
            n_rows: 509,
            precision: PrecisionMode::Standard,
            seed: 42,
            series: 4,
            n_total,
            config_hash: "deadbeefdeadbeef".into(),
        }
    }

    fn sample_records() -> Vec<FirstZeroRecord> {
        vec![
            FirstZeroRecord { z_index: 0, censored: false },
            FirstZeroRecord { z_index: 77, censored: false },
            FirstZeroRecord { z_index: 508, censored: true },
            FirstZeroRecord { z_index: 3, censored: false },
        ]
    }

    #[test]
    fn roundtrip_preserves_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.txt");
        let header = sample_header(4);
        let records = sample_records();
        write_records(&path, &header, &records).unwrap();
        let (back_header, back_records) = read_records(&path).unwrap();
        assert_eq!(back_header, header);
        assert_eq!(back_records, records);
    }

    #[test]
    fn shortest_float_formatting_roundtrips_delta_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.txt");
        let mut header = sample_header(0);
        header.delta = std::f64::consts::PI / 43.1;
        header.eps_l = 3.0e-5;
        write_records(&path, &header, &[]).unwrap();
        let (back, _) = read_records(&path).unwrap();
        assert_eq!(back.delta.to_bits(), header.delta.to_bits());
        assert_eq!(back.eps_l.to_bits(), header.eps_l.to_bits());
    }

    #[test]
    fn rejects_foreign_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("other.txt");
        std::fs::write(&path, "# some-other-format v9\n0 1 0\n").unwrap();
        let err = read_records(&path).unwrap_err();
        assert!(matches!(err, RecordsError::Parse(_)));
    }

    #[test]
    fn rejects_row_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.txt");
        write_records(&path, &sample_header(4), &sample_records()).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        let trimmed = text.trim_end().rfind('\n').unwrap();
        text.truncate(trimmed + 1);
        std::fs::write(&path, text).unwrap();
        let err = read_records(&path).unwrap_err();
        assert!(err.to_string().contains("holds 3"), "{err}");
    }

    #[test]
    fn rejects_censored_row_off_the_grid_end() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.txt");
        let mut records = sample_records();
        records[2].z_index = 100;
        write_records(&path, &sample_header(4), &records).unwrap();
        let err = read_records(&path).unwrap_err();
        assert!(err.to_string().contains("grid end"), "{err}");
    }

    #[test]
    fn fnv1a_matches_reference_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }
}
