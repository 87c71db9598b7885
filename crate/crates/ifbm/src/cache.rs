//! Binary on-disk cache for coefficient tables.
//!
//! Rebuilding a table is cheap for short grids but grows quadratically, so
//! the CLI can persist tables between runs. The format is a fixed
//! little-endian layout with an FNV-1a checksum; see docs/FORMATS.md for the
//! byte-exact description. Loads never trust the file: magic, version,
//! declared sizes and the checksum are all verified before any field is
//! interpreted.

use crate::model::Hurst;
use crate::toeplitz::{CoeffTable, PackedLower, PrecisionMode, StabilityReport};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"IFBMCOEF";
const FORMAT_VERSION: u32 = 1;
/// Fixed header length in bytes, up to and excluding the flagged-row list.
const HEADER_LEN: usize = 84;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a coefficient cache file (bad magic)")]
    BadMagic,
    #[error("unsupported cache format version {0}")]
    UnsupportedVersion(u32),
    #[error("cache file corrupt: {0}")]
    Corrupt(String),
}

/// Grid provenance stored alongside the table so a cache hit can be matched
/// against the requested configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CacheKey {
    pub h: Hurst,
    pub n0: u32,
    pub eps_l: f64,
}

/// Canonical file name for a table under the given key, unique per
/// (H, n0, eps_l, precision).
pub fn cache_file_name(key: &CacheKey, precision: PrecisionMode) -> String {
    format!(
        "ifbm-coeffs-h{:.4}-n{}-epsl{:e}-{}.bin",
        key.h.get(),
        key.n0,
        key.eps_l,
        precision
    )
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Serializes the table and writes it atomically (temp file + rename).
pub fn save(path: &Path, table: &CoeffTable, key: &CacheKey) -> Result<(), CacheError> {
    let n = table.n_rows();
    let d = &table.diagnostics;
    let payload = table.rows.data();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * d.flagged_rows.len() + 8 * payload.len() + 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let mode_tag: u32 = match table.precision {
        PrecisionMode::Standard => 0,
        PrecisionMode::Extended => 1,
    };
    buf.extend_from_slice(&mode_tag.to_le_bytes());
    buf.extend_from_slice(&key.h.get().to_le_bytes());
    buf.extend_from_slice(&table.delta.to_le_bytes());
    buf.extend_from_slice(&key.eps_l.to_le_bytes());
    buf.extend_from_slice(&key.n0.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&table.ops.to_le_bytes());
    buf.extend_from_slice(&d.oscillation_score.to_le_bytes());
    buf.extend_from_slice(&d.max_tail_coefficient.to_le_bytes());
    buf.extend_from_slice(&d.tail_band_start.to_le_bytes());
    buf.extend_from_slice(&(d.flagged_rows.len() as u32).to_le_bytes());
    debug_assert_eq!(buf.len(), HEADER_LEN);
    for &row in &d.flagged_rows {
        buf.extend_from_slice(&row.to_le_bytes());
    }
    for &a in payload {
        buf.extend_from_slice(&a.to_le_bytes());
    }
    let checksum = fnv1a(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());

    let tmp = path.with_extension("bin.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_u32(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().unwrap())
}

fn read_u64(buf: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

fn read_f64(buf: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

/// Loads and fully validates a table written by `save`.
pub fn load(path: &Path) -> Result<(CoeffTable, CacheKey), CacheError> {
    let buf = std::fs::read(path)?;
    if buf.len() < HEADER_LEN + 8 {
        return Err(CacheError::Corrupt("file shorter than header".into()));
    }
    if &buf[0..8] != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = read_u32(&buf, 8);
    if version != FORMAT_VERSION {
        return Err(CacheError::UnsupportedVersion(version));
    }
    let body = &buf[..buf.len() - 8];
    let stored = read_u64(&buf, buf.len() - 8);
    let actual = fnv1a(body);
    if stored != actual {
        return Err(CacheError::Corrupt(format!(
            "checksum mismatch (stored {stored:#018x}, computed {actual:#018x})"
        )));
    }

    let precision = match read_u32(&buf, 12) {
        0 => PrecisionMode::Standard,
        1 => PrecisionMode::Extended,
        other => return Err(CacheError::Corrupt(format!("unknown precision tag {other}"))),
    };
    let h = Hurst::new(read_f64(&buf, 16))
        .map_err(|e| CacheError::Corrupt(format!("stored H invalid: {e}")))?;
    let delta = read_f64(&buf, 24);
    let eps_l = read_f64(&buf, 32);
    if !(delta.is_finite() && delta > 0.0) {
        return Err(CacheError::Corrupt(format!("stored delta invalid: {delta}")));
    }
    let n0 = read_u32(&buf, 40);
    let n = read_u32(&buf, 44) as usize;
    let ops = read_u64(&buf, 48);
    let oscillation_score = read_f64(&buf, 56);
    let max_tail_coefficient = read_f64(&buf, 64);
    let tail_band_start = read_f64(&buf, 72);
    let n_flagged = read_u32(&buf, 80) as usize;

    let payload_len = n * (n + 1) / 2;
    let expected = HEADER_LEN + 4 * n_flagged + 8 * payload_len + 8;
    if buf.len() != expected {
        return Err(CacheError::Corrupt(format!(
            "length {} does not match declared contents ({expected})",
            buf.len()
        )));
    }
    let mut at = HEADER_LEN;
    let mut flagged_rows = Vec::with_capacity(n_flagged);
    for _ in 0..n_flagged {
        flagged_rows.push(read_u32(&buf, at));
        at += 4;
    }
    let mut rows = PackedLower::zeroed(n);
    {
        let data = rows.data_mut();
        for slot in data.iter_mut() {
            *slot = read_f64(&buf, at);
            at += 8;
        }
    }
    let table = CoeffTable {
        rows,
        delta,
        precision,
        diagnostics: StabilityReport {
            oscillation_score,
            max_tail_coefficient,
            flagged_rows,
            tail_band_start,
        },
        ops,
    };
    Ok((table, CacheKey { h, n0, eps_l }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_grid;
    use crate::toeplitz::{schur_coefficients, CorrSamples};

    fn sample_table() -> (CoeffTable, CacheKey) {
        let h = Hurst::new(0.7).unwrap();
        let grid = make_grid(h, 10, 1e-2).unwrap();
        let corr = CorrSamples::from_grid(&grid);
        let table = schur_coefficients(&corr, PrecisionMode::Standard).unwrap();
        (
            table,
            CacheKey {
                h,
                n0: 10,
                eps_l: 1e-2,
            },
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (table, key) = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(cache_file_name(&key, table.precision));
        save(&path, &table, &key).unwrap();
        let (back, back_key) = load(&path).unwrap();
        assert_eq!(back_key, key);
        assert_eq!(back.precision, table.precision);
        assert_eq!(back.delta.to_bits(), table.delta.to_bits());
        assert_eq!(back.ops, table.ops);
        assert_eq!(back.n_rows(), table.n_rows());
        for (a, b) in back.rows.data().iter().zip(table.rows.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(
            back.diagnostics.oscillation_score.to_bits(),
            table.diagnostics.oscillation_score.to_bits()
        );
        assert_eq!(back.diagnostics.flagged_rows, table.diagnostics.flagged_rows);
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let (table, key) = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        save(&path, &table, &key).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load(&path), Err(CacheError::Corrupt(_))));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let (table, key) = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        save(&path, &table, &key).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 17]).unwrap();
        assert!(matches!(load(&path), Err(CacheError::Corrupt(_))));
    }

    #[test]
    fn foreign_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        std::fs::write(&path, b"definitely not a coefficient table, but long enough to pass the size check padding padding padding").unwrap();
        assert!(matches!(load(&path), Err(CacheError::BadMagic)));
    }

    #[test]
    fn future_version_is_rejected() {
        let (table, key) = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        save(&path, &table, &key).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99;
        // keep the checksum consistent so versioning, not corruption, is hit
        let body_len = bytes.len() - 8;
        let sum = fnv1a(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&sum.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load(&path), Err(CacheError::UnsupportedVersion(99))));
    }

    #[test]
    fn file_names_separate_configurations() {
        let k1 = CacheKey { h: Hurst::new(0.5).unwrap(), n0: 50, eps_l: 1e-4 };
        let k2 = CacheKey { h: Hurst::new(0.55).unwrap(), n0: 50, eps_l: 1e-4 };
        let k3 = CacheKey { h: Hurst::new(0.5).unwrap(), n0: 100, eps_l: 1e-4 };
        let k4 = CacheKey { h: Hurst::new(0.5).unwrap(), n0: 50, eps_l: 1e-5 };
        let names: Vec<String> = [k1, k2, k3, k4]
            .iter()
            .map(|k| cache_file_name(k, PrecisionMode::Standard))
            .chain(std::iter::once(cache_file_name(&k1, PrecisionMode::Extended)))
            .collect();
        for i in 0..names.len() {
            for j in 0..i {
                assert_ne!(names[i], names[j]);
            }
        }
    }
}
