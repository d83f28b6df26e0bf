//! Small file-format helpers shared by exports: float formatting with
//! 17 significant digits (round-trip exact for f64), comma-separated CSV
//! with LF line endings, and content hashing for reproducibility sidecars.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// 17 significant digits: enough to reproduce any f64 bit pattern exactly
/// on read-back.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Write rows of floats under a header. Comma separators, '.' decimal,
/// LF endings, 17 significant digits.
pub fn write_csv<I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator,
    I::Item: AsRef<[f64]>,
{
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    for row in rows {
        let row = row.as_ref();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                w.write_all(b",")?;
            }
            w.write_all(fmt_f64(*v).as_bytes())?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV written by [`write_csv`]. The header is returned verbatim;
/// every following line must parse as floats of equal arity.
pub fn read_csv(path: &Path) -> Result<(String, Vec<Vec<f64>>)> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::config(format!("{}: empty csv", path.display())))??;
    let mut rows = Vec::new();
    let mut arity = None;
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            Error::config(format!("{}: bad csv number: {e}", path.display()))
        })?;
        match arity {
            None => arity = Some(row.len()),
            Some(a) if a != row.len() => {
                return Err(Error::config(format!(
                    "{}: ragged csv ({} vs {a} fields)",
                    path.display(),
                    row.len()
                )));
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_roundtrip_exactly_through_csv() {
        let dir = std::env::temp_dir().join(format!("io_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        let rows = vec![
            vec![std::f64::consts::PI, 1.0 / 3.0],
            vec![-1e-300, 6.02214076e23],
        ];
        write_csv(&path, "a,b", rows.clone()).unwrap();
        let (header, got) = read_csv(&path).unwrap();
        assert_eq!(header, "a,b");
        assert_eq!(got, rows, "17 significant digits preserve every bit");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn hash_is_stable_and_hex() {
        let h = sha256_hex(b"abc");
        assert_eq!(
            h,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
