//! CSV and JSON writers with deterministic, round-trippable formatting.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reruns
//! produce byte-identical files and readers recover the exact binary values.

use crate::error::Result;
use serde::Serialize;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

/// Format one float; shortest representation that parses back exactly.
pub fn fmt(x: f64) -> String {
    if x == 0.0 {
        // Avoid the "-0" spelling so equal values compare byte-equal.
        "0".to_string()
    } else {
        format!("{x}")
    }
}

/// Join a row of floats with commas.
pub fn row(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{}", fmt(*v));
    }
    s
}

/// Write a CSV file: optional `# comment` lines, a header line, then rows.
pub fn write_csv<P: AsRef<Path>>(
    path: P,
    comments: &[String],
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<()> {
    let mut buf = String::new();
    for c in comments {
        let _ = writeln!(buf, "# {c}");
    }
    let _ = writeln!(buf, "{header}");
    for r in rows {
        let _ = writeln!(buf, "{r}");
    }
    atomic_write(path, buf.as_bytes())
}

/// Write pretty-printed JSON with a trailing newline.
pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    atomic_write(path, s.as_bytes())
}

/// Write little-endian f64s preceded by no header; layout is documented by a
/// JSON sidecar written separately.
pub fn write_f64_binary<P: AsRef<Path>>(path: P, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * data.len());
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

fn atomic_write<P: AsRef<Path>>(path: P, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for &x in &[
            0.1,
            1.0 / 3.0,
            -2.5e-17,
            6.02e23,
            f64::MIN_POSITIVE,
            123456.789,
        ] {
            let s = fmt(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
        assert_eq!(fmt(-0.0), "0");
    }

    #[test]
    fn csv_layout() {
        let dir = std::env::temp_dir().join("blowup-export-test");
        let path = dir.join("t.csv");
        write_csv(
            &path,
            &["meta".to_string()],
            "a,b",
            vec![row(&[1.0, 2.5]), row(&[-3.0, 0.0])],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# meta\na,b\n1,2.5\n-3,0\n");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn binary_round_trip() {
        let dir = std::env::temp_dir().join("blowup-export-bin");
        let path = dir.join("t.bin");
        let data = vec![1.5, -0.25, 1e-300];
        write_f64_binary(&path, &data).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let back: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(back, data);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
