//! `.cqf` files: one line of JSON header, a newline, then the payload as
//! little-endian `f64` (real values, or interleaved real/imaginary pairs).
//!
//! ```text
//! {"format":"cqf","version":1,"kind":"radial","r_max":40.0,"n":4001,"spacing":"uniform","count":4001}\n
//! <count × 8 bytes>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ComplexField, NodeSpacing, RadialProfile};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "cqf";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "cqf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    Radial { r_max: f64, n: usize, spacing: NodeSpacing },
    Cartesian { length: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub grid: Grid,
    /// Number of `f64` values in the payload.
    pub count: usize,
}

fn encode(grid: Grid, payload: impl Iterator<Item = f64>, count: usize) -> Result<Vec<u8>> {
    let header = Header { format: FORMAT_TAG.into(), version: FORMAT_VERSION, grid, count };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(8 * count);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn decode(bytes: &[u8]) -> Result<(Header, Vec<f64>)> {
    let mut reader = BufReader::new(bytes);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header terminator".into()));
    }
    let header: Header = serde_json::from_slice(&line[..line.len() - 1])?;
    if header.format != FORMAT_TAG {
        return Err(Error::Format(format!("unexpected format tag {:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != 8 * header.count {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header promises {}",
            payload.len(),
            8 * header.count
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight")))
        .collect();
    Ok((header, values))
}

pub fn radial_to_bytes(u: &RadialProfile) -> Result<Vec<u8>> {
    let grid = Grid::Radial { r_max: u.r_max(), n: u.len(), spacing: u.spacing() };
    encode(grid, u.values().iter().copied(), u.len())
}

pub fn radial_from_bytes(bytes: &[u8]) -> Result<RadialProfile> {
    match decode(bytes)? {
        (Header { grid: Grid::Radial { r_max, n, .. }, .. }, values) => {
            if values.len() != n {
                return Err(Error::Format(format!("radial payload has {} values, n = {n}", values.len())));
            }
            RadialProfile::new(r_max, values)
        }
        _ => Err(Error::Format("expected a radial profile".into())),
    }
}

pub fn field_to_bytes(u: &ComplexField) -> Result<Vec<u8>> {
    let grid = Grid::Cartesian { length: u.length(), n: u.n() };
    let payload = u.values().iter().flat_map(|z| [z.re, z.im]);
    encode(grid, payload, 2 * u.values().len())
}

pub fn field_from_bytes(bytes: &[u8]) -> Result<ComplexField> {
    match decode(bytes)? {
        (Header { grid: Grid::Cartesian { length, n }, .. }, values) => {
            if values.len() != 2 * n * n * n {
                return Err(Error::Format(format!("cartesian payload has {} values, n = {n}", values.len())));
            }
            let zs = values.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
            ComplexField::new(length, n, zs)
        }
        _ => Err(Error::Format("expected a cartesian field".into())),
    }
}

/// Write `bytes` to `path` through a sibling temporary file and a rename, so
/// concurrent readers only ever observe complete files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_radial(path: &Path, u: &RadialProfile) -> Result<()> {
    write_atomic(path, &radial_to_bytes(u)?)
}

pub fn read_radial(path: &Path) -> Result<RadialProfile> {
    radial_from_bytes(&fs::read(path)?)
}

pub fn write_field(path: &Path, u: &ComplexField) -> Result<()> {
    write_atomic(path, &field_to_bytes(u)?)
}

pub fn read_field(path: &Path) -> Result<ComplexField> {
    field_from_bytes(&fs::read(path)?)
}

pub fn read_header(path: &Path) -> Result<Header> {
    let mut line = Vec::new();
    BufReader::new(fs::File::open(path)?).read_until(b'\n', &mut line)?;
    let trimmed = line.strip_suffix(b"\n").ok_or_else(|| Error::Format("missing header terminator".into()))?;
    Ok(serde_json::from_slice(trimmed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn radial_round_trip_is_bit_exact(values in prop::collection::vec(-1e6f64..1e6, 16..80), r_max in 0.1f64..100.0) {
            let u = RadialProfile::new(r_max, values).unwrap();
            let back = radial_from_bytes(&radial_to_bytes(&u).unwrap()).unwrap();
            prop_assert_eq!(back.r_max().to_bits(), u.r_max().to_bits());
            for (a, b) in back.values().iter().zip(u.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn field_round_trip_is_bit_exact(seed in 0u64..1000, length in 0.5f64..50.0) {
            let u = ComplexField::from_fn(length, 4, |x, y, z| {
                Complex64::new((x + seed as f64).sin() * y, z.cos() / 3.0)
            }).unwrap();
            let back = field_from_bytes(&field_to_bytes(&u).unwrap()).unwrap();
            prop_assert_eq!(back, u);
        }
    }

    #[test]
    fn header_is_a_json_line() {
        let u = RadialProfile::zeros(2.0, 16).unwrap();
        let bytes = radial_to_bytes(&u).unwrap();
        let line_end = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..line_end]).unwrap();
        assert_eq!(header["format"], "cqf");
        assert_eq!(header["version"], 1);
        assert_eq!(header["kind"], "radial");
        assert_eq!(header["count"], 16);
        assert_eq!(bytes.len(), line_end + 1 + 16 * 8);
    }

    #[test]
    fn rejects_truncated_and_mismatched_files() {
        let u = RadialProfile::zeros(2.0, 16).unwrap();
        let bytes = radial_to_bytes(&u).unwrap();
        assert!(matches!(radial_from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(field_from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn atomic_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("g.cqf");
        let u = ComplexField::from_fn(3.0, 4, |x, _, _| Complex64::new(x, -x)).unwrap();
        write_field(&path, &u).unwrap();
        assert_eq!(read_field(&path).unwrap(), u);
        assert!(matches!(read_header(&path).unwrap().grid, Grid::Cartesian { n: 4, .. }));
    }
}
