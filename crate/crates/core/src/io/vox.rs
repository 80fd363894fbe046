use std::path::Path;

use crate::error::{Error, Result};
use crate::field::GridField;
use crate::math::Vec3;
use crate::scalar::Real;

use super::write_bytes;

pub const MAGIC: &str = "CAPAVOX1";

/// Encodes `CAPAVOX1 nx ny nz ox oy oz spacing\n` followed by the samples as
/// little-endian `f32`, x fastest.
pub fn encode_vox<T: Real>(grid: &GridField<T>) -> Vec<u8> {
    let [nx, ny, nz] = grid.dims();
    let o = grid.origin();
    let header = format!(
        "{MAGIC} {nx} {ny} {nz} {} {} {} {}\n",
        o.x.to_f64_lossy(),
        o.y.to_f64_lossy(),
        o.z.to_f64_lossy(),
        grid.spacing().to_f64_lossy()
    );
    let mut out = header.into_bytes();
    out.reserve(grid.values().len() * 4);
    for v in grid.values() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

pub fn decode_vox<T: Real>(bytes: &[u8], path: &Path) -> Result<GridField<T>> {
    let err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| err(1, "missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| err(1, "header is not text".into()))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.first() != Some(&MAGIC) {
        return Err(err(1, format!("expected {MAGIC} magic")));
    }
    if tok.len() != 8 {
        return Err(err(1, format!("header needs 7 fields after the magic, got {}", tok.len() - 1)));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| err(1, format!("bad dimension {s:?}")));
    let num = |s: &str| {
        s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| err(1, format!("bad number {s:?}")))
    };
    let dims = [dim(tok[1])?, dim(tok[2])?, dim(tok[3])?];
    let origin = Vec3::from_f64(num(tok[4])?, num(tok[5])?, num(tok[6])?);
    let spacing = T::lit(num(tok[7])?);
    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| err(1, "grid dimensions overflow".into()))?;
    let payload = &bytes[nl + 1..];
    if Some(payload.len()) != count.checked_mul(4) {
        return Err(err(2, format!("payload has {} bytes, expected {} floats", payload.len(), count)));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    GridField::new(dims, origin, spacing, values)
}

pub fn read_vox<T: Real>(path: &Path) -> Result<GridField<T>> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    decode_vox(&bytes, path)
}

pub fn write_vox<T: Real>(grid: &GridField<T>, path: &Path) -> Result<()> {
    write_bytes(path, &encode_vox(grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_echoes_values_in_order() {
        let mut bytes = b"CAPAVOX1 2 2 2 0.5 -1 2 0.25\n".to_vec();
        for v in 0..8 {
            bytes.extend_from_slice(&(v as f32 * 0.125).to_le_bytes());
        }
        let g = decode_vox::<f64>(&bytes, Path::new("g.vox")).unwrap();
        assert_eq!(g.dims(), [2, 2, 2]);
        assert_eq!(g.origin(), Vec3::new(0.5, -1.0, 2.0));
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.value(1, 0, 0), 0.125);
        assert_eq!(g.value(0, 1, 0), 0.25);
        assert_eq!(g.value(0, 0, 1), 0.5);
        assert_eq!(encode_vox(&g), bytes);
    }

    #[test]
    fn header_echoes_parameters() {
        let g = GridField::new([3, 2, 2], Vec3::new(0.1, 0.2, 0.3), 0.1f64, vec![0.0; 12]).unwrap();
        let bytes = encode_vox(&g);
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(&bytes[..nl], b"CAPAVOX1 3 2 2 0.1 0.2 0.3 0.1");
        assert_eq!(bytes.len(), nl + 1 + 48);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let p = Path::new("bad.vox");
        assert!(decode_vox::<f64>(b"CAPAVOX2 2 2 2 0 0 0 1\n", p).is_err());
        assert!(decode_vox::<f64>(b"CAPAVOX1 2 2 2 0 0 0\n", p).is_err());
        assert!(decode_vox::<f64>(b"CAPAVOX1 2 2 2 0 0 0 1", p).is_err());
        let mut short = b"CAPAVOX1 2 2 2 0 0 0 1\n".to_vec();
        short.extend_from_slice(&[0; 28]);
        match decode_vox::<f64>(&short, p) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
