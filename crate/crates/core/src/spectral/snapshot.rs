//! Binary field snapshots.
//!
//! Layout (little endian): magic `KSNS`, `u32` version, `u32` n_points,
//! `f64` box length, `u8` representation (0 real, 1 spectral), 11 zero bytes,
//! then row-major `f64` samples or interleaved `(re, im)` pairs.

use std::io::{Read, Write};

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use super::{Grid, Representation, ScalarField, SpectralError, Values};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"KSNS";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const SNAPSHOT_HEADER_LEN: usize = 32;

pub fn write_snapshot<W: Write>(mut w: W, field: &ScalarField) -> Result<(), SpectralError> {
    let grid = field.grid();
    let mut header = [0u8; SNAPSHOT_HEADER_LEN];
    header[0..4].copy_from_slice(SNAPSHOT_MAGIC);
    header[4..8].copy_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&(grid.n_points() as u32).to_le_bytes());
    header[12..20].copy_from_slice(&grid.box_length().to_le_bytes());
    header[20] = match field.representation() {
        Representation::Real => 0,
        Representation::Spectral => 1,
    };
    w.write_all(&header)?;
    let mut buf = Vec::new();
    match field.values() {
        Values::Real(v) => {
            buf.reserve(v.len() * 8);
            for x in v.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        Values::Spectral(v) => {
            buf.reserve(v.len() * 16);
            for z in v.iter() {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<ScalarField, SpectralError> {
    let mut header = [0u8; SNAPSHOT_HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != SNAPSHOT_MAGIC {
        return Err(SpectralError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(SpectralError::Format(format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let length = f64::from_le_bytes(header[12..20].try_into().unwrap());
    let grid = Grid::new(n, length)?;
    let f64_at = |b: &[u8], k: usize| f64::from_le_bytes(b[8 * k..8 * k + 8].try_into().unwrap());
    match header[20] {
        0 => {
            let mut body = vec![0u8; n * n * 8];
            r.read_exact(&mut body)?;
            let vals = Array2::from_shape_fn((n, n), |(i, j)| f64_at(&body, i * n + j));
            Ok(ScalarField::from_real(&grid, vals))
        }
        1 => {
            let mut body = vec![0u8; n * n * 16];
            r.read_exact(&mut body)?;
            let vals = Array2::from_shape_fn((n, n), |(i, j)| {
                let k = i * n + j;
                Complex64::new(f64_at(&body, 2 * k), f64_at(&body, 2 * k + 1))
            });
            Ok(ScalarField::from_spectral(&grid, vals))
        }
        t => Err(SpectralError::Format(format!("unknown representation tag {t}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_both_representations() {
        let g = Grid::new(8, 2.5).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| x * 0.3 - y * y);
        for field in [f.clone(), f.to_spectral()] {
            let mut bytes = Vec::new();
            write_snapshot(&mut bytes, &field).unwrap();
            let expected = SNAPSHOT_HEADER_LEN
                + 64 * if field.representation() == Representation::Real { 8 } else { 16 };
            assert_eq!(bytes.len(), expected);
            assert_eq!(&bytes[0..4], b"KSNS");
            assert!(bytes[21..32].iter().all(|&b| b == 0));
            let back = read_snapshot(bytes.as_slice()).unwrap();
            assert_eq!(back.representation(), field.representation());
            assert_eq!(back.grid().box_length(), 2.5);
            assert_eq!(back.real().as_ref(), field.real().as_ref());
        }
    }

    #[test]
    fn rejects_garbage() {
        let bytes = vec![0u8; 40];
        assert!(matches!(read_snapshot(bytes.as_slice()), Err(SpectralError::Format(_))));
    }
}
