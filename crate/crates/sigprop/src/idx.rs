//! IDX image files (MNIST layout) and the squared-norm law of a data set.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use sigprop_core::{empirical_density, Grid, MixedDensity};

use crate::error::{Error, Result};

/// Magic for an unsigned-byte rank-3 tensor.
pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const HEADER_LEN: usize = 16;

/// Mean of `|x|²` over MNIST after scaling pixels to `[0, 1]`, from the
/// usual per-pixel mean 0.1307 and standard deviation 0.3081:
/// `784 (0.3081² + 0.1307²)`.
pub const MNIST_MEAN_SQ_NORM: f64 = 784.0 * (0.3081 * 0.3081 + 0.1307 * 0.1307);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn new(count: usize, rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Format("image dimensions must be positive".into()));
        }
        let expected = count * rows * cols;
        if pixels.len() != expected {
            return Err(Error::Truncated { expected, actual: pixels.len() });
        }
        Ok(Self { count, rows, cols, pixels })
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.pixels.len());
        out.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        for d in [self.count, self.rows, self.cols] {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }

    /// `Σ (pixel / scale)²` per image.
    pub fn squared_norms(&self, scale: f64) -> Result<Vec<f64>> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Config("pixel scale must be finite and positive".into()));
        }
        Ok((0..self.count)
            .map(|i| {
                self.image(i)
                    .iter()
                    .map(|&p| {
                        let x = p as f64 / scale;
                        x * x
                    })
                    .sum()
            })
            .collect())
    }
}

fn be_u32(b: &[u8]) -> usize {
    u32::from_be_bytes(b.try_into().expect("4 bytes")) as usize
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxImages> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    let magic = be_u32(&bytes[..4]) as u32;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!("IDX magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}")));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    let (count, rows, cols) = (be_u32(&bytes[4..8]), be_u32(&bytes[8..12]), be_u32(&bytes[12..16]));
    let payload = count
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    if bytes.len() - HEADER_LEN != payload {
        return Err(Error::Truncated { expected: HEADER_LEN + payload, actual: bytes.len() });
    }
    IdxImages::new(count, rows, cols, bytes[HEADER_LEN..].to_vec())
}

/// Reads an IDX file, decompressing it first if it is gzipped.
pub fn read_idx_file(path: &Path) -> Result<IdxImages> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        parse_idx(&out)
    } else {
        parse_idx(&raw)
    }
}

/// Empirical law of the per-image squared norms on `grid`.
pub fn squared_norm_density(imgs: &IdxImages, grid: &Grid, scale: f64) -> Result<MixedDensity> {
    if imgs.count == 0 {
        return Err(Error::Format("no images".into()));
    }
    Ok(empirical_density(&imgs.squared_norms(scale)?, grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 0, 0, 0, 255, 255, 255, 255]);
        b
    }

    #[test]
    fn parses_fixture() {
        let imgs = parse_idx(&fixture()).unwrap();
        assert_eq!((imgs.count, imgs.rows, imgs.cols), (2, 2, 2));
        assert_eq!(imgs.image(1), &[255; 4]);
        assert_eq!(imgs.to_bytes(), fixture());
        assert_eq!(imgs.squared_norms(255.0).unwrap(), vec![0.0, 4.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let b = fixture();
        assert!(matches!(parse_idx(&b[..16]), Err(Error::Truncated { .. })));
        assert!(matches!(parse_idx(&b[..19]), Err(Error::Truncated { .. })));
        assert!(matches!(parse_idx(&b[..7]), Err(Error::Truncated { .. })));
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(parse_idx(&extra), Err(Error::Truncated { .. })));
        let mut labels = b.clone();
        labels[3] = 1;
        assert!(matches!(parse_idx(&labels), Err(Error::Format(_))));
    }

    #[test]
    fn densities() {
        let g = Grid::new(8.0, 16).unwrap();
        let zero = IdxImages::new(1, 2, 2, vec![0; 4]).unwrap();
        let p = squared_norm_density(&zero, &g, 255.0).unwrap();
        assert_eq!(p.atom0(), 1.0);
        let ones = IdxImages::new(1, 2, 2, vec![255; 4]).unwrap();
        let p = squared_norm_density(&ones, &g, 255.0).unwrap();
        assert_eq!(p.atom0(), 0.0);
        assert!((p.mean() - 4.0).abs() <= g.step());
        assert!((p.total_mass() - 1.0).abs() < 1e-9);
        assert_eq!(p.leaked_mass(), 0.0);
        assert!(squared_norm_density(&ones, &g, 0.0).is_err());
    }

    #[test]
    fn reads_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs.idx.gz");
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&fixture()).unwrap();
        fs::write(&path, enc.finish().unwrap()).unwrap();
        assert_eq!(read_idx_file(&path).unwrap().count, 2);
        let missing = dir.path().join("nope.idx");
        let err = read_idx_file(&missing).unwrap_err().to_string();
        assert!(err.contains("nope.idx"));
    }

    proptest::proptest! {
        #[test]
        fn reserialize_round_trips(count in 0usize..5, rows in 1usize..6, cols in 1usize..6, seed in proptest::prelude::any::<u64>()) {
            let pixels: Vec<u8> = (0..count * rows * cols).map(|i| (seed.rotate_left(i as u32 % 64) >> 3) as u8).collect();
            let bytes = IdxImages::new(count, rows, cols, pixels).unwrap().to_bytes();
            proptest::prop_assert_eq!(parse_idx(&bytes).unwrap().to_bytes(), bytes);
        }
    }

    #[test]
    fn mnist_mean_value() {
        assert!((MNIST_MEAN_SQ_NORM - 87.8143504).abs() < 1e-6);
    }
}
