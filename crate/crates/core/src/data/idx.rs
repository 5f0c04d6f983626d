//! IDX binary files: big-endian `u32` magic, big-endian `u32` dimension sizes,
//! then an unsigned-byte payload.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, image after image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let k = self.pixels_per_image();
        &self.pixels[i * k..(i + 1) * k]
    }

    /// Flattens the selected images into rows of a matrix, each pixel
    /// multiplied by `scale`.
    pub fn to_matrix(&self, indices: &[usize], scale: f64) -> DMatrix<f64> {
        let k = self.pixels_per_image();
        DMatrix::from_row_iterator(
            indices.len(),
            k,
            indices
                .iter()
                .flat_map(|&i| self.image(i).iter().map(move |&p| f64::from(p) * scale)),
        )
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::IdxFormat {
            path: path.to_path_buf(),
            offset: bytes.len(),
            reason: format!("file ends before the {what} field"),
        })
}

fn check_magic(bytes: &[u8], want: u32, path: &Path) -> Result<()> {
    let magic = be_u32(bytes, 0, path, "magic number")?;
    if magic != want {
        return Err(Error::IdxFormat {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("magic number {magic:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, expected: usize, path: &Path) -> Result<()> {
    let have = bytes.len() - header;
    if have < expected {
        return Err(Error::IdxFormat {
            path: path.to_path_buf(),
            offset: bytes.len(),
            reason: format!("payload truncated: {have} of {expected} bytes present"),
        });
    }
    if have > expected {
        return Err(Error::IdxFormat {
            path: path.to_path_buf(),
            offset: header + expected,
            reason: format!("{} trailing bytes after the payload", have - expected),
        });
    }
    Ok(())
}

/// Parses an in-memory image file. `path` is used only for error messages.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    check_magic(bytes, IMAGE_MAGIC, path)?;
    let n = be_u32(bytes, 4, path, "image count")? as usize;
    let rows = be_u32(bytes, 8, path, "row count")? as usize;
    let cols = be_u32(bytes, 12, path, "column count")? as usize;
    let expected = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::IdxFormat {
            path: path.to_path_buf(),
            offset: 4,
            reason: "image dimensions overflow".into(),
        })?;
    check_payload(bytes, 16, expected, path)?;
    Ok(IdxImages {
        n,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC, path)?;
    let n = be_u32(bytes, 4, path, "label count")? as usize;
    check_payload(bytes, 8, n, path)?;
    Ok(bytes[8..].to_vec())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    parse_idx_images(&read(path)?, path)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_idx_labels(&read(path)?, path)
}

fn dim(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_be_bytes)
        .map_err(|_| Error::invalid(format!("{what} {v} does not fit in an IDX header")))
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &IdxImages) -> Result<()> {
    if images.pixels.len() != images.n * images.pixels_per_image() {
        return Err(Error::DimensionMismatch {
            context: "IDX image payload",
            expected: images.n * images.pixels_per_image(),
            actual: images.pixels.len(),
        });
    }
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&dim(images.n, "image count")?);
    out.extend_from_slice(&dim(images.rows, "row count")?);
    out.extend_from_slice(&dim(images.cols, "column count")?);
    out.extend_from_slice(&images.pixels);
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&dim(labels.len(), "label count")?);
    out.extend_from_slice(labels);
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
