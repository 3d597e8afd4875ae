//! IDX image files (MNIST / Fashion-MNIST), normalization, pool subsampling,
//! and CSV import/export of pools.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the directory that holds dataset files.
pub const DATA_DIR_ENV: &str = "CRED_DATA_DIR";

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX data: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}

/// Raw images, row-major, one flattened image per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl RawImages {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let p = self.pixels_per_image();
        &self.pixels[i * p..(i + 1) * p]
    }

    /// Concatenate two image sets of the same geometry.
    pub fn concat(mut self, other: &RawImages) -> std::result::Result<RawImages, IdxError> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(IdxError::DimMismatch(format!(
                "{}x{} vs {}x{} images",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        self.pixels.extend_from_slice(&other.pixels);
        self.count += other.count;
        Ok(self)
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> std::result::Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            expected: offset + 4,
            actual: bytes.len(),
        })
}

pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<RawImages, IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic {
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let body = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| IdxError::DimMismatch("image dimensions overflow".into()))?;
    let expected = 16 + body;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IdxError::DimMismatch(format!(
            "{} trailing bytes after {count} images of {rows}x{cols}",
            bytes.len() - expected
        )));
    }
    Ok(RawImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<Vec<u8>, IdxError> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic {
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IdxError::DimMismatch(format!(
            "{} trailing bytes after {count} labels",
            bytes.len() - expected
        )));
    }
    Ok(bytes[8..].to_vec())
}

pub fn encode_idx_images(images: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn load_idx_images(path: &Path) -> Result<RawImages> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_idx_images(&bytes)?)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_idx_labels(&bytes)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Normalized inputs in `[0, 1]`, one row per image.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub source: String,
    pub split: Split,
    /// Row indices into the raw image set this dataset was cut from.
    pub origin: Vec<usize>,
}

impl Dataset {
    pub fn count(&self) -> usize {
        self.x.nrows()
    }

    fn from_rows(raw: &RawImages, rows: &[usize], source: &str, split: Split) -> Self {
        let p = raw.pixels_per_image();
        let mut x = DMatrix::zeros(rows.len(), p);
        for (r, &i) in rows.iter().enumerate() {
            for (c, &b) in raw.image(i).iter().enumerate() {
                x[(r, c)] = f64::from(b) / 255.0;
            }
        }
        debug_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            x,
            source: source.to_string(),
            split,
            origin: rows.to_vec(),
        }
    }

    /// Uniform subsample without replacement.
    pub fn subsample(&self, size: usize, seed: u64) -> Result<Dataset> {
        if size > self.count() {
            return Err(Error::InvalidArgument(format!(
                "requested {size} points from a dataset of {}",
                self.count()
            )));
        }
        let mut rng = rng_from_seed(seed);
        let picks = sample(&mut rng, self.count(), size).into_vec();
        let x = DMatrix::from_fn(size, self.x.ncols(), |r, c| self.x[(picks[r], c)]);
        Ok(Dataset {
            x,
            source: self.source.clone(),
            split: self.split,
            origin: picks.iter().map(|&i| self.origin[i]).collect(),
        })
    }
}

/// Divide by 255 and split at random into disjoint train and test sets.
pub fn normalize_and_split(
    raw: &RawImages,
    test_count: usize,
    source: &str,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if test_count >= raw.count {
        return Err(Error::InvalidArgument(format!(
            "test split of {test_count} leaves no training data out of {}",
            raw.count
        )));
    }
    let mut rng = rng_from_seed(seed);
    let perm = sample(&mut rng, raw.count, raw.count).into_vec();
    let (test_rows, train_rows) = perm.split_at(test_count);
    Ok((
        Dataset::from_rows(raw, train_rows, source, Split::Train),
        Dataset::from_rows(raw, test_rows, source, Split::Test),
    ))
}

pub fn subsample_pool(train: &Dataset, pool_size: usize, seed: u64) -> Result<Dataset> {
    train.subsample(pool_size, seed)
}

/// Standard file names of an IDX dataset directory.
#[derive(Debug, Clone)]
pub struct IdxFiles {
    pub train_images: PathBuf,
    pub test_images: PathBuf,
}

impl IdxFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
        }
    }

    pub fn exist(&self) -> bool {
        self.train_images.is_file() && self.test_images.is_file()
    }

    /// Load both files and concatenate them (train first).
    pub fn load_all(&self) -> Result<RawImages> {
        let train = load_idx_images(&self.train_images)?;
        let test = load_idx_images(&self.test_images)?;
        Ok(train.concat(&test)?)
    }
}

/// Write a pool as CSV: header `x0,..,x{d-1}[,y]`, one row per point.
pub fn write_pool_csv<W: std::io::Write>(writer: W, x: &DMatrix<f64>, y: Option<&[f64]>) -> Result<()> {
    if let Some(y) = y {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    if y.is_some() {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(y) = y {
            rec.push(y[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Inverse of [`write_pool_csv`].
pub fn read_pool_csv<R: std::io::Read>(reader: R) -> Result<(DMatrix<f64>, Option<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let has_y = headers.iter().last() == Some("y");
    let d = headers.len() - usize::from(has_y);
    let mut values = Vec::new();
    let mut ys = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad number {field:?} in pool CSV")))?;
            if j < d {
                values.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let n = values.len() / d.max(1);
    let x = DMatrix::from_row_slice(n, d, &values);
    Ok((x, has_y.then_some(ys)))
}
