//! IDX image/label file support (the MNIST container format).
//!
//! Big-endian, magic `0x00 0x00 0x08 0x03` for image files (three
//! dimensions) and `0x00 0x00 0x08 0x01` for label files (one dimension).
//! Pixels are single bytes scaled to `[0,1]` on load. Format errors name the
//! byte offset at which parsing failed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxReader<R> {
    inner: R,
    path: PathBuf,
    offset: u64,
}

impl<R: Read> IdxReader<R> {
    fn new(inner: R, path: &Path) -> Self {
        IdxReader {
            inner,
            path: path.to_path_buf(),
            offset: 0,
        }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            offset: self.offset,
            message: message.into(),
        }
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(self.fail(format!("truncated file: needed {} more bytes", buf.len())))
            }
            Err(e) => Err(Error::io(&self.path, e)),
        }
    }

    fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_be_bytes(b))
    }
}

/// Parse an IDX image stream into `(rows, cols, raw pixel bytes per image)`.
pub fn read_images<R: Read>(reader: R, path: &Path) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let mut r = IdxReader::new(reader, path);
    let magic = r.read_u32()?;
    if magic != IMAGES_MAGIC {
        r.offset = 0;
        return Err(r.fail(format!(
            "bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = r.read_u32()? as usize;
    let rows = r.read_u32()? as usize;
    let cols = r.read_u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(r.fail(format!("degenerate image dimensions {rows}x{cols}")));
    }
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let mut buf = vec![0u8; rows * cols];
        r.read_exact(&mut buf)?;
        images.push(buf);
    }
    Ok((rows, cols, images))
}

/// Parse an IDX label stream into raw label bytes.
pub fn read_labels<R: Read>(reader: R, path: &Path) -> Result<Vec<u8>> {
    let mut r = IdxReader::new(reader, path);
    let magic = r.read_u32()?;
    if magic != LABELS_MAGIC {
        r.offset = 0;
        return Err(r.fail(format!(
            "bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let count = r.read_u32()? as usize;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels)?;
    Ok(labels)
}

/// Load a pair of IDX files as a dataset with pixels scaled to `[0,1]`.
/// `num_classes` is taken as `max label + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images_file =
        BufReader::new(File::open(images_path).map_err(|e| Error::io(images_path, e))?);
    let (rows, cols, raw_images) = read_images(images_file, images_path)?;
    let labels_file =
        BufReader::new(File::open(labels_path).map_err(|e| Error::io(labels_path, e))?);
    let raw_labels = read_labels(labels_file, labels_path)?;
    if raw_images.len() != raw_labels.len() {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: 4,
            message: format!(
                "label count {} does not match image count {}",
                raw_labels.len(),
                raw_images.len()
            ),
        });
    }
    let images = raw_images
        .into_iter()
        .map(|buf| {
            Tensor2D::new(
                rows,
                cols,
                buf.iter().map(|&b| b as f64 / 255.0).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(images, labels, num_classes)
}

/// Write images in IDX format; inverse of [`read_images`] for valid inputs.
pub fn write_images<W: Write>(
    mut writer: W,
    rows: usize,
    cols: usize,
    images: &[Vec<u8>],
    path: &Path,
) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    writer.write_all(&IMAGES_MAGIC.to_be_bytes()).map_err(io_err)?;
    writer
        .write_all(&(images.len() as u32).to_be_bytes())
        .map_err(io_err)?;
    writer.write_all(&(rows as u32).to_be_bytes()).map_err(io_err)?;
    writer.write_all(&(cols as u32).to_be_bytes()).map_err(io_err)?;
    for img in images {
        writer.write_all(img).map_err(io_err)?;
    }
    Ok(())
}

/// Write labels in IDX format; inverse of [`read_labels`].
pub fn write_labels<W: Write>(mut writer: W, labels: &[u8], path: &Path) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    writer.write_all(&LABELS_MAGIC.to_be_bytes()).map_err(io_err)?;
    writer
        .write_all(&(labels.len() as u32).to_be_bytes())
        .map_err(io_err)?;
    writer.write_all(labels).map_err(io_err)?;
    Ok(())
}

/// Write a dataset back out as an IDX pair, quantizing pixels to bytes.
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (rows, cols) = match ds.images.first() {
        Some(im) => (im.rows(), im.cols()),
        None => return Err(Error::Config("cannot write an empty dataset".into())),
    };
    let raw: Vec<Vec<u8>> = ds
        .images
        .iter()
        .map(|im| {
            im.values()
                .iter()
                .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect()
        })
        .collect();
    let f = File::create(images_path).map_err(|e| Error::io(images_path, e))?;
    write_images(BufWriter::new(f), rows, cols, &raw, images_path)?;
    let labels: Vec<u8> = ds.labels.iter().map(|&l| l as u8).collect();
    let f = File::create(labels_path).map_err(|e| Error::io(labels_path, e))?;
    write_labels(BufWriter::new(f), &labels, labels_path)
}
