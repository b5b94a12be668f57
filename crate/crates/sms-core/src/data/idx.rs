//! Parser for the IDX binary format used by MNIST-style files.
//!
//! Image files carry big-endian magic `0x00000803` and dimensions
//! `[count, rows, cols]`; label files carry magic `0x00000801` and `[count]`.
//! Pixels are `u8` and get scaled to `[0,1]`.

use std::fs;
use std::path::Path;

use crate::bytes::TrackingReader;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) const IMAGE_MAGIC: u32 = 0x0000_0803;
pub(crate) const LABEL_MAGIC: u32 = 0x0000_0801;
const CLASS_COUNT: usize = 10;

/// Loads an IDX image/label file pair into a dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = fs::read(images_path)?;
    let label_bytes = fs::read(labels_path)?;
    decode_idx(&image_bytes, &label_bytes)
}

/// Decodes IDX bytes directly; exposed for fuzzing against a reference
/// decoder without touching the filesystem.
pub(crate) fn decode_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset> {
    let mut ir = TrackingReader::new(image_bytes);
    let magic = ir.read_u32_be()?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            0,
            format!("image magic 0x{:08x}, expected 0x{:08x}", magic, IMAGE_MAGIC),
        ));
    }
    let count = ir.read_u32_be()? as usize;
    let rows = ir.read_u32_be()? as usize;
    let cols = ir.read_u32_be()? as usize;
    if rows != cols {
        return Err(Error::format(
            8,
            format!("non-square images {}x{} are not supported", rows, cols),
        ));
    }
    if rows == 0 {
        return Err(Error::format(8, "zero image side length"));
    }
    let d = rows * cols;
    if ir.remaining() != count * d {
        return Err(Error::format(
            ir.offset,
            format!(
                "image payload is {} bytes, header implies {}",
                ir.remaining(),
                count * d
            ),
        ));
    }

    let mut lr = TrackingReader::new(label_bytes);
    let magic = lr.read_u32_be()?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            0,
            format!("label magic 0x{:08x}, expected 0x{:08x}", magic, LABEL_MAGIC),
        ));
    }
    let label_count = lr.read_u32_be()? as usize;
    if label_count != count {
        return Err(Error::format(
            4,
            format!("{} labels for {} images", label_count, count),
        ));
    }
    if lr.remaining() != count {
        return Err(Error::format(
            lr.offset,
            format!("label payload is {} bytes, header implies {}", lr.remaining(), count),
        ));
    }

    let mut pixels = vec![0.0; count * d];
    for p in pixels.iter_mut() {
        *p = ir.read_u8()? as f64 / 255.0;
    }
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let l = lr.read_u8()? as usize;
        if l >= CLASS_COUNT {
            return Err(Error::format(
                lr.offset - 1,
                format!("label {} at sample {} exceeds class count {}", l, i, CLASS_COUNT),
            ));
        }
        labels.push(l);
    }

    Dataset::new(Tensor::new(vec![count, d], pixels)?, labels, CLASS_COUNT, rows)
}
