//! Internal binary cache for datasets.
//!
//! Layout: magic `SMSD`, u32 version, u32 N, u32 side, u32 C, labels as
//! u16, pixels as f64. Little-endian throughout. Round-trips are bit-exact.

use std::fs;
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};

use crate::bytes::TrackingReader;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SMSD";
const VERSION: u32 = 1;

pub fn dataset_to_bytes(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).expect("vec write");
    out.write_u32::<LittleEndian>(ds.len() as u32).expect("vec write");
    out.write_u32::<LittleEndian>(ds.side() as u32).expect("vec write");
    out.write_u32::<LittleEndian>(ds.class_count() as u32).expect("vec write");
    for &l in ds.labels() {
        out.write_u16::<LittleEndian>(l as u16).expect("vec write");
    }
    for &p in ds.images().data() {
        out.write_f64::<LittleEndian>(p).expect("vec write");
    }
    out
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = TrackingReader::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {:02x?}, expected \"SMSD\"", magic)));
    }
    let version = r.read_u32_le()?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {}", version)));
    }
    let n = r.read_u32_le()? as usize;
    let side = r.read_u32_le()? as usize;
    let class_count = r.read_u32_le()? as usize;
    let d = side * side;

    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(r.read_u16_le()? as usize);
    }
    let mut pixels = vec![0.0; n * d];
    for p in pixels.iter_mut() {
        *p = r.read_f64_le()?;
    }
    if r.remaining() != 0 {
        return Err(Error::format(r.offset, "trailing bytes after pixel payload"));
    }
    Dataset::new(Tensor::new(vec![n, d], pixels)?, labels, class_count, side)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_bytes(ds))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_bytes(&fs::read(path)?)
}
