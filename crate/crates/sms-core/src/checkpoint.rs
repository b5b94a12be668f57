//! Flat binary checkpoint format for MLPs.
//!
//! Layout: magic `SMSM`, version u32, layer count u32, then per layer
//! in-dim u32, out-dim u32, activation u8, row-major weights as f64, then
//! bias as f64. All integers and floats are little-endian. Loaders reject
//! unknown magic or version.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};

use crate::bytes::TrackingReader;
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Mlp};
use crate::rng::sha256_hex;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SMSM";
const VERSION: u32 = 1;

/// Serializes an MLP into checkpoint bytes.
pub fn mlp_to_bytes(mlp: &Mlp) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).expect("vec write");
    out.write_u32::<LittleEndian>(mlp.layers().len() as u32).expect("vec write");
    for layer in mlp.layers() {
        out.write_u32::<LittleEndian>(layer.in_dim() as u32).expect("vec write");
        out.write_u32::<LittleEndian>(layer.out_dim() as u32).expect("vec write");
        out.push(layer.activation().tag());
        for &w in layer.weights().data() {
            out.write_f64::<LittleEndian>(w).expect("vec write");
        }
        for &b in layer.bias().data() {
            out.write_f64::<LittleEndian>(b).expect("vec write");
        }
    }
    out
}

/// Parses checkpoint bytes back into an MLP.
pub fn mlp_from_bytes(bytes: &[u8]) -> Result<Mlp> {
    let mut r = TrackingReader::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {:02x?}, expected \"SMSM\"", magic)));
    }
    let version = r.read_u32_le()?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {}", version)));
    }
    let layer_count = r.read_u32_le()? as usize;
    if layer_count == 0 {
        return Err(Error::format(8, "layer count must be positive"));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let in_dim = r.read_u32_le()? as usize;
        let out_dim = r.read_u32_le()? as usize;
        let act = Activation::from_tag(r.read_u8()?)
            .map_err(|e| Error::format(r.offset, e.to_string()))?;
        let mut wdata = vec![0.0; in_dim * out_dim];
        for w in wdata.iter_mut() {
            *w = r.read_f64_le()?;
        }
        let mut bdata = vec![0.0; out_dim];
        for b in bdata.iter_mut() {
            *b = r.read_f64_le()?;
        }
        let weights = Tensor::new(vec![out_dim, in_dim], wdata)
            .map_err(|e| Error::format(r.offset, e.to_string()))?;
        layers.push(DenseLayer::from_parts(weights, Tensor::from_vec(bdata), act)?);
    }
    if r.remaining() != 0 {
        return Err(Error::format(r.offset, "trailing bytes after final layer"));
    }
    Mlp::from_layers(layers)
}

/// Writes an MLP checkpoint file.
pub fn save_mlp(mlp: &Mlp, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&mlp_to_bytes(mlp))?;
    w.flush()?;
    Ok(())
}

/// Reads an MLP checkpoint file.
pub fn load_mlp(path: &Path) -> Result<Mlp> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    mlp_from_bytes(&bytes)
}

/// SHA-256 of an MLP's checkpoint bytes, for integrity manifests and
/// shard-identity checks.
pub fn mlp_hash(mlp: &Mlp) -> String {
    sha256_hex(&mlp_to_bytes(mlp))
}
