//! Model files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `PMCTSNET` |
//! | 4 | format version (`u32`) |
//! | 4 | config length `n` (`u32`) |
//! | n | network config as JSON |
//! | 32 | SHA-256 of the config JSON |
//! | 8 | parameter count (`u64`) |
//! | 4 per parameter | `f32` parameters in [`Network`] order |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::net::{ConvPolicy, ConvPolicyConfig, Network};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 8] = *b"PMCTSNET";
pub const MODEL_VERSION: u32 = 1;

/// Largest config blob a reader will accept.
const MAX_CONFIG_LEN: u32 = 1 << 20;

pub fn write_model<W: Write>(net: &ConvPolicy, mut out: W) -> Result<()> {
    let config = serde_json::to_vec(net.config())?;
    out.write_all(&MODEL_MAGIC)?;
    out.write_all(&MODEL_VERSION.to_le_bytes())?;
    out.write_all(&(config.len() as u32).to_le_bytes())?;
    out.write_all(&config)?;
    out.write_all(&Sha256::digest(&config))?;
    out.write_all(&(net.num_params() as u64).to_le_bytes())?;
    for p in net.params() {
        out.write_all(&p.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::ModelFormat(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(input: &mut R, what: &str) -> Result<u32> {
    let mut b = [0; 4];
    read_exact(input, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_model<R: Read>(mut input: R) -> Result<ConvPolicy> {
    let mut magic = [0; 8];
    read_exact(&mut input, &mut magic, "header")?;
    if magic != MODEL_MAGIC {
        return Err(Error::ModelFormat("not a model file (bad magic)".into()));
    }
    let version = read_u32(&mut input, "header")?;
    if version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!(
            "format version {version}, this build reads version {MODEL_VERSION}"
        )));
    }
    let len = read_u32(&mut input, "header")?;
    if len > MAX_CONFIG_LEN {
        return Err(Error::ModelFormat(format!("config length {len} is implausible")));
    }
    let mut config = vec![0; len as usize];
    read_exact(&mut input, &mut config, "config")?;
    let mut digest = [0; 32];
    read_exact(&mut input, &mut digest, "config digest")?;
    if Sha256::digest(&config).as_slice() != digest {
        return Err(Error::ModelFormat("config digest mismatch".into()));
    }
    let config: ConvPolicyConfig =
        serde_json::from_slice(&config).map_err(|e| Error::ModelFormat(format!("bad config: {e}")))?;
    let expected = config.layout()?.params;

    let mut count = [0; 8];
    read_exact(&mut input, &mut count, "parameter count")?;
    let count = u64::from_le_bytes(count);
    if count != expected as u64 {
        return Err(Error::ModelFormat(format!(
            "file holds {count} parameters, config implies {expected}"
        )));
    }
    let mut raw = vec![0; expected * 4];
    read_exact(&mut input, &mut raw, "parameters")?;
    let params = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if input.read(&mut [0])? != 0 {
        return Err(Error::ModelFormat("trailing bytes after parameters".into()));
    }
    Network::from_params(config, params)
}

pub fn save_model(net: &ConvPolicy, path: &Path) -> Result<()> {
    write_model(net, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: &Path) -> Result<ConvPolicy> {
    read_model(BufReader::new(File::open(path)?))
}

/// Loads a model and checks it was built for `height × width` boards with
/// `colors` colors.
pub fn load_model_for(path: &Path, height: usize, width: usize, colors: u8) -> Result<ConvPolicy> {
    let net = load_model(path)?;
    let c = net.config();
    if (c.height, c.width, c.colors) != (height, width, colors) {
        return Err(Error::Config(format!(
            "{} is a {}x{} model with {} colors; needed {}x{} with {} colors",
            path.display(),
            c.height,
            c.width,
            c.colors,
            height,
            width,
            colors
        )));
    }
    Ok(net)
}
