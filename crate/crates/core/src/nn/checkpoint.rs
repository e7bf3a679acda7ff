//! Checkpoint files: one line of JSON header, then the parameters as a raw
//! little-endian `f64` block.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::layer::ArchConfig;
use super::network::Network;
use super::params::{ParamLayout, ParamVector};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    arch: ArchConfig,
    offsets: Vec<Option<ParamLayout>>,
    seed: u64,
    param_count: usize,
    block_bytes: u64,
}

pub fn write_checkpoint<W: Write>(net: &Network, mut out: W) -> Result<()> {
    let params = net.params();
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        arch: net.arch().clone(),
        offsets: params.layouts().to_vec(),
        seed: net.seed(),
        param_count: params.len(),
        block_bytes: params.byte_size(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    let mut block = Vec::with_capacity(params.len() * 8);
    for v in params.data() {
        block.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&block)?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut input: R) -> Result<Network> {
    let mut line = Vec::new();
    input.read_until(b'\n', &mut line)?;
    let header: Header = serde_json::from_slice(&line)?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.block_bytes != 8 * header.param_count as u64 {
        return Err(Error::Checkpoint(format!(
            "block size {} does not equal 8 * {}",
            header.block_bytes, header.param_count
        )));
    }
    let mut block = Vec::new();
    input.read_to_end(&mut block)?;
    if block.len() as u64 != header.block_bytes {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            header.block_bytes,
            block.len()
        )));
    }
    let data = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let params = ParamVector::from_parts(data, header.offsets)?;
    Network::from_params(&header.arch, params, header.seed)
}
