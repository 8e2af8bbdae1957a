//! Chain checkpoints: a small binary envelope (magic, schema version,
//! payload checksum) around a serialized [`ChainState`]. Round-trips are
//! byte-exact, including the random stream position, so a resumed chain
//! continues precisely where the saved one stopped.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::engine::state::ChainState;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LTHMMCKP";
const VERSION: u32 = 1;

pub fn checkpoint_bytes(state: &ChainState) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(state)?;
    let digest = Sha256::digest(&payload);
    let mut out = Vec::with_capacity(payload.len() + 44);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(digest.as_slice());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn checkpoint_save(state: &ChainState, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(state)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ChainState> {
    if bytes.len() < 44 || &bytes[..8] != MAGIC {
        return Err(Error::input("not a chain checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: VERSION,
        });
    }
    let stored = &bytes[12..44];
    let payload = &bytes[44..];
    let digest = Sha256::digest(payload);
    if digest.as_slice() != stored {
        return Err(Error::CheckpointChecksum);
    }
    Ok(serde_json::from_slice(payload)?)
}

pub fn checkpoint_load(path: &Path) -> Result<ChainState> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    checkpoint_from_bytes(&bytes)
}
