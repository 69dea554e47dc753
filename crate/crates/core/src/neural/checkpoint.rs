use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::Validate;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "msdeeponet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T> {
    format: &'a str,
    version: u32,
    model: &'a T,
}

#[derive(Deserialize)]
struct Owned<T> {
    format: String,
    version: u32,
    model: T,
}

/// Versioned JSON; floats are written with enough digits to round-trip exactly.
pub fn to_json<T: Serialize>(model: &T) -> Result<String> {
    serde_json::to_string(&Envelope {
        format: CHECKPOINT_FORMAT,
        version: CHECKPOINT_VERSION,
        model,
    })
    .map_err(|e| Error::Parse(e.to_string()))
}

pub fn from_json<T: DeserializeOwned + Validate>(text: &str) -> Result<T> {
    let owned: Owned<T> = serde_json::from_str(text).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
    if owned.format != CHECKPOINT_FORMAT {
        return Err(Error::Parse(format!("unexpected checkpoint format '{}'", owned.format)));
    }
    if owned.version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            owned.version
        )));
    }
    owned.model.validate()?;
    Ok(owned.model)
}
