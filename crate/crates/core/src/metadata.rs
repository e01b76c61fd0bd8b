use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance stamped as the first line of every file the toolkit writes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputMeta {
    pub config_digest: String,
    pub seed: u64,
}

impl OutputMeta {
    pub fn new(config_digest: impl Into<String>, seed: u64) -> Self {
        Self {
            config_digest: config_digest.into(),
            seed,
        }
    }

    /// Digest of the JSON serialization of `config`.
    pub fn for_config<T: Serialize>(config: &T, seed: u64) -> serde_json::Result<Self> {
        let bytes = serde_json::to_vec(config)?;
        Ok(Self::new(hex::encode(Sha256::digest(&bytes)), seed))
    }

    pub fn header_line(&self) -> String {
        format!(
            "# spdcforge config_sha256={} seed={}",
            self.config_digest, self.seed
        )
    }
}
