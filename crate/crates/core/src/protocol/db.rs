// Licensed under the Apache-2.0 license

//! On-disk verifier database: `<id>.bin` + `<id>.map` per image and a
//! `<id>.toml` metadata file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::memory::{Image, MapError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub image_id: String,
    pub sha256: String,
    pub last_update_counter: u64,
}

#[derive(Debug, Error)]
pub enum DbError {
    #[error("image {0} not found")]
    NotFound(String),
    #[error("image {0} does not match its recorded hash")]
    HashMismatch(String),
    #[error("metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct VerifierDb {
    dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl VerifierDb {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, DbError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(VerifierDb { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn meta_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.toml"))
    }

    pub fn register(&self, id: &str, image: &Image) -> Result<ImageMeta, DbError> {
        image.save(&self.dir.join(format!("{id}.bin")))?;
        let meta = ImageMeta { image_id: id.to_string(), sha256: sha256_hex(&image.bytes), last_update_counter: 0 };
        self.write_meta(&meta)?;
        Ok(meta)
    }

    fn write_meta(&self, meta: &ImageMeta) -> Result<(), DbError> {
        let text = toml::to_string(meta).map_err(|e| DbError::Meta(e.to_string()))?;
        std::fs::write(self.meta_path(&meta.image_id), text)?;
        Ok(())
    }

    pub fn meta(&self, id: &str) -> Result<ImageMeta, DbError> {
        let path = self.meta_path(id);
        if !path.exists() {
            return Err(DbError::NotFound(id.to_string()));
        }
        toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| DbError::Meta(e.to_string()))
    }

    /// Loads an expected image, checking it against the recorded hash.
    pub fn load(&self, id: &str) -> Result<(Image, ImageMeta), DbError> {
        let meta = self.meta(id)?;
        let image = Image::load(&self.dir.join(format!("{id}.bin")))?;
        if sha256_hex(&image.bytes) != meta.sha256 {
            return Err(DbError::HashMismatch(id.to_string()));
        }
        Ok((image, meta))
    }

    /// Replaces an image after an authorized update.
    pub fn record_update(&self, id: &str, image: &Image, counter: u64) -> Result<ImageMeta, DbError> {
        image.save(&self.dir.join(format!("{id}.bin")))?;
        let meta = ImageMeta { image_id: id.to_string(), sha256: sha256_hex(&image.bytes), last_update_counter: counter };
        self.write_meta(&meta)?;
        Ok(meta)
    }
}
