//! Content-addressed image storage on the local filesystem.
//!
//! A blob with SHA-256 `h` lives at `<root>/<h[0..2]>/<h>`. Writes go to a
//! temporary file first and are renamed into place, so a reader never sees
//! a partial blob and storing the same bytes twice is a no-op.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use patchswipe_core::ingest::ContentHash;

#[derive(Debug, Clone)]
pub struct BlobStore {
    root: PathBuf,
}

impl BlobStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, hash: &ContentHash) -> PathBuf {
        let hex = hash.to_hex();
        self.root.join(&hex[..2]).join(hex)
    }

    pub fn contains(&self, hash: &ContentHash) -> bool {
        self.path_of(hash).is_file()
    }

    /// Stores `bytes` under `hash`. The caller vouches that `hash` is the
    /// digest of `bytes`; [`BlobStore::put`] computes it instead.
    pub fn put_with_hash(&self, hash: &ContentHash, bytes: &[u8]) -> io::Result<()> {
        let dest = self.path_of(hash);
        if dest.is_file() {
            return Ok(());
        }
        let dir = dest.parent().expect("blob path has a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{}.{}", hash.to_hex(), uuid::Uuid::new_v4().simple()));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        drop(f);
        fs::rename(&tmp, &dest).inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })
    }

    pub fn put(&self, bytes: &[u8]) -> io::Result<ContentHash> {
        let hash = ContentHash::of(bytes);
        self.put_with_hash(&hash, bytes)?;
        Ok(hash)
    }

    pub fn get(&self, hash: &ContentHash) -> io::Result<Vec<u8>> {
        fs::read(self.path_of(hash))
    }
}
