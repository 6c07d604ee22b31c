use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::api::SessionRecord;

/// One JSON document per session under a data directory.
#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Serialized document exactly as written by [`Store::save`].
    pub fn encode(record: &SessionRecord) -> io::Result<Vec<u8>> {
        serde_json::to_vec_pretty(record).map_err(io::Error::other)
    }

    /// Writes to a sibling temporary file, syncs it and renames it over the
    /// document, so readers see either the old or the new version.
    pub fn save(&self, record: &SessionRecord) -> io::Result<()> {
        let bytes = Self::encode(record)?;
        let tmp = self.dir.join(format!(".{}.json.tmp", record.id));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path(&record.id))
    }

    pub fn load(&self, id: &str) -> io::Result<Option<SessionRecord>> {
        match fs::read(self.path(id)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}
