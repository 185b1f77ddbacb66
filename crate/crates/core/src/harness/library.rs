use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FittedModel, ModelKind};
use crate::fleet::{assign, Clustering, HomeMetadata};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LibraryKey {
    pub cluster: usize,
    pub season: String,
    pub kind: ModelKind,
}

impl std::fmt::Display for LibraryKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "cluster {} / {} / {}",
            self.cluster, self.season, self.kind
        )
    }
}

/// Directory of pre-trained models, one JSON file per
/// `cluster-<c>/<season>/<kind>.json`.
#[derive(Debug, Clone)]
pub struct ModelLibrary {
    root: PathBuf,
}

fn valid_season(season: &str) -> Result<()> {
    let ok = !season.is_empty()
        && season
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "season name {season:?} must be non-empty ASCII alphanumerics, '-' or '_'"
        )))
    }
}

impl ModelLibrary {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(ModelLibrary { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, key: &LibraryKey) -> Result<PathBuf> {
        valid_season(&key.season)?;
        Ok(self
            .root
            .join(format!("cluster-{}", key.cluster))
            .join(&key.season)
            .join(format!("{}.json", key.kind)))
    }

    /// Stores `bytes`, which must parse as a model of the key's kind.
    pub fn put_bytes(&self, key: &LibraryKey, bytes: &[u8]) -> Result<PathBuf> {
        let model: FittedModel = serde_json::from_slice(bytes)?;
        if model.kind() != key.kind {
            return Err(Error::InvalidParameter(format!(
                "model of kind {} stored under {key}",
                model.kind()
            )));
        }
        let path = self.path_of(key)?;
        std::fs::create_dir_all(path.parent().expect("nested path"))?;
        std::fs::write(&path, bytes)?;
        Ok(path)
    }

    pub fn put(&self, key: &LibraryKey, model: &FittedModel) -> Result<PathBuf> {
        self.put_bytes(key, serde_json::to_string_pretty(model)?.as_bytes())
    }

    pub fn get_bytes(&self, key: &LibraryKey) -> Result<Vec<u8>> {
        let path = self.path_of(key)?;
        match std::fs::read(&path) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(Error::NotFound(format!("no model for {key}")))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn get(&self, key: &LibraryKey) -> Result<FittedModel> {
        Ok(serde_json::from_slice(&self.get_bytes(key)?)?)
    }

    /// The library model for a home known only by its metadata.
    pub fn for_home(
        &self,
        metadata: &HomeMetadata,
        clustering: &Clustering,
        season: &str,
        kind: ModelKind,
    ) -> Result<FittedModel> {
        self.get(&LibraryKey {
            cluster: assign(metadata, clustering),
            season: season.to_string(),
            kind,
        })
    }

    /// Every stored key, sorted.
    pub fn list(&self) -> Result<Vec<LibraryKey>> {
        let mut keys = Vec::new();
        for cluster_dir in std::fs::read_dir(&self.root)? {
            let cluster_dir = cluster_dir?;
            let name = cluster_dir.file_name().to_string_lossy().into_owned();
            let Some(cluster) = name
                .strip_prefix("cluster-")
                .and_then(|c| c.parse::<usize>().ok())
            else {
                continue;
            };
            if !cluster_dir.file_type()?.is_dir() {
                continue;
            }
            for season_dir in std::fs::read_dir(cluster_dir.path())? {
                let season_dir = season_dir?;
                if !season_dir.file_type()?.is_dir() {
                    continue;
                }
                let season = season_dir.file_name().to_string_lossy().into_owned();
                for file in std::fs::read_dir(season_dir.path())? {
                    let file = file?;
                    let fname = file.file_name().to_string_lossy().into_owned();
                    if let Some(kind) = fname
                        .strip_suffix(".json")
                        .and_then(|k| ModelKind::parse(k).ok())
                    {
                        keys.push(LibraryKey {
                            cluster,
                            season: season.clone(),
                            kind,
                        });
                    }
                }
            }
        }
        keys.sort();
        Ok(keys)
    }
}
