//! Labelled image collections and their CSV manifests (`path,label`).

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::image_ops::{load_png, Image, ImageError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("manifest {manifest}: image {image}: {source}")]
    Image {
        manifest: PathBuf,
        image: PathBuf,
        source: ImageError,
    },
    #[error("dataset `{0}` is empty")]
    Empty(String),
    #[error("label {label} of `{id}` is outside the oracle's {classes} classes")]
    LabelRange { id: String, label: usize, classes: usize },
    #[error("image `{id}` has side {got}, expected {expected}")]
    SideMismatch { id: String, got: usize, expected: usize },
    #[error("train and validation sets share `{0}`")]
    Overlap(String),
}

#[derive(Debug, Clone)]
pub struct LabeledItem {
    pub id: String,
    pub image: Arc<Image>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub name: String,
    pub items: Vec<LabeledItem>,
}

#[derive(Deserialize)]
struct ManifestRow {
    path: String,
    label: usize,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, items: Vec<LabeledItem>) -> Result<Self, DatasetError> {
        let name = name.into();
        if items.is_empty() {
            return Err(DatasetError::Empty(name));
        }
        Ok(LabeledDataset { name, items })
    }

    /// Builds a dataset from in-memory images; ids are `{name}/{index}`.
    pub fn from_images(name: &str, images: Vec<(Image, usize)>) -> Result<Self, DatasetError> {
        let items = images
            .into_iter()
            .enumerate()
            .map(|(i, (image, label))| LabeledItem {
                id: format!("{name}/{i:05}"),
                image: Arc::new(image),
                label,
            })
            .collect();
        Self::new(name, items)
    }

    /// Loads a `path,label` manifest. Relative paths resolve against the manifest's directory.
    pub fn from_manifest(manifest: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let manifest = manifest.as_ref();
        let base = manifest.parent().unwrap_or(Path::new("."));
        let csv_err = |source| DatasetError::Csv {
            path: manifest.to_path_buf(),
            source,
        };
        let mut reader = csv::Reader::from_path(manifest).map_err(csv_err)?;
        let mut items = Vec::new();
        for row in reader.deserialize::<ManifestRow>() {
            let row = row.map_err(csv_err)?;
            let path = base.join(&row.path);
            let image = load_png(&path).map_err(|source| DatasetError::Image {
                manifest: manifest.to_path_buf(),
                image: path.clone(),
                source,
            })?;
            items.push(LabeledItem {
                id: row.path,
                image: Arc::new(image),
                label: row.label,
            });
        }
        Self::new(manifest.display().to_string(), items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn check_labels(&self, classes: usize) -> Result<(), DatasetError> {
        match self.items.iter().find(|it| it.label >= classes) {
            Some(it) => Err(DatasetError::LabelRange {
                id: it.id.clone(),
                label: it.label,
                classes,
            }),
            None => Ok(()),
        }
    }

    pub fn check_side(&self, side: usize) -> Result<(), DatasetError> {
        match self.items.iter().find(|it| it.image.side() != side) {
            Some(it) => Err(DatasetError::SideMismatch {
                id: it.id.clone(),
                got: it.image.side(),
                expected: side,
            }),
            None => Ok(()),
        }
    }

    pub fn check_disjoint(&self, other: &LabeledDataset) -> Result<(), DatasetError> {
        let ids: HashSet<&str> = self.items.iter().map(|it| it.id.as_str()).collect();
        match other.items.iter().find(|it| ids.contains(it.id.as_str())) {
            Some(it) => Err(DatasetError::Overlap(it.id.clone())),
            None => Ok(()),
        }
    }

    pub fn side(&self) -> usize {
        self.items[0].image.side()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|it| it.label).collect()
    }
}
