use std::fs;
use std::path::Path;

use super::{FaceError, FaceModel, GalleryImage};
use crate::image::GrayImage;

/// Reads `<dir>/<label>/<name>.pgm`, ordered by label then file name.
pub fn read_gallery(dir: &Path) -> Result<Vec<GalleryImage>, FaceError> {
    let mut label_dirs: Vec<_> = fs::read_dir(dir)?
        .filter_map(Result::ok)
        .filter(|e| e.path().is_dir())
        .collect();
    label_dirs.sort_by_key(|e| e.file_name());
    let mut out = Vec::new();
    for entry in label_dirs {
        let label = entry
            .file_name()
            .into_string()
            .map_err(|name| FaceError::Gallery(format!("label {name:?} is not UTF-8")))?;
        let mut files: Vec<_> = fs::read_dir(entry.path())?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
            .collect();
        files.sort();
        for path in files {
            out.push(GalleryImage::new(label.clone(), GrayImage::read_pgm(&path)?));
        }
    }
    if out.is_empty() {
        return Err(FaceError::Gallery(format!("no images under {}", dir.display())));
    }
    Ok(out)
}

/// Writes each image to `<dir>/<label>/<label>_<nn>.pgm`, numbering per label.
pub fn write_gallery(dir: &Path, images: &[GalleryImage]) -> Result<(), FaceError> {
    let mut counts = std::collections::BTreeMap::<&str, usize>::new();
    for g in images {
        let n = counts.entry(&g.label).or_insert(0);
        let label_dir = dir.join(&g.label);
        fs::create_dir_all(&label_dir)?;
        g.image.write_pgm(&label_dir.join(format!("{}_{:02}.pgm", g.label, n)))?;
        *n += 1;
    }
    Ok(())
}

/// Bytes the face database occupies on disk versus the trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StorageReport {
    pub images: usize,
    pub gallery_bytes: u64,
    pub model_bytes: u64,
}

impl StorageReport {
    /// Sums the PGM files of a gallery directory and the serialized model.
    pub fn measure(gallery_dir: &Path, model: &FaceModel) -> Result<Self, FaceError> {
        let mut images = 0;
        let mut gallery_bytes = 0;
        for entry in fs::read_dir(gallery_dir)?.filter_map(Result::ok) {
            if !entry.path().is_dir() {
                continue;
            }
            for file in fs::read_dir(entry.path())?.filter_map(Result::ok) {
                if file.path().extension().is_some_and(|x| x == "pgm") {
                    images += 1;
                    gallery_bytes += file.metadata()?.len();
                }
            }
        }
        Ok(Self {
            images,
            gallery_bytes,
            model_bytes: model.to_bytes().len() as u64,
        })
    }
}
