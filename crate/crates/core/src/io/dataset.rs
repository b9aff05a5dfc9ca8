//! `root/images/*.png` paired with `root/masks/*.png` by file stem.
//!
//! Entries are ordered by stem, compared as raw bytes: `"a10"` sorts before
//! `"a2"`.

use std::path::{Path, PathBuf};

use crate::metrics::Mask;
use crate::tensor::Tensor;
use crate::{Error, Result};

use super::raster::{read_gray_png, read_mask_png};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetMode {
    /// Images only; masks are ignored.
    Scored,
    /// Every image needs a mask of the same size.
    Masked,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub image: Tensor,
    pub mask: Option<Mask>,
}

fn is_png(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// `(stem, path)` of every PNG directly inside `dir`, sorted by stem.
pub fn list_pngs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || !is_png(&path) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::input(format!("{}: file name is not UTF-8", path.display())))?
            .to_string();
        out.push((stem, path));
    }
    out.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
    Ok(out)
}

/// Lists the dataset without decoding any image.
pub fn scan_dataset(root: &Path, mode: DatasetMode) -> Result<Vec<DatasetEntry>> {
    let images = root.join("images");
    if !images.is_dir() {
        return Err(Error::input(format!("{}: no images/ directory", root.display())));
    }
    let masks = root.join("masks");
    list_pngs(&images)?
        .into_iter()
        .map(|(id, image)| {
            let mask = match mode {
                DatasetMode::Scored => None,
                DatasetMode::Masked => {
                    let m = masks.join(format!("{id}.png"));
                    if !m.is_file() {
                        return Err(Error::input(format!("missing mask for `{id}`")));
                    }
                    Some(m)
                }
            };
            Ok(DatasetEntry { id, image, mask })
        })
        .collect()
}

impl DatasetEntry {
    pub fn load(&self) -> Result<Sample> {
        let image = read_gray_png(&self.image)?;
        let mask = match &self.mask {
            None => None,
            Some(p) => {
                let m = read_mask_png(p)?;
                if m.height() != image.height() || m.width() != image.width() {
                    return Err(Error::input(format!(
                        "`{}`: mask is {}x{}, image is {}x{}",
                        self.id,
                        m.height(),
                        m.width(),
                        image.height(),
                        image.width()
                    )));
                }
                Some(m)
            }
        };
        Ok(Sample {
            id: self.id.clone(),
            image,
            mask,
        })
    }
}

pub fn load_dataset(root: &Path, mode: DatasetMode) -> Result<Vec<Sample>> {
    scan_dataset(root, mode)?.iter().map(DatasetEntry::load).collect()
}
