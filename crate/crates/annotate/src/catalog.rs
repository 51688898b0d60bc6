use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::store::StoreError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageEntry {
    pub image_id: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
}

/// The images under annotation: every `.png` and `.pgm` file directly in
/// one directory, keyed by file stem, in alphabetical order.
#[derive(Debug, Default)]
pub struct ImageCatalog {
    entries: BTreeMap<String, ImageEntry>,
}

impl ImageCatalog {
    pub fn scan(dir: PathBuf) -> Result<Self, StoreError> {
        let io = |source| StoreError::Io {
            path: dir.clone(),
            source,
        };
        let mut entries = BTreeMap::new();
        for item in std::fs::read_dir(&dir).map_err(io)? {
            let path = item.map_err(io)?.path();
            let is_image = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"));
            if !is_image || !path.is_file() {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            let (width, height) = image::image_dimensions(&path).map_err(|e| {
                StoreError::Data(anglekit::Error::Ingestion {
                    path: path.clone(),
                    reason: e.to_string(),
                })
            })?;
            if let Some(prev) = entries.get(&id) {
                let prev: &ImageEntry = prev;
                return Err(StoreError::Validation(format!(
                    "image id {id} is ambiguous: {} and {}",
                    prev.path.display(),
                    path.display()
                )));
            }
            entries.insert(
                id.clone(),
                ImageEntry {
                    image_id: id,
                    path,
                    width,
                    height,
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn get(&self, id: &str) -> Option<&ImageEntry> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ImageEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// PNG bytes for an entry: PNG files verbatim, anything else re-encoded.
pub(crate) fn png_bytes(path: &Path) -> Result<Vec<u8>, String> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        return std::fs::read(path).map_err(|e| e.to_string());
    }
    let img = image::open(path).map_err(|e| e.to_string())?;
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    Ok(out.into_inner())
}
