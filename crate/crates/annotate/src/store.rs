use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::SystemTime;

use anglekit::dataset::{read_labels, write_labels, LabelRecord};
use anglekit::geometry::{angle_from_endpoints, AngleDeg, LineSegment};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown image {0}")]
    NotFound(String),
    #[error("invalid segment: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] anglekit::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub segment: LineSegment,
    pub theta: AngleDeg,
    /// Set for records written by this process; None for records loaded
    /// from disk, whose CSV carries no timestamp.
    pub annotated_at: Option<SystemTime>,
}

impl AnnotationRecord {
    fn to_label(&self) -> LabelRecord {
        let s = self.segment;
        LabelRecord {
            image_id: self.image_id.clone(),
            x1: s.x1,
            y1: s.y1,
            x2: s.x2,
            y2: s.y2,
            theta_deg: self.theta.value(),
        }
    }
}

/// One record per image, mirrored to a label CSV that is rewritten
/// atomically (temp file, then rename) on every change. Mutations are
/// serialized through one lock, held across the file write.
#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    records: Mutex<BTreeMap<String, AnnotationRecord>>,
}

impl LabelStore {
    /// Opens the store, loading the label file if it exists. Stored angles
    /// are recomputed from the endpoints.
    pub fn open(path: PathBuf) -> Result<Self, StoreError> {
        let mut records = BTreeMap::new();
        if path.exists() {
            let file = std::fs::File::open(&path).map_err(io_err(&path))?;
            for l in read_labels(file)? {
                let segment = l.segment();
                let theta = angle_from_endpoints(&segment)?;
                records.insert(
                    l.image_id.clone(),
                    AnnotationRecord {
                        image_id: l.image_id,
                        segment,
                        theta,
                        annotated_at: None,
                    },
                );
            }
        }
        Ok(Self {
            path,
            records: Mutex::new(records),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, image_id: &str) -> Option<AnnotationRecord> {
        self.lock().get(image_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<String, AnnotationRecord>> {
        self.records.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Inserts or overwrites the record for `image_id` and persists the
    /// whole store before returning. On a failed write the in-memory state
    /// is rolled back.
    pub fn upsert(&self, image_id: &str, segment: LineSegment) -> Result<AnnotationRecord, StoreError> {
        let theta = angle_from_endpoints(&segment).map_err(|e| StoreError::Validation(e.to_string()))?;
        let record = AnnotationRecord {
            image_id: image_id.to_string(),
            segment,
            theta,
            annotated_at: Some(SystemTime::now()),
        };
        let mut records = self.lock();
        let previous = records.insert(image_id.to_string(), record.clone());
        if let Err(e) = self.persist(&records) {
            match previous {
                Some(p) => records.insert(image_id.to_string(), p),
                None => records.remove(image_id),
            };
            return Err(e);
        }
        Ok(record)
    }

    /// Label CSV bytes, sorted by image id.
    pub fn export(&self) -> Result<Vec<u8>, StoreError> {
        encode(&self.lock())
    }

    fn persist(&self, records: &BTreeMap<String, AnnotationRecord>) -> Result<(), StoreError> {
        let bytes = encode(records)?;
        let dir = match self.path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let name = self
            .path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "labels.csv".into());
        let tmp = dir.join(format!(".{name}.tmp"));
        let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &self.path).map_err(io_err(&self.path))
    }
}

fn encode(records: &BTreeMap<String, AnnotationRecord>) -> Result<Vec<u8>, StoreError> {
    let labels: Vec<LabelRecord> = records.values().map(AnnotationRecord::to_label).collect();
    let mut buf = Vec::new();
    write_labels(&mut buf, &labels)?;
    Ok(buf)
}
