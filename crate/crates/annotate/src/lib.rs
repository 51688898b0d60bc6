//! Annotation service: serves B-mode images, accepts the endpoints of a
//! line drawn parallel to the vessel wall, and persists the Doppler angle
//! computed from them to a label CSV.
//!
//! Angles are always recomputed server-side; clients only send endpoints in
//! image-pixel coordinates.

mod catalog;
mod routes;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use catalog::{ImageCatalog, ImageEntry};
pub use routes::{router, ImageSummary, LabelResponse, SegmentBody};
pub use store::{AnnotationRecord, LabelStore, StoreError};

/// Shared state behind every handler.
#[derive(Clone)]
pub struct AppState {
    pub catalog: Arc<ImageCatalog>,
    pub store: Arc<LabelStore>,
    /// Directory holding the built UI bundle, served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl AppState {
    pub fn open(
        images: impl Into<PathBuf>,
        labels: impl Into<PathBuf>,
        ui_dir: Option<PathBuf>,
    ) -> Result<Self, StoreError> {
        Ok(Self {
            catalog: Arc::new(ImageCatalog::scan(images.into())?),
            store: Arc::new(LabelStore::open(labels.into())?),
            ui_dir,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub images: PathBuf,
    pub labels: PathBuf,
    pub ui_dir: Option<PathBuf>,
}

/// Binds and serves until the process is stopped.
pub async fn serve(cfg: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::open(&cfg.images, &cfg.labels, cfg.ui_dir.clone())
        .map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    eprintln!(
        "annotating {} images from {} on http://{}",
        state.catalog.len(),
        cfg.images.display(),
        listener.local_addr()?
    );
    axum::serve(listener, router(state)).await
}
