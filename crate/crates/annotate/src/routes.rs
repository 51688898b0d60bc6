use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use anglekit::geometry::LineSegment;

use crate::catalog::png_bytes;
use crate::store::StoreError;
use crate::AppState;

/// Endpoints in image-pixel coordinates (x right, y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentBody {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub image_id: String,
    pub theta_deg: f64,
    pub segment: SegmentBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub labeled: bool,
    /// The stored annotation, so a client can redraw it.
    pub label: Option<LabelResponse>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Io { .. } | StoreError::Data(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/images", get(list_images))
        .route("/api/images/{id}", get(image_png))
        .route("/api/images/{id}/label", post(submit_label))
        .route("/api/labels", get(export_labels));
    let app = match &state.ui_dir {
        Some(dir) if dir.is_dir() => api.fallback_service(ServeDir::new(dir)),
        _ => api.route("/", get(placeholder)),
    };
    app.with_state(state)
}

fn label_response(r: &crate::AnnotationRecord) -> LabelResponse {
    LabelResponse {
        image_id: r.image_id.clone(),
        theta_deg: r.theta.value(),
        segment: SegmentBody {
            x1: r.segment.x1,
            y1: r.segment.y1,
            x2: r.segment.x2,
            y2: r.segment.y2,
        },
    }
}

async fn list_images(State(st): State<AppState>) -> Json<Vec<ImageSummary>> {
    Json(
        st.catalog
            .iter()
            .map(|e| {
                let label = st.store.get(&e.image_id).map(|r| label_response(&r));
                ImageSummary {
                    image_id: e.image_id.clone(),
                    width: e.width,
                    height: e.height,
                    labeled: label.is_some(),
                    label,
                }
            })
            .collect(),
    )
}

async fn image_png(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let entry = st
        .catalog
        .get(&id)
        .ok_or_else(|| StoreError::NotFound(id.clone()))?
        .clone();
    let bytes = tokio::task::spawn_blocking(move || png_bytes(&entry.path))
        .await
        .map_err(join_error)?
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

fn validate(seg: &SegmentBody, width: u32, height: u32) -> Result<(), StoreError> {
    let (w, h) = (width as f64, height as f64);
    for (name, v, max) in [("x1", seg.x1, w), ("y1", seg.y1, h), ("x2", seg.x2, w), ("y2", seg.y2, h)] {
        if !v.is_finite() {
            return Err(StoreError::Validation(format!("{name} is not a finite number")));
        }
        if !(0.0..=max).contains(&v) {
            return Err(StoreError::Validation(format!(
                "{name} = {v} lies outside the {width}x{height} image"
            )));
        }
    }
    if seg.x1 == seg.x2 && seg.y1 == seg.y2 {
        return Err(StoreError::Validation("endpoints coincide; draw a line, not a point".into()));
    }
    Ok(())
}

async fn submit_label(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(seg): Json<SegmentBody>,
) -> Result<Json<LabelResponse>, ApiError> {
    let entry = st.catalog.get(&id).ok_or_else(|| StoreError::NotFound(id.clone()))?;
    validate(&seg, entry.width, entry.height)?;
    let store = st.store.clone();
    let record = tokio::task::spawn_blocking(move || {
        store.upsert(&id, LineSegment::new(seg.x1, seg.y1, seg.x2, seg.y2))
    })
    .await
    .map_err(join_error)??;
    Ok(Json(label_response(&record)))
}

async fn export_labels(State(st): State<AppState>) -> Result<Response, ApiError> {
    let store = st.store.clone();
    let bytes = tokio::task::spawn_blocking(move || store.export())
        .await
        .map_err(join_error)??;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"labels.csv\""),
        ],
        bytes,
    )
        .into_response())
}

async fn placeholder() -> Html<&'static str> {
    Html(
        "<!doctype html><meta charset=\"utf-8\"><title>anglekit annotate</title>\
         <h1>anglekit annotation service</h1>\
         <p>No UI bundle configured. API: <code>GET /api/images</code>, \
         <code>GET /api/images/{id}</code>, <code>POST /api/images/{id}/label</code>, \
         <code>GET /api/labels</code>.</p>",
    )
}
