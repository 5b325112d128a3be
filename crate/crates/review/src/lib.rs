//! Review service: serves the queue of model-flagged memes, their
//! augmentations and images, records moderator decisions, and reports how
//! often moderators agree with the model.

mod error;
mod queue;
mod store;

use std::collections::HashMap;
use std::future::Future;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use error::ReviewError;
pub use queue::{
    augment_corpus, build_queue, AgreementConfusion, AgreementStats, Candidate, QueueSort, ReviewItem, ReviewStatus,
};
pub use store::{LabelRecord, LabelStore, Submission};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub kind: String,
    pub n_trees: usize,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub service: String,
    pub version: String,
    pub model: ModelInfo,
    pub items: usize,
    pub labeled: usize,
    pub threshold: f64,
}

pub struct ReviewConfig {
    /// Default flag threshold; also the threshold behind each item's
    /// predicted label.
    pub threshold: f64,
    pub image_root: PathBuf,
    pub labels_path: PathBuf,
    pub model: ModelInfo,
}

/// Shared state: immutable candidates plus the serialized label store.
pub struct ReviewService {
    candidates: Vec<Candidate>,
    by_id: HashMap<String, usize>,
    store: Mutex<LabelStore>,
    threshold: f64,
    image_root: PathBuf,
    model: ModelInfo,
    clock: fn() -> DateTime<Utc>,
}

impl ReviewService {
    pub fn new(mut candidates: Vec<Candidate>, config: ReviewConfig) -> Result<Self, ReviewError> {
        if !(0.0..=1.0).contains(&config.threshold) {
            return Err(ReviewError::BadRequest(format!(
                "threshold must lie in [0, 1], got {}",
                config.threshold
            )));
        }
        candidates.sort_by(|a, b| a.id().cmp(b.id()));
        let by_id: HashMap<String, usize> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id().to_string(), i))
            .collect();
        if by_id.len() != candidates.len() {
            return Err(ReviewError::Internal("duplicate candidate ids".into()));
        }
        let store = LabelStore::open(&config.labels_path)?;
        let stale = store.labels().keys().filter(|id| !by_id.contains_key(*id)).count();
        if stale > 0 {
            log::warn!("{stale} stored labels refer to memes that are not in the corpus");
        }
        Ok(ReviewService {
            candidates,
            by_id,
            store: Mutex::new(store),
            threshold: config.threshold,
            image_root: config.image_root,
            model: config.model,
            clock: Utc::now,
        })
    }

    /// Replaces the timestamp source (for reproducible tests).
    pub fn with_clock(mut self, clock: fn() -> DateTime<Utc>) -> Self {
        self.clock = clock;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LabelStore> {
        // a panic while holding the lock cannot leave the map half-updated
        self.store.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn candidate(&self, id: &str) -> Result<&Candidate, ReviewError> {
        self.by_id
            .get(id)
            .map(|&i| &self.candidates[i])
            .ok_or_else(|| ReviewError::NotFound(id.to_string()))
    }

    pub fn queue(&self, threshold: Option<f64>, sort: QueueSort) -> Result<Vec<ReviewItem>, ReviewError> {
        let threshold = threshold.unwrap_or(self.threshold);
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ReviewError::BadRequest(format!(
                "threshold must lie in [0, 1], got {threshold}"
            )));
        }
        let store = self.lock();
        Ok(build_queue(&self.candidates, threshold, sort)
            .into_iter()
            .map(|c| ReviewItem::new(c, store.get(c.id())))
            .collect())
    }

    pub fn item(&self, id: &str) -> Result<ReviewItem, ReviewError> {
        let candidate = self.candidate(id)?;
        Ok(ReviewItem::new(candidate, self.lock().get(id)))
    }

    pub fn submit_label(&self, id: &str, label: u8, annotator: Option<String>) -> Result<ReviewItem, ReviewError> {
        let candidate = self.candidate(id)?;
        let record = LabelRecord {
            id: id.to_string(),
            label,
            annotator,
            labeled_at: (self.clock)(),
        };
        let submission = self.lock().submit(record)?;
        Ok(ReviewItem::new(candidate, Some(submission.record())))
    }

    pub fn agreement(&self) -> AgreementStats {
        let store = self.lock();
        AgreementStats::from_pairs(store.labels().values().filter_map(|l| {
            let candidate = self.candidate(&l.id).ok()?;
            Some((candidate.augmentation.predicted_label, l.label))
        }))
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            service: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model: self.model.clone(),
            items: self.candidates.len(),
            labeled: self.lock().len(),
            threshold: self.threshold,
        }
    }

    /// Location of the image for `id`, confined to the image root.
    pub fn image_path(&self, id: &str) -> Result<PathBuf, ReviewError> {
        let img = &self.candidate(id)?.img;
        let relative = Path::new(img);
        let confined = relative
            .components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
        if img.is_empty() || !confined {
            return Err(ReviewError::ForbiddenPath(img.clone()));
        }
        Ok(self.image_root.join(relative))
    }
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    threshold: Option<f64>,
    sort: Option<String>,
}

#[derive(Debug, Deserialize)]
struct LabelBody {
    label: u8,
    #[serde(default)]
    annotator: Option<String>,
}

type Shared = Arc<ReviewService>;

async fn get_queue(
    State(service): State<Shared>,
    Query(params): Query<QueueParams>,
) -> Result<Json<Vec<ReviewItem>>, ReviewError> {
    let sort = match params.sort.as_deref() {
        None | Some("") => QueueSort::default(),
        Some(s) => s.parse().map_err(ReviewError::BadRequest)?,
    };
    service.queue(params.threshold, sort).map(Json)
}

async fn get_item(
    State(service): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ReviewItem>, ReviewError> {
    service.item(&id).map(Json)
}

async fn get_image(
    State(service): State<Shared>,
    UrlPath(id): UrlPath<String>,
) -> Result<impl IntoResponse, ReviewError> {
    let path = service.image_path(&id)?;
    let bytes = match tokio::fs::read(&path).await {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ReviewError::NotFound(format!("{id} (image)")));
        }
        Err(source) => return Err(ReviewError::Io { path, source }),
    };
    let content_type = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes))
}

async fn post_label(
    State(service): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<LabelBody>,
) -> Result<Json<ReviewItem>, ReviewError> {
    // the store syncs to disk while holding its lock; keep that off the async workers
    tokio::task::spawn_blocking(move || service.submit_label(&id, body.label, body.annotator))
        .await
        .map_err(|e| ReviewError::Internal(e.to_string()))?
        .map(Json)
}

async fn get_agreement(State(service): State<Shared>) -> Json<AgreementStats> {
    Json(service.agreement())
}

async fn get_health(State(service): State<Shared>) -> Json<Health> {
    Json(service.health())
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/api/queue", get(get_queue))
        .route("/api/memes/{id}", get(get_item))
        .route("/api/memes/{id}/image", get(get_image))
        .route("/api/memes/{id}/label", post(post_label))
        .route("/api/stats/agreement", get(get_agreement))
        .route("/api/health", get(get_health))
        .with_state(service)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
}
