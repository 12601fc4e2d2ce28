use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hivewatch_core::artifacts::{gallery_path, REPORT_CSV, SUMMARY_JSON};
use hivewatch_core::media::{probe_container, Container};
use serde_json::json;
use tokio::io::AsyncWriteExt;
use tower_http::services::ServeDir;

use crate::store::{now, valid_id, JobRecord, JobState, JobTimings, JobView};
use crate::Shared;

#[derive(Debug)]
pub(crate) struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        tracing::error!(error = %e, "request failed");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn router(shared: Arc<Shared>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/jobs", post(submit).get(list))
        .route("/api/jobs/{id}", get(status))
        .route("/api/jobs/{id}/report.csv", get(report_csv))
        .route("/api/jobs/{id}/summary.json", get(summary_json))
        .route("/api/jobs/{id}/frames/{n}", get(frame))
        .route("/api/{*rest}", get(api_not_found).post(api_not_found))
        .layer(DefaultBodyLimit::disable());
    let api = match &shared.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    api.with_state(shared)
}

async fn api_not_found() -> ApiError {
    ApiError::not_found("endpoint")
}

async fn health(State(s): State<Arc<Shared>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "backend": s.config.backend.to_string(),
        "workers": s.config.workers,
        "stride": s.config.policy.stride,
        "upload_limit_bytes": s.config.upload_limit,
        "queued": s.store.count(JobState::Queued),
        "processing": s.store.count(JobState::Processing),
    }))
}

async fn list(State(s): State<Arc<Shared>>) -> Json<Vec<JobView>> {
    Json(s.store.list().iter().map(JobView::from).collect())
}

fn known(s: &Shared, id: &str) -> ApiResult<JobRecord> {
    if !valid_id(id) {
        return Err(ApiError::not_found(format!("job {id}")));
    }
    s.store
        .get(id)
        .ok_or_else(|| ApiError::not_found(format!("job {id}")))
}

async fn status(State(s): State<Arc<Shared>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobView>> {
    Ok(Json(JobView::from(&known(&s, &id)?)))
}

fn finished(s: &Shared, id: &str) -> ApiResult<JobRecord> {
    let record = known(s, id)?;
    if !record.state.has_artifacts() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("job {id} is {:?}; artifacts are not available", record.state).to_lowercase(),
        ));
    }
    Ok(record)
}

async fn file_response(path: &Path, content_type: &'static str) -> ApiResult<Response> {
    let bytes = tokio::fs::read(path).await.map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, content_type)], Body::from(bytes)).into_response())
}

async fn report_csv(State(s): State<Arc<Shared>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    finished(&s, &id)?;
    file_response(
        &s.store.artifact_dir(&id).join(REPORT_CSV),
        "text/csv; charset=utf-8",
    )
    .await
}

async fn summary_json(State(s): State<Arc<Shared>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    finished(&s, &id)?;
    file_response(&s.store.artifact_dir(&id).join(SUMMARY_JSON), "application/json").await
}

async fn frame(
    State(s): State<Arc<Shared>>,
    UrlPath((id, n)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    let record = finished(&s, &id)?;
    let n: usize = n
        .trim_end_matches(".png")
        .parse()
        .map_err(|_| ApiError::not_found(format!("frame {n}")))?;
    if n >= record.frames.unwrap_or(0) {
        return Err(ApiError::not_found(format!("frame {n}")));
    }
    file_response(&gallery_path(&s.store.artifact_dir(&id), n), "image/png").await
}

async fn submit(State(s): State<Arc<Shared>>, mut multipart: Multipart) -> ApiResult<Response> {
    let started = Instant::now();
    let id = uuid::Uuid::new_v4().to_string();
    let dir = s.store.job_dir(&id);
    tokio::fs::create_dir_all(&dir)
        .await
        .map_err(ApiError::internal)?;
    let cleanup = |e: ApiError| {
        let dir = dir.clone();
        async move {
            let _ = tokio::fs::remove_dir_all(&dir).await;
            e
        }
    };

    let part = dir.join("upload.part");
    let size = match receive_video(&mut multipart, &part, s.config.upload_limit).await {
        Ok(n) => n,
        Err(e) => return Err(cleanup(e).await),
    };
    if size == 0 {
        return Err(cleanup(ApiError::new(StatusCode::BAD_REQUEST, "uploaded video is empty")).await);
    }
    let probe = {
        let part = part.clone();
        tokio::task::spawn_blocking(move || probe_container(&part))
            .await
            .map_err(ApiError::internal)?
    };
    let input = match probe {
        Ok(Container::Y4m) => "input.y4m",
        Ok(Container::Transcoded) => "input.video",
        Err(e) => {
            return Err(cleanup(ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, e.to_string())).await)
        }
    };
    tokio::fs::rename(&part, dir.join(input))
        .await
        .map_err(ApiError::internal)?;

    let record = JobRecord {
        job_id: id.clone(),
        state: JobState::Queued,
        progress: 0.0,
        submitted_at: now(),
        started_at: None,
        finished_at: None,
        error: None,
        input: input.into(),
        frames: None,
        attempt: 0,
        timings: JobTimings {
            upload_ms: started.elapsed().as_secs_f64() * 1000.0,
            ..JobTimings::default()
        },
    };
    s.store.insert(record.clone()).map_err(ApiError::internal)?;
    s.enqueue(id.clone());
    tracing::info!(job = %id, bytes = size, "queued");
    let location = format!("/api/jobs/{id}");
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, location)],
        Json(JobView::from(&record)),
    )
        .into_response())
}

/// Streams the `video` field to `dest`, enforcing `limit` bytes.
async fn receive_video(multipart: &mut Multipart, dest: &Path, limit: u64) -> ApiResult<u64> {
    let bad = |e: axum::extract::multipart::MultipartError| {
        ApiError::new(StatusCode::BAD_REQUEST, format!("malformed upload: {e}"))
    };
    while let Some(mut field) = multipart.next_field().await.map_err(bad)? {
        if field.name() != Some("video") {
            continue;
        }
        let mut file = tokio::fs::File::create(dest).await.map_err(ApiError::internal)?;
        let mut size: u64 = 0;
        while let Some(chunk) = field.chunk().await.map_err(bad)? {
            size += chunk.len() as u64;
            if size > limit {
                return Err(ApiError::new(
                    StatusCode::PAYLOAD_TOO_LARGE,
                    format!("upload exceeds the limit of {limit} bytes"),
                ));
            }
            file.write_all(&chunk).await.map_err(ApiError::internal)?;
        }
        file.flush().await.map_err(ApiError::internal)?;
        return Ok(size);
    }
    Err(ApiError::new(
        StatusCode::BAD_REQUEST,
        "missing multipart field \"video\"",
    ))
}
