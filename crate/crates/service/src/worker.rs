use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Instant;

use hivewatch_core::artifacts::run_detection;
use hivewatch_core::backend::{build_backend, Detector};
use hivewatch_core::media::open_video;
use hivewatch_core::pipeline::Interruption;
use hivewatch_core::Error;

use crate::store::{now, JobError, JobState};
use crate::Shared;

fn job_error(e: &Error) -> JobError {
    let stage = match e {
        Error::Decode { .. } | Error::UnsupportedContainer(_) => Some("decode".to_string()),
        _ => e.stage().map(|s| {
            serde_json::to_value(s)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_else(|| s.to_string())
        }),
    };
    JobError {
        stage,
        message: e.to_string(),
    }
}

/// Pulls job ids until the queue closes. Each worker owns one backend
/// instance, built on first use and reused across jobs.
pub(crate) async fn run(shared: Arc<Shared>) {
    let mut backend: Option<Box<dyn Detector>> = None;
    loop {
        let next = { shared.queue.lock().await.recv().await };
        let Some(id) = next else { break };
        if shared.shutting_down.load(Ordering::SeqCst) {
            break;
        }
        let s = shared.clone();
        let slot = backend.take();
        match tokio::task::spawn_blocking(move || process(&s, &id, slot)).await {
            Ok(b) => backend = b,
            Err(e) => tracing::error!(error = %e, "worker task panicked"),
        }
    }
}

fn process(shared: &Shared, id: &str, mut backend: Option<Box<dyn Detector>>) -> Option<Box<dyn Detector>> {
    let store = &shared.store;
    let record = match store.claim(id) {
        Ok(Some(r)) => r,
        Ok(None) => return backend,
        Err(e) => {
            tracing::error!(job = id, error = %e, "claim failed");
            return backend;
        }
    };
    let started = Instant::now();
    let queue_ms = chrono::DateTime::parse_from_rfc3339(&record.submitted_at)
        .ok()
        .map(|t| (chrono::Utc::now() - t.to_utc()).num_milliseconds().max(0) as f64);
    tracing::info!(job = id, attempt = record.attempt, "processing");

    let input = store.job_dir(id).join(&record.input);
    let out_dir = store.artifact_dir(id);
    let result = (|| {
        if backend.is_none() {
            backend = Some(build_backend(&shared.config.backend, shared.config.seed)?);
        }
        let source = open_video(&input)?;
        let detector = backend.as_mut().expect("backend initialised above");
        run_detection(source, detector, &shared.config.policy, &out_dir, &mut |p| {
            store.set_progress(id, p);
            !shared.shutting_down.load(Ordering::SeqCst)
        })
    })();
    let processing_ms = started.elapsed().as_secs_f64() * 1000.0;

    let (state, error, frames) = match result {
        Err(Error::Cancelled) => {
            // left in `processing`; recovery re-queues it on the next start
            tracing::info!(job = id, "interrupted by shutdown");
            return backend;
        }
        Err(e) => (JobState::Failed, Some(job_error(&e)), None),
        Ok(run) => match run.output.interruption {
            None => (JobState::Complete, None, Some(run.gallery)),
            Some(Interruption::Decode { frame_index, message }) => (
                JobState::Partial,
                Some(JobError {
                    stage: Some("decode".into()),
                    message: format!("report truncated at frame {frame_index}: {message}"),
                }),
                Some(run.gallery),
            ),
            Some(Interruption::Backend { frame_index, error }) => {
                let mut err = job_error(&error);
                err.message = format!("frame {frame_index}: {}", err.message);
                (JobState::Failed, Some(err), None)
            }
        },
    };
    tracing::info!(job = id, state = ?state, "finished");
    let update = store.update(id, |r| {
        r.state = state;
        r.error = error;
        r.frames = frames;
        if state == JobState::Complete {
            r.progress = 1.0;
        }
        r.finished_at = Some(now());
        r.timings.queue_ms = queue_ms;
        r.timings.processing_ms = Some(processing_ms);
    });
    if let Err(e) = update {
        tracing::error!(job = id, error = %e, "journal write failed");
    }
    backend
}
