//! HTTP job service around the hivewatch detection pipeline.
//!
//! Uploaded videos become jobs in a filesystem store (one directory per
//! job holding the input, a `job.json` journal and the artifacts). A
//! fixed pool of workers processes queued jobs; clients poll status and
//! fetch `report.csv`, `summary.json` and gallery frames when done.

mod api;
pub mod store;
mod worker;

use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use hivewatch_core::backend::BackendSpec;
use hivewatch_core::pipeline::KeyframePolicy;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, Mutex};
use tokio::task::JoinHandle;

pub use store::{JobError, JobRecord, JobState, JobStore, JobView};

pub const DEFAULT_UPLOAD_LIMIT: u64 = 512 * 1024 * 1024;
pub const DEFAULT_WORKERS: usize = 2;
/// Environment variable naming the job store root.
pub const DATA_DIR_ENV: &str = "HIVE_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] hivewatch_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub backend: BackendSpec,
    pub seed: u64,
    pub policy: KeyframePolicy,
    pub workers: usize,
    pub upload_limit: u64,
    /// Served under `/` when set.
    pub static_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>, backend: BackendSpec) -> Self {
        Self {
            data_dir: data_dir.into(),
            backend,
            seed: 0,
            policy: KeyframePolicy::default(),
            workers: DEFAULT_WORKERS,
            upload_limit: DEFAULT_UPLOAD_LIMIT,
            static_dir: None,
        }
    }
}

pub(crate) struct Shared {
    config: ServiceConfig,
    store: JobStore,
    sender: std::sync::Mutex<Option<mpsc::UnboundedSender<String>>>,
    queue: Mutex<mpsc::UnboundedReceiver<String>>,
    shutting_down: AtomicBool,
}

impl Shared {
    fn enqueue(&self, id: String) {
        if let Some(tx) = self.sender.lock().expect("queue poisoned").as_ref() {
            let _ = tx.send(id);
        }
    }
}

/// A running job store plus its worker pool.
pub struct Service {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
}

impl Service {
    /// Opens the store, re-queues interrupted jobs and starts the workers.
    /// Must be called inside a Tokio runtime.
    pub fn start(config: ServiceConfig) -> Result<Self, ServiceError> {
        if config.workers == 0 {
            return Err(
                hivewatch_core::Error::InvalidArgument("at least one worker is required".into()).into(),
            );
        }
        let store = JobStore::open(&config.data_dir)?;
        let pending = store.recover()?;
        let (tx, rx) = mpsc::unbounded_channel();
        let shared = Arc::new(Shared {
            config,
            store,
            sender: std::sync::Mutex::new(Some(tx)),
            queue: Mutex::new(rx),
            shutting_down: AtomicBool::new(false),
        });
        for id in pending {
            tracing::info!(job = %id, "re-queued after restart");
            shared.enqueue(id);
        }
        let workers = (0..shared.config.workers)
            .map(|_| tokio::spawn(worker::run(shared.clone())))
            .collect();
        Ok(Self { shared, workers })
    }

    pub fn router(&self) -> axum::Router {
        api::router(self.shared.clone())
    }

    pub fn store(&self) -> &JobStore {
        &self.shared.store
    }

    /// Stops the workers, leaving in-flight jobs journaled as `processing`
    /// so the next start re-queues them, then flushes every journal.
    pub async fn shutdown(self) -> Result<(), ServiceError> {
        self.shared.shutting_down.store(true, Ordering::SeqCst);
        self.shared.sender.lock().expect("queue poisoned").take();
        for w in self.workers {
            let _ = w.await;
        }
        self.shared.store.flush()
    }
}

/// Serves until `signal` resolves, then shuts down cleanly.
pub async fn serve(
    config: ServiceConfig,
    listener: TcpListener,
    signal: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let service = Service::start(config)?;
    let app = service.router();
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app).with_graceful_shutdown(signal).await?;
    service.shutdown().await
}
