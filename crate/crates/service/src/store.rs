use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};
use hivewatch_core::artifacts::write_atomic;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const JOURNAL: &str = "job.json";
pub const ARTIFACT_DIR: &str = "artifacts";
/// Restarts survived by a job before it is marked failed.
pub const MAX_ATTEMPTS: u32 = 3;

/// Journal writes for progress alone happen at most this often (fraction).
const PROGRESS_PERSIST_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Processing,
    Complete,
    Failed,
    Partial,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Complete | Self::Failed | Self::Partial)
    }

    pub fn has_artifacts(self) -> bool {
        matches!(self, Self::Complete | Self::Partial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    /// `load`, `pre_process`, `inference`, `nms`, `decode` or `null`.
    pub stage: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JobTimings {
    pub upload_ms: f64,
    pub queue_ms: Option<f64>,
    pub processing_ms: Option<f64>,
}

/// One job as journaled on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub state: JobState,
    pub progress: f64,
    pub submitted_at: String,
    pub started_at: Option<String>,
    pub finished_at: Option<String>,
    pub error: Option<JobError>,
    /// Input file name inside the job directory.
    pub input: String,
    /// Gallery images written, once artifacts exist.
    pub frames: Option<usize>,
    pub attempt: u32,
    pub timings: JobTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactLinks {
    pub report_csv: String,
    pub summary_json: String,
    pub frames: Vec<String>,
}

/// Public job document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub job_id: String,
    pub state: JobState,
    pub progress: f64,
    pub submitted_at: String,
    pub finished_at: Option<String>,
    pub error: Option<JobError>,
    pub artifacts: Option<ArtifactLinks>,
    pub timings: JobTimings,
}

impl From<&JobRecord> for JobView {
    fn from(r: &JobRecord) -> Self {
        let base = format!("/api/jobs/{}", r.job_id);
        let artifacts = r.state.has_artifacts().then(|| ArtifactLinks {
            report_csv: format!("{base}/report.csv"),
            summary_json: format!("{base}/summary.json"),
            frames: (0..r.frames.unwrap_or(0))
                .map(|n| format!("{base}/frames/{n}"))
                .collect(),
        });
        Self {
            job_id: r.job_id.clone(),
            state: r.state,
            progress: r.progress,
            submitted_at: r.submitted_at.clone(),
            finished_at: r.finished_at.clone(),
            error: r.error.clone(),
            artifacts,
            timings: r.timings.clone(),
        }
    }
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Ids are server-generated UUIDs; anything else never touches the disk.
pub fn valid_id(id: &str) -> bool {
    uuid::Uuid::parse_str(id).is_ok()
}

struct Entry {
    record: JobRecord,
    persisted_progress: f64,
}

/// In-memory job table mirrored to one `job.json` per job directory.
/// All mutation goes through the table lock.
pub struct JobStore {
    root: PathBuf,
    jobs: Mutex<BTreeMap<String, Entry>>,
}

impl JobStore {
    /// Loads every journal under `root/jobs`.
    pub fn open(root: &Path) -> Result<Self, ServiceError> {
        let jobs_dir = root.join("jobs");
        fs::create_dir_all(&jobs_dir)?;
        let mut jobs = BTreeMap::new();
        for entry in fs::read_dir(&jobs_dir)? {
            let path = entry?.path().join(JOURNAL);
            let Ok(text) = fs::read_to_string(&path) else {
                tracing::warn!(path = %path.display(), "job directory without journal");
                continue;
            };
            match serde_json::from_str::<JobRecord>(&text) {
                Ok(record) => {
                    let persisted_progress = record.progress;
                    jobs.insert(
                        record.job_id.clone(),
                        Entry {
                            record,
                            persisted_progress,
                        },
                    );
                }
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "unreadable journal"),
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            jobs: Mutex::new(jobs),
        })
    }

    pub fn job_dir(&self, id: &str) -> PathBuf {
        self.root.join("jobs").join(id)
    }

    pub fn artifact_dir(&self, id: &str) -> PathBuf {
        self.job_dir(id).join(ARTIFACT_DIR)
    }

    fn persist(&self, record: &JobRecord) -> Result<(), ServiceError> {
        let bytes = serde_json::to_vec_pretty(record)?;
        write_atomic(&self.job_dir(&record.job_id).join(JOURNAL), &bytes)?;
        Ok(())
    }

    pub fn insert(&self, record: JobRecord) -> Result<(), ServiceError> {
        let mut jobs = self.jobs.lock().expect("job table poisoned");
        self.persist(&record)?;
        let persisted_progress = record.progress;
        jobs.insert(
            record.job_id.clone(),
            Entry {
                record,
                persisted_progress,
            },
        );
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        let jobs = self.jobs.lock().expect("job table poisoned");
        jobs.get(id).map(|e| e.record.clone())
    }

    pub fn list(&self) -> Vec<JobRecord> {
        let jobs = self.jobs.lock().expect("job table poisoned");
        let mut all: Vec<JobRecord> = jobs.values().map(|e| e.record.clone()).collect();
        all.sort_by(|a, b| a.submitted_at.cmp(&b.submitted_at).then(a.job_id.cmp(&b.job_id)));
        all
    }

    pub fn count(&self, state: JobState) -> usize {
        let jobs = self.jobs.lock().expect("job table poisoned");
        jobs.values().filter(|e| e.record.state == state).count()
    }

    /// Applies `f` and journals the result.
    pub fn update(
        &self,
        id: &str,
        f: impl FnOnce(&mut JobRecord),
    ) -> Result<Option<JobRecord>, ServiceError> {
        let mut jobs = self.jobs.lock().expect("job table poisoned");
        let Some(entry) = jobs.get_mut(id) else {
            return Ok(None);
        };
        f(&mut entry.record);
        self.persist(&entry.record)?;
        entry.persisted_progress = entry.record.progress;
        Ok(Some(entry.record.clone()))
    }

    /// Moves a queued job to processing. Exactly one caller wins.
    pub fn claim(&self, id: &str) -> Result<Option<JobRecord>, ServiceError> {
        let mut jobs = self.jobs.lock().expect("job table poisoned");
        let Some(entry) = jobs.get_mut(id) else {
            return Ok(None);
        };
        if entry.record.state != JobState::Queued {
            return Ok(None);
        }
        let mut next = entry.record.clone();
        next.state = JobState::Processing;
        next.started_at = Some(now());
        self.persist(&next)?;
        entry.record = next;
        Ok(Some(entry.record.clone()))
    }

    /// Raises progress (never lowers it) while processing.
    pub fn set_progress(&self, id: &str, fraction: f64) {
        let mut jobs = self.jobs.lock().expect("job table poisoned");
        let Some(entry) = jobs.get_mut(id) else {
            return;
        };
        if entry.record.state != JobState::Processing || fraction <= entry.record.progress {
            return;
        }
        entry.record.progress = fraction.min(1.0);
        if entry.record.progress - entry.persisted_progress >= PROGRESS_PERSIST_STEP {
            if let Err(e) = self.persist(&entry.record) {
                tracing::warn!(job = id, error = %e, "journal write failed");
            } else {
                entry.persisted_progress = entry.record.progress;
            }
        }
    }

    /// Journals every job as it stands in memory.
    pub fn flush(&self) -> Result<(), ServiceError> {
        let mut jobs = self.jobs.lock().expect("job table poisoned");
        for entry in jobs.values_mut() {
            self.persist(&entry.record)?;
            entry.persisted_progress = entry.record.progress;
        }
        Ok(())
    }

    /// Returns ids to run after a restart, oldest first. Jobs caught in
    /// `processing` go back to `queued` with a fresh attempt, or fail once
    /// they exceed [`MAX_ATTEMPTS`].
    pub fn recover(&self) -> Result<Vec<String>, ServiceError> {
        let mut jobs = self.jobs.lock().expect("job table poisoned");
        let mut ready: Vec<(String, String)> = Vec::new();
        for entry in jobs.values_mut() {
            let r = &mut entry.record;
            match r.state {
                JobState::Queued => {}
                JobState::Processing if r.attempt + 1 >= MAX_ATTEMPTS => {
                    r.state = JobState::Failed;
                    r.finished_at = Some(now());
                    r.error = Some(JobError {
                        stage: None,
                        message: format!("interrupted by {MAX_ATTEMPTS} service restarts"),
                    });
                }
                JobState::Processing => {
                    r.state = JobState::Queued;
                    r.attempt += 1;
                    r.progress = 0.0;
                    r.started_at = None;
                }
                _ => continue,
            }
            self.persist(r)?;
            entry.persisted_progress = r.progress;
            if r.state == JobState::Queued {
                ready.push((r.submitted_at.clone(), r.job_id.clone()));
            }
        }
        ready.sort();
        Ok(ready.into_iter().map(|(_, id)| id).collect())
    }
}
