//! Human review queue.
//!
//! State changes (enqueue, verdict) are appended to a JSONL log before they
//! become visible; startup replays the log. Leases are soft, in-memory
//! assignments and are never logged. All writes go through one mutex;
//! readers clone an `Arc` of the current snapshot.

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SystemClock};
use crate::curation::{PipelineStage, SynthesizedSample};
use crate::trajectory::{serialize, validate_with, DEFAULT_MAX_TURNS};

pub const DEFAULT_LEASE: Duration = Duration::from_secs(30 * 60);
pub const LOG_FILE: &str = "review_log.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    FormatCorrectness,
    GroundTruthConsistency,
    SearchNecessity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewVerdict {
    pub sample_id: String,
    pub decision: Decision,
    #[serde(default)]
    pub reject_reasons: BTreeSet<RejectReason>,
    #[serde(default)]
    pub note: String,
    pub annotator_id: String,
    /// Filled in by the queue when zero.
    #[serde(default)]
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub sample_id: String,
    /// Tag-stream rendering of the trajectory.
    pub rendered: String,
    pub question: String,
    pub gold: String,
    pub status: ReviewStatus,
    #[serde(default)]
    pub assigned_to: Option<String>,
    #[serde(default)]
    pub lease_expires_ms: Option<u64>,
    pub sample: SynthesizedSample,
    #[serde(default)]
    pub verdict: Option<ReviewVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Enqueued {
        seq: u64,
        at_ms: u64,
        sample: SynthesizedSample,
    },
    Verdict {
        seq: u64,
        verdict: ReviewVerdict,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown sample {0}")]
    UnknownSample(String),
    #[error("sample {0} already has a verdict")]
    AlreadyDecided(String),
    #[error("sample {sample_id} is leased to {holder}")]
    LeasedToOther { sample_id: String, holder: String },
    #[error("invalid verdict: {0}")]
    InvalidVerdict(String),
    #[error("sample {sample_id} cannot be enqueued: {reason}")]
    Malformed { sample_id: String, reason: String },
    #[error("review log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("review log {path} is corrupt at line {line}: {detail}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        detail: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueueStats {
    pub total: usize,
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub leased: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EnqueueReport {
    pub enqueued: usize,
    pub already_present: usize,
}

/// Queue contents. Cheap to clone relative to review volumes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub items: Vec<ReviewItem>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    pub next_seq: u64,
}

impl QueueState {
    pub fn get(&self, sample_id: &str) -> Option<&ReviewItem> {
        self.index.get(sample_id).map(|&i| &self.items[i])
    }

    fn get_mut(&mut self, sample_id: &str) -> Option<&mut ReviewItem> {
        self.index.get(sample_id).map(|&i| &mut self.items[i])
    }

    fn apply(&mut self, event: &LogEvent) {
        match event {
            LogEvent::Enqueued { seq, sample, .. } => {
                self.next_seq = self.next_seq.max(seq + 1);
                if self.index.contains_key(&sample.sample_id) {
                    return;
                }
                self.index.insert(sample.sample_id.clone(), self.items.len());
                self.items.push(ReviewItem {
                    sample_id: sample.sample_id.clone(),
                    rendered: serialize(&sample.trajectory),
                    question: sample.question.text.clone(),
                    gold: sample.question.gold_answer.clone(),
                    status: ReviewStatus::Pending,
                    assigned_to: None,
                    lease_expires_ms: None,
                    sample: sample.clone(),
                    verdict: None,
                });
            }
            LogEvent::Verdict { seq, verdict } => {
                self.next_seq = self.next_seq.max(seq + 1);
                let Some(item) = self.get_mut(&verdict.sample_id) else {
                    return;
                };
                if item.status != ReviewStatus::Pending {
                    return;
                }
                item.status = match verdict.decision {
                    Decision::Accept => ReviewStatus::Accepted,
                    Decision::Reject => ReviewStatus::Rejected,
                };
                if verdict.decision == Decision::Accept {
                    item.sample.pipeline_stage = PipelineStage::HumanVerified;
                }
                item.assigned_to = None;
                item.lease_expires_ms = None;
                item.verdict = Some(verdict.clone());
            }
        }
    }

    /// Status-only view used to compare replayed state with live state.
    pub fn durable_view(&self) -> Vec<(String, ReviewStatus, Option<ReviewVerdict>)> {
        self.items
            .iter()
            .map(|i| (i.sample_id.clone(), i.status, i.verdict.clone()))
            .collect()
    }
}

struct LogWriter {
    path: PathBuf,
    file: File,
    fsync: bool,
}

impl LogWriter {
    fn append(&mut self, event: &LogEvent) -> Result<(), ReviewError> {
        let mut line = serde_json::to_vec(event).expect("log events serialize");
        line.push(b'\n');
        let io = |source| ReviewError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&line).map_err(io)?;
        if self.fsync {
            self.file.sync_data().map_err(io)?;
        }
        Ok(())
    }
}

/// Reads a log. A final line without its newline that fails to parse is a
/// torn write and is dropped; any other bad line is an error. Returns the
/// events and the byte length of the valid prefix.
pub fn read_log(path: &Path) -> Result<(Vec<LogEvent>, u64), ReviewError> {
    let io = |source| ReviewError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = BufReader::new(File::open(path).map_err(io)?);
    let mut events = Vec::new();
    let mut valid_len = 0u64;
    let mut line_no = 0;
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(io)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        if buf.trim().is_empty() {
            valid_len += n as u64;
            continue;
        }
        match serde_json::from_str::<LogEvent>(buf.trim_end()) {
            Ok(e) if complete => {
                events.push(e);
                valid_len += n as u64;
            }
            Ok(_) | Err(_) if !complete => {
                tracing::warn!(path = %path.display(), line = line_no, "dropping torn final log record");
                break;
            }
            Ok(_) => unreachable!(),
            Err(e) => {
                return Err(ReviewError::Corrupt {
                    path: path.to_path_buf(),
                    line: line_no,
                    detail: e.to_string(),
                })
            }
        }
    }
    Ok((events, valid_len))
}

/// Rebuilds queue state from a log file.
pub fn replay_log(path: &Path) -> Result<QueueState, ReviewError> {
    let (events, _) = read_log(path)?;
    let mut state = QueueState::default();
    for e in &events {
        state.apply(e);
    }
    Ok(state)
}

pub struct ReviewQueue {
    snapshot: RwLock<Arc<QueueState>>,
    writer: Mutex<Option<LogWriter>>,
    clock: Arc<dyn Clock>,
    lease: Duration,
}

impl std::fmt::Debug for ReviewQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReviewQueue")
            .field("stats", &self.stats())
            .finish()
    }
}

impl ReviewQueue {
    /// Queue without persistence.
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(QueueState::default())),
            writer: Mutex::new(None),
            clock,
            lease: DEFAULT_LEASE,
        }
    }

    /// Opens the queue stored in `dir`, replaying its log.
    pub fn open(dir: &Path) -> Result<Self, ReviewError> {
        Self::open_with(dir, Arc::new(SystemClock), DEFAULT_LEASE, true)
    }

    pub fn open_with(
        dir: &Path,
        clock: Arc<dyn Clock>,
        lease: Duration,
        fsync: bool,
    ) -> Result<Self, ReviewError> {
        let path = dir.join(LOG_FILE);
        let io = |source| ReviewError::Io {
            path: path.clone(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut state = QueueState::default();
        if path.exists() {
            let (events, valid_len) = read_log(&path)?;
            for e in &events {
                state.apply(e);
            }
            let file = OpenOptions::new().write(true).open(&path).map_err(io)?;
            file.set_len(valid_len).map_err(io)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        Ok(Self {
            snapshot: RwLock::new(Arc::new(state)),
            writer: Mutex::new(Some(LogWriter { path, file, fsync })),
            clock,
            lease,
        })
    }

    pub fn with_lease(mut self, lease: Duration) -> Self {
        self.lease = lease;
        self
    }

    pub fn snapshot(&self) -> Arc<QueueState> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    /// Runs `f` on a copy of the state while holding the writer, logging
    /// the events it returns before publishing the copy.
    fn mutate<T>(
        &self,
        f: impl FnOnce(&mut QueueState, u64) -> Result<(T, Vec<LogEvent>), ReviewError>,
    ) -> Result<T, ReviewError> {
        let mut writer = self.writer.lock().expect("writer lock poisoned");
        let mut state = (*self.snapshot()).clone();
        let (out, events) = f(&mut state, self.clock.now_ms())?;
        if let Some(w) = writer.as_mut() {
            for e in &events {
                w.append(e)?;
            }
        }
        *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(state);
        Ok(out)
    }

    /// Adds samples not already queued. The batch is all-or-nothing: one
    /// sample below the rewritten stage or with an invalid format rejects
    /// the whole batch.
    pub fn enqueue_batch(&self, samples: Vec<SynthesizedSample>) -> Result<EnqueueReport, ReviewError> {
        for s in &samples {
            if s.pipeline_stage < PipelineStage::Rewritten {
                return Err(ReviewError::Malformed {
                    sample_id: s.sample_id.clone(),
                    reason: format!("stage {:?} is below rewritten", s.pipeline_stage),
                });
            }
            let max_turns = DEFAULT_MAX_TURNS.max(s.trajectory.turns.len());
            let report = validate_with(&s.trajectory, s.validation_profile(), max_turns);
            if !report.valid {
                let codes: Vec<_> = report.violations.iter().map(|v| v.code).collect();
                return Err(ReviewError::Malformed {
                    sample_id: s.sample_id.clone(),
                    reason: format!("format violations {codes:?}"),
                });
            }
        }
        self.mutate(|state, now| {
            let mut report = EnqueueReport::default();
            let mut events = Vec::new();
            for sample in samples {
                if state.index.contains_key(&sample.sample_id) {
                    report.already_present += 1;
                    continue;
                }
                let event = LogEvent::Enqueued {
                    seq: state.next_seq,
                    at_ms: now,
                    sample,
                };
                state.apply(&event);
                events.push(event);
                report.enqueued += 1;
            }
            Ok((report, events))
        })
    }

    /// The annotator's current leased item, or else the first pending item
    /// nobody holds a live lease on, leased to them.
    pub fn next_item(&self, annotator_id: &str) -> Result<Option<ReviewItem>, ReviewError> {
        let lease_ms = self.lease.as_millis() as u64;
        self.mutate(|state, now| {
            let live = |i: &ReviewItem| i.lease_expires_ms.is_some_and(|t| t > now);
            let pick = state
                .items
                .iter()
                .position(|i| {
                    i.status == ReviewStatus::Pending
                        && live(i)
                        && i.assigned_to.as_deref() == Some(annotator_id)
                })
                .or_else(|| {
                    state
                        .items
                        .iter()
                        .position(|i| i.status == ReviewStatus::Pending && !live(i))
                });
            let Some(i) = pick else {
                return Ok((None, Vec::new()));
            };
            let item = &mut state.items[i];
            item.assigned_to = Some(annotator_id.to_string());
            item.lease_expires_ms = Some(now + lease_ms);
            Ok((Some(item.clone()), Vec::new()))
        })
    }

    pub fn get(&self, sample_id: &str) -> Option<ReviewItem> {
        self.snapshot().get(sample_id).cloned()
    }

    pub fn submit_verdict(&self, mut verdict: ReviewVerdict) -> Result<ReviewItem, ReviewError> {
        if verdict.annotator_id.trim().is_empty() {
            return Err(ReviewError::InvalidVerdict("annotator_id is empty".into()));
        }
        match verdict.decision {
            Decision::Reject if verdict.reject_reasons.is_empty() => {
                return Err(ReviewError::InvalidVerdict(
                    "a rejection needs at least one reason".into(),
                ))
            }
            Decision::Accept if !verdict.reject_reasons.is_empty() => {
                return Err(ReviewError::InvalidVerdict(
                    "an acceptance cannot carry reject reasons".into(),
                ))
            }
            _ => {}
        }
        self.mutate(|state, now| {
            let item = state
                .get(&verdict.sample_id)
                .ok_or_else(|| ReviewError::UnknownSample(verdict.sample_id.clone()))?;
            if item.status != ReviewStatus::Pending {
                return Err(ReviewError::AlreadyDecided(verdict.sample_id.clone()));
            }
            let lease_live = item.lease_expires_ms.is_some_and(|t| t > now);
            if let (true, Some(holder)) = (lease_live, &item.assigned_to) {
                if holder != &verdict.annotator_id {
                    return Err(ReviewError::LeasedToOther {
                        sample_id: verdict.sample_id.clone(),
                        holder: holder.clone(),
                    });
                }
            }
            if verdict.timestamp_ms == 0 {
                verdict.timestamp_ms = now;
            }
            let event = LogEvent::Verdict {
                seq: state.next_seq,
                verdict: verdict.clone(),
            };
            state.apply(&event);
            let item = state.get(&verdict.sample_id).cloned().expect("just applied");
            Ok((item, vec![event]))
        })
    }

    /// Accepted samples in enqueue order.
    pub fn export_verified(&self) -> Vec<SynthesizedSample> {
        self.snapshot()
            .items
            .iter()
            .filter(|i| i.status == ReviewStatus::Accepted)
            .map(|i| i.sample.clone())
            .collect()
    }

    pub fn stats(&self) -> QueueStats {
        let now = self.clock.now_ms();
        let snap = self.snapshot();
        let mut s = QueueStats {
            total: snap.items.len(),
            ..QueueStats::default()
        };
        for i in &snap.items {
            match i.status {
                ReviewStatus::Pending => {
                    s.pending += 1;
                    if i.lease_expires_ms.is_some_and(|t| t > now) {
                        s.leased += 1;
                    }
                }
                ReviewStatus::Accepted => s.accepted += 1,
                ReviewStatus::Rejected => s.rejected += 1,
            }
        }
        s
    }
}
