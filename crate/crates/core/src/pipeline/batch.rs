use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use futures::stream::{self, StreamExt};
use serde::Serialize;

use super::{Engine, PipelineError};
use crate::dataset::{read_records, truncate_malformed_tail, RecordWriter};
use crate::model::{ImageRef, RecordStatus};

/// Totals for one batch run; `images_total = ok + degraded + failed + skipped_resume`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub images_total: usize,
    pub ok: usize,
    pub degraded: usize,
    pub failed: usize,
    pub skipped_resume: usize,
    pub wall_time: f64,
}

impl RunSummary {
    pub fn reconciles(&self) -> bool {
        self.images_total == self.ok + self.degraded + self.failed + self.skipped_resume
    }

    /// Same counts, ignoring wall time.
    pub fn same_counts(&self, other: &RunSummary) -> bool {
        RunSummary {
            wall_time: 0.0,
            ..self.clone()
        } == RunSummary {
            wall_time: 0.0,
            ..other.clone()
        }
    }
}

/// Emitted once per completed image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressEvent {
    pub image_id: u64,
    pub status: RecordStatus,
    pub elapsed_ms: u128,
}

impl std::fmt::Display for ProgressEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "image={} status={} elapsed_ms={}",
            self.image_id, self.status, self.elapsed_ms
        )
    }
}

impl Engine {
    /// Captions every image of `index` into the JSONL file at `output`.
    ///
    /// Without `resume` the output is started afresh. With `resume`, a
    /// malformed final line is cut off and images whose id is already in the
    /// file are skipped. Records are written by this task alone, one whole
    /// line at a time, in completion order.
    pub async fn run_batch(
        &self,
        index: &[ImageRef],
        output: &Path,
        resume: bool,
    ) -> Result<RunSummary, PipelineError> {
        let started = Instant::now();
        let out_err = |detail: String| PipelineError::Output {
            path: output.to_path_buf(),
            detail,
        };

        let mut done: HashSet<u64> = HashSet::new();
        if resume && output.exists() {
            if let Some(bad) = truncate_malformed_tail(output).map_err(|e| out_err(e.to_string()))? {
                tracing::warn!(line = bad.line, error = %bad.error, "dropped malformed trailing record");
            }
            let scan = read_records(output).map_err(|e| out_err(e.to_string()))?;
            for m in &scan.malformed {
                tracing::warn!(line = m.line, error = %m.error, "malformed record line in output");
            }
            done.extend(scan.records.iter().map(|r| r.image.id));
        } else if output.exists() {
            std::fs::File::create(output).map_err(|e| out_err(e.to_string()))?;
        }
        let mut writer = RecordWriter::open_append(output).map_err(|e| out_err(e.to_string()))?;

        let mut summary = RunSummary {
            images_total: index.len(),
            ..Default::default()
        };
        let mut queued = HashSet::new();
        let mut todo = Vec::new();
        for image in index {
            if done.contains(&image.id) || !queued.insert(image.id) {
                summary.skipped_resume += 1;
            } else {
                todo.push(image);
            }
        }

        let mut results = stream::iter(todo)
            .map(|image| async move {
                let t = Instant::now();
                let record = self.process_image(image).await;
                (record, t.elapsed().as_millis())
            })
            .buffer_unordered(self.config().image_concurrency.max(1));

        let mut written = HashSet::new();
        while let Some((record, elapsed_ms)) = results.next().await {
            if !written.insert(record.image.id) {
                return Err(out_err(format!("record for image {} produced twice", record.image.id)));
            }
            writer.append(&record).map_err(|e| out_err(e.to_string()))?;
            match record.status {
                RecordStatus::Ok => summary.ok += 1,
                RecordStatus::Degraded => summary.degraded += 1,
                RecordStatus::Failed => summary.failed += 1,
            }
            if let Some(progress) = &self.inner.progress {
                progress(&ProgressEvent {
                    image_id: record.image.id,
                    status: record.status,
                    elapsed_ms,
                });
            }
        }
        summary.wall_time = started.elapsed().as_secs_f64();
        Ok(summary)
    }
}
