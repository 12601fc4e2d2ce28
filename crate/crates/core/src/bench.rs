//! Per-stage timing benchmark over repeated pipeline runs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backend::Detector;
use crate::error::{Error, Result};
use crate::format::fixed_half_up;
use crate::media::VideoSource;
use crate::pipeline::{process_video, KeyframePolicy};
use crate::timing::{aggregate_timings, FrameTiming};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub repeats: usize,
    /// Frames measured across all repeats.
    pub frames: usize,
    pub mean: FrameTiming,
    /// Frames whose total differs from the stage sum.
    pub non_additive: usize,
    /// Mean wall time of one full pass, in milliseconds.
    pub pass_ms: f64,
}

/// Runs the pipeline `repeats` times; `open` supplies a fresh stream per pass.
pub fn run_bench(
    open: &mut dyn FnMut() -> Result<Box<dyn VideoSource>>,
    backend: &mut dyn Detector,
    policy: &KeyframePolicy,
    repeats: usize,
) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeat count must be positive".into()));
    }
    let mut timings = Vec::new();
    let mut pass_ms = 0.0;
    for _ in 0..repeats {
        let out = process_video(open()?, backend, policy, &mut ())?;
        if let Some(stop) = out.interruption {
            return Err(Error::InvalidArgument(format!(
                "benchmark pass incomplete: {stop}"
            )));
        }
        pass_ms += out.elapsed_ms;
        timings.extend(out.events.iter().map(|e| e.timing));
    }
    Ok(BenchReport {
        model: backend.descriptor().name.clone(),
        repeats,
        frames: timings.len(),
        mean: aggregate_timings(&timings)?,
        non_additive: timings.iter().filter(|t| !t.is_additive()).count(),
        pass_ms: pass_ms / repeats as f64,
    })
}

const COLUMNS: [&str; 5] = ["Model", "Pre-process", "Inference", "NMS", "Total"];

impl BenchReport {
    fn cells(&self) -> [String; 5] {
        let ms = |v: f64| fixed_half_up(v, 1);
        [
            self.model.clone(),
            ms(self.mean.pre_process_ms),
            ms(self.mean.inference_ms),
            ms(self.mean.nms_ms),
            ms(self.mean.total_ms),
        ]
    }

    /// Fixed-width table of mean milliseconds per frame, then `# ` notes.
    pub fn render_table(&self) -> String {
        let cells = self.cells();
        let widths: Vec<usize> = COLUMNS
            .iter()
            .zip(&cells)
            .map(|(h, c)| h.len().max(c.len()))
            .collect();
        let mut out = String::new();
        for row in [COLUMNS.map(String::from), cells] {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "# mean ms per frame over {} frames, {} repeat(s)",
            self.frames, self.repeats
        );
        if self.non_additive > 0 {
            let _ = writeln!(
                out,
                "# WARNING: stage additivity violated in {} of {} frames",
                self.non_additive, self.frames
            );
        }
        out
    }

    pub fn render_csv(&self) -> String {
        format!(
            "model,pre_process_ms,inference_ms,nms_ms,total_ms,frames,repeats,non_additive\n{},{},{},{},{},{},{},{}\n",
            self.model,
            self.mean.pre_process_ms,
            self.mean.inference_ms,
            self.mean.nms_ms,
            self.mean.total_ms,
            self.frames,
            self.repeats,
            self.non_additive
        )
    }
}
