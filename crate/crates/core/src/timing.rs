use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stage-additivity tolerance in milliseconds.
pub const ADDITIVITY_TOLERANCE_MS: f64 = 0.1;

/// Per-frame wall-clock breakdown, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub pre_process_ms: f64,
    pub inference_ms: f64,
    pub nms_ms: f64,
    pub total_ms: f64,
}

impl FrameTiming {
    /// Builds a timing whose total is the sum of the three stages.
    pub fn from_stages(pre_process_ms: f64, inference_ms: f64, nms_ms: f64) -> Self {
        Self {
            pre_process_ms,
            inference_ms,
            nms_ms,
            total_ms: pre_process_ms + inference_ms + nms_ms,
        }
    }

    pub fn stage_sum(&self) -> f64 {
        self.pre_process_ms + self.inference_ms + self.nms_ms
    }

    /// True when every stage is non-negative and the total equals the stage sum.
    pub fn is_additive(&self) -> bool {
        let stages = [self.pre_process_ms, self.inference_ms, self.nms_ms, self.total_ms];
        stages.iter().all(|v| v.is_finite() && *v >= 0.0)
            && (self.total_ms - self.stage_sum()).abs() <= ADDITIVITY_TOLERANCE_MS
    }
}

/// Componentwise mean of a non-empty timing list.
pub fn aggregate_timings(timings: &[FrameTiming]) -> Result<FrameTiming> {
    if timings.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot aggregate an empty timing list".into(),
        ));
    }
    let n = timings.len() as f64;
    let mut sum = FrameTiming::default();
    for t in timings {
        sum.pre_process_ms += t.pre_process_ms;
        sum.inference_ms += t.inference_ms;
        sum.nms_ms += t.nms_ms;
        sum.total_ms += t.total_ms;
    }
    Ok(FrameTiming {
        pre_process_ms: sum.pre_process_ms / n,
        inference_ms: sum.inference_ms / n,
        nms_ms: sum.nms_ms / n,
        total_ms: sum.total_ms / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_examples() {
        let one = FrameTiming::from_stages(1.0, 2.0, 3.0);
        assert_eq!(
            aggregate_timings(&[one]).unwrap(),
            FrameTiming::from_stages(1.0, 2.0, 3.0)
        );

        let mean = aggregate_timings(&[
            FrameTiming::from_stages(0.0, 4.0, 2.0),
            FrameTiming::from_stages(2.0, 4.0, 0.0),
        ])
        .unwrap();
        assert_eq!(mean, FrameTiming::from_stages(1.0, 4.0, 1.0));
        assert_eq!(mean.total_ms, 6.0);
    }

    #[test]
    fn aggregate_empty_is_error() {
        assert!(aggregate_timings(&[]).is_err());
    }

    #[test]
    fn additivity_check() {
        assert!(FrameTiming::from_stages(0.1, 3.4, 1.6).is_additive());
        let faulty = FrameTiming {
            pre_process_ms: 1.0,
            inference_ms: 2.0,
            nms_ms: 3.0,
            total_ms: 7.0,
        };
        assert!(!faulty.is_additive());
    }
}
