//! Per-second stakeholder report: CSV rows and a JSON summary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::SecondSample;

pub const CSV_HEADER: [&str; 8] = [
    "D",
    "H",
    "M",
    "S",
    "Video Time",
    "Time (formatted)",
    "DD_HH_MM_SS",
    "Detected",
];

/// Reports cover less than this many days so `DD` stays two digits.
pub const MAX_REPORT_DAYS: u64 = 100;

const DAY: u64 = 86_400;

/// Splits whole seconds into days, hours, minutes and seconds.
pub fn decompose_time(video_time: i64) -> Result<(u64, u64, u64, u64)> {
    let t =
        u64::try_from(video_time).map_err(|_| Error::Report(format!("negative video time {video_time}")))?;
    Ok((t / DAY, t % DAY / 3600, t % 3600 / 60, t % 60))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub d: u64,
    pub h: u64,
    pub m: u64,
    pub s: u64,
    pub video_time: u64,
    pub time_formatted: String,
    pub dd_hh_mm_ss: String,
    pub detected: u64,
}

impl ReportRow {
    pub fn new(video_time: u64, detected: u64) -> Result<Self> {
        let (d, h, m, s) = decompose_time(video_time as i64)?;
        if d >= MAX_REPORT_DAYS {
            return Err(Error::Report(format!(
                "video time {video_time} s reaches {MAX_REPORT_DAYS} days"
            )));
        }
        Ok(Self {
            d,
            h,
            m,
            s,
            video_time,
            time_formatted: format!("{d} days {h} hours {m} mins {s} secs"),
            dd_hh_mm_ss: format!("{d:02}:{h:02}:{m:02}:{s:02}"),
            detected,
        })
    }

    fn check(&self) -> Result<()> {
        let expect = Self::new(self.video_time, self.detected)?;
        if *self != expect {
            return Err(Error::Report(format!(
                "inconsistent row for video time {}",
                self.video_time
            )));
        }
        Ok(())
    }
}

/// One row per `(second, count)`. Seconds must be consecutive.
pub fn build_report(series: &[(u64, u64)]) -> Result<Vec<ReportRow>> {
    for w in series.windows(2) {
        if w[1].0 != w[0].0 + 1 {
            return Err(Error::Report(format!(
                "series jumps from second {} to {}",
                w[0].0, w[1].0
            )));
        }
    }
    series.iter().map(|&(t, n)| ReportRow::new(t, n)).collect()
}

/// Adapter for [`crate::pipeline::per_second_series`] output.
pub fn series_pairs(samples: &[SecondSample]) -> Vec<(u64, u64)> {
    samples
        .iter()
        .map(|s| (s.video_time_s, s.detected as u64))
        .collect()
}

/// UTF-8, LF line endings, header first.
pub fn write_csv(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.d.to_string(),
            r.h.to_string(),
            r.m.to_string(),
            r.s.to_string(),
            r.video_time.to_string(),
            r.time_formatted.clone(),
            r.dd_hh_mm_ss.clone(),
            r.detected.to_string(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::Report(format!("flushing CSV: {e}")))
}

/// Parses and validates a report written by [`write_csv`].
pub fn parse_csv(bytes: &[u8]) -> Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::Report("unexpected CSV header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Report(format!("row {}: expected 8 fields", i + 1)));
        }
        let num = |k: usize| -> Result<u64> {
            rec[k]
                .parse()
                .map_err(|_| Error::Report(format!("row {}: bad {} {:?}", i + 1, CSV_HEADER[k], &rec[k])))
        };
        let row = ReportRow {
            d: num(0)?,
            h: num(1)?,
            m: num(2)?,
            s: num(3)?,
            video_time: num(4)?,
            time_formatted: rec[5].to_string(),
            dd_hh_mm_ss: rec[6].to_string(),
            detected: num(7)?,
        };
        row.check()?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinuteBucket {
    pub minute: u64,
    /// Seconds in this minute with at least one detection.
    pub detection_seconds: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub total_seconds: u64,
    pub detection_seconds: u64,
    pub max_simultaneous: u64,
    /// `DD:HH:MM:SS` of the first second with a detection.
    pub first_detection: Option<String>,
    pub last_detection: Option<String>,
    /// Every minute spanned by the rows, in order.
    pub per_minute_series: Vec<MinuteBucket>,
}

pub fn summarize(rows: &[ReportRow]) -> ReportSummary {
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return ReportSummary::default();
    };
    let first_minute = first.video_time / 60;
    let mut per_minute: Vec<MinuteBucket> = (first_minute..=last.video_time / 60)
        .map(|minute| MinuteBucket {
            minute,
            detection_seconds: 0,
        })
        .collect();
    let hits: Vec<&ReportRow> = rows.iter().filter(|r| r.detected > 0).collect();
    for r in &hits {
        per_minute[(r.video_time / 60 - first_minute) as usize].detection_seconds += 1;
    }
    ReportSummary {
        total_seconds: rows.len() as u64,
        detection_seconds: hits.len() as u64,
        max_simultaneous: rows.iter().map(|r| r.detected).max().unwrap_or(0),
        first_detection: hits.first().map(|r| r.dd_hh_mm_ss.clone()),
        last_detection: hits.last().map(|r| r.dd_hh_mm_ss.clone()),
        per_minute_series: per_minute,
    }
}

/// Pretty JSON with a trailing newline.
pub fn summary_json(summary: &ReportSummary) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(summary)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposes() {
        assert_eq!(decompose_time(966).unwrap(), (0, 0, 16, 6));
        assert_eq!(decompose_time(0).unwrap(), (0, 0, 0, 0));
        assert_eq!(decompose_time(90061).unwrap(), (1, 1, 1, 1));
        assert!(decompose_time(-1).is_err());
    }

    #[test]
    fn row_strings() {
        let r = ReportRow::new(966, 1).unwrap();
        assert_eq!(r.time_formatted, "0 days 0 hours 16 mins 6 secs");
        assert_eq!(r.dd_hh_mm_ss, "00:00:16:06");
        assert_eq!(
            ReportRow::new(61, 0).unwrap().time_formatted,
            "0 days 0 hours 1 mins 1 secs"
        );
        assert!(ReportRow::new(MAX_REPORT_DAYS * DAY - 1, 0).is_ok());
        assert!(ReportRow::new(MAX_REPORT_DAYS * DAY, 0).is_err());
    }

    #[test]
    fn contiguity() {
        assert!(build_report(&[(1, 0), (3, 0)]).is_err());
        assert!(build_report(&[(1, 0), (1, 0)]).is_err());
        assert_eq!(build_report(&[(0, 0)]).unwrap().len(), 1);
        assert!(build_report(&[]).unwrap().is_empty());
    }

    #[test]
    fn csv_header_only() {
        assert_eq!(
            write_csv(&[]).unwrap(),
            b"D,H,M,S,Video Time,Time (formatted),DD_HH_MM_SS,Detected\n"
        );
    }

    #[test]
    fn csv_round_trip() {
        let rows = build_report(&[(59, 0), (60, 2), (61, 1)]).unwrap();
        let bytes = write_csv(&rows).unwrap();
        assert!(!bytes.contains(&b'\r') && !bytes.contains(&b'"'));
        assert_eq!(parse_csv(&bytes).unwrap(), rows);
    }

    #[test]
    fn parse_rejects_inconsistent_rows() {
        let bad = b"D,H,M,S,Video Time,Time (formatted),DD_HH_MM_SS,Detected\n0,0,0,1,2,0 days 0 hours 0 mins 1 secs,00:00:00:01,0\n";
        assert!(parse_csv(bad).is_err());
        assert!(parse_csv(b"a,b\n").is_err());
    }

    #[test]
    fn summary_fields() {
        let rows = build_report(&[(58, 0), (59, 2), (60, 0), (61, 1)]).unwrap();
        let s = summarize(&rows);
        assert_eq!(s.total_seconds, 4);
        assert_eq!(s.detection_seconds, 2);
        assert_eq!(s.max_simultaneous, 2);
        assert_eq!(s.first_detection.as_deref(), Some("00:00:00:59"));
        assert_eq!(s.last_detection.as_deref(), Some("00:00:01:01"));
        assert_eq!(
            s.per_minute_series,
            vec![
                MinuteBucket {
                    minute: 0,
                    detection_seconds: 1
                },
                MinuteBucket {
                    minute: 1,
                    detection_seconds: 1
                }
            ]
        );
        assert_eq!(summarize(&[]), ReportSummary::default());
        let json: serde_json::Value = serde_json::from_slice(&summary_json(&s).unwrap()).unwrap();
        for k in [
            "total_seconds",
            "detection_seconds",
            "max_simultaneous",
            "first_detection",
            "last_detection",
            "per_minute_series",
        ] {
            assert!(json.get(k).is_some(), "{k}");
        }
    }
}
