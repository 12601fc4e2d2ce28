use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::ClassId;
use crate::geometry::NormalizedCenterBox;

/// One line of an annotation sidecar: `<class> <cx> <cy> <w> <h>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: ClassId,
    pub bbox: NormalizedCenterBox,
}

/// Splits `text` into numbered, non-blank lines of whitespace-separated fields.
pub(crate) fn fields(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, f)| !f.is_empty())
}

pub(crate) fn parse_box(line: usize, f: &[&str]) -> Result<Annotation> {
    let err = |message: String| Error::Annotation { line, message };
    let class_id = f[0]
        .parse::<ClassId>()
        .map_err(|_| err(format!("invalid class id {:?}", f[0])))?;
    let mut v = [0.0f64; 4];
    for (slot, token) in v.iter_mut().zip(&f[1..5]) {
        *slot = token
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| err(format!("invalid number {token:?}")))?;
    }
    if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(err(format!("coordinate {x} outside [0, 1]")));
    }
    let bbox = NormalizedCenterBox::new(v[0], v[1], v[2], v[3]).map_err(|e| err(e.to_string()))?;
    Ok(Annotation { class_id, bbox })
}

/// Parses an annotation sidecar. An empty file is an image without objects.
pub fn parse_annotation_file(text: &str) -> Result<Vec<Annotation>> {
    fields(text)
        .map(|(line, f)| {
            if f.len() != 5 {
                return Err(Error::Annotation {
                    line,
                    message: format!("expected 5 fields, found {}", f.len()),
                });
            }
            parse_box(line, &f)
        })
        .collect()
}

/// Writes annotations in the sidecar format (LF line endings).
pub fn serialize_annotations(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        let b = &a.bbox;
        let _ = writeln!(out, "{} {} {} {} {}", a.class_id, b.cx, b.cy, b.w, b.h);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_box() {
        let boxes = parse_annotation_file("0 0.5 0.5 0.2 0.1").unwrap();
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].class_id, 0);
        assert_eq!(
            boxes[0].bbox,
            NormalizedCenterBox::new(0.5, 0.5, 0.2, 0.1).unwrap()
        );
    }

    #[test]
    fn empty_file_is_no_boxes() {
        assert!(parse_annotation_file("").unwrap().is_empty());
        assert!(parse_annotation_file("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn out_of_range_reports_line() {
        let err = parse_annotation_file("0 0.5 0.5 0.2 0.1\n0 1.5 0.5 0.2 0.1\n").unwrap_err();
        match err {
            Error::Annotation { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("outside"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_annotation_file("0 0.5 0.5 0.2"),
            Err(Error::Annotation { line: 1, .. })
        ));
        assert!(parse_annotation_file("bee 0.5 0.5 0.2 0.1").is_err());
        assert!(parse_annotation_file("0 0.5 x 0.2 0.1").is_err());
        assert!(parse_annotation_file("0 0.5 0.5 0 0.1").is_err());
        assert!(parse_annotation_file("0 NaN 0.5 0.2 0.1").is_err());
    }

    #[test]
    fn serialize_then_parse() {
        let src = "0 0.5 0.5 0.2 0.1\n3 0.123456789 0.9 1 0.001\n";
        let parsed = parse_annotation_file(src).unwrap();
        assert_eq!(serialize_annotations(&parsed), src);
    }
}
