//! Annotation CSV export and re-import.
//!
//! RFC 4180 quoting, LF line endings, UTF-8, header row first. Timestamps are
//! ISO-8601 UTC with milliseconds and a trailing `Z`; absent optionals are
//! empty cells.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::RatingRecord;
use crate::ids::{ParticipantId, StudyId};
use crate::model::{ClassLabel, DirectionAction, SwipeDirection};
use crate::session::{AnnotationRecord, DeviceType, SessionState};
use crate::time::format_iso_millis;

pub const COLUMNS: [&str; 15] = [
    "study_id",
    "participant_id",
    "image_filename",
    "sequence_index",
    "presentation_index",
    "swipe_direction",
    "class_label",
    "presented_at",
    "decided_at",
    "duration_ms",
    "postpone_count",
    "undo_generation",
    "undone",
    "device_type",
    "training_correct",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRow {
    pub study_id: StudyId,
    pub participant_id: ParticipantId,
    pub image_filename: String,
    pub sequence_index: usize,
    pub presentation_index: u64,
    pub swipe_direction: SwipeDirection,
    /// Empty for postpone decisions.
    pub class_label: String,
    pub presented_at: String,
    pub decided_at: String,
    pub duration_ms: Option<u64>,
    pub postpone_count: u32,
    pub undo_generation: u32,
    pub undone: bool,
    pub device_type: DeviceType,
    pub training_correct: Option<bool>,
}

impl From<&AnnotationRecord> for ExportRow {
    fn from(r: &AnnotationRecord) -> Self {
        Self {
            study_id: r.study_id.clone(),
            participant_id: r.participant_id.clone(),
            image_filename: r.image_filename.clone(),
            sequence_index: r.sequence_index,
            presentation_index: r.presentation_index,
            swipe_direction: r.direction,
            class_label: match &r.action {
                DirectionAction::Label(l) => l.to_string(),
                _ => String::new(),
            },
            presented_at: format_iso_millis(&r.presented_at),
            decided_at: format_iso_millis(&r.decided_at),
            duration_ms: r.duration_ms,
            postpone_count: r.postpone_count,
            undo_generation: r.undo_generation,
            undone: r.undone,
            device_type: r.device_type,
            training_correct: r.training_correct,
        }
    }
}

impl From<&ExportRow> for RatingRecord {
    fn from(r: &ExportRow) -> Self {
        Self {
            rater: r.participant_id.clone(),
            item: r.image_filename.clone(),
            label: (!r.class_label.is_empty()).then(|| ClassLabel::new(&r.class_label)),
            duration_ms: r.duration_ms,
            undone: r.undone,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportOptions {
    /// Emit every decision (postpones and undone ones included) instead of
    /// one terminal row per patch.
    #[serde(default)]
    pub include_history: bool,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected header: {0:?}")]
    Header(Vec<String>),
}

/// Rows for a set of sessions, ordered by participant, then sequence index,
/// then presentation index.
pub fn export_rows<'a, I>(sessions: I, options: ExportOptions) -> Vec<ExportRow>
where
    I: IntoIterator<Item = &'a SessionState>,
{
    let mut rows: Vec<ExportRow> = sessions
        .into_iter()
        .flat_map(|s| s.history().iter())
        .filter(|r| options.include_history || r.is_terminal())
        .map(ExportRow::from)
        .collect();
    rows.sort_by(|a, b| {
        (&a.participant_id, a.sequence_index, a.presentation_index).cmp(&(
            &b.participant_id,
            b.sequence_index,
            b.presentation_index,
        ))
    });
    rows
}

pub fn write_csv<W: Write>(rows: &[ExportRow], out: W) -> Result<(), ExportError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_bytes(rows: &[ExportRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Parses an export file; the header must match [`COLUMNS`] exactly.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<ExportRow>, ExportError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(ExportError::Header(header));
    }
    r.deserialize().map(|row| row.map_err(ExportError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::parse_iso;

    fn row() -> ExportRow {
        ExportRow {
            study_id: "s1".into(),
            participant_id: "p1".into(),
            image_filename: "dir/a, \"quoted\".png".into(),
            sequence_index: 3,
            presentation_index: 7,
            swipe_direction: SwipeDirection::Left,
            class_label: "normal".into(),
            presented_at: "2025-01-01T00:00:00.000Z".into(),
            decided_at: "2025-01-01T00:00:01.580Z".into(),
            duration_ms: Some(1580),
            postpone_count: 0,
            undo_generation: 1,
            undone: false,
            device_type: DeviceType::Mobile,
            training_correct: None,
        }
    }

    #[test]
    fn header_only_when_empty() {
        let bytes = to_csv_bytes(&[]);
        assert_eq!(String::from_utf8(bytes).unwrap(), COLUMNS.join(",") + "\n");
    }

    #[test]
    fn cell_encoding() {
        let text = String::from_utf8(to_csv_bytes(&[row()])).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert_eq!(
            line,
            "s1,p1,\"dir/a, \"\"quoted\"\".png\",3,7,left,normal,2025-01-01T00:00:00.000Z,\
             2025-01-01T00:00:01.580Z,1580,0,1,false,mobile,"
        );
        assert!(!text.contains('\r'));
        assert!(parse_iso("2025-01-01T00:00:01.580Z").is_some());
    }

    #[test]
    fn read_back() {
        let mut r = row();
        r.duration_ms = None;
        r.training_correct = Some(true);
        r.class_label.clear();
        let rows = read_csv(&to_csv_bytes(&[r.clone()])[..]).unwrap();
        assert_eq!(rows, vec![r]);
        let rating = RatingRecord::from(&rows[0]);
        assert_eq!(rating.label, None);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(matches!(read_csv(&b"a,b\n1,2\n"[..]), Err(ExportError::Header(_))));
    }
}
