//! Millisecond-precision UTC timestamps.

use chrono::{DateTime, DurationRound, SecondsFormat, TimeDelta, Utc};

/// Current UTC time truncated to whole milliseconds, so that every stored
/// timestamp survives a round trip through the export format unchanged.
pub fn now_millis() -> DateTime<Utc> {
    truncate_millis(Utc::now())
}

pub fn truncate_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    t.duration_trunc(TimeDelta::milliseconds(1)).unwrap_or(t)
}

/// `2024-05-01T12:00:00.000Z`
pub fn format_iso_millis(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_iso(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|t| t.with_timezone(&Utc))
}
