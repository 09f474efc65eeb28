//! Study-wide views over the event log: every participant's session, the
//! CSV export and the agreement report.

use std::collections::BTreeMap;

use crate::analytics::{report_from_ratings, AgreementError, AgreementReport, RatingRecord};
use crate::events::EventLog;
use crate::export::{export_rows, to_csv_bytes, ExportOptions};
use crate::ids::ParticipantId;
use crate::ingest::Dataset;
use crate::model::StudyConfig;
use crate::session::{SessionContext, SessionError, SessionEvent, SessionState};

/// Replays the sessions of every participant that has events, keyed by
/// participant. Closed studies replay like open ones.
pub fn replay_sessions<'a, I>(
    config: &StudyConfig,
    dataset: &Dataset,
    events: I,
) -> Result<BTreeMap<ParticipantId, SessionState>, SessionError>
where
    I: IntoIterator<Item = (&'a ParticipantId, &'a [SessionEvent])>,
{
    events
        .into_iter()
        .map(|(p, evs)| {
            let ctx = SessionContext::new(config, dataset, p.clone());
            SessionState::replay(ctx, evs).map(|s| (p.clone(), s))
        })
        .collect()
}

pub fn replay_from_log(
    config: &StudyConfig,
    dataset: &Dataset,
    log: &EventLog,
) -> Result<BTreeMap<ParticipantId, SessionState>, SessionError> {
    let per: Vec<(ParticipantId, Vec<SessionEvent>)> = log
        .participants(&config.study_id)
        .into_iter()
        .map(|p| {
            let evs = log.session_events(&config.study_id, &p);
            (p, evs)
        })
        .collect();
    replay_sessions(config, dataset, per.iter().map(|(p, e)| (p, e.as_slice())))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportOutput {
    pub csv: Vec<u8>,
    pub rows: usize,
    /// Set when there is nothing to export; the file then holds only the
    /// header.
    pub no_annotations: bool,
}

pub fn export_study<'a, I>(sessions: I, options: ExportOptions) -> ExportOutput
where
    I: IntoIterator<Item = &'a SessionState>,
{
    let rows = export_rows(sessions, options);
    ExportOutput {
        csv: to_csv_bytes(&rows),
        rows: rows.len(),
        no_annotations: rows.is_empty(),
    }
}

/// Agreement report over all given sessions, using the study's configured
/// classes as the category universe.
pub fn study_report<'a, I>(config: &StudyConfig, sessions: I) -> Result<AgreementReport, AgreementError>
where
    I: IntoIterator<Item = &'a SessionState>,
{
    let ratings: Vec<RatingRecord> = sessions
        .into_iter()
        .flat_map(|s| s.history().iter().map(RatingRecord::from))
        .collect();
    report_from_ratings(&ratings, config.mapping.label_set())
}
