//! Append-only annotation event log.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{ParticipantId, StudyId};
use crate::session::SessionEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Presented,
    Decided,
    Undone,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Presented => "presented",
            EventKind::Decided => "decided",
            EventKind::Undone => "undone",
        }
    }
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            SessionEvent::Presented { .. } => EventKind::Presented,
            SessionEvent::Decided { .. } => EventKind::Decided,
            SessionEvent::Undone { .. } => EventKind::Undone,
        }
    }
}

/// A stored session event. `recorded_at` is the server clock at append time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub event_id: u64,
    pub study_id: StudyId,
    pub participant_id: ParticipantId,
    pub recorded_at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: SessionEvent,
}

/// In-memory event log. Ids start at 1 and increase by one per append; there
/// is no way to modify or remove an event.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<AnnotationEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(
        &mut self,
        study_id: &StudyId,
        participant_id: &ParticipantId,
        event: SessionEvent,
        recorded_at: DateTime<Utc>,
    ) -> &AnnotationEvent {
        let event_id = self.events.len() as u64 + 1;
        self.events.push(AnnotationEvent {
            event_id,
            study_id: study_id.clone(),
            participant_id: participant_id.clone(),
            recorded_at,
            event,
        });
        self.events.last().expect("just pushed")
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnnotationEvent> {
        self.events.iter()
    }

    /// Events of one session in append order.
    pub fn session_events(&self, study_id: &StudyId, participant_id: &ParticipantId) -> Vec<SessionEvent> {
        self.events
            .iter()
            .filter(|e| &e.study_id == study_id && &e.participant_id == participant_id)
            .map(|e| e.event.clone())
            .collect()
    }

    pub fn participants(&self, study_id: &StudyId) -> BTreeSet<ParticipantId> {
        self.events
            .iter()
            .filter(|e| &e.study_id == study_id)
            .map(|e| e.participant_id.clone())
            .collect()
    }

    /// A copy holding only the first `n` events.
    pub fn prefix(&self, n: usize) -> EventLog {
        EventLog {
            events: self.events[..n.min(self.events.len())].to_vec(),
        }
    }
}
