//! Per-participant annotation session.
//!
//! A [`SessionState`] is a pure fold over the session's event log. Live calls
//! ([`SessionState::next_item`], [`SessionState::submit`],
//! [`SessionState::undo`]) mutate the state and append the corresponding
//! [`SessionEvent`] to [`SessionState::log`]; [`SessionState::replay`] feeds a
//! stored log back through the same transitions.
//!
//! Deck layout: the primary deck is `order[cursor..]`; postponed items wait in
//! `postpone_queue` and are served once the primary deck is exhausted. Each
//! patch is always in exactly one of {terminal, pending primary, postponed}.
//!
//! Undo reverses the most recent decision that has not been undone yet. The
//! record is kept (flagged `undone`) and the patch goes back to where it came
//! from, which makes it the next item presented.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ParticipantId, PatchId, StudyId};
use crate::ingest::Dataset;
use crate::model::{
    resolve_direction, ClassLabel, DirectionAction, DirectionMapping, ResolveError, StudyConfig,
    StudyMode, SwipeDirection,
};
use crate::order::{build_order, OrderError};
use crate::time::truncate_millis;

/// Durations above one hour are treated as missing.
pub const MAX_DURATION_MS: i64 = 60 * 60 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceType {
    Mobile,
    Tablet,
    Desktop,
    #[default]
    Unknown,
}

impl DeviceType {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceType::Mobile => "mobile",
            DeviceType::Tablet => "tablet",
            DeviceType::Desktop => "desktop",
            DeviceType::Unknown => "unknown",
        }
    }
}

impl fmt::Display for DeviceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mobile" => Ok(DeviceType::Mobile),
            "tablet" => Ok(DeviceType::Tablet),
            "desktop" => Ok(DeviceType::Desktop),
            "unknown" | "" => Ok(DeviceType::Unknown),
            other => Err(format!("unknown device type {other:?}")),
        }
    }
}

/// One swipe decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub study_id: StudyId,
    pub participant_id: ParticipantId,
    pub patch_id: PatchId,
    pub image_filename: String,
    /// Position of the patch in this participant's order.
    pub sequence_index: usize,
    pub presentation_index: u64,
    pub direction: SwipeDirection,
    pub action: DirectionAction,
    pub presented_at: DateTime<Utc>,
    pub decided_at: DateTime<Utc>,
    /// `None` when the measured duration was negative or implausibly long.
    pub duration_ms: Option<u64>,
    pub duration_flagged: bool,
    /// Effective postpones of this patch, counting this decision when it is a
    /// postpone itself.
    pub postpone_count: u32,
    /// Number of earlier decisions for this patch that were undone.
    pub undo_generation: u32,
    pub device_type: DeviceType,
    pub training_correct: Option<bool>,
    pub undone: bool,
}

impl AnnotationRecord {
    pub fn label(&self) -> Option<&ClassLabel> {
        self.action.as_label()
    }

    /// A label decision that is still in force.
    pub fn is_terminal(&self) -> bool {
        !self.undone && self.label().is_some()
    }
}

/// Append-only session event. Together with the study and dataset these are
/// sufficient to rebuild a [`SessionState`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionEvent {
    Presented {
        patch_id: PatchId,
        presentation_index: u64,
        presented_at: DateTime<Utc>,
    },
    Decided {
        direction: SwipeDirection,
        decided_at: DateTime<Utc>,
        #[serde(default)]
        client_duration_ms: Option<i64>,
        #[serde(default)]
        device_type: DeviceType,
    },
    Undone {
        undone_at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("the study is closed")]
    SessionClosed,
    #[error(transparent)]
    Unassigned(#[from] ResolveError),
    #[error("no item is awaiting a decision")]
    NoOutstandingPresentation,
    #[error("no postpone direction is configured")]
    PostponeNotConfigured,
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("undo is disabled after a training answer was revealed")]
    UndoDisabled,
    #[error("decision time precedes presentation time")]
    DecisionBeforePresentation,
    #[error("participant is not assigned to this study")]
    NotAssigned,
    #[error("the study is closed")]
    StudyClosed,
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error("event {index} does not replay: {reason}")]
    ReplayDivergence { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRef {
    pub patch_id: PatchId,
    pub filename: String,
    pub ground_truth: Option<ClassLabel>,
}

/// Everything a session needs to know about its study and dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionContext {
    pub study_id: StudyId,
    pub participant_id: ParticipantId,
    pub mode: StudyMode,
    pub mapping: DirectionMapping,
    pub patches: Vec<PatchRef>,
    pub closed: bool,
}

impl SessionContext {
    pub fn new(config: &StudyConfig, dataset: &Dataset, participant_id: ParticipantId) -> Self {
        Self {
            study_id: config.study_id.clone(),
            participant_id,
            mode: config.mode,
            mapping: config.mapping.clone(),
            patches: dataset
                .patches
                .iter()
                .map(|p| PatchRef {
                    patch_id: p.patch_id.clone(),
                    filename: p.filename.clone(),
                    ground_truth: p.ground_truth.clone(),
                })
                .collect(),
            closed: false,
        }
    }

    fn config_view(&self) -> StudyConfig {
        // resolve_direction only reads the mapping.
        let mut c = StudyConfig::new(self.study_id.clone(), "");
        c.mapping = self.mapping.clone();
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeckSource {
    Primary,
    Postponed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub patch_index: usize,
    pub patch_id: PatchId,
    pub image_filename: String,
    pub sequence_index: usize,
    pub presentation_index: u64,
    pub presented_at: DateTime<Utc>,
    pub source: DeckSource,
    pub postpone_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextItem {
    Present(Presentation),
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub record: AnnotationRecord,
    /// Ground truth to show the participant (training mode label decisions).
    pub reveal: Option<ClassLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub labeled: usize,
    pub total: usize,
    pub postponed: usize,
    pub pending_primary: usize,
    pub completed: bool,
    /// No event has been recorded yet.
    pub fresh: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    ctx: SessionContext,
    order: Vec<usize>,
    sequence_of: Vec<usize>,
    cursor: usize,
    postpone_queue: VecDeque<usize>,
    terminal: Vec<bool>,
    postpone_count: Vec<u32>,
    undo_generation: Vec<u32>,
    history: Vec<AnnotationRecord>,
    /// History indices of decisions not yet undone, oldest first.
    effective: Vec<(usize, DeckSource)>,
    outstanding: Option<Presentation>,
    next_presentation: u64,
    revealed: bool,
    log: Vec<SessionEvent>,
}

impl SessionState {
    pub fn new(ctx: SessionContext) -> Result<Self, SessionError> {
        let n = ctx.patches.len();
        let order = build_order(ctx.study_id.as_str(), ctx.participant_id.as_str(), n)?;
        let mut sequence_of = vec![0; n];
        for (seq, &p) in order.iter().enumerate() {
            sequence_of[p] = seq;
        }
        Ok(Self {
            ctx,
            order,
            sequence_of,
            cursor: 0,
            postpone_queue: VecDeque::new(),
            terminal: vec![false; n],
            postpone_count: vec![0; n],
            undo_generation: vec![0; n],
            history: Vec::new(),
            effective: Vec::new(),
            outstanding: None,
            next_presentation: 0,
            revealed: false,
            log: Vec::new(),
        })
    }

    /// Rebuilds a session from its stored events.
    pub fn replay(ctx: SessionContext, events: &[SessionEvent]) -> Result<Self, SessionError> {
        let mut state = Self::new(ctx)?;
        for (index, ev) in events.iter().enumerate() {
            state
                .apply(ev)
                .map_err(|e| SessionError::ReplayDivergence {
                    index,
                    reason: e.to_string(),
                })?;
        }
        Ok(state)
    }

    /// Applies one stored event; used by [`SessionState::replay`].
    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), SessionError> {
        match event {
            SessionEvent::Presented {
                patch_id,
                presentation_index,
                presented_at,
            } => {
                if self.outstanding.is_some() {
                    return Err(SessionError::ReplayDivergence {
                        index: self.log.len(),
                        reason: "presentation while another is outstanding".into(),
                    });
                }
                match self.present(*presented_at) {
                    NextItem::Present(p)
                        if &p.patch_id == patch_id && p.presentation_index == *presentation_index =>
                    {
                        Ok(())
                    }
                    other => Err(SessionError::ReplayDivergence {
                        index: self.log.len(),
                        reason: format!("expected {patch_id} #{presentation_index}, deck gives {other:?}"),
                    }),
                }
            }
            SessionEvent::Decided {
                direction,
                decided_at,
                client_duration_ms,
                device_type,
            } => self
                .decide(*direction, *decided_at, *client_duration_ms, *device_type)
                .map(|_| ()),
            SessionEvent::Undone { undone_at } => self.revert(*undone_at).map(|_| ()),
        }
    }

    pub fn context(&self) -> &SessionContext {
        &self.ctx
    }

    pub fn study_id(&self) -> &StudyId {
        &self.ctx.study_id
    }

    pub fn participant_id(&self) -> &ParticipantId {
        &self.ctx.participant_id
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn postpone_queue(&self) -> &VecDeque<usize> {
        &self.postpone_queue
    }

    /// Every decision ever made, including undone ones.
    pub fn history(&self) -> &[AnnotationRecord] {
        &self.history
    }

    pub fn log(&self) -> &[SessionEvent] {
        &self.log
    }

    pub fn outstanding(&self) -> Option<&Presentation> {
        self.outstanding.as_ref()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_terminal(&self, patch_index: usize) -> bool {
        self.terminal[patch_index]
    }

    pub fn terminal_count(&self) -> usize {
        self.terminal.iter().filter(|t| **t).count()
    }

    pub fn completed(&self) -> bool {
        self.terminal_count() == self.len()
    }

    pub fn set_closed(&mut self, closed: bool) {
        self.ctx.closed = closed;
    }

    pub fn progress(&self) -> Progress {
        let labeled = self.terminal_count();
        Progress {
            labeled,
            total: self.len(),
            postponed: self.postpone_queue.len(),
            pending_primary: self.len() - self.cursor,
            completed: labeled == self.len(),
            fresh: self.log.is_empty(),
        }
    }

    /// Terminal decisions in force, in sequence order.
    pub fn terminal_records(&self) -> Vec<&AnnotationRecord> {
        let mut out: Vec<&AnnotationRecord> =
            self.history.iter().filter(|r| r.is_terminal()).collect();
        out.sort_by_key(|r| r.sequence_index);
        out
    }

    /// Presents the next item, or returns the item already awaiting a
    /// decision.
    pub fn next_item(&mut self, now: DateTime<Utc>) -> Result<NextItem, SessionError> {
        if self.ctx.closed {
            return Err(SessionError::SessionClosed);
        }
        if let Some(p) = &self.outstanding {
            return Ok(NextItem::Present(p.clone()));
        }
        Ok(self.present(now))
    }

    fn present(&mut self, now: DateTime<Utc>) -> NextItem {
        let (patch_index, source) = if self.cursor < self.order.len() {
            (self.order[self.cursor], DeckSource::Primary)
        } else if let Some(&p) = self.postpone_queue.front() {
            (p, DeckSource::Postponed)
        } else {
            return NextItem::Done;
        };
        let patch = &self.ctx.patches[patch_index];
        let presentation = Presentation {
            patch_index,
            patch_id: patch.patch_id.clone(),
            image_filename: patch.filename.clone(),
            sequence_index: self.sequence_of[patch_index],
            presentation_index: self.next_presentation,
            presented_at: truncate_millis(now),
            source,
            postpone_count: self.postpone_count[patch_index],
        };
        self.next_presentation += 1;
        self.log.push(SessionEvent::Presented {
            patch_id: presentation.patch_id.clone(),
            presentation_index: presentation.presentation_index,
            presented_at: presentation.presented_at,
        });
        self.outstanding = Some(presentation.clone());
        NextItem::Present(presentation)
    }

    /// Records a swipe on the outstanding item.
    pub fn submit(
        &mut self,
        direction: SwipeDirection,
        decided_at: DateTime<Utc>,
        client_duration_ms: Option<i64>,
        device_type: DeviceType,
    ) -> Result<SubmitOutcome, SessionError> {
        if self.ctx.closed {
            return Err(SessionError::SessionClosed);
        }
        self.decide(direction, decided_at, client_duration_ms, device_type)
    }

    /// Postpones the outstanding item via whichever direction carries the
    /// postpone action.
    pub fn postpone(
        &mut self,
        decided_at: DateTime<Utc>,
        client_duration_ms: Option<i64>,
        device_type: DeviceType,
    ) -> Result<SubmitOutcome, SessionError> {
        let direction = self
            .ctx
            .mapping
            .postpone_direction()
            .ok_or(SessionError::PostponeNotConfigured)?;
        self.submit(direction, decided_at, client_duration_ms, device_type)
    }

    fn decide(
        &mut self,
        direction: SwipeDirection,
        decided_at: DateTime<Utc>,
        client_duration_ms: Option<i64>,
        device_type: DeviceType,
    ) -> Result<SubmitOutcome, SessionError> {
        let presentation = self
            .outstanding
            .clone()
            .ok_or(SessionError::NoOutstandingPresentation)?;
        let action = resolve_direction(&self.ctx.config_view(), direction)?;
        let decided_at = truncate_millis(decided_at);
        if decided_at < presentation.presented_at {
            return Err(SessionError::DecisionBeforePresentation);
        }

        let measured = client_duration_ms
            .unwrap_or_else(|| (decided_at - presentation.presented_at).num_milliseconds());
        let (duration_ms, duration_flagged) = if (0..=MAX_DURATION_MS).contains(&measured) {
            (Some(measured as u64), false)
        } else {
            (None, true)
        };

        let p = presentation.patch_index;
        let source = presentation.source;
        match source {
            DeckSource::Primary => self.cursor += 1,
            DeckSource::Postponed => {
                self.postpone_queue.pop_front();
            }
        }

        let mut reveal = None;
        let mut training_correct = None;
        match &action {
            DirectionAction::Label(label) => {
                self.terminal[p] = true;
                if self.ctx.mode == StudyMode::Training {
                    let truth = self.ctx.patches[p].ground_truth.clone();
                    training_correct = Some(truth.as_ref() == Some(label));
                    reveal = truth;
                    self.revealed = true;
                }
            }
            DirectionAction::Postpone => {
                self.postpone_count[p] += 1;
                self.postpone_queue.push_back(p);
            }
            DirectionAction::Unassigned => unreachable!("resolve_direction rejects unassigned"),
        }

        let record = AnnotationRecord {
            study_id: self.ctx.study_id.clone(),
            participant_id: self.ctx.participant_id.clone(),
            patch_id: presentation.patch_id.clone(),
            image_filename: presentation.image_filename.clone(),
            sequence_index: presentation.sequence_index,
            presentation_index: presentation.presentation_index,
            direction,
            action,
            presented_at: presentation.presented_at,
            decided_at,
            duration_ms,
            duration_flagged,
            postpone_count: self.postpone_count[p],
            undo_generation: self.undo_generation[p],
            device_type,
            training_correct,
            undone: false,
        };
        self.effective.push((self.history.len(), source));
        self.history.push(record.clone());
        self.outstanding = None;
        self.log.push(SessionEvent::Decided {
            direction,
            decided_at,
            client_duration_ms,
            device_type,
        });
        Ok(SubmitOutcome { record, reveal })
    }

    /// Reverts the most recent decision in force and returns the patch that
    /// will be presented next.
    pub fn undo(&mut self, now: DateTime<Utc>) -> Result<PatchId, SessionError> {
        if self.ctx.closed {
            return Err(SessionError::SessionClosed);
        }
        self.revert(now)
    }

    fn revert(&mut self, now: DateTime<Utc>) -> Result<PatchId, SessionError> {
        if self.ctx.mode == StudyMode::Training && self.revealed {
            return Err(SessionError::UndoDisabled);
        }
        let (h, source) = self.effective.pop().ok_or(SessionError::NothingToUndo)?;
        self.history[h].undone = true;
        let p = self.order[self.history[h].sequence_index];

        if self.history[h].label().is_some() {
            self.terminal[p] = false;
        } else {
            let back = self.postpone_queue.pop_back();
            debug_assert_eq!(back, Some(p));
            self.postpone_count[p] -= 1;
        }
        match source {
            DeckSource::Primary => self.cursor -= 1,
            DeckSource::Postponed => self.postpone_queue.push_front(p),
        }
        self.undo_generation[p] += 1;
        self.outstanding = None;
        self.log.push(SessionEvent::Undone {
            undone_at: truncate_millis(now),
        });
        Ok(self.ctx.patches[p].patch_id.clone())
    }

    /// Checks the structural invariants; returns a description of the first
    /// one that fails.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.len();
        let mut sorted = self.order.clone();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return Err("order is not a permutation".into());
        }
        if self.cursor > n {
            return Err("cursor out of range".into());
        }
        let mut place = vec![0u8; n];
        for (p, t) in self.terminal.iter().enumerate() {
            if *t {
                place[p] += 1;
            }
        }
        for &p in &self.order[self.cursor..] {
            place[p] += 1;
        }
        for &p in &self.postpone_queue {
            place[p] += 1;
        }
        if let Some(p) = place.iter().position(|c| *c != 1) {
            return Err(format!("patch {p} is in {} places", place[p]));
        }
        let terminal_records = self.history.iter().filter(|r| r.is_terminal()).count();
        if terminal_records != self.terminal_count() {
            return Err("terminal records disagree with terminal set".into());
        }
        if self
            .history
            .windows(2)
            .any(|w| w[0].presentation_index >= w[1].presentation_index)
        {
            return Err("presentation_index not strictly increasing".into());
        }
        Ok(())
    }
}

/// Rebuilds a participant's session for a live study.
pub fn resume(
    config: &StudyConfig,
    dataset: &Dataset,
    participant_id: &ParticipantId,
    closed: bool,
    events: &[SessionEvent],
) -> Result<SessionState, SessionError> {
    if !config.is_assigned(participant_id) {
        return Err(SessionError::NotAssigned);
    }
    if closed {
        return Err(SessionError::StudyClosed);
    }
    SessionState::replay(
        SessionContext::new(config, dataset, participant_id.clone()),
        events,
    )
}
