//! Study configuration and the swipe-direction to class-label mapping.
//!
//! Everything here is an immutable value. A [`StudyConfig`] is validated once
//! when the study is created and frozen when the study is opened; after that
//! [`resolve_direction`] is a pure lookup.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{DatasetId, GroupId, ParticipantId, StudyId};
use crate::ingest::Dataset;

/// Maximum number of label directions (one per swipe direction).
pub const MAX_LABELS: usize = 4;

pub const MIN_SCALE_PERCENT: u32 = 10;
pub const MAX_SCALE_PERCENT: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwipeDirection {
    Left,
    Right,
    Up,
    Down,
}

impl SwipeDirection {
    pub const ALL: [SwipeDirection; 4] = [
        SwipeDirection::Left,
        SwipeDirection::Right,
        SwipeDirection::Up,
        SwipeDirection::Down,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SwipeDirection::Left => "left",
            SwipeDirection::Right => "right",
            SwipeDirection::Up => "up",
            SwipeDirection::Down => "down",
        }
    }
}

impl fmt::Display for SwipeDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown swipe direction {0:?}")]
pub struct ParseDirectionError(pub String);

impl FromStr for SwipeDirection {
    type Err = ParseDirectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(SwipeDirection::Left),
            "right" => Ok(SwipeDirection::Right),
            "up" => Ok(SwipeDirection::Up),
            "down" => Ok(SwipeDirection::Down),
            _ => Err(ParseDirectionError(s.to_owned())),
        }
    }
}

/// A class name. Surrounding whitespace is trimmed on construction; comparison
/// is case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct ClassLabel(String);

impl ClassLabel {
    pub fn new(name: impl AsRef<str>) -> Self {
        Self(name.as_ref().trim().to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<String> for ClassLabel {
    fn from(s: String) -> Self {
        ClassLabel::new(s)
    }
}

impl From<&str> for ClassLabel {
    fn from(s: &str) -> Self {
        ClassLabel::new(s)
    }
}

impl From<ClassLabel> for String {
    fn from(l: ClassLabel) -> Self {
        l.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionAction {
    Label(ClassLabel),
    Postpone,
    Unassigned,
}

impl DirectionAction {
    pub fn label(name: impl AsRef<str>) -> Self {
        DirectionAction::Label(ClassLabel::new(name))
    }

    pub fn as_label(&self) -> Option<&ClassLabel> {
        match self {
            DirectionAction::Label(l) => Some(l),
            _ => None,
        }
    }
}

/// Direction to action table. Directions absent from the table are
/// [`DirectionAction::Unassigned`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DirectionMapping {
    entries: BTreeMap<SwipeDirection, DirectionAction>,
}

impl DirectionMapping {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn with(mut self, direction: SwipeDirection, action: DirectionAction) -> Self {
        self.set(direction, action);
        self
    }

    pub fn set(&mut self, direction: SwipeDirection, action: DirectionAction) {
        if action == DirectionAction::Unassigned {
            self.entries.remove(&direction);
        } else {
            self.entries.insert(direction, action);
        }
    }

    pub fn get(&self, direction: SwipeDirection) -> &DirectionAction {
        self.entries
            .get(&direction)
            .unwrap_or(&DirectionAction::Unassigned)
    }

    /// Assigned (direction, action) pairs in direction order.
    pub fn iter(&self) -> impl Iterator<Item = (SwipeDirection, &DirectionAction)> {
        self.entries
            .iter()
            .filter(|(_, a)| **a != DirectionAction::Unassigned)
            .map(|(d, a)| (*d, a))
    }

    pub fn labels(&self) -> Vec<&ClassLabel> {
        self.iter().filter_map(|(_, a)| a.as_label()).collect()
    }

    pub fn label_set(&self) -> BTreeSet<ClassLabel> {
        self.labels().into_iter().cloned().collect()
    }

    pub fn postpone_direction(&self) -> Option<SwipeDirection> {
        self.iter()
            .find(|(_, a)| **a == DirectionAction::Postpone)
            .map(|(d, _)| d)
    }

    pub fn direction_for(&self, label: &ClassLabel) -> Option<SwipeDirection> {
        self.iter()
            .find(|(_, a)| a.as_label() == Some(label))
            .map(|(d, _)| d)
    }
}

/// Two classes on left/right and postpone on up; down stays unassigned.
impl Default for DirectionMapping {
    fn default() -> Self {
        DirectionMapping::empty()
            .with(SwipeDirection::Left, DirectionAction::label("normal"))
            .with(SwipeDirection::Right, DirectionAction::label("atypical"))
            .with(SwipeDirection::Up, DirectionAction::Postpone)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    #[default]
    Annotation,
    /// The ground-truth label is revealed after every label decision.
    Training,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DisplayOptions {
    /// Card size as a percentage of the available screen dimension.
    #[serde(default = "default_scale")]
    pub scale_percent: u32,
    #[serde(default)]
    pub interpolation_enabled: bool,
}

fn default_scale() -> u32 {
    MAX_SCALE_PERCENT
}

impl Default for DisplayOptions {
    fn default() -> Self {
        Self {
            scale_percent: MAX_SCALE_PERCENT,
            interpolation_enabled: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study_id: StudyId,
    pub dataset_id: DatasetId,
    #[serde(default)]
    pub mapping: DirectionMapping,
    #[serde(default)]
    pub mode: StudyMode,
    #[serde(default)]
    pub display: DisplayOptions,
    #[serde(default)]
    pub assigned_participants: BTreeSet<ParticipantId>,
}

impl StudyConfig {
    /// A configuration with the default two-class + postpone mapping.
    pub fn new(study_id: impl Into<StudyId>, dataset_id: impl Into<DatasetId>) -> Self {
        Self {
            study_id: study_id.into(),
            dataset_id: dataset_id.into(),
            mapping: DirectionMapping::default(),
            mode: StudyMode::Annotation,
            display: DisplayOptions::default(),
            assigned_participants: BTreeSet::new(),
        }
    }

    pub fn is_assigned(&self, participant: &ParticipantId) -> bool {
        self.assigned_participants.contains(participant)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: ParticipantId,
    pub display_name: String,
    pub credentials_ref: String,
    #[serde(default)]
    pub group_ids: BTreeSet<GroupId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("direction {0} is not assigned in this study")]
    UnassignedDirection(SwipeDirection),
}

/// Looks up the action configured for `direction`.
pub fn resolve_direction(
    config: &StudyConfig,
    direction: SwipeDirection,
) -> Result<DirectionAction, ResolveError> {
    match config.mapping.get(direction) {
        DirectionAction::Unassigned => Err(ResolveError::UnassignedDirection(direction)),
        action => Ok(action.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum ConfigViolation {
    #[error("no label direction")]
    NoLabelDirection,
    #[error("multiple postpone directions")]
    MultiplePostponeDirections { directions: Vec<SwipeDirection> },
    #[error("empty class name on {direction}")]
    EmptyClassName { direction: SwipeDirection },
    #[error("duplicate class name {label:?}")]
    DuplicateClassName { label: String },
    #[error("{count} label directions exceed the maximum of {MAX_LABELS}")]
    TooManyLabels { count: usize },
    #[error("scale_percent {value} outside [{MIN_SCALE_PERCENT}, {MAX_SCALE_PERCENT}]")]
    ScaleOutOfRange { value: u32 },
    #[error("no participants assigned")]
    NoParticipants,
    #[error("dataset {dataset_id} does not match the configured dataset")]
    DatasetMismatch { dataset_id: DatasetId },
    #[error("training mode requires ground truth; {missing} patches have none")]
    MissingGroundTruth { missing: usize },
    #[error("ground-truth label {label:?} is not a configured class")]
    GroundTruthNotInMapping { label: String },
}

pub type Validation = Result<(), Vec<ConfigViolation>>;

fn into_validation(violations: Vec<ConfigViolation>) -> Validation {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

fn mapping_violations(config: &StudyConfig) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    let labels: Vec<(SwipeDirection, &ClassLabel)> = config
        .mapping
        .iter()
        .filter_map(|(d, a)| a.as_label().map(|l| (d, l)))
        .collect();

    if labels.is_empty() {
        out.push(ConfigViolation::NoLabelDirection);
    }
    if labels.len() > MAX_LABELS {
        out.push(ConfigViolation::TooManyLabels {
            count: labels.len(),
        });
    }

    let postpones: Vec<SwipeDirection> = config
        .mapping
        .iter()
        .filter(|(_, a)| **a == DirectionAction::Postpone)
        .map(|(d, _)| d)
        .collect();
    if postpones.len() > 1 {
        out.push(ConfigViolation::MultiplePostponeDirections {
            directions: postpones,
        });
    }

    let mut seen = BTreeSet::new();
    for (direction, label) in &labels {
        if label.as_str().is_empty() {
            out.push(ConfigViolation::EmptyClassName {
                direction: *direction,
            });
        } else if !seen.insert(label.as_str()) {
            out.push(ConfigViolation::DuplicateClassName {
                label: label.to_string(),
            });
        }
    }

    let scale = config.display.scale_percent;
    if !(MIN_SCALE_PERCENT..=MAX_SCALE_PERCENT).contains(&scale) {
        out.push(ConfigViolation::ScaleOutOfRange { value: scale });
    }
    out
}

/// Checks the mapping and display invariants. Every violation is reported.
pub fn validate_config(config: &StudyConfig) -> Validation {
    into_validation(mapping_violations(config))
}

/// [`validate_config`] plus the dataset-dependent rules: the dataset must be
/// the referenced one, and training mode needs a ground-truth label for every
/// patch drawn from the configured classes.
pub fn validate_for_dataset(config: &StudyConfig, dataset: &Dataset) -> Validation {
    let mut out = mapping_violations(config);
    if dataset.dataset_id != config.dataset_id {
        out.push(ConfigViolation::DatasetMismatch {
            dataset_id: dataset.dataset_id.clone(),
        });
    }
    if config.mode == StudyMode::Training {
        let missing = dataset
            .patches
            .iter()
            .filter(|p| p.ground_truth.is_none())
            .count();
        if missing > 0 {
            out.push(ConfigViolation::MissingGroundTruth { missing });
        }
        let known = config.mapping.label_set();
        let unknown: BTreeSet<&ClassLabel> = dataset
            .patches
            .iter()
            .filter_map(|p| p.ground_truth.as_ref())
            .filter(|l| !known.contains(*l))
            .collect();
        out.extend(unknown.into_iter().map(|l| ConfigViolation::GroundTruthNotInMapping {
            label: l.to_string(),
        }));
    }
    into_validation(out)
}

/// Rules that must hold before a study can be opened.
pub fn validate_for_open(config: &StudyConfig, dataset: &Dataset) -> Validation {
    let mut out = match validate_for_dataset(config, dataset) {
        Ok(()) => Vec::new(),
        Err(v) => v,
    };
    if config.assigned_participants.is_empty() {
        out.push(ConfigViolation::NoParticipants);
    }
    into_validation(out)
}
