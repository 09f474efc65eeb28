//! Swipe-based image patch annotation: study configuration, archive
//! ingestion, per-participant annotation sessions, CSV export and
//! inter-rater agreement statistics.
//!
//! The crate is I/O free apart from reading archives from memory; the HTTP
//! service and CLI live in sibling crates.

pub mod analytics;
pub mod events;
pub mod export;
pub mod ids;
pub mod ingest;
pub mod model;
pub mod order;
pub mod session;
pub mod study;
pub mod time;

pub use analytics::{
    build_report, cohen_kappa, fleiss_kappa, percent_agreement, timing_summary, AgreementError,
    AgreementReport, LabelMatrix, RatingRecord,
};
pub use events::{AnnotationEvent, EventKind, EventLog};
pub use export::{ExportOptions, ExportRow};
pub use ids::{DatasetId, GroupId, ParticipantId, PatchId, StudyId};
pub use ingest::{
    ingest_archive, validate_image, ArchiveFormat, Dataset, ImageFormat, ImagePatch, IngestError,
    IngestOptions, IngestReport, Manifest,
};
pub use model::{
    resolve_direction, validate_config, ClassLabel, DirectionAction, DirectionMapping,
    DisplayOptions, StudyConfig, StudyMode, SwipeDirection,
};
pub use order::build_order;
pub use session::{
    resume, AnnotationRecord, DeviceType, NextItem, SessionContext, SessionError, SessionEvent,
    SessionState,
};
