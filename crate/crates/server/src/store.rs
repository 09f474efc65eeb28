//! Embedded SQLite store: users, groups, tokens, datasets, studies and the
//! append-only annotation event table.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use patchswipe_core::events::AnnotationEvent;
use patchswipe_core::{Dataset, DatasetId, GroupId, ParticipantId, SessionEvent, StudyConfig, StudyId};
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::{Principal, Role};

const SCHEMA: &str = r#"
PRAGMA foreign_keys = ON;

CREATE TABLE IF NOT EXISTS users (
    username      TEXT PRIMARY KEY,
    display_name  TEXT NOT NULL,
    password_hash TEXT NOT NULL,
    role          TEXT NOT NULL CHECK (role IN ('admin', 'participant')),
    created_at    TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS groups (
    group_id   TEXT PRIMARY KEY,
    name       TEXT NOT NULL UNIQUE,
    created_at TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS group_members (
    group_id TEXT NOT NULL REFERENCES groups(group_id),
    username TEXT NOT NULL REFERENCES users(username),
    PRIMARY KEY (group_id, username)
);

CREATE TABLE IF NOT EXISTS tokens (
    token      TEXT PRIMARY KEY,
    username   TEXT NOT NULL REFERENCES users(username),
    expires_at INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS datasets (
    dataset_id TEXT PRIMARY KEY,
    name       TEXT NOT NULL,
    body       TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS studies (
    study_id   TEXT PRIMARY KEY,
    name       TEXT NOT NULL,
    state      TEXT NOT NULL CHECK (state IN ('draft', 'open', 'closed')),
    config     TEXT NOT NULL,
    created_at TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS events (
    event_id       INTEGER PRIMARY KEY AUTOINCREMENT,
    study_id       TEXT NOT NULL REFERENCES studies(study_id),
    participant_id TEXT NOT NULL,
    kind           TEXT NOT NULL,
    payload        TEXT NOT NULL,
    recorded_at    TEXT NOT NULL
);

CREATE INDEX IF NOT EXISTS events_by_session ON events (study_id, participant_id, event_id);

CREATE TRIGGER IF NOT EXISTS events_no_update BEFORE UPDATE ON events
BEGIN
    SELECT RAISE(ABORT, 'annotation events are append-only');
END;

CREATE TRIGGER IF NOT EXISTS events_no_delete BEFORE DELETE ON events
BEGIN
    SELECT RAISE(ABORT, 'annotation events are append-only');
END;
"#;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("database: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("stored json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} already exists")]
    Duplicate(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("corrupt row: {0}")]
    Corrupt(String),
}

pub type StoreResult<T> = Result<T, StoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyState {
    Draft,
    Open,
    Closed,
}

impl StudyState {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyState::Draft => "draft",
            StudyState::Open => "open",
            StudyState::Closed => "closed",
        }
    }

    fn parse(s: &str) -> Self {
        match s {
            "open" => StudyState::Open,
            "closed" => StudyState::Closed,
            _ => StudyState::Draft,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub name: String,
    pub state: StudyState,
    pub config: StudyConfig,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserRecord {
    pub username: ParticipantId,
    pub display_name: String,
    pub role: Role,
    #[serde(skip)]
    pub password_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupRecord {
    pub group_id: GroupId,
    pub name: String,
    pub members: Vec<ParticipantId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub dataset_id: DatasetId,
    pub name: String,
}

fn is_unique_violation(e: &rusqlite::Error) -> bool {
    matches!(
        e,
        rusqlite::Error::SqliteFailure(f, _)
            if f.code == rusqlite::ErrorCode::ConstraintViolation
    )
}

pub struct Store {
    conn: Mutex<Connection>,
}

impl Store {
    pub fn open(path: &Path) -> StoreResult<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "NORMAL")?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> StoreResult<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> StoreResult<Self> {
        conn.execute_batch(SCHEMA)?;
        Ok(Self {
            conn: Mutex::new(conn),
        })
    }

    fn conn(&self) -> std::sync::MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|p| p.into_inner())
    }

    // ---- users and groups ----

    pub fn create_user(
        &self,
        username: &ParticipantId,
        display_name: &str,
        password_hash: &str,
        role: Role,
    ) -> StoreResult<()> {
        self.conn()
            .execute(
                "INSERT INTO users (username, display_name, password_hash, role, created_at)
                 VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    username.as_str(),
                    display_name,
                    password_hash,
                    role.as_str(),
                    Utc::now().to_rfc3339()
                ],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    StoreError::Duplicate(format!("user {username}"))
                } else {
                    e.into()
                }
            })?;
        Ok(())
    }

    pub fn user(&self, username: &str) -> StoreResult<Option<UserRecord>> {
        Ok(self
            .conn()
            .query_row(
                "SELECT username, display_name, role, password_hash FROM users WHERE username = ?1",
                [username],
                |r| {
                    Ok(UserRecord {
                        username: ParticipantId::new(r.get::<_, String>(0)?),
                        display_name: r.get(1)?,
                        role: Role::parse(&r.get::<_, String>(2)?).unwrap_or(Role::Participant),
                        password_hash: r.get(3)?,
                    })
                },
            )
            .optional()?)
    }

    pub fn create_group(&self, name: &str, members: &[ParticipantId]) -> StoreResult<GroupRecord> {
        let group_id = GroupId::new(uuid::Uuid::new_v4().to_string());
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        tx.execute(
            "INSERT INTO groups (group_id, name, created_at) VALUES (?1, ?2, ?3)",
            params![group_id.as_str(), name, Utc::now().to_rfc3339()],
        )
        .map_err(|e| {
            if is_unique_violation(&e) {
                StoreError::Duplicate(format!("group {name:?}"))
            } else {
                e.into()
            }
        })?;
        for m in members {
            insert_member(&tx, &group_id, m)?;
        }
        tx.commit()?;
        Ok(GroupRecord {
            group_id,
            name: name.to_owned(),
            members: members.to_vec(),
        })
    }

    pub fn add_to_group(&self, group_id: &GroupId, username: &ParticipantId) -> StoreResult<()> {
        let conn = self.conn();
        let exists: bool = conn
            .query_row("SELECT 1 FROM groups WHERE group_id = ?1", [group_id.as_str()], |_| Ok(true))
            .optional()?
            .unwrap_or(false);
        if !exists {
            return Err(StoreError::NotFound(format!("group {group_id}")));
        }
        insert_member(&conn, group_id, username)
    }

    pub fn group_members(&self, group_id: &GroupId) -> StoreResult<Vec<ParticipantId>> {
        let conn = self.conn();
        let exists: bool = conn
            .query_row("SELECT 1 FROM groups WHERE group_id = ?1", [group_id.as_str()], |_| Ok(true))
            .optional()?
            .unwrap_or(false);
        if !exists {
            return Err(StoreError::NotFound(format!("group {group_id}")));
        }
        let mut stmt =
            conn.prepare("SELECT username FROM group_members WHERE group_id = ?1 ORDER BY username")?;
        let rows = stmt.query_map([group_id.as_str()], |r| r.get::<_, String>(0))?;
        rows.map(|r| r.map(ParticipantId::new).map_err(StoreError::from))
            .collect()
    }

    // ---- tokens ----

    pub fn insert_token(&self, token: &str, username: &ParticipantId, expires_at: DateTime<Utc>) -> StoreResult<()> {
        self.conn().execute(
            "INSERT INTO tokens (token, username, expires_at) VALUES (?1, ?2, ?3)",
            params![token, username.as_str(), expires_at.timestamp_millis()],
        )?;
        Ok(())
    }

    /// The token's owner, unless the token is unknown or expired at `now`.
    pub fn principal_for_token(&self, token: &str, now: DateTime<Utc>) -> StoreResult<Option<Principal>> {
        Ok(self
            .conn()
            .query_row(
                "SELECT u.username, u.role FROM tokens t JOIN users u ON u.username = t.username
                 WHERE t.token = ?1 AND t.expires_at > ?2",
                params![token, now.timestamp_millis()],
                |r| {
                    Ok(Principal {
                        username: ParticipantId::new(r.get::<_, String>(0)?),
                        role: Role::parse(&r.get::<_, String>(1)?).unwrap_or(Role::Participant),
                    })
                },
            )
            .optional()?)
    }

    // ---- datasets ----

    pub fn insert_dataset(&self, dataset: &Dataset) -> StoreResult<()> {
        self.conn().execute(
            "INSERT INTO datasets (dataset_id, name, body) VALUES (?1, ?2, ?3)",
            params![
                dataset.dataset_id.as_str(),
                dataset.name,
                serde_json::to_string(dataset)?
            ],
        )?;
        Ok(())
    }

    pub fn dataset(&self, id: &DatasetId) -> StoreResult<Option<Dataset>> {
        let body: Option<String> = self
            .conn()
            .query_row("SELECT body FROM datasets WHERE dataset_id = ?1", [id.as_str()], |r| r.get(0))
            .optional()?;
        Ok(body.map(|b| serde_json::from_str(&b)).transpose()?)
    }

    pub fn list_datasets(&self) -> StoreResult<Vec<DatasetSummary>> {
        let conn = self.conn();
        let mut stmt = conn.prepare("SELECT dataset_id, name FROM datasets ORDER BY name, dataset_id")?;
        let rows = stmt.query_map([], |r| {
            Ok(DatasetSummary {
                dataset_id: DatasetId::new(r.get::<_, String>(0)?),
                name: r.get(1)?,
            })
        })?;
        rows.map(|r| r.map_err(StoreError::from)).collect()
    }

    // ---- studies ----

    pub fn insert_study(&self, study: &StudyRecord) -> StoreResult<()> {
        let id = &study.config.study_id;
        self.conn()
            .execute(
                "INSERT INTO studies (study_id, name, state, config, created_at) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    id.as_str(),
                    study.name,
                    study.state.as_str(),
                    serde_json::to_string(&study.config)?,
                    study.created_at.to_rfc3339()
                ],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    StoreError::Duplicate(format!("study {id}"))
                } else {
                    e.into()
                }
            })?;
        Ok(())
    }

    pub fn study(&self, id: &StudyId) -> StoreResult<Option<StudyRecord>> {
        let row: Option<(String, String, String, String)> = self
            .conn()
            .query_row(
                "SELECT name, state, config, created_at FROM studies WHERE study_id = ?1",
                [id.as_str()],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)),
            )
            .optional()?;
        row.map(study_from_row).transpose()
    }

    pub fn list_studies(&self) -> StoreResult<Vec<StudyRecord>> {
        let conn = self.conn();
        let mut stmt =
            conn.prepare("SELECT name, state, config, created_at FROM studies ORDER BY created_at, study_id")?;
        let rows: Vec<(String, String, String, String)> = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)))?
            .collect::<Result<_, _>>()?;
        rows.into_iter().map(study_from_row).collect()
    }

    pub fn set_study_state(&self, id: &StudyId, state: StudyState) -> StoreResult<()> {
        let n = self.conn().execute(
            "UPDATE studies SET state = ?2 WHERE study_id = ?1",
            params![id.as_str(), state.as_str()],
        )?;
        if n == 0 {
            return Err(StoreError::NotFound(format!("study {id}")));
        }
        Ok(())
    }

    // ---- events ----

    /// Appends a session's new events atomically and returns them with their
    /// assigned ids.
    pub fn append_events(
        &self,
        study_id: &StudyId,
        participant_id: &ParticipantId,
        events: &[SessionEvent],
        recorded_at: DateTime<Utc>,
    ) -> StoreResult<Vec<AnnotationEvent>> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        let mut out = Vec::with_capacity(events.len());
        for ev in events {
            tx.execute(
                "INSERT INTO events (study_id, participant_id, kind, payload, recorded_at)
                 VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    study_id.as_str(),
                    participant_id.as_str(),
                    ev.kind().as_str(),
                    serde_json::to_string(ev)?,
                    patchswipe_core::time::format_iso_millis(&recorded_at)
                ],
            )?;
            out.push(AnnotationEvent {
                event_id: tx.last_insert_rowid() as u64,
                study_id: study_id.clone(),
                participant_id: participant_id.clone(),
                recorded_at,
                event: ev.clone(),
            });
        }
        tx.commit()?;
        Ok(out)
    }

    pub fn session_events(&self, study_id: &StudyId, participant_id: &ParticipantId) -> StoreResult<Vec<SessionEvent>> {
        let conn = self.conn();
        let mut stmt = conn.prepare(
            "SELECT payload FROM events WHERE study_id = ?1 AND participant_id = ?2 ORDER BY event_id",
        )?;
        let payloads: Vec<String> = stmt
            .query_map(params![study_id.as_str(), participant_id.as_str()], |r| r.get(0))?
            .collect::<Result<_, _>>()?;
        payloads
            .iter()
            .map(|p| serde_json::from_str(p).map_err(StoreError::from))
            .collect()
    }

    /// Every session's events for a study, read in one statement so the
    /// result is a consistent snapshot.
    pub fn study_events(&self, study_id: &StudyId) -> StoreResult<BTreeMap<ParticipantId, Vec<SessionEvent>>> {
        let conn = self.conn();
        let mut stmt = conn.prepare(
            "SELECT participant_id, payload FROM events WHERE study_id = ?1 ORDER BY event_id",
        )?;
        let rows: Vec<(String, String)> = stmt
            .query_map([study_id.as_str()], |r| Ok((r.get(0)?, r.get(1)?)))?
            .collect::<Result<_, _>>()?;
        let mut out: BTreeMap<ParticipantId, Vec<SessionEvent>> = BTreeMap::new();
        for (p, payload) in rows {
            out.entry(ParticipantId::new(p))
                .or_default()
                .push(serde_json::from_str(&payload)?);
        }
        Ok(out)
    }

    /// Full event rows of a study in id order.
    pub fn event_log(&self, study_id: &StudyId) -> StoreResult<Vec<AnnotationEvent>> {
        let conn = self.conn();
        let mut stmt = conn.prepare(
            "SELECT event_id, participant_id, payload, recorded_at FROM events
             WHERE study_id = ?1 ORDER BY event_id",
        )?;
        let rows: Vec<(i64, String, String, String)> = stmt
            .query_map([study_id.as_str()], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)))?
            .collect::<Result<_, _>>()?;
        rows.into_iter()
            .map(|(id, p, payload, at)| {
                Ok(AnnotationEvent {
                    event_id: id as u64,
                    study_id: study_id.clone(),
                    participant_id: ParticipantId::new(p),
                    recorded_at: patchswipe_core::time::parse_iso(&at)
                        .ok_or_else(|| StoreError::Corrupt(format!("event {id} timestamp {at:?}")))?,
                    event: serde_json::from_str(&payload)?,
                })
            })
            .collect()
    }

    /// Runs raw SQL; exists so tests can show the event table refuses
    /// modification.
    #[doc(hidden)]
    pub fn execute_raw(&self, sql: &str) -> StoreResult<usize> {
        Ok(self.conn().execute(sql, [])?)
    }
}

fn insert_member(conn: &Connection, group_id: &GroupId, username: &ParticipantId) -> StoreResult<()> {
    conn.execute(
        "INSERT OR IGNORE INTO group_members (group_id, username) VALUES (?1, ?2)",
        params![group_id.as_str(), username.as_str()],
    )
    .map_err(|e| match e {
        rusqlite::Error::SqliteFailure(f, _) if f.code == rusqlite::ErrorCode::ConstraintViolation => {
            StoreError::NotFound(format!("user {username}"))
        }
        e => e.into(),
    })?;
    Ok(())
}

fn study_from_row((name, state, config, created_at): (String, String, String, String)) -> StoreResult<StudyRecord> {
    Ok(StudyRecord {
        name,
        state: StudyState::parse(&state),
        config: serde_json::from_str(&config)?,
        created_at: patchswipe_core::time::parse_iso(&created_at)
            .ok_or_else(|| StoreError::Corrupt(format!("study timestamp {created_at:?}")))?,
    })
}
