//! Shared service state and the per-session serialization point.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, TryLockError};

use chrono::{TimeDelta, Utc};
use patchswipe_core::session::SessionContext;
use patchswipe_core::{Dataset, DatasetId, ParticipantId, SessionError, SessionState, StudyId};

use crate::auth::{hash_password, new_token, verify_password, AuthError, Principal, Role};
use crate::blobs::BlobStore;
use crate::config::Config;
use crate::error::{ApiError, ApiResult};
use crate::store::{Store, StoreError, StudyRecord, StudyState};

type SessionKey = (StudyId, ParticipantId);
/// `None` until the session has been replayed from the store.
type SessionSlot = Arc<Mutex<Option<SessionState>>>;

pub struct AppState {
    pub config: Config,
    pub store: Store,
    pub blobs: BlobStore,
    datasets: Mutex<HashMap<DatasetId, Arc<Dataset>>>,
    sessions: Mutex<HashMap<SessionKey, SessionSlot>>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct IssuedToken {
    pub token: String,
    pub expires_at: chrono::DateTime<Utc>,
    pub username: ParticipantId,
    pub role: Role,
}

impl AppState {
    /// Opens the store and blob directory named by `config` and provisions
    /// the bootstrap admin.
    pub fn open(config: Config) -> Result<Self, StoreError> {
        let store = Store::open(&config.database_path)?;
        let blobs = BlobStore::open(&config.blob_store_path)?;
        Self::with_parts(config, store, blobs)
    }

    pub fn with_parts(config: Config, store: Store, blobs: BlobStore) -> Result<Self, StoreError> {
        if let Some(admin) = &config.bootstrap_admin {
            if store.user(&admin.username)?.is_none() {
                store.create_user(
                    &ParticipantId::new(&admin.username),
                    &admin.username,
                    &hash_password(&admin.password),
                    Role::Admin,
                )?;
                tracing::info!("created bootstrap admin {:?}", admin.username);
            }
        }
        Ok(Self {
            config,
            store,
            blobs,
            datasets: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn login(&self, username: &str, password: &str) -> ApiResult<IssuedToken> {
        let user = self
            .store
            .user(username)?
            .filter(|u| verify_password(password, &u.password_hash))
            .ok_or(AuthError::InvalidCredentials)?;
        let token = new_token();
        let expires_at = Utc::now() + TimeDelta::seconds(self.config.token_ttl_secs as i64);
        self.store.insert_token(&token, &user.username, expires_at)?;
        Ok(IssuedToken {
            token,
            expires_at,
            username: user.username,
            role: user.role,
        })
    }

    pub fn principal(&self, token: &str) -> ApiResult<Principal> {
        Ok(self
            .store
            .principal_for_token(token, Utc::now())?
            .ok_or(AuthError::InvalidCredentials)?)
    }

    pub fn study(&self, id: &StudyId) -> ApiResult<StudyRecord> {
        self.store
            .study(id)?
            .ok_or_else(|| ApiError::not_found(format!("study {id}")))
    }

    pub fn dataset(&self, id: &DatasetId) -> ApiResult<Arc<Dataset>> {
        if let Some(d) = self.datasets.lock().unwrap_or_else(|p| p.into_inner()).get(id) {
            return Ok(d.clone());
        }
        let d = Arc::new(
            self.store
                .dataset(id)?
                .ok_or_else(|| ApiError::not_found(format!("dataset {id}")))?,
        );
        self.datasets
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), d.clone());
        Ok(d)
    }

    fn slot(&self, key: SessionKey) -> SessionSlot {
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .entry(key)
            .or_default()
            .clone()
    }

    /// Rebuilds a session from the stored events without touching the live
    /// copy, for read-only views.
    pub fn snapshot_session(&self, study: &StudyRecord, participant: &ParticipantId) -> ApiResult<SessionState> {
        let dataset = self.dataset(&study.config.dataset_id)?;
        let events = self.store.session_events(&study.config.study_id, participant)?;
        let mut ctx = SessionContext::new(&study.config, &dataset, participant.clone());
        ctx.closed = study.state != StudyState::Open;
        Ok(SessionState::replay(ctx, &events)?)
    }

    /// Runs `op` on the participant's live session with exclusive access.
    ///
    /// A concurrent request for the same session fails immediately with a
    /// conflict instead of waiting. Events produced by `op` are appended to
    /// the store before the new state becomes visible; if the append fails
    /// the live session is left unchanged.
    pub fn with_session<T>(
        &self,
        study: &StudyRecord,
        participant: &ParticipantId,
        op: impl FnOnce(&mut SessionState) -> Result<T, SessionError>,
    ) -> ApiResult<T> {
        let key = (study.config.study_id.clone(), participant.clone());
        let slot = self.slot(key);
        let mut guard = match slot.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => {
                return Err(ApiError::conflict(
                    "session_busy",
                    "another request for this session is in progress",
                ))
            }
            Err(TryLockError::Poisoned(p)) => {
                let mut g = p.into_inner();
                *g = None;
                g
            }
        };
        if guard.is_none() {
            *guard = Some(self.snapshot_session(study, participant)?);
        }
        let live = guard.as_ref().expect("loaded above");

        let mut work = live.clone();
        work.set_closed(study.state != StudyState::Open);
        let before = work.log().len();
        let result = op(&mut work);
        let fresh = &work.log()[before..];
        if !fresh.is_empty() {
            self.store
                .append_events(&study.config.study_id, participant, fresh, Utc::now())?;
        }
        *guard = Some(work);
        Ok(result?)
    }
}
