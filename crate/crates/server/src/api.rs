//! HTTP routes.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, FromRequestParts, Multipart, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use chrono::Utc;
use patchswipe_core::analytics::{AgreementReport, UNDEFINED};
use patchswipe_core::ingest::{ingest_archive_with, IngestWarning};
use patchswipe_core::model::{validate_for_dataset, validate_for_open, ConfigViolation};
use patchswipe_core::session::{NextItem, Progress, SubmitOutcome};
use patchswipe_core::study::{export_study, replay_sessions, study_report};
use patchswipe_core::{
    ArchiveFormat, DatasetId, DeviceType, DirectionMapping, DisplayOptions, ExportOptions,
    GroupId, ImageFormat, IngestOptions, Manifest, ParticipantId, PatchId, SessionState,
    StudyConfig, StudyId, StudyMode, SwipeDirection,
};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use crate::auth::{authorize, hash_password, Action, Principal, Role};
use crate::error::{ApiError, ApiResult};
use crate::state::AppState;
use crate::store::{StudyRecord, StudyState};

type AppRef = Arc<AppState>;

pub const WARNING_HEADER: &str = "x-patchswipe-warning";

pub fn router(state: AppRef) -> Router {
    let cap = usize::try_from(state.config.upload_cap_bytes).unwrap_or(usize::MAX);
    let static_dir = state.config.static_dir.clone();

    let api = Router::new()
        .route("/api/auth/login", post(login))
        .route("/api/me", get(me))
        .route("/api/studies", get(list_studies))
        .route("/api/studies/{id}", get(get_study))
        .route("/api/studies/{id}/next", get(next_item))
        .route("/api/studies/{id}/annotations", post(submit))
        .route("/api/studies/{id}/undo", post(undo))
        .route("/api/studies/{id}/progress", get(progress))
        .route("/api/studies/{id}/patches/{patch_id}/image", get(patch_image))
        .route("/api/admin/groups", post(create_group))
        .route("/api/admin/groups/{id}/members", post(add_member))
        .route("/api/admin/users", post(create_user))
        .route("/api/admin/datasets", post(upload_dataset).get(list_datasets))
        .route("/api/admin/datasets/{id}", get(get_dataset))
        .route("/api/admin/studies", post(create_study).get(admin_list_studies))
        .route("/api/admin/studies/{id}/open", post(open_study))
        .route("/api/admin/studies/{id}/close", post(close_study))
        .route("/api/admin/studies/{id}/export.csv", get(export_csv))
        .route("/api/admin/studies/{id}/report", get(report))
        .route("/api/admin/studies/{id}/events", get(event_log))
        .route("/api/{*rest}", any(api_not_found))
        .fallback(api_not_found)
        .layer(DefaultBodyLimit::max(cap))
        .with_state(state);

    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    };
    app.layer(TraceLayer::new_for_http())
}

async fn api_not_found() -> ApiError {
    ApiError::not_found("route")
}

/// Bearer-token authentication.
pub struct Auth(pub Principal);

impl FromRequestParts<AppRef> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppRef) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(ApiError::invalid_credentials)?;
        state.principal(token).map(Auth)
    }
}

/// An authenticated admin.
pub struct Admin(pub Principal);

impl FromRequestParts<AppRef> for Admin {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppRef) -> Result<Self, Self::Rejection> {
        let Auth(p) = Auth::from_request_parts(parts, state).await?;
        authorize(&p, &Action::Administer)?;
        Ok(Admin(p))
    }
}

// ---- auth ----

#[derive(Deserialize)]
struct LoginBody {
    username: String,
    password: String,
}

async fn login(State(app): State<AppRef>, Json(body): Json<LoginBody>) -> ApiResult<impl IntoResponse> {
    Ok(Json(app.login(&body.username, &body.password)?))
}

async fn me(Auth(p): Auth) -> Json<Principal> {
    Json(p)
}

// ---- participant side ----

#[derive(Serialize)]
struct StudyView {
    study_id: StudyId,
    name: String,
    state: StudyState,
    mode: StudyMode,
    dataset_id: DatasetId,
    mapping: DirectionMapping,
    display: DisplayOptions,
    participants: Vec<ParticipantId>,
    total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    progress: Option<Progress>,
}

fn study_view(app: &AppState, study: &StudyRecord, progress: Option<Progress>) -> ApiResult<StudyView> {
    let total = app.dataset(&study.config.dataset_id)?.len();
    Ok(StudyView {
        study_id: study.config.study_id.clone(),
        name: study.name.clone(),
        state: study.state,
        mode: study.config.mode,
        dataset_id: study.config.dataset_id.clone(),
        mapping: study.config.mapping.clone(),
        display: study.config.display,
        participants: study.config.assigned_participants.iter().cloned().collect(),
        total,
        progress,
    })
}

/// The study, if the caller may annotate in it.
fn assigned_study(app: &AppState, who: &Principal, id: &StudyId) -> ApiResult<StudyRecord> {
    let study = app.study(id)?;
    authorize(
        who,
        &Action::Annotate {
            study: id,
            assigned: study.config.is_assigned(&who.username),
        },
    )?;
    Ok(study)
}

async fn list_studies(State(app): State<AppRef>, Auth(who): Auth) -> ApiResult<Json<Vec<StudyView>>> {
    authorize(&who, &Action::ListStudies)?;
    let mut out = Vec::new();
    for study in app.store.list_studies()? {
        let mine = study.config.is_assigned(&who.username);
        if !mine && who.role != Role::Admin {
            continue;
        }
        if study.state == StudyState::Draft && who.role != Role::Admin {
            continue;
        }
        let progress = if mine {
            Some(app.snapshot_session(&study, &who.username)?.progress())
        } else {
            None
        };
        out.push(study_view(&app, &study, progress)?);
    }
    Ok(Json(out))
}

async fn get_study(
    State(app): State<AppRef>,
    Auth(who): Auth,
    Path(id): Path<StudyId>,
) -> ApiResult<Json<StudyView>> {
    let study = app.study(&id)?;
    let mine = study.config.is_assigned(&who.username);
    if !mine {
        authorize(&who, &Action::Administer)?;
    }
    let progress = if mine {
        Some(app.snapshot_session(&study, &who.username)?.progress())
    } else {
        None
    };
    Ok(Json(study_view(&app, &study, progress)?))
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum NextResponse {
    Present {
        patch_id: PatchId,
        image_filename: String,
        image_url: String,
        sequence_index: usize,
        presentation_index: u64,
        presented_at: String,
        postpone_count: u32,
        postponed: bool,
        progress: Progress,
    },
    Done {
        progress: Progress,
    },
}

async fn next_item(
    State(app): State<AppRef>,
    Auth(who): Auth,
    Path(id): Path<StudyId>,
) -> ApiResult<Json<NextResponse>> {
    let study = assigned_study(&app, &who, &id)?;
    let (item, progress) = app.with_session(&study, &who.username, |s| {
        let item = s.next_item(Utc::now())?;
        Ok((item, s.progress()))
    })?;
    Ok(Json(match item {
        NextItem::Present(p) => NextResponse::Present {
            image_url: format!("/api/studies/{id}/patches/{}/image", p.patch_id),
            patch_id: p.patch_id,
            image_filename: p.image_filename,
            sequence_index: p.sequence_index,
            presentation_index: p.presentation_index,
            presented_at: patchswipe_core::time::format_iso_millis(&p.presented_at),
            postpone_count: p.postpone_count,
            postponed: p.source == patchswipe_core::session::DeckSource::Postponed,
            progress,
        },
        NextItem::Done => NextResponse::Done { progress },
    }))
}

#[derive(Deserialize)]
struct SubmitBody {
    direction: SwipeDirection,
    /// When given, the decision is only accepted for this presentation.
    #[serde(default)]
    presentation_index: Option<u64>,
    #[serde(default)]
    client_duration_ms: Option<i64>,
    #[serde(default)]
    device_type: DeviceType,
}

#[derive(Serialize)]
struct SubmitResponse {
    #[serde(flatten)]
    outcome: SubmitOutcome,
    progress: Progress,
}

/// Error raised inside a session operation when the client's view of the
/// outstanding presentation is stale.
struct Stale(u64, Option<u64>);

async fn submit(
    State(app): State<AppRef>,
    Auth(who): Auth,
    Path(id): Path<StudyId>,
    Json(body): Json<SubmitBody>,
) -> ApiResult<Json<SubmitResponse>> {
    let study = assigned_study(&app, &who, &id)?;
    let mut stale: Option<Stale> = None;
    let result = app.with_session(&study, &who.username, |s| {
        if let Some(expected) = body.presentation_index {
            let current = s.outstanding().map(|p| p.presentation_index);
            if current != Some(expected) {
                stale = Some(Stale(expected, current));
                return Ok(None);
            }
        }
        let outcome = s.submit(body.direction, Utc::now(), body.client_duration_ms, body.device_type)?;
        Ok(Some((outcome, s.progress())))
    })?;
    match (result, stale) {
        (Some((outcome, progress)), _) => Ok(Json(SubmitResponse { outcome, progress })),
        (None, Some(Stale(expected, current))) => Err(ApiError::conflict(
            "stale_presentation",
            match current {
                Some(c) => format!("presentation {expected} is no longer outstanding (current: {c})"),
                None => format!("presentation {expected} is no longer outstanding"),
            },
        )),
        (None, None) => unreachable!("no outcome without a stale presentation"),
    }
}

#[derive(Serialize)]
struct UndoResponse {
    /// The patch that will be presented next.
    patch_id: PatchId,
    progress: Progress,
}

async fn undo(
    State(app): State<AppRef>,
    Auth(who): Auth,
    Path(id): Path<StudyId>,
) -> ApiResult<Json<UndoResponse>> {
    let study = assigned_study(&app, &who, &id)?;
    let (patch_id, progress) = app.with_session(&study, &who.username, |s| {
        let p = s.undo(Utc::now())?;
        Ok((p, s.progress()))
    })?;
    Ok(Json(UndoResponse { patch_id, progress }))
}

async fn progress(
    State(app): State<AppRef>,
    Auth(who): Auth,
    Path(id): Path<StudyId>,
) -> ApiResult<Json<Progress>> {
    let study = assigned_study(&app, &who, &id)?;
    Ok(Json(app.snapshot_session(&study, &who.username)?.progress()))
}

async fn patch_image(
    State(app): State<AppRef>,
    Auth(who): Auth,
    Path((id, patch_id)): Path<(StudyId, PatchId)>,
) -> ApiResult<Response> {
    let study = app.study(&id)?;
    if !study.config.is_assigned(&who.username) {
        authorize(&who, &Action::Administer)?;
    }
    let dataset = app.dataset(&study.config.dataset_id)?;
    let patch = dataset
        .patch_index(&patch_id)
        .map(|i| &dataset.patches[i])
        .ok_or_else(|| ApiError::not_found(format!("patch {patch_id}")))?;
    let bytes = app.blobs.get(&patch.content_hash).map_err(ApiError::internal)?;
    let mime = match patch.format {
        ImageFormat::Png => "image/png",
        ImageFormat::Jpeg => "image/jpeg",
    };
    Ok((
        [
            (header::CONTENT_TYPE, mime),
            (header::CACHE_CONTROL, "private, max-age=31536000, immutable"),
        ],
        bytes,
    )
        .into_response())
}

// ---- admin: groups and users ----

#[derive(Deserialize)]
struct GroupBody {
    name: String,
    #[serde(default)]
    members: Vec<ParticipantId>,
}

async fn create_group(
    State(app): State<AppRef>,
    Admin(_): Admin,
    Json(body): Json<GroupBody>,
) -> ApiResult<impl IntoResponse> {
    let name = body.name.trim();
    if name.is_empty() {
        return Err(ApiError::bad_request("group name is empty"));
    }
    let group = app.store.create_group(name, &body.members)?;
    Ok((StatusCode::CREATED, Json(group)))
}

#[derive(Deserialize)]
struct MemberBody {
    username: ParticipantId,
}

async fn add_member(
    State(app): State<AppRef>,
    Admin(_): Admin,
    Path(id): Path<GroupId>,
    Json(body): Json<MemberBody>,
) -> ApiResult<StatusCode> {
    if app.store.user(body.username.as_str())?.is_none() {
        return Err(ApiError::not_found(format!("user {}", body.username)));
    }
    app.store.add_to_group(&id, &body.username)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct UserBody {
    username: String,
    password: String,
    #[serde(default)]
    display_name: Option<String>,
    #[serde(default = "default_role")]
    role: Role,
    #[serde(default)]
    groups: Vec<GroupId>,
}

fn default_role() -> Role {
    Role::Participant
}

async fn create_user(
    State(app): State<AppRef>,
    Admin(_): Admin,
    Json(body): Json<UserBody>,
) -> ApiResult<impl IntoResponse> {
    let username = body.username.trim();
    if username.is_empty() || body.password.is_empty() {
        return Err(ApiError::bad_request("username and password are required"));
    }
    for g in &body.groups {
        app.store.group_members(g)?;
    }
    let id = ParticipantId::new(username);
    let display = body.display_name.as_deref().unwrap_or(username);
    let hash = tokio::task::spawn_blocking({
        let pw = body.password.clone();
        move || hash_password(&pw)
    })
    .await
    .map_err(ApiError::internal)?;
    app.store.create_user(&id, display, &hash, body.role)?;
    for g in &body.groups {
        app.store.add_to_group(g, &id)?;
    }
    let user = app.store.user(username)?.expect("just created");
    Ok((StatusCode::CREATED, Json(user)))
}

// ---- admin: datasets ----

#[derive(Serialize)]
struct DatasetCreated {
    dataset_id: DatasetId,
    name: String,
    patches: usize,
    with_ground_truth: usize,
    warnings: Vec<IngestWarning>,
}

fn sniff_format(bytes: &[u8]) -> ArchiveFormat {
    if bytes.starts_with(b"PK") {
        ArchiveFormat::Zip
    } else {
        ArchiveFormat::Tar
    }
}

fn parse_flag(s: &str) -> ApiResult<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "" | "0" | "false" | "no" | "off" => Ok(false),
        other => Err(ApiError::bad_request(format!("not a boolean: {other:?}"))),
    }
}

/// Multipart fields: `archive` (file, required), `name`, `format`
/// (`zip` | `tar` | `tar.gz`), `labels` (ground-truth CSV) and `training`
/// (require ground truth for every patch).
async fn upload_dataset(
    State(app): State<AppRef>,
    Admin(_): Admin,
    mut form: Multipart,
) -> ApiResult<impl IntoResponse> {
    let mut archive: Option<(Option<String>, Vec<u8>)> = None;
    let mut name: Option<String> = None;
    let mut format: Option<ArchiveFormat> = None;
    let mut labels: Option<Vec<u8>> = None;
    let mut training = false;

    while let Some(field) = form.next_field().await? {
        let field_name = field.name().unwrap_or_default().to_owned();
        match field_name.as_str() {
            "archive" => {
                let file_name = field.file_name().map(str::to_owned);
                archive = Some((file_name, field.bytes().await?.to_vec()));
            }
            "name" => name = Some(field.text().await?.trim().to_owned()),
            "format" => {
                let text = field.text().await?;
                format = Some(text.parse().map_err(ApiError::bad_request)?);
            }
            "labels" => labels = Some(field.bytes().await?.to_vec()),
            "training" => training = parse_flag(&field.text().await?)?,
            other => return Err(ApiError::bad_request(format!("unexpected field {other:?}"))),
        }
    }

    let (file_name, bytes) = archive.ok_or_else(|| ApiError::bad_request("missing archive field"))?;
    let format = format
        .or_else(|| file_name.as_deref().and_then(ArchiveFormat::from_filename))
        .unwrap_or_else(|| sniff_format(&bytes));
    let name = name
        .filter(|n| !n.is_empty())
        .or(file_name)
        .unwrap_or_else(|| "dataset".to_owned());
    let manifest = labels.map(|l| Manifest::from_csv(&l)).transpose()?;
    let options = IngestOptions {
        manifest,
        require_ground_truth: training,
    };

    let worker = app.clone();
    let report = tokio::task::spawn_blocking(move || {
        ingest_archive_with(&bytes, format, &name, &options, |patch, data| {
            worker.blobs.put_with_hash(&patch.content_hash, data)
        })
    })
    .await
    .map_err(ApiError::internal)??;

    app.store.insert_dataset(&report.dataset)?;
    let ds = &report.dataset;
    Ok((
        StatusCode::CREATED,
        Json(DatasetCreated {
            dataset_id: ds.dataset_id.clone(),
            name: ds.name.clone(),
            patches: ds.len(),
            with_ground_truth: ds.patches.iter().filter(|p| p.ground_truth.is_some()).count(),
            warnings: report.warnings,
        }),
    ))
}

async fn list_datasets(State(app): State<AppRef>, Admin(_): Admin) -> ApiResult<impl IntoResponse> {
    Ok(Json(app.store.list_datasets()?))
}

async fn get_dataset(
    State(app): State<AppRef>,
    Admin(_): Admin,
    Path(id): Path<DatasetId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json((*app.dataset(&id)?).clone()))
}

// ---- admin: studies ----

#[derive(Deserialize)]
struct StudyBody {
    #[serde(default)]
    study_id: Option<StudyId>,
    #[serde(default)]
    name: Option<String>,
    dataset_id: DatasetId,
    #[serde(default)]
    mapping: Option<DirectionMapping>,
    #[serde(default)]
    mode: StudyMode,
    #[serde(default)]
    display: DisplayOptions,
    #[serde(default)]
    participants: Vec<ParticipantId>,
    #[serde(default)]
    groups: Vec<GroupId>,
}

fn violations_error(violations: &[ConfigViolation]) -> ApiError {
    let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
    ApiError::unprocessable("invalid_config", list.join("; ")).with_details(serde_json::json!(list))
}

async fn create_study(
    State(app): State<AppRef>,
    Admin(_): Admin,
    Json(body): Json<StudyBody>,
) -> ApiResult<impl IntoResponse> {
    let dataset = app.dataset(&body.dataset_id)?;
    let study_id = body
        .study_id
        .unwrap_or_else(|| StudyId::new(uuid::Uuid::new_v4().to_string()));
    if study_id.as_str().trim().is_empty() {
        return Err(ApiError::bad_request("study_id is empty"));
    }

    let mut participants: BTreeSet<ParticipantId> = body.participants.into_iter().collect();
    for g in &body.groups {
        participants.extend(app.store.group_members(g)?);
    }
    for p in &participants {
        if app.store.user(p.as_str())?.is_none() {
            return Err(ApiError::unprocessable("unknown_participant", format!("no user named {p}")));
        }
    }

    let mut config = StudyConfig::new(study_id.clone(), body.dataset_id);
    if let Some(m) = body.mapping {
        config.mapping = m;
    }
    config.mode = body.mode;
    config.display = body.display;
    config.assigned_participants = participants;
    validate_for_dataset(&config, &dataset).map_err(|v| violations_error(&v))?;

    let record = StudyRecord {
        name: body.name.unwrap_or_else(|| study_id.to_string()),
        state: StudyState::Draft,
        config,
        created_at: Utc::now(),
    };
    app.store.insert_study(&record)?;
    Ok((StatusCode::CREATED, Json(study_view(&app, &record, None)?)))
}

async fn admin_list_studies(State(app): State<AppRef>, Admin(_): Admin) -> ApiResult<impl IntoResponse> {
    let views = app
        .store
        .list_studies()?
        .iter()
        .map(|s| study_view(&app, s, None))
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(views))
}

async fn open_study(
    State(app): State<AppRef>,
    Admin(_): Admin,
    Path(id): Path<StudyId>,
) -> ApiResult<impl IntoResponse> {
    let mut study = app.study(&id)?;
    if study.state != StudyState::Draft {
        return Err(ApiError::conflict(
            "invalid_state",
            format!("study is {}, only a draft can be opened", study.state.as_str()),
        ));
    }
    let dataset = app.dataset(&study.config.dataset_id)?;
    validate_for_open(&study.config, &dataset).map_err(|v| violations_error(&v))?;
    app.store.set_study_state(&id, StudyState::Open)?;
    study.state = StudyState::Open;
    Ok(Json(study_view(&app, &study, None)?))
}

async fn close_study(
    State(app): State<AppRef>,
    Admin(_): Admin,
    Path(id): Path<StudyId>,
) -> ApiResult<impl IntoResponse> {
    let mut study = app.study(&id)?;
    if study.state != StudyState::Open {
        return Err(ApiError::conflict(
            "invalid_state",
            format!("study is {}, only an open study can be closed", study.state.as_str()),
        ));
    }
    app.store.set_study_state(&id, StudyState::Closed)?;
    study.state = StudyState::Closed;
    Ok(Json(study_view(&app, &study, None)?))
}

/// Every participant's session rebuilt from one read of the event table.
fn study_sessions(app: &AppState, study: &StudyRecord) -> ApiResult<Vec<SessionState>> {
    let dataset = app.dataset(&study.config.dataset_id)?;
    let events = app.store.study_events(&study.config.study_id)?;
    let sessions = replay_sessions(
        &study.config,
        &dataset,
        events.iter().map(|(p, e)| (p, e.as_slice())),
    )?;
    Ok(sessions.into_values().collect())
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    include_history: Option<String>,
}

async fn export_csv(
    State(app): State<AppRef>,
    Admin(_): Admin,
    Path(id): Path<StudyId>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    let study = app.study(&id)?;
    let include_history = q.include_history.as_deref().map(parse_flag).transpose()?.unwrap_or(false);
    let sessions = study_sessions(&app, &study)?;
    let out = export_study(&sessions, ExportOptions { include_history });

    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8"));
    let disposition = format!("attachment; filename=\"{}.csv\"", id.as_str().replace('"', "_"));
    if let Ok(v) = HeaderValue::from_str(&disposition) {
        headers.insert(header::CONTENT_DISPOSITION, v);
    }
    if out.no_annotations {
        headers.insert(WARNING_HEADER, HeaderValue::from_static("no annotations"));
    }
    Ok((headers, out.csv).into_response())
}

#[derive(Deserialize)]
struct ReportQuery {
    #[serde(default)]
    format: Option<String>,
}

/// Rounded display strings next to the raw report values.
#[derive(Serialize)]
pub struct ReportDisplay {
    pub pairwise: Vec<PairDisplay>,
    pub fleiss_kappa: String,
}

#[derive(Serialize)]
pub struct PairDisplay {
    pub rater_a: ParticipantId,
    pub rater_b: ParticipantId,
    pub percent_agreement: String,
    pub cohen_kappa: String,
}

#[derive(Serialize)]
struct ReportResponse {
    report: AgreementReport,
    display: ReportDisplay,
}

pub fn report_display(report: &AgreementReport) -> ReportDisplay {
    ReportDisplay {
        pairwise: report
            .pairwise
            .iter()
            .map(|p| {
                let (pct, kappa) = AgreementReport::pair_cells(p);
                PairDisplay {
                    rater_a: p.rater_a.clone(),
                    rater_b: p.rater_b.clone(),
                    percent_agreement: pct,
                    cohen_kappa: kappa,
                }
            })
            .collect(),
        fleiss_kappa: report
            .fleiss_kappa
            .map(|_| report.fleiss_display())
            .unwrap_or_else(|| UNDEFINED.to_owned()),
    }
}

async fn report(
    State(app): State<AppRef>,
    Admin(_): Admin,
    Path(id): Path<StudyId>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<Response> {
    let study = app.study(&id)?;
    let sessions = study_sessions(&app, &study)?;
    let report = study_report(&study.config, &sessions)?;
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(Json(ReportResponse {
            display: report_display(&report),
            report,
        })
        .into_response()),
        "table" => Ok((
            [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
            report.render_table(),
        )
            .into_response()),
        other => Err(ApiError::bad_request(format!("unknown report format {other:?}"))),
    }
}

async fn event_log(
    State(app): State<AppRef>,
    Admin(_): Admin,
    Path(id): Path<StudyId>,
) -> ApiResult<impl IntoResponse> {
    app.study(&id)?;
    Ok(Json(app.store.event_log(&id)?))
}
