//! `patchswipe`: the admin command line. Each subcommand is one call to the
//! service's admin API; `report --csv` also works offline on an export file.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use patchswipe_core::analytics::{report_from_ratings, AgreementReport, RatingRecord};
use patchswipe_core::export::read_csv;
use patchswipe_core::{ClassLabel, DirectionAction, DirectionMapping, SwipeDirection};
use reqwest::blocking::{multipart, Client, RequestBuilder, Response};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "patchswipe", version, about = "Administer patch annotation studies")]
pub struct Cli {
    /// Base URL of the running service.
    #[arg(long, global = true, env = "PATCHSWIPE_SERVER_URL", default_value = "http://127.0.0.1:8080")]
    pub server_url: String,

    /// Bearer token from `patchswipe login`.
    #[arg(long, global = true, env = "PATCHSWIPE_TOKEN", hide_env_values = true)]
    pub token: Option<String>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exchange a username and password for a token.
    Login {
        #[arg(long)]
        username: String,
        #[arg(long, env = "PATCHSWIPE_PASSWORD", hide_env_values = true)]
        password: String,
    },
    #[command(subcommand)]
    Group(GroupCommand),
    #[command(subcommand)]
    User(UserCommand),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    #[command(subcommand)]
    Study(StudyCommand),
    /// Download a study's annotations as CSV.
    Export {
        study: String,
        /// Every decision, including postpones and undone ones.
        #[arg(long)]
        include_history: bool,
        /// Write here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Agreement and timing report, from the service or from an export file.
    Report {
        /// Study to report on (ignored with --csv).
        study: Option<String>,
        /// Compute locally from an exported CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum GroupCommand {
    Create {
        name: String,
        #[arg(long = "member")]
        members: Vec<String>,
    },
    AddMember { group_id: String, username: String },
}

#[derive(Subcommand, Debug)]
pub enum UserCommand {
    Create {
        username: String,
        #[arg(long, env = "PATCHSWIPE_NEW_PASSWORD", hide_env_values = true)]
        password: String,
        #[arg(long)]
        display_name: Option<String>,
        #[arg(long, default_value = "participant", value_parser = ["participant", "admin"])]
        role: String,
        #[arg(long = "group")]
        groups: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum DatasetCommand {
    /// Upload a zip or tar(.gz) archive of PNG/JPEG patches.
    Ingest {
        archive: PathBuf,
        #[arg(long)]
        name: Option<String>,
        /// zip, tar or tar.gz; guessed from the file name when omitted.
        #[arg(long)]
        archive_format: Option<String>,
        /// Ground-truth CSV (filename,label).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Require ground truth for every patch.
        #[arg(long)]
        training: bool,
    },
    List,
}

#[derive(Subcommand, Debug)]
pub enum StudyCommand {
    Create(StudyCreate),
    Open { study: String },
    Close { study: String },
    List,
}

#[derive(Args, Debug)]
pub struct StudyCreate {
    #[arg(long)]
    pub dataset: String,
    #[arg(long = "id")]
    pub study_id: Option<String>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long = "participant")]
    pub participants: Vec<String>,
    #[arg(long = "group")]
    pub groups: Vec<String>,
    #[arg(long, default_value = "annotation", value_parser = ["annotation", "training"])]
    pub mode: String,
    /// Comma-separated `direction=action` pairs, e.g.
    /// `left=normal,right=atypical,up=postpone`. Action `none` leaves a
    /// direction unassigned.
    #[arg(long, value_parser = parse_mapping)]
    pub mapping: Option<DirectionMapping>,
    #[arg(long)]
    pub scale_percent: Option<u32>,
    #[arg(long)]
    pub interpolation: bool,
}

pub fn parse_mapping(s: &str) -> Result<DirectionMapping, String> {
    let mut m = DirectionMapping::empty();
    for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (dir, action) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected direction=action, got {pair:?}"))?;
        let dir: SwipeDirection = dir.trim().parse().map_err(|e| format!("{e}"))?;
        let action = match action.trim() {
            "postpone" => DirectionAction::Postpone,
            "none" | "" => DirectionAction::Unassigned,
            label => DirectionAction::Label(ClassLabel::new(label)),
        };
        m.set(dir, action);
    }
    Ok(m)
}

struct Api<'a> {
    http: Client,
    cli: &'a Cli,
}

impl<'a> Api<'a> {
    fn new(cli: &'a Cli) -> Result<Self> {
        Ok(Self {
            http: Client::builder().timeout(None).build()?,
            cli,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.cli.server_url.trim_end_matches('/'), path)
    }

    fn authed(&self, rb: RequestBuilder) -> Result<RequestBuilder> {
        let token = self
            .cli
            .token
            .as_deref()
            .context("no token: pass --token or set PATCHSWIPE_TOKEN (see `patchswipe login`)")?;
        Ok(rb.bearer_auth(token))
    }

    fn get(&self, path: &str) -> Result<Response> {
        check(self.authed(self.http.get(self.url(path)))?.send()?)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let r = check(self.authed(self.http.post(self.url(path)))?.json(body).send()?)?;
        if r.status() == reqwest::StatusCode::NO_CONTENT {
            return Ok(Value::Null);
        }
        Ok(r.json()?)
    }
}

/// Turns `{code, message}` error bodies into errors.
fn check(r: Response) -> Result<Response> {
    if r.status().is_success() {
        return Ok(r);
    }
    let status = r.status();
    let text = r.text().unwrap_or_default();
    match serde_json::from_str::<Value>(&text) {
        Ok(v) if v.get("code").is_some() => {
            let mut msg = format!("{} ({}): {}", v["code"].as_str().unwrap_or("error"), status, v["message"].as_str().unwrap_or(""));
            if let Some(details) = v.get("details").and_then(Value::as_array) {
                for d in details {
                    msg.push_str(&format!("\n  - {}", d.as_str().unwrap_or(&d.to_string())));
                }
            }
            bail!(msg)
        }
        _ => bail!("{status}: {text}"),
    }
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().enumerate().map(|(i, s)| format!("{s:<w$}", w = widths[i])).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn render(format: Format, value: &Value, as_table: impl FnOnce(&Value) -> String) -> String {
    match format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(value).unwrap_or_default()),
        Format::Table => as_table(value),
    }
}

fn studies_table(v: &Value) -> String {
    let mut rows = vec![vec!["STUDY".into(), "NAME".into(), "STATE".into(), "MODE".into(), "PATCHES".into(), "PARTICIPANTS".into()]];
    let list = v.as_array().cloned().unwrap_or_else(|| vec![v.clone()]);
    for s in &list {
        let participants: Vec<String> = s["participants"].as_array().map(|a| a.iter().map(text).collect()).unwrap_or_default();
        rows.push(vec![
            text(&s["study_id"]),
            text(&s["name"]),
            text(&s["state"]),
            text(&s["mode"]),
            text(&s["total"]),
            participants.join(", "),
        ]);
    }
    table(&rows)
}

/// Runs one command and returns what should be printed.
pub fn run(cli: &Cli) -> Result<String> {
    let api = Api::new(cli)?;
    let f = cli.format;
    match &cli.command {
        Command::Login { username, password } => {
            let r = check(
                api.http
                    .post(api.url("/api/auth/login"))
                    .json(&json!({"username": username, "password": password}))
                    .send()?,
            )?;
            let v: Value = r.json()?;
            Ok(render(f, &v, |v| format!("{}\n", text(&v["token"]))))
        }
        Command::Group(GroupCommand::Create { name, members }) => {
            let v = api.post("/api/admin/groups", &json!({"name": name, "members": members}))?;
            Ok(render(f, &v, |v| format!("created group {} ({})\n", text(&v["name"]), text(&v["group_id"]))))
        }
        Command::Group(GroupCommand::AddMember { group_id, username }) => {
            api.post(&format!("/api/admin/groups/{group_id}/members"), &json!({"username": username}))?;
            let v = json!({"group_id": group_id, "username": username});
            Ok(render(f, &v, |_| format!("added {username} to {group_id}\n")))
        }
        Command::User(UserCommand::Create { username, password, display_name, role, groups }) => {
            let v = api.post(
                "/api/admin/users",
                &json!({"username": username, "password": password, "display_name": display_name, "role": role, "groups": groups}),
            )?;
            Ok(render(f, &v, |v| format!("created {} {}\n", text(&v["role"]), text(&v["username"]))))
        }
        Command::Dataset(DatasetCommand::Ingest { archive, name, archive_format, labels, training }) => {
            let bytes = fs::read(archive).with_context(|| format!("reading {}", archive.display()))?;
            let file_name = archive.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "archive".into());
            let mut form = multipart::Form::new()
                .part("archive", multipart::Part::bytes(bytes).file_name(file_name))
                .text("training", training.to_string());
            if let Some(n) = name {
                form = form.text("name", n.clone());
            }
            if let Some(fmt) = archive_format {
                form = form.text("format", fmt.clone());
            }
            if let Some(l) = labels {
                let data = fs::read(l).with_context(|| format!("reading {}", l.display()))?;
                form = form.part("labels", multipart::Part::bytes(data).file_name("labels.csv"));
            }
            let r = check(api.authed(api.http.post(api.url("/api/admin/datasets")))?.multipart(form).send()?)?;
            let v: Value = r.json()?;
            Ok(render(f, &v, |v| {
                let mut out = format!(
                    "dataset {} ({}): {} patches, {} with ground truth\n",
                    text(&v["dataset_id"]),
                    text(&v["name"]),
                    text(&v["patches"]),
                    text(&v["with_ground_truth"])
                );
                for w in v["warnings"].as_array().into_iter().flatten() {
                    out.push_str(&format!("  skipped {}: {}\n", text(&w["entry"]), text(&w["reason"])));
                }
                out
            }))
        }
        Command::Dataset(DatasetCommand::List) => {
            let v: Value = api.get("/api/admin/datasets")?.json()?;
            Ok(render(f, &v, |v| {
                let mut rows = vec![vec!["DATASET".to_string(), "NAME".to_string()]];
                for d in v.as_array().into_iter().flatten() {
                    rows.push(vec![text(&d["dataset_id"]), text(&d["name"])]);
                }
                table(&rows)
            }))
        }
        Command::Study(StudyCommand::Create(c)) => {
            let mut body = json!({
                "dataset_id": c.dataset,
                "participants": c.participants,
                "groups": c.groups,
                "mode": c.mode,
                "display": {"scale_percent": c.scale_percent.unwrap_or(100), "interpolation_enabled": c.interpolation},
            });
            if let Some(id) = &c.study_id {
                body["study_id"] = json!(id);
            }
            if let Some(n) = &c.name {
                body["name"] = json!(n);
            }
            if let Some(m) = &c.mapping {
                body["mapping"] = serde_json::to_value(m)?;
            }
            let v = api.post("/api/admin/studies", &body)?;
            Ok(render(f, &v, studies_table))
        }
        Command::Study(StudyCommand::Open { study }) => {
            let v = api.post(&format!("/api/admin/studies/{study}/open"), &json!({}))?;
            Ok(render(f, &v, studies_table))
        }
        Command::Study(StudyCommand::Close { study }) => {
            let v = api.post(&format!("/api/admin/studies/{study}/close"), &json!({}))?;
            Ok(render(f, &v, studies_table))
        }
        Command::Study(StudyCommand::List) => {
            let v: Value = api.get("/api/admin/studies")?.json()?;
            Ok(render(f, &v, studies_table))
        }
        Command::Export { study, include_history, output } => {
            let r = api.get(&format!("/api/admin/studies/{study}/export.csv?include_history={include_history}"))?;
            let warning = r
                .headers()
                .get("x-patchswipe-warning")
                .and_then(|v| v.to_str().ok())
                .map(str::to_owned);
            let bytes = r.bytes()?;
            if let Some(w) = warning {
                eprintln!("warning: {w}");
            }
            match output {
                Some(path) => {
                    fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
                    Ok(String::new())
                }
                None => Ok(String::from_utf8_lossy(&bytes).into_owned()),
            }
        }
        Command::Report { study, csv } => match (csv, study) {
            (Some(path), _) => {
                let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                let report = report_from_csv(&data)?;
                Ok(match f {
                    Format::Json => format!("{}\n", report.to_json()),
                    Format::Table => report.render_table(),
                })
            }
            (None, Some(study)) => match f {
                Format::Json => {
                    let v: Value = api.get(&format!("/api/admin/studies/{study}/report"))?.json()?;
                    Ok(format!("{}\n", serde_json::to_string_pretty(&v)?))
                }
                Format::Table => Ok(api.get(&format!("/api/admin/studies/{study}/report?format=table"))?.text()?),
            },
            (None, None) => bail!("give a study id or --csv FILE"),
        },
    }
}

/// Agreement report from an export file's bytes. Categories are the labels
/// that occur in the file.
pub fn report_from_csv(data: &[u8]) -> Result<AgreementReport> {
    let rows = read_csv(data)?;
    let ratings: Vec<RatingRecord> = rows.iter().map(RatingRecord::from).collect();
    Ok(report_from_ratings(&ratings, std::iter::empty())?)
}
