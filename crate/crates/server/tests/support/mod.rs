//! In-process server harness for the HTTP tests.

#![allow(dead_code)]

use std::io::{Cursor, Write};
use std::net::SocketAddr;
use std::sync::Arc;

use patchswipe_server::config::BootstrapAdmin;
use patchswipe_server::{router, AppState, Config};
use reqwest::{Client, Response, StatusCode};
use serde_json::{json, Value};
use tempfile::TempDir;

pub const ADMIN: &str = "admin";
pub const ADMIN_PW: &str = "admin-secret";

pub struct TestServer {
    pub base: String,
    pub client: Client,
    pub state: Arc<AppState>,
    pub dir: TempDir,
    task: tokio::task::JoinHandle<()>,
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub fn test_config(dir: &std::path::Path) -> Config {
    Config {
        listen_addr: SocketAddr::from(([127, 0, 0, 1], 0)),
        blob_store_path: dir.join("blobs"),
        database_path: dir.join("db.sqlite3"),
        bootstrap_admin: Some(BootstrapAdmin {
            username: ADMIN.into(),
            password: ADMIN_PW.into(),
        }),
        ..Config::default()
    }
}

impl TestServer {
    pub async fn start() -> Self {
        Self::start_with(|_| {}).await
    }

    pub async fn start_with(tweak: impl FnOnce(&mut Config)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = test_config(dir.path());
        tweak(&mut config);
        Self::start_in(dir, config).await
    }

    pub async fn start_in(dir: TempDir, config: Config) -> Self {
        let state = Arc::new(AppState::open(config).unwrap());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let app = router(state.clone());
        let task = tokio::spawn(async move {
            axum::serve(listener, app).await.unwrap();
        });
        Self {
            base,
            client: Client::new(),
            state,
            dir,
            task,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn get(&self, token: &str, path: &str) -> Response {
        self.client.get(self.url(path)).bearer_auth(token).send().await.unwrap()
    }

    pub async fn post(&self, token: &str, path: &str, body: Value) -> Response {
        self.client
            .post(self.url(path))
            .bearer_auth(token)
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    pub async fn login(&self, username: &str, password: &str) -> String {
        let r = self
            .client
            .post(self.url("/api/auth/login"))
            .json(&json!({"username": username, "password": password}))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), StatusCode::OK, "login {username}");
        r.json::<Value>().await.unwrap()["token"].as_str().unwrap().to_owned()
    }

    pub async fn admin_token(&self) -> String {
        self.login(ADMIN, ADMIN_PW).await
    }

    /// Creates participant accounts (password = name) and returns their
    /// tokens.
    pub async fn participants(&self, admin: &str, names: &[&str]) -> Vec<String> {
        let mut tokens = Vec::new();
        for n in names {
            let r = self
                .post(admin, "/api/admin/users", json!({"username": n, "password": n}))
                .await;
            assert_eq!(r.status(), StatusCode::CREATED, "create {n}");
            tokens.push(self.login(n, n).await);
        }
        tokens
    }

    pub async fn upload(&self, admin: &str, archive: Vec<u8>, file_name: &str, extra: &[(&str, &str)]) -> Response {
        let mut form = reqwest::multipart::Form::new().part(
            "archive",
            reqwest::multipart::Part::bytes(archive).file_name(file_name.to_owned()),
        );
        for (k, v) in extra {
            form = form.text(k.to_string(), v.to_string());
        }
        self.client
            .post(self.url("/api/admin/datasets"))
            .bearer_auth(admin)
            .multipart(form)
            .send()
            .await
            .unwrap()
    }

    /// Uploads `n` small PNGs and returns the dataset id.
    pub async fn png_dataset(&self, admin: &str, n: usize) -> String {
        let r = self.upload(admin, png_zip(n, 8), "patches.zip", &[("name", "patches")]).await;
        assert_eq!(r.status(), StatusCode::CREATED);
        r.json::<Value>().await.unwrap()["dataset_id"].as_str().unwrap().to_owned()
    }

    /// Creates and opens a study with the default mapping.
    pub async fn open_study(&self, admin: &str, study_id: &str, dataset_id: &str, participants: &[&str], mode: &str) {
        let r = self
            .post(
                admin,
                "/api/admin/studies",
                json!({"study_id": study_id, "dataset_id": dataset_id, "participants": participants, "mode": mode}),
            )
            .await;
        assert_eq!(r.status(), StatusCode::CREATED, "{}", r.text().await.unwrap());
        let r = self.post(admin, &format!("/api/admin/studies/{study_id}/open"), json!({})).await;
        assert_eq!(r.status(), StatusCode::OK, "{}", r.text().await.unwrap());
    }

    pub async fn next(&self, token: &str, study: &str) -> Value {
        let r = self.get(token, &format!("/api/studies/{study}/next")).await;
        assert_eq!(r.status(), StatusCode::OK);
        r.json().await.unwrap()
    }

    pub async fn swipe(&self, token: &str, study: &str, direction: &str, duration_ms: i64) -> Response {
        self.post(
            token,
            &format!("/api/studies/{study}/annotations"),
            json!({"direction": direction, "client_duration_ms": duration_ms, "device_type": "desktop"}),
        )
        .await
    }
}

pub fn png(w: u32, h: u32, seed: u32) -> Vec<u8> {
    let img = image::RgbImage::from_fn(w, h, |x, y| {
        image::Rgb([(x + seed) as u8, (y * 3 + seed) as u8, (seed / 256) as u8])
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

pub fn zip_of(entries: &[(String, Vec<u8>)]) -> Vec<u8> {
    let mut w = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = zip::write::SimpleFileOptions::default();
    for (name, data) in entries {
        w.start_file(name.as_str(), opts).unwrap();
        w.write_all(data).unwrap();
    }
    w.finish().unwrap().into_inner()
}

pub fn png_zip(n: usize, side: u32) -> Vec<u8> {
    let entries: Vec<(String, Vec<u8>)> = (0..n)
        .map(|i| (format!("patch_{i:04}.png"), png(side, side, i as u32)))
        .collect();
    zip_of(&entries)
}
