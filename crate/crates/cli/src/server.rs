//! HTTP front end for the annotation store.
//!
//! Routes:
//!
//! | method | path              | body / query            | success          |
//! |--------|-------------------|-------------------------|------------------|
//! | GET    | `/api/hit`        | `?worker=<id>`          | `HitView` JSON   |
//! | POST   | `/api/annotation` | `AnnotationRequest`     | `{"accepted":true}` |
//! | GET    | `/api/export`     | `Authorization: Bearer` | JSON lines       |
//! | GET    | `/api/aggregate`  |                         | `AggregateReport`|
//!
//! Anything else is served from the static directory when one is configured.

use std::io::Read;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Result};
use forge_core::annotate::{AnnotateError, Annotation, AnnotationStore, Choice};
use serde::{Deserialize, Serialize};
use tiny_http::{Header, Method, Request, Response, Server};

const MAX_BODY: u64 = 64 * 1024;

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    pub static_dir: Option<PathBuf>,
    /// Required bearer token for the export route; export is disabled without one.
    pub export_token: Option<String>,
    pub min_agreement: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub hit_id: String,
    pub document_id: String,
    pub worker_id: String,
    pub choice: Choice,
}

pub struct RunningServer {
    server: Arc<Server>,
    addr: SocketAddr,
    handle: Option<JoinHandle<()>>,
    store: Arc<Mutex<AnnotationStore>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn store(&self) -> Arc<Mutex<AnnotationStore>> {
        Arc::clone(&self.store)
    }

    /// Blocks until the accept loop ends.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves on a background thread.
pub fn start(addr: &str, store: AnnotationStore, options: ServerOptions) -> Result<RunningServer> {
    let server = Arc::new(Server::http(addr).map_err(|e| anyhow!("cannot bind {addr}: {e}"))?);
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| anyhow!("server is not listening on an IP socket"))?;
    let store = Arc::new(Mutex::new(store));
    let handle = {
        let server = Arc::clone(&server);
        let store = Arc::clone(&store);
        std::thread::spawn(move || {
            for request in server.incoming_requests() {
                handle(request, &store, &options);
            }
        })
    };
    Ok(RunningServer { server, addr, handle: Some(handle), store })
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").expect("static header")
}

fn json<T: Serialize>(status: u16, body: &T) -> Response<std::io::Cursor<Vec<u8>>> {
    let bytes = serde_json::to_vec(body).expect("response serializes");
    Response::from_data(bytes).with_status_code(status).with_header(json_header())
}

fn error(status: u16, message: impl Into<String>) -> Response<std::io::Cursor<Vec<u8>>> {
    json(status, &serde_json::json!({ "error": message.into() }))
}

fn query_param(url: &str, name: &str) -> Option<String> {
    let (_, query) = url.split_once('?')?;
    query.split('&').find_map(|pair| {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        (k == name).then(|| percent_decode(v))
    })
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'+' => out.push(b' '),
            b'%' if i + 2 < bytes.len() => {
                let hex = std::str::from_utf8(&bytes[i + 1..i + 3]).ok();
                match hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                    Some(b) => {
                        out.push(b);
                        i += 2;
                    }
                    None => out.push(b'%'),
                }
            }
            b => out.push(b),
        }
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn status_for(err: &AnnotateError) -> u16 {
    match err {
        AnnotateError::Validation(_) => 400,
        AnnotateError::Duplicate { .. } => 409,
        AnnotateError::Config(_) | AnnotateError::State { .. } | AnnotateError::Io(_) => 500,
    }
}

fn bearer_ok(request: &Request, token: &str) -> bool {
    request.headers().iter().any(|h| {
        h.field.equiv("Authorization") && h.value.as_str().strip_prefix("Bearer ").is_some_and(|t| t.trim() == token)
    })
}

fn handle(mut request: Request, store: &Mutex<AnnotationStore>, options: &ServerOptions) {
    let url = request.url().to_string();
    let path = url.split('?').next().unwrap_or("").to_string();
    let method = request.method().clone();
    let response = match (&method, path.as_str()) {
        (Method::Get, "/api/hit") => match query_param(&url, "worker").filter(|w| !w.trim().is_empty()) {
            None => error(400, "missing worker parameter"),
            Some(worker) => {
                let mut store = store.lock().expect("store lock");
                match store.next_hit(&worker) {
                    Ok(Some(view)) => json(200, &view),
                    Ok(None) => error(404, "no HIT available for this worker"),
                    Err(e) => error(status_for(&e), e.to_string()),
                }
            }
        },
        (Method::Post, "/api/annotation") => {
            let mut body = String::new();
            match request.as_reader().take(MAX_BODY).read_to_string(&mut body) {
                Err(e) => error(400, format!("unreadable body: {e}")),
                Ok(_) => match serde_json::from_str::<AnnotationRequest>(&body) {
                    Err(e) => error(400, format!("malformed annotation: {e}")),
                    Ok(req) => {
                        let annotation = Annotation {
                            hit_id: req.hit_id,
                            document_id: req.document_id,
                            worker_id: req.worker_id,
                            choice: req.choice,
                            timestamp: now_millis(),
                        };
                        let mut store = store.lock().expect("store lock");
                        match store.submit(annotation) {
                            Ok(()) => json(200, &serde_json::json!({ "accepted": true })),
                            Err(e) => error(status_for(&e), e.to_string()),
                        }
                    }
                },
            }
        }
        (Method::Get, "/api/export") => match &options.export_token {
            None => error(403, "export is disabled: no token configured"),
            Some(token) if !bearer_ok(&request, token) => error(401, "missing or wrong bearer token"),
            Some(_) => {
                let text = store.lock().expect("store lock").export();
                Response::from_data(text.into_bytes())
                    .with_header(Header::from_bytes("Content-Type", "application/x-ndjson").expect("static header"))
            }
        },
        (Method::Get, "/api/aggregate") => {
            let report = store.lock().expect("store lock").aggregate(options.min_agreement.max(1));
            json(200, &report)
        }
        (_, p) if p.starts_with("/api/") => error(404, format!("no route {method} {p}")),
        (Method::Get, p) => match &options.static_dir {
            Some(dir) => serve_static(dir, p),
            None => error(404, "not found"),
        },
        _ => error(405, "method not allowed"),
    };
    let _ = request.respond(response);
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("wasm") => "application/wasm",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

/// Resolves a URL path under `root`, rejecting anything that would leave it.
pub fn resolve_static(root: &Path, url_path: &str) -> Option<PathBuf> {
    let decoded = percent_decode(url_path);
    let rel = decoded.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let mut out = root.to_path_buf();
    for c in Path::new(rel).components() {
        match c {
            Component::Normal(part) => out.push(part),
            Component::CurDir => {}
            _ => return None,
        }
    }
    Some(out)
}

fn serve_static(root: &Path, url_path: &str) -> Response<std::io::Cursor<Vec<u8>>> {
    let Some(path) = resolve_static(root, url_path) else {
        return error(400, "bad path");
    };
    match std::fs::read(&path) {
        Ok(bytes) => Response::from_data(bytes)
            .with_header(Header::from_bytes("Content-Type", content_type(&path)).expect("static header")),
        Err(_) => error(404, "not found"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_paths_stay_under_root() {
        let root = Path::new("/srv/ui");
        assert_eq!(resolve_static(root, "/"), Some(root.join("index.html")));
        assert_eq!(resolve_static(root, "/app.js"), Some(root.join("app.js")));
        assert_eq!(resolve_static(root, "/../etc/passwd"), None);
        assert_eq!(resolve_static(root, "/%2e%2e/secret"), None);
    }

    #[test]
    fn query_parsing() {
        assert_eq!(query_param("/api/hit?worker=w%201", "worker").as_deref(), Some("w 1"));
        assert_eq!(query_param("/api/hit?x=1", "worker"), None);
        assert_eq!(percent_decode("50%"), "50%");
    }
}
