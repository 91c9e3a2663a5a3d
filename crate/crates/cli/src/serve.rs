use std::collections::HashMap;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use romdx_core::grading::{ApiItem, GradingApi};
use romdx_core::{Framework, GradingStore};

use crate::cli::ServeArgs;
use crate::config::CliConfig;
use crate::workspace::Workspace;
use crate::{exit, CmdResult, ExitOnErr, Failure};

struct ServeState {
    api: GradingApi,
    assets: Option<PathBuf>,
}

/// Grading items for every stored result, first result per pair.
pub fn collect_items(ws: &Workspace) -> Result<Vec<ApiItem>, Failure> {
    let cases = ws.load_cases()?;
    let videos: HashMap<&str, &str> = cases
        .cases()
        .iter()
        .map(|c| (c.case_id.as_str(), c.video_ref.as_str()))
        .collect();
    let mut items = Vec::new();
    for framework in Framework::ALL {
        let mut seen = std::collections::HashSet::new();
        for result in ws.load_results(framework)? {
            if !seen.insert(result.case_id.clone()) {
                continue;
            }
            items.push(ApiItem {
                video_url: videos.get(result.case_id.as_str()).copied().unwrap_or_default().to_string(),
                case_id: result.case_id,
                framework,
                raw: result.output.raw,
            });
        }
    }
    Ok(items)
}

/// Router serving the grading API under `/api` and static assets
/// everywhere else.
fn router(state: Arc<ServeState>) -> Router {
    Router::new().fallback(dispatch).with_state(state)
}

async fn dispatch(State(state): State<Arc<ServeState>>, method: Method, uri: Uri, body: Bytes) -> Response {
    let path = uri.path().to_string();
    if path == "/api" || path.starts_with("/api/") {
        let query = uri.query().unwrap_or("").to_string();
        let handled = tokio::task::spawn_blocking(move || state.api.handle(method.as_str(), &path, &query, &body)).await;
        return match handled {
            Ok(reply) => {
                let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
                (status, Json(reply.body)).into_response()
            }
            Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
        };
    }
    if method != Method::GET && method != Method::HEAD {
        return StatusCode::METHOD_NOT_ALLOWED.into_response();
    }
    match &state.assets {
        Some(root) => static_file(root, &path).await,
        None => (
            StatusCode::NOT_FOUND,
            "no UI assets configured; the grading API is served under /api",
        )
            .into_response(),
    }
}

/// Maps a request path to a file under `root`, refusing anything that
/// would escape it.
fn asset_path(root: &Path, request: &str) -> Option<PathBuf> {
    let relative = Path::new(request.trim_start_matches('/'));
    let mut out = root.to_path_buf();
    for component in relative.components() {
        match component {
            Component::Normal(part) => out.push(part),
            Component::CurDir => {}
            _ => return None,
        }
    }
    if request.ends_with('/') || out == root {
        out.push("index.html");
    }
    Some(out)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "woff2" => "font/woff2",
        "mp4" => "video/mp4",
        _ => "application/octet-stream",
    }
}

async fn static_file(root: &Path, request: &str) -> Response {
    let Some(path) = asset_path(root, request) else {
        return StatusCode::BAD_REQUEST.into_response();
    };
    // Client-side routes have no extension and fall back to the app shell.
    let path = if !path.is_file() && path.extension().is_none() {
        root.join("index.html")
    } else {
        path
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

pub fn serve(ws: &Workspace, cfg: &CliConfig, args: &ServeArgs) -> CmdResult {
    let lock = ws.lock()?;
    let items = collect_items(ws)?;
    let store = GradingStore::open(&ws.grades_path(), None).exit_with(exit::INPUT)?;
    let assets = args
        .assets
        .clone()
        .or_else(|| cfg.serve.assets.clone())
        .or_else(|| Some(ws.root().join("ui")))
        .filter(|p| p.is_dir());
    let hide_raw = args.hide_raw || cfg.serve.hide_raw;
    let n_items = items.len();
    let state = Arc::new(ServeState {
        api: GradingApi::new(items, store, hide_raw),
        assets,
    });

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.addr)
            .await
            .map_err(|e| Failure::backend(format!("cannot listen on {}: {e}", args.addr)))?;
        let local = listener.local_addr()?;
        println!("listening on http://{local} ({n_items} gradable outputs)");
        std::io::stdout().flush()?;
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<(), Failure>(())
    })?;
    drop(lock);
    Ok(())
}
