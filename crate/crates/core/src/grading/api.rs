//! Framework-agnostic request dispatcher for the review UI's JSON API.
//! The HTTP server only forwards method, path, query string, and body.

use std::collections::BTreeMap;
use std::sync::{Mutex, MutexGuard};

use percent_encoding::percent_decode_str;
use serde::Deserialize;
use serde_json::{json, Value};

use super::store::new_record;
use super::{GradingError, GradingStatus, GradingStore, Score, Triple};
use crate::pipelines::transcript::{section, FINAL_HEADER, JUDGMENTS_HEADER, MOVEMENTS_HEADER};
use crate::pipelines::Framework;

/// One gradable model output.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiItem {
    pub case_id: String,
    pub framework: Framework,
    pub video_url: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl ApiResponse {
    fn ok(body: Value) -> Self {
        Self { status: 200, body }
    }

    fn error(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({"error": code, "message": message.into()}),
        }
    }
}

impl From<GradingError> for ApiResponse {
    fn from(e: GradingError) -> Self {
        let (status, code) = match &e {
            GradingError::UnknownCase { .. } => (404, "unknown_case"),
            GradingError::DuplicateRater { .. } => (409, "duplicate_rater"),
            GradingError::GradingClosed { .. } => (409, "grading_closed"),
            GradingError::NotInDisagreement { .. } => (409, "not_in_disagreement"),
            GradingError::InvalidScore(_) => (400, "invalid_score"),
            GradingError::TooFewParticipants => (400, "too_few_participants"),
            GradingError::NotSynthetic(_) | GradingError::Parse { .. } => (400, "bad_request"),
            GradingError::Io(_) => (500, "io"),
        };
        ApiResponse::error(status, code, e.to_string())
    }
}

#[derive(Deserialize)]
struct GradeBody {
    framework: Framework,
    rater_id: String,
    a: f64,
    r: f64,
    d: f64,
    #[serde(default)]
    notes: String,
}

#[derive(Deserialize)]
struct AdjudicationBody {
    framework: Framework,
    a: f64,
    r: f64,
    d: f64,
    participants: Vec<String>,
}

fn triple(a: f64, r: f64, d: f64) -> Result<Triple, GradingError> {
    let score = |name: &str, v: f64| {
        Score::from_value(v).ok_or_else(|| GradingError::InvalidScore(format!("{name}={v} is not in {{0, 0.5, 1}}")))
    };
    let t = Triple::new(score("a", a)?, score("r", r)?, score("d", d)?);
    t.validate()?;
    Ok(t)
}

pub struct GradingApi {
    items: BTreeMap<(String, Framework), ApiItem>,
    store: Mutex<GradingStore>,
    hide_raw: bool,
}

impl GradingApi {
    /// Grades are only accepted for the given items.
    pub fn new(items: Vec<ApiItem>, store: GradingStore, hide_raw: bool) -> Self {
        let items: BTreeMap<_, _> = items
            .into_iter()
            .map(|i| ((i.case_id.clone(), i.framework), i))
            .collect();
        let store = store.with_known(items.keys().cloned());
        Self {
            items,
            store: Mutex::new(store),
            hide_raw,
        }
    }

    pub fn store(&self) -> MutexGuard<'_, GradingStore> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn handle(&self, method: &str, path: &str, query: &str, body: &[u8]) -> ApiResponse {
        let query: BTreeMap<String, String> = form_urlencoded::parse(query.as_bytes()).into_owned().collect();
        let segments: Vec<String> = path
            .trim_matches('/')
            .split('/')
            .map(|s| percent_decode_str(s).decode_utf8_lossy().into_owned())
            .collect();
        let segments: Vec<&str> = segments.iter().map(String::as_str).collect();
        let result = match (method, segments.as_slice()) {
            ("GET", ["api", "cases"]) => self.list_cases(&query),
            ("GET", ["api", "cases", id]) => self.case_detail(id, &query),
            ("POST", ["api", "cases", id, "grades"]) => self.submit(id, body),
            ("POST", ["api", "cases", id, "adjudication"]) => self.adjudicate(id, body),
            ("GET", ["api", "progress"]) => self.progress(&query),
            (_, ["api", "cases"])
            | (_, ["api", "cases", _])
            | (_, ["api", "cases", _, "grades" | "adjudication"])
            | (_, ["api", "progress"]) => Err(ApiResponse::error(405, "method_not_allowed", method)),
            _ => Err(ApiResponse::error(404, "not_found", path)),
        };
        result.unwrap_or_else(|e| e)
    }

    fn framework_filter(query: &BTreeMap<String, String>) -> Result<Option<Framework>, ApiResponse> {
        query
            .get("framework")
            .map(|f| f.parse::<Framework>())
            .transpose()
            .map_err(|e| ApiResponse::error(400, "bad_request", e))
    }

    fn list_cases(&self, query: &BTreeMap<String, String>) -> Result<ApiResponse, ApiResponse> {
        let framework = Self::framework_filter(query)?;
        let status = query
            .get("status")
            .map(|s| s.parse::<GradingStatus>())
            .transpose()
            .map_err(|e| ApiResponse::error(400, "bad_request", e))?;
        let store = self.store();
        let rows: Vec<Value> = self
            .items
            .values()
            .filter(|i| framework.is_none_or(|f| f == i.framework))
            .filter_map(|i| {
                let s = store.status(&i.case_id, i.framework);
                status
                    .is_none_or(|want| want == s)
                    .then(|| json!({"case_id": i.case_id, "framework": i.framework, "status": s}))
            })
            .collect();
        Ok(ApiResponse::ok(Value::Array(rows)))
    }

    fn item(&self, case_id: &str, framework: Option<Framework>) -> Result<&ApiItem, ApiResponse> {
        let mut matches = self.items.values().filter(|i| i.case_id == case_id && framework.is_none_or(|f| f == i.framework));
        match (matches.next(), matches.next()) {
            (Some(item), None) => Ok(item),
            (Some(_), Some(_)) => Err(ApiResponse::error(400, "bad_request", "framework is required for this case")),
            (None, _) => Err(ApiResponse::error(404, "unknown_case", case_id)),
        }
    }

    fn case_detail(&self, case_id: &str, query: &BTreeMap<String, String>) -> Result<ApiResponse, ApiResponse> {
        let framework = Self::framework_filter(query)?;
        let item = self.item(case_id, framework)?;
        let viewer = query.get("rater_id").map(String::as_str);
        let store = self.store();
        let status = store.status(&item.case_id, item.framework);
        let grades: Vec<&super::GradingRecord> = store
            .records(&item.case_id, item.framework)
            .iter()
            .filter(|r| status.grades_unsealed() || Some(r.rater_id.as_str()) == viewer)
            .collect();
        let lines = |header: &str| -> Value {
            match section(&item.raw, header) {
                Some(lines) => lines
                    .iter()
                    .map(|l| l.trim())
                    .filter(|l| !l.is_empty())
                    .collect::<Vec<_>>()
                    .into(),
                None => Value::Null,
            }
        };
        let final_line = match lines(FINAL_HEADER) {
            Value::Array(v) => v.into_iter().next().unwrap_or(Value::Null),
            other => other,
        };
        Ok(ApiResponse::ok(json!({
            "case_id": item.case_id,
            "framework": item.framework,
            "video_url": item.video_url,
            "sections": {
                "movements": lines(MOVEMENTS_HEADER),
                "judgments": lines(JUDGMENTS_HEADER),
                "final": final_line,
            },
            "raw": if self.hide_raw { Value::Null } else { Value::String(item.raw.clone()) },
            "status": status,
            "grades": grades,
            "final_grade": store.final_grade(&item.case_id, item.framework),
        })))
    }

    fn submit(&self, case_id: &str, body: &[u8]) -> Result<ApiResponse, ApiResponse> {
        let body: GradeBody =
            serde_json::from_slice(body).map_err(|e| ApiResponse::error(400, "bad_request", e.to_string()))?;
        let t = triple(body.a, body.r, body.d)?;
        if !self.items.contains_key(&(case_id.to_string(), body.framework)) {
            return Err(GradingError::UnknownCase {
                case_id: case_id.to_string(),
                framework: body.framework,
            }
            .into());
        }
        let record = new_record(case_id, body.framework, &body.rater_id, t, &body.notes);
        let status = self.store().submit_grade(record)?;
        Ok(ApiResponse::ok(json!({ "status": status })))
    }

    fn adjudicate(&self, case_id: &str, body: &[u8]) -> Result<ApiResponse, ApiResponse> {
        let body: AdjudicationBody =
            serde_json::from_slice(body).map_err(|e| ApiResponse::error(400, "bad_request", e.to_string()))?;
        let t = triple(body.a, body.r, body.d)?;
        let grade = self.store().adjudicate(case_id, body.framework, t, body.participants)?;
        Ok(ApiResponse::ok(serde_json::to_value(grade).unwrap_or(Value::Null)))
    }

    fn progress(&self, query: &BTreeMap<String, String>) -> Result<ApiResponse, ApiResponse> {
        let framework = Self::framework_filter(query)?;
        let counts = self.store().progress(
            self.items
                .values()
                .filter(|i| framework.is_none_or(|f| f == i.framework))
                .map(|i| (i.case_id.as_str(), i.framework)),
        );
        let body: serde_json::Map<String, Value> = counts
            .into_iter()
            .map(|(s, n)| (s.as_str().to_string(), n.into()))
            .collect();
        Ok(ApiResponse::ok(Value::Object(body)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn api(hide_raw: bool) -> GradingApi {
        let raw = "intro\n== MOVEMENTS ==\n- forward elevation, left: reaches above the head; symmetric; compensation: none; smooth\n== JUDGMENTS ==\n- forward elevation: normal. Evidence: left side reaches above the head\n== FINAL ==\nNEGATIVE\n";
        let items = ["c1", "c2", "c 3"]
            .iter()
            .map(|id| ApiItem {
                case_id: id.to_string(),
                framework: Framework::Hmvdx,
                video_url: format!("/videos/{id}.mp4"),
                raw: raw.to_string(),
            })
            .collect();
        GradingApi::new(items, GradingStore::new(), hide_raw)
    }

    fn grade(api: &GradingApi, case: &str, rater: &str, r: f64) -> ApiResponse {
        let body = json!({"framework": "hmvdx", "rater_id": rater, "a": 1, "r": r, "d": 1, "notes": ""});
        api.handle("POST", &format!("/api/cases/{case}/grades"), "", body.to_string().as_bytes())
    }

    fn other_scores_visible(api: &GradingApi, case: &str, viewer: &str) -> bool {
        let detail = api.handle("GET", &format!("/api/cases/{case}"), &format!("framework=hmvdx&rater_id={viewer}"), b"");
        detail.body["grades"]
            .as_array()
            .unwrap()
            .iter()
            .any(|g| g["rater_id"] != viewer)
    }

    #[test]
    fn blind_until_both_submit_then_adjudication() {
        let api = api(false);
        assert_eq!(grade(&api, "c1", "r1", 1.0).body["status"], "awaiting_second");
        assert!(!other_scores_visible(&api, "c1", "r2"));
        assert!(!other_scores_visible(&api, "c1", "r1"));
        let listing = api.handle("GET", "/api/cases", "status=awaiting_second", b"");
        assert_eq!(listing.body.as_array().unwrap().len(), 1);
        assert!(!listing.body.to_string().contains("\"r\""));

        assert_eq!(grade(&api, "c1", "r2", 0.5).body["status"], "needs_adjudication");
        assert!(other_scores_visible(&api, "c1", "r1"));

        let adj = api.handle(
            "POST",
            "/api/cases/c1/adjudication",
            "",
            json!({"framework": "hmvdx", "a": 1, "r": 0.5, "d": 1, "participants": ["r1", "r2"]})
                .to_string()
                .as_bytes(),
        );
        assert_eq!(adj.status, 200);
        assert_eq!(adj.body["source"], "adjudication");
        assert_eq!(adj.body["r"], 0.5);
        let progress = api.handle("GET", "/api/progress", "", b"");
        assert_eq!(progress.body["adjudicated"], 1);
        assert_eq!(progress.body["awaiting_first"], 2);
    }

    #[test]
    fn error_statuses() {
        let api = api(false);
        assert_eq!(grade(&api, "nope", "r1", 1.0).status, 404);
        assert_eq!(grade(&api, "c1", "r1", 0.3).status, 400);
        assert_eq!(grade(&api, "c1", "r1", 1.0).status, 200);
        assert_eq!(grade(&api, "c1", "r1", 1.0).status, 409);
        assert_eq!(api.handle("DELETE", "/api/progress", "", b"").status, 405);
        assert_eq!(api.handle("GET", "/api/other", "", b"").status, 404);
        assert_eq!(api.handle("GET", "/api/cases", "status=bogus", b"").status, 400);
        assert_eq!(api.handle("POST", "/api/cases/c1/grades", "", b"{").status, 400);
    }

    #[test]
    fn detail_sections_and_raw_flag() {
        let shown = api(false).handle("GET", "/api/cases/c%203", "framework=hmvdx", b"");
        assert_eq!(shown.status, 200);
        assert_eq!(shown.body["sections"]["final"], "NEGATIVE");
        assert_eq!(shown.body["sections"]["movements"].as_array().unwrap().len(), 1);
        assert!(shown.body["raw"].is_string());
        let hidden = api(true).handle("GET", "/api/cases/c1", "", b"");
        assert!(hidden.body["raw"].is_null());
        assert_eq!(hidden.body["video_url"], "/videos/c1.mp4");
    }
}
