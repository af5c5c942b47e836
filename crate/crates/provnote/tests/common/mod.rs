#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, Response, StatusCode};
use axum::Router;
use ed25519_dalek::SigningKey;
use http_body_util::BodyExt;
use provnote::files::counter_clock;
use provnote::notebook::Notebook;
use provnote::service::router_with_clock;
use provnote_core::glp::default_glp_spec;
use provnote_core::identity::{
    request_digest, sign_request, DN_HEADER, SIGNATURE_HEADER, TIMESTAMP_HEADER,
};
use serde_json::Value;
use tower::ServiceExt;

pub const DN: &str = "CN=Alice,O=Lab";
pub const NOW: i64 = 1_760_000_000;

pub fn key() -> SigningKey {
    SigningKey::from_bytes(&[11; 32])
}

pub struct Harness {
    pub notebook: Arc<Notebook>,
    pub app: Router,
}

impl Harness {
    pub fn new() -> Self {
        let notebook = Arc::new(
            Notebook::in_memory(default_glp_spec(), "site", counter_clock(1_000)).unwrap(),
        );
        notebook.register_key(DN, &key().verifying_key());
        let app = router_with_clock(notebook.clone(), Arc::new(|| NOW));
        Harness { notebook, app }
    }

    pub async fn send(&self, req: Request<Body>) -> (StatusCode, Vec<u8>) {
        let resp: Response<Body> = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp
            .into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec();
        (status, bytes)
    }

    /// Signed request with a JSON or raw body.
    pub async fn call(&self, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Value) {
        let (status, bytes) = self.send(signed(method, uri, body, NOW)).await;
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes)
                .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call("GET", uri, Vec::new()).await
    }

    pub async fn json(
        &self,
        method: &str,
        uri: &str,
        body: &impl serde::Serialize,
    ) -> (StatusCode, Value) {
        self.call(method, uri, serde_json::to_vec(body).unwrap())
            .await
    }
}

pub fn signed(method: &str, uri: &str, body: Vec<u8>, ts: i64) -> Request<Body> {
    signed_as(&key(), DN, method, uri, body, ts)
}

pub fn signed_as(
    key: &SigningKey,
    dn: &str,
    method: &str,
    uri: &str,
    body: Vec<u8>,
    ts: i64,
) -> Request<Body> {
    let token = sign_request(key, dn, ts, &request_digest(method, uri, &body));
    let [d, t, s] = token.header_values();
    Request::builder()
        .method(method)
        .uri(uri)
        .header(DN_HEADER, d)
        .header(TIMESTAMP_HEADER, t)
        .header(SIGNATURE_HEADER, s)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap()
}

/// Path plus encoded query string.
pub fn uri(path: &str, params: &[(&str, &str)]) -> String {
    let url = reqwest::Url::parse_with_params(&format!("http://site{path}"), params).unwrap();
    match url.query() {
        Some(q) if !q.is_empty() => format!("{}?{q}", url.path()),
        _ => url.path().to_string(),
    }
}
