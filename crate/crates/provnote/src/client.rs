//! Blocking HTTP client that signs every request with the caller's identity.

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use provnote_core::fabric::{
    ApplyReport, ChangeSet, ItemId, ItemRecord, MetadataPatch, Predicate, SinceVector,
};
use provnote_core::identity::{
    request_digest, sign_request, DN_HEADER, SIGNATURE_HEADER, TIMESTAMP_HEADER,
};
use provnote_core::store::StoreStats;
use provnote_core::{AssertionBatch, BatchReceipt, Digest, NodeKind};
use reqwest::blocking::{Client as Http, Response};
use reqwest::{Method, StatusCode, Url};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::keys::Identity;
use crate::notebook::{ImportOutcome, SignatureCheck};
use crate::replication::Peer;
use crate::service::{CollectionBody, CopyBody, ImportBody, Stored, WireResultSet};

pub struct Client {
    base: Url,
    http: Http,
    identity: Identity,
}

fn now_secs() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

impl Client {
    pub fn new(base_url: &str, identity: Identity) -> Result<Self> {
        let base = Url::parse(base_url)
            .map_err(|e| Error::InvalidArgument(format!("bad peer url `{base_url}`: {e}")))?;
        let http = Http::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| Error::PeerUnreachable(e.to_string()))?;
        Ok(Client {
            base,
            http,
            identity,
        })
    }

    pub fn base_url(&self) -> &Url {
        &self.base
    }

    fn url(&self, path: &str, query: &[(&str, &str)]) -> Result<Url> {
        let mut url = self
            .base
            .join(path.trim_start_matches('/'))
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        if !query.is_empty() {
            url.query_pairs_mut().extend_pairs(query);
        }
        Ok(url)
    }

    /// Sends a signed request; non-success statuses become [`Error::Remote`].
    pub fn send(
        &self,
        method: Method,
        path: &str,
        query: &[(&str, &str)],
        body: Vec<u8>,
        content_type: &str,
    ) -> Result<Response> {
        let url = self.url(path, query)?;
        let pq = match url.query() {
            Some(q) => format!("{}?{q}", url.path()),
            None => url.path().to_string(),
        };
        let token = sign_request(
            &self.identity.secret_key,
            &self.identity.dn,
            now_secs(),
            &request_digest(method.as_str(), &pq, &body),
        );
        let [dn, ts, sig] = token.header_values();
        let resp = self
            .http
            .request(method, url)
            .header(DN_HEADER, dn)
            .header(TIMESTAMP_HEADER, ts)
            .header(SIGNATURE_HEADER, sig)
            .header(reqwest::header::CONTENT_TYPE, content_type)
            .body(body)
            .send()
            .map_err(|e| Error::PeerUnreachable(e.to_string()))?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let body = resp.text().unwrap_or_default();
        Err(Error::Remote { status, body })
    }

    fn json<T: DeserializeOwned>(resp: Response) -> Result<T> {
        let bytes = resp
            .bytes()
            .map_err(|e| Error::PeerUnreachable(e.to_string()))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, &str)]) -> Result<T> {
        Self::json(self.send(Method::GET, path, query, Vec::new(), "application/json")?)
    }

    pub fn call<B: Serialize + ?Sized, T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: &B,
    ) -> Result<T> {
        Self::json(self.send(
            method,
            path,
            &[],
            serde_json::to_vec(body)?,
            "application/json",
        )?)
    }

    pub fn health(&self) -> Result<Value> {
        let resp = self
            .http
            .get(self.url("/health", &[])?)
            .send()
            .map_err(|e| Error::PeerUnreachable(e.to_string()))?;
        Self::json(resp)
    }

    pub fn stats(&self) -> Result<StoreStats> {
        self.get("/stats", &[])
    }

    pub fn post_batch(&self, batch: &AssertionBatch) -> Result<BatchReceipt> {
        self.call(Method::POST, "/batch", batch)
    }

    pub fn query(&self, expr: &str) -> Result<WireResultSet> {
        self.get("/query", &[("expr", expr)])
    }

    /// Lineage or question answer about a node, as returned by the server.
    pub fn lineage(
        &self,
        kind: NodeKind,
        identifier: &str,
        params: &[(&str, &str)],
    ) -> Result<Value> {
        let id: String = url_segment(identifier);
        self.get(&format!("/lineage/{}/{id}", kind.as_str()), params)
    }

    pub fn get_item(&self, id: ItemId) -> Result<ItemRecord> {
        self.get(&format!("/items/{id}"), &[])
    }

    pub fn query_items(&self, predicate: &Predicate) -> Result<Vec<ItemRecord>> {
        self.get("/items", &[("query", &serde_json::to_string(predicate)?)])
    }

    pub fn update_metadata(&self, id: ItemId, patch: &MetadataPatch) -> Result<ItemRecord> {
        self.call(Method::PATCH, &format!("/items/{id}"), patch)
    }

    pub fn delete_item(&self, id: ItemId) -> Result<ItemRecord> {
        Self::json(self.send(
            Method::DELETE,
            &format!("/items/{id}"),
            &[],
            Vec::new(),
            "application/json",
        )?)
    }

    pub fn copy_item(&self, id: ItemId, path: &str) -> Result<ImportOutcome> {
        self.call(
            Method::POST,
            &format!("/items/{id}/copy"),
            &CopyBody { path: path.into() },
        )
    }

    pub fn attach_signature(
        &self,
        id: ItemId,
        sig: &provnote_core::signing::SignatureRecord,
    ) -> Result<ItemRecord> {
        self.call(Method::POST, &format!("/items/{id}/signatures"), sig)
    }

    pub fn verify_item(&self, id: ItemId) -> Result<Vec<SignatureCheck>> {
        self.get(&format!("/items/{id}/verify"), &[])
    }

    pub fn import(&self, body: &ImportBody) -> Result<ImportOutcome> {
        self.call(Method::POST, "/import", body)
    }

    pub fn create_collection(&self, body: &CollectionBody) -> Result<Vec<ItemRecord>> {
        self.call(Method::POST, "/collections", body)
    }

    pub fn search(&self, text: &str) -> Result<Vec<ItemRecord>> {
        self.get("/search", &[("text", text)])
    }

    pub fn state_digest(&self) -> Result<Digest> {
        let v: Value = self.get("/statedigest", &[])?;
        v["digest"]
            .as_str()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Corrupt("state digest response".into()))
    }

    pub fn put_content(&self, bytes: &[u8]) -> Result<Stored> {
        Self::json(self.send(
            Method::PUT,
            "/content",
            &[],
            bytes.to_vec(),
            "application/octet-stream",
        )?)
    }

    pub fn get_content(&self, digest: &Digest) -> Result<Vec<u8>> {
        let resp = self.send(
            Method::GET,
            &format!("/content/{digest}"),
            &[],
            Vec::new(),
            "application/json",
        )?;
        Ok(resp
            .bytes()
            .map_err(|e| Error::PeerUnreachable(e.to_string()))?
            .to_vec())
    }

    pub fn has_content(&self, digest: &Digest) -> Result<bool> {
        match self.send(
            Method::HEAD,
            &format!("/content/{digest}"),
            &[],
            Vec::new(),
            "application/json",
        ) {
            Ok(_) => Ok(true),
            Err(Error::Remote { status, .. }) if status == StatusCode::NOT_FOUND.as_u16() => {
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }
}

/// Percent-encodes a single path segment.
fn url_segment(text: &str) -> String {
    let mut url = Url::parse("http://x/").expect("static url");
    url.path_segments_mut().expect("base url").push(text);
    url.path().trim_start_matches('/').to_string()
}

/// A remote site reached over HTTP.
pub struct HttpPeer(pub Client);

impl Peer for HttpPeer {
    fn since_vector(&self) -> Result<SinceVector> {
        self.0.get("/changes/vector", &[])
    }

    fn changes_since(&self, since: &SinceVector) -> Result<ChangeSet> {
        self.0
            .get("/changes", &[("since", &serde_json::to_string(since)?)])
    }

    fn apply_changes(&self, changes: &ChangeSet) -> Result<ApplyReport> {
        self.0.call(Method::POST, "/changes", changes)
    }

    fn has_content(&self, digest: &Digest) -> Result<bool> {
        self.0.has_content(digest)
    }

    fn get_content(&self, digest: &Digest) -> Result<Vec<u8>> {
        self.0.get_content(digest)
    }

    fn put_content(&self, bytes: &[u8]) -> Result<Digest> {
        Ok(self.0.put_content(bytes)?.digest)
    }
}
