mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::{signed, signed_as, uri, Harness, DN, NOW};
use ed25519_dalek::SigningKey;
use provnote::sample::item_metadata;
use provnote::service::{ImportBody, WireResultSet};
use provnote_core::fabric::{ChangeSet, ItemRecord, Predicate, SinceVector};
use provnote_core::query::{evaluate, parse};
use provnote_core::{fixtures, AssertionBatch, EdgeLabel, EdgeSpec, NodeKind, NodeRef, NodeSpec};
use serde_json::{json, Value};

const DISCOVERY: &str = "$scientists := g:key($_g, 'type', 'agent')\n\
    $scientistX := g:key($scientists, 'identifier', 'scientistX')\n\
    $thinking := $scientistX/inE/outV[@identifier='thinking']\n\
    $discoveries := $thinking/inE[@label='wasGeneratedBy']/outV[@identifier]";

#[tokio::test]
async fn health_is_open_everything_else_needs_identity() {
    let h = Harness::new();
    let (status, _) = h
        .send(Request::get("/health").body(Body::empty()).unwrap())
        .await;
    assert_eq!(status, StatusCode::OK);

    let (status, body) = h
        .send(Request::get("/stats").body(Body::empty()).unwrap())
        .await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(
        serde_json::from_slice::<Value>(&body).unwrap()["error"],
        "bad_identity"
    );

    let stale = h.send(signed("GET", "/stats", Vec::new(), NOW - 301)).await;
    assert_eq!(stale.0, StatusCode::UNAUTHORIZED);
    let fresh = h.send(signed("GET", "/stats", Vec::new(), NOW + 300)).await;
    assert_eq!(fresh.0, StatusCode::OK);

    let stranger = SigningKey::from_bytes(&[3; 32]);
    let forged = h
        .send(signed_as(&stranger, DN, "GET", "/stats", Vec::new(), NOW))
        .await;
    assert_eq!(forged.0, StatusCode::UNAUTHORIZED);
    let unknown = h
        .send(signed_as(
            &stranger,
            "CN=Mallory",
            "GET",
            "/stats",
            Vec::new(),
            NOW,
        ))
        .await;
    assert_eq!(unknown.0, StatusCode::UNAUTHORIZED);

    // signature covers the body
    let mut req = signed("POST", "/batch", b"{\"batch_id\":\"a\"}".to_vec(), NOW);
    *req.body_mut() = Body::from("{\"batch_id\":\"b\"}");
    assert_eq!(h.send(req).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn batches_are_idempotent_and_atomic() {
    let h = Harness::new();
    assert_eq!(
        h.get("/stats").await.1,
        json!({"nodes": 0, "edges": 0, "batches": 0})
    );
    let (status, first) = h.json("POST", "/batch", &fixtures::fig3_batch()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["node_ids"].as_array().unwrap().len(), 7);
    assert_eq!(first["edge_ids"].as_array().unwrap().len(), 7);
    let (_, again) = h.json("POST", "/batch", &fixtures::fig3_batch()).await;
    assert_eq!(first, again);
    assert_eq!(
        h.get("/stats").await.1,
        json!({"nodes": 7, "edges": 7, "batches": 1})
    );

    let (status, empty) = h
        .json("POST", "/batch", &AssertionBatch::new("empty"))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(empty, json!({"node_ids": [], "edge_ids": []}));

    let mut dup = AssertionBatch::new("dup");
    dup.nodes.push(NodeSpec::new(NodeKind::Artifact, "results"));
    let (status, body) = h.json("POST", "/batch", &dup).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "duplicate_identifier");

    let mut bad = AssertionBatch::new("bad");
    bad.nodes.push(NodeSpec::new(NodeKind::Artifact, "fresh"));
    bad.edges.push(EdgeSpec::new(
        EdgeLabel::Used,
        NodeRef::new(NodeKind::Artifact, "fresh"),
        NodeRef::new(NodeKind::Artifact, "results"),
    ));
    let (status, body) = h.json("POST", "/batch", &bad).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "endpoint_kind_violation");
    assert_eq!(
        h.get("/stats").await.1,
        json!({"nodes": 7, "edges": 7, "batches": 2})
    );
}

#[tokio::test]
async fn queries_over_the_wire() {
    let h = Harness::new();
    let (status, body) = h.get(&uri("/query", &[("expr", DISCOVERY)])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"type": "values", "items": []}));

    h.json("POST", "/batch", &fixtures::fig3_batch()).await;
    let (_, body) = h.get(&uri("/query", &[("expr", DISCOVERY)])).await;
    assert_eq!(body, json!({"type": "values", "items": ["discovery"]}));

    let (status, body) = h
        .get(&uri("/query", &[("expr", "$x := g:key($_g, 'type'")]))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "syntax_error");
    assert_eq!(body["line"], 1);
    assert!(body["column"].as_u64().unwrap() > 1);

    let (status, body) = h
        .get(&uri("/query", &[("expr", "$x := $_g/inE/inE")]))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(
        (body["line"].as_u64(), body["column"].as_u64()),
        (Some(1), Some(14))
    );
    let (status, body) = h
        .get(&uri("/query", &[("expr", "$e := $_g/outE\n$f := $e/outE")]))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "type_mismatch");
    assert_eq!(
        (body["line"].as_u64(), body["column"].as_u64()),
        (Some(2), Some(9))
    );

    // same answer as in-process evaluation on the same snapshot
    let store = h.notebook.provenance().view();
    for expr in [
        "$a := g:key($_g, 'type', 'artifact')",
        "$p := g:key($_g, 'identifier', 'experimenting')/outE",
        "$p := g:key($_g, 'identifier', 'experimenting')/outE/inV[@identifier]",
        DISCOVERY,
    ] {
        let (_, body) = h.get(&uri("/query", &[("expr", expr)])).await;
        let local = evaluate(store.graph(), &parse(expr).unwrap()).unwrap().last;
        let wire = provnote::service::wire_result(store.graph(), &local);
        assert_eq!(
            serde_json::from_value::<WireResultSet>(body).unwrap(),
            wire,
            "{expr}"
        );
    }
}

#[tokio::test]
async fn lineage_answers() {
    let h = Harness::new();
    h.json("POST", "/batch", &fixtures::fig3_batch()).await;
    let (status, body) = h
        .get("/lineage/artifact/results?question=participants")
        .await;
    assert_eq!(status, StatusCode::OK);
    let people: Vec<_> = body
        .as_array()
        .unwrap()
        .iter()
        .map(|n| n["identifier"].clone())
        .collect();
    assert_eq!(people, [json!("scientistX")]);
    assert_eq!(body[0]["kind"], "agent");

    let (status, body) = h
        .get(&uri(
            "/lineage/artifact/research%20paper",
            &[("direction", "ancestors")],
        ))
        .await;
    assert_eq!(status, StatusCode::OK);
    let mut names: Vec<_> = body
        .as_array()
        .unwrap()
        .iter()
        .map(|n| n["identifier"].as_str().unwrap().to_string())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "experimenting",
            "results",
            "scientistX",
            "specimen samples",
            "thinking"
        ]
    );

    let (status, body) = h.get("/lineage/artifact/nothing?question=origin").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown_node");
    assert_eq!(
        h.get("/lineage/widget/results").await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        h.get("/lineage/artifact/results?question=why").await.0,
        StatusCode::BAD_REQUEST
    );

    h.json("POST", "/batch", &fixtures::glp_study_batch()).await;
    let (_, body) = h.get("/lineage/artifact/manual?question=progress").await;
    assert_eq!(body, json!({"stage": "preparation", "finalized": false}));
    // the plan feeds execution, whose raw data is archived
    let (_, body) = h
        .get("/lineage/artifact/study-plan?question=progress")
        .await;
    assert_eq!(body, json!({"stage": "preparation", "finalized": true}));
}

#[tokio::test]
async fn notebook_round_trip_over_rest() {
    let h = Harness::new();
    let (status, made) = h
        .json(
            "POST",
            "/collections",
            &json!({"path": "/s1", "collection_type": "study", "scaffold": true}),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(made.as_array().unwrap().len(), 6);
    let (_, spec) = h.get("/spec").await;
    assert_eq!(spec["roots"], json!(["experiment", "study"]));

    let (status, stored) = h.call("PUT", "/content", b"plan text".to_vec()).await;
    assert_eq!(status, StatusCode::OK);
    let digest = stored["digest"].as_str().unwrap().to_string();
    assert_eq!(stored["size"], 9);
    let (status, _) = h
        .call("HEAD", &format!("/content/{digest}"), Vec::new())
        .await;
    assert_eq!(status, StatusCode::OK);
    let (status, bytes) = h
        .send(signed(
            "GET",
            &format!("/content/{digest}"),
            Vec::new(),
            NOW,
        ))
        .await;
    assert_eq!(
        (status, bytes.as_slice()),
        (StatusCode::OK, &b"plan text"[..])
    );
    let missing = "00".repeat(32);
    assert_eq!(
        h.call("HEAD", &format!("/content/{missing}"), Vec::new())
            .await
            .0,
        StatusCode::NOT_FOUND
    );

    let plan = ImportBody {
        target: "/s1/preparation".into(),
        item_type: "study-plan".into(),
        name: Some("plan".into()),
        metadata: item_metadata(DN, "2026-02-01"),
        content_digest: Some(digest.parse().unwrap()),
        archival_location: None,
        influences: vec![],
    };
    let (status, out) = h.json("POST", "/import", &plan).await;
    assert_eq!(status, StatusCode::CREATED, "{out}");
    let plan_id = out["item"]["item_id"].as_str().unwrap().to_string();

    let mut misplaced = plan.clone();
    misplaced.item_type = "raw-data".into();
    let (status, body) = h.json("POST", "/import", &misplaced).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "placement_violation");

    let specimen = ImportBody {
        target: "/s1/execution".into(),
        item_type: "physical-sample".into(),
        name: Some("specimen".into()),
        metadata: item_metadata(DN, "2026-02-02"),
        content_digest: None,
        archival_location: Some("freezer 1".into()),
        influences: vec![plan_id.parse().unwrap()],
    };
    let (status, out) = h.json("POST", "/import", &specimen).await;
    assert_eq!(status, StatusCode::CREATED, "{out}");
    let specimen_id = out["item"]["item_id"].as_str().unwrap().to_string();
    let (_, origin) = h
        .get(&format!("/lineage/artifact/{specimen_id}?question=origin"))
        .await;
    assert_eq!(origin[0]["identifier"], plan_id.as_str());
    assert_eq!(origin[0]["annotations"]["item_type"], "study-plan");

    let (_, hits) = h.get("/search?text=FREEZER").await;
    assert_eq!(hits.as_array().unwrap().len(), 1);
    let predicate = Predicate::and(vec![
        Predicate::Kind {
            kind: provnote_core::fabric::ItemKind::PhysicalItem,
        },
        Predicate::meta(
            "type",
            provnote_core::fabric::Comparison::Eq,
            "physical-sample",
        ),
    ]);
    let (_, found) = h
        .get(&uri(
            "/items",
            &[("query", &serde_json::to_string(&predicate).unwrap())],
        ))
        .await;
    let found: Vec<ItemRecord> = serde_json::from_value(found).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].item_id.to_string(), specimen_id);
    assert_eq!(
        h.get(&uri("/items", &[("query", "{\"op\":\"nope\"}")]))
            .await
            .0,
        StatusCode::BAD_REQUEST
    );

    let (status, copy) = h
        .json(
            "POST",
            &format!("/items/{plan_id}/copy"),
            &json!({"path": "/s1/preparation/plan-copy"}),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, _) = h
        .json(
            "POST",
            &format!("/items/{plan_id}/copy"),
            &json!({"path": "/s1/preparation/plan-copy"}),
        )
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let copy_id = copy["item"]["item_id"].as_str().unwrap();
    let (_, anc) = h
        .get(&format!("/lineage/artifact/{copy_id}?direction=ancestors"))
        .await;
    assert!(anc
        .as_array()
        .unwrap()
        .iter()
        .any(|n| n["identifier"] == plan_id.as_str()));

    // signing: attach a signature made client-side, then tamper through PATCH
    let rec: ItemRecord =
        serde_json::from_value(h.get(&format!("/items/{plan_id}")).await.1).unwrap();
    let sig = provnote_core::signing::sign(
        &common::key(),
        DN,
        rec.content_digest.as_ref(),
        &rec.metadata,
        42,
    );
    let (status, _) = h
        .json("POST", &format!("/items/{plan_id}/signatures"), &sig)
        .await;
    assert_eq!(status, StatusCode::OK);
    let (_, checks) = h.get(&format!("/items/{plan_id}/verify")).await;
    assert_eq!(checks[0]["valid"], true);
    let (status, _) = h
        .json(
            "PATCH",
            &format!("/items/{plan_id}"),
            &json!({"note": "edited"}),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let (_, checks) = h.get(&format!("/items/{plan_id}/verify")).await;
    assert_eq!(checks[0]["valid"], false);
    let (status, body) = h
        .json(
            "PATCH",
            &format!("/items/{plan_id}"),
            &json!({"created": null}),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "metadata_violation");

    let (status, deleted) = h
        .call("DELETE", &format!("/items/{specimen_id}"), Vec::new())
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(deleted["tombstone"], true);
    assert_eq!(h.get("/search?text=freezer").await.1, json!([]));
    let unknown = uuid::Uuid::from_u128(5);
    assert_eq!(
        h.get(&format!("/items/{unknown}")).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(h.get("/items/not-an-id").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn raw_items_and_change_feed() {
    let h = Harness::new();
    let (status, col) = h
        .json(
            "POST",
            "/items",
            &json!({"path": "/raw", "kind": "collection"}),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(col["revision"]["counter"], 1);
    let (status, body) = h
        .json(
            "POST",
            "/items",
            &json!({"path": "/raw/object", "kind": "physical_item"}),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    let (status, _) = h
        .json(
            "POST",
            "/items",
            &json!({"path": "/raw/f", "kind": "file", "content_digest": "11".repeat(32)}),
        )
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, changes) = h.get("/changes").await;
    let changes: ChangeSet = serde_json::from_value(changes).unwrap();
    assert_eq!(changes.entries.len(), 1);
    let (_, vector) = h.get("/changes/vector").await;
    let vector: SinceVector = serde_json::from_value(vector).unwrap();
    assert_eq!(vector["site"], 1);
    let since = serde_json::to_string(&vector).unwrap();
    let (_, later) = h.get(&uri("/changes", &[("since", &since)])).await;
    assert_eq!(later["entries"], json!([]));

    let (_, digest) = h.get("/statedigest").await;
    assert_eq!(
        digest["digest"],
        h.notebook.fabric().state_digest().to_hex()
    );

    // replaying a feed into itself is a no-op
    let (status, report) = h.json("POST", "/changes", &changes).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["applied"], 0);
}
