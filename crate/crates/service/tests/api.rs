use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use base64::Engine;
use http_body_util::BodyExt;
use logan_core::composer::BaseSpec;
use logan_core::layout::Palette;
use logan_core::{
    EditOp, EditScript, GeneratorModel, ObjectBank, RegionMask, SegmentationMap, Session, ToyConfig,
};
use logan_service::{router, AppState, ErrorCode, ModelRegistry, SessionResource};
use serde_json::{json, Value};
use tower::ServiceExt;

fn toy(seed: u64) -> Arc<GeneratorModel> {
    Arc::new(GeneratorModel::toy(&ToyConfig::with_seed(seed)).unwrap())
}

fn bank() -> ObjectBank {
    let session = Session::from_seed(toy(7), Arc::new(ObjectBank::new()), 3).unwrap();
    let mut bank = ObjectBank::new();
    for (id, cat, mask) in [
        (
            "bed_1",
            "bed",
            RegionMask::rect(256, 256, 32, 128, 160, 224),
        ),
        (
            "lamp_1",
            "lamp",
            RegionMask::rect(256, 256, 192, 32, 224, 128),
        ),
    ] {
        bank.insert(
            session
                .extract_object(id, &mask, cat, &[4, 7], None)
                .unwrap(),
        )
        .unwrap();
    }
    bank
}

fn app_with(max_sessions: usize) -> Router {
    router(Arc::new(AppState::new(
        ModelRegistry::default(),
        bank(),
        max_sessions,
    )))
}

fn app() -> Router {
    app_with(16)
}

async fn send(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Vec<u8>, Option<String>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let etag = resp
        .headers()
        .get(header::ETAG)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes, etag)
}

async fn raw(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

fn error_code(bytes: &[u8]) -> String {
    let v: Value = serde_json::from_slice(bytes).unwrap();
    let code = v["error"]["code"].as_str().unwrap().to_string();
    assert!(
        ErrorCode::ALL.iter().any(|c| c.as_str() == code),
        "undocumented code {code}"
    );
    assert!(v["error"]["message"].is_string());
    code
}

async fn create(app: &Router, seed: u64) -> SessionResource {
    let (status, body, _) = send(
        app,
        "POST",
        "/sessions",
        Some(json!({"model": "toy:7", "seed": seed})),
    )
    .await;
    assert_eq!(
        status,
        StatusCode::CREATED,
        "{}",
        String::from_utf8_lossy(&body)
    );
    serde_json::from_slice(&body).unwrap()
}

#[tokio::test]
async fn healthz() {
    let (status, body, _) = send(&app(), "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        serde_json::from_slice::<Value>(&body).unwrap()["status"],
        "ok"
    );
}

#[tokio::test]
async fn create_and_render_matches_synthesis() {
    let app = app();
    let a = create(&app, 1).await;
    let b = create(&app, 1).await;
    assert_ne!(a.id, b.id);
    assert_eq!(a.status, "ready");
    assert!(a.log.is_empty());

    let (status, png, etag) = send(&app, "GET", &a.links.render, None).await;
    assert_eq!(status, StatusCode::OK);
    let model = toy(7);
    let expected = model
        .synthesize(&model.sample_codes(1))
        .unwrap()
        .to_png()
        .unwrap();
    assert_eq!(png, expected);
    let (_, _, etag2) = send(&app, "GET", &a.links.render, None).await;
    assert_eq!(etag, etag2);
    assert_eq!(etag.unwrap(), format!("\"{}\"", a.etag));
}

#[tokio::test]
async fn conditional_render() {
    let app = app();
    let s = create(&app, 2).await;
    let req = Request::builder()
        .uri(&s.links.render)
        .header(header::IF_NONE_MATCH, format!("\"{}\"", s.etag))
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_MODIFIED);
}

#[tokio::test]
async fn create_errors() {
    let app = app();
    let (status, body, _) = send(
        &app,
        "POST",
        "/sessions",
        Some(json!({"model": "missing", "seed": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&body), "unknown_model");

    let (status, v) = raw(&app, "POST", "/sessions", "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "malformed_body");

    for body in [
        json!({"model": "toy:7"}),
        json!({"model": "toy:7", "seed": 1, "codes": []}),
        json!({"model": "toy:7", "seed": 1, "colour": "red"}),
        json!({"model": "toy:7", "codes": [[0.0]]}),
    ] {
        let (status, bytes, _) = send(&app, "POST", "/sessions", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(error_code(&bytes), "malformed_body");
    }
}

#[tokio::test]
async fn session_limit() {
    let app = app_with(1);
    create(&app, 1).await;
    let (status, body, _) = send(
        &app,
        "POST",
        "/sessions",
        Some(json!({"model": "toy:7", "seed": 2})),
    )
    .await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert_eq!(error_code(&body), "session_limit");
}

#[tokio::test]
async fn edit_flow_and_errors() {
    let app = app();
    let s = create(&app, 3).await;
    let edits = format!("/sessions/{}/edits", s.id);

    let (status, body, _) = send(
        &app,
        "POST",
        &edits,
        Some(json!({"op": "remove", "object": "bed_1"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let after: SessionResource = serde_json::from_slice(&body).unwrap();
    assert_eq!(after.log.len(), 1);
    assert_eq!(after.log[0].layer, Some(4));
    assert_ne!(after.etag, s.etag);

    let (status, body, _) = send(
        &app,
        "POST",
        &edits,
        Some(json!({"op": "insert", "object": "sofa_9"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&body), "unknown_object");
    assert!(String::from_utf8_lossy(&body).contains("sofa_9"));

    let (status, body, _) = send(&app, "POST", &edits, Some(json!({"op": "teleport"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&body), "invalid_op");

    let (status, body, _) = send(&app, "POST", &edits, Some(json!({"op": "insert"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&body), "invalid_op");
    assert!(String::from_utf8_lossy(&body).contains("/object"));

    let (status, body, _) = send(
        &app,
        "POST",
        &edits,
        Some(json!({"op": "insert", "object": "bed_1", "layer": 40})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&body), "invalid_op");

    let (status, body, _) = send(&app, "POST", &edits, Some(json!({"op": "clear_room"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&body), "no_segmentation");

    let (status, v) = raw(&app, "POST", &edits, "[1,").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "malformed_body");

    let (_, body, _) = send(&app, "GET", &format!("/sessions/{}", s.id), None).await;
    let current: SessionResource = serde_json::from_slice(&body).unwrap();
    assert_eq!(current.log.len(), 1);
    assert_eq!(current.status, "ready");

    let (status, body, _) = send(
        &app,
        "POST",
        "/sessions/nope/edits",
        Some(json!({"op": "remove", "object": "bed_1"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&body), "unknown_session");
}

#[tokio::test]
async fn render_layers() {
    let app = app();
    let s = create(&app, 4).await;
    for (q, want) in [
        ("?layer=99", StatusCode::UNPROCESSABLE_ENTITY),
        ("?layer=0", StatusCode::UNPROCESSABLE_ENTITY),
        ("?layer=x", StatusCode::UNPROCESSABLE_ENTITY),
        ("?layer=15", StatusCode::OK),
        ("?layer=3", StatusCode::OK),
    ] {
        let (status, body, _) = send(&app, "GET", &format!("{}{q}", s.links.render), None).await;
        assert_eq!(status, want, "{q}");
        if want == StatusCode::OK {
            assert_eq!(&body[1..4], b"PNG");
        } else {
            assert_eq!(error_code(&body), "bad_layer");
        }
    }
    let (status, body, _) = send(&app, "GET", "/sessions/zzz/render", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&body), "unknown_session");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_edits_one_wins() {
    let app = app();
    let s = create(&app, 5).await;
    let edits = format!("/sessions/{}/edits", s.id);
    let a = send(
        &app,
        "POST",
        &edits,
        Some(json!({"op": "remove", "object": "bed_1"})),
    );
    let b = send(
        &app,
        "POST",
        &edits,
        Some(json!({"op": "remove", "object": "lamp_1"})),
    );
    let ((sa, ba, _), (sb, bb, _)) = tokio::join!(a, b);
    let mut statuses = [sa, sb];
    statuses.sort();
    assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);
    let loser = if sa == StatusCode::CONFLICT { ba } else { bb };
    assert_eq!(error_code(&loser), "edit_in_flight");
    let (_, body, _) = send(&app, "GET", &format!("/sessions/{}", s.id), None).await;
    let current: SessionResource = serde_json::from_slice(&body).unwrap();
    assert_eq!(current.log.len(), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn interleaved_sessions_match_serial_replay() {
    let app = app();
    let s1 = create(&app, 6).await;
    let s2 = create(&app, 7).await;
    let ops1 = [
        json!({"op": "remove", "object": "bed_1"}),
        json!({"op": "insert", "object": "lamp_1", "position": [120, 90]}),
    ];
    let ops2 = [
        json!({"op": "insert", "object": "bed_1", "position": [140, 170]}),
        json!({"op": "global_style", "style_seed": 4, "layers": [9, 14]}),
    ];
    for (a, b) in ops1.iter().zip(&ops2) {
        let e1 = format!("/sessions/{}/edits", s1.id);
        let e2 = format!("/sessions/{}/edits", s2.id);
        let (r1, r2) = tokio::join!(
            send(&app, "POST", &e1, Some(a.clone())),
            send(&app, "POST", &e2, Some(b.clone()))
        );
        assert_eq!(r1.0, StatusCode::OK);
        assert_eq!(r2.0, StatusCode::OK);
    }
    let model = toy(7);
    let bank = Arc::new(bank());
    for (s, seed, ops) in [(&s1, 6, &ops1), (&s2, 7, &ops2)] {
        let (_, png, _) = send(&app, "GET", &s.links.render, None).await;
        let script = EditScript {
            base: BaseSpec::seed(seed),
            edits: ops
                .iter()
                .map(|v| serde_json::from_value::<EditOp>(v.clone()).unwrap())
                .collect(),
        };
        let serial = Session::new(model.clone(), bank.clone(), None, &script).unwrap();
        assert_eq!(png, serial.image().to_png().unwrap());
    }
}

#[tokio::test]
async fn objects_and_thumbnails() {
    let app = app();
    let (status, body, _) = send(&app, "GET", "/objects", None).await;
    assert_eq!(status, StatusCode::OK);
    let list: Vec<Value> = serde_json::from_slice(&body).unwrap();
    assert_eq!(list.len(), 2);
    assert_eq!(list[0]["id"], "bed_1");
    assert_eq!(list[0]["layers"], json!([4, 7]));

    let (status, png, _) = send(&app, "GET", "/objects/lamp_1/thumbnail", None).await;
    assert_eq!(status, StatusCode::OK);
    let mask = RegionMask::from_png(&png).unwrap();
    assert_eq!(mask.bbox().unwrap().x0, 192);

    let (status, body, _) = send(&app, "GET", "/objects/nope/thumbnail", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&body), "unknown_object");

    let (status, body, _) = send(&app, "GET", "/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&body), "not_found");
}

fn room_upload() -> Value {
    let (w, h) = (256usize, 256usize);
    let mut labels = vec![1u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let xf = x as f64;
            let ceiling = (y as f64) <= (60.0 - (xf - 128.0).abs() * 0.4);
            labels[y * w + x] = if ceiling {
                0
            } else if y >= 190 {
                2
            } else {
                1
            };
            if (32..160).contains(&x) && (150..230).contains(&y) {
                labels[y * w + x] = 3;
            }
        }
    }
    let mut palette = Palette::background();
    palette.0.insert(3, "bed".into());
    let seg = SegmentationMap::new(h, w, labels, palette.clone()).unwrap();
    json!({
        "png_base64": base64::engine::general_purpose::STANDARD.encode(seg.to_png().unwrap()),
        "palette": palette,
    })
}

#[tokio::test]
async fn layout_and_clear_room() {
    let app = app();
    let plain = create(&app, 1).await;
    let (status, body, _) = send(&app, "GET", &plain.links.layout, None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&body), "no_segmentation");

    let (status, body, _) = send(
        &app,
        "POST",
        "/sessions",
        Some(json!({"model": "toy:7", "seed": 1, "segmentation": room_upload()})),
    )
    .await;
    assert_eq!(
        status,
        StatusCode::CREATED,
        "{}",
        String::from_utf8_lossy(&body)
    );
    let s: SessionResource = serde_json::from_slice(&body).unwrap();
    let (status, body, _) = send(&app, "GET", &s.links.layout, None).await;
    assert_eq!(status, StatusCode::OK);
    let layout: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(layout["left_anchor"]["x"], 0.0);
    assert_eq!(layout["right_anchor"]["x"], 255.0);

    let (_, before, _) = send(&app, "GET", &s.links.render, None).await;
    let (status, _, _) = send(
        &app,
        "POST",
        &format!("/sessions/{}/edits", s.id),
        Some(json!({"op": "clear_room"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (_, after, _) = send(&app, "GET", &s.links.render, None).await;
    assert_ne!(before, after);
}
