//! Drives the HTTP render and tracking service in-process.
//!
//! `gearctl serve --ckpt model.gnck --scene scene/` exposes the same routes
//! on a real socket.

mod common;

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request};
use geared_radiance::io::PresetKind;
use geared_radiance::service::{router, AppState, ServiceConfig};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: Method, uri: &str, body: serde_json::Value) -> (u16, serde_json::Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null))
}

#[tokio::main]
async fn main() {
    let dir = common::out_dir("service");
    let (_, scene) = common::small_scene(PresetKind::OrbitingSphere, &dir.join("scene"));
    let model = common::quick_model(&scene);
    let app = router(Arc::new(AppState::new(model, scene.cameras().to_vec(), ServiceConfig::default())));

    let (_, info) = call(&app, Method::GET, "/scene", serde_json::Value::Null).await;
    println!(
        "scene: {} frames, {} cameras",
        info["frame_count"],
        info["cameras"].as_array().unwrap().len()
    );
    let (s, r) = call(
        &app,
        Method::POST,
        "/render",
        serde_json::json!({"pose": {"view": "holdout"}, "time": 2.0, "layers": ["rgb", "gear"]}),
    )
    .await;
    println!(
        "render {s}: {}x{}, layers {:?}",
        r["width"],
        r["height"],
        r["layers"].as_object().unwrap().keys().collect::<Vec<_>>()
    );
    let (s, c) = call(
        &app,
        Method::POST,
        "/track/click",
        serde_json::json!({"pose": {"view": "cam00"}, "time": 0, "pixel": [16, 17]}),
    )
    .await;
    println!("click {s}: {c}");
    if let Some(id) = c["track_id"].as_u64() {
        for t in [1, 3] {
            let (s, q) = call(
                &app,
                Method::POST,
                "/track/query",
                serde_json::json!({"track_id": id, "pose": {"view": "cam01"}, "time": t}),
            )
            .await;
            println!(
                "query t={t} {s}: status {} runs {}",
                q["status"],
                q["mask"]["runs"].as_array().map_or(0, |r| r.len())
            );
        }
        let (s, _) = call(&app, Method::DELETE, &format!("/track/{id}"), serde_json::Value::Null).await;
        println!("delete {s}");
    }
    let (_, stats) = call(&app, Method::GET, "/stats", serde_json::Value::Null).await;
    println!("stats {stats}");
}
