//! Runs the service under a TRACE subscriber and scans everything logged
//! for password material.

mod common;

use std::io::Write;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::Request;
use kapg::dpg::UpdatePolicy;
use kapg::service::{router, ServiceState};
use kapg::strength::build_rank;
use kapg::{Alphabet, FusedModel, FusionPolicy, GuessConfig, KnowledgeStore, MarkovModel};
use tower::ServiceExt;

#[derive(Clone, Default)]
struct Sink(Arc<Mutex<Vec<u8>>>);

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn no_password_material_in_logs() {
    let sink = Sink::default();
    let writer = sink.clone();
    tracing_subscriber::fmt()
        .with_max_level(tracing::Level::TRACE)
        .with_writer(move || writer.clone())
        .init();

    let a = Alphabet::printable();
    let train = kapg::corpus::synthesize_corpus(&common::spec_a(), 2_000, 1).unwrap();
    let model = MarkovModel::train(&a, &train).unwrap();
    let store = KnowledgeStore::build(&a, &[("purple".into(), 1.0)], 10).unwrap();
    let rank = build_rank(FusedModel::new(&model, &store, FusionPolicy::default()), GuessConfig::default(), 2_000, 2).unwrap();
    let app = router(Arc::new(
        ServiceState::new(model, store, rank, FusionPolicy::default(), UpdatePolicy::default())
            .unwrap()
            .with_token(Some("tok".into())),
    ));
    let secrets = ["Xylophone#42", "Qwerty!Zz9", "bad\u{e9}pass"];
    for s in secrets {
        let body = serde_json::json!({ "password": s }).to_string();
        let _ = app
            .clone()
            .oneshot(Request::post("/evaluate").body(Body::from(body)).unwrap())
            .await
            .unwrap();
    }
    let body = serde_json::json!({ "passwords": secrets, "source": "registration" }).to_string();
    let _ = app
        .clone()
        .oneshot(
            Request::post("/kb/update")
                .header("authorization", "Bearer tok")
                .body(Body::from(body))
                .unwrap(),
        )
        .await
        .unwrap();

    let logs = String::from_utf8_lossy(&sink.0.lock().unwrap()).into_owned();
    assert!(logs.contains("kb update"), "expected some log output");
    for s in secrets {
        assert!(!logs.contains(s), "log leaked a password");
    }
}
