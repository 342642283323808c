//! The HTTP scoring service. By default drives the router in process and
//! prints the JSON it returns; pass `listen ADDR` to serve on a socket.
//!
//! cargo run --example strength_service
//! cargo run --example strength_service -- listen 127.0.0.1:8080

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use kapg::corpus::{synthesize_corpus, SynthSpec};
use kapg::dpg::UpdatePolicy;
use kapg::service::{router, serve, ServiceState};
use kapg::strength::build_rank;
use kapg::{Alphabet, FusedModel, FusionPolicy, GuessConfig, KnowledgeStore, MarkovModel};
use tower::ServiceExt;

#[tokio::main]
async fn main() -> kapg::Result<()> {
    let alphabet = Alphabet::printable();
    let spec = SynthSpec::parse("word+2digits = 0.7\nkeyboard = 0.3\n")?;
    let model = MarkovModel::train(&alphabet, &synthesize_corpus(&spec, 10_000, 1)?)?;
    let store = KnowledgeStore::build(&alphabet, &[("purple".to_string(), 1.0)], 10)?;
    let rank = build_rank(FusedModel::new(&model, &store, FusionPolicy::default()), GuessConfig::default(), 10_000, 2)?;
    let state = Arc::new(
        ServiceState::new(model, store, rank, FusionPolicy::default(), UpdatePolicy::default())?
            .with_token(Some("demo-token".into())),
    );

    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [cmd, addr] = args.as_slice() {
        if cmd == "listen" {
            return serve(state, addr).await;
        }
    }

    let app = router(state);
    let send = |req: Request<Body>| {
        let app = app.clone();
        async move {
            let resp = app.oneshot(req).await.expect("router is infallible");
            let status = resp.status();
            let body = resp.into_body().collect().await.expect("body").to_bytes();
            println!("{status} {}", String::from_utf8_lossy(&body));
        }
    };
    send(Request::get("/health").body(Body::empty()).unwrap()).await;
    let eval = || Request::post("/evaluate").body(Body::from(r#"{"password":"zigzag77"}"#)).unwrap();
    send(eval()).await;
    send(
        Request::post("/kb/update")
            .header("authorization", "Bearer demo-token")
            .body(Body::from(r#"{"passwords":["zigzag77","zigzag12"],"source":"registration"}"#))
            .unwrap(),
    )
    .await;
    send(eval()).await;
    Ok(())
}
