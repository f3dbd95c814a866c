use std::num::NonZeroUsize;
use std::time::Duration;

use riskpipe_core::error::GatewayError;
use riskpipe_core::gateway::mock::{MockResponse, MockRule, MockScript, MockServer};
use riskpipe_core::gateway::{batch_complete, CompletionBackend, DecodingConfig, FinishReason, LlmClient, RetryPolicy};

fn client(retries: u32) -> LlmClient {
    LlmClient::new(
        Duration::from_secs(5),
        RetryPolicy {
            max_retries: retries,
            base_backoff: Duration::from_millis(5),
        },
    )
}

#[test]
fn canned_completion_round_trip() {
    let script = MockScript::default().rule(MockRule::new("hello", vec![MockResponse::completion("{No, No, No}")]));
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let config = DecodingConfig::greedy("m", server.url());
    let out = client(0).complete("hello there", &config).unwrap();
    assert_eq!(out.text, "{No, No, No}");
    assert_eq!(out.finish_reason, FinishReason::Stop);
    assert_eq!(out.attempts, 1);
    let log = server.requests();
    assert_eq!(log[0].prompt, "hello there");
    assert_eq!(log[0].temperature, Some(0.0));
    assert_eq!(log[0].max_tokens, Some(1024));
}

#[test]
fn server_errors_are_retried() {
    let script = MockScript::default().rule(MockRule::new(
        ".",
        vec![
            MockResponse::status(500),
            MockResponse::status(503),
            MockResponse::status(500),
            MockResponse::completion("ok"),
        ],
    ));
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let out = client(3).complete("x", &DecodingConfig::greedy("m", server.url())).unwrap();
    assert_eq!(out.text, "ok");
    assert_eq!(out.attempts, 4);
    assert_eq!(server.request_count(), 4);
}

#[test]
fn retries_run_out() {
    let script = MockScript::default().rule(MockRule::new(".", vec![MockResponse::status(500)]));
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let err = client(2).complete("x", &DecodingConfig::greedy("m", server.url())).unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 3, .. }), "{err:?}");
}

#[test]
fn client_errors_are_not_retried() {
    let script = MockScript::default().rule(MockRule::new(".", vec![MockResponse::status(400)]));
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let err = client(3).complete("x", &DecodingConfig::greedy("m", server.url())).unwrap_err();
    assert!(matches!(err, GatewayError::Rejected { status: 400, .. }), "{err:?}");
    assert_eq!(server.request_count(), 1);
}

#[test]
fn truncated_completion_is_a_budget_error() {
    let script = MockScript::default().rule(MockRule::new(
        ".",
        vec![MockResponse::Completion {
            content: "A1: Yes, because".into(),
            finish_reason: "length".into(),
        }],
    ));
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let err = client(0).complete("x", &DecodingConfig::greedy("m", server.url())).unwrap_err();
    assert!(matches!(err, GatewayError::Budget { .. }), "{err:?}");
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let addr = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap()
    };
    let err = client(1).complete("x", &DecodingConfig::greedy("m", format!("http://{addr}"))).unwrap_err();
    assert!(err.is_transport(), "{err:?}");
}

fn prompts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("prompt-{i:02}")).collect()
}

#[test]
fn parallelism_one_is_sequential() {
    let script = MockScript::default().rule(MockRule::new("prompt", vec![MockResponse::completion("done")]).with_delay(20));
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let results = batch_complete(
        &client(0),
        &prompts(6),
        &DecodingConfig::greedy("m", server.url()),
        NonZeroUsize::new(1).unwrap(),
    );
    assert!(results.iter().all(Result::is_ok));
    assert_eq!(server.max_in_flight(), 1);
}

#[test]
fn bounded_parallelism_keeps_order() {
    let mut script = MockScript::default();
    for i in 0..16 {
        script = script.rule(
            MockRule::new(format!("^prompt-{i:02}$"), vec![MockResponse::completion(format!("answer-{i:02}"))])
                .with_delay(30),
        );
    }
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let results = batch_complete(
        &client(0),
        &prompts(16),
        &DecodingConfig::greedy("m", server.url()),
        NonZeroUsize::new(4).unwrap(),
    );
    for (i, r) in results.iter().enumerate() {
        assert_eq!(r.as_ref().unwrap().text, format!("answer-{i:02}"));
    }
    assert!(server.max_in_flight() <= 4);
    assert!(server.max_in_flight() >= 2);
}

#[test]
fn one_bad_slot_leaves_others_intact() {
    let script = MockScript::default()
        .rule(MockRule::new("^prompt-01$", vec![MockResponse::raw("not json")]))
        .rule(MockRule::new("prompt", vec![MockResponse::completion("fine")]));
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let results = batch_complete(
        &client(0),
        &prompts(3),
        &DecodingConfig::greedy("m", server.url()),
        NonZeroUsize::new(3).unwrap(),
    );
    assert!(matches!(results[1], Err(GatewayError::Protocol(_))));
    assert_eq!(results[0].as_ref().unwrap().text, "fine");
    assert_eq!(results[2].as_ref().unwrap().text, "fine");
}

#[test]
fn idle_pooled_connections_do_not_block_new_clients() {
    let script = MockScript::default().rule(MockRule::new("prompt", vec![MockResponse::completion("fine")]));
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let config = DecodingConfig::greedy("m", server.url());
    // Earlier clients stay alive, so their pooled connections stay open and idle.
    let clients: Vec<LlmClient> = (0..4).map(|_| client(0)).collect();
    let started = std::time::Instant::now();
    for c in &clients {
        let results = batch_complete(c, &prompts(12), &config, NonZeroUsize::new(4).unwrap());
        assert!(results.iter().all(Result::is_ok), "{results:?}");
    }
    assert!(started.elapsed() < Duration::from_secs(4));
    assert_eq!(server.request_count(), 48);
}
