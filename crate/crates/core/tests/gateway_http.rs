//! The chat-completions client against a local stub server.

mod common;

use std::time::Duration;

use common::{chat_body, config_in, prompt, Reply, StubServer};
use slowcast::experiment::{cmd_forecast, RunOptions};
use slowcast::provider::{CompletionRequest, Gateway, ProviderError, ProviderSpec, SamplingParams};
use slowcast::synth::SynthSpec;

fn spec_for(server: &StubServer) -> ProviderSpec {
    let mut spec = ProviderSpec::http_chat(&server.url, "stub-reasoner", "unused");
    spec.auth_env_var = None;
    spec.backoff_base_ms = 5;
    spec.max_retries = 3;
    spec
}

const ANSWER: &str = "Looks seasonal.\n<FORECAST>1, 2, 3, 4</FORECAST>";

#[test]
fn request_carries_sampling_parameters_and_trace_is_split() {
    let server = StubServer::start(|_, _| Reply::ok(chat_body(ANSWER, Some("long thought"))));
    let p = prompt(8, 4);
    let record = Gateway::new()
        .complete(
            CompletionRequest::new(&p, 0),
            &SamplingParams::default(),
            &spec_for(&server),
        )
        .unwrap();
    assert_eq!(record.answer_text, "<FORECAST>1, 2, 3, 4</FORECAST>");
    assert!(record.trace_text.contains("long thought"));
    assert!(record.trace_text.contains("Looks seasonal."));
    assert!(record.usage_reported);

    let sent: serde_json::Value = serde_json::from_str(&server.seen()[0].body).unwrap();
    assert_eq!(sent["model"], "stub-reasoner");
    assert_eq!(sent["temperature"], 0.6);
    assert_eq!(sent["top_p"], 0.7);
    assert_eq!(sent["max_tokens"], 8192);
    assert_eq!(sent["stream"], false);
    assert_eq!(sent["messages"][0]["role"], "user");
    assert_eq!(sent["messages"][0]["content"], p.text());
}

#[test]
fn missing_key_fails_before_any_request() {
    let server = StubServer::start(|_, _| Reply::ok(chat_body(ANSWER, None)));
    let mut spec = spec_for(&server);
    spec.auth_env_var = Some("SLOWCAST_TEST_KEY_THAT_IS_NEVER_SET".into());
    let p = prompt(8, 4);
    let err = Gateway::new()
        .complete(
            CompletionRequest::new(&p, 0),
            &SamplingParams::default(),
            &spec,
        )
        .unwrap_err();
    assert!(
        matches!(err, ProviderError::AuthMissing(v) if v == "SLOWCAST_TEST_KEY_THAT_IS_NEVER_SET")
    );
    assert_eq!(server.hits(), 0);
}

#[test]
fn bearer_token_is_sent() {
    let server = StubServer::start(|_, _| Reply::ok(chat_body(ANSWER, None)));
    let mut spec = spec_for(&server);
    spec.auth_env_var = Some("SLOWCAST_TEST_BEARER_KEY".into());
    std::env::set_var("SLOWCAST_TEST_BEARER_KEY", "sk-test-123");
    let p = prompt(8, 4);
    Gateway::new()
        .complete(
            CompletionRequest::new(&p, 0),
            &SamplingParams::default(),
            &spec,
        )
        .unwrap();
    assert_eq!(
        server.seen()[0].authorization.as_deref(),
        Some("Bearer sk-test-123")
    );
}

#[test]
fn rate_limits_and_server_errors_are_retried() {
    let server = StubServer::start(|n, _| match n {
        0 => Reply::status(429),
        1 => Reply::status(503),
        _ => Reply::ok(chat_body(ANSWER, None)),
    });
    let p = prompt(8, 4);
    let record = Gateway::new()
        .complete(
            CompletionRequest::new(&p, 0),
            &SamplingParams::default(),
            &spec_for(&server),
        )
        .unwrap();
    assert_eq!(record.answer_text, "<FORECAST>1, 2, 3, 4</FORECAST>");
    assert_eq!(server.hits(), 3);
}

#[test]
fn retries_are_bounded() {
    let server = StubServer::start(|_, _| Reply::status(429));
    let p = prompt(8, 4);
    let err = Gateway::new()
        .complete(
            CompletionRequest::new(&p, 0),
            &SamplingParams::default(),
            &spec_for(&server),
        )
        .unwrap_err();
    assert!(
        matches!(err, ProviderError::RateLimited { attempts: 4 }),
        "{err:?}"
    );
    assert_eq!(server.hits(), 4);

    let server = StubServer::start(|_, _| Reply::status(500));
    let err = Gateway::new()
        .complete(
            CompletionRequest::new(&p, 0),
            &SamplingParams::default(),
            &spec_for(&server),
        )
        .unwrap_err();
    assert!(matches!(
        err,
        ProviderError::UpstreamError { status: 500, .. }
    ));
    assert_eq!(server.hits(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let server = StubServer::start(|_, _| Reply::status(400));
    let p = prompt(8, 4);
    let err = Gateway::new()
        .complete(
            CompletionRequest::new(&p, 0),
            &SamplingParams::default(),
            &spec_for(&server),
        )
        .unwrap_err();
    assert!(matches!(
        err,
        ProviderError::UpstreamError { status: 400, .. }
    ));
    assert_eq!(server.hits(), 1);
}

#[test]
fn slow_upstream_times_out() {
    let server = StubServer::start(|_, _| {
        Reply::ok(chat_body(ANSWER, None)).delayed(Duration::from_millis(2500))
    });
    let mut spec = spec_for(&server);
    spec.timeout_secs = 1;
    spec.max_retries = 0;
    let p = prompt(8, 4);
    let err = Gateway::new()
        .complete(
            CompletionRequest::new(&p, 0),
            &SamplingParams::default(),
            &spec,
        )
        .unwrap_err();
    assert!(
        matches!(err, ProviderError::Timeout { attempts: 1 }),
        "{err:?}"
    );
}

#[test]
fn minimum_interval_spaces_dispatches() {
    let server = StubServer::start(|_, _| Reply::ok(chat_body(ANSWER, None)));
    let mut spec = spec_for(&server);
    spec.min_request_interval_ms = 80;
    let gateway = Gateway::new();
    let p = prompt(8, 4);
    std::thread::scope(|s| {
        for g in 0..4 {
            let (gateway, spec, p) = (&gateway, &spec, &p);
            s.spawn(move || {
                gateway
                    .complete(
                        CompletionRequest::new(p, g),
                        &SamplingParams::default(),
                        spec,
                    )
                    .unwrap()
            });
        }
    });
    let mut arrivals: Vec<_> = server.seen().into_iter().map(|r| r.arrived).collect();
    arrivals.sort();
    assert_eq!(arrivals.len(), 4);
    for pair in arrivals.windows(2) {
        let gap = pair[1] - pair[0];
        assert!(gap >= Duration::from_millis(70), "gap {gap:?}");
    }
}

#[test]
fn run_never_exceeds_parallel_budget() {
    let server = StubServer::start(|_, _| {
        Reply::ok(chat_body(ANSWER, None)).delayed(Duration::from_millis(60))
    });
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_in(
        dir.path(),
        &SynthSpec {
            rows: 400,
            noise: 0.1,
            ..SynthSpec::default()
        },
        "[window]\nlookback = 8\nhorizon = 4\n[strategy]\ngenerations = 1\n\
         [provider]\nkind = \"mock_seasonal_naive\"\nperiod = 24\n[run]\nmax_parallel_requests = 3\n",
    );
    cfg.provider = spec_for(&server);
    let outcome = cmd_forecast(&cfg, &RunOptions::default()).unwrap();
    assert!(outcome.totals.tasks >= 12, "{} tasks", outcome.totals.tasks);
    assert_eq!(outcome.totals.failed, 0);
    let peak = server
        .peak_in_flight
        .load(std::sync::atomic::Ordering::SeqCst);
    assert!(peak <= 3, "peak in flight {peak}");
    assert!(peak >= 2, "workers never overlapped (peak {peak})");
}
