mod common;

use common::{chat_reply, Stub};
use kbforge_core::gateway::{replay_audit, BackendDescriptor, ElicitationRequest, Gateway, GatewayError, NerRequest, RemoteChat};
use kbforge_core::retry::Backoff;

fn descriptor(url: &str) -> BackendDescriptor {
    let mut d = BackendDescriptor::remote(url, "test-model", 0.0);
    d.backoff = Backoff::none();
    d.request_timeout_seconds = 5;
    d
}

fn chat(d: BackendDescriptor) -> RemoteChat {
    RemoteChat::with_api_key(d, "test-key".into()).unwrap()
}

#[test]
fn invalid_json_is_retried_then_reported() {
    let stub = Stub::start(|_, _| (200, chat_reply("{\"triples\": [oops")));
    let mut d = descriptor(&stub.url);
    d.max_retries = 2;
    let err = chat(d).elicit(&ElicitationRequest::new("Hammurabi", "babylon", "en")).unwrap_err();
    assert!(matches!(err, GatewayError::MalformedOutput { attempts: 3, .. }), "{err:?}");
    assert_eq!(stub.count(), 3);
}

#[test]
fn well_formed_reply_is_parsed_and_subject_enforced() {
    let content = r#"{"triples":[
        {"subject":"Hammurabi","predicate":"ruled","object":"Babylon"},
        {"subject":"Someone Else","predicate":"ruled","object":"Ur"}]}"#;
    let stub = Stub::start(move |_, _| (200, chat_reply(content)));
    let resp = chat(descriptor(&stub.url)).elicit(&ElicitationRequest::new("  Hammurabi ", "babylon", "en")).unwrap();
    assert_eq!(resp.triples.len(), 2);
    assert!(resp.triples.iter().all(|t| t.subject == "Hammurabi"));
    let seen = stub.seen.lock().unwrap();
    assert_eq!(seen[0].0, "/chat/completions");
    let body: serde_json::Value = serde_json::from_str(&seen[0].1).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][1]["content"], "Hammurabi");
    assert_eq!(body["response_format"]["type"], "json_schema");
}

#[test]
fn persistent_429_is_rate_limited() {
    let stub = Stub::start(|_, _| (429, "{}".into()));
    let mut d = descriptor(&stub.url);
    d.max_retries = 1;
    let err = chat(d).elicit(&ElicitationRequest::new("Hammurabi", "babylon", "en")).unwrap_err();
    assert!(matches!(err, GatewayError::RateLimited { attempts: 2 }), "{err:?}");
    assert!(err.is_fatal());
    assert_eq!(stub.count(), 2);
}

#[test]
fn client_error_is_not_retried() {
    let stub = Stub::start(|_, _| (401, "{\"error\":\"bad key\"}".into()));
    let err = chat(descriptor(&stub.url)).elicit(&ElicitationRequest::new("Hammurabi", "babylon", "en")).unwrap_err();
    assert!(matches!(err, GatewayError::Transport(_)));
    assert_eq!(stub.count(), 1);
}

#[test]
fn ner_verdicts_follow_phrase_order_across_batches() {
    // Named entities are the capitalized phrases.
    let stub = Stub::start(|_, body| {
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        let user = v["messages"][1]["content"].as_str().unwrap().to_string();
        let verdicts: Vec<serde_json::Value> = user
            .lines()
            .map(|p| serde_json::json!({"phrase": p, "is_named_entity": p.starts_with(char::is_uppercase)}))
            .collect();
        (200, chat_reply(&serde_json::json!({ "verdicts": verdicts }).to_string()))
    });
    let mut d = descriptor(&stub.url);
    d.ner_batch_size = 2;
    let phrases: Vec<String> = ["Babylon", "city", "Marduk", "1792 BC", "river"].iter().map(|s| s.to_string()).collect();
    let req = NerRequest {
        phrases,
        topic: "babylon".into(),
        language: "en".into(),
    };
    let verdicts = chat(d).classify_ner(&req).unwrap().verdicts;
    assert_eq!(verdicts, vec![true, false, true, false, false]);
    assert_eq!(stub.count(), 3);
}

#[test]
fn audit_log_replays_without_network() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("audit.ndjson");
    let content = r#"{"triples":[{"subject":"Marduk","predicate":"spouse","object":"Sarpanit"}]}"#;
    let stub = Stub::start(move |_, _| (200, chat_reply(content)));
    let mut d = descriptor(&stub.url);
    d.audit_log = Some(log.clone());
    let live = chat(d).elicit(&ElicitationRequest::new("Marduk", "babylon", "en")).unwrap();
    let replayed = replay_audit(&log).unwrap();
    assert_eq!(replayed.len(), 1);
    assert_eq!(replayed[0].0, "Marduk");
    assert_eq!(replayed[0].1.triples, live.triples);
}

#[test]
fn missing_endpoint_is_rejected() {
    let mut d = BackendDescriptor::remote("", "m", 0.0);
    d.endpoint_url = None;
    assert!(matches!(RemoteChat::with_api_key(d, "k".into()), Err(GatewayError::InvalidDescriptor(_))));
}
