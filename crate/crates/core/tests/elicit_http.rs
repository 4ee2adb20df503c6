//! Transport-contract tests for the LLM client against a local stub server.

mod common;

use common::{chat_body, StubServer};
use priorgauge::elicit::{call_llm, ElicitError, EndpointConfig};

fn config_for(server: &StubServer, key_env: &str, attempts: usize) -> EndpointConfig {
    EndpointConfig {
        provider: "openai".into(),
        base_url: server.base_url.clone(),
        model: "stub".into(),
        temperature: 0.0,
        max_tokens: 256,
        api_key_env: key_env.into(),
        attempts,
        timeout_secs: 5,
    }
}

#[test]
fn echoes_fixed_text_verbatim() {
    let server = StubServer::start(vec![(200, chat_body("fixed text 123"))]);
    std::env::set_var("ELICIT_ECHO_KEY", "k");
    let config = config_for(&server, "ELICIT_ECHO_KEY", 3);
    let response = call_llm("hello", &config).unwrap();
    assert_eq!(response.text, "fixed text 123");
    assert_eq!(response.prompt_tokens, Some(100));
    assert_eq!(response.completion_tokens, Some(200));
    assert_eq!(server.hit_count(), 1);
}

#[test]
fn http_500_thrice_exhausts_retries() {
    let server = StubServer::start(vec![
        (500, "boom".into()),
        (500, "boom".into()),
        (500, "boom".into()),
    ]);
    std::env::set_var("ELICIT_RETRY_KEY", "k");
    let config = config_for(&server, "ELICIT_RETRY_KEY", 3);
    match call_llm("hello", &config) {
        Err(ElicitError::Transport { attempts, detail }) => {
            assert_eq!(attempts, 3);
            assert!(detail.contains("500"), "detail: {detail}");
        }
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(server.hit_count(), 3);
}

#[test]
fn recovers_when_a_retry_succeeds() {
    let server = StubServer::start(vec![(500, "boom".into()), (200, chat_body("second try"))]);
    std::env::set_var("ELICIT_RECOVER_KEY", "k");
    let config = config_for(&server, "ELICIT_RECOVER_KEY", 3);
    let response = call_llm("hello", &config).unwrap();
    assert_eq!(response.text, "second try");
    assert_eq!(server.hit_count(), 2);
}

#[test]
fn empty_body_is_an_empty_response_error() {
    let server = StubServer::start(vec![(200, String::new())]);
    std::env::set_var("ELICIT_EMPTY_KEY", "k");
    let config = config_for(&server, "ELICIT_EMPTY_KEY", 3);
    assert!(matches!(
        call_llm("hello", &config),
        Err(ElicitError::EmptyResponse)
    ));
}

#[test]
fn empty_content_field_is_an_empty_response_error() {
    let server = StubServer::start(vec![(200, chat_body(""))]);
    std::env::set_var("ELICIT_EMPTYC_KEY", "k");
    let config = config_for(&server, "ELICIT_EMPTYC_KEY", 3);
    assert!(matches!(
        call_llm("hello", &config),
        Err(ElicitError::EmptyResponse)
    ));
}

#[test]
fn auth_rejection_fails_fast_without_retry() {
    let server = StubServer::start(vec![(401, r#"{"error": "bad key"}"#.into())]);
    std::env::set_var("ELICIT_AUTH_KEY", "wrong");
    let config = config_for(&server, "ELICIT_AUTH_KEY", 3);
    match call_llm("hello", &config) {
        Err(ElicitError::Auth { status, .. }) => assert_eq!(status, 401),
        other => panic!("expected auth error, got {other:?}"),
    }
    assert_eq!(server.hit_count(), 1);
}

#[test]
fn missing_api_key_names_the_variable() {
    let server = StubServer::start(vec![]);
    let config = config_for(&server, "ELICIT_NO_SUCH_KEY_SET", 3);
    match call_llm("hello", &config) {
        Err(ElicitError::MissingApiKey(var)) => assert_eq!(var, "ELICIT_NO_SUCH_KEY_SET"),
        other => panic!("expected missing-key error, got {other:?}"),
    }
    assert_eq!(server.hit_count(), 0);
}

#[test]
fn anthropic_adapter_extracts_messages_content() {
    let body = serde_json::json!({
        "content": [{"type": "text", "text": "anthropic says hi"}],
        "usage": {"input_tokens": 10, "output_tokens": 20}
    })
    .to_string();
    let server = StubServer::start(vec![(200, body)]);
    std::env::set_var("ELICIT_ANTH_KEY", "k");
    let mut config = config_for(&server, "ELICIT_ANTH_KEY", 1);
    config.provider = "anthropic".into();
    let response = call_llm("hello", &config).unwrap();
    assert_eq!(response.text, "anthropic says hi");
    assert_eq!(response.prompt_tokens, Some(10));
    assert_eq!(response.completion_tokens, Some(20));
}
