//! Wire-protocol tests for the inference client against a minimal local
//! HTTP server.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener};
use std::thread::JoinHandle;

use revex_core::backend::{
    BackendError, FinishReason, GenerationBackend, GenerationRequest, HttpBackendConfig,
    InferenceClient,
};

/// Serve one canned (status, body) per incoming request and capture the
/// raw request text.
fn spawn_server(replies: Vec<(u16, String)>) -> (SocketAddr, JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut captured = Vec::new();
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().expect("accept");
            let mut buf = Vec::new();
            let mut tmp = [0u8; 4096];
            let raw = loop {
                let n = stream.read(&mut tmp).expect("read");
                buf.extend_from_slice(&tmp[..n]);
                let text = String::from_utf8_lossy(&buf).into_owned();
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|l| {
                            let (k, v) = l.split_once(':')?;
                            k.eq_ignore_ascii_case("content-length")
                                .then(|| v.trim().parse::<usize>().ok())?
                        })
                        .unwrap_or(0);
                    if buf.len() >= header_end + 4 + content_length {
                        break text;
                    }
                }
            };
            captured.push(raw);
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).expect("write");
        }
        captured
    });
    (addr, handle)
}

fn client_for(addr: SocketAddr, auth_env: &str) -> InferenceClient {
    InferenceClient::new(HttpBackendConfig {
        endpoint: format!("http://{addr}/generate"),
        auth_token_env: auth_env.to_string(),
        max_in_flight: 2,
        timeout_secs: 5,
    })
    .unwrap()
}

fn request() -> GenerationRequest {
    GenerationRequest {
        prompt: "Question: q\nPassages: p".to_string(),
        num_samples: 2,
        temperature: 0.7,
        max_new_tokens: 64,
        stop_sequences: vec!["</extract>".to_string()],
        return_logprobs: true,
    }
}

#[test]
fn round_trips_the_wire_format() {
    let body = r#"{"choices":[
        {"text":"<reason>a</reason>","tokens":[3,5],"token_logprobs":[-0.5,-1.25],"finish_reason":"stop"},
        {"text":"cut off","tokens":[7],"token_logprobs":[-2.0],"finish_reason":"length"}
    ]}"#;
    let (addr, server) = spawn_server(vec![(200, body.to_string())]);
    let client = client_for(addr, "");
    let results = client.generate(&request()).unwrap();

    assert_eq!(results.len(), 2);
    assert_eq!(results[0].text, "<reason>a</reason>");
    assert_eq!(results[0].token_ids, vec![3, 5]);
    assert_eq!(results[0].token_logprobs, vec![-0.5, -1.25]);
    assert_eq!(results[0].finish_reason, FinishReason::Stop);
    assert_eq!(results[1].finish_reason, FinishReason::Length);

    let captured = server.join().unwrap();
    let raw = &captured[0];
    assert!(raw.starts_with("POST /generate"));
    let body_start = raw.find("\r\n\r\n").unwrap() + 4;
    let sent: serde_json::Value = serde_json::from_str(&raw[body_start..]).unwrap();
    assert_eq!(sent["prompt"], "Question: q\nPassages: p");
    assert_eq!(sent["n"], 2);
    assert_eq!(sent["temperature"], 0.7);
    assert_eq!(sent["max_tokens"], 64);
    assert_eq!(sent["stop"][0], "</extract>");
    assert_eq!(sent["logprobs"], true);
}

#[test]
fn sends_bearer_token_from_environment() {
    let var = "REVEX_TEST_TOKEN_A";
    std::env::set_var(var, "sekrit");
    let body =
        r#"{"choices":[{"text":"x","tokens":[1],"token_logprobs":[-0.1],"finish_reason":"stop"}]}"#;
    let (addr, server) = spawn_server(vec![(200, body.to_string())]);
    let client = client_for(addr, var);
    let mut req = request();
    req.num_samples = 1;
    client.generate(&req).unwrap();
    let captured = server.join().unwrap();
    assert!(
        captured[0]
            .lines()
            .any(|l| l.eq_ignore_ascii_case("authorization: bearer sekrit")),
        "no auth header in {:?}",
        captured[0]
    );
}

#[test]
fn remote_error_status_is_reported() {
    let (addr, server) = spawn_server(vec![(422, r#"{"error":"context overflow"}"#.to_string())]);
    let client = client_for(addr, "");
    match client.generate(&request()) {
        Err(BackendError::Remote {
            status: 422,
            message,
        }) => {
            assert!(message.contains("context overflow"));
        }
        other => panic!("expected Remote error, got {other:?}"),
    }
    server.join().unwrap();
}

#[test]
fn malformed_reply_is_an_error() {
    let (addr, server) = spawn_server(vec![(200, "not json at all".to_string())]);
    let client = client_for(addr, "");
    assert!(matches!(
        client.generate(&request()),
        Err(BackendError::MalformedReply(_))
    ));
    server.join().unwrap();
}

#[test]
fn wrong_choice_count_is_an_error() {
    let body = r#"{"choices":[{"text":"only one","tokens":[],"token_logprobs":[],"finish_reason":"stop"}]}"#;
    let (addr, server) = spawn_server(vec![(200, body.to_string())]);
    let client = client_for(addr, "");
    match client.generate(&request()) {
        Err(BackendError::MalformedReply(m)) => assert!(m.contains("requested 2")),
        other => panic!("expected MalformedReply, got {other:?}"),
    }
    server.join().unwrap();
}

#[test]
fn mismatched_logprob_lengths_are_an_error() {
    let body = r#"{"choices":[
        {"text":"a","tokens":[1,2],"token_logprobs":[-0.1],"finish_reason":"stop"},
        {"text":"b","tokens":[1],"token_logprobs":[-0.1],"finish_reason":"stop"}
    ]}"#;
    let (addr, server) = spawn_server(vec![(200, body.to_string())]);
    let client = client_for(addr, "");
    assert!(matches!(
        client.generate(&request()),
        Err(BackendError::MalformedReply(_))
    ));
    server.join().unwrap();
}

#[test]
fn unknown_finish_reason_is_an_error() {
    let body = r#"{"choices":[
        {"text":"a","tokens":[1],"token_logprobs":[-0.1],"finish_reason":"stop"},
        {"text":"b","tokens":[1],"token_logprobs":[-0.1],"finish_reason":"banana"}
    ]}"#;
    let (addr, server) = spawn_server(vec![(200, body.to_string())]);
    let client = client_for(addr, "");
    assert!(matches!(
        client.generate(&request()),
        Err(BackendError::MalformedReply(_))
    ));
    server.join().unwrap();
}

#[test]
fn unreachable_endpoint_is_an_error() {
    // grab a loopback port and close it again: nothing listens there
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let client = InferenceClient::new(HttpBackendConfig {
        endpoint: format!("http://127.0.0.1:{port}/generate"),
        auth_token_env: String::new(),
        max_in_flight: 1,
        timeout_secs: 1,
    })
    .unwrap();
    assert!(matches!(
        client.generate(&request()),
        Err(BackendError::Unreachable(_))
    ));
}

#[test]
fn scoring_is_unsupported_over_the_wire() {
    let (addr, _server) = spawn_server(vec![]);
    let client = client_for(addr, "");
    assert!(matches!(
        client.score("prompt", "completion"),
        Err(BackendError::ScoringUnsupported)
    ));
}
