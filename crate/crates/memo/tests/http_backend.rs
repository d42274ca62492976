//! HTTP backend tests against a local stub chat-completions server.

use std::io::{Read, Write};
use std::net::TcpListener;

use memo::backend::{ChatMessage, HttpConfig, ModelBackend};

/// Serve `plan.len()` requests; each entry is (status line, body). Returns
/// the endpoint URL and a handle collecting the raw request bodies.
fn stub_server(plan: Vec<(&'static str, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in plan {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 65536];
            let mut read = 0;
            let request = loop {
                let n = stream.read(&mut buf[read..]).unwrap();
                read += n;
                let text = String::from_utf8_lossy(&buf[..read]).into_owned();
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    if read >= header_end + 4 + content_length {
                        break text;
                    }
                }
                if n == 0 {
                    break text;
                }
            };
            let body_start = request.find("\r\n\r\n").map(|i| i + 4).unwrap_or(request.len());
            bodies.push(request[body_start..].to_string());
            let response = format!(
                "{status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
        bodies
    });
    (endpoint, handle)
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

fn config(endpoint: String) -> HttpConfig {
    HttpConfig {
        endpoint,
        model: "test-model".into(),
        temperature: 1.0,
        api_key_env: None,
        timeout_secs: 5,
        max_attempts: 3,
        backoff_base_ms: 10,
    }
}

fn messages() -> Vec<ChatMessage> {
    vec![
        ChatMessage::system("You are a competitive game player."),
        ChatMessage::user("Your available actions are: '[check]', '[bet]'"),
    ]
}

#[test]
fn http_backend_returns_first_choice_content() {
    let (endpoint, server) = stub_server(vec![("HTTP/1.1 200 OK", ok_body("I check. [check]"))]);
    let backend = ModelBackend::Http(config(endpoint));
    let reply = backend.complete(&messages(), 256).unwrap();
    assert_eq!(reply, "I check. [check]");

    let bodies = server.join().unwrap();
    let body: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["max_tokens"], 256);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
}

#[test]
fn http_backend_retries_after_server_error() {
    let (endpoint, server) = stub_server(vec![
        ("HTTP/1.1 500 Internal Server Error", "{}".to_string()),
        ("HTTP/1.1 200 OK", ok_body("[bet]")),
    ]);
    let backend = ModelBackend::Http(config(endpoint));
    let reply = backend.complete(&messages(), 64).unwrap();
    assert_eq!(reply, "[bet]");
    assert_eq!(server.join().unwrap().len(), 2);
}

#[test]
fn http_backend_gives_up_after_max_attempts() {
    let plan = vec![
        ("HTTP/1.1 503 Service Unavailable", "{}".to_string()),
        ("HTTP/1.1 503 Service Unavailable", "{}".to_string()),
        ("HTTP/1.1 503 Service Unavailable", "{}".to_string()),
    ];
    let (endpoint, server) = stub_server(plan);
    let backend = ModelBackend::Http(config(endpoint));
    let err = backend.complete(&messages(), 64).unwrap_err();
    assert!(err.to_string().contains("3 attempts"));
    assert_eq!(server.join().unwrap().len(), 3);
}

#[test]
fn http_backend_rejects_responses_without_choices() {
    let (endpoint, server) = stub_server(vec![(
        "HTTP/1.1 200 OK",
        serde_json::json!({"choices": []}).to_string(),
    )]);
    let backend = ModelBackend::Http(config(endpoint));
    let err = backend.complete(&messages(), 64).unwrap_err();
    assert!(err.to_string().contains("no choices"));
    server.join().unwrap();
}
