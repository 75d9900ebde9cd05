mod common;

use std::time::Duration;

use base64::Engine;
use common::{chat_body, StubServer};
use image::{Rgb, RgbImage};
use tifre::embedding::{embed_images, embed_text, BatchOptions, RemoteBackend};
use tifre::llm::{ChatClient, HttpChatClient, Transcript, TranscriptReplay};
use tifre::prompt::{build_rewrite_request, LlmConfig, PromptSet, PromptSource, Question};
use tifre::video::Frame;
use tifre::{Error, RetryPolicy};

fn fast_policy() -> RetryPolicy {
    RetryPolicy {
        timeout: Duration::from_secs(5),
        max_retries: 2,
        initial_backoff: Duration::from_millis(10),
    }
}

fn request() -> tifre::prompt::RewriteRequest {
    let q = Question::new("What is the order of fruits appearing in the video?", vec![]).unwrap();
    build_rewrite_request(&q, &LlmConfig::new("qwen2.5-7b-instruct"))
}

#[test]
fn chat_request_wire_shape() {
    let server = StubServer::start(vec![(200, chat_body("A photo of an apple."))]);
    let client = HttpChatClient::new(server.url.clone(), fast_policy()).with_api_key(Some("sk-test".into()));
    let content = client.complete(&request()).unwrap();
    assert_eq!(content, "A photo of an apple.");

    let seen = server.recorded();
    assert_eq!(seen.len(), 1);
    assert!(seen[0].request_line.starts_with("POST /v1/endpoint"));
    assert_eq!(seen[0].header("authorization"), Some("Bearer sk-test"));
    let body = seen[0].json();
    assert_eq!(body["model"], "qwen2.5-7b-instruct");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], request().content.as_str());
    assert_eq!(body["temperature"], 0.0);
    assert!(body["max_tokens"].as_u64().unwrap() > 0);
}

#[test]
fn chat_retries_transient_failures() {
    let server = StubServer::start(vec![
        (503, "{}".into()),
        (500, "{}".into()),
        (200, chat_body("a photo of a pear")),
    ]);
    let client = HttpChatClient::new(server.url.clone(), fast_policy()).with_api_key(None);
    assert_eq!(client.complete(&request()).unwrap(), "a photo of a pear");
    let seen = server.recorded();
    assert_eq!(seen.len(), 3);
    // identical request every attempt
    assert!(seen.windows(2).all(|w| w[0].body == w[1].body));
}

#[test]
fn chat_gives_up_after_two_retries() {
    let server = StubServer::start(vec![(500, "{}".into()); 4]);
    let client = HttpChatClient::new(server.url.clone(), fast_policy()).with_api_key(None);
    assert!(matches!(client.complete(&request()), Err(Error::Llm(_))));
    assert_eq!(server.recorded().len(), 3);
}

#[test]
fn chat_does_not_retry_client_errors() {
    let server = StubServer::start(vec![(401, "{}".into()), (200, chat_body("a photo of x"))]);
    let client = HttpChatClient::new(server.url.clone(), fast_policy()).with_api_key(None);
    assert!(client.complete(&request()).is_err());
    assert_eq!(server.recorded().len(), 1);
}

#[test]
fn recorded_exchange_replays() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let server = StubServer::start(vec![(200, chat_body("a photo of a kiwi"))]);
    let client = HttpChatClient::new(server.url.clone(), fast_policy())
        .with_api_key(None)
        .recording_to(&path);
    client.complete(&request()).unwrap();

    let t = Transcript::load(&path).unwrap();
    assert_eq!(t.request.messages[0].content, request().content);
    let replay = TranscriptReplay::load(&path).unwrap();
    assert_eq!(replay.complete(&request()).unwrap(), "a photo of a kiwi");
}

#[test]
fn remote_embeddings_roundtrip() {
    let server = StubServer::start(vec![
        (200, serde_json::json!({"vectors": [[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5]]}).to_string()),
        (
            200,
            serde_json::json!({"vectors": [[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]]})
                .to_string(),
        ),
    ]);
    let backend = RemoteBackend::new(server.url.clone(), 8, fast_policy()).unwrap();
    let ps = PromptSet::new(vec!["a photo of a cat".into()], PromptSource::UserSupplied).unwrap();
    let t = embed_text(&ps, &backend).unwrap();
    assert_eq!(t[0].values()[7], 0.5);

    let frames: Vec<Frame> = (0..2)
        .map(|i| Frame::new(i, i as f64, RgbImage::from_pixel(3, 2, Rgb([i as u8 * 100, 1, 2])), "f"))
        .collect();
    let e = embed_images(&frames, &backend, BatchOptions { batch_size: 8, workers: 1 }).unwrap();
    assert_eq!(e.vectors[1].values()[2], 1.0);

    let seen = server.recorded();
    let text_req = seen[0].json();
    assert_eq!(text_req["modality"], "text");
    assert_eq!(text_req["inputs"][0], "a photo of a cat");
    let img_req = seen[1].json();
    assert_eq!(img_req["modality"], "image");
    let png = base64::engine::general_purpose::STANDARD
        .decode(img_req["inputs"][1].as_str().unwrap())
        .unwrap();
    let decoded = image::load_from_memory(&png).unwrap().to_rgb8();
    assert_eq!(decoded, frames[1].image);
}

#[test]
fn remote_dim_mismatch_is_contract_violation() {
    let server = StubServer::start(vec![(200, serde_json::json!({"vectors": [vec![0.1; 384]]}).to_string())]);
    let backend = RemoteBackend::new(server.url.clone(), 512, fast_policy()).unwrap();
    let ps = PromptSet::new(vec!["a photo of a cat".into()], PromptSource::UserSupplied).unwrap();
    assert!(matches!(embed_text(&ps, &backend), Err(Error::ContractViolation(_))));
}

#[test]
fn remote_wrong_count_is_contract_violation() {
    let server = StubServer::start(vec![(200, serde_json::json!({"vectors": []}).to_string())]);
    let backend = RemoteBackend::new(server.url.clone(), 8, fast_policy()).unwrap();
    let ps = PromptSet::new(vec!["a photo of a cat".into()], PromptSource::UserSupplied).unwrap();
    assert!(matches!(embed_text(&ps, &backend), Err(Error::ContractViolation(_))));
}

#[test]
fn unreachable_remote_is_backend_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/embed", listener.local_addr().unwrap());
    drop(listener);
    let policy = RetryPolicy {
        max_retries: 0,
        ..fast_policy()
    };
    let backend = RemoteBackend::new(url, 8, policy).unwrap();
    let ps = PromptSet::new(vec!["a photo of a cat".into()], PromptSource::UserSupplied).unwrap();
    assert!(matches!(embed_text(&ps, &backend), Err(Error::Backend(_))));
}
