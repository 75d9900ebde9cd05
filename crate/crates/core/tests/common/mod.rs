#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;

use image::{Rgb, RgbImage};

/// A request as seen by [`StubServer`].
#[derive(Debug, Clone)]
pub struct Recorded {
    pub request_line: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Recorded {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap()
    }
}

/// One-connection-per-request HTTP stub that replays scripted responses in
/// order and records what it received.
pub struct StubServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
}

impl StubServer {
    pub fn start(script: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&requests);
        thread::spawn(move || {
            for (status, body) in script {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let mut headers = Vec::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                        headers.push((k.trim().to_owned(), v.trim().to_owned()));
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen.lock().unwrap().push(Recorded {
                    request_line: request_line.trim_end().to_owned(),
                    headers,
                    body: String::from_utf8(buf).unwrap(),
                });
                let mut stream = stream;
                let reason = if status == 200 { "OK" } else { "Error" };
                write!(
                    stream,
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
                stream.flush().unwrap();
            }
        });
        Self { url, requests }
    }

    pub fn recorded(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

pub fn chat_body(content: &str) -> String {
    serde_json::json!({
        "id": "cmpl-1",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

/// `n` distinct PNG frames of `size`x`size` named frame_000.png, ...
pub fn write_frames(dir: &Path, n: usize, size: u32) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let img = RgbImage::from_fn(size, size, |x, y| {
            let v = (i * 37 + x as usize * 11 + y as usize * 5) % 256;
            Rgb([v as u8, (i * 13 % 256) as u8, (255 - v) as u8])
        });
        img.save(dir.join(format!("frame_{i:03}.png"))).unwrap();
    }
}

/// Write a transcript whose response content is `content`.
pub fn write_transcript(path: &Path, content: &str) {
    let t = serde_json::json!({
        "request": {
            "model": "recorded-model",
            "messages": [{"role": "user", "content": "recorded"}],
            "temperature": 0.0,
            "max_tokens": 128
        },
        "response": serde_json::from_str::<serde_json::Value>(&chat_body(content)).unwrap()
    });
    std::fs::write(path, serde_json::to_string_pretty(&t).unwrap()).unwrap();
}
