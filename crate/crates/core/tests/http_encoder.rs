//! The HTTP encoder against a throwaway in-process endpoint.
#![cfg(feature = "http")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use atlas_core::embedding::{encode_image, encode_prompt, EncodeError};
use atlas_core::http_backend::HttpEncoder;
use atlas_core::{EncoderBackend, Error, Prompt};

fn reply(text: Option<&str>, body: &[u8]) -> (u16, String) {
    match text {
        Some("bad") => (422, "cannot encode".into()),
        Some("boom") => (500, "internal".into()),
        Some("garbage") => (200, "not json".into()),
        Some("short") => (200, "[1.0]".into()),
        Some(t) => (200, format!("[{}, 1.0, 0.0]", t.len())),
        None if body.starts_with(b"BAD") => (415, "unsupported image".into()),
        None => (200, format!("[0.0, {}, 2.0]", body.len())),
    }
}

/// Serves `n` requests, then stops.
fn serve(n: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut json = false;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_ascii_lowercase();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line.starts_with("content-type:") && line.contains("application/json") {
                    json = true;
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let text = json.then(|| {
                let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
                v["text"].as_str().unwrap().to_string()
            });
            let (status, payload) = reply(text.as_deref(), &body);
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            )
            .unwrap();
        }
    });
    format!("http://{addr}/embed")
}

#[test]
fn encodes_text_and_images() {
    let enc = HttpEncoder::new("remote", serve(2), 3);
    assert_eq!(enc.encode_text("hello").unwrap(), vec![5.0, 1.0, 0.0]);
    assert_eq!(enc.encode_image(&[7; 10]).unwrap(), vec![0.0, 10.0, 2.0]);
}

#[test]
fn prompts_are_rendered_before_sending_and_normalized_after() {
    let enc = HttpEncoder::new("remote", serve(1), 3);
    // "a photo of x" has 12 bytes
    let e = encode_prompt(&enc, &Prompt::new("x")).unwrap();
    let n = 145f64.sqrt();
    assert_eq!(e.as_slice(), &[(12.0 / n) as f32, (1.0 / n) as f32, 0.0]);
}

#[test]
fn rejected_inputs_and_backend_failures_are_told_apart() {
    let enc = HttpEncoder::new("remote", serve(5), 3);
    assert!(matches!(enc.encode_text("bad"), Err(EncodeError::Input(_))));
    assert!(matches!(enc.encode_text("boom"), Err(EncodeError::Backend(_))));
    assert!(matches!(enc.encode_text("garbage"), Err(EncodeError::Backend(_))));
    assert!(matches!(encode_image(&enc, b"BAD bytes"), Err(EncodeError::Input(_))));
    // a vector of the wrong length is the backend's fault
    assert!(matches!(encode_prompt(&enc, &Prompt::verbatim("short")), Err(Error::Backend(_))));
}

#[test]
fn unreachable_endpoint_is_a_backend_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let enc = HttpEncoder::new("remote", format!("http://{addr}/embed"), 3);
    assert!(matches!(enc.encode_text("hello"), Err(EncodeError::Backend(_))));
}
