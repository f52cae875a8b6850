//! Minimal chat-completions endpoint on a local socket.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

type Reply = dyn Fn(&Value) -> String + Send + Sync;

pub struct StubServer {
    addr: SocketAddr,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
}

impl StubServer {
    /// Answers every POST with two choices; the first carries `reply(request)`.
    pub fn start(reply: impl Fn(&Value) -> String + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let reply: Arc<Reply> = Arc::new(reply);
        let (h, b) = (hits.clone(), bodies.clone());
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (h, b, reply) = (h.clone(), b.clone(), reply.clone());
                thread::spawn(move || serve(stream, &h, &b, &*reply));
            }
        });
        StubServer { addr, hits, bodies }
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<Value> {
        self.bodies.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, hits: &AtomicUsize, bodies: &Mutex<Vec<Value>>, reply: &Reply) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    hits.fetch_add(1, Ordering::SeqCst);
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let content = reply(&request);
    bodies.lock().unwrap().push(request);
    let payload = json!({
        "choices": [
            {"index": 0, "message": {"role": "assistant", "content": content}},
            {"index": 1, "message": {"role": "assistant", "content": "second choice must be ignored"}},
        ]
    })
    .to_string();
    let mut out = stream;
    let _ = write!(
        out,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        payload.len(),
        payload
    );
}

/// Echoes the subject block of the user message back as the migrated code,
/// with a prose preamble, the way a cooperative model answers.
pub fn echo_subject(request: &Value) -> String {
    let user = request["messages"][1]["content"].as_str().unwrap_or_default();
    let start = user.rfind("### START CODE ###").unwrap_or(0);
    format!("Sure, here is the migrated code:\n\n{}\n\nLet me know if anything else is needed.", &user[start..])
}
