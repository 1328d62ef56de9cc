//! Minimal HTTP/1.1 stub for an OpenAI-compatible chat completions endpoint.
//! Hand-rolled on std::net so tests can inject faults (5xx, malformed JSON,
//! stalls) and count in-flight requests to verify the concurrency cap.

// Each integration test binary compiles this module separately and uses a
// different slice of it.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

/// One scripted reply. `delay` is applied while the request counts as
/// in-flight, so overlapping requests are observable.
#[derive(Clone)]
pub struct StubReply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl StubReply {
    pub fn content(text: &str) -> StubReply {
        let body = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}]
        })
        .to_string();
        StubReply {
            status: 200,
            body,
            delay: Duration::ZERO,
        }
    }

    pub fn malformed() -> StubReply {
        StubReply {
            status: 200,
            body: "{not json".to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn error(status: u16) -> StubReply {
        StubReply {
            status,
            body: "{\"error\": \"injected\"}".to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> StubReply {
        self.delay = delay;
        self
    }
}

type ReplyFn = dyn Fn(usize, &str) -> StubReply + Send + Sync;

pub struct StubServer {
    pub base_url: String,
    hits: Arc<AtomicUsize>,
    in_flight: Arc<AtomicUsize>,
    max_in_flight: Arc<AtomicUsize>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    local_addr: std::net::SocketAddr,
}

impl StubServer {
    /// Starts the server; `reply` receives the zero-based hit index and the
    /// raw request body and returns the scripted response.
    pub fn start<F>(reply: F) -> StubServer
    where
        F: Fn(usize, &str) -> StubReply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let local_addr = listener.local_addr().unwrap();
        listener.set_nonblocking(true).unwrap();

        let hits = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let max_in_flight = Arc::new(AtomicUsize::new(0));
        let shutdown = Arc::new(AtomicBool::new(false));
        let reply: Arc<ReplyFn> = Arc::new(reply);

        let handle = {
            let hits = hits.clone();
            let in_flight = in_flight.clone();
            let max_in_flight = max_in_flight.clone();
            let shutdown = shutdown.clone();
            std::thread::spawn(move || {
                let mut workers: Vec<JoinHandle<()>> = Vec::new();
                while !shutdown.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let hits = hits.clone();
                            let in_flight = in_flight.clone();
                            let max_in_flight = max_in_flight.clone();
                            let reply = reply.clone();
                            workers.push(std::thread::spawn(move || {
                                handle_connection(
                                    stream,
                                    &hits,
                                    &in_flight,
                                    &max_in_flight,
                                    reply.as_ref(),
                                );
                            }));
                        }
                        Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(2));
                        }
                        Err(_) => break,
                    }
                }
                for w in workers {
                    let _ = w.join();
                }
            })
        };

        StubServer {
            base_url: format!("http://{local_addr}/v1"),
            hits,
            in_flight,
            max_in_flight,
            shutdown,
            handle: Some(handle),
            local_addr,
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Nudge the accept loop so it notices the flag.
        let _ = TcpStream::connect(self.local_addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(
    stream: TcpStream,
    hits: &AtomicUsize,
    in_flight: &AtomicUsize,
    max_in_flight: &AtomicUsize,
    reply: &ReplyFn,
) {
    stream
        .set_read_timeout(Some(Duration::from_secs(5)))
        .ok();
    let mut reader = BufReader::new(stream);
    loop {
        let mut request_line = String::new();
        match reader.read_line(&mut request_line) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        if request_line.trim().is_empty() {
            continue;
        }
        let mut content_length = 0usize;
        loop {
            let mut header = String::new();
            if reader.read_line(&mut header).unwrap_or(0) == 0 {
                return;
            }
            let header = header.trim();
            if header.is_empty() {
                break;
            }
            if let Some(value) = header
                .to_ascii_lowercase()
                .strip_prefix("content-length:")
                .map(str::trim)
                .map(String::from)
            {
                content_length = value.parse().unwrap_or(0);
            }
        }
        let mut body = vec![0u8; content_length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let body = String::from_utf8_lossy(&body).into_owned();

        let idx = hits.fetch_add(1, Ordering::SeqCst);
        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        max_in_flight.fetch_max(now, Ordering::SeqCst);
        let scripted = reply(idx, &body);
        std::thread::sleep(scripted.delay);
        in_flight.fetch_sub(1, Ordering::SeqCst);

        let status_text = match scripted.status {
            200 => "OK",
            400 => "Bad Request",
            429 => "Too Many Requests",
            500 => "Internal Server Error",
            503 => "Service Unavailable",
            _ => "Status",
        };
        let response = format!(
            "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            scripted.status,
            status_text,
            scripted.body.len(),
            scripted.body
        );
        if reader.get_mut().write_all(response.as_bytes()).is_err() {
            return;
        }
        let _ = reader.get_mut().flush();
        return; // Connection: close
    }
}
