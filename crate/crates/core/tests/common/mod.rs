//! Local HTTP server speaking just enough of the OpenAI wire format.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::{json, Map, Value};

use cotprune::gateway::{MockGenerator, MockScorer};
use cotprune::{GenerationRequest, SequenceScorer, TextGenerator};

pub struct Request {
    pub path: String,
    pub body: Value,
    pub authorization: Option<String>,
}

type Handler = dyn Fn(&Request) -> (u16, Value) + Send + Sync;

pub struct TestServer {
    pub base_url: String,
    requests: Arc<AtomicUsize>,
}

impl TestServer {
    pub fn start(handler: impl Fn(&Request) -> (u16, Value) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        let count = requests.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let handler = handler.clone();
                let count = count.clone();
                thread::spawn(move || serve(stream, &*handler, &count));
            }
        });
        TestServer { base_url, requests }
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, handler: &Handler, count: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut out = stream;
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        let path = request_line
            .split_whitespace()
            .nth(1)
            .unwrap_or("/")
            .to_owned();
        let mut length = 0;
        let mut authorization = None;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            let (name, value) = line.split_once(':').unwrap_or((line, ""));
            match name.to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(value.trim().to_owned()),
                _ => {}
            }
        }
        let mut body = vec![0; length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        count.fetch_add(1, Ordering::SeqCst);
        let req = Request {
            path: path.trim_start_matches("/v1/").to_owned(),
            body: serde_json::from_slice(&body).unwrap_or(Value::Null),
            authorization,
        };
        let (status, resp) = handler(&req);
        let text = resp.to_string();
        let head = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            text.len()
        );
        if out
            .write_all(head.as_bytes())
            .and_then(|_| out.write_all(text.as_bytes()))
            .is_err()
        {
            return;
        }
    }
}

/// Answers chat and echo-scoring requests with the library's mock backends,
/// so a run over HTTP can be compared with a mock run.
pub fn openai_handler(seed: u64) -> impl Fn(&Request) -> (u16, Value) + Send + Sync + 'static {
    let generator = MockGenerator::new(seed);
    let scorer = MockScorer::new(seed).with_top_k(3);
    move |req| match req.path.as_str() {
        "chat/completions" => {
            let b = &req.body;
            let gen = generator
                .generate(&GenerationRequest {
                    prompt: b["messages"][0]["content"].as_str().unwrap().to_owned(),
                    temperature: b["temperature"].as_f64().unwrap(),
                    top_p: b["top_p"].as_f64().unwrap(),
                    max_output_tokens: b["max_tokens"].as_u64().unwrap() as u32,
                    model_name: b["model"].as_str().unwrap().to_owned(),
                })
                .unwrap();
            let finish = if gen.truncated { "length" } else { "stop" };
            (
                200,
                json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": gen.text}, "finish_reason": finish}]}),
            )
        }
        "completions" => {
            let prompt = req.body["prompt"].as_str().unwrap();
            let seq = match scorer.score_sequence(prompt, "m") {
                Ok(s) => s,
                // Echo that does not line up with the prompt.
                Err(_) => {
                    return (
                        200,
                        json!({"choices": [{"text": "x", "logprobs": {
                            "tokens": ["x"], "token_logprobs": [-1.0], "text_offset": [0]
                        }}]}),
                    )
                }
            };
            // A BOS token with no logprob, the echoed prompt, then one generated token.
            let mut tokens = vec![json!("<s>")];
            let mut logprobs = vec![Value::Null];
            let mut offsets = vec![json!(0)];
            let mut tops = vec![Value::Null];
            let alts = seq.top_alternatives.as_ref().unwrap();
            for (t, a) in seq.tokens.iter().zip(alts) {
                tokens.push(json!(t.text(prompt)));
                logprobs.push(json!(t.logprob));
                offsets.push(json!(prompt[..t.byte_start].chars().count()));
                tops.push(Value::Object(
                    a.iter()
                        .map(|(k, v)| (k.clone(), json!(v)))
                        .collect::<Map<_, _>>(),
                ));
            }
            tokens.push(json!("\n"));
            logprobs.push(json!(-0.5));
            offsets.push(json!(prompt.chars().count()));
            tops.push(json!({"\n": -0.5}));
            (
                200,
                json!({"choices": [{"text": format!("{prompt}\n"), "logprobs": {
                    "tokens": tokens, "token_logprobs": logprobs, "text_offset": offsets, "top_logprobs": tops
                }, "finish_reason": "length"}]}),
            )
        }
        _ => (404, json!({"error": "not found"})),
    }
}

pub const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus20.jsonl");
