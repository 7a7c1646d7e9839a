//! Client for an out-of-process model worker.
//!
//! The worker speaks UTF-8 JSON lines on stdin/stdout, one request and one
//! reply per line:
//!
//! | request                                                        | reply                                                   |
//! |----------------------------------------------------------------|---------------------------------------------------------|
//! | `{"op":"hello"}`                                               | `{"ok":true,"max_input_tokens":..,"special_overhead":..,"mask_token":..}` |
//! | `{"op":"tokenize","text":..}`                                  | `{"tokens":[..]}`                                       |
//! | `{"op":"detokenize","tokens":[..]}`                            | `{"text":..}`                                           |
//! | `{"op":"score","tokens":[..],"mask_index":..,"label_words":[..]}` | `{"logits":[..]}`                                    |
//! | `{"op":"train","examples":[{"tokens","mask_index","gold"}],"lr","batch_size","epochs","seed"}` | `{"loss":..}` |
//! | `{"op":"reset"}`                                               | `{"ok":true}`                                           |
//!
//! Failures come back as `{"error":<code>,"message":<text>}`. Anything the
//! client cannot interpret is reported as [`Error::WorkerProtocol`].

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{check_prompt, Capacity, HyperParams, Scorer, TrainExample};
use crate::error::{Error, Result};
use crate::prompt::PromptInput;

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
}

pub struct RemoteScorer {
    conn: Mutex<Connection>,
    child: Option<Child>,
    capacity: Capacity,
    description: String,
}

#[derive(Deserialize)]
struct Hello {
    ok: bool,
    max_input_tokens: usize,
    special_overhead: usize,
    mask_token: String,
}

#[derive(Deserialize)]
struct Tokens {
    tokens: Vec<String>,
}

#[derive(Deserialize)]
struct Text {
    text: String,
}

#[derive(Deserialize)]
struct Logits {
    logits: Vec<f64>,
}

#[derive(Deserialize)]
struct Loss {
    loss: Option<f64>,
}

#[derive(Deserialize)]
struct Ack {
    ok: bool,
}

fn protocol(msg: impl Into<String>) -> Error {
    Error::WorkerProtocol(msg.into())
}

impl RemoteScorer {
    /// Launch `command_line` through `sh -c` and complete the handshake.
    pub fn spawn(command_line: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command_line)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| protocol(format!("cannot start worker `{command_line}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut scorer = Self::handshake(BufReader::new(stdout), stdin, command_line.to_string());
        match &mut scorer {
            Ok(s) => s.child = Some(child),
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
        scorer
    }

    /// Run the protocol over arbitrary streams.
    pub fn from_streams<R, W>(reader: R, writer: W) -> Result<Self>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::handshake(reader, writer, "in-process streams".to_string())
    }

    fn handshake<R, W>(reader: R, writer: W, description: String) -> Result<Self>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let conn = Mutex::new(Connection {
            reader: Box::new(reader),
            writer: Box::new(writer),
        });
        let hello: Hello = request(&conn, json!({ "op": "hello" }))?;
        if !hello.ok {
            return Err(protocol("worker refused handshake"));
        }
        if hello.mask_token.is_empty() || hello.max_input_tokens <= hello.special_overhead {
            return Err(protocol(format!(
                "implausible capacity: max_input_tokens {}, special_overhead {}, mask `{}`",
                hello.max_input_tokens, hello.special_overhead, hello.mask_token
            )));
        }
        Ok(Self {
            conn,
            child: None,
            capacity: Capacity {
                max_input_tokens: hello.max_input_tokens,
                special_overhead: hello.special_overhead,
                mask_token: hello.mask_token,
            },
            description,
        })
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

fn request<T: for<'de> Deserialize<'de>>(conn: &Mutex<Connection>, message: Value) -> Result<T> {
    let op = message["op"].as_str().unwrap_or("?").to_string();
    let mut conn = conn
        .lock()
        .map_err(|_| protocol("connection lock poisoned"))?;
    let mut line = serde_json::to_string(&message).map_err(|e| protocol(e.to_string()))?;
    line.push('\n');
    conn.writer
        .write_all(line.as_bytes())
        .and_then(|_| conn.writer.flush())
        .map_err(|e| protocol(format!("`{op}`: cannot write to worker: {e}")))?;

    let mut reply = String::new();
    let n = conn
        .reader
        .read_line(&mut reply)
        .map_err(|e| protocol(format!("`{op}`: cannot read from worker: {e}")))?;
    if n == 0 {
        return Err(protocol(format!("`{op}`: worker closed its output")));
    }
    let value: Value = serde_json::from_str(reply.trim_end())
        .map_err(|e| protocol(format!("`{op}`: reply is not JSON: {e}")))?;
    let Some(obj) = value.as_object() else {
        return Err(protocol(format!("`{op}`: reply is not a JSON object")));
    };
    if let Some(code) = obj.get("error") {
        let code = code
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| code.to_string());
        let message = obj.get("message").and_then(Value::as_str).unwrap_or("");
        if code == "DivergenceDetected" {
            return Err(Error::DivergenceDetected(message.to_string()));
        }
        return Err(protocol(format!("`{op}`: worker error {code}: {message}")));
    }
    serde_json::from_value(value).map_err(|e| protocol(format!("`{op}`: malformed reply: {e}")))
}

impl Scorer for RemoteScorer {
    fn capacity(&self) -> Capacity {
        self.capacity.clone()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        let r: Tokens = request(&self.conn, json!({ "op": "tokenize", "text": text }))?;
        Ok(r.tokens)
    }

    fn detokenize(&self, tokens: &[String]) -> Result<String> {
        let r: Text = request(&self.conn, json!({ "op": "detokenize", "tokens": tokens }))?;
        Ok(r.text)
    }

    fn score(&self, prompt: &PromptInput, label_words: &[String]) -> Result<Vec<f64>> {
        check_prompt(prompt, &self.capacity)?;
        let r: Logits = request(
            &self.conn,
            json!({
                "op": "score",
                "tokens": prompt.tokens,
                "mask_index": prompt.mask_index,
                "label_words": label_words,
            }),
        )?;
        if r.logits.len() != label_words.len() {
            return Err(protocol(format!(
                "`score`: expected {} logits, got {}",
                label_words.len(),
                r.logits.len()
            )));
        }
        Ok(r.logits)
    }

    fn train(&mut self, examples: &[TrainExample], hp: &HyperParams, seed: u64) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::InvalidConfig("cannot train on zero examples".into()));
        }
        hp.validate()?;
        for ex in examples {
            check_prompt(&ex.prompt, &self.capacity)?;
        }
        let payload: Vec<Value> = examples
            .iter()
            .map(|ex| {
                json!({
                    "tokens": ex.prompt.tokens,
                    "mask_index": ex.prompt.mask_index,
                    "gold": ex.gold,
                })
            })
            .collect();
        let r: Loss = request(
            &self.conn,
            json!({
                "op": "train",
                "examples": payload,
                "lr": hp.learning_rate,
                "batch_size": hp.batch_size,
                "epochs": hp.epochs,
                "seed": seed,
            }),
        )?;
        match r.loss {
            Some(loss) if loss.is_finite() => Ok(loss),
            _ => Err(Error::DivergenceDetected(
                "worker reported a non-finite loss".into(),
            )),
        }
    }

    fn reset(&mut self) -> Result<()> {
        let r: Ack = request(&self.conn, json!({ "op": "reset" }))?;
        if r.ok {
            Ok(())
        } else {
            Err(protocol("`reset`: worker did not acknowledge"))
        }
    }
}

impl Drop for RemoteScorer {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // Closing stdin lets a well-behaved worker exit on its own.
            if let Ok(mut conn) = self.conn.lock() {
                conn.writer = Box::new(std::io::sink());
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const HELLO: &str =
        r#"{"ok":true,"max_input_tokens":512,"special_overhead":2,"mask_token":"[MASK]"}"#;

    fn scripted(replies: &[&str]) -> Result<RemoteScorer> {
        let script = replies.iter().map(|r| format!("{r}\n")).collect::<String>();
        RemoteScorer::from_streams(Cursor::new(script.into_bytes()), std::io::sink())
    }

    #[test]
    fn handshake_reads_capacity() {
        let s = scripted(&[HELLO]).unwrap();
        assert_eq!(s.capacity().max_input_tokens, 512);
        assert_eq!(s.capacity().mask_token, "[MASK]");
    }

    #[test]
    fn tokenize_round_trip() {
        let s = scripted(&[
            HELLO,
            r#"{"tokens":["no","cramps"]}"#,
            r#"{"text":"no cramps"}"#,
        ])
        .unwrap();
        let t = s.tokenize("no cramps").unwrap();
        assert_eq!(t, ["no", "cramps"]);
        assert_eq!(s.detokenize(&t).unwrap(), "no cramps");
    }

    #[test]
    fn error_reply_is_protocol_error() {
        let s = scripted(&[HELLO, r#"{"error":"unknown_op","message":"nope"}"#]).unwrap();
        assert_eq!(s.tokenize("x").unwrap_err().name(), "WorkerProtocolError");
    }

    #[test]
    fn eof_is_protocol_error() {
        let s = scripted(&[HELLO]).unwrap();
        assert_eq!(s.tokenize("x").unwrap_err().name(), "WorkerProtocolError");
        assert_eq!(scripted(&[]).err().unwrap().name(), "WorkerProtocolError");
    }

    #[test]
    fn bad_capacity_rejected() {
        let r = scripted(&[
            r#"{"ok":true,"max_input_tokens":2,"special_overhead":2,"mask_token":"[MASK]"}"#,
        ]);
        assert_eq!(r.err().unwrap().name(), "WorkerProtocolError");
    }

    #[test]
    fn divergence_code_maps_to_divergence() {
        let mut s =
            scripted(&[HELLO, r#"{"error":"DivergenceDetected","message":"nan"}"#]).unwrap();
        let ex = TrainExample {
            prompt: PromptInput {
                tokens: vec!["[MASK]".into()],
                mask_index: 0,
                method: crate::prompt::Method::StiS,
                truncation: Default::default(),
                fallback_used: false,
                template_span: 0..1,
            },
            gold: 0,
        };
        let err = s.train(&[ex], &HyperParams::default(), 0).unwrap_err();
        assert_eq!(err.name(), "DivergenceDetected");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn garbage_replies_never_panic(reply in "[ -~]{0,60}") {
                let s = scripted(&[HELLO, &reply]).unwrap();
                match s.tokenize("x") {
                    Ok(_) => {
                        // only a well-formed tokens object can succeed
                        let v: Value = serde_json::from_str(&reply).unwrap();
                        prop_assert!(v.get("tokens").is_some());
                    }
                    Err(e) => prop_assert_eq!(e.name(), "WorkerProtocolError"),
                }
            }

            #[test]
            fn wrong_shapes_are_protocol_errors(n in 0usize..5) {
                let logits: Vec<f64> = (0..n).map(|i| i as f64).collect();
                let reply = json!({ "logits": logits }).to_string();
                let s = scripted(&[HELLO, &reply]).unwrap();
                let prompt = PromptInput {
                    tokens: vec!["a".into(), "[MASK]".into()],
                    mask_index: 1,
                    method: crate::prompt::Method::StiS,
                    truncation: Default::default(),
                    fallback_used: false,
                    template_span: 1..2,
                };
                let words = vec!["yes".to_string(), "no".to_string()];
                let r = s.score(&prompt, &words);
                if n == 2 { prop_assert!(r.is_ok()); } else { prop_assert_eq!(r.unwrap_err().name(), "WorkerProtocolError"); }
            }
        }
    }
}
