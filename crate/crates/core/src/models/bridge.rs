//! Line-delimited JSON bridge to an external model adapter process.
//!
//! ```text
//! adapter -> codec  {"type":"hello","vocab_size":N,"eos_id":E,"proto":1}
//! codec -> adapter  {"type":"reset","conditioning":"<base64>"}
//! codec -> adapter  {"type":"step","last_token":t}        (null at step 0)
//! adapter -> codec  {"type":"dist","entries":[[id,prob],...]}
//! codec -> adapter  {"type":"close"}
//! ```
//!
//! The adapter must flush after every line and emit probabilities already
//! rounded to six decimals.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{open_session, Backend, BackendSpec, Conditioning, ModelError, ModelSession};
use crate::distribution::{
    validate_quantized, NextTokenDistribution, Support, TokenId, Vocabulary,
};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello {
        vocab_size: usize,
        eos_id: Option<u32>,
        proto: u32,
        /// Optional token strings; placeholders are used when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vocab: Option<Vec<String>>,
    },
    Reset {
        conditioning: String,
    },
    Step {
        last_token: Option<u32>,
    },
    Dist {
        entries: Vec<(u32, f64)>,
    },
    Close,
}

impl Message {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol messages always serialize")
    }

    pub fn parse(line: &str) -> Result<Self, ModelError> {
        serde_json::from_str(line.trim_end())
            .map_err(|e| ModelError::BridgeProtocolError(format!("malformed line {line:?}: {e}")))
    }
}

fn write_line<W: Write>(out: &mut W, msg: &Message) -> std::io::Result<()> {
    writeln!(out, "{}", msg.to_line())?;
    out.flush()
}

fn read_line<R: BufRead>(input: &mut R) -> Result<Option<String>, ModelError> {
    let mut line = String::new();
    let n = input
        .read_line(&mut line)
        .map_err(|e| ModelError::BridgeProtocolError(format!("read failed: {e}")))?;
    Ok((n > 0).then_some(line))
}

/// Backend that forwards every step to an adapter subprocess.
pub struct BridgeBackend {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    vocab: Vocabulary,
    steps_sent: usize,
}

impl BridgeBackend {
    pub fn spawn(command: &[String], conditioning: &Conditioning) -> Result<Self, ModelError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ModelError::BackendUnavailable("empty bridge command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| {
                ModelError::BackendUnavailable(format!("cannot start {program:?}: {e}"))
            })?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut backend = Self {
            child,
            stdin,
            stdout,
            vocab: Vocabulary::placeholder(1, None).expect("nonempty"),
            steps_sent: 0,
        };
        backend
            .handshake(conditioning)
            .map_err(|e| ModelError::BackendUnavailable(format!("bridge handshake failed: {e}")))?;
        Ok(backend)
    }

    fn handshake(&mut self, conditioning: &Conditioning) -> Result<(), ModelError> {
        let line = read_line(&mut self.stdout)?
            .ok_or_else(|| ModelError::BridgeProtocolError("adapter closed before hello".into()))?;
        let Message::Hello {
            vocab_size,
            eos_id,
            proto,
            vocab,
        } = Message::parse(&line)?
        else {
            return Err(ModelError::BridgeProtocolError(format!(
                "expected hello, got {line:?}"
            )));
        };
        if proto != PROTOCOL_VERSION {
            return Err(ModelError::BridgeProtocolError(format!(
                "unsupported protocol version {proto}"
            )));
        }
        let eos = eos_id.map(TokenId);
        self.vocab = match vocab {
            Some(tokens) if tokens.len() == vocab_size => Vocabulary::new(tokens, eos)?,
            Some(tokens) => {
                return Err(ModelError::BridgeProtocolError(format!(
                    "hello lists {} tokens but vocab_size is {vocab_size}",
                    tokens.len()
                )))
            }
            None => Vocabulary::placeholder(vocab_size, eos)?,
        };
        self.send(&Message::Reset {
            conditioning: conditioning.to_base64(),
        })
    }

    fn send(&mut self, msg: &Message) -> Result<(), ModelError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| ModelError::BridgeProtocolError("adapter stdin closed".into()))?;
        write_line(stdin, msg)
            .map_err(|e| ModelError::BridgeProtocolError(format!("write failed: {e}")))
    }
}

impl Backend for BridgeBackend {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(
        &mut self,
        context: &[TokenId],
    ) -> Result<NextTokenDistribution, ModelError> {
        if context.len() != self.steps_sent {
            return Err(ModelError::BridgeProtocolError(format!(
                "bridge sessions are sequential: expected context of {} tokens, got {}",
                self.steps_sent,
                context.len()
            )));
        }
        self.send(&Message::Step {
            last_token: context.last().map(|t| t.0),
        })?;
        self.steps_sent += 1;
        let line = read_line(&mut self.stdout)?
            .ok_or_else(|| ModelError::BridgeProtocolError("adapter closed mid-session".into()))?;
        match Message::parse(&line)? {
            Message::Dist { entries } => {
                let raw: Vec<_> = entries.iter().map(|&(t, p)| (TokenId(t), p)).collect();
                validate_quantized(&raw, self.vocab.len(), Support::Sparse)
                    .map_err(|e| ModelError::BridgeProtocolError(format!("bad distribution: {e}")))
            }
            other => Err(ModelError::BridgeProtocolError(format!(
                "expected dist, got {other:?}"
            ))),
        }
    }
}

impl Drop for BridgeBackend {
    fn drop(&mut self) {
        let _ = self.send(&Message::Close);
        self.stdin.take();
        // Adapters exit on close or EOF; do not hang on one that does not.
        for _ in 0..50 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(std::time::Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Serves a built-in backend over the bridge protocol until `close` or EOF.
/// Used as a reference adapter and for conformance tests.
pub fn serve<R: BufRead, W: Write>(
    spec: &BackendSpec,
    mut input: R,
    mut output: W,
) -> Result<(), ModelError> {
    let io_err = |e: std::io::Error| ModelError::BridgeProtocolError(format!("write failed: {e}"));
    let probe = open_session(spec, &Conditioning::empty())?;
    let vocab = probe.vocabulary().clone();
    drop(probe);
    write_line(
        &mut output,
        &Message::Hello {
            vocab_size: vocab.len(),
            eos_id: vocab.eos_id().map(|t| t.0),
            proto: PROTOCOL_VERSION,
            vocab: Some(vocab.tokens().to_vec()),
        },
    )
    .map_err(io_err)?;

    let mut session: Option<ModelSession> = None;
    while let Some(line) = read_line(&mut input)? {
        if line.trim().is_empty() {
            continue;
        }
        match Message::parse(&line)? {
            Message::Reset { conditioning } => {
                let cond = Conditioning::from_base64(&conditioning).map_err(|e| {
                    ModelError::BridgeProtocolError(format!("bad conditioning: {e}"))
                })?;
                session = Some(open_session(spec, &cond)?.with_max_len(usize::MAX));
            }
            Message::Step { last_token } => {
                let s = session
                    .as_mut()
                    .ok_or_else(|| ModelError::BridgeProtocolError("step before reset".into()))?;
                let dist = s.next_distribution(last_token.map(TokenId))?;
                let entries = dist.entries().iter().map(|&(t, p)| (t.0, p)).collect();
                write_line(&mut output, &Message::Dist { entries }).map_err(io_err)?;
            }
            Message::Close => return Ok(()),
            other => {
                return Err(ModelError::BridgeProtocolError(format!(
                    "unexpected message {other:?}"
                )))
            }
        }
    }
    Ok(())
}
