//! Chat-completion provider with pluggable transports.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::prompts::{self, fill};
use super::{fmt_pair, maze_context, ProviderError, ThoughtProvider, ThoughtRequest};
use crate::raster::Sketch;
use crate::reward::{normalize_tokens, EvalError, StepEvaluator};
use crate::taskgen::{GroundTruth, TaskInstance, TaskKind};
use crate::trajectory::{render_turn, History, Observation};

/// Reply tokens that count as "yes".
pub const AFFIRMATIVE: [&str; 1] = ["yes"];
const NEGATIVE: [&str; 1] = ["no"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub logprobs: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatReply {
    pub text: String,
    /// Alternatives for the first generated token, when requested.
    #[serde(default)]
    pub top_logprobs: Vec<TokenLogprob>,
}

impl ChatReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            top_logprobs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("network: {0}")]
    Network(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("undecodable response: {0}")]
    Decode(String),
    #[error("no recorded reply for this request")]
    NotRecorded,
}

impl TransportError {
    pub fn retryable(&self) -> bool {
        match self {
            TransportError::Network(_) => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Decode(_) | TransportError::NotRecorded => false,
        }
    }
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, TransportError>;
}

impl<F> ChatTransport for F
where
    F: Fn(&ChatRequest) -> Result<ChatReply, TransportError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        self(request)
    }
}

/// Blocking HTTP client for an OpenAI-style `chat/completions` endpoint.
/// Do not call it from inside an async runtime thread.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(Self {
            client,
            url: url.into(),
            token,
        })
    }
}

pub(crate) fn parse_completion(body: &Value) -> Result<ChatReply, TransportError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| TransportError::Decode("no choices in response".into()))?;
    let content = &choice["message"]["content"];
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts.iter().filter_map(|p| p["text"].as_str()).collect(),
        _ => return Err(TransportError::Decode("choice has no message content".into())),
    };
    let top_logprobs = choice["logprobs"]["content"][0]["top_logprobs"]
        .as_array()
        .map(|alts| {
            alts.iter()
                .filter_map(|a| {
                    Some(TokenLogprob {
                        token: a["token"].as_str()?.to_string(),
                        logprob: a["logprob"].as_f64()?,
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(ChatReply { text, top_logprobs })
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        let mut req = self.client.post(&self.url).json(request);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| TransportError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let json: Value = serde_json::from_str(&body).map_err(|e| TransportError::Decode(e.to_string()))?;
        parse_completion(&json)
    }
}

#[derive(Serialize, Deserialize)]
struct Exchange {
    request: ChatRequest,
    reply: ChatReply,
}

/// Forwards to `inner` and appends every successful exchange to a JSONL file.
pub struct RecordingTransport<T> {
    inner: T,
    path: PathBuf,
    file: Mutex<File>,
}

impl<T: ChatTransport> RecordingTransport<T> {
    pub fn new(inner: T, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }
}

impl<T: ChatTransport> ChatTransport for RecordingTransport<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        let reply = self.inner.complete(request)?;
        let line = serde_json::to_string(&Exchange {
            request: request.clone(),
            reply: reply.clone(),
        })
        .map_err(|e| TransportError::Decode(e.to_string()))?;
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(f, "{line}").map_err(|e| TransportError::Network(format!("{}: {e}", self.path.display())))?;
        Ok(reply)
    }
}

/// Serves replies captured by [`RecordingTransport`], matching on the exact
/// request. Repeated identical requests get their replies in recorded order.
pub struct ReplayTransport {
    replies: Mutex<HashMap<String, VecDeque<ChatReply>>>,
}

impl ReplayTransport {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut replies: HashMap<String, VecDeque<ChatReply>> = HashMap::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: Exchange = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            let key = serde_json::to_string(&ex.request).expect("request serializes");
            replies.entry(key).or_default().push_back(ex.reply);
        }
        Ok(Self {
            replies: Mutex::new(replies),
        })
    }
}

impl ChatTransport for ReplayTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        let key = serde_json::to_string(request).map_err(|e| TransportError::Decode(e.to_string()))?;
        let mut map = self.replies.lock().unwrap_or_else(|e| e.into_inner());
        map.get_mut(&key)
            .and_then(VecDeque::pop_front)
            .ok_or(TransportError::NotRecorded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Total attempts per request.
    pub attempts: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff_ms: u64,
    /// Ask for first-token log-probabilities when judging steps.
    pub logprobs: bool,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            token_env: "VTCOT_API_KEY".into(),
            model: "gpt-4o".into(),
            timeout_secs: 60,
            attempts: 3,
            backoff_ms: 500,
            logprobs: false,
        }
    }
}

pub struct HttpChatProvider {
    config: ChatConfig,
    transport: Box<dyn ChatTransport>,
}

pub fn sketch_data_url(sketch: &Sketch) -> String {
    let png = sketch.encode_png().expect("in-memory sketches always encode");
    format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(png)
    )
}

fn text(t: impl Into<String>) -> ContentPart {
    ContentPart::Text { text: t.into() }
}

fn image(s: &Sketch) -> ContentPart {
    ContentPart::ImageUrl {
        image_url: ImageUrl { url: sketch_data_url(s) },
    }
}

impl HttpChatProvider {
    /// Connects over HTTP, reading the token from `config.token_env` if set.
    pub fn from_config(config: ChatConfig) -> Result<Self, ProviderError> {
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        let transport = HttpTransport::new(&config.endpoint, token, Duration::from_secs(config.timeout_secs))
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self::with_transport(config, transport))
    }

    pub fn with_transport(config: ChatConfig, transport: impl ChatTransport + 'static) -> Self {
        Self {
            config,
            transport: Box::new(transport),
        }
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }

    fn request(&self, content: Vec<ContentPart>, max_tokens: Option<u32>, logprobs: bool) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content,
            }],
            temperature: 0.0,
            max_tokens,
            logprobs,
            top_logprobs: logprobs.then_some(5),
        }
    }

    /// Sends with retries on transient failures.
    pub fn send(&self, request: &ChatRequest) -> Result<ChatReply, ProviderError> {
        let attempts = self.config.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.transport.complete(request) {
                Ok(reply) => return Ok(reply),
                Err(e) if e.retryable() => {
                    tracing::debug!(attempt, error = %e, "chat request failed");
                    last = e.to_string();
                    if attempt + 1 < attempts {
                        std::thread::sleep(Duration::from_millis(self.config.backoff_ms << attempt));
                    }
                }
                Err(e) => {
                    return Err(ProviderError::Transport {
                        attempts: attempt + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Err(ProviderError::Transport {
            attempts,
            message: last,
        })
    }

    /// Prompt text for a planned step.
    pub fn thought_prompt(request: &ThoughtRequest<'_>) -> String {
        let task = request.task;
        let call = request.call;
        let action = call.to_json();
        let question = task.question.clone();
        match task.kind {
            TaskKind::Maze => {
                let n = task.meta_i64("n").unwrap_or_default().to_string();
                let coord = |k: &str| crate::taskgen::read_pair(&task.meta, k).map(fmt_pair).unwrap_or_default();
                let (cur, next, future) = match maze_context(request) {
                    Some(c) => (
                        fmt_pair(c.current),
                        fmt_pair(c.next),
                        format!("[{}]", c.future.into_iter().map(fmt_pair).collect::<Vec<_>>().join(", ")),
                    ),
                    None => Default::default(),
                };
                fill(
                    prompts::MAZE_THOUGHT,
                    &[
                        ("grid_n", n),
                        ("start_coor", coord("start")),
                        ("end_coor", coord("goal")),
                        ("cur_coor", cur),
                        ("next_coor", next),
                        ("mid_coor_list", future),
                    ],
                )
            }
            TaskKind::Jigsaw => {
                let rows = task.meta_i64("rows").unwrap_or_default();
                let cols = task.meta_i64("cols").unwrap_or_default();
                let arr = |k: &str| call.arguments.get(k).map(Value::to_string).unwrap_or_default();
                fill(
                    &prompts::JIGSAW_THOUGHT.replace("{grid_n}*{grid_n}", &format!("{rows}*{cols}")),
                    &[("state_curr", arr("current")), ("state_next", arr("target"))],
                )
            }
            TaskKind::Rotation => fill(
                prompts::ROTATION_THOUGHT,
                &[
                    ("action", action),
                    ("question", question),
                    ("theta", call.arguments.get("theta").map(Value::to_string).unwrap_or_default()),
                ],
            ),
            TaskKind::VisualSearch => {
                let target = format!(
                    "{} {}",
                    task.meta.get("target_color").and_then(Value::as_str).unwrap_or(""),
                    task.meta.get("target_shape").and_then(Value::as_str).unwrap_or("")
                );
                fill(
                    prompts::SEARCH_THOUGHT,
                    &[("action", action), ("question", question), ("target", target)],
                )
            }
            TaskKind::NumericEstimate => fill(prompts::CLOCK_THOUGHT, &[("action", action), ("question", question)]),
        }
    }
}

impl ThoughtProvider for HttpChatProvider {
    fn generate_thought(&self, request: &ThoughtRequest<'_>) -> Result<String, ProviderError> {
        let content = vec![
            text(Self::thought_prompt(request)),
            image(request.prev),
            image(request.next),
        ];
        let reply = self.send(&self.request(content, Some(512), false))?;
        let thought = reply.text.trim().to_string();
        if thought.is_empty() {
            return Err(ProviderError::Protocol {
                message: "empty thought".into(),
                raw: reply.text,
            });
        }
        Ok(thought)
    }
}

impl StepEvaluator for HttpChatProvider {
    fn evaluate_step(&self, history: &History<'_>, truth: &GroundTruth) -> Result<f64, EvalError> {
        Ok(evaluate_step_via_prompt(self, history, truth)?)
    }
}

/// Plain-text rendering of `h_t` for the judge prompt.
pub fn history_context(task: &TaskInstance, history: &History<'_>) -> String {
    let mut out = format!("\nUser: {}", task.question);
    for step in history.steps {
        out.push_str(&format!("\nAssistant: {}", render_turn(step)));
        match step.observation() {
            Some(Observation::Sketch(s)) => out.push_str(&format!("\nTool: new image ({}x{})", s.width(), s.height())),
            Some(Observation::Error(e)) => out.push_str(&format!("\nTool: error {}: {}", e.code, e.message)),
            None => {}
        }
    }
    out
}

fn is_in(token: &str, set: &[&str]) -> bool {
    let t = normalize_tokens(token);
    t.len() == 1 && set.contains(&t[0].as_str())
}

/// Asks the model whether the history already settles the answer.
pub fn evaluate_step_via_prompt(
    provider: &HttpChatProvider,
    history: &History<'_>,
    truth: &GroundTruth,
) -> Result<f64, ProviderError> {
    let prompt = fill(
        prompts::EVALUATION,
        &[
            ("history_context", history_context(history.task, history)),
            ("Ans", truth.answer_text()),
        ],
    );
    let (before, after) = prompt
        .split_once(prompts::IMAGE_SLOT)
        .expect("evaluation template has an image slot");
    let content = vec![text(before), image(history.current()), text(after)];
    let logprobs = provider.config.logprobs;
    let reply = provider.send(&provider.request(content, Some(4), logprobs))?;

    if logprobs && !reply.top_logprobs.is_empty() {
        let yes: f64 = reply
            .top_logprobs
            .iter()
            .filter(|t| is_in(&t.token, &AFFIRMATIVE))
            .map(|t| t.logprob.exp())
            .sum();
        return Ok(yes.clamp(0.0, 1.0));
    }
    if is_in(&reply.text, &AFFIRMATIVE) {
        Ok(1.0)
    } else if is_in(&reply.text, &NEGATIVE) {
        Ok(0.0)
    } else {
        Err(ProviderError::Protocol {
            message: "expected a one-word Yes or No".into(),
            raw: reply.text,
        })
    }
}
