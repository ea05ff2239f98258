//! Chat-completion providers: an OpenAI-compatible HTTP client and a
//! deterministic scripted provider for offline runs.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::template::TemplateName;
use super::{DecodingParams, LlmError, Message, TokenCounts};

/// A fully prepared request: rendered messages plus the template/binding
/// metadata the scripted provider keys on.
#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub template: TemplateName,
    pub bindings: BTreeMap<String, String>,
    pub messages: Vec<Message>,
    pub params: DecodingParams,
}

#[derive(Debug, Clone)]
pub struct CompletionOutput {
    pub text: String,
    pub token_counts: Option<TokenCounts>,
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionOutput, LlmError>;
}

// --- HTTP provider ---

/// Client for `POST <base>/v1/chat/completions`.
pub struct HttpChatProvider {
    client: reqwest::blocking::Client,
    url: String,
    name: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct ChatRequestBody<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<TokenCounts>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// The wire body for a chat request, exposed so the serialization contract is
/// directly testable.
pub fn chat_request_body(params: &DecodingParams, messages: &[Message]) -> serde_json::Value {
    serde_json::to_value(ChatRequestBody {
        model: &params.model,
        messages,
        temperature: params.temperature,
        max_tokens: params.max_tokens,
        seed: params.seed,
    })
    .expect("request body serializes")
}

impl HttpChatProvider {
    /// `base_url` may or may not end in `/v1`.
    pub fn new(base_url: &str, api_key: Option<String>, timeout: std::time::Duration) -> Self {
        let base = base_url.trim_end_matches('/');
        let base = base.strip_suffix("/v1").unwrap_or(base);
        HttpChatProvider {
            client: reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .expect("reqwest client builds"),
            url: format!("{base}/v1/chat/completions"),
            name: base.to_string(),
            api_key,
        }
    }
}

impl ChatProvider for HttpChatProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionOutput, LlmError> {
        let body = chat_request_body(&req.params, &req.messages);
        let mut http = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http.send().map_err(|e| LlmError::Transport {
            provider: self.name.clone(),
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.text().unwrap_or_default();
            return Err(LlmError::Http {
                provider: self.name.clone(),
                status,
                body_excerpt: excerpt(&body),
                retryable: status == 429 || (500..600).contains(&status),
            });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| LlmError::Http {
            provider: self.name.clone(),
            status,
            body_excerpt: format!("unparseable body: {e}"),
            retryable: false,
        })?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or(LlmError::EmptyResponse)?;
        Ok(CompletionOutput {
            text,
            token_counts: parsed.usage,
        })
    }
}

fn excerpt(body: &str) -> String {
    const MAX: usize = 200;
    if body.len() <= MAX {
        return body.to_string();
    }
    let mut end = MAX;
    while !body.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}…", &body[..end])
}

// --- Scripted provider ---

/// Behavior when the script has no entry for a request key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptFallback {
    /// Fail the call, naming the missing key.
    Error,
    /// Answer with the request's primary binding value.
    Echo,
}

/// Pure-function provider driven by a `(key -> response)` table.
///
/// The key is `<TEMPLATE>:<primary binding>` with whitespace collapsed: the
/// primary binding is `sen` for SEGMENT/DECONTEXT, `query` for EDIT/RERANK
/// and `claim` for ENTAIL.
#[derive(Debug)]
pub struct ScriptedProvider {
    map: HashMap<String, String>,
    fallback: ScriptFallback,
}

#[derive(Deserialize)]
struct ScriptEntry {
    key: String,
    response: String,
}

fn primary_binding(template: TemplateName) -> &'static str {
    match template {
        TemplateName::Segment | TemplateName::Decontext => "sen",
        TemplateName::Edit | TemplateName::Rerank => "query",
        TemplateName::Entail => "claim",
    }
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The script key a request resolves to.
pub fn script_key(template: TemplateName, bindings: &BTreeMap<String, String>) -> String {
    let primary = bindings
        .get(primary_binding(template))
        .map(String::as_str)
        .unwrap_or("");
    format!("{}:{}", template.as_str(), normalize_ws(primary))
}

impl ScriptedProvider {
    pub fn from_entries<I>(entries: I, fallback: ScriptFallback) -> Result<Self, LlmError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut map = HashMap::new();
        for (key, response) in entries {
            if map.insert(key.clone(), response).is_some() {
                return Err(LlmError::DuplicateScriptKey(key));
            }
        }
        Ok(ScriptedProvider { map, fallback })
    }

    /// Load a JSONL script of `{"key", "response"}` objects.
    pub fn load(path: &Path, fallback: ScriptFallback) -> Result<Self, LlmError> {
        let file = File::open(path).map_err(|e| LlmError::ScriptLoad {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| LlmError::ScriptLoad {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(&line).map_err(|e| LlmError::ScriptLoad {
                    path: path.display().to_string(),
                    message: format!("line {}: {e}", i + 1),
                })?;
            entries.push((entry.key, entry.response));
        }
        Self::from_entries(entries, fallback)
    }
}

impl ChatProvider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionOutput, LlmError> {
        let key = script_key(req.template, &req.bindings);
        match self.map.get(&key) {
            Some(response) => Ok(CompletionOutput {
                text: response.clone(),
                token_counts: None,
            }),
            None => match self.fallback {
                ScriptFallback::Error => Err(LlmError::UnknownScriptKey(key)),
                ScriptFallback::Echo => Ok(CompletionOutput {
                    text: req
                        .bindings
                        .get(primary_binding(req.template))
                        .cloned()
                        .unwrap_or_default(),
                    token_counts: None,
                }),
            },
        }
    }
}
