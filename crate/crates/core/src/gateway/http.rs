//! HTTP transport: chat-completions / embeddings wire schema for the chat and
//! embedding endpoints, plus the small JSON contracts for the emotion
//! classifier and grammar checker endpoints.

use serde::Deserialize;
use serde_json::json;

use super::{ChatRequest, EmotionResult, GatewayError, GrammarMatch, Transport};

/// One remote endpoint: base URL, model name, auth token env var.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default)]
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

impl EndpointConfig {
    pub fn is_mock(&self) -> bool {
        self.base_url.starts_with("mock:") || self.base_url.is_empty()
    }

    fn token(&self) -> Option<String> {
        self.api_key_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok())
    }
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    pub chat: EndpointConfig,
    pub embed: EndpointConfig,
    pub emotion: EndpointConfig,
    pub grammar: EndpointConfig,
}

impl HttpTransport {
    pub fn new(
        chat: EndpointConfig,
        embed: EndpointConfig,
        emotion: EndpointConfig,
        grammar: EndpointConfig,
    ) -> Self {
        HttpTransport {
            client: reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(300))
                .build()
                .expect("reqwest client"),
            chat,
            embed,
            emotion,
            grammar,
        }
    }

    fn post(
        &self,
        endpoint: &EndpointConfig,
        url: &str,
        body: serde_json::Value,
    ) -> Result<serde_json::Value, GatewayError> {
        let mut req = self.client.post(url).json(&body);
        if let Some(token) = endpoint.token() {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| GatewayError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(GatewayError::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(GatewayError::ProtocolError(format!("status {status}")));
        }
        resp.json()
            .map_err(|e| GatewayError::ProtocolError(e.to_string()))
    }
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct GrammarResponse {
    matches: Vec<GrammarWireMatch>,
}

#[derive(Deserialize)]
struct GrammarWireMatch {
    offset: usize,
    length: usize,
    rule: GrammarWireRule,
}

#[derive(Deserialize)]
struct GrammarWireRule {
    id: String,
    #[serde(default)]
    category: serde_json::Value,
}

impl Transport for HttpTransport {
    fn chat(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let messages: Vec<serde_json::Value> = req
            .messages
            .iter()
            .map(|m| {
                json!({
                    "role": match m.role {
                        super::ChatRole::System => "system",
                        super::ChatRole::User => "user",
                        super::ChatRole::Assistant => "assistant",
                    },
                    "content": m.content,
                })
            })
            .collect();
        let mut body = json!({
            "model": req.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        if let Some(stop) = &req.stop_sequences {
            body["stop"] = json!(stop);
        }
        let url = format!("{}/chat/completions", self.chat.base_url.trim_end_matches('/'));
        let value = self.post(&self.chat, &url, body)?;
        let parsed: ChatCompletionResponse = serde_json::from_value(value)
            .map_err(|e| GatewayError::ProtocolError(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| GatewayError::ProtocolError("no choices in response".into()))
    }

    fn embed(&self, model: &str, text: &str) -> Result<Vec<f64>, GatewayError> {
        let url = format!("{}/embeddings", self.embed.base_url.trim_end_matches('/'));
        let value = self.post(&self.embed, &url, json!({ "model": model, "input": [text] }))?;
        let parsed: EmbeddingsResponse = serde_json::from_value(value)
            .map_err(|e| GatewayError::ProtocolError(e.to_string()))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|r| r.embedding)
            .ok_or_else(|| GatewayError::ProtocolError("no embedding in response".into()))
    }

    fn classify(&self, text: &str) -> Result<EmotionResult, GatewayError> {
        let value = self.post(&self.emotion, &self.emotion.base_url, json!({ "text": text }))?;
        #[derive(Deserialize)]
        struct Wire {
            label: String,
            score: f64,
        }
        let w: Wire = serde_json::from_value(value)
            .map_err(|e| GatewayError::ProtocolError(e.to_string()))?;
        Ok(EmotionResult { label: w.label, confidence: w.score })
    }

    fn grammar(&self, text: &str) -> Result<Vec<GrammarMatch>, GatewayError> {
        let body = format!("text={}&language=en-US", urlencode(text));
        let mut req = self
            .client
            .post(&self.grammar.base_url)
            .header("content-type", "application/x-www-form-urlencoded")
            .body(body);
        if let Some(token) = self.grammar.token() {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| GatewayError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(GatewayError::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(GatewayError::ProtocolError(format!("status {status}")));
        }
        let parsed: GrammarResponse = resp
            .json()
            .map_err(|e| GatewayError::ProtocolError(e.to_string()))?;
        Ok(parsed
            .matches
            .into_iter()
            .map(|m| GrammarMatch {
                offset: m.offset,
                length: m.length,
                rule_id: m.rule.id,
                // category arrives either as a bare string or as {"id": ...}
                category: match &m.rule.category {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Object(o) => o
                        .get("id")
                        .and_then(|v| v.as_str())
                        .unwrap_or("unknown")
                        .to_string(),
                    _ => "unknown".to_string(),
                },
            })
            .collect())
    }
}

/// Percent-encodes a form value (everything except unreserved characters).
fn urlencode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            b' ' => out.push('+'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}
