//! OpenAI-compatible chat-completion backend with bounded retries.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, CompletionRequest, LlmError};

const MAX_ATTEMPTS: u32 = 3;
const BASE_BACKOFF: Duration = Duration::from_millis(250);

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl HttpBackend {
    /// Reads the API key from the KGNAV_API_KEY environment variable;
    /// credentials never come from config files.
    pub fn new(base_url: &str) -> Result<Self, LlmError> {
        let api_key = std::env::var("KGNAV_API_KEY").map_err(|_| LlmError::MissingApiKey)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Protocol(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.trim_end_matches('/').to_owned(),
            api_key,
        })
    }

    fn attempt(&self, req: &CompletionRequest) -> Result<String, AttemptError> {
        let body = json!({
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| AttemptError::Transient(e.to_string()))?;
        let status = response.status();
        if status.is_client_error() {
            // 4xx will not get better on retry
            return Err(AttemptError::Fatal(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Transient(format!("HTTP {status}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| AttemptError::Fatal(format!("unparseable payload: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| AttemptError::Fatal("response has no choices".into()))
    }
}

enum AttemptError {
    Transient(String),
    Fatal(String),
}

impl Backend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let mut last = String::new();
        for attempt in 0..MAX_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(BASE_BACKOFF * 2u32.pow(attempt - 1));
            }
            match self.attempt(req) {
                Ok(text) => return Ok(text),
                Err(AttemptError::Fatal(reason)) => return Err(LlmError::Protocol(reason)),
                Err(AttemptError::Transient(reason)) => last = reason,
            }
        }
        Err(LlmError::BackendUnavailable {
            attempts: MAX_ATTEMPTS,
            reason: last,
        })
    }

    fn tag(&self) -> &str {
        "http"
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}
