//! HTTP-backed oracle speaking the common chat-completions / embeddings
//! wire shape. Configuration comes from environment variables so credentials
//! never land in fixtures or reports:
//!
//! - `ORACLE_URL`   — chat completions endpoint
//! - `ORACLE_KEY`   — bearer token
//! - `ORACLE_MODEL` — chat model name
//! - `EMBED_MODEL`  — embedding model name
//! - `EMBED_URL`    — optional; derived from `ORACLE_URL` when absent
//!
//! Transient failures (transport errors, 5xx, 429) retry a fixed number of
//! times; anything else surfaces as an error for the caller to handle.

use std::time::Duration;

use serde::Deserialize;

use crate::oracle::{OracleError, OracleProvider, OracleQuery};

const ATTEMPTS: u32 = 3;
const RETRY_PAUSE: Duration = Duration::from_millis(300);

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub chat_url: String,
    pub embed_url: String,
    pub api_key: String,
    pub chat_model: String,
    pub embed_model: String,
}

impl RemoteConfig {
    /// Reads the standard environment variables.
    pub fn from_env() -> Result<Self, OracleError> {
        let var = |name: &str| {
            std::env::var(name).map_err(|_| {
                OracleError::Config(format!("environment variable {name} is not set"))
            })
        };
        let chat_url = var("ORACLE_URL")?;
        let embed_url = match std::env::var("EMBED_URL") {
            Ok(url) => url,
            Err(_) => derive_embed_url(&chat_url)?,
        };
        Ok(RemoteConfig {
            chat_url,
            embed_url,
            api_key: var("ORACLE_KEY")?,
            chat_model: var("ORACLE_MODEL")?,
            embed_model: var("EMBED_MODEL")?,
        })
    }
}

/// Swaps a `/chat/completions` suffix for `/embeddings`.
pub fn derive_embed_url(chat_url: &str) -> Result<String, OracleError> {
    match chat_url.strip_suffix("/chat/completions") {
        Some(base) => Ok(format!("{base}/embeddings")),
        None => Err(OracleError::Config(
            "EMBED_URL is not set and ORACLE_URL does not end in /chat/completions".to_string(),
        )),
    }
}

pub struct RemoteOracle {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct EmbedReply {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f32>,
}

impl RemoteOracle {
    pub fn new(config: RemoteConfig) -> Result<Self, OracleError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| OracleError::Config(format!("http client: {e}")))?;
        Ok(RemoteOracle { config, client })
    }

    pub fn from_env() -> Result<Self, OracleError> {
        Self::new(RemoteConfig::from_env()?)
    }

    fn post_with_retries(
        &self,
        url: &str,
        body: &serde_json::Value,
    ) -> Result<String, OracleError> {
        let mut last_err = String::new();
        for attempt in 0..ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(RETRY_PAUSE);
            }
            let sent = self
                .client
                .post(url)
                .bearer_auth(&self.config.api_key)
                .json(body)
                .send();
            match sent {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return Ok(text);
                    }
                    last_err = format!("{url}: http {status}: {text}");
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        break; // client errors will not heal on retry
                    }
                }
                Err(e) => last_err = format!("{url}: {e}"),
            }
        }
        Err(OracleError::Transport(last_err))
    }
}

impl OracleProvider for RemoteOracle {
    fn embed(&self, text: &str) -> Result<Vec<f32>, OracleError> {
        let body = serde_json::json!({
            "model": self.config.embed_model,
            "input": text,
        });
        let raw = self.post_with_retries(&self.config.embed_url, &body)?;
        let reply: EmbedReply = serde_json::from_str(&raw)
            .map_err(|e| OracleError::Transport(format!("embedding reply: {e}")))?;
        reply
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| OracleError::Transport("embedding reply had no data".to_string()))
    }

    fn respond(&self, query: &OracleQuery) -> Result<String, OracleError> {
        let body = serde_json::json!({
            "model": self.config.chat_model,
            "temperature": 0,
            "messages": [{"role": "user", "content": query.prompt}],
        });
        let raw = self.post_with_retries(&self.config.chat_url, &body)?;
        let reply: ChatReply = serde_json::from_str(&raw)
            .map_err(|e| OracleError::Transport(format!("chat reply: {e}")))?;
        reply
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| OracleError::Transport("chat reply had no choices".to_string()))
    }
}
