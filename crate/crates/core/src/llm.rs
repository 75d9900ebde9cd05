//! Chat-completion clients for prompt rewriting.
//!
//! [`HttpChatClient`] talks to any OpenAI-compatible `/chat/completions`
//! endpoint. [`TranscriptReplay`] returns a recorded exchange so runs can be
//! reproduced offline.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};
use crate::prompt::RewriteRequest;

pub const API_KEY_ENV: &str = "TIFRE_LLM_API_KEY";

pub trait ChatClient: Send + Sync {
    /// Returns `choices[0].message.content`.
    fn complete(&self, req: &RewriteRequest) -> Result<String>;

    /// Short description recorded in the run manifest.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl From<&RewriteRequest> for ChatRequest {
    fn from(req: &RewriteRequest) -> Self {
        Self {
            model: req.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: req.content.clone(),
            }],
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatChoice {
    pub message: ChatMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<ChatChoice>,
}

impl ChatResponse {
    pub fn content(&self) -> Result<&str> {
        self.choices
            .first()
            .map(|c| c.message.content.as_str())
            .ok_or_else(|| Error::Llm("response has no choices".into()))
    }
}

pub struct HttpChatClient {
    url: String,
    api_key: Option<String>,
    client: JsonClient,
    record_to: Option<PathBuf>,
}

impl HttpChatClient {
    /// `url` is the full completions URL. The API key is read from
    /// [`API_KEY_ENV`] when present.
    pub fn new(url: impl Into<String>, policy: RetryPolicy) -> Self {
        Self {
            url: url.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            client: JsonClient::new(policy),
            record_to: None,
        }
    }

    /// Save every successful exchange as a replayable transcript.
    pub fn recording_to(mut self, path: impl Into<PathBuf>) -> Self {
        self.record_to = Some(path.into());
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn exchange(&self, req: &RewriteRequest) -> Result<Transcript> {
        let request = ChatRequest::from(req);
        let response: ChatResponse = self
            .client
            .post(&self.url, self.api_key.as_deref(), &request)
            .map_err(Error::Llm)?;
        let transcript = Transcript { request, response };
        if let Some(path) = &self.record_to {
            transcript.save(path)?;
        }
        Ok(transcript)
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, req: &RewriteRequest) -> Result<String> {
        Ok(self.exchange(req)?.response.content()?.to_owned())
    }

    fn describe(&self) -> String {
        format!("http:{}", self.url)
    }
}

/// A recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub request: ChatRequest,
    pub response: ChatResponse,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

pub struct TranscriptReplay {
    path: PathBuf,
    transcript: Transcript,
}

impl TranscriptReplay {
    pub fn load(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let transcript = Transcript::load(&path)?;
        Ok(Self { path, transcript })
    }
}

impl ChatClient for TranscriptReplay {
    fn complete(&self, req: &RewriteRequest) -> Result<String> {
        let recorded = self.transcript.request.messages.first().map(|m| &m.content);
        if recorded != Some(&req.content) {
            log::warn!(
                "transcript {} was recorded for a different request; replaying anyway",
                self.path.display()
            );
        }
        Ok(self.transcript.response.content()?.to_owned())
    }

    fn describe(&self) -> String {
        format!("transcript:{}", self.path.display())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{build_rewrite_request, LlmConfig, Question};

    #[test]
    fn wire_shape() {
        let q = Question::new("Which animal runs?", vec![]).unwrap();
        let req = build_rewrite_request(&q, &LlmConfig::new("qwen"));
        let body = serde_json::to_value(ChatRequest::from(&req)).unwrap();
        assert_eq!(body["model"], "qwen");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], req.content.as_str());
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 128);
    }

    #[test]
    fn response_without_choices_is_error() {
        let r: ChatResponse = serde_json::from_str(r#"{"choices": []}"#).unwrap();
        assert!(r.content().is_err());
        let r: ChatResponse = serde_json::from_str(
            r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"a photo of a cat"}}]}"#,
        )
        .unwrap();
        assert_eq!(r.content().unwrap(), "a photo of a cat");
    }
}
