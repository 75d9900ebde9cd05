//! Blocking JSON-over-HTTP with bounded retries, shared by the chat client and
//! the remote embedding backend.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            max_retries: 2,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

pub(crate) struct JsonClient {
    agent: ureq::Agent,
    policy: RetryPolicy,
}

fn retryable(err: &ureq::Error) -> bool {
    match err {
        ureq::Error::StatusCode(code) => *code == 408 || *code == 429 || *code >= 500,
        ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed => true,
        _ => false,
    }
}

impl JsonClient {
    pub(crate) fn new(policy: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(policy.timeout))
            .build()
            .into();
        Self { agent, policy }
    }

    /// POST `body` and decode the response. Every attempt sends the same
    /// request, so retrying an idempotent endpoint is safe.
    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &B,
    ) -> Result<R, String> {
        let payload = serde_json::to_vec(body).map_err(|e| format!("encoding request for {url}: {e}"))?;
        let mut backoff = self.policy.initial_backoff;
        let mut attempt = 0;
        loop {
            let mut req = self.agent.post(url).header("Content-Type", "application/json");
            if let Some(token) = bearer {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            let result = req
                .send(&payload[..])
                .and_then(|mut resp| resp.body_mut().read_to_string());
            match result {
                Ok(text) => {
                    return serde_json::from_str(&text).map_err(|e| format!("POST {url}: malformed response: {e}"))
                }
                Err(e) if attempt < self.policy.max_retries && retryable(&e) => {
                    log::warn!("POST {url} failed ({e}), retrying in {backoff:?}");
                    thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(format!("POST {url}: {e}")),
            }
        }
    }
}
