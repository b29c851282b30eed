use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::TeacherClient;
use crate::error::{Error, Result};

/// Connection settings for an OpenAI-compatible chat completions endpoint.
/// The API key is read from the environment variable named by `api_key_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 3,
            backoff_ms: 500,
            timeout_secs: 60,
        }
    }
}

pub struct RemoteClient {
    config: RemoteConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::TeacherUnavailable(format!("http client: {e}")))?;
        let api_key = std::env::var(&config.api_key_env).ok();
        Ok(RemoteClient { config, api_key, http })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn request_once(&self, prompt: &str, n: usize, temperature: f64) -> std::result::Result<Vec<String>, String> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "n": n,
            "temperature": temperature,
        });
        let mut req = self.http.post(self.url()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| e.to_string())?;
        Ok(parsed.choices.into_iter().map(|c| c.message.content).collect())
    }

    /// One logical request with bounded retries and exponential backoff.
    fn request(&self, prompt: &str, n: usize, temperature: f64) -> Result<Vec<String>> {
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.request_once(prompt, n, temperature) {
                Ok(out) => return Ok(out),
                Err(e) => {
                    log::warn!("teacher request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(Error::TeacherUnavailable(format!(
            "{} after {} attempts: {last}",
            self.url(),
            self.config.max_retries + 1
        )))
    }
}

impl TeacherClient for RemoteClient {
    /// Endpoints that ignore `n` are called repeatedly until `n`
    /// completions are collected.
    fn generate(&self, prompt: &str, n: usize, temperature: f64) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(n);
        let mut rounds = 0;
        while out.len() < n {
            let got = self.request(prompt, n - out.len(), temperature)?;
            if got.is_empty() {
                rounds += 1;
                if rounds > self.config.max_retries {
                    return Err(Error::TeacherUnavailable("endpoint returned no choices".into()));
                }
            }
            out.extend(got);
        }
        out.truncate(n);
        Ok(out)
    }
}
