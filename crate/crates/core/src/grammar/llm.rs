use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no recorded transcript for prompt {0}")]
    MissingTranscript(String),
    #[error("transcripts {path}: {msg}")]
    Fixture { path: PathBuf, msg: String },
    #[error("request failed: {0}")]
    Request(String),
}

/// Text completion backend.
pub trait LlmClient {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError>;
}

impl<C: LlmClient + ?Sized> LlmClient for &mut C {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    /// OpenAI-compatible chat completions URL.
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub token: Option<String>,
    pub temperature: f64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            token: None,
            temperature: 0.0,
        }
    }
}

/// Hex SHA-256 of the prompt, the key of recorded transcripts.
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

pub const TRANSCRIPTS_FILE: &str = "transcripts.json";

/// Replays recorded replies; never touches the network.
#[derive(Clone, Debug, Default)]
pub struct FixtureClient {
    transcripts: BTreeMap<String, String>,
}

impl FixtureClient {
    pub fn new(transcripts: BTreeMap<String, String>) -> Self {
        FixtureClient { transcripts }
    }

    /// Loads `transcripts.json` (prompt hash → reply) from `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = dir.as_ref().join(TRANSCRIPTS_FILE);
        let fixture = |msg: String| LlmError::Fixture {
            path: path.clone(),
            msg,
        };
        let text = fs::read_to_string(&path).map_err(|e| fixture(e.to_string()))?;
        let transcripts = serde_json::from_str(&text).map_err(|e| fixture(e.to_string()))?;
        Ok(FixtureClient { transcripts })
    }

    pub fn transcripts(&self) -> &BTreeMap<String, String> {
        &self.transcripts
    }
}

impl LlmClient for FixtureClient {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        let key = prompt_key(prompt);
        self.transcripts
            .get(&key)
            .cloned()
            .ok_or(LlmError::MissingTranscript(key))
    }
}

/// Passes prompts through to another client and keeps every reply, so a live
/// session can be saved as a fixture.
pub struct RecordingClient<C> {
    inner: C,
    recorded: BTreeMap<String, String>,
}

impl<C: LlmClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        RecordingClient {
            inner,
            recorded: BTreeMap::new(),
        }
    }

    pub fn into_fixture(self) -> FixtureClient {
        FixtureClient::new(self.recorded)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(&self.recorded).expect("string map serializes");
        fs::write(dir.join(TRANSCRIPTS_FILE), text + "\n")
    }
}

impl<C: LlmClient> LlmClient for RecordingClient<C> {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        let reply = self.inner.complete(prompt)?;
        self.recorded.insert(prompt_key(prompt), reply.clone());
        Ok(reply)
    }
}

/// Chat-completions client over HTTPS.
#[cfg(feature = "live-llm")]
pub struct HttpClient {
    settings: LlmSettings,
    agent: ureq::Agent,
}

#[cfg(feature = "live-llm")]
impl HttpClient {
    pub fn new(settings: LlmSettings) -> Self {
        HttpClient {
            settings,
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

#[cfg(feature = "live-llm")]
impl LlmClient for HttpClient {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.settings.model,
            "temperature": self.settings.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.agent.post(&self.settings.endpoint);
        if let Some(tok) = &self.settings.token {
            req = req.header("Authorization", &format!("Bearer {tok}"));
        }
        let reply: serde_json::Value = req
            .send_json(&body)
            .map_err(|e| LlmError::Request(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Request(e.to_string()))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Request(format!("unexpected reply: {reply}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_sha256_hex() {
        assert_eq!(
            prompt_key(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn fixture_replays_and_misses() {
        let mut c = FixtureClient::new(BTreeMap::from([(prompt_key("hi"), "there".into())]));
        assert_eq!(c.complete("hi").unwrap(), "there");
        assert!(matches!(
            c.complete("bye"),
            Err(LlmError::MissingTranscript(_))
        ));
    }

    #[test]
    fn recording_round_trip() {
        let inner = FixtureClient::new(BTreeMap::from([(prompt_key("p"), "r".into())]));
        let mut rec = RecordingClient::new(inner);
        rec.complete("p").unwrap();
        let dir = tempfile::tempdir().unwrap();
        rec.save(dir.path()).unwrap();
        let mut back = FixtureClient::from_dir(dir.path()).unwrap();
        assert_eq!(back.complete("p").unwrap(), "r");
    }
}
