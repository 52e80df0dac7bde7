use std::time::Duration;

use serde::{Deserialize, Serialize};

use rumi_core::data::words;
use rumi_core::{Error, Result};

/// Environment variable holding the generation endpoint URL.
pub const ENDPOINT_ENV: &str = "RUMI_LLM_ENDPOINT";
/// Environment variable holding an optional bearer credential.
pub const KEY_ENV: &str = "RUMI_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestMode {
    Generate,
    Score,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub n: usize,
    pub mode: RequestMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuations: Option<Vec<String>>,
}

impl GenerationRequest {
    pub fn generate(prompt: impl Into<String>, max_tokens: usize, n: usize) -> Self {
        Self { prompt: prompt.into(), max_tokens, n, mode: RequestMode::Generate, continuations: None }
    }

    pub fn score(prompt: impl Into<String>, continuations: Vec<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 0,
            n: continuations.len(),
            mode: RequestMode::Score,
            continuations: Some(continuations),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub text: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub outputs: Vec<GenerationOutput>,
}

/// A text-generation service speaking the JSON request/response contract.
pub trait GenerationClient: Send + Sync {
    fn endpoint(&self) -> &str;

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse>;
}

impl<C: GenerationClient + ?Sized> GenerationClient for &C {
    fn endpoint(&self) -> &str {
        (**self).endpoint()
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse> {
        (**self).complete(request)
    }
}

/// Offline client whose output depends only on the request.
///
/// Generation returns `n` copies of `"K: "` plus the first five words of the
/// last `Input:` line, with log-probabilities `0, -1, -2, …`. Scoring gives
/// each continuation its character count.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubClient;

impl StubClient {
    fn question_of(prompt: &str) -> &str {
        let tail = prompt.rsplit_once("Input: ").map_or(prompt, |(_, t)| t);
        tail.split_once("\nKnowledge:").map_or(tail, |(q, _)| q)
    }
}

impl GenerationClient for StubClient {
    fn endpoint(&self) -> &str {
        "stub://"
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse> {
        let outputs = match request.mode {
            RequestMode::Generate => {
                let head: Vec<String> = words(Self::question_of(&request.prompt)).into_iter().take(5).collect();
                let text = format!("K: {}", head.join(" "));
                (0..request.n).map(|i| GenerationOutput { text: text.clone(), logprob: -(i as f64) }).collect()
            }
            RequestMode::Score => request
                .continuations
                .iter()
                .flatten()
                .map(|c| GenerationOutput { text: c.clone(), logprob: c.chars().count() as f64 })
                .collect(),
        };
        Ok(GenerationResponse { outputs })
    }
}

/// JSON-over-HTTP client with a global timeout and exponential-backoff retries.
#[derive(Debug, Clone)]
pub struct HttpClient {
    endpoint: String,
    credential: Option<String>,
    pub retries: usize,
    pub backoff: Duration,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { endpoint: endpoint.into(), credential: None, retries: 3, backoff: Duration::from_millis(250), agent }
    }

    pub fn with_credential(mut self, key: impl Into<String>) -> Self {
        self.credential = Some(key.into());
        self
    }

    /// Reads the endpoint (required) and credential (optional) from the environment.
    pub fn from_env(timeout: Duration) -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| Error::Config(format!("{ENDPOINT_ENV} is not set")))?;
        let client = Self::new(endpoint, timeout);
        Ok(match std::env::var(KEY_ENV) {
            Ok(key) if !key.is_empty() => client.with_credential(key),
            _ => client,
        })
    }

    fn attempt(&self, request: &GenerationRequest) -> std::result::Result<GenerationResponse, String> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.credential {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(request).map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<GenerationResponse>().map_err(|e| e.to_string())
    }
}

impl GenerationClient for HttpClient {
    fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse> {
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt as u32 - 1));
            }
            match self.attempt(request) {
                Ok(resp) => return Ok(resp),
                Err(e) => last = e,
            }
        }
        Err(Error::Generation(format!("{} failed after {} attempts: {last}", self.endpoint, self.retries + 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        let g = serde_json::to_string(&GenerationRequest::generate("p", 32, 2)).unwrap();
        assert_eq!(g, r#"{"prompt":"p","max_tokens":32,"n":2,"mode":"generate"}"#);
        let s = serde_json::to_string(&GenerationRequest::score("p", vec!["a".into()])).unwrap();
        assert_eq!(s, r#"{"prompt":"p","max_tokens":0,"n":1,"mode":"score","continuations":["a"]}"#);
        let r: GenerationResponse = serde_json::from_str(r#"{"outputs":[{"text":"x","logprob":-1.5}]}"#).unwrap();
        assert_eq!(r.outputs[0].logprob, -1.5);
    }

    #[test]
    fn stub_echoes_question_head() {
        let prompt = "Head\n\nInput: a b\nKnowledge: c\n\nInput: One two three four five six\nKnowledge:";
        let r = StubClient.complete(&GenerationRequest::generate(prompt, 16, 3)).unwrap();
        assert_eq!(r.outputs.len(), 3);
        assert!(r.outputs.iter().all(|o| o.text == "K: one two three four five"));
    }

    #[test]
    fn unreachable_endpoint_reports_cause() {
        let mut c = HttpClient::new("http://127.0.0.1:9/", Duration::from_millis(200));
        c.retries = 1;
        c.backoff = Duration::from_millis(1);
        let err = c.complete(&GenerationRequest::generate("p", 1, 1)).unwrap_err().to_string();
        assert!(err.contains("2 attempts"), "{err}");
    }
}
