use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ParaphraseBackend, ProviderError, ProviderKind};

#[derive(Serialize)]
struct ParaphraseRequest<'a> {
    text: &'a str,
    max_candidates: usize,
    seed: u64,
}

#[derive(Deserialize)]
struct ParaphraseResponse {
    paraphrases: Vec<String>,
}

/// Client for an external paraphrase model speaking the
/// `POST /paraphrase` JSON contract.
#[derive(Debug, Clone)]
pub struct RemoteParaphraser {
    url: String,
    agent: ureq::Agent,
}

impl RemoteParaphraser {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    /// `endpoint` is the service base address, e.g. `http://127.0.0.1:8090`.
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            url: format!("{}/paraphrase", endpoint.trim_end_matches('/')),
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl ParaphraseBackend for RemoteParaphraser {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }

    fn candidates(&self, text: &str, max_candidates: usize, seed: u64) -> Result<Vec<String>, ProviderError> {
        let request = ParaphraseRequest {
            text,
            max_candidates,
            seed,
        };
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(&request)
            .map_err(|e| ProviderError::Unreachable(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ProviderError::Status(status));
        }
        let body: ParaphraseResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Protocol(e.to_string()))?;
        Ok(body.paraphrases)
    }
}
