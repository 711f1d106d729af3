//! HTTP advisor backend: one request/response text exchange per prompt.
//!
//! The request body is JSON with the prompt and a model name; the response
//! body is free text handed straight to the proposal parser. A bearer token
//! is read from the `GRIDSAFE_ADVISOR_TOKEN` environment variable when set.

use std::time::Duration;

use serde::Serialize;

use gridsafe_core::advisor::{Advisor, AdvisorContext};
use gridsafe_core::CoreError;

pub const TOKEN_ENV_VAR: &str = "GRIDSAFE_ADVISOR_TOKEN";

#[derive(Serialize)]
struct AdviseRequest<'a> {
    model: &'a str,
    prompt: &'a str,
}

pub struct RemoteAdvisor {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
}

impl RemoteAdvisor {
    pub fn new(endpoint: String, model: Option<String>, timeout_secs: u64) -> Result<RemoteAdvisor, CoreError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| CoreError::Usage(format!("cannot build http client: {e}")))?;
        Ok(RemoteAdvisor {
            client,
            endpoint,
            model: model.unwrap_or_else(|| "default".to_string()),
        })
    }
}

impl Advisor for RemoteAdvisor {
    fn name(&self) -> &str {
        "remote"
    }

    fn advise(&mut self, ctx: &AdvisorContext<'_>) -> Result<String, CoreError> {
        let mut req = self.client.post(&self.endpoint).json(&AdviseRequest {
            model: &self.model,
            prompt: ctx.prompt,
        });
        if let Ok(token) = std::env::var(TOKEN_ENV_VAR) {
            req = req.bearer_auth(token);
        }
        // transport and status failures count as a failed refinement round
        let resp = req
            .send()
            .map_err(|e| CoreError::Usage(format!("advisor request failed: {e}")))?;
        if !resp.status().is_success() {
            return Err(CoreError::Usage(format!(
                "advisor returned status {}",
                resp.status()
            )));
        }
        resp.text()
            .map_err(|e| CoreError::Usage(format!("advisor response unreadable: {e}")))
    }
}
