use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RequestError {
    #[error("model id must not be empty")]
    EmptyModel,
    #[error("temperature {0} outside [0, 2]")]
    Temperature(f64),
    #[error("malformed canonical request: {0}")]
    Malformed(String),
}

/// One chat-completion call: a system role, a single user turn and the
/// sampling temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub system_message: String,
    pub user_message: String,
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(
        model_id: impl Into<String>,
        system_message: impl Into<String>,
        user_message: impl Into<String>,
    ) -> Result<Self, RequestError> {
        let request = CompletionRequest {
            model_id: model_id.into(),
            system_message: system_message.into(),
            user_message: user_message.into(),
            temperature: DEFAULT_TEMPERATURE,
        };
        request.validate()?;
        Ok(request)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, RequestError> {
        self.temperature = temperature;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), RequestError> {
        if self.model_id.trim().is_empty() {
            return Err(RequestError::EmptyModel);
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(RequestError::Temperature(self.temperature));
        }
        Ok(())
    }

    /// The chat-completions body. Keys come out sorted because
    /// `serde_json::Map` is ordered, which makes this encoding canonical.
    pub fn to_canonical(&self) -> Value {
        json!({
            "model": self.model_id,
            "messages": [
                {"role": "system", "content": self.system_message},
                {"role": "user", "content": self.user_message},
            ],
            "temperature": self.temperature,
        })
    }

    pub fn from_canonical(value: &Value) -> Result<Self, RequestError> {
        let malformed = |m: &str| RequestError::Malformed(m.to_string());
        let model = value["model"].as_str().ok_or_else(|| malformed("missing model"))?;
        let messages = value["messages"].as_array().ok_or_else(|| malformed("missing messages"))?;
        let content_for = |role: &str| -> Result<String, RequestError> {
            let mut found = messages.iter().filter(|m| m["role"] == role);
            let msg = found.next().ok_or_else(|| malformed(&format!("no {role} message")))?;
            if found.next().is_some() {
                return Err(malformed(&format!("more than one {role} message")));
            }
            msg["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| malformed(&format!("{role} content is not text")))
        };
        let temperature = match &value["temperature"] {
            Value::Null => DEFAULT_TEMPERATURE,
            v => v.as_f64().ok_or_else(|| malformed("temperature is not a number"))?,
        };
        let request = CompletionRequest {
            model_id: model.to_string(),
            system_message: content_for("system")?,
            user_message: content_for("user")?,
            temperature,
        };
        request.validate()?;
        Ok(request)
    }

    /// Hex SHA-256 of the canonical encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_canonical()).expect("json values always serialize");
        hex::encode(Sha256::digest(&bytes))
    }
}
