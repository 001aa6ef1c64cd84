//! Blocking HTTP client for chat-completions and embeddings endpoints.
//!
//! Request bodies:
//! - chat: `{model, messages: [{role, content}], temperature, seed?}`;
//!   the reply text is `choices[0].message.content`.
//! - embeddings: `{model, input: [texts]}`; vectors are `data[i].embedding`,
//!   reordered by `data[i].index` when present.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{EmbeddingProvider, GenerationProvider, GenerationRequest, ProviderConfig, ProviderError};

/// Hard cap on concurrent requests.
struct InFlightGate {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlightGate);

impl InFlightGate {
    fn new(limit: usize) -> Self {
        InFlightGate {
            limit,
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().expect("gate poisoned");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("gate poisoned");
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().expect("gate poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

struct Client {
    config: ProviderConfig,
    agent: ureq::Agent,
    gate: InFlightGate,
}

impl Client {
    fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        if config.endpoint.is_empty() {
            return Err(ProviderError::InvalidConfig("endpoint is empty".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(true)
            .build()
            .into();
        Ok(Client {
            gate: InFlightGate::new(config.max_in_flight),
            agent,
            config,
        })
    }

    fn post_once(&self, body: &Value) -> Result<Value, String> {
        let _permit = self.gate.acquire();
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<Value>().map_err(|e| e.to_string())
    }

    /// Posts with retries and exponential backoff.
    fn post(&self, body: &Value) -> Result<Value, ProviderError> {
        let attempts = self.config.retries + 1;
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.post_once(body) {
                Ok(v) => return Ok(v),
                Err(e) => last = e,
            }
            if attempt + 1 < attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(ProviderError::Transport {
            attempts,
            message: last,
        })
    }
}

pub struct HttpGenerator {
    client: Client,
}

impl HttpGenerator {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        Ok(HttpGenerator {
            client: Client::new(config)?,
        })
    }
}

impl GenerationProvider for HttpGenerator {
    fn provider_id(&self) -> String {
        format!("http:{}", self.client.config.endpoint)
    }

    fn model(&self) -> String {
        self.client.config.model.clone()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        let mut body = json!({
            "model": self.client.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        let resp = self.client.post(&body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Response("missing choices[0].message.content".into()))
    }
}

pub struct HttpEmbedder {
    client: Client,
}

impl HttpEmbedder {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        Ok(HttpEmbedder {
            client: Client::new(config)?,
        })
    }

    fn embed_chunk(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let body = json!({"model": self.client.config.model, "input": texts});
        let resp = self.client.post(&body)?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Response("missing data array".into()))?;
        if data.len() != texts.len() {
            return Err(ProviderError::CountMismatch {
                expected: texts.len(),
                got: data.len(),
            });
        }
        let mut out: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let slot = item
                .get("index")
                .and_then(Value::as_u64)
                .map(|i| i as usize)
                .unwrap_or(pos);
            let vec = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| ProviderError::Response("missing embedding".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| ProviderError::Response("non-numeric embedding".into())))
                .collect::<Result<Vec<f64>, _>>()?;
            if vec.len() != self.client.config.dimension {
                return Err(ProviderError::DimensionMismatch {
                    expected: self.client.config.dimension,
                    got: vec.len(),
                });
            }
            match out.get_mut(slot) {
                Some(s @ None) => *s = Some(vec),
                _ => return Err(ProviderError::Response(format!("bad or repeated index {slot}"))),
            }
        }
        Ok(out.into_iter().map(|v| v.expect("all slots filled")).collect())
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn provider_id(&self) -> String {
        format!("http:{}:{}", self.client.config.endpoint, self.client.config.model)
    }

    fn dimension(&self) -> usize {
        self.client.config.dimension
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.client.config.batch_size) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}
