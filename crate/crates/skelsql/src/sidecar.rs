//! HTTP client for the encoder sidecar service.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use skelsql_core::{EncodeRequest, EncoderBackend, EncoderError, PosTag, SchemaRepresentations};

use crate::net;

#[derive(Debug, Clone, Deserialize)]
pub struct Health {
    pub dim: usize,
    pub model_name: String,
}

#[derive(Deserialize)]
struct VectorsBody {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

#[derive(Deserialize)]
struct VectorBody {
    vector: Vec<f64>,
}

#[derive(Deserialize)]
struct TagsBody {
    tags: Vec<String>,
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    question_tokens: &'a [String],
    schema_tokens: &'a [String],
    masked_question_index: Option<usize>,
}

pub struct SidecarBackend {
    client: reqwest::blocking::Client,
    base: String,
    health: Health,
    retries: u32,
    backoff: Duration,
}

impl SidecarBackend {
    /// Connects and reads the vector dimension from `/healthz`. Waits out a
    /// loading model for up to `retries` extra attempts.
    pub fn connect(base_url: &str, retries: u32, backoff: Duration) -> Result<Self, EncoderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| EncoderError::BackendUnavailable(e.to_string()))?;
        let mut backend = SidecarBackend {
            client,
            base: base_url.trim_end_matches('/').to_string(),
            health: Health { dim: 0, model_name: String::new() },
            retries,
            backoff,
        };
        backend.health = backend.call(|c, url| c.get(url), "/healthz")?;
        if backend.health.dim == 0 {
            return Err(EncoderError::Protocol("sidecar reported dimension 0".into()));
        }
        Ok(backend)
    }

    pub fn health(&self) -> &Health {
        &self.health
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: &serde_json::Value) -> Result<T, EncoderError> {
        self.call(|c, url| c.post(url).json(body), path)
    }

    /// Retries 503 and transport failures sequentially; other statuses map
    /// to typed errors immediately.
    fn call<T: DeserializeOwned>(
        &self,
        build: impl Fn(&reqwest::blocking::Client, &str) -> reqwest::blocking::RequestBuilder,
        path: &str,
    ) -> Result<T, EncoderError> {
        let url = format!("{}{}", self.base, path);
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            net::record_request();
            let outcome = match build(&self.client, &url).send() {
                Err(e) => Err(EncoderError::BackendUnavailable(e.to_string())),
                Ok(resp) => match resp.status().as_u16() {
                    200 => {
                        return resp.json::<T>().map_err(|e| EncoderError::Protocol(format!("{path}: {e}")));
                    }
                    503 => Err(EncoderError::BackendUnavailable(format!("{path}: model loading"))),
                    status => {
                        let text = resp.text().unwrap_or_default();
                        return Err(EncoderError::Protocol(format!("{path}: status {status}: {text}")));
                    }
                },
            };
            if attempt >= self.retries {
                return outcome;
            }
            thread::sleep(delay);
            delay *= 2;
            attempt += 1;
        }
    }
}

impl EncoderBackend for SidecarBackend {
    fn dim(&self) -> usize {
        self.health.dim
    }

    fn encode(&self, req: &EncodeRequest) -> Result<SchemaRepresentations, EncoderError> {
        req.validate()?;
        let body = serde_json::to_value(EmbedBody {
            question_tokens: &req.question_tokens,
            schema_tokens: &req.schema_tokens,
            masked_question_index: req.masked_question_index,
        })
        .expect("request serializes");
        let resp: VectorsBody = self.post("/embed_masked", &body)?;
        if resp.dim != self.health.dim {
            return Err(EncoderError::DimensionMismatch { expected: self.health.dim, got: resp.dim });
        }
        let reps = SchemaRepresentations { vectors: resp.vectors, dim: resp.dim, masked_index: req.masked_question_index };
        reps.check(req.schema_tokens.len(), self.health.dim)?;
        Ok(reps)
    }

    fn sentence_embed(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        if text.trim().is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let resp: VectorBody = self.post("/sentence_embed", &json!({ "text": text }))?;
        if resp.vector.len() != self.health.dim {
            return Err(EncoderError::DimensionMismatch { expected: self.health.dim, got: resp.vector.len() });
        }
        if resp.vector.iter().any(|x| !x.is_finite()) {
            return Err(EncoderError::NonFinite);
        }
        Ok(resp.vector)
    }

    fn pos_tag(&self, tokens: &[String]) -> Result<Vec<PosTag>, EncoderError> {
        if tokens.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let resp: TagsBody = self.post("/pos", &json!({ "tokens": tokens }))?;
        if resp.tags.len() != tokens.len() {
            return Err(EncoderError::Protocol(format!("{} tags for {} tokens", resp.tags.len(), tokens.len())));
        }
        resp.tags
            .iter()
            .map(|t| match t.as_str() {
                "noun" => Ok(PosTag::Noun),
                "number" => Ok(PosTag::Number),
                "other" => Ok(PosTag::Other),
                other => Err(EncoderError::Protocol(format!("unknown tag `{other}`"))),
            })
            .collect()
    }
}
