//! Text embedders used to rank predicates against relation phrases.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::EmbedderConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmbedError {
    #[error("embedding request failed: {0}")]
    Transport(String),
    #[error("embedding response malformed: {0}")]
    Malformed(String),
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;

    /// Deterministic fixed-length vector for `text`.
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
}

/// Cosine similarity computed in `f64`; 0 when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Offline embedder: hashed character-trigram counts of the lowercased,
/// whitespace-normalized text padded with one space on each side.
#[derive(Debug, Clone)]
pub struct TrigramEmbedder {
    dims: usize,
}

impl TrigramEmbedder {
    pub const DEFAULT_DIMS: usize = 2048;

    pub fn new(dims: usize) -> Self {
        TrigramEmbedder { dims: dims.max(1) }
    }
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMS)
    }
}

fn fnv1a(chars: &[char]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut buf = [0u8; 4];
    for c in chars {
        for b in c.encode_utf8(&mut buf).bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
    }
    hash
}

impl Embedder for TrigramEmbedder {
    fn id(&self) -> &str {
        "trigram"
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let mut vector = vec![0.0f32; self.dims];
        if normalized.is_empty() {
            return Ok(vector);
        }
        let padded: Vec<char> = format!(" {normalized} ").chars().collect();
        for window in padded.windows(3) {
            vector[(fnv1a(window) % self.dims as u64) as usize] += 1.0;
        }
        Ok(vector)
    }
}

/// OpenAI-compatible `/embeddings` client with an in-process cache.
pub struct HttpEmbedder {
    id: String,
    url: String,
    model: String,
    api_key: Option<String>,
    client: Client,
    cache: Mutex<HashMap<String, Vec<f32>>>,
}

impl HttpEmbedder {
    pub fn from_config(config: &EmbedderConfig) -> Result<Self, EmbedError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(HttpEmbedder {
            id: format!("http:{}", config.model),
            url: config.url.clone(),
            model: config.model.clone(),
            api_key: std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty()),
            client,
            cache: Mutex::new(HashMap::new()),
        })
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if let Some(v) = self.cache.lock().expect("embed cache poisoned").get(text) {
            return Ok(v.clone());
        }
        let mut request = self.client.post(&self.url).json(&json!({"model": self.model, "input": text}));
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| EmbedError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response.text().map_err(|e| EmbedError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(EmbedError::Transport(format!("HTTP {status}: {}", body.trim())));
        }
        let doc: Value = serde_json::from_str(&body).map_err(|e| EmbedError::Malformed(e.to_string()))?;
        let vector: Vec<f32> = doc
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Malformed("missing data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().map(|f| f as f32))
            .collect::<Option<_>>()
            .ok_or_else(|| EmbedError::Malformed("non-numeric embedding".into()))?;
        self.cache
            .lock()
            .expect("embed cache poisoned")
            .insert(text.to_string(), vector.clone());
        Ok(vector)
    }
}
