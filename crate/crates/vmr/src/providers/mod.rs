//! Uniform contracts for the four external model capabilities: query
//! rewriting, frame captioning, text embedding, and frame-query similarity.
//!
//! Three interchangeable backends implement them: [`HttpProvider`] speaks the
//! OpenAI-compatible chat/embeddings API, [`FileBackedProvider`] serves
//! precomputed JSONL caches, and [`MockProvider`] is fully deterministic for
//! testing and offline runs. All four operations are referentially
//! transparent under the mock and file-backed backends.

mod file_backed;
#[cfg(feature = "http")]
mod http;
mod mock;

pub use file_backed::{sha256_hex, CachingCaptioner, FileBackedProvider};
#[cfg(feature = "http")]
pub use http::HttpProvider;
pub use mock::{CaptionScriptRule, MockProvider};

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::core::Query;
use crate::rewrite::SemanticGuidance;

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("remote provider unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("provider contract violation: {0}")]
    ContractViolation(String),
    #[error("cache miss: {0}")]
    CacheMiss(String),
}

/// Unit-normalized sentence embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    vector: Vec<f64>,
}

impl Embedding {
    /// Accepts a vector whose L2 norm is within 1e-6 of 1.
    pub fn new(vector: Vec<f64>) -> Result<Self, ProviderError> {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vector.is_empty() || (norm - 1.0).abs() > 1e-6 {
            return Err(ProviderError::ContractViolation(format!(
                "embedding must be unit-norm, got norm {norm} over {} dims",
                vector.len()
            )));
        }
        Ok(Self { vector })
    }

    /// Normalizes an arbitrary non-zero vector.
    pub fn from_unnormalized(mut vector: Vec<f64>) -> Result<Self, ProviderError> {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vector.is_empty() || norm < 1e-12 || !norm.is_finite() {
            return Err(ProviderError::ContractViolation(
                "cannot normalize empty or zero embedding".into(),
            ));
        }
        for x in &mut vector {
            *x /= norm;
        }
        Ok(Self { vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionMode {
    Agnostic,
    Aware,
}

/// A frame caption, either query-agnostic or generated under semantic
/// guidance (in which case it carries the guidance fingerprint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub mode: CaptionMode,
    pub guidance_fingerprint: Option<String>,
}

impl Caption {
    pub fn agnostic(text: impl Into<String>) -> Result<Self, ProviderError> {
        Self::checked(text.into(), CaptionMode::Agnostic, None)
    }

    pub fn aware(text: impl Into<String>, fingerprint: String) -> Result<Self, ProviderError> {
        Self::checked(text.into(), CaptionMode::Aware, Some(fingerprint))
    }

    fn checked(
        text: String,
        mode: CaptionMode,
        guidance_fingerprint: Option<String>,
    ) -> Result<Self, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::ContractViolation("empty caption".into()));
        }
        if mode == CaptionMode::Aware && guidance_fingerprint.is_none() {
            return Err(ProviderError::ContractViolation(
                "aware caption without guidance fingerprint".into(),
            ));
        }
        Ok(Self {
            text,
            mode,
            guidance_fingerprint,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    FileBacked,
    Mock,
}

/// Declarative provider selection, loadable from the run config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env: Option<String>,
    pub cache_dir: Option<PathBuf>,
    /// Mock only: hash seed.
    pub seed: Option<u64>,
    /// Mock only: JSON file of planted caption tokens per frame range.
    pub caption_script: Option<PathBuf>,
    /// Http only: bound on concurrent requests (default 8).
    pub max_in_flight: Option<usize>,
}

impl ProviderSpec {
    pub fn mock(seed: u64) -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            model_name: None,
            auth_token_env: None,
            cache_dir: None,
            seed: Some(seed),
            caption_script: None,
            max_in_flight: None,
        }
    }

    pub fn validate(&self) -> Result<(), crate::Error> {
        match self.kind {
            ProviderKind::Http if self.endpoint.is_none() => Err(crate::Error::InvalidConfig(
                "http provider requires an endpoint".into(),
            )),
            ProviderKind::FileBacked if self.cache_dir.is_none() => Err(
                crate::Error::InvalidConfig("file-backed provider requires a cache_dir".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Produces one (simplified, detailed) reformulation of a query.
pub trait QueryRewriter: Send + Sync {
    fn rewrite(
        &self,
        query: &Query,
        instruction_pair_id: usize,
        sample_index: usize,
    ) -> Result<(String, String), ProviderError>;
}

/// Captions one frame, query-agnostic or under guidance.
pub trait FrameCaptioner: Send + Sync {
    fn caption_frame(
        &self,
        video_id: &str,
        frame_index: usize,
        guidance: Option<&SemanticGuidance>,
    ) -> Result<Caption, ProviderError>;
}

/// Embeds text into a unit-norm vector. Identical text must yield an
/// identical vector within one provider instance.
pub trait TextEmbedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Embedding, ProviderError>;
}

/// Scores how query-relevant a frame looks; higher is more relevant.
pub trait FrameSimilarity: Send + Sync {
    fn frame_query_similarity(
        &self,
        video_id: &str,
        frame_index: usize,
        query_text: &str,
    ) -> Result<f64, ProviderError>;
}

/// Runs [`QueryRewriter::rewrite`] and enforces the output contract: both
/// strings non-empty and distinct. One retry on a contract violation;
/// `RemoteUnavailable` and `CacheMiss` surface immediately.
pub fn rewrite_checked(
    provider: &dyn QueryRewriter,
    query: &Query,
    instruction_pair_id: usize,
    sample_index: usize,
) -> Result<(String, String), ProviderError> {
    let mut violation = String::new();
    for _attempt in 0..2 {
        match provider.rewrite(query, instruction_pair_id, sample_index) {
            Ok((simplified, detailed)) => {
                if simplified.is_empty() || detailed.is_empty() {
                    violation = "empty rewrite output".into();
                } else if simplified == detailed {
                    violation = format!("simplified equals detailed: {simplified:?}");
                } else {
                    return Ok((simplified, detailed));
                }
            }
            Err(ProviderError::ContractViolation(msg)) => violation = msg,
            Err(other) => return Err(other),
        }
    }
    Err(ProviderError::ContractViolation(violation))
}

/// The four capabilities wired for one run. Capabilities may come from
/// different backends (e.g. file-backed captions with mock embeddings).
#[derive(Clone)]
pub struct ProviderSet {
    pub rewriter: Arc<dyn QueryRewriter>,
    pub captioner: Arc<dyn FrameCaptioner>,
    pub embedder: Arc<dyn TextEmbedder>,
    pub similarity: Arc<dyn FrameSimilarity>,
    /// Optional LLM guidance extraction; the heuristic fallback runs when absent.
    pub guidance: Option<Arc<dyn crate::rewrite::GuidanceExtractor>>,
}

impl ProviderSet {
    /// Builds all four capabilities from one spec.
    pub fn from_spec(spec: &ProviderSpec) -> Result<Self, crate::Error> {
        spec.validate()?;
        match spec.kind {
            ProviderKind::Mock => {
                let mut mock = MockProvider::new(spec.seed.unwrap_or(0));
                if let Some(path) = &spec.caption_script {
                    mock = mock.with_caption_script_file(path)?;
                }
                let p = Arc::new(mock);
                Ok(Self {
                    rewriter: p.clone(),
                    captioner: p.clone(),
                    embedder: p.clone(),
                    similarity: p,
                    guidance: None,
                })
            }
            ProviderKind::FileBacked => {
                let p = Arc::new(FileBackedProvider::open(
                    spec.cache_dir.as_ref().expect("validated"),
                )?);
                Ok(Self {
                    rewriter: p.clone(),
                    captioner: p.clone(),
                    embedder: p.clone(),
                    similarity: p,
                    guidance: None,
                })
            }
            ProviderKind::Http => {
                #[cfg(feature = "http")]
                {
                    let p = Arc::new(HttpProvider::from_spec(spec)?);
                    Ok(Self {
                        rewriter: p.clone(),
                        captioner: p.clone(),
                        embedder: p.clone(),
                        similarity: p.clone(),
                        guidance: Some(p),
                    })
                }
                #[cfg(not(feature = "http"))]
                Err(crate::Error::InvalidConfig(
                    "built without the `http` feature".into(),
                ))
            }
        }
    }
}
