//! HTTP backend speaking the OpenAI-compatible `/v1/chat/completions` and
//! `/v1/embeddings` APIs, which most local model servers expose. Frames are
//! passed by reference (`frame://<video_id>/<frame_index>`) for the serving
//! side to resolve; this engine never decodes video.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::core::Query;
use crate::providers::{
    Caption, Embedding, FrameCaptioner, FrameSimilarity, ProviderError, ProviderSpec,
    QueryRewriter, TextEmbedder,
};
use crate::rewrite::{instruction_pair, GrammarChecker, GuidanceExtractor, SemanticGuidance};

const DEFAULT_MAX_IN_FLIGHT: usize = 8;

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl InFlight {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpProvider {
    client: reqwest::blocking::Client,
    base: String,
    model: String,
    bearer: Option<String>,
    in_flight: InFlight,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingsDatum>,
}

#[derive(Deserialize)]
struct EmbeddingsDatum {
    embedding: Vec<f64>,
}

impl HttpProvider {
    pub fn from_spec(spec: &ProviderSpec) -> crate::Result<Self> {
        spec.validate()?;
        let endpoint = spec.endpoint.as_ref().expect("validated");
        let bearer = match &spec.auth_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                crate::Error::InvalidConfig(format!("auth env var {var} is not set"))
            })?),
            None => None,
        };
        Ok(Self::new(
            endpoint,
            spec.model_name.as_deref().unwrap_or("default"),
            bearer,
            spec.max_in_flight.unwrap_or(DEFAULT_MAX_IN_FLIGHT),
        ))
    }

    pub fn new(endpoint: &str, model: &str, bearer: Option<String>, max_in_flight: usize) -> Self {
        Self {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("client construction cannot fail with static options"),
            base: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            bearer,
            in_flight: InFlight::new(max_in_flight.max(1)),
        }
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<String, ProviderError> {
        let _permit = self.in_flight.acquire();
        let mut req = self.client.post(format!("{}{path}", self.base)).json(&body);
        if let Some(token) = &self.bearer {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| ProviderError::RemoteUnavailable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ProviderError::RemoteUnavailable(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::RemoteUnavailable(format!(
                "{path} returned {status}: {}",
                text.chars().take(200).collect::<String>()
            )));
        }
        Ok(text)
    }

    fn chat(&self, messages: serde_json::Value) -> Result<String, ProviderError> {
        let body = json!({ "model": self.model, "messages": messages });
        let raw = self.post("/v1/chat/completions", body)?;
        let parsed: ChatResponse = serde_json::from_str(&raw)
            .map_err(|e| ProviderError::ContractViolation(format!("chat response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::ContractViolation("chat response had no choices".into()))
    }

    /// Strips a leading/trailing markdown code fence, which chat models like
    /// to wrap JSON in.
    fn strip_fences(content: &str) -> &str {
        let t = content.trim();
        let t = t
            .strip_prefix("```json")
            .or_else(|| t.strip_prefix("```"))
            .unwrap_or(t);
        t.strip_suffix("```").unwrap_or(t).trim()
    }
}

impl QueryRewriter for HttpProvider {
    fn rewrite(
        &self,
        query: &Query,
        instruction_pair_id: usize,
        sample_index: usize,
    ) -> Result<(String, String), ProviderError> {
        let pair = instruction_pair(instruction_pair_id).ok_or_else(|| {
            ProviderError::ContractViolation(format!(
                "unknown instruction pair {instruction_pair_id}"
            ))
        })?;
        let prompt = format!(
            "You rewrite video search queries at two levels of semantic granularity.\n\
             Simplified rewrite instruction: {}\n\
             Detailed rewrite instruction: {}\n\
             Query: {}\n\
             Produce variation #{} of the rewrites.\n\
             Reply with only a JSON object: {{\"simplified\": \"...\", \"detailed\": \"...\"}}",
            pair.simplified, pair.detailed, query.text, sample_index
        );
        let content = self.chat(json!([{ "role": "user", "content": prompt }]))?;

        #[derive(Deserialize)]
        struct RewriteReply {
            simplified: String,
            detailed: String,
        }
        let reply: RewriteReply = serde_json::from_str(Self::strip_fences(&content))
            .map_err(|e| ProviderError::ContractViolation(format!("rewrite reply: {e}")))?;
        Ok((reply.simplified, reply.detailed))
    }
}

impl FrameCaptioner for HttpProvider {
    fn caption_frame(
        &self,
        video_id: &str,
        frame_index: usize,
        guidance: Option<&SemanticGuidance>,
    ) -> Result<Caption, ProviderError> {
        let prompt = match guidance {
            None => "Describe this video frame in one factual sentence.".to_string(),
            Some(g) => format!(
                "Describe this video frame in one factual sentence. If present, focus on \
                 these entities: {}; and these actions: {}.",
                g.entities.join(", "),
                g.actions.join(", ")
            ),
        };
        let messages = json!([{
            "role": "user",
            "content": [
                { "type": "text", "text": prompt },
                { "type": "image_url",
                  "image_url": { "url": format!("frame://{video_id}/{frame_index}") } },
            ]
        }]);
        let text = self.chat(messages)?;
        match guidance {
            None => Caption::agnostic(text),
            Some(g) => Caption::aware(text, g.fingerprint()),
        }
    }
}

impl TextEmbedder for HttpProvider {
    fn embed(&self, text: &str) -> Result<Embedding, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::ContractViolation(
                "cannot embed empty text".into(),
            ));
        }
        let body = json!({ "model": self.model, "input": [text] });
        let raw = self.post("/v1/embeddings", body)?;
        let parsed: EmbeddingsResponse = serde_json::from_str(&raw)
            .map_err(|e| ProviderError::ContractViolation(format!("embeddings response: {e}")))?;
        let vector = parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| ProviderError::ContractViolation("embeddings response empty".into()))?;
        // servers return unnormalized vectors; the contract wants unit norm
        Embedding::from_unnormalized(vector)
    }
}

impl FrameSimilarity for HttpProvider {
    /// Embedding cosine between the query and the frame's agnostic caption.
    /// OpenAI-compatible servers expose no image-similarity endpoint, so
    /// production CLIP scores are expected to arrive via the file-backed
    /// cache instead.
    fn frame_query_similarity(
        &self,
        video_id: &str,
        frame_index: usize,
        query_text: &str,
    ) -> Result<f64, ProviderError> {
        let caption = self.caption_frame(video_id, frame_index, None)?;
        let q = self.embed(query_text)?;
        let c = self.embed(&caption.text)?;
        Ok(q.vector().iter().zip(c.vector()).map(|(a, b)| a * b).sum())
    }
}

impl GuidanceExtractor for HttpProvider {
    fn extract(&self, query: &Query) -> Result<SemanticGuidance, ProviderError> {
        let prompt = format!(
            "Extract the key entities and actions from this video search query, using only \
             words that appear in it.\nQuery: {}\n\
             Reply with only a JSON object: {{\"entities\": [\"...\"], \"actions\": [\"...\"]}}",
            query.text
        );
        let content = self.chat(json!([{ "role": "user", "content": prompt }]))?;

        #[derive(Deserialize)]
        struct GuidanceReply {
            entities: Vec<String>,
            actions: Vec<String>,
        }
        let reply: GuidanceReply = serde_json::from_str(Self::strip_fences(&content))
            .map_err(|e| ProviderError::ContractViolation(format!("guidance reply: {e}")))?;
        SemanticGuidance::new(reply.entities, reply.actions)
            .map_err(|e| ProviderError::ContractViolation(e.to_string()))
    }
}

impl GrammarChecker for HttpProvider {
    fn has_grammar_errors(&self, text: &str) -> Result<bool, ProviderError> {
        let prompt = format!(
            "Does this sentence contain grammatical errors? Reply with only \"yes\" or \
             \"no\".\nSentence: {text}"
        );
        let content = self.chat(json!([{ "role": "user", "content": prompt }]))?;
        Ok(content.trim().to_lowercase().starts_with("yes"))
    }
}
