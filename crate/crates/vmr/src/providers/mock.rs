//! Deterministic mock backend. Every operation is a pure function of
//! (seed, inputs), so pipelines built on it are reproducible across process
//! restarts and platforms.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::core::text;
use crate::core::Query;
use crate::providers::{
    Caption, Embedding, FrameCaptioner, FrameSimilarity, ProviderError, QueryRewriter, TextEmbedder,
};
use crate::rewrite::SemanticGuidance;

pub const MOCK_EMBED_DIM: usize = 64;

/// Planted caption tokens for a frame range of one video; lets fixtures put
/// known content at known positions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptionScriptRule {
    pub video_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub tokens: String,
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
    script: Vec<CaptionScriptRule>,
}

/// FNV-1a over length-delimited parts, so ("ab","c") and ("a","bc") differ.
fn fnv1a(parts: &[&[u8]]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for part in parts {
        for &b in part.iter() {
            h = (h ^ b as u64).wrapping_mul(PRIME);
        }
        h = (h ^ 0xff).wrapping_mul(PRIME);
    }
    h
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            script: Vec::new(),
        }
    }

    pub fn with_caption_script(mut self, rules: Vec<CaptionScriptRule>) -> Self {
        self.script = rules;
        self
    }

    pub fn with_caption_script_file(self, path: &Path) -> crate::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let rules: Vec<CaptionScriptRule> = serde_json::from_str(&raw)?;
        Ok(self.with_caption_script(rules))
    }

    fn hash(&self, tag: &str, parts: &[&[u8]]) -> u64 {
        let seed = self.seed.to_le_bytes();
        let mut all: Vec<&[u8]> = vec![&seed, tag.as_bytes()];
        all.extend_from_slice(parts);
        fnv1a(&all)
    }

    fn agnostic_text(&self, video_id: &str, frame_index: usize) -> String {
        let planted = self.script.iter().find(|r| {
            r.video_id == video_id && r.start_frame <= frame_index && frame_index <= r.end_frame
        });
        let tokens = match planted {
            Some(rule) => rule.tokens.clone(),
            None => {
                let h = self.hash("cap", &[video_id.as_bytes(), &frame_index.to_le_bytes()]);
                format!("tok{:04x} tok{:04x}", h & 0xffff, (h >> 16) & 0xffff)
            }
        };
        format!("frame {video_id}:{frame_index} {tokens}")
    }
}

impl QueryRewriter for MockProvider {
    /// Simplified = first 6 tokens, lowercased, stopwords removed;
    /// detailed = the original text verbatim. Ignores the pair and sample
    /// indices, so repeated samples collapse to one pair downstream.
    fn rewrite(
        &self,
        query: &Query,
        _instruction_pair_id: usize,
        _sample_index: usize,
    ) -> Result<(String, String), ProviderError> {
        let simplified = text::tokenize(&query.text)
            .take(6)
            .map(|t| t.to_lowercase())
            .filter(|t| !text::is_stopword(t))
            .collect::<Vec<_>>()
            .join(" ");
        Ok((simplified, query.text.clone()))
    }
}

impl FrameCaptioner for MockProvider {
    fn caption_frame(
        &self,
        video_id: &str,
        frame_index: usize,
        guidance: Option<&SemanticGuidance>,
    ) -> Result<Caption, ProviderError> {
        let base = self.agnostic_text(video_id, frame_index);
        match guidance {
            None => Caption::agnostic(base),
            Some(g) => {
                // appending the guidance tokens makes aware captions strictly
                // closer to on-topic queries than their agnostic base
                let mut t = base;
                for tok in g.entities.iter().chain(g.actions.iter()) {
                    t.push(' ');
                    t.push_str(tok);
                }
                Caption::aware(t, g.fingerprint())
            }
        }
    }
}

impl TextEmbedder for MockProvider {
    /// Bag-of-tokens scheme: each non-stopword whitespace token hashes to a
    /// signed basis direction in a 64-dim space; the sum is L2-normalized.
    /// An all-stopword or empty accumulation falls back to e_0.
    fn embed(&self, text: &str) -> Result<Embedding, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::ContractViolation(
                "cannot embed empty text".into(),
            ));
        }
        let mut acc = vec![0.0f64; MOCK_EMBED_DIM];
        for token in text::tokenize(text).filter(|t| !text::is_stopword(t)) {
            let h = self.hash("emb", &[token.as_bytes()]);
            let idx = (h % MOCK_EMBED_DIM as u64) as usize;
            let sign = if (h >> 8) & 1 == 0 { 1.0 } else { -1.0 };
            acc[idx] += sign;
        }
        let norm_sq: f64 = acc.iter().map(|x| x * x).sum();
        if norm_sq < 1e-12 {
            acc = vec![0.0; MOCK_EMBED_DIM];
            acc[0] = 1.0;
            return Embedding::new(acc);
        }
        Embedding::from_unnormalized(acc)
    }
}

impl FrameSimilarity for MockProvider {
    /// Cosine of the mock embeddings of the query and the frame's agnostic
    /// caption text.
    fn frame_query_similarity(
        &self,
        video_id: &str,
        frame_index: usize,
        query_text: &str,
    ) -> Result<f64, ProviderError> {
        let q = self.embed(query_text)?;
        let c = self.embed(&self.agnostic_text(video_id, frame_index))?;
        Ok(q.vector().iter().zip(c.vector()).map(|(a, b)| a * b).sum())
    }
}
