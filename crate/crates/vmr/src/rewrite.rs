//! Granularity-based query rewriting, semantic-guidance extraction, and the
//! query-type taxonomy used for the per-type evaluation breakdown.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::core::{text, PipelineConfig, Query};
use crate::providers::{rewrite_checked, ProviderError, QueryRewriter};
use crate::{Error, Result};

/// One (simplified, detailed) reformulation of a query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RewrittenQueryPair {
    pub simplified: String,
    pub detailed: String,
}

impl RewrittenQueryPair {
    pub fn new(simplified: String, detailed: String) -> Result<Self> {
        if simplified.is_empty() || detailed.is_empty() || simplified == detailed {
            return Err(Error::Provider(ProviderError::ContractViolation(
                "rewrite pair must be non-empty and distinct".into(),
            )));
        }
        Ok(Self {
            simplified,
            detailed,
        })
    }
}

/// The original query with its rewritten pairs, ordered by sample index and
/// deduplicated. `m` is the effective pair count after deduplication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewriteSet {
    pub original: Query,
    pub pairs: Vec<RewrittenQueryPair>,
    pub m: usize,
}

/// Entities and actions pulled from a query; drives query-aware captioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGuidance {
    pub entities: Vec<String>,
    pub actions: Vec<String>,
}

impl SemanticGuidance {
    pub fn new(entities: Vec<String>, actions: Vec<String>) -> Result<Self> {
        if entities.is_empty() && actions.is_empty() {
            return Err(Error::InvalidConfig(
                "guidance needs at least one entity or action".into(),
            ));
        }
        Ok(Self { entities, actions })
    }

    /// Stable opaque hash of the guidance content; keys aware-caption caches.
    pub fn fingerprint(&self) -> String {
        let canon = format!(
            "e:{}|a:{}",
            self.entities.join(",").to_lowercase(),
            self.actions.join(",").to_lowercase()
        );
        let digest = Sha256::digest(canon.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryCategory {
    Simple,
    Detail,
    Else,
}

/// Length/proper-noun class of a query plus an independent grammar-error
/// flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryType {
    pub category: QueryCategory,
    pub error_flag: bool,
}

/// Optional LLM-backed guidance extraction; the heuristic fallback runs when
/// no extractor is configured or its output violates the guidance contract.
pub trait GuidanceExtractor: Send + Sync {
    fn extract(&self, query: &Query) -> std::result::Result<SemanticGuidance, ProviderError>;
}

/// Optional grammar-check capability for flagging Error-type queries.
pub trait GrammarChecker: Send + Sync {
    fn has_grammar_errors(&self, text: &str) -> std::result::Result<bool, ProviderError>;
}

/// A bundled rewriting instruction pair (simplified-side and detailed-side
/// prompts).
#[derive(Debug, Clone, Deserialize)]
pub struct InstructionPair {
    pub id: usize,
    pub simplified: String,
    pub detailed: String,
}

#[derive(Debug, Deserialize)]
struct InstructionSet {
    #[allow(dead_code)]
    version: u32,
    pairs: Vec<InstructionPair>,
}

static INSTRUCTIONS: OnceLock<Vec<InstructionPair>> = OnceLock::new();

/// The versioned instruction-pair asset shipped with the crate.
pub fn instruction_pairs() -> &'static [InstructionPair] {
    INSTRUCTIONS
        .get_or_init(|| {
            let raw = include_str!("../assets/instruction_pairs.json");
            let set: InstructionSet = serde_json::from_str(raw).expect("bundled asset is valid");
            set.pairs
        })
        .as_slice()
}

pub fn instruction_pair(id: usize) -> Option<&'static InstructionPair> {
    instruction_pairs().iter().find(|p| p.id == id)
}

/// Requests `cfg.num_rewrites` reformulations (sample indices ascending),
/// tolerating individual sample failures as long as at least one pair
/// survives, then deduplicates identical pairs.
pub fn generate_rewrites(
    query: &Query,
    cfg: &PipelineConfig,
    provider: &dyn QueryRewriter,
    instruction_pair_id: usize,
) -> Result<RewriteSet> {
    let mut pairs: Vec<RewrittenQueryPair> = Vec::new();
    let mut last_err = String::new();
    for sample_index in 0..cfg.num_rewrites {
        match rewrite_checked(provider, query, instruction_pair_id, sample_index) {
            Ok((simplified, detailed)) => {
                pairs.push(RewrittenQueryPair::new(simplified, detailed)?);
            }
            Err(e) => {
                log::warn!(
                    "rewrite sample {sample_index} failed for query {}: {e}",
                    query.id
                );
                last_err = e.to_string();
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::RewriteFailed {
            query_id: query.id.clone(),
            reason: last_err,
        });
    }
    let requested = pairs.len();
    let mut deduped: Vec<RewrittenQueryPair> = Vec::new();
    for p in pairs {
        if !deduped.contains(&p) {
            deduped.push(p);
        }
    }
    if deduped.len() < requested {
        log::warn!(
            "query {}: {} duplicate rewrite pairs removed, effective m={}",
            query.id,
            requested - deduped.len(),
            deduped.len()
        );
    }
    let m = deduped.len();
    Ok(RewriteSet {
        original: query.clone(),
        pairs: deduped,
        m,
    })
}

/// Extracts entities and actions from the query. With an extractor, its
/// output is validated against the guidance contract (items must occur in
/// the query, case-insensitively); otherwise a suffix heuristic runs:
/// tokens ending in "ing"/"ed" are actions, remaining non-stopword tokens
/// are entities.
pub fn extract_guidance(
    query: &Query,
    provider: Option<&dyn GuidanceExtractor>,
) -> Result<SemanticGuidance> {
    if let Some(p) = provider {
        match p.extract(query) {
            Ok(g) if guidance_matches_query(&g, &query.text) => return Ok(g),
            Ok(_) => log::warn!(
                "guidance extractor output for query {} not grounded in the query; using heuristic",
                query.id
            ),
            Err(e) => log::warn!(
                "guidance extractor failed for query {}: {e}; using heuristic",
                query.id
            ),
        }
    }

    let mut entities: Vec<String> = Vec::new();
    let mut actions: Vec<String> = Vec::new();
    for token in text::tokenize(&query.text) {
        let w = text::strip_edge_punct(token).to_lowercase();
        if w.is_empty() {
            continue;
        }
        if w.ends_with("ing") || w.ends_with("ed") {
            if !actions.contains(&w) {
                actions.push(w);
            }
        } else if !text::is_stopword(&w) && !entities.contains(&w) {
            entities.push(w);
        }
    }
    if entities.is_empty() && actions.is_empty() {
        return Err(Error::GuidanceEmpty {
            query_id: query.id.clone(),
        });
    }
    SemanticGuidance::new(entities, actions)
}

fn guidance_matches_query(g: &SemanticGuidance, query_text: &str) -> bool {
    let haystack = query_text.to_lowercase();
    let grounded = |item: &String| haystack.contains(&item.to_lowercase());
    (!g.entities.is_empty() || !g.actions.is_empty())
        && g.entities.iter().all(grounded)
        && g.actions.iter().all(grounded)
}

/// Classifies a query by token count, with a capitalization heuristic for
/// proper nouns. The length rule is applied first: a query of six tokens or
/// fewer is Simple even if it contains a proper noun.
pub fn classify_query(query: &Query) -> QueryType {
    classify_query_with(query, None)
}

pub fn classify_query_with(query: &Query, checker: Option<&dyn GrammarChecker>) -> QueryType {
    let n = query.word_count;
    let category = if n <= 6 {
        QueryCategory::Simple
    } else if n >= 20 || has_proper_noun(&query.text) {
        QueryCategory::Detail
    } else {
        QueryCategory::Else
    };
    let error_flag = match checker {
        Some(c) => c.has_grammar_errors(&query.text).unwrap_or_else(|e| {
            log::warn!("grammar check failed for query {}: {e}", query.id);
            false
        }),
        None => false,
    };
    QueryType {
        category,
        error_flag,
    }
}

const CAPITALIZED_ALLOWLIST: &[&str] = &[
    "a", "an", "the", "i", "he", "she", "it", "we", "they", "you", "his", "her", "their", "my",
    "your", "our", "its",
];

/// A capitalized token that is not at a sentence start and not a common
/// article/pronoun counts as a proper noun.
fn has_proper_noun(text: &str) -> bool {
    let tokens: Vec<&str> = text::tokenize(text).collect();
    for (i, token) in tokens.iter().enumerate() {
        let sentence_start = i == 0
            || tokens[i - 1]
                .chars()
                .last()
                .is_some_and(|c| matches!(c, '.' | '!' | '?'));
        if sentence_start {
            continue;
        }
        let w = text::strip_edge_punct(token);
        let capitalized = w.chars().next().is_some_and(|c| c.is_uppercase());
        if capitalized && !CAPITALIZED_ALLOWLIST.contains(&w.to_lowercase().as_str()) {
            return true;
        }
    }
    false
}
