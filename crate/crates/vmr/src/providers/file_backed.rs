//! Cache-backed provider: serves captions, embeddings, frame similarities,
//! and rewrites from JSON-lines files produced offline. Lookups that miss
//! return [`ProviderError::CacheMiss`]; nothing is fetched.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::core::Query;
use crate::providers::{
    Caption, CaptionMode, Embedding, FrameCaptioner, FrameSimilarity, ProviderError, QueryRewriter,
    TextEmbedder,
};
use crate::rewrite::SemanticGuidance;
use crate::{Error, Result};

pub const CAPTIONS_FILE: &str = "captions.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const SIMILARITY_FILE: &str = "frame_similarity.jsonl";
pub const REWRITES_FILE: &str = "rewrites.jsonl";

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub video_id: String,
    pub frame_index: usize,
    pub mode: CaptionMode,
    pub guidance_fingerprint: Option<String>,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingRecord {
    text_sha256: String,
    vector: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SimilarityRecord {
    video_id: String,
    frame_index: usize,
    query_sha256: String,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RewriteRecord {
    query_sha256: String,
    instruction_pair_id: usize,
    sample_index: usize,
    simplified: String,
    detailed: String,
}

type CaptionKey = (String, usize, CaptionMode, Option<String>);

/// Read-only provider over a cache directory. All files are loaded up front;
/// lookups after that are lock-free map reads.
#[derive(Debug)]
pub struct FileBackedProvider {
    captions: HashMap<CaptionKey, String>,
    embeddings: HashMap<String, Vec<f64>>,
    similarities: HashMap<(String, usize, String), f64>,
    rewrites: HashMap<(String, usize, usize), (String, String)>,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    if !path.exists() {
        return Ok(out);
    }
    let reader = BufReader::new(File::open(path)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: format!("{}: {e}", path.display()),
        })?;
        out.push(rec);
    }
    Ok(out)
}

impl FileBackedProvider {
    pub fn open(cache_dir: &Path) -> Result<Self> {
        let captions = read_jsonl::<CaptionRecord>(&cache_dir.join(CAPTIONS_FILE))?
            .into_iter()
            .map(|r| {
                (
                    (r.video_id, r.frame_index, r.mode, r.guidance_fingerprint),
                    r.text,
                )
            })
            .collect();
        let embeddings = read_jsonl::<EmbeddingRecord>(&cache_dir.join(EMBEDDINGS_FILE))?
            .into_iter()
            .map(|r| (r.text_sha256, r.vector))
            .collect();
        let similarities = read_jsonl::<SimilarityRecord>(&cache_dir.join(SIMILARITY_FILE))?
            .into_iter()
            .map(|r| ((r.video_id, r.frame_index, r.query_sha256), r.score))
            .collect();
        let rewrites = read_jsonl::<RewriteRecord>(&cache_dir.join(REWRITES_FILE))?
            .into_iter()
            .map(|r| {
                (
                    (r.query_sha256, r.instruction_pair_id, r.sample_index),
                    (r.simplified, r.detailed),
                )
            })
            .collect();
        Ok(Self {
            captions,
            embeddings,
            similarities,
            rewrites,
        })
    }
}

impl QueryRewriter for FileBackedProvider {
    fn rewrite(
        &self,
        query: &Query,
        instruction_pair_id: usize,
        sample_index: usize,
    ) -> std::result::Result<(String, String), ProviderError> {
        let key = (sha256_hex(&query.text), instruction_pair_id, sample_index);
        self.rewrites.get(&key).cloned().ok_or_else(|| {
            ProviderError::CacheMiss(format!(
                "rewrite of query {} (pair {instruction_pair_id}, sample {sample_index})",
                query.id
            ))
        })
    }
}

impl FrameCaptioner for FileBackedProvider {
    fn caption_frame(
        &self,
        video_id: &str,
        frame_index: usize,
        guidance: Option<&SemanticGuidance>,
    ) -> std::result::Result<Caption, ProviderError> {
        let (mode, fp) = match guidance {
            None => (CaptionMode::Agnostic, None),
            Some(g) => (CaptionMode::Aware, Some(g.fingerprint())),
        };
        let key = (video_id.to_string(), frame_index, mode, fp.clone());
        let text = self.captions.get(&key).cloned().ok_or_else(|| {
            ProviderError::CacheMiss(format!("caption for {video_id}:{frame_index} ({mode:?})"))
        })?;
        match fp {
            None => Caption::agnostic(text),
            Some(fp) => Caption::aware(text, fp),
        }
    }
}

impl TextEmbedder for FileBackedProvider {
    fn embed(&self, text: &str) -> std::result::Result<Embedding, ProviderError> {
        let key = sha256_hex(text);
        let vector = self
            .embeddings
            .get(&key)
            .cloned()
            .ok_or_else(|| ProviderError::CacheMiss(format!("embedding for sha256 {key}")))?;
        Embedding::new(vector)
    }
}

impl FrameSimilarity for FileBackedProvider {
    fn frame_query_similarity(
        &self,
        video_id: &str,
        frame_index: usize,
        query_text: &str,
    ) -> std::result::Result<f64, ProviderError> {
        let key = (video_id.to_string(), frame_index, sha256_hex(query_text));
        self.similarities.get(&key).copied().ok_or_else(|| {
            ProviderError::CacheMiss(format!("similarity for {video_id}:{frame_index}"))
        })
    }
}

/// Write-through caption cache around any captioner: hits are served from
/// `captions.jsonl` in the cache directory, misses go to the inner provider
/// and are appended. Used by the `precaption` stage and by cached runs.
pub struct CachingCaptioner {
    inner: Arc<dyn FrameCaptioner>,
    mem: RwLock<HashMap<CaptionKey, Caption>>,
    file: Mutex<File>,
    path: PathBuf,
}

impl CachingCaptioner {
    pub fn open(cache_dir: &Path, inner: Arc<dyn FrameCaptioner>) -> Result<Self> {
        std::fs::create_dir_all(cache_dir)?;
        let path = cache_dir.join(CAPTIONS_FILE);
        let mut mem = HashMap::new();
        for r in read_jsonl::<CaptionRecord>(&path)? {
            let caption = match &r.guidance_fingerprint {
                None => Caption::agnostic(r.text.clone()),
                Some(fp) => Caption::aware(r.text.clone(), fp.clone()),
            }
            .map_err(Error::Provider)?;
            mem.insert(
                (r.video_id, r.frame_index, r.mode, r.guidance_fingerprint),
                caption,
            );
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            inner,
            mem: RwLock::new(mem),
            file: Mutex::new(file),
            path,
        })
    }

    pub fn cache_path(&self) -> &Path {
        &self.path
    }

    /// Number of cached captions currently held.
    pub fn len(&self) -> usize {
        self.mem.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FrameCaptioner for CachingCaptioner {
    fn caption_frame(
        &self,
        video_id: &str,
        frame_index: usize,
        guidance: Option<&SemanticGuidance>,
    ) -> std::result::Result<Caption, ProviderError> {
        let (mode, fp) = match guidance {
            None => (CaptionMode::Agnostic, None),
            Some(g) => (CaptionMode::Aware, Some(g.fingerprint())),
        };
        let key = (video_id.to_string(), frame_index, mode, fp);
        if let Some(hit) = self.mem.read().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let caption = self.inner.caption_frame(video_id, frame_index, guidance)?;
        let record = CaptionRecord {
            video_id: key.0.clone(),
            frame_index,
            mode,
            guidance_fingerprint: caption.guidance_fingerprint.clone(),
            text: caption.text.clone(),
        };
        {
            let mut file = self.file.lock().unwrap();
            let line = serde_json::to_string(&record)
                .map_err(|e| ProviderError::ContractViolation(e.to_string()))?;
            writeln!(file, "{line}")
                .map_err(|e| ProviderError::ContractViolation(format!("cache write: {e}")))?;
        }
        self.mem.write().unwrap().insert(key, caption.clone());
        Ok(caption)
    }
}
