//! Content-addressed response cache: one JSON file per request key.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionRequest, GenerationRecord, ProviderError, ProviderSpec, SamplingParams};

const CACHE_VERSION: u32 = 1;

#[derive(Serialize)]
struct KeyMaterial<'a> {
    prompt: String,
    follow_ups: &'a [super::FollowUp],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    seed: Option<u64>,
    provider: String,
    generation: u32,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    version: u32,
    key: String,
    record: GenerationRecord,
}

pub enum CacheLookup {
    Hit(GenerationRecord),
    Miss,
    Corrupt(String),
}

/// Hex SHA-256 over the prompt text, follow-ups, sampling fields, provider
/// label and generation index.
pub fn cache_key(
    request: CompletionRequest<'_>,
    sampling: &SamplingParams,
    provider: &ProviderSpec,
) -> String {
    let material = KeyMaterial {
        prompt: request.prompt.text(),
        follow_ups: request.follow_ups,
        temperature: sampling.temperature,
        top_p: sampling.top_p,
        max_tokens: sampling.max_tokens,
        seed: sampling.seed,
        provider: provider.label(),
        generation: request.generation,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub(super) fn lookup(dir: &Path, key: &str) -> CacheLookup {
    let path = dir.join(format!("{key}.json"));
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return CacheLookup::Miss,
        Err(e) => return CacheLookup::Corrupt(e.to_string()),
    };
    match serde_json::from_str::<CacheEntry>(&text) {
        Ok(entry) if entry.version == CACHE_VERSION && entry.key == key => {
            CacheLookup::Hit(entry.record)
        }
        Ok(_) => CacheLookup::Corrupt("version or key mismatch".into()),
        Err(e) => CacheLookup::Corrupt(e.to_string()),
    }
}

pub(super) fn store(dir: &Path, key: &str, record: &GenerationRecord) -> Result<(), ProviderError> {
    let io = |e: std::io::Error| ProviderError::CacheIo(e.to_string());
    std::fs::create_dir_all(dir).map_err(io)?;
    let entry = CacheEntry {
        version: CACHE_VERSION,
        key: key.to_string(),
        record: GenerationRecord {
            cache_hit: false,
            ..record.clone()
        },
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    serde_json::to_writer(&mut tmp, &entry).map_err(|e| ProviderError::CacheIo(e.to_string()))?;
    tmp.flush().map_err(io)?;
    tmp.persist(dir.join(format!("{key}.json")))
        .map_err(|e| io(e.error))?;
    Ok(())
}
