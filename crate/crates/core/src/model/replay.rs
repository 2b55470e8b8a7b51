use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{apply_stop, GenParams, Model, ModelError};

/// One line of a replay fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt_sha256: String,
    pub index: u64,
    pub temperature: f64,
    pub response: String,
}

impl FixtureEntry {
    pub fn new(prompt: &str, index: u64, temperature: f64, response: impl Into<String>) -> Self {
        Self {
            prompt_sha256: hex::encode(Sha256::digest(prompt.as_bytes())),
            index,
            temperature,
            response: response.into(),
        }
    }
}

type Key = (String, u64, u32);

fn bucket(temperature: f64) -> u32 {
    (temperature * 10.0).round().max(0.0) as u32
}

fn key(sha: &str, index: u64, temperature: f64) -> Key {
    let b = bucket(temperature);
    (sha.to_string(), if b == 0 { 0 } else { index }, b)
}

/// Human-readable lookup key: `sha256/index/T`.
pub fn fixture_key(prompt: &str, index: u64, temperature: f64) -> String {
    let (sha, idx, b) = key(&hex::encode(Sha256::digest(prompt.as_bytes())), index, temperature);
    format!("{sha}/{idx}/T{:.1}", b as f64 / 10.0)
}

/// Deterministic responses looked up by (prompt hash, sample index,
/// temperature rounded to 0.1). At temperature 0 every sample maps to
/// index 0.
#[derive(Debug, Clone, Default)]
pub struct ReplayModel {
    entries: HashMap<Key, String>,
}

impl ReplayModel {
    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let entries = entries
            .into_iter()
            .map(|e| (key(&e.prompt_sha256, e.index, e.temperature), e.response))
            .collect();
        Self { entries }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ModelError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(line).map_err(|e| ModelError::Fixture {
                path: origin.to_string(),
                message: format!("line {}: {e}", i + 1),
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Fixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Model for ReplayModel {
    fn name(&self) -> &str {
        "replay"
    }

    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ModelError> {
        params.validate()?;
        let sha = hex::encode(Sha256::digest(prompt.as_bytes()));
        (0..params.n_samples as u64)
            .map(|i| {
                let index = params.first_sample_index + i;
                self.entries
                    .get(&key(&sha, index, params.temperature))
                    .map(|r| apply_stop(r, params))
                    .ok_or_else(|| ModelError::FixtureMiss {
                        key: fixture_key(prompt, index, params.temperature),
                    })
            })
            .collect()
    }
}

/// Passes calls through and remembers every response as a fixture entry.
pub struct RecordingModel<M> {
    inner: M,
    entries: Mutex<Vec<FixtureEntry>>,
}

impl<M: Model> RecordingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<FixtureEntry> {
        self.entries.lock().expect("recording lock").clone()
    }

    /// Writes the recorded entries as JSON lines, sorted by key so that the
    /// file does not depend on the order in which calls completed.
    pub fn write_fixture(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut entries = self.entries();
        entries.sort_by(|a, b| {
            (&a.prompt_sha256, a.index, a.temperature.to_bits(), &a.response)
                .cmp(&(&b.prompt_sha256, b.index, b.temperature.to_bits(), &b.response))
        });
        entries.dedup();
        for e in entries {
            serde_json::to_writer(&mut out, &e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl<M: Model> Model for RecordingModel<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ModelError> {
        let out = self.inner.generate(prompt, params)?;
        let mut entries = self.entries.lock().expect("recording lock");
        for (i, r) in out.iter().enumerate() {
            entries.push(FixtureEntry::new(prompt, params.first_sample_index + i as u64, params.temperature, r.clone()));
        }
        Ok(out)
    }
}
