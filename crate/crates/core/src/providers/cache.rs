use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GenerationProvider, GenerationRequest, ProviderError};
use crate::util::sha256_hex;

/// On-disk response cache in front of a generation provider. Entries are
/// keyed by (provider id, model, system, user, seed, temperature), so a rerun
/// with the same inputs never reaches the provider.
pub struct CachedGenerator<G> {
    inner: G,
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    provider: String,
    model: String,
    text: String,
}

impl<G: GenerationProvider> CachedGenerator<G> {
    pub fn new(inner: G, dir: impl AsRef<Path>) -> Result<Self, ProviderError> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(CachedGenerator {
            inner,
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn key(&self, request: &GenerationRequest) -> String {
        let material = serde_json::json!([
            self.inner.provider_id(),
            self.inner.model(),
            request.system,
            request.user,
            request.seed,
            request.temperature,
        ]);
        sha256_hex(material.to_string().as_bytes())
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn inner(&self) -> &G {
        &self.inner
    }
}

impl<G: GenerationProvider> GenerationProvider for CachedGenerator<G> {
    fn provider_id(&self) -> String {
        self.inner.provider_id()
    }

    fn model(&self) -> String {
        self.inner.model()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        let path = self.path_for(&self.key(request));
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(entry) = serde_json::from_slice::<Entry>(&bytes) {
                return Ok(entry.text);
            }
        }
        let text = self.inner.generate(request)?;
        let entry = Entry {
            provider: self.inner.provider_id(),
            model: self.inner.model(),
            text: text.clone(),
        };
        // Write-then-rename so concurrent readers never see a partial entry.
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, serde_json::to_vec(&entry).expect("entry serializes"))?;
        std::fs::rename(&tmp, &path)?;
        Ok(text)
    }
}
