//! Output directories, overwrite protection and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Machine-readable record written next to every command's outputs, also
/// when the command fails.
#[derive(Debug, Default, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub ok: bool,
    pub scenario: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
    pub analyses: Vec<String>,
    pub figure_formats: Vec<String>,
    pub files: Vec<FileEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSummary>,
    pub errors: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub tags: u64,
    pub drops: u64,
    pub crosstalk_spawned: u64,
    pub sync_channel: Option<u16>,
    pub channels: Vec<ChannelRate>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ChannelRate {
    pub channel: u16,
    pub count: u64,
    pub rate_cps: f64,
}

pub const MANIFEST: &str = "manifest.json";

/// An output directory whose files are checked for clobbering up front.
pub struct OutDir {
    pub path: PathBuf,
    force: bool,
}

impl OutDir {
    /// Create `path` and make sure none of `names` (plus the manifest)
    /// already exist there unless `force` is set.
    pub fn prepare(path: PathBuf, names: &[&str], force: bool) -> Result<Self> {
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        if !force {
            let clash: Vec<&str> =
                names.iter().copied().chain([MANIFEST]).filter(|n| path.join(n).exists()).collect();
            if !clash.is_empty() {
                bail!("{} already contains {}; pass --force to overwrite", path.display(), clash.join(", "));
            }
        }
        Ok(Self { path, force })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Write `bytes` to `name`, refusing to clobber files created outside
    /// this run unless forced.
    pub fn write(&self, manifest: &mut RunManifest, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.file(name);
        if !self.force && p.exists() && !manifest.files.iter().any(|f| f.name == name) {
            bail!("{} exists; pass --force to overwrite", p.display());
        }
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        manifest.record(name, bytes);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, manifest: &mut RunManifest, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(manifest, name, text.as_bytes())
    }

    pub fn finish(&self, manifest: &RunManifest) -> Result<()> {
        let mut text = serde_json::to_string_pretty(manifest)?;
        text.push('\n');
        fs::write(self.file(MANIFEST), text).with_context(|| format!("writing {}", self.file(MANIFEST).display()))
    }
}

impl RunManifest {
    pub fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry { name: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
    }

    /// Record a file written directly to disk by another component.
    pub fn record_file(&mut self, dir: &OutDir, name: &str) -> Result<()> {
        let p = dir.file(name);
        let bytes = fs::metadata(&p)?.len();
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry { name: name.into(), sha256: sha256_file(&p)?, bytes });
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h)?;
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
