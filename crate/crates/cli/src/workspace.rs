//! Layout of the output root and the helpers every subcommand writes through.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ldwb_core::Representation;
use serde::Serialize;

/// A subcommand failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or configuration (exit 2).
    Usage(anyhow::Error),
    /// Missing, malformed or inconsistent data (exit 1).
    Data(anyhow::Error),
}

impl Failure {
    pub fn usage(message: impl fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{message}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Data(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

pub type Outcome = Result<(), Failure>;

pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

/// Paths of generated files under the output root.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }

    pub fn ingest_summary(&self) -> PathBuf {
        self.root.join("ingest.json")
    }

    pub fn split_dir(&self) -> PathBuf {
        self.root.join("split")
    }

    pub fn split_manifest(&self) -> PathBuf {
        self.split_dir().join("manifest.json")
    }

    pub fn parse_check(&self) -> PathBuf {
        self.root.join("parses").join("check.json")
    }

    pub fn knowledge(&self, repr: Representation) -> PathBuf {
        self.root.join("knowledge").join(format!("{}.jsonl", repr.name()))
    }

    pub fn inputs_dir(&self, repr: Representation, window: usize) -> PathBuf {
        self.root.join("inputs").join(format!("{}-w{window}", repr.name()))
    }

    pub fn subsets_dir(&self) -> PathBuf {
        self.root.join("subsets")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn attrib_dir(&self) -> PathBuf {
        self.root.join("attrib")
    }

    pub fn campaign_dir(&self) -> PathBuf {
        self.root.join("campaign")
    }

    pub fn campaign_file(&self) -> PathBuf {
        self.campaign_dir().join("campaign.json")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    text.push('\n');
    write_text(path, &text)
}

/// Runs a writer from the core library after creating the parent directory.
pub fn write_with(path: &Path, write: impl FnOnce(&Path) -> std::io::Result<()>) -> anyhow::Result<()> {
    ensure_parent(path)?;
    write(path).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// One id per line.
pub fn id_list(ids: &[String]) -> String {
    ids.iter().map(|id| format!("{id}\n")).collect()
}
