//! Workbench configuration: one TOML file, every section optional.
//!
//! Relative paths, including defaults, resolve against the file's directory.
//! `LDWB_*` environment variables override paths (and only paths); their
//! values resolve against the working directory.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use ldwb_core::attribution::{PositiveOptions, SharePooling, TokenScope};
use ldwb_core::corpus::{subset_chain, SplitFractions};
use ldwb_core::humaneval::CampaignConfig;
use ldwb_core::knowledge::{Layout, PsgOptions};
use ldwb_core::metrics::{BleuPooling, Smoothing};
use ldwb_core::Representation;
use serde::{Deserialize, Serialize};

pub const PATH_OVERRIDES: [(&str, PathField); 6] = [
    ("LDWB_CORPUS", PathField::Corpus),
    ("LDWB_PARSES", PathField::Parses),
    ("LDWB_OUTPUT", PathField::Output),
    ("LDWB_LAYOUT", PathField::Layout),
    ("LDWB_GOLD", PathField::Gold),
    ("LDWB_JOURNAL", PathField::Journal),
];

#[derive(Debug, Clone, Copy)]
pub enum PathField {
    Corpus,
    Parses,
    Output,
    Layout,
    Gold,
    Journal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: PathBuf,
    pub parses: PathBuf,
    /// Root directory for every generated file.
    pub output: PathBuf,
    /// TOML layout file; mutually exclusive with an inline `[layout]`.
    pub layout: Option<PathBuf>,
    /// Qualification items with gold votes (JSON array).
    pub gold: Option<PathBuf>,
    /// Judgment journal; defaults to `campaign/journal.jsonl` under the output root.
    pub journal: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "corpus.jsonl".into(),
            parses: "parses.conllu".into(),
            output: "out".into(),
            layout: None,
            gold: None,
            journal: None,
        }
    }
}

impl Paths {
    fn set(&mut self, field: PathField, value: PathBuf) {
        match field {
            PathField::Corpus => self.corpus = value,
            PathField::Parses => self.parses = value,
            PathField::Output => self.output = value,
            PathField::Layout => self.layout = Some(value),
            PathField::Gold => self.gold = Some(value),
            PathField::Journal => self.journal = Some(value),
        }
    }

    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.corpus, &mut self.parses, &mut self.output] {
            *p = base.join(&*p);
        }
        for p in [&mut self.layout, &mut self.gold, &mut self.journal].into_iter().flatten() {
            *p = base.join(&*p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let f = SplitFractions::default();
        Self {
            train: f.train,
            valid: f.valid,
            test: f.test,
            seed: 42,
        }
    }
}

impl SplitSection {
    pub fn fractions(&self) -> anyhow::Result<SplitFractions> {
        Ok(SplitFractions::new(self.train, self.valid, self.test)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    /// History window used when no profile is named.
    pub window: usize,
    /// Model profile name -> history window.
    pub profiles: BTreeMap<String, usize>,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            window: 2,
            profiles: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnowledgeSection {
    pub repr: Representation,
    pub psg: PsgOptions,
}

impl Default for KnowledgeSection {
    fn default() -> Self {
        Self {
            repr: Representation::LinearGraph,
            psg: PsgOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsetSection {
    pub fractions: Vec<f64>,
    pub seed: u64,
}

impl Default for SubsetSection {
    fn default() -> Self {
        Self {
            fractions: vec![0.25, 0.5, 0.75, 1.0],
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BleuSection {
    pub smoothing: Smoothing,
    pub pooling: BleuPooling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributionSection {
    pub top_fraction: f64,
    pub pooling: SharePooling,
    pub exclude_tags: bool,
    pub scope: TokenScope,
}

impl Default for AttributionSection {
    fn default() -> Self {
        let p = PositiveOptions::default();
        Self {
            top_fraction: 0.25,
            pooling: SharePooling::default(),
            exclude_tags: p.exclude_tags,
            scope: p.scope,
        }
    }
}

impl AttributionSection {
    pub fn positive(&self) -> PositiveOptions {
        PositiveOptions {
            exclude_tags: self.exclude_tags,
            scope: self.scope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    pub protocol: CampaignConfig,
    pub workers: Vec<String>,
    pub seed: u64,
    /// Histories drawn from the test split; 0 takes every eligible sample.
    pub histories: usize,
    pub bind: String,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self {
            protocol: CampaignConfig::default(),
            workers: Vec::new(),
            seed: 1,
            histories: 0,
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkbenchConfig {
    pub paths: Paths,
    pub split: SplitSection,
    pub samples: SampleSection,
    pub knowledge: KnowledgeSection,
    pub layout: Option<Layout>,
    pub subsets: SubsetSection,
    pub bleu: BleuSection,
    pub attribution: AttributionSection,
    pub campaign: CampaignSection,
}

impl WorkbenchConfig {
    /// Reads `file` (or starts from defaults), applies path overrides from
    /// `env`, loads the layout file and validates the result.
    pub fn load(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> anyhow::Result<Self> {
        let mut config = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let mut config: WorkbenchConfig =
                    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                config.paths.rebase(path.parent().unwrap_or(Path::new("")));
                config
            }
            None => WorkbenchConfig::default(),
        };
        for (var, field) in PATH_OVERRIDES {
            if let Some(value) = env(var).filter(|v| !v.is_empty()) {
                config.paths.set(field, value.into());
            }
        }
        if let Some(path) = &config.paths.layout {
            if config.layout.is_some() {
                bail!("a layout file and an inline [layout] table are mutually exclusive");
            }
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            config.layout = Some(toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.split.fractions().context("[split]")?;
        if self.samples.window == 0 {
            bail!("[samples] window must be at least 1");
        }
        if let Some((name, _)) = self.samples.profiles.iter().find(|(_, w)| **w == 0) {
            bail!("[samples.profiles] `{name}` window must be at least 1");
        }
        self.layout().validate().context("layout")?;
        subset_chain(&[], &self.subsets.fractions, 0).context("[subsets]")?;
        self.bleu.smoothing.validate().context("[bleu]")?;
        let top = self.attribution.top_fraction;
        if !(top > 0.0 && top <= 1.0) {
            bail!("[attribution] top_fraction must lie in (0, 1], got {top}");
        }
        self.campaign.protocol.validate().context("[campaign.protocol]")?;
        let mut seen = std::collections::HashSet::new();
        for w in &self.campaign.workers {
            if w.trim().is_empty() || !seen.insert(w) {
                bail!("[campaign] workers must be non-empty and unique (offending: `{w}`)");
            }
        }
        self.bind_addr()?;
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        self.layout.clone().unwrap_or_default()
    }

    pub fn bind_addr(&self) -> anyhow::Result<SocketAddr> {
        self.campaign
            .bind
            .parse()
            .map_err(|e| anyhow!("[campaign] bind `{}`: {e}", self.campaign.bind))
    }

    /// Window for a named profile, or the default window.
    pub fn window(&self, profile: Option<&str>) -> anyhow::Result<usize> {
        match profile {
            None => Ok(self.samples.window),
            Some(name) => self.samples.profiles.get(name).copied().ok_or_else(|| {
                let known: Vec<&str> = self.samples.profiles.keys().map(String::as_str).collect();
                anyhow!("unknown profile `{name}` (known: {})", known.join(", "))
            }),
        }
    }

    pub fn journal_path(&self) -> PathBuf {
        self.paths
            .journal
            .clone()
            .unwrap_or_else(|| self.paths.output.join("campaign").join("journal.jsonl"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn defaults_are_valid() {
        let config = WorkbenchConfig::load(None, no_env).unwrap();
        assert_eq!(config.samples.window, 2);
        assert_eq!(config.layout(), Layout::default());
        assert_eq!(config.attribution.top_fraction, 0.25);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for text in ["colour = 1\n", "[split]\ntrian = 0.8\n", "[campaign.protocol]\nraters = 3\n"] {
            let path = write(dir.path(), "c.toml", text);
            let err = WorkbenchConfig::load(Some(&path), no_env).unwrap_err();
            assert!(format!("{err:#}").contains("unknown field"), "{err:#}");
        }
    }

    #[test]
    fn relative_paths_follow_the_file_and_env_overrides_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "c.toml", "[paths]\ncorpus = \"data/c.jsonl\"\n");
        let config = WorkbenchConfig::load(Some(&path), no_env).unwrap();
        assert_eq!(config.paths.corpus, dir.path().join("data/c.jsonl"));
        let env = |k: &str| (k == "LDWB_CORPUS").then(|| "/x/other.jsonl".to_owned());
        let config = WorkbenchConfig::load(Some(&path), env).unwrap();
        assert_eq!(config.paths.corpus, PathBuf::from("/x/other.jsonl"));
        assert_eq!(config.journal_path(), dir.path().join("out/campaign/journal.jsonl"));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for (text, needle) in [
            ("[split]\ntrain = 0.9\n", "split"),
            ("[samples]\nwindow = 0\n", "window"),
            ("[subsets]\nfractions = [0.5, 0.25, 1.0]\n", "subsets"),
            ("[bleu.smoothing]\nkind = \"add_epsilon\"\nepsilon = 0.0\n", "bleu"),
            ("[attribution]\ntop_fraction = 1.5\n", "top_fraction"),
            ("[campaign]\nworkers = [\"a\", \"a\"]\n", "workers"),
            ("[campaign]\nbind = \"nowhere\"\n", "bind"),
            ("[layout]\nseparator = \"two words\"\n", "layout"),
        ] {
            let path = write(dir.path(), "c.toml", text);
            let err = WorkbenchConfig::load(Some(&path), no_env).unwrap_err();
            assert!(format!("{err:#}").contains(needle), "{text}: {err:#}");
        }
    }

    #[test]
    fn layout_file_and_inline_table_conflict() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "layout.toml", "separator = \"<sep>\"\n");
        let path = write(dir.path(), "c.toml", "[paths]\nlayout = \"layout.toml\"\n");
        let config = WorkbenchConfig::load(Some(&path), no_env).unwrap();
        assert_eq!(config.layout().separator, "<sep>");
        let path = write(
            dir.path(),
            "c.toml",
            "[paths]\nlayout = \"layout.toml\"\n[layout]\nseparator = \"<x>\"\n",
        );
        assert!(WorkbenchConfig::load(Some(&path), no_env).is_err());
    }

    #[test]
    fn profiles_pick_windows() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "c.toml", "[samples.profiles]\ngpt = 2\nt5 = 4\n");
        let config = WorkbenchConfig::load(Some(&path), no_env).unwrap();
        assert_eq!(config.window(Some("t5")).unwrap(), 4);
        assert_eq!(config.window(None).unwrap(), 2);
        assert!(config.window(Some("bert")).is_err());
    }
}
