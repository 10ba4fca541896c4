//! Run configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gml_core::features::FeaturePlan;
use gml_core::inference::GmlConfig;
use gml_core::ingest::BlockingSpec;
use gml_core::pipeline::SimilaritySettings;
use gml_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub left: PathBuf,
    /// Absent for a single-table (deduplication) task.
    #[serde(default)]
    pub right: Option<PathBuf>,
    pub blocking: BlockingSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub features: FeaturePlan,
    #[serde(default)]
    pub similarity: SimilaritySettings,
    #[serde(default)]
    pub inference: GmlConfig,
    /// Output directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Worker threads; the default uses every core.
    #[serde(default)]
    pub workers: Option<usize>,
}

/// Flag values that win over the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Configuration file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Seed for the easy-instance clustering.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Candidates kept after ranking by evidential support.
    #[arg(long)]
    pub m: Option<usize>,
    /// Candidates given full inference per iteration.
    #[arg(long)]
    pub k: Option<usize>,
    /// Evidence cap per feature interval in a subgraph.
    #[arg(long)]
    pub delta: Option<usize>,
    /// Share of pairs labeled up front as easy instances.
    #[arg(long)]
    pub easy_ratio: Option<f64>,
    /// Output directory (default `gml-out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

impl RunConfig {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| usage(format!("{name}: {e}")))
    }

    /// Reads the file, applies the flags, makes every path absolute and validates.
    pub fn load(flags: &Overrides) -> Result<Self> {
        let path = &flags.config;
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::parse(&text, &path.display().to_string())?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        config.resolve_paths(&base)?;
        config.apply(flags);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, flags: &Overrides) {
        let inf = &mut self.inference;
        if let Some(v) = flags.seed {
            inf.seed = v;
        }
        if let Some(v) = flags.m {
            inf.m = v;
        }
        if let Some(v) = flags.k {
            inf.k = v;
        }
        if let Some(v) = flags.delta {
            inf.delta_cap = v;
        }
        if let Some(v) = flags.easy_ratio {
            inf.easy_ratio = v;
        }
        if let Some(v) = &flags.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = flags.workers {
            self.workers = Some(v);
        }
    }

    /// Data paths become absolute, relative ones taken from `base`; so does a relative
    /// output directory given in the file.
    fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        if let Some(out) = &self.out {
            self.out = Some(base.join(out));
        }
        let abs = |p: &Path| -> Result<PathBuf> {
            let joined = base.join(p);
            joined
                .canonicalize()
                .map_err(|e| usage(format!("data file {}: {e}", joined.display())))
        };
        let abs_str = |p: &str| -> Result<String> { Ok(abs(Path::new(p))?.display().to_string()) };
        self.data.left = abs(&self.data.left)?;
        if let Some(r) = &self.data.right {
            self.data.right = Some(abs(r)?);
        }
        match &mut self.data.blocking {
            BlockingSpec::Pairs { path } => *path = abs_str(path)?,
            BlockingSpec::Tokens { matches, .. } => {
                if let Some(m) = matches {
                    *m = abs_str(m)?;
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.inference.validate()?;
        if let Some(f) = self.similarity.match_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(usage(format!("match_fraction must lie in (0, 1), got {f}")));
            }
        }
        if self.workers == Some(0) {
            return Err(usage("workers must be at least 1"));
        }
        if self.features.attribute_metrics.is_empty() {
            return Err(usage("features.attribute_metrics is empty"));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("gml-out"))
    }

    /// Resolved settings that determine the results, as `# ` comment lines for artifacts.
    /// The output directory and worker count are left out: they do not change any result.
    pub fn echo(&self) -> Result<Vec<String>> {
        let mut shown = self.clone();
        shown.out = None;
        shown.workers = None;
        let text = toml::to_string(&shown).context("serializing the resolved config")?;
        Ok(text.lines().map(str::to_string).collect())
    }
}
