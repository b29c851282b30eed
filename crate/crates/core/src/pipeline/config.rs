use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{AbsaBackend, CommandBackend, Lexicon, LexiconBackend, LlmBackend, MemoBackend};
use crate::data::{FieldOrder, ParseOptions, Task};
use crate::error::{Error, Result};
use crate::evaluation::InferenceOptions;
use crate::io::read_json;
use crate::preference::DpoConfig;
use crate::splitter::{SftConfig, TinyConfig};
use crate::synthetic::{self, SyntheticConfig};
use crate::teacher::{FilterConfig, PromptMode, RemoteClient, RemoteConfig, ReplayClient, TeacherClient};

/// One run, one file. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub run_dir: PathBuf,
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_task")]
    pub task: Task,
    pub data: DataConfig,
    #[serde(default)]
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub sft: SftConfig,
    #[serde(default)]
    pub tiny: TinyConfig,
    #[serde(default)]
    pub dpo: DpoConfig,
    #[serde(default)]
    pub backend: Option<BackendConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_seed() -> u64 {
    42
}

fn default_task() -> Task {
    Task::Asqp
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Newline-separated aspect category set to validate against.
    pub categories: Option<PathBuf>,
    /// Tuple element order such as `at,ac,sp,ot`; defaults per task.
    pub order: Option<String>,
    /// Generate a corpus instead of reading files.
    pub synthetic: Option<SyntheticData>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticData {
    #[serde(flatten)]
    pub corpus: SyntheticConfig,
    /// Trailing share of the generated corpus used as the test split.
    pub test_fraction: f64,
}

impl Default for SyntheticData {
    fn default() -> Self {
        SyntheticData { corpus: SyntheticConfig::default(), test_fraction: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    /// Offline rule-based teacher for the synthetic corpus.
    Synthetic,
    /// OpenAI-compatible endpoint.
    Remote,
    /// Cache only; misses fail.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    pub cache_dir: Option<PathBuf>,
    pub remote: RemoteConfig,
    pub k: usize,
    pub n_candidates: usize,
    pub temperature: f64,
    pub parallelism: usize,
    /// Few-shot demonstrations taken from the best zero-shot splits.
    pub demo_count: usize,
    /// Share of distillation examples held out for SFT validation.
    pub val_fraction: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        let f = FilterConfig::default();
        TeacherConfig {
            kind: TeacherKind::Synthetic,
            cache_dir: None,
            remote: RemoteConfig::default(),
            k: f.k,
            n_candidates: f.n_candidates,
            temperature: f.temperature,
            parallelism: 4,
            demo_count: 3,
            val_fraction: 0.1,
        }
    }
}

impl TeacherConfig {
    pub fn filter(&self) -> FilterConfig {
        FilterConfig { k: self.k, n_candidates: self.n_candidates, temperature: self.temperature }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Lexicon,
    Llm,
    Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// JSON lexicon file; the built-in restaurant lexicon when absent.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
    #[serde(default)]
    pub program: Option<String>,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub name: Option<String>,
}

impl BackendConfig {
    /// Display name for reports.
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match self.kind {
            BackendKind::Lexicon => "lexicon".into(),
            BackendKind::Llm => "llm".into(),
            BackendKind::Command => self.program.clone().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePool {
    ZeroShot,
    FewShot,
}

impl From<CandidatePool> for PromptMode {
    fn from(p: CandidatePool) -> Self {
        match p {
            CandidatePool::ZeroShot => PromptMode::ZeroShot,
            CandidatePool::FewShot => PromptMode::FewShot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    #[serde(flatten)]
    pub inference: InferenceOptions,
    /// Beam width for dispreferred candidates.
    pub preference_beams: usize,
    pub oracle_max_m: usize,
    pub oracle_pool: CandidatePool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            inference: InferenceOptions::default(),
            preference_beams: 10,
            oracle_max_m: 10,
            oracle_pool: CandidatePool::FewShot,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::ConfigInvalid(format!("config file {} not found", path.display())),
            _ => Error::Io(e),
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.synthetic.is_none() && self.data.train.is_none() && self.data.test.is_none() {
            return Err(Error::ConfigInvalid("data needs a train or test file, or a synthetic section".into()));
        }
        if let Some(s) = &self.data.synthetic {
            if !(0.0..1.0).contains(&s.test_fraction) || s.corpus.n < 2 {
                return Err(Error::ConfigInvalid("synthetic data needs n >= 2 and test_fraction in [0, 1)".into()));
            }
        }
        if let Some(order) = &self.data.order {
            order.parse::<FieldOrder>()?;
        }
        self.teacher.filter().validate()?;
        if !(0.0..1.0).contains(&self.teacher.val_fraction) {
            return Err(Error::ConfigInvalid("teacher.val_fraction must be in [0, 1)".into()));
        }
        self.sft.validate()?;
        self.dpo.validate()?;
        if self.eval.preference_beams == 0 {
            return Err(Error::ConfigInvalid("eval.preference_beams must be positive".into()));
        }
        if let Some(b) = &self.backend {
            match b.kind {
                BackendKind::Command if b.program.is_none() => {
                    return Err(Error::ConfigInvalid("command backend needs `program`".into()))
                }
                BackendKind::Llm if b.remote.is_none() => {
                    return Err(Error::ConfigInvalid("llm backend needs a `remote` section".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Fails unless a backend section is present.
    pub fn require_backend(&self) -> Result<&BackendConfig> {
        self.backend
            .as_ref()
            .ok_or_else(|| Error::ConfigInvalid("no [backend] section; this stage scores with an ABSA backend".into()))
    }

    pub(crate) fn parse_options(&self, base: &Path) -> Result<ParseOptions> {
        let order = self.data.order.as_deref().map(str::parse).transpose()?;
        let categories = match &self.data.categories {
            Some(p) => {
                let text = std::fs::read_to_string(resolve(base, p))?;
                Some(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect::<BTreeSet<_>>())
            }
            None => None,
        };
        Ok(ParseOptions { order, categories })
    }
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Teacher client for `config`, always behind the replay cache.
pub fn build_teacher(config: &TeacherConfig, cache_dir: PathBuf) -> Result<ReplayClient> {
    let inner: Option<Arc<dyn TeacherClient>> = match config.kind {
        TeacherKind::Synthetic => Some(Arc::new(synthetic::teacher())),
        TeacherKind::Remote => Some(Arc::new(RemoteClient::new(config.remote.clone())?)),
        TeacherKind::Replay => None,
    };
    Ok(ReplayClient::new(cache_dir, inner))
}

/// Backend for `config`, memoized per text.
pub fn build_backend(config: &BackendConfig, base: &Path, cache_dir: PathBuf) -> Result<Box<dyn AbsaBackend>> {
    let inner: Box<dyn AbsaBackend> = match config.kind {
        BackendKind::Lexicon => {
            let lexicon: Lexicon = match &config.lexicon {
                Some(p) => read_json(&resolve(base, p))?,
                None => synthetic::lexicon(),
            };
            Box::new(LexiconBackend::new(lexicon))
        }
        BackendKind::Llm => {
            let remote = config.remote.clone().unwrap_or_default();
            let client = ReplayClient::new(cache_dir, Some(Arc::new(RemoteClient::new(remote)?)));
            Box::new(LlmBackend::new(Box::new(client), config.name.clone().unwrap_or_else(|| "llm".into())))
        }
        BackendKind::Command => {
            let program = config.program.clone().unwrap_or_default();
            let name = config.name.clone().unwrap_or_else(|| program.clone());
            Box::new(CommandBackend::new(program, config.args.clone(), name))
        }
    };
    Ok(Box::new(MemoBackend::new(inner)))
}
