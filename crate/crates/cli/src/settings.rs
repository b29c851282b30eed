//! Tool settings read from the same TOML file the pipeline uses. Sections
//! the standalone verbs do not need (`run_dir`, `data`) are ignored.

use std::path::{Path, PathBuf};

use aspect_splitter::data::Task;
use aspect_splitter::pipeline::{BackendConfig, BackendKind, EvalConfig, TeacherConfig, TeacherKind};
use aspect_splitter::preference::DpoConfig;
use aspect_splitter::splitter::{SftConfig, TinyConfig};
use aspect_splitter::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub seed: u64,
    pub task: Task,
    pub teacher: TeacherConfig,
    pub sft: SftConfig,
    pub tiny: TinyConfig,
    pub dpo: DpoConfig,
    pub backend: Option<BackendConfig>,
    pub eval: EvalConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: 42,
            task: Task::Asqp,
            teacher: TeacherConfig::default(),
            sft: SftConfig::default(),
            tiny: TinyConfig::default(),
            dpo: DpoConfig::default(),
            backend: None,
            eval: EvalConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Settings {
    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Settings::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        let mut settings: Settings = toml::from_str(&text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        settings.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        settings.teacher.filter().validate()?;
        settings.sft.validate()?;
        settings.dpo.validate()?;
        Ok(settings)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Parses a teacher kind flag value.
pub fn teacher_kind(s: &str) -> std::result::Result<TeacherKind, String> {
    match s {
        "synthetic" => Ok(TeacherKind::Synthetic),
        "remote" => Ok(TeacherKind::Remote),
        "replay" => Ok(TeacherKind::Replay),
        _ => Err(format!("unknown teacher {s:?}; expected synthetic, remote or replay")),
    }
}

/// Parses a backend kind flag value.
pub fn backend_kind(s: &str) -> std::result::Result<BackendKind, String> {
    match s {
        "lexicon" => Ok(BackendKind::Lexicon),
        "llm" => Ok(BackendKind::Llm),
        "command" => Ok(BackendKind::Command),
        _ => Err(format!("unknown backend {s:?}; expected lexicon, llm or command")),
    }
}
