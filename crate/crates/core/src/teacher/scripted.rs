use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::TeacherClient;
use crate::error::Result;

type Script = dyn Fn(&str, usize, f64) -> Result<Vec<String>> + Send + Sync;

/// Offline teacher for tests and synthetic runs: either replays a fixed
/// list of completions or delegates to a closure.
#[derive(Clone)]
pub struct ScriptedClient {
    script: Arc<Script>,
    calls: Arc<AtomicUsize>,
}

impl ScriptedClient {
    /// Returns `outputs` for every prompt, cycled or truncated to `n`.
    pub fn fixed(outputs: Vec<String>) -> Self {
        Self::from_fn(move |_, n, _| Ok(outputs.iter().cycle().take(n).cloned().collect()))
    }

    pub fn from_fn(f: impl Fn(&str, usize, f64) -> Result<Vec<String>> + Send + Sync + 'static) -> Self {
        ScriptedClient { script: Arc::new(f), calls: Arc::new(AtomicUsize::new(0)) }
    }

    /// Number of `generate` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl TeacherClient for ScriptedClient {
    fn generate(&self, prompt: &str, n: usize, temperature: f64) -> Result<Vec<String>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(prompt, n, temperature)
    }
}

impl std::fmt::Debug for ScriptedClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedClient").field("calls", &self.calls()).finish()
    }
}
