use std::path::PathBuf;
use std::process::Command;
use std::sync::Mutex;

use super::{ipa, Language, PhonemizerBackend};

/// Adapter around an external espeak-ng compatible executable.
///
/// The tool is invoked once per word with `-q --ipa=3 -v <voice>`, which
/// prints IPA with `_` between phonemes. Calls on one instance are serialized.
#[derive(Debug)]
pub struct EspeakBackend {
    program: PathBuf,
    lock: Mutex<()>,
}

impl Default for EspeakBackend {
    fn default() -> Self {
        Self::new("espeak-ng")
    }
}

impl EspeakBackend {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn voice(lang: Language) -> Option<&'static str> {
        match lang {
            Language::Bengali => Some("bn"),
            Language::English => Some("en-us"),
            Language::Hindi => Some("hi"),
            Language::Kannada => Some("kn"),
            Language::Marathi => Some("mr"),
            Language::Telugu => Some("te"),
            Language::Chhattisgarhi => None,
        }
    }

    /// True if the program can be executed.
    pub fn is_available(&self) -> bool {
        Command::new(&self.program)
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    }
}

impl PhonemizerBackend for EspeakBackend {
    fn name(&self) -> &str {
        "espeak"
    }

    fn supports(&self, lang: Language) -> bool {
        Self::voice(lang).is_some()
    }

    fn phonemize_word(&self, word: &str, lang: Language) -> Result<Vec<String>, String> {
        let voice = Self::voice(lang).ok_or_else(|| format!("no espeak voice for {lang}"))?;
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let output = Command::new(&self.program)
            .args(["-q", "--ipa=3", "-v", voice])
            .arg(word)
            .output()
            .map_err(|e| format!("failed to run {}: {e}", self.program.display()))?;
        if !output.status.success() {
            return Err(format!(
                "{} exited with {}: {}",
                self.program.display(),
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            ));
        }
        let stdout = String::from_utf8(output.stdout).map_err(|e| e.to_string())?;
        Ok(ipa::segment(&stdout))
    }
}
