//! JSON-lines corpus manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::frontend::Language;
use crate::{Error, Result};

/// One manifest line as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    /// Relative to the manifest's directory unless absolute.
    pub audio: String,
    pub text: String,
    pub language: String,
    pub speaker: String,
    /// Seconds; read from the audio header when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub audio_path: PathBuf,
    pub text: String,
    pub language: Language,
    pub speaker: String,
    pub speaker_id: usize,
    pub duration_sec: f64,
}

/// Dense speaker ids. Labels present at construction get ids in sorted
/// order; [`SpeakerMap::extend`] appends further labels after them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerMap {
    labels: Vec<String>,
}

impl SpeakerMap {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = labels.into_iter().collect();
        Self {
            labels: set.into_iter().map(str::to_string).collect(),
        }
    }

    /// Appends labels not yet mapped, in sorted order. Returns the new ones.
    pub fn extend<'a>(&mut self, labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let set: BTreeSet<&str> = labels.into_iter().filter(|l| self.id(l).is_none()).collect();
        let added: Vec<String> = set.into_iter().map(str::to_string).collect();
        self.labels.extend(added.iter().cloned());
        added
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Resolves a label, or a numeric id given as text.
    pub fn resolve(&self, speaker: &str) -> Result<usize> {
        if let Some(id) = self.id(speaker) {
            return Ok(id);
        }
        match speaker.parse::<usize>() {
            Ok(id) if id < self.len() => Ok(id),
            _ => Err(Error::UnknownSpeaker(speaker.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub utterances: Vec<Utterance>,
    pub speakers: SpeakerMap,
}

impl Manifest {
    pub fn languages(&self) -> BTreeSet<Language> {
        self.utterances.iter().map(|u| u.language).collect()
    }

    /// Utterance count per speaker label.
    pub fn speaker_counts(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for u in &self.utterances {
            *m.entry(u.speaker.as_str()).or_insert(0) += 1;
        }
        m
    }

    /// Re-maps speaker ids through `map`, which must contain every label.
    pub fn with_speaker_map(mut self, map: SpeakerMap) -> Result<Self> {
        for u in &mut self.utterances {
            u.speaker_id = map.id(&u.speaker).ok_or_else(|| Error::UnknownSpeaker(u.speaker.clone()))?;
        }
        self.speakers = map;
        Ok(self)
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Parses a manifest. Audio must exist; missing durations are read from the
/// WAV header.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let dir = base_dir(path);
    let schema = |line: usize, message: String| Error::Schema {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| schema(line_no, e.to_string()))?;
        let language: Language = rec
            .language
            .parse()
            .map_err(|_| schema(line_no, format!("unsupported language `{}`", rec.language)))?;
        if rec.id.is_empty() || !seen.insert(rec.id.clone()) {
            return Err(schema(line_no, format!("empty or duplicate id `{}`", rec.id)));
        }
        if rec.speaker.is_empty() {
            return Err(schema(line_no, "empty speaker label".into()));
        }
        let audio_path = dir.join(&rec.audio);
        if !audio_path.exists() {
            return Err(schema(line_no, format!("audio file {} not found", audio_path.display())));
        }
        let duration_sec = match rec.duration {
            Some(d) => d,
            None => super::wav::read_wav(&audio_path)?.duration_sec(),
        };
        if !(duration_sec > 0.0 && duration_sec.is_finite()) {
            return Err(schema(line_no, format!("duration must be positive, got {duration_sec}")));
        }
        records.push((rec, language, audio_path, duration_sec));
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let speakers = SpeakerMap::from_labels(records.iter().map(|r| r.0.speaker.as_str()));
    let utterances = records
        .into_iter()
        .map(|(rec, language, audio_path, duration_sec)| Utterance {
            speaker_id: speakers.id(&rec.speaker).unwrap(),
            id: rec.id,
            audio_path,
            text: rec.text,
            language,
            speaker: rec.speaker,
            duration_sec,
        })
        .collect();
    Ok(Manifest {
        path: path.to_path_buf(),
        utterances,
        speakers,
    })
}

/// Writes one JSON object per line; audio paths are stored relative to the
/// manifest when possible.
pub fn write_manifest(path: &Path, utterances: &[Utterance]) -> Result<()> {
    let dir = base_dir(path);
    let mut out = String::new();
    for u in utterances {
        let audio = u
            .audio_path
            .strip_prefix(&dir)
            .unwrap_or(&u.audio_path)
            .to_string_lossy()
            .into_owned();
        let rec = ManifestRecord {
            id: u.id.clone(),
            audio,
            text: u.text.clone(),
            language: u.language.code().to_string(),
            speaker: u.speaker.clone(),
            duration: Some(u.duration_sec),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_corpus(dir: &Path, lines: &[&str]) -> PathBuf {
        std::fs::write(dir.join("a.wav"), super::super::wav::encode_wav(&[0.0; 1600], 16000)).unwrap();
        let path = dir.join("manifest.jsonl");
        std::fs::write(&path, lines.join("\n")).unwrap();
        path
    }

    #[test]
    fn three_lines_and_sorted_speakers() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_corpus(
            dir.path(),
            &[
                r#"{"id":"1","audio":"a.wav","text":"x","language":"hindi","speaker":"B"}"#,
                r#"{"id":"2","audio":"a.wav","text":"y","language":"english","speaker":"A"}"#,
                r#"{"id":"3","audio":"a.wav","text":"z","language":"hindi","speaker":"B","duration":0.5}"#,
            ],
        );
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.utterances.len(), 3);
        assert_eq!(m.speakers.id("A"), Some(0));
        assert_eq!(m.speakers.id("B"), Some(1));
        assert_eq!(m.utterances[0].speaker_id, 1);
        assert!((m.utterances[0].duration_sec - 0.1).abs() < 1e-9);
        assert_eq!(m.utterances[2].duration_sec, 0.5);
    }

    #[test]
    fn schema_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_corpus(
            dir.path(),
            &[
                r#"{"id":"1","audio":"a.wav","text":"x","language":"hindi","speaker":"B"}"#,
                r#"{"id":"2","audio":"a.wav","text":"y","language":"french","speaker":"A"}"#,
            ],
        );
        match load_manifest(&path).unwrap_err() {
            Error::Schema { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("french"));
            }
            e => panic!("unexpected {e:?}"),
        }
        let path = write_corpus(dir.path(), &[r#"{"id":"1","audio":"missing.wav","text":"x","language":"hindi","speaker":"B"}"#]);
        assert_eq!(load_manifest(&path).unwrap_err().kind(), "schema");
        assert_eq!(load_manifest(&dir.path().join("nope.jsonl")).unwrap_err().kind(), "missing-file");
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_corpus(
            dir.path(),
            &[
                r#"{"id":"1","audio":"a.wav","text":"नमस्ते","language":"hindi","speaker":"B"}"#,
                r#"{"id":"2","audio":"a.wav","text":"hello","language":"english","speaker":"A"}"#,
            ],
        );
        let m = load_manifest(&path).unwrap();
        let out = dir.path().join("copy.jsonl");
        write_manifest(&out, &m.utterances).unwrap();
        let again = load_manifest(&out).unwrap();
        assert_eq!(again.utterances, m.utterances);
    }

    #[test]
    fn speaker_extension_appends() {
        let mut map = SpeakerMap::from_labels(["b", "a"]);
        let added = map.extend(["z", "a", "c"]);
        assert_eq!(added, vec!["c", "z"]);
        assert_eq!(map.labels(), &["a", "b", "c", "z"]);
        assert_eq!(map.resolve("1").unwrap(), 1);
        assert_eq!(map.resolve("nobody").unwrap_err().kind(), "unknown-speaker");
    }
}
