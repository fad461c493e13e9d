use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One utterance in a corpus manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub id: String,
    /// Resolved against the manifest's directory when relative.
    pub audio_path: PathBuf,
    pub emotion: Option<String>,
    pub gender: Option<String>,
    pub arousal: Option<f64>,
    pub valence: Option<f64>,
    pub dominance: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    id: String,
    audio: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emotion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arousal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dominance: Option<f64>,
}

/// Reads a line-delimited JSON manifest. Blank lines are skipped and
/// unknown keys ignored.
pub fn load_manifest(path: &Path) -> Result<Vec<UtteranceRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut seen = HashSet::new();
    let mut records = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let parsed: ManifestLine =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        for (name, v) in [
            ("arousal", parsed.arousal),
            ("valence", parsed.valence),
            ("dominance", parsed.dominance),
        ] {
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(parse_err(format!("{name} is not finite")));
            }
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(Error::DuplicateId(parsed.id));
        }
        let audio = PathBuf::from(&parsed.audio);
        let audio_path = if audio.is_absolute() {
            audio
        } else {
            base.join(audio)
        };
        records.push(UtteranceRecord {
            id: parsed.id,
            audio_path,
            emotion: parsed.emotion,
            gender: parsed.gender,
            arousal: parsed.arousal,
            valence: parsed.valence,
            dominance: parsed.dominance,
        });
    }
    Ok(records)
}

/// Writes records as a manifest. Audio paths under `base` are stored
/// relative to it so the manifest stays valid when the directory moves.
pub fn write_manifest(path: &Path, records: &[UtteranceRecord], base: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        let audio = r
            .audio_path
            .strip_prefix(base)
            .unwrap_or(&r.audio_path)
            .to_string_lossy()
            .replace('\\', "/");
        let line = ManifestLine {
            id: r.id.clone(),
            audio,
            emotion: r.emotion.clone(),
            gender: r.gender.clone(),
            arousal: r.arousal,
            valence: r.valence,
            dominance: r.dominance,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
