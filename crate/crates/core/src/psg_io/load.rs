//! Raw recording containers.
//!
//! Two layouts are accepted:
//!
//! * a JSON sidecar naming one little-endian `f32` file per channel:
//!   `{"subject_id": "...", "sample_rate_hz": 256, "channels": [{"name": "EEG F4-M1", "file": "f4.f32"}, ...]}`
//!   (file paths are relative to the sidecar);
//! * a CSV with a header row of channel names and one row per sample. CSV
//!   carries no rate, so the [`ChannelManifest`] must supply it.

use super::{Channel, ChannelSignal, PsgError, Recording};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Maps source channel names onto the six montage labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelManifest {
    /// Source name -> montage label. Names already equal to a montage label
    /// need no entry.
    #[serde(default)]
    pub mapping: BTreeMap<String, Channel>,
    /// Required for CSV input.
    #[serde(default)]
    pub sample_rate_hz: Option<f64>,
}

impl ChannelManifest {
    fn resolve(&self, source: &str) -> Option<Channel> {
        self.mapping.get(source).copied().or_else(|| source.parse().ok())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    subject_id: String,
    sample_rate_hz: f64,
    channels: Vec<SidecarChannel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarChannel {
    name: String,
    file: String,
}

pub fn load_recording(path: &Path, manifest: &ChannelManifest) -> Result<Recording, PsgError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => load_sidecar(path, manifest),
        Some("csv") => load_csv(path, manifest),
        _ => Err(PsgError::Format(format!("{}: expected a .json sidecar or .csv file", path.display()))),
    }
}

fn pick_channels(
    found: Vec<(String, Vec<f64>)>,
    manifest: &ChannelManifest,
    rate: f64,
) -> Result<Vec<ChannelSignal>, PsgError> {
    let mut by_label: BTreeMap<Channel, Vec<f64>> = BTreeMap::new();
    for (name, samples) in found {
        if let Some(c) = manifest.resolve(&name) {
            if by_label.insert(c, samples).is_some() {
                return Err(PsgError::Montage(format!("channel {c} mapped more than once")));
            }
        }
    }
    Channel::ALL
        .iter()
        .map(|&c| {
            by_label
                .remove(&c)
                .map(|s| ChannelSignal::new(c, s, rate))
                .ok_or_else(|| PsgError::Montage(format!("no source channel maps to {c}")))
        })
        .collect()
}

fn load_sidecar(path: &Path, manifest: &ChannelManifest) -> Result<Recording, PsgError> {
    let text = std::fs::read_to_string(path)?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|e| PsgError::Format(format!("{}: {e}", path.display())))?;
    if !(sidecar.sample_rate_hz > 0.0) {
        return Err(PsgError::Format("sample_rate_hz must be positive".into()));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut found = Vec::new();
    for ch in &sidecar.channels {
        if manifest.resolve(&ch.name).is_none() {
            continue;
        }
        let bytes = std::fs::read(dir.join(&ch.file))?;
        if bytes.len() % 4 != 0 {
            return Err(PsgError::Format(format!("{}: length not a multiple of 4 bytes", ch.file)));
        }
        let samples = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        found.push((ch.name.clone(), samples));
    }
    let channels = pick_channels(found, manifest, sidecar.sample_rate_hz)?;
    Recording::new(sidecar.subject_id, channels, sidecar.sample_rate_hz)
}

fn load_csv(path: &Path, manifest: &ChannelManifest) -> Result<Recording, PsgError> {
    let rate = manifest
        .sample_rate_hz
        .filter(|r| *r > 0.0)
        .ok_or_else(|| PsgError::Format("CSV input needs sample_rate_hz in the manifest".into()))?;
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| PsgError::Format("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(PsgError::Format(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                header.len(),
                fields.len()
            )));
        }
        for (col, field) in columns.iter_mut().zip(fields) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| PsgError::Format(format!("line {}: bad number {field:?}", lineno + 2)))?;
            col.push(v);
        }
    }
    let subject = path.file_stem().and_then(|s| s.to_str()).unwrap_or("subject").to_string();
    let channels = pick_channels(header.into_iter().zip(columns).collect(), manifest, rate)?;
    Recording::new(subject, channels, rate)
}

/// Writes `rec` as a sidecar plus one `f32` file per channel into `dir`;
/// returns the sidecar path.
pub fn write_recording(rec: &Recording, dir: &Path) -> Result<std::path::PathBuf, PsgError> {
    std::fs::create_dir_all(dir)?;
    let mut channels = Vec::new();
    for c in &rec.channels {
        let file = format!("{}.f32", c.channel.label());
        let bytes: Vec<u8> = c.samples.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        std::fs::write(dir.join(&file), bytes)?;
        channels.push(SidecarChannel { name: c.channel.label().to_string(), file });
    }
    let sidecar = Sidecar {
        subject_id: rec.subject_id.clone(),
        sample_rate_hz: rec.sample_rate_hz(),
        channels,
    };
    let path = dir.join("recording.json");
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| PsgError::Format(e.to_string()))?;
    std::fs::write(&path, text)?;
    Ok(path)
}
