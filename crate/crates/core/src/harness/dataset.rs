//! Track collections (synthetic or on disk) and segment extraction.
//!
//! A dataset directory holds one subdirectory per track with a
//! `mixture.wav` and one `*.wav` per source (sorted by file name). Loose
//! `*.wav` files at the top level are mixture-only tracks, usable for
//! metrics but not for evaluation.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::eval::EvalScene;
use crate::resample::{resample_to, Signal, WindowSpec};

use super::config::{ExperimentConfig, SyntheticKind};
use super::synth::{make_synthetic_dataset, SceneParams, SyntheticSceneSpec};
use super::wav::{read_wav, write_wav};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub name: String,
    pub scene: EvalScene,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Synthetic {
        spec: SyntheticSceneSpec,
        scenes: Vec<SceneParams>,
    },
    Directory { tracks: Vec<Track> },
}

fn data(msg: impl Into<String>) -> HarnessError {
    HarnessError::Data(msg.into())
}

impl Dataset {
    pub fn synthetic(spec: SyntheticSceneSpec, count: usize) -> Result<Self, HarnessError> {
        spec.validate().map_err(HarnessError::Config)?;
        let scenes = make_synthetic_dataset(&spec, count);
        Ok(Self::Synthetic { spec, scenes })
    }

    /// The configured directory, or synthetic scenes of `kind`.
    pub fn from_config(cfg: &ExperimentConfig, kind: SyntheticKind) -> Result<Self, HarnessError> {
        match &cfg.dataset_dir {
            Some(dir) => Self::load_dir(dir),
            None => Self::synthetic(cfg.scene_spec(kind), cfg.scenes),
        }
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let dir = dir.as_ref();
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(|e| data(format!("cannot read dataset directory {}: {e}", dir.display())))?
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| data(e.to_string()))?
            .into_iter()
            .map(|e| e.path())
            .collect();
        entries.sort();
        let mut tracks = Vec::new();
        for path in entries {
            let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            if path.is_dir() {
                let mix_path = path.join("mixture.wav");
                if !mix_path.is_file() {
                    log::warn!("{}: no mixture.wav, ignored", path.display());
                    continue;
                }
                let mixture = read_wav(&mix_path)?;
                let mut refs: Vec<_> = fs::read_dir(&path)?
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .map(|e| e.path())
                    .filter(|p| is_wav(p) && p.file_name() != Some("mixture.wav".as_ref()))
                    .collect();
                refs.sort();
                let references = refs.iter().map(read_wav).collect::<Result<Vec<_>, _>>()?;
                if let Some(r) = references.iter().find(|r| r.sample_rate() != mixture.sample_rate()) {
                    return Err(data(format!(
                        "track {name}: reference at {} Hz, mixture at {} Hz",
                        r.sample_rate(),
                        mixture.sample_rate()
                    )));
                }
                tracks.push(Track {
                    name,
                    scene: EvalScene { mixture, references },
                });
            } else if is_wav(&path) {
                tracks.push(Track {
                    name,
                    scene: EvalScene {
                        mixture: read_wav(&path)?,
                        references: Vec::new(),
                    },
                });
            }
        }
        if tracks.is_empty() {
            return Err(data(format!("no tracks found in {}", dir.display())));
        }
        Ok(Self::Directory { tracks })
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Synthetic { scenes, .. } => scenes.len(),
            Self::Directory { tracks } => tracks.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Named scenes at `rate`. Synthetic scenes are re-rendered; recorded
    /// tracks are resampled.
    pub fn scenes_at(&self, rate: f64, window: WindowSpec) -> Result<Vec<(String, EvalScene)>, HarnessError> {
        match self {
            Self::Synthetic { scenes, .. } => scenes
                .iter()
                .map(|p| Ok((format!("scene{:03}", p.index), p.render(rate)?)))
                .collect(),
            Self::Directory { tracks } => tracks
                .iter()
                .map(|t| {
                    let conv = |s: &Signal| -> Result<Signal, HarnessError> {
                        if s.sample_rate() == rate {
                            Ok(s.clone())
                        } else {
                            Ok(resample_to(s, rate, window)?)
                        }
                    };
                    let scene = EvalScene {
                        mixture: conv(&t.scene.mixture)?,
                        references: t.scene.references.iter().map(conv).collect::<Result<_, _>>()?,
                    };
                    Ok((t.name.clone(), scene))
                })
                .collect(),
        }
    }

    pub fn metadata(&self) -> serde_json::Value {
        match self {
            Self::Synthetic { spec, scenes } => serde_json::json!({
                "kind": "synthetic",
                "spec": spec,
                "scenes": scenes,
            }),
            Self::Directory { tracks } => serde_json::json!({
                "kind": "directory",
                "tracks": tracks.iter().map(|t| serde_json::json!({
                    "name": t.name,
                    "rate": t.scene.mixture.sample_rate(),
                    "samples": t.scene.mixture.len(),
                    "sources": t.scene.references.len(),
                })).collect::<Vec<_>>(),
            }),
        }
    }

    /// Write `dataset.json` into `dir`.
    pub fn persist_metadata(&self, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(&self.metadata()).map_err(|e| data(e.to_string()))?;
        fs::write(dir.join("dataset.json"), text)?;
        Ok(())
    }
}

fn is_wav(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Write scenes in the layout [`Dataset::load_dir`] reads.
pub fn write_dataset_dir(dir: impl AsRef<Path>, scenes: &[(String, EvalScene)]) -> Result<(), HarnessError> {
    for (name, scene) in scenes {
        let d = dir.as_ref().join(name);
        fs::create_dir_all(&d)?;
        write_wav(d.join("mixture.wav"), &scene.mixture)?;
        for (i, r) in scene.references.iter().enumerate() {
            write_wav(d.join(format!("source{i}.wav")), r)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedTrack {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    pub names: Vec<String>,
    pub scenes: Vec<EvalScene>,
    pub skipped: Vec<SkippedTrack>,
}

impl Segments {
    pub fn mixtures(&self) -> Vec<Signal> {
        self.scenes.iter().map(|s| s.mixture.clone()).collect()
    }
}

fn head(s: &Signal, n: usize) -> Result<Signal, HarnessError> {
    Ok(Signal::new(s.samples()[..n.min(s.len())].to_vec(), s.sample_rate())?)
}

/// One leading segment of `seconds` per track. Shorter tracks are skipped
/// with a warning.
pub fn extract_segments(tracks: &[(String, EvalScene)], seconds: f64) -> Result<Segments, HarnessError> {
    if tracks.is_empty() {
        return Err(data("dataset is empty"));
    }
    let mut out = Segments {
        names: Vec::new(),
        scenes: Vec::new(),
        skipped: Vec::new(),
    };
    for (name, scene) in tracks {
        let rate = scene.mixture.sample_rate();
        let n = (seconds * rate).round() as usize;
        if scene.mixture.len() < n {
            let have = scene.mixture.len() as f64 / rate;
            log::warn!("track {name} is {have:.2} s, shorter than {seconds} s; skipped");
            out.skipped.push(SkippedTrack {
                name: name.clone(),
                seconds: have,
            });
            continue;
        }
        out.names.push(name.clone());
        out.scenes.push(EvalScene {
            mixture: head(&scene.mixture, n)?,
            references: scene.references.iter().map(|r| head(r, n)).collect::<Result<_, _>>()?,
        });
    }
    if out.scenes.is_empty() {
        return Err(data(format!("no track is at least {seconds} s long")));
    }
    Ok(out)
}
