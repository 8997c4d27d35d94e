//! Session manifests: which files make up one two-ear recording.
//!
//! ```toml
//! subject = "p01"
//! condition = "cafeteria"
//! sample_rate_hz = 8000.0
//! belt_rate_hz = 400.0
//! left_iem = "left_iem.wav"
//! left_oem = "left_oem.wav"
//! right_iem = "right_iem.wav"
//! right_oem = "right_oem.wav"
//! belt = "belt.wav"
//!
//! [overrides.fusion]
//! tau_cpm = 0.6
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::apply_overrides;
use super::wav::read_audio;
use crate::error::{Error, Result};
use crate::session::{EarInput, PipelineConfig};
use crate::signal::SampleBlock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    #[serde(default)]
    pub subject: String,
    #[serde(default)]
    pub condition: String,
    pub sample_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belt_rate_hz: Option<f64>,
    pub left_iem: PathBuf,
    pub left_oem: PathBuf,
    pub right_iem: PathBuf,
    pub right_oem: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belt: Option<PathBuf>,
    /// Config sections applied on top of the caller's configuration.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub overrides: toml::Table,
}

/// All signals of a session, read and checked against the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionAudio {
    pub left: EarInput,
    pub right: EarInput,
    pub belt: Option<SampleBlock>,
}

impl SessionManifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in m.paths_mut() {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, dir).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    fn paths_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        [
            &mut self.left_iem,
            &mut self.left_oem,
            &mut self.right_iem,
            &mut self.right_oem,
        ]
        .into_iter()
        .chain(self.belt.as_mut())
    }

    pub fn paths(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = vec![
            &self.left_iem,
            &self.left_oem,
            &self.right_iem,
            &self.right_oem,
        ];
        v.extend(self.belt.as_deref());
        v
    }

    /// Every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.paths().into_iter().find(|p| !p.is_file()) {
            return Err(Error::Config(format!(
                "manifest references missing file {}",
                p.display()
            )));
        }
        if self.belt.is_some() != self.belt_rate_hz.is_some() {
            return Err(Error::Config(
                "belt and belt_rate_hz must be given together".into(),
            ));
        }
        Ok(())
    }

    pub fn config(&self, base: &PipelineConfig) -> Result<PipelineConfig> {
        if self.overrides.is_empty() {
            return Ok(base.clone());
        }
        apply_overrides(base, &self.overrides)
    }

    /// Reads every file and checks its rate against the declaration.
    pub fn read(&self) -> Result<SessionAudio> {
        self.validate()?;
        let read = |p: &Path, rate: f64| -> Result<SampleBlock> {
            let b = read_audio(p)?;
            if b.sample_rate_hz() != rate {
                return Err(Error::Alignment(format!(
                    "{} is at {} Hz but the manifest declares {rate} Hz",
                    p.display(),
                    b.sample_rate_hz()
                )));
            }
            Ok(b)
        };
        let fs = self.sample_rate_hz;
        let belt = match (&self.belt, self.belt_rate_hz) {
            (Some(p), Some(r)) => Some(read(p, r)?),
            _ => None,
        };
        Ok(SessionAudio {
            left: EarInput {
                iem: read(&self.left_iem, fs)?,
                oem: read(&self.left_oem, fs)?,
            },
            right: EarInput {
                iem: read(&self.right_iem, fs)?,
                oem: read(&self.right_oem, fs)?,
            },
            belt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::wav::{write_audio, Encoding};

    fn manifest(belt: bool) -> SessionManifest {
        SessionManifest {
            subject: "p01".into(),
            condition: "quiet".into(),
            sample_rate_hz: 8000.0,
            belt_rate_hz: belt.then_some(400.0),
            left_iem: "li.wav".into(),
            left_oem: "lo.wav".into(),
            right_iem: "ri.wav".into(),
            right_oem: "ro.wav".into(),
            belt: belt.then(|| "belt.wav".into()),
            overrides: toml::Table::new(),
        }
    }

    #[test]
    fn write_load_read() {
        let dir = tempfile::tempdir().unwrap();
        let audio = SampleBlock::new(vec![0.1; 800], 8000.0).unwrap();
        for f in ["li.wav", "lo.wav", "ri.wav", "ro.wav"] {
            write_audio(dir.path().join(f), &audio, Encoding::Float32).unwrap();
        }
        write_audio(
            dir.path().join("belt.wav"),
            &SampleBlock::new(vec![0.0; 40], 400.0).unwrap(),
            Encoding::Float32,
        )
        .unwrap();
        let mut m = manifest(true);
        m.overrides = "[fusion]\ntau_cpm = 0.9\n".parse().unwrap();
        let path = dir.path().join("session.toml");
        m.write(&path).unwrap();

        let loaded = SessionManifest::load(&path).unwrap();
        assert_eq!(loaded.left_iem, dir.path().join("li.wav"));
        let s = loaded.read().unwrap();
        assert_eq!(s.left.iem.len(), 800);
        assert_eq!(s.belt.unwrap().sample_rate_hz(), 400.0);
        assert_eq!(
            loaded
                .config(&PipelineConfig::default())
                .unwrap()
                .fusion
                .tau_cpm,
            0.9
        );

        fs::remove_file(dir.path().join("ro.wav")).unwrap();
        assert!(matches!(loaded.read(), Err(Error::Config(m)) if m.contains("ro.wav")));
    }

    #[test]
    fn declared_rate_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let audio = SampleBlock::new(vec![0.1; 160], 16000.0).unwrap();
        for f in ["li.wav", "lo.wav", "ri.wav", "ro.wav"] {
            write_audio(dir.path().join(f), &audio, Encoding::Pcm16).unwrap();
        }
        let m = SessionManifest::parse(&toml::to_string(&manifest(false)).unwrap(), dir.path())
            .unwrap();
        assert!(matches!(m.read(), Err(Error::Alignment(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = toml::to_string(&manifest(false)).unwrap() + "colour = \"red\"\n";
        assert!(matches!(
            SessionManifest::parse(&text, Path::new(".")),
            Err(Error::Config(_))
        ));
    }
}
