use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::DEFAULT_PET_BIN_WIDTH;
use crate::cvae::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::extract::ExtractionParams;
use crate::ingest::{RoundaboutGeometry, SynthConfig};
use crate::kpi::{KpiParams, DEFAULT_COLLISION_DISTANCE, DEFAULT_CONFLICT_THRESHOLD};

/// Environment variable that overrides `paths.data_root`.
pub const DATA_ROOT_ENV: &str = "ROUNDGEN_DATA_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding `*_tracks.csv` recordings.
    pub data_root: PathBuf,
    /// Dataset container written by `extract`.
    pub dataset: PathBuf,
    pub artifact_dir: PathBuf,
    pub report_dir: PathBuf,
    /// Where `generate` writes scenario files.
    pub output_dir: PathBuf,
    /// Roundabout geometry file; the built-in layout when absent.
    pub geometry: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            data_root: "data".into(),
            dataset: "work/dataset.safetensors".into(),
            artifact_dir: "work/model".into(),
            report_dir: "work/report".into(),
            output_dir: "work/generated".into(),
            geometry: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KpiConfig {
    pub collision_distance: f64,
    pub conflict_threshold: f64,
    pub pet_bin_width: f64,
}

impl Default for KpiConfig {
    fn default() -> Self {
        KpiConfig {
            collision_distance: DEFAULT_COLLISION_DISTANCE,
            conflict_threshold: DEFAULT_CONFLICT_THRESHOLD,
            pet_bin_width: DEFAULT_PET_BIN_WIDTH,
        }
    }
}

impl KpiConfig {
    pub fn params(&self) -> KpiParams {
        KpiParams {
            collision_distance: self.collision_distance,
            conflict_threshold: self.conflict_threshold,
        }
    }
}

/// Everything a command needs, read from one TOML file. Relative paths are
/// resolved against the config file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub synth: SynthConfig,
    pub extraction: ExtractionParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub kpi: KpiConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads `path` (or defaults when `None`), resolves relative paths and
    /// applies the data-root override from the environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let mut cfg = Self::from_toml_str(&text, p)?;
                let base = p.parent().unwrap_or(Path::new(""));
                cfg.paths.resolve(base);
                cfg
            }
            None => RunConfig::default(),
        };
        if let Some(root) = std::env::var_os(DATA_ROOT_ENV) {
            cfg.paths.data_root = root.into();
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.synth;
        if !(s.speed_min > 0.0 && s.speed_min <= s.speed_max && s.speed_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "synth speeds must satisfy 0 < min <= max, got {}..{}",
                s.speed_min, s.speed_max
            )));
        }
        if !(s.approach_length > 0.0 && s.exit_length > 0.0) || s.mean_headway_frames == 0 {
            return Err(Error::InvalidConfig("synth lengths and headway must be positive".into()));
        }
        self.extraction.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        for (name, v) in [
            ("kpi.collision_distance", self.kpi.collision_distance),
            ("kpi.conflict_threshold", self.kpi.conflict_threshold),
            ("kpi.pet_bin_width", self.kpi.pet_bin_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<RoundaboutGeometry> {
        match &self.paths.geometry {
            Some(p) => RoundaboutGeometry::load(p),
            None => Ok(RoundaboutGeometry::default()),
        }
    }
}

impl PathsConfig {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.data_root,
            &mut self.dataset,
            &mut self.artifact_dir,
            &mut self.report_dir,
            &mut self.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(g) = &mut self.geometry {
            if g.is_relative() {
                *g = base.join(&*g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_toml_str(
            "seed = 3\n[train]\nepochs = 250\n[paths]\ndata_root = \"recs\"\n",
            Path::new("x.toml"),
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.epochs, 250);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.extraction, ExtractionParams::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::from_toml_str("[train]\nepoch = 5\n", Path::new("x.toml")).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut p = PathsConfig::default();
        p.geometry = Some("geom.toml".into());
        p.resolve(Path::new("/etc/run"));
        assert_eq!(p.data_root, Path::new("/etc/run/data"));
        assert_eq!(p.geometry.as_deref(), Some(Path::new("/etc/run/geom.toml")));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text, Path::new("x.toml")).unwrap(), cfg);
    }
}
