use std::collections::HashMap;
use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::condition::decode_condition;
use super::normalize::{fit_normalization, NormalizationStats};
use super::pipeline::{ExtractionParams, ExtractionReport};
use super::scenario::Scenario;
use super::split::{split_dataset, DatasetSplit};
use crate::error::{Error, Result};
use crate::ingest::RoundaboutGeometry;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub source_recordings: Vec<u32>,
    pub params: ExtractionParams,
    pub geometry: RoundaboutGeometry,
    pub frames: usize,
    pub dt: f64,
    pub report: Option<ExtractionReport>,
}

/// Extracted scenarios in meters, their split and the normalization fitted
/// on the training part. Persisted as one safetensors file.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scenarios: Vec<Scenario>,
    pub split: DatasetSplit,
    pub normalization: NormalizationStats,
    pub manifest: Manifest,
}

fn f64_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn i64_bytes(values: impl Iterator<Item = i64>) -> Vec<u8> {
    values.flat_map(i64::to_le_bytes).collect()
}

fn read_f64(view: &TensorView<'_>) -> Result<Vec<f64>> {
    if view.dtype() != Dtype::F64 {
        return Err(Error::Format(format!("expected F64, found {:?}", view.dtype())));
    }
    Ok(view
        .data()
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_i64(view: &TensorView<'_>) -> Result<Vec<i64>> {
    if view.dtype() != Dtype::I64 {
        return Err(Error::Format(format!("expected I64, found {:?}", view.dtype())));
    }
    Ok(view
        .data()
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

impl Dataset {
    /// Splits `scenarios` and fits normalization on the training part,
    /// centered on the roundabout.
    pub fn build(
        scenarios: Vec<Scenario>,
        geometry: RoundaboutGeometry,
        params: ExtractionParams,
        source_recordings: Vec<u32>,
        report: Option<ExtractionReport>,
    ) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::NoScenarios);
        }
        let frames = scenarios[0].len();
        let dt = scenarios[0].dt;
        if let Some(bad) = scenarios.iter().find(|s| s.len() != frames) {
            return Err(Error::ScenarioLength {
                expected: frames,
                actual: bad.len(),
            });
        }
        for s in &scenarios {
            s.validate()?;
        }
        let split = split_dataset(scenarios.len(), params.split_seed)?;
        let train: Vec<Scenario> = split.train.iter().map(|&i| scenarios[i].clone()).collect();
        let normalization = fit_normalization(&train, geometry.center)?;
        Ok(Dataset {
            scenarios,
            split,
            normalization,
            manifest: Manifest {
                schema_version: DATASET_SCHEMA_VERSION,
                source_recordings,
                params,
                geometry,
                frames,
                dt,
                report,
            },
        })
    }

    pub fn part(&self, name: &str) -> Result<Vec<&Scenario>> {
        let idx = self
            .split
            .part(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown split `{name}`")))?;
        Ok(idx.iter().map(|&i| &self.scenarios[i]).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.scenarios.len();
        let frames = self.manifest.frames;
        let positions = f64_bytes(
            self.scenarios
                .iter()
                .flat_map(|s| s.positions.iter().flatten().copied()),
        );
        let conditions = i64_bytes(self.scenarios.iter().map(|s| s.condition.category_id as i64));
        let origins = i64_bytes(self.scenarios.iter().map(|s| s.frame_origin));
        let idx = |v: &[usize]| i64_bytes(v.iter().map(|&i| i as i64));
        let (train, val, test) = (
            idx(&self.split.train),
            idx(&self.split.validation),
            idx(&self.split.test),
        );
        let norm = f64_bytes(
            [
                self.normalization.center_offset[0],
                self.normalization.center_offset[1],
                self.normalization.scale,
            ]
            .into_iter(),
        );
        let tensors = vec![
            ("scenarios", TensorView::new(Dtype::F64, vec![n, frames, 4], &positions)?),
            ("conditions", TensorView::new(Dtype::I64, vec![n], &conditions)?),
            ("frame_origins", TensorView::new(Dtype::I64, vec![n], &origins)?),
            ("split_train", TensorView::new(Dtype::I64, vec![self.split.train.len()], &train)?),
            (
                "split_validation",
                TensorView::new(Dtype::I64, vec![self.split.validation.len()], &val)?,
            ),
            ("split_test", TensorView::new(Dtype::I64, vec![self.split.test.len()], &test)?),
            ("normalization", TensorView::new(Dtype::F64, vec![3], &norm)?),
        ];
        let mut meta = HashMap::new();
        meta.insert("manifest".to_string(), serde_json::to_string(&self.manifest)?);
        safetensors::serialize_to_file(tensors, Some(meta), path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let st = SafeTensors::deserialize(&bytes)?;
        let (_, metadata) = SafeTensors::read_metadata(&bytes)?;
        let meta = metadata
            .metadata()
            .clone()
            .ok_or_else(|| Error::Format(format!("{}: missing manifest", path.display())))?;
        let manifest: Manifest = serde_json::from_str(
            meta.get("manifest")
                .ok_or_else(|| Error::Format(format!("{}: missing manifest", path.display())))?,
        )?;
        if manifest.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported schema version {}",
                path.display(),
                manifest.schema_version
            )));
        }
        let seed = manifest.params.split_seed;

        let positions = read_f64(&st.tensor("scenarios")?)?;
        let conditions = read_i64(&st.tensor("conditions")?)?;
        let origins = read_i64(&st.tensor("frame_origins")?)?;
        let frames = manifest.frames;
        if positions.len() != conditions.len() * frames * 4 || origins.len() != conditions.len() {
            return Err(Error::Format(format!("{}: inconsistent tensor sizes", path.display())));
        }
        let mut scenarios = Vec::with_capacity(conditions.len());
        for (k, (&c, &origin)) in conditions.iter().zip(&origins).enumerate() {
            let rows = positions[k * frames * 4..(k + 1) * frames * 4]
                .chunks_exact(4)
                .map(|r| [r[0], r[1], r[2], r[3]])
                .collect();
            scenarios.push(Scenario {
                positions: rows,
                condition: decode_condition(c as u32)?,
                frame_origin: origin,
                dt: manifest.dt,
            });
        }
        let idx = |name: &str| -> Result<Vec<usize>> {
            Ok(read_i64(&st.tensor(name)?)?.into_iter().map(|i| i as usize).collect())
        };
        let split = DatasetSplit {
            train: idx("split_train")?,
            validation: idx("split_validation")?,
            test: idx("split_test")?,
            seed,
        };
        let norm = read_f64(&st.tensor("normalization")?)?;
        if norm.len() != 3 {
            return Err(Error::Format(format!("{}: bad normalization", path.display())));
        }
        Ok(Dataset {
            scenarios,
            split,
            normalization: NormalizationStats {
                center_offset: [norm[0], norm[1]],
                scale: norm[2],
            },
            manifest,
        })
    }
}
