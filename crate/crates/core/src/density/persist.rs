//! Model files: a JSON manifest plus a flat little-endian `f64` array.
//!
//! For a flow the array holds every parameter in [`Params`] visiting order.
//! For a KDE it holds the `n x d` support points row by row followed by the
//! `d x d` lower-triangular bandwidth factor, also row by row.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Bandwidth, BandwidthKind, DensityModel, FlowConfig, FlowModel, KdeModel};
use crate::error::{Error, Result};
use crate::nn::Params;
use crate::space::ContinuousSpaceMeta;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub kind: String,
    pub dim: usize,
    pub params_file: String,
    pub param_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<ContinuousSpaceMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_trace: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_kind: Option<BandwidthKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_points: Option<usize>,
}

const FORMAT: &str = "symmdp-model-v1";

fn params_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Schema(format!(
            "{} is not a whole number of f64 values",
            path.display()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Writes `path` (JSON manifest) and a sibling `.bin` parameter file.
pub fn save_model(
    model: &DensityModel,
    normalization: Option<&ContinuousSpaceMeta>,
    path: impl AsRef<Path>,
) -> Result<ModelManifest> {
    let path = path.as_ref();
    let bin = params_path(path);
    let params_file = bin
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (manifest, values) = match model {
        DensityModel::Flow(f) => {
            let values = f.stack.flatten();
            (
                ModelManifest {
                    format: FORMAT.into(),
                    kind: "flow".into(),
                    dim: f.dim,
                    params_file,
                    param_count: values.len(),
                    normalization: normalization.cloned(),
                    seed: Some(f.seed),
                    flow: Some(f.config),
                    training_trace: Some(f.trace.clone()),
                    bandwidth_kind: None,
                    support_points: None,
                },
                values,
            )
        }
        DensityModel::Kde(k) => {
            let d = k.dim();
            let mut values: Vec<f64> = k.points().iter().flatten().copied().collect();
            for i in 0..d {
                for j in 0..d {
                    values.push(k.bandwidth.chol[(i, j)]);
                }
            }
            (
                ModelManifest {
                    format: FORMAT.into(),
                    kind: "kde".into(),
                    dim: d,
                    params_file,
                    param_count: values.len(),
                    normalization: normalization.cloned(),
                    seed: None,
                    flow: None,
                    training_trace: None,
                    bandwidth_kind: Some(k.bandwidth.kind),
                    support_points: Some(k.len()),
                },
                values,
            )
        }
    };
    fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    write_f64s(&bin, &values)?;
    Ok(manifest)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(DensityModel, ModelManifest)> {
    let path = path.as_ref();
    let manifest: ModelManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if manifest.format != FORMAT {
        return Err(Error::Schema(format!("unsupported model format `{}`", manifest.format)));
    }
    let bin = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.params_file);
    let values = read_f64s(&bin)?;
    if values.len() != manifest.param_count {
        return Err(Error::Schema(format!(
            "expected {} parameters, found {}",
            manifest.param_count,
            values.len()
        )));
    }
    let d = manifest.dim;
    let model = match manifest.kind.as_str() {
        "flow" => {
            let cfg = manifest
                .flow
                .ok_or_else(|| Error::Schema("flow manifest without architecture".into()))?;
            let mut f = FlowModel::identity(d, cfg, manifest.seed.unwrap_or(0))?;
            if f.stack.param_count() != values.len() {
                return Err(Error::Schema("parameter count does not match architecture".into()));
            }
            f.stack.assign(&values);
            f.trace = manifest.training_trace.clone().unwrap_or_default();
            DensityModel::Flow(f)
        }
        "kde" => {
            let n = manifest
                .support_points
                .ok_or_else(|| Error::Schema("kde manifest without support size".into()))?;
            if n * d + d * d != values.len() {
                return Err(Error::Schema("kde parameter count mismatch".into()));
            }
            let points = values[..n * d].chunks(d).map(<[f64]>::to_vec).collect();
            let chol = DMatrix::from_row_slice(d, d, &values[n * d..]);
            let kind = manifest.bandwidth_kind.unwrap_or_default();
            DensityModel::Kde(KdeModel::with_bandwidth(points, Bandwidth { kind, chol })?)
        }
        other => return Err(Error::Schema(format!("unknown model kind `{other}`"))),
    };
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn rows(n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(1);
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn flow_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = FlowConfig {
            layers: 2,
            hidden: 4,
            epochs: 2,
            ..Default::default()
        };
        let data = rows(40, 5);
        let f = FlowModel::fit(&data, cfg, 3).unwrap();
        let model = DensityModel::Flow(f);
        let path = dir.path().join("flow.json");
        let meta = ContinuousSpaceMeta::cartpole();
        save_model(&model, Some(&meta), &path).unwrap();
        let bytes = std::fs::metadata(dir.path().join("flow.bin")).unwrap().len();
        let (back, manifest) = load_model(&path).unwrap();
        assert_eq!(bytes as usize, manifest.param_count * 8);
        assert_eq!(manifest.normalization, Some(meta));
        for x in &data {
            assert_eq!(model.log_density(x).unwrap(), back.log_density(x).unwrap());
        }
    }

    #[test]
    fn kde_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let data = rows(30, 3);
        for kind in [BandwidthKind::Diagonal, BandwidthKind::Full] {
            let model = DensityModel::Kde(KdeModel::fit(data.clone(), kind).unwrap());
            let path = dir.path().join("kde.json");
            save_model(&model, None, &path).unwrap();
            let (back, _) = load_model(&path).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn truncated_params_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = DensityModel::Kde(KdeModel::fit(rows(10, 2), BandwidthKind::Diagonal).unwrap());
        let path = dir.path().join("m.json");
        save_model(&model, None, &path).unwrap();
        std::fs::write(dir.path().join("m.bin"), [0u8; 12]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Schema(_))));
    }
}
