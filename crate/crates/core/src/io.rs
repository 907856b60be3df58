//! Versioned JSON model files.
//!
//! A file carries the network, clamp, bounds, KDE statistics and training
//! provenance, plus a battery of probe points with the scores the saved
//! model produced for them. Loading recomputes those scores and refuses the
//! file unless every one matches bit for bit.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dims;
use crate::error::{CdrmError, Result};
use crate::kde::KdeStats;
use crate::model::CdrmModel;
use crate::nnet::MlpNetwork;

pub const SCHEMA_VERSION: u32 = 1;

const SELF_CHECK_PROBES: usize = 16;
const SELF_CHECK_SEED: u64 = 0x5E1F_C4EC;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// Hex SHA-256 of the training configuration JSON.
    pub config_hash: String,
    pub seed: u64,
    pub epochs: usize,
}

impl Provenance {
    pub fn new(config_json: &str, seed: u64, epochs: usize) -> Self {
        Self {
            config_hash: sha256_hex(config_json.as_bytes()),
            seed,
            epochs,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfCheck {
    pub probes: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub dims: Dims,
    pub layer_dims: Vec<usize>,
    /// Per layer, `out` rows of `in` weights.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub logit_clip: f64,
    pub input_bounds: Vec<(f64, f64)>,
    pub kde: Option<KdeStats>,
    pub provenance: Provenance,
    pub self_check: SelfCheck,
}

/// Probe points spread over the input box, including its center.
fn probe_battery(bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SELF_CHECK_SEED);
    let mut probes = vec![bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()];
    for _ in 1..SELF_CHECK_PROBES {
        probes.push(bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect());
    }
    probes
}

impl ModelFile {
    pub fn from_model(model: &CdrmModel, provenance: Provenance) -> Result<Self> {
        let net = model.net();
        let probes = probe_battery(model.input_bounds());
        let scores = probes
            .iter()
            .map(|p| model.score_joint(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            dims: model.dims(),
            layer_dims: net.layer_dims().to_vec(),
            weights: net
                .weights()
                .iter()
                .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
            biases: net.biases().iter().map(|b| b.to_vec()).collect(),
            logit_clip: model.logit_clip(),
            input_bounds: model.input_bounds().to_vec(),
            kde: model.kde().cloned(),
            provenance,
            self_check: SelfCheck { probes, scores },
        })
    }

    /// Rebuilds the model and verifies the self-check battery.
    pub fn to_model(&self) -> Result<CdrmModel> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CdrmError::UnsupportedVersion {
                found: self.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        let mut weights = Vec::with_capacity(self.weights.len());
        for (i, rows) in self.weights.iter().enumerate() {
            let n_in = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != n_in) {
                return Err(CdrmError::InvalidInput(format!("layer {i} weights are ragged")));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            weights.push(Array2::from_shape_vec((rows.len(), n_in), flat).expect("rectangular"));
        }
        let biases = self.biases.iter().map(|b| Array1::from(b.clone())).collect();
        let net = MlpNetwork::from_parts(weights, biases)?;
        if net.layer_dims() != self.layer_dims.as_slice() {
            return Err(CdrmError::InvalidInput(
                "layer_dims disagree with the stored weight shapes".into(),
            ));
        }
        let mut model =
            CdrmModel::with_clip(net, self.dims, self.input_bounds.clone(), self.logit_clip)?;
        if let Some(kde) = &self.kde {
            model.set_kde(kde.clone())?;
        }

        let check = &self.self_check;
        if check.probes.len() != check.scores.len() {
            return Err(CdrmError::SelfCheck("probe and score counts differ".into()));
        }
        for (i, (p, &want)) in check.probes.iter().zip(&check.scores).enumerate() {
            let got = model.score_joint(p)?;
            if got.to_bits() != want.to_bits() {
                return Err(CdrmError::SelfCheck(format!(
                    "probe {i} scored {got:e}, file records {want:e}"
                )));
            }
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| CdrmError::Parse {
                line: 0,
                message: "missing or non-integer schema_version".into(),
            })?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(CdrmError::UnsupportedVersion {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                supported: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &CdrmModel, provenance: Provenance) -> Result<()> {
    let path = path.as_ref();
    let text = ModelFile::from_model(model, provenance)?.to_json()?;
    std::fs::write(path, text).map_err(|e| CdrmError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(CdrmModel, Provenance)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CdrmError::io(path, e))?;
    let file = ModelFile::from_json(&text)?;
    let model = file.to_model()?;
    Ok((model, file.provenance))
}
