//! Per-command configuration. A JSON file is merged key by key over the
//! serialized defaults, so partial nested objects keep the defaults of the
//! keys they omit; flags are applied last.

use std::path::Path;

use geneoh::metrics::EvalOptions;
use geneoh::pipeline::StageConfig;
use geneoh::rep::ContactConfig;
use geneoh::scene::{BetaNoise, GaussianNoise, SynthConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub clips: usize,
    /// Clip `i` uses seed `seed + i`.
    pub seed: u64,
    pub synth: SynthConfig,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            clips: 10,
            seed: 0,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Gaussian,
    Beta,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub mode: NoiseMode,
    /// Clip `i` uses seed `seed + i`.
    pub seed: u64,
    pub gaussian: GaussianNoise,
    pub beta: BetaNoise,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// The sample whose final trajectory is nearest the noisy input.
    #[default]
    Closest,
    /// The first sample.
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    /// Clip `i`, sample `s` draws from seed [`sample_seed`]`(seed, i, s)`.
    pub seed: u64,
    pub num_samples: usize,
    pub select: Selection,
    pub stage: StageConfig,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_samples: 1,
            select: Selection::Closest,
            stage: StageConfig::default(),
        }
    }
}

pub fn sample_seed(seed: u64, clip: usize, sample: usize) -> u64 {
    seed.wrapping_add((clip as u64) << 20).wrapping_add(sample as u64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub options: EvalOptions,
    /// Contact points anchoring proximity and motion consistency, taken
    /// from the reference clip when there is one.
    pub contact: ContactConfig,
    pub contact_seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    #[default]
    Obj,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub format: ExportFormat,
    /// Hand surface samples per meter of bone.
    pub hand_density: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            format: ExportFormat::Obj,
            hand_density: geneoh::metrics::METRIC_SURFACE_DENSITY,
        }
    }
}

/// Overlays `over` onto `base`. Objects merge recursively; anything else
/// replaces. Keys absent from `base` are unknown and rejected.
pub fn merge(base: &mut Value, over: Value, path: &str) -> CliResult<()> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None => return Err(CliError::Validation(format!("unknown config key {here:?}"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Defaults of `T`, overlaid with the JSON text if any.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(text: Option<&str>) -> CliResult<T> {
    let mut value = serde_json::to_value(T::default()).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(text) = text {
        let over: Value = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        if !over.is_object() {
            return Err(CliError::Validation("config must be a JSON object".into()));
        }
        merge(&mut value, over, "")?;
    }
    serde_json::from_value(value).map_err(|e| CliError::Validation(format!("config: {e}")))
}

pub fn load<T: Serialize + DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            resolve(Some(&text)).map_err(|e| e.context(&p.display().to_string()))
        }
        None => resolve(None),
    }
}
