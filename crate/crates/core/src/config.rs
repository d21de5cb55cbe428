//! Run configuration (TOML) and artifact files with provenance headers.
//!
//! Every artifact written by the CLI embeds the SHA-256 of the config file
//! that produced it, the effective seed, and a SHA-256 of its own payload.
//! Loaders re-verify both hashes: a payload mismatch means corruption, a
//! config mismatch means the artifact was produced by a different
//! configuration than the one orchestrating the current run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayes::ChainConfig;
use crate::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Ground-truth construction: either a density-matrix file or the
/// coherence-model parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    /// Path to a density-matrix text file (takes precedence over `model`).
    pub rho_path: Option<String>,
    pub model: Option<ModelConfig>,
    pub gamma_in: f64,
    pub w_l: f64,
    pub photon_prob: f64,
    pub exposure_s: f64,
    pub electron_rate_hz: f64,
    pub background_rate_hz: [f64; 2],
    pub detector_delays_ps: [i64; 2],
    pub jitter_ps: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self::experimental_defaults()
    }
}

impl TruthConfig {
    pub fn experimental_defaults() -> Self {
        Self {
            rho_path: None,
            model: Some(ModelConfig::default()),
            gamma_in: 0.727,
            w_l: 0.64,
            photon_prob: 1e-2,
            exposure_s: 440.0,
            electron_rate_hz: 2e5,
            background_rate_hz: [2e3, 2e3],
            detector_delays_ps: [100_000, 120_000],
            jitter_ps: 800.0,
        }
    }
}

/// Parameters of the built-in entangled model state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Bloch-sphere angle between the two conditional photon states.
    pub bloch_separation_deg: f64,
    pub photon_purity: f64,
    pub coherence: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            bloch_separation_deg: 121.0,
            photon_purity: 1.0,
            coherence: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternConfig {
    pub width: u32,
    pub height: u32,
    pub period_px: f64,
    pub angle_deg: f64,
    pub sim_phase_bins: usize,
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            period_px: 64.0,
            angle_deg: 0.0,
            sim_phase_bins: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    /// Waveplate settings `(qwp_deg, hwp_deg)` of the fringe measurements.
    pub settings: Vec<[f64; 2]>,
    pub phase_bins: usize,
    pub emit_counts: bool,
    pub emit_scan: bool,
    pub emit_events: bool,
    /// Event-stream duration per setting, seconds.
    pub duration_s: f64,
    pub pattern: PatternConfig,
    /// Scan grid step in degrees over 0..=90.
    pub scan_step_deg: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            settings: vec![[30.0, 28.0], [30.0, 95.0], [74.0, 80.0]],
            phase_bins: 16,
            emit_counts: true,
            emit_scan: true,
            emit_events: false,
            duration_s: 4.0,
            pattern: PatternConfig::default(),
            scan_step_deg: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Event files to process; discovered as `events_*.csv` in the output
    /// directory when empty.
    pub events: Vec<String>,
    pub bin_width_ps: i64,
    pub range_ps: i64,
    pub phase_bins: usize,
    pub n_background_windows: usize,
    /// Optional per-detector `[lo, hi]` window override in ps.
    pub window_override: Option<[[i64; 2]; 2]>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            events: Vec::new(),
            bin_width_ps: crate::events::DEFAULT_BIN_WIDTH_PS,
            range_ps: crate::events::DEFAULT_RANGE_PS,
            phase_bins: 32,
            n_background_windows: 10,
            window_override: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ScanMleConfig {
    /// Scan count file; defaults to `scan_counts.csv` in the output dir.
    pub scan_counts: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ReconstructConfig {
    /// Fringe count files; defaults to `fringe_counts.csv` in the output dir.
    pub fringe_counts: Vec<String>,
    /// Optional scan count file joined into the likelihood.
    pub scan_counts: Option<String>,
    pub chain: ChainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherenceConfig {
    /// Beam population of the left beam; `b = 1 − a`.
    pub a: f64,
    pub gamma: f64,
    /// Channel photon states; default to the scan-MLE artifacts.
    pub rho0_path: Option<String>,
    pub rho1_path: Option<String>,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self {
            a: 0.64,
            gamma: 0.727,
            rho0_path: None,
            rho1_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeConfig {
    /// Samples file; defaults to `samples.txt` in the output dir.
    pub samples: Option<String>,
    pub bins: usize,
    pub coherence: Option<CoherenceConfig>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            samples: None,
            bins: 60,
            coherence: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseConfig {
    pub samples: Option<String>,
    pub traces: Option<String>,
    pub max_lag: usize,
    pub rhat_points: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            samples: None,
            traces: None,
            max_lag: 200,
            rhat_points: 50,
        }
    }
}

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub threads: usize,
    pub truth: TruthConfig,
    pub simulate: SimulateConfig,
    pub pipeline: PipelineConfig,
    pub scan_mle: ScanMleConfig,
    pub reconstruct: ReconstructConfig,
    pub analyze: AnalyzeConfig,
    pub diagnose: DiagnoseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: "out".into(),
            threads: 0,
            truth: TruthConfig::experimental_defaults(),
            simulate: SimulateConfig::default(),
            pipeline: PipelineConfig::default(),
            scan_mle: ScanMleConfig::default(),
            reconstruct: ReconstructConfig::default(),
            analyze: AnalyzeConfig::default(),
            diagnose: DiagnoseConfig::default(),
        }
    }
}

/// A parsed config together with its provenance hash and base directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// SHA-256 of the config file bytes.
    pub hash: String,
    /// Directory of the config file; input paths resolve against it.
    pub base_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path)?;
    let config: RunConfig = toml::from_str(&String::from_utf8_lossy(&bytes))
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
    Ok(LoadedConfig {
        config,
        hash: sha256_hex(&bytes),
        base_dir: path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    })
}

/// Provenance recorded at the top of every artifact.
#[derive(Debug, Clone)]
pub struct ArtifactMeta {
    pub command: String,
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub extra: BTreeMap<String, String>,
}

/// Serialises an artifact with its provenance header and payload hash.
pub fn artifact_to_string(meta: &ArtifactMeta, payload: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!("# eptomo: {} {}\n", meta.command, meta.name));
    s.push_str(&format!("# config_sha256: {}\n", meta.config_hash));
    s.push_str(&format!("# seed: {}\n", meta.seed));
    for (k, v) in &meta.extra {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    s.push_str(&format!("# data_sha256: {}\n", sha256_hex(payload.as_bytes())));
    s.push_str(payload);
    s
}

pub fn write_artifact(path: &Path, meta: &ArtifactMeta, payload: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, artifact_to_string(meta, payload))?;
    Ok(())
}

/// Header fields and payload of a loaded artifact (or a bare file without a
/// header, in which case the map is empty).
#[derive(Debug, Clone)]
pub struct LoadedArtifact {
    pub headers: BTreeMap<String, String>,
    pub payload: String,
}

/// Reads a file, verifying the embedded payload hash when a provenance
/// header is present. When `expect_config_hash` is given and the artifact
/// carries a `config_sha256` header, the two must agree.
pub fn read_artifact(path: &Path, expect_config_hash: Option<&str>) -> Result<LoadedArtifact> {
    let text = std::fs::read_to_string(path)?;
    if !text.starts_with("# eptomo:") {
        return Ok(LoadedArtifact {
            headers: BTreeMap::new(),
            payload: text,
        });
    }
    let mut headers = BTreeMap::new();
    let mut payload_start = 0usize;
    for line in text.lines() {
        if !line.starts_with('#') {
            break;
        }
        payload_start += line.len() + 1;
        let body = line.trim_start_matches('#').trim();
        if let Some((k, v)) = body.split_once(':') {
            headers.insert(k.trim().to_string(), v.trim().to_string());
        }
        if body.starts_with("data_sha256") {
            break;
        }
    }
    let payload = text[payload_start.min(text.len())..].to_string();
    if let Some(expected) = headers.get("data_sha256") {
        let got = sha256_hex(payload.as_bytes());
        if &got != expected {
            return Err(Error::HashMismatch {
                path: path.display().to_string(),
            });
        }
    }
    if let (Some(expect), Some(embedded)) = (expect_config_hash, headers.get("config_sha256")) {
        if embedded != expect {
            return Err(Error::HashMismatch {
                path: path.display().to_string(),
            });
        }
    }
    Ok(LoadedArtifact { headers, payload })
}
