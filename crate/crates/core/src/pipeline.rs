//! End-to-end orchestration: windows, auto-encoder, features, leakage
//! models and ranking sweeps, with on-disk artifacts.
//!
//! Component seeds derive from one master seed as
//! `seed::derive(master, tag, index)` with the tags `"jitter"`, `"ae"` and
//! `"mlp"` (index = attacked byte for the MLP).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{self, linear_grid, CandidateScore, KeySweepResult, ScaulConfig};
use crate::autoencoder::{extract_features, train_autoencoder, AeTrainConfig, AutoEncoder, FeatureMatrix};
use crate::sensitivity::{candidate_model, LeakageModel, MlpConfig, SensitivityConfig};
use crate::trace::{extract_windows_for, load_traces, minmax_normalize, SubTraceSet, TraceSet, WindowSpec};
use crate::{seed, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMode {
    DpaRaw,
    DpaFeatures,
    Scaul,
}

impl AttackMode {
    pub fn name(self) -> &'static str {
        match self {
            AttackMode::DpaRaw => "dpa-raw",
            AttackMode::DpaFeatures => "dpa-features",
            AttackMode::Scaul => "scaul",
        }
    }
}

impl std::str::FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpa-raw" => Ok(AttackMode::DpaRaw),
            "dpa-features" => Ok(AttackMode::DpaFeatures),
            "scaul" => Ok(AttackMode::Scaul),
            _ => Err(Error::Argument(format!(
                "unknown attack mode {s:?} (dpa-raw, dpa-features, scaul)"
            ))),
        }
    }
}

/// Where the 16 S-box clocks sit in the traces and how windows are cut.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowConfig {
    pub first_clock: usize,
    pub clock_len: usize,
    pub length: usize,
    pub jitter_halfwidth: usize,
}

impl Default for WindowConfig {
    /// Matches the simulator defaults.
    fn default() -> Self {
        WindowConfig {
            first_clock: 100,
            clock_len: 125,
            length: 125,
            jitter_halfwidth: 0,
        }
    }
}

impl WindowConfig {
    pub fn spec(&self) -> Result<WindowSpec> {
        WindowSpec::for_clocks(self.first_clock, self.clock_len, self.length, self.jitter_halfwidth)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub byte: usize,
    pub window: WindowConfig,
    pub ae: AeTrainConfig,
    /// Train the auto-encoder on the windows of only the first traces.
    pub ae_train_traces: Option<usize>,
    pub mlp: MlpConfig,
    pub sensitivity: SensitivityConfig,
    pub grid_step: usize,
    /// Coarser grid for the SCAUL sweep, which refits 256 models per point.
    pub scaul_grid_step: Option<usize>,
    pub modes: Vec<AttackMode>,
    /// Worker threads; `None` leaves the global pool alone.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: crate::DEFAULT_SEED,
            byte: 0,
            window: WindowConfig::default(),
            ae: AeTrainConfig::default(),
            ae_train_traces: None,
            mlp: MlpConfig::default(),
            sensitivity: SensitivityConfig::default(),
            grid_step: 250,
            scaul_grid_step: None,
            modes: vec![AttackMode::DpaRaw, AttackMode::DpaFeatures, AttackMode::Scaul],
            threads: None,
        }
    }
}

impl PipelineConfig {
    pub fn jitter_seed(&self) -> u64 {
        seed::derive(self.seed, "jitter", 0)
    }

    /// Auto-encoder config with the derived seed.
    pub fn ae_config(&self) -> AeTrainConfig {
        AeTrainConfig {
            seed: seed::derive(self.seed, "ae", 0),
            ..self.ae.clone()
        }
    }

    /// MLP config with the derived seed for the attacked byte.
    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            seed: seed::derive(self.seed, "mlp", self.byte as u64),
            ..self.mlp.clone()
        }
    }

    pub fn scaul_config(&self, fixed_model: Option<LeakageModel>) -> ScaulConfig {
        ScaulConfig {
            mlp: self.mlp_config(),
            sensitivity: self.sensitivity.clone(),
            fixed_model,
        }
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (or the global pool).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("thread count must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Windows of the given S-boxes, jittered per the config.
pub fn windows(ts: &TraceSet, cfg: &PipelineConfig, bytes: &[usize]) -> Result<SubTraceSet> {
    extract_windows_for(ts, &cfg.window.spec()?, Some(cfg.jitter_seed()), bytes)
}

/// Trains the auto-encoder on all 16 windows of the (first) traces.
pub fn train_stage(ts: &TraceSet, cfg: &PipelineConfig) -> Result<AutoEncoder<f32>> {
    let all: Vec<usize> = (0..16).collect();
    let sub = windows(ts, cfg, &all)?;
    let sub = match cfg.ae_train_traces {
        Some(n) => sub.first_traces(n),
        None => sub,
    };
    log::info!(
        "training auto-encoder on {} sub-traces of {} samples",
        sub.len(),
        sub.window_len()
    );
    let trained = train_autoencoder::<f32>(&sub, &cfg.ae_config())?;
    log::info!("auto-encoder loss history: {:?}", trained.history);
    Ok(trained.model)
}

/// Features of the attacked byte's windows, one row per trace.
pub fn features_stage(ae: &AutoEncoder<f32>, ts: &TraceSet, cfg: &PipelineConfig) -> Result<FeatureMatrix<f32>> {
    let sub = windows(ts, cfg, &[cfg.byte])?;
    extract_features(ae, &sub, &format!("auto-encoder features, byte {}", cfg.byte))
}

/// Leakage model of one key candidate from unnormalized features.
pub fn leakage_stage(features: &FeatureMatrix<f32>, candidate: u8, cfg: &PipelineConfig) -> Result<LeakageModel> {
    let x = minmax_normalize(features.data.view())?;
    let p = attack::plaintext_bytes(&features.plaintexts, cfg.byte);
    candidate_model(x.view(), &p, candidate, &cfg.mlp_config(), &cfg.sensitivity)
}

/// Inputs an attack may need; which ones must be present depends on the mode.
pub struct AttackInputs<'a> {
    pub traces: Option<&'a TraceSet>,
    pub features: Option<&'a FeatureMatrix<f32>>,
    pub fixed_model: Option<&'a LeakageModel>,
}

fn need<'a, T>(x: Option<&'a T>, what: &str, mode: AttackMode) -> Result<&'a T> {
    x.ok_or_else(|| Error::Argument(format!("mode {} needs {what}", mode.name())))
}

/// Scores of all 256 candidates on the full input.
pub fn attack_stage(mode: AttackMode, inputs: &AttackInputs<'_>, cfg: &PipelineConfig) -> Result<Vec<CandidateScore>> {
    match mode {
        AttackMode::DpaRaw => {
            let ts = need(inputs.traces, "traces", mode)?;
            attack::dpa_raw(&windows(ts, cfg, &[cfg.byte])?, cfg.byte)
        }
        AttackMode::DpaFeatures => {
            let f = need(inputs.features, "features", mode)?;
            let x = FeatureMatrix::new(minmax_normalize(f.data.view())?, f.plaintexts.clone(), "")?;
            attack::dpa_features(&x, cfg.byte)
        }
        AttackMode::Scaul => {
            let f = need(inputs.features, "features", mode)?;
            attack::scaul_rank(f, cfg.byte, &cfg.scaul_config(inputs.fixed_model.cloned()))
        }
    }
}

/// Rank-versus-traces sweep of one mode.
pub fn sweep_stage(
    mode: AttackMode,
    inputs: &AttackInputs<'_>,
    true_key: Option<u8>,
    cfg: &PipelineConfig,
) -> Result<KeySweepResult> {
    match mode {
        AttackMode::DpaRaw => {
            let ts = need(inputs.traces, "traces", mode)?;
            let grid = linear_grid(cfg.grid_step, ts.num_traces());
            attack::sweep_raw(&windows(ts, cfg, &[cfg.byte])?, cfg.byte, true_key, &grid)
        }
        AttackMode::DpaFeatures => {
            let f = need(inputs.features, "features", mode)?;
            let grid = linear_grid(cfg.grid_step, f.num_rows());
            attack::sweep_features(f, cfg.byte, true_key, &grid)
        }
        AttackMode::Scaul => {
            let f = need(inputs.features, "features", mode)?;
            let grid = linear_grid(cfg.scaul_grid_step.unwrap_or(cfg.grid_step), f.num_rows());
            attack::sweep_scaul(f, cfg.byte, true_key, &grid, &cfg.scaul_config(inputs.fixed_model.cloned()))
        }
    }
}

/// Paths written by [`run_pipeline`].
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineArtifacts {
    pub checkpoint: PathBuf,
    pub features: PathBuf,
    pub leakage_model: Option<PathBuf>,
    /// `(mode, json, csv)` per swept mode.
    pub sweeps: Vec<(AttackMode, PathBuf, PathBuf)>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutputs {
    pub artifacts: PipelineArtifacts,
    pub sweeps: Vec<KeySweepResult>,
}

/// train-ae, features, leakage (for the known key, if stored), then a sweep
/// per mode. Artifacts go to `out_dir`.
pub fn run_pipeline(ts: &TraceSet, out_dir: &Path, cfg: &PipelineConfig) -> Result<PipelineOutputs> {
    with_threads(cfg.threads, || run_pipeline_inner(ts, out_dir, cfg))?
}

fn run_pipeline_inner(ts: &TraceSet, out_dir: &Path, cfg: &PipelineConfig) -> Result<PipelineOutputs> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let true_key = ts.known_key().map(|k| k[cfg.byte]);
    let ae = train_stage(ts, cfg)?;
    let checkpoint = out_dir.join("autoencoder.scnn");
    ae.save(&checkpoint)?;
    let features = features_stage(&ae, ts, cfg)?;
    let feature_path = out_dir.join("features.scft");
    features.save(&feature_path)?;
    let leakage_model = match true_key {
        Some(k) => {
            let model = leakage_stage(&features, k, cfg)?;
            let path = out_dir.join("leakage.json");
            model.save(&path)?;
            Some(path)
        }
        None => None,
    };
    let inputs = AttackInputs {
        traces: Some(ts),
        features: Some(&features),
        fixed_model: None,
    };
    let mut sweeps = Vec::new();
    let mut paths = Vec::new();
    for mode in &cfg.modes {
        log::info!("sweeping {}", mode.name());
        let result = sweep_stage(*mode, &inputs, true_key, cfg)?;
        let json = out_dir.join(format!("sweep-{}.json", mode.name()));
        let csv = out_dir.join(format!("sweep-{}.csv", mode.name()));
        result.save_json(&json)?;
        result.save_csv(&csv)?;
        paths.push((*mode, json, csv));
        sweeps.push(result);
    }
    Ok(PipelineOutputs {
        artifacts: PipelineArtifacts {
            checkpoint,
            features: feature_path,
            leakage_model,
            sweeps: paths,
        },
        sweeps,
    })
}

/// Loads a trace file, naming it in the error if it is missing.
pub fn load_input(path: &Path) -> Result<TraceSet> {
    if !path.exists() {
        return Err(Error::Argument(format!("input trace file {} does not exist", path.display())));
    }
    load_traces(path)
}
