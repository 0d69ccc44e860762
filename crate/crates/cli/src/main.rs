//! `scaul`: simulate traces, train the auto-encoder, extract features, detect
//! leakage models and rank AES key bytes.

mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use scaul::attack::{key_rank, ranking, KeySweepResult};
use scaul::autoencoder::{AeArchitecture, AeTrainConfig, AutoEncoder, FeatureMatrix};
use scaul::nn::AdamConfig;
use scaul::pipeline::{self, AttackInputs, AttackMode, PipelineConfig, WindowConfig};
use scaul::sensitivity::{LeakageModel, MlpConfig, SensitivityConfig, VariationMode};
use scaul::sim::{snr, Baseline, BaselineShape, LeakageKind, SimConfig, SnrClasses};
use scaul::trace::{save_traces, Block, TraceSet};

#[derive(Parser, Debug)]
#[command(name = "scaul", version, about = "Unsupervised power side-channel analysis of AES-128")]
struct Cli {
    /// 64-bit master seed (decimal or 0x-prefixed hex).
    #[arg(long, global = true, value_parser = parse_u64)]
    seed: Option<u64>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "SCAUL_THREADS")]
    threads: Option<usize>,

    /// `key = value` file of default flag values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a simulated trace set.
    Simulate(SimulateArgs),
    /// Train the LSTM auto-encoder and save a checkpoint.
    TrainAe(TrainArgs),
    /// Encode one byte's windows into a feature file.
    Features(FeaturesArgs),
    /// Fit the leakage model of one key candidate.
    Leakage(LeakageArgs),
    /// Rank all key candidates of one byte.
    Attack(AttackArgs),
    /// Rank versus number of traces.
    Sweep(SweepArgs),
    /// Convert a sweep JSON file to the rank-curve CSV.
    Report(ReportArgs),
    /// Run train-ae, features, leakage and sweeps in one go.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LeakageArg {
    Hw,
    Msb,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineArg {
    Flat,
    Sine,
    Sawtooth,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    DpaRaw,
    DpaFeatures,
    Scaul,
}

impl From<ModeArg> for AttackMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::DpaRaw => AttackMode::DpaRaw,
            ModeArg::DpaFeatures => AttackMode::DpaFeatures,
            ModeArg::Scaul => AttackMode::Scaul,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariationArg {
    Soft,
    Relative,
    Label,
    LabelRelative,
    Hard,
}

impl From<VariationArg> for VariationMode {
    fn from(v: VariationArg) -> Self {
        match v {
            VariationArg::Soft => VariationMode::Soft,
            VariationArg::Relative => VariationMode::Relative,
            VariationArg::Label => VariationMode::Label,
            VariationArg::LabelRelative => VariationMode::LabelRelative,
            VariationArg::Hard => VariationMode::Hard,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    traces: usize,
    #[arg(long, default_value_t = 125)]
    samples_per_clock: usize,
    #[arg(long, value_enum, default_value = "hw")]
    leakage: LeakageArg,
    /// Leak amplitude `a`.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Gaussian noise standard deviation.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    sigma: f64,
    /// Width of the triangular leak profile in samples.
    #[arg(long, default_value_t = 5)]
    spread: usize,
    /// Half-width of the per-clock timing jitter.
    #[arg(long, default_value_t = 0)]
    sim_jitter: usize,
    /// Samples before the first and after the last clock, in total.
    #[arg(long, default_value_t = 200)]
    margin: usize,
    #[arg(long, value_enum, default_value = "sine")]
    baseline: BaselineArg,
    #[arg(long, default_value_t = 1.0)]
    baseline_amplitude: f64,
    /// AES key as 32 hex digits.
    #[arg(long, default_value = "2b7e151628aed2a6abf7158809cf4f3c", value_parser = parse_key)]
    key: Block,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct WindowArgs {
    /// First sample of the first S-box clock.
    #[arg(long, default_value_t = 100)]
    first_clock: usize,
    #[arg(long, default_value_t = 125)]
    clock_len: usize,
    /// Sub-trace length.
    #[arg(long, default_value_t = 125)]
    window: usize,
    /// Half-width of the random window misalignment.
    #[arg(long, default_value_t = 0)]
    jitter: usize,
}

impl WindowArgs {
    fn config(&self) -> WindowConfig {
        WindowConfig {
            first_clock: self.first_clock,
            clock_len: self.clock_len,
            length: self.window,
            jitter_halfwidth: self.jitter,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct AeArgs {
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    /// Encoder input window width.
    #[arg(long, default_value_t = 10)]
    ae_window: usize,
    #[arg(long, default_value_t = 2)]
    stride: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Train on the windows of only the first N traces.
    #[arg(long)]
    ae_traces: Option<usize>,
    #[arg(long, default_value_t = 5)]
    patience: usize,
}

impl AeArgs {
    fn config(&self) -> AeTrainConfig {
        AeTrainConfig {
            arch: AeArchitecture {
                hidden: self.hidden,
                window: self.ae_window,
                stride: self.stride,
            },
            epochs: self.epochs,
            batch_size: self.batch,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            patience: self.patience,
            ..AeTrainConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
struct MlpArgs {
    /// Hidden layer sizes, comma separated.
    #[arg(long, default_value = "64,32,16", value_delimiter = ',')]
    mlp_hidden: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    mlp_epochs: usize,
    #[arg(long, default_value_t = 64)]
    mlp_batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    mlp_lr: f64,
    /// Cap on optimizer steps per candidate.
    #[arg(long)]
    mlp_max_steps: Option<usize>,
    /// First-layer perturbation relative to the weights' RMS.
    #[arg(long, default_value_t = 0.01)]
    delta_scale: f64,
    #[arg(long, value_enum, default_value = "label-relative")]
    variation: VariationArg,
}

impl MlpArgs {
    fn mlp(&self) -> MlpConfig {
        MlpConfig {
            hidden: self.mlp_hidden.clone(),
            epochs: self.mlp_epochs,
            batch_size: self.mlp_batch,
            adam: AdamConfig {
                lr: self.mlp_lr,
                ..AdamConfig::default()
            },
            max_steps: self.mlp_max_steps,
            ..MlpConfig::default()
        }
    }

    fn sensitivity(&self) -> SensitivityConfig {
        SensitivityConfig {
            delta_scale: self.delta_scale,
            mode: self.variation.into(),
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    traces: PathBuf,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    ae: AeArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long)]
    traces: PathBuf,
    /// Auto-encoder checkpoint.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    byte: usize,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LeakageArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 0)]
    byte: usize,
    /// Key candidate (decimal or 0x-prefixed hex).
    #[arg(long, value_parser = parse_u8)]
    candidate: u8,
    #[command(flatten)]
    mlp: MlpArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AttackInputArgs {
    #[arg(long, value_enum, default_value = "scaul")]
    mode: ModeArg,
    /// Trace file (dpa-raw; also supplies the known key).
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Feature file (dpa-features, scaul).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Rank every candidate with this one leakage model.
    #[arg(long)]
    fixed_model: Option<PathBuf>,
    /// True key byte, for reporting ranks.
    #[arg(long, value_parser = parse_u8)]
    true_key: Option<u8>,
    #[arg(long, default_value_t = 0)]
    byte: usize,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    mlp: MlpArgs,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[command(flatten)]
    input: AttackInputArgs,
    /// Scores as JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    input: AttackInputArgs,
    #[arg(long, default_value_t = 250)]
    grid_step: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the rank-curve CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    sweep: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    byte: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "dpa-raw,dpa-features,scaul")]
    modes: Vec<ModeArg>,
    #[arg(long, default_value_t = 250)]
    grid_step: usize,
    /// Grid step of the SCAUL sweep (defaults to --grid-step).
    #[arg(long)]
    scaul_grid_step: Option<usize>,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    ae: AeArgs,
    #[command(flatten)]
    mlp: MlpArgs,
}

fn parse_u64(s: &str) -> std::result::Result<u64, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(&h.replace('_', ""), 16),
        None => s.replace('_', "").parse(),
    };
    r.map_err(|e| format!("not a 64-bit integer: {e}"))
}

fn parse_u8(s: &str) -> std::result::Result<u8, String> {
    let v = parse_u64(s)?;
    u8::try_from(v).map_err(|_| format!("{v} does not fit in a byte"))
}

fn parse_key(s: &str) -> std::result::Result<Block, String> {
    let s = s.trim();
    if s.len() != 32 || !s.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err("expected 32 hex digits".into());
    }
    let mut key = [0u8; 16];
    for (i, k) in key.iter_mut().enumerate() {
        *k = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|e| e.to_string())?;
    }
    Ok(key)
}

struct Globals {
    seed: u64,
    threads: Option<usize>,
}

fn main() {
    let cmd = Cli::command()
        .args_override_self(true)
        .mut_subcommands(|s| s.args_override_self(true));
    let args = match config::splice(&cmd, std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    };
    let matches = cmd.get_matches_from(args);
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let globals = Globals {
        seed: cli.seed.unwrap_or(scaul::DEFAULT_SEED),
        threads: cli.threads,
    };
    log::info!("master seed {:#018x}", globals.seed);
    let result = pipeline::with_threads(globals.threads, || run(cli.command, &globals)).map_err(anyhow::Error::from);
    if let Err(e) = result.and_then(|r| r) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cmd: Cmd, g: &Globals) -> Result<()> {
    match cmd {
        Cmd::Simulate(a) => simulate(a, g),
        Cmd::TrainAe(a) => train_ae(a, g),
        Cmd::Features(a) => features(a, g),
        Cmd::Leakage(a) => leakage(a, g),
        Cmd::Attack(a) => attack(a, g),
        Cmd::Sweep(a) => sweep(a, g),
        Cmd::Report(a) => report(a),
        Cmd::Pipeline(a) => run_pipeline(a, g),
    }
}

fn load_traces(path: &Path) -> Result<TraceSet> {
    pipeline::load_input(path).with_context(|| format!("loading traces from {}", path.display()))
}

fn load_features(path: &Path) -> Result<FeatureMatrix<f32>> {
    if !path.exists() {
        bail!("feature file {} does not exist (run `scaul features` first)", path.display());
    }
    FeatureMatrix::load(path).with_context(|| format!("loading features from {}", path.display()))
}

fn simulate(a: SimulateArgs, g: &Globals) -> Result<()> {
    let cfg = SimConfig {
        num_traces: a.traces,
        samples_per_clock: a.samples_per_clock,
        leakage: match a.leakage {
            LeakageArg::Hw => LeakageKind::HammingWeight,
            LeakageArg::Msb => LeakageKind::Msb,
        },
        leak_amplitude: a.amplitude,
        noise_sigma: a.sigma,
        baseline: Baseline {
            shape: match a.baseline {
                BaselineArg::Flat => BaselineShape::Flat,
                BaselineArg::Sine => BaselineShape::Sine,
                BaselineArg::Sawtooth => BaselineShape::Sawtooth,
            },
            amplitude: a.baseline_amplitude,
        },
        leak_spread: a.spread,
        jitter_halfwidth: a.sim_jitter,
        margin: a.margin,
        seed: g.seed,
        ..SimConfig::default()
    };
    cfg.validate().context("invalid simulation settings")?;
    let ts = scaul::sim::simulate(&cfg, &a.key)?;
    save_traces(&ts, &a.out)?;
    let spec = cfg.window_spec(cfg.samples_per_clock, 0)?;
    let ratio = snr(&ts, None, 0, &spec, SnrClasses::HammingWeight)?;
    eprintln!(
        "wrote {}: S={} traces, N={} samples, byte-0 SNR {:.4}",
        a.out.display(),
        ts.num_traces(),
        ts.samples_per_trace(),
        ratio
    );
    Ok(())
}

fn base_config(g: &Globals, byte: usize, window: &WindowArgs) -> Result<PipelineConfig> {
    if byte >= 16 {
        bail!("--byte must be in 0..=15, got {byte}");
    }
    Ok(PipelineConfig {
        seed: g.seed,
        byte,
        window: window.config(),
        threads: g.threads,
        ..PipelineConfig::default()
    })
}

fn train_ae(a: TrainArgs, g: &Globals) -> Result<()> {
    let ts = load_traces(&a.traces)?;
    let cfg = PipelineConfig {
        ae: a.ae.config(),
        ae_train_traces: a.ae.ae_traces,
        ..base_config(g, 0, &a.window)?
    };
    let ae = pipeline::train_stage(&ts, &cfg)?;
    ae.save(&a.out)?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn features(a: FeaturesArgs, g: &Globals) -> Result<()> {
    let ts = load_traces(&a.traces)?;
    if !a.model.exists() {
        bail!("checkpoint {} does not exist (run `scaul train-ae` first)", a.model.display());
    }
    let ae = AutoEncoder::<f32>::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let cfg = base_config(g, a.byte, &a.window)?;
    let fm = pipeline::features_stage(&ae, &ts, &cfg)?;
    fm.save(&a.out)?;
    eprintln!("wrote {}: {} x {} features", a.out.display(), fm.num_rows(), fm.dim());
    Ok(())
}

fn leakage(a: LeakageArgs, g: &Globals) -> Result<()> {
    let fm = load_features(&a.features)?;
    let cfg = PipelineConfig {
        mlp: a.mlp.mlp(),
        sensitivity: a.mlp.sensitivity(),
        ..base_config(g, a.byte, &WindowArgs::default_values())?
    };
    let model = pipeline::leakage_stage(&fm, a.candidate, &cfg)?;
    model.save(&a.out)?;
    let names: Vec<String> = model.selected.iter().take(16).map(|m| m.to_hex()).collect();
    eprintln!(
        "wrote {}: {} masks selected, first {:?}",
        a.out.display(),
        model.selected.len(),
        names
    );
    Ok(())
}

impl WindowArgs {
    fn default_values() -> Self {
        let w = WindowConfig::default();
        WindowArgs {
            first_clock: w.first_clock,
            clock_len: w.clock_len,
            window: w.length,
            jitter: w.jitter_halfwidth,
        }
    }
}

struct LoadedInputs {
    traces: Option<TraceSet>,
    features: Option<FeatureMatrix<f32>>,
    fixed: Option<LeakageModel>,
    true_key: Option<u8>,
    cfg: PipelineConfig,
    mode: AttackMode,
}

fn load_attack_inputs(a: &AttackInputArgs, g: &Globals) -> Result<LoadedInputs> {
    let mut cfg = base_config(g, a.byte, &a.window)?;
    cfg.mlp = a.mlp.mlp();
    cfg.sensitivity = a.mlp.sensitivity();
    let mode: AttackMode = a.mode.into();
    let traces = a.traces.as_deref().map(load_traces).transpose()?;
    let features = match (&a.features, mode) {
        (Some(p), _) => Some(load_features(p)?),
        (None, AttackMode::DpaRaw) => None,
        (None, _) => bail!("mode {} needs --features", mode.name()),
    };
    if mode == AttackMode::DpaRaw && traces.is_none() {
        bail!("mode dpa-raw needs --traces");
    }
    let fixed = a
        .fixed_model
        .as_deref()
        .map(|p| LeakageModel::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let true_key = a
        .true_key
        .or_else(|| traces.as_ref().and_then(|t| t.known_key()).map(|k| k[a.byte]));
    Ok(LoadedInputs {
        traces,
        features,
        fixed,
        true_key,
        cfg,
        mode,
    })
}

impl LoadedInputs {
    fn inputs(&self) -> AttackInputs<'_> {
        AttackInputs {
            traces: self.traces.as_ref(),
            features: self.features.as_ref(),
            fixed_model: self.fixed.as_ref(),
        }
    }
}

fn attack(a: AttackArgs, g: &Globals) -> Result<()> {
    let l = load_attack_inputs(&a.input, g)?;
    let scores = pipeline::attack_stage(l.mode, &l.inputs(), &l.cfg)?;
    let text = serde_json::to_string_pretty(&scores)?;
    std::fs::write(&a.out, text + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    let top: Vec<String> = ranking(&scores).iter().take(5).map(|k| format!("{k:#04x}")).collect();
    eprintln!("top candidates: {}", top.join(" "));
    if let Some(k) = l.true_key {
        eprintln!("true key {k:#04x} rank {}", key_rank(&scores, k));
    }
    Ok(())
}

fn sweep(a: SweepArgs, g: &Globals) -> Result<()> {
    let mut l = load_attack_inputs(&a.input, g)?;
    l.cfg.grid_step = a.grid_step;
    let result = pipeline::sweep_stage(l.mode, &l.inputs(), l.true_key, &l.cfg)?;
    result.save_json(&a.out)?;
    if let Some(csv) = &a.csv {
        result.save_csv(csv)?;
    }
    eprintln!(
        "wrote {}: final rank {:?}, min traces to rank 1 {:?}",
        a.out.display(),
        result.final_rank(),
        result.min_traces_to_rank1
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    if !a.sweep.exists() {
        bail!("sweep file {} does not exist (run `scaul sweep` first)", a.sweep.display());
    }
    let result = KeySweepResult::load_json(&a.sweep).with_context(|| format!("loading {}", a.sweep.display()))?;
    result.save_csv(&a.out)?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn run_pipeline(a: PipelineArgs, g: &Globals) -> Result<()> {
    let ts = load_traces(&a.traces)?;
    let cfg = PipelineConfig {
        ae: a.ae.config(),
        ae_train_traces: a.ae.ae_traces,
        mlp: a.mlp.mlp(),
        sensitivity: a.mlp.sensitivity(),
        grid_step: a.grid_step,
        scaul_grid_step: a.scaul_grid_step,
        modes: a.modes.iter().map(|m| (*m).into()).collect(),
        // Already inside the requested pool.
        threads: None,
        ..base_config(g, a.byte, &a.window)?
    };
    let out = pipeline::run_pipeline(&ts, &a.out_dir, &cfg)?;
    for r in &out.sweeps {
        eprintln!(
            "{}: final rank {:?}, min traces to rank 1 {:?}",
            r.method,
            r.final_rank(),
            r.min_traces_to_rank1
        );
    }
    Ok(())
}
