//! Two-layer LSTM sequence auto-encoder used as an unsupervised feature
//! extractor.
//!
//! The encoder reads a sub-trace through a sliding window of `window`
//! samples advanced by `stride`. The decoder starts from the encoder's final
//! `(h, c)` per layer and is fed a zero followed by the sub-trace samples in
//! reverse order; a linear head on its top-layer `h` predicts the next
//! reversed sample. The feature of a sub-trace is the top encoder cell's
//! `c` state after the last window.

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::nn::{
    adam_step, load_checkpoint, load_into, named_blocks, save_checkpoint, Activation, AdamConfig, AdamState,
    DenseLayer, LstmCell, LstmStepCache, NamedBlock, ParamView, Parameterized,
};
use crate::trace::{self, Block, SubTraceSet};
use crate::{seed, Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AeArchitecture {
    pub hidden: usize,
    pub window: usize,
    pub stride: usize,
}

impl Default for AeArchitecture {
    fn default() -> Self {
        AeArchitecture {
            hidden: 100,
            window: 10,
            stride: 2,
        }
    }
}

impl AeArchitecture {
    /// `floor((l - w) / s) + 1`.
    pub fn encoder_steps(&self, len: usize) -> Result<usize> {
        if len < self.window {
            return Err(Error::Argument(format!(
                "sub-trace of {len} samples is shorter than the encoder window {}",
                self.window
            )));
        }
        Ok((len - self.window) / self.stride + 1)
    }
}

/// Global z-score applied to every sample before the encoder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization { mean: 0.0, std: 1.0 }
    }

    pub fn fit(windows: ArrayView2<'_, f32>) -> Self {
        let n = windows.len();
        if n == 0 {
            return Self::identity();
        }
        let mean = windows.iter().map(|v| *v as f64).sum::<f64>() / n as f64;
        let var = windows.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Normalization { mean, std }
    }

    fn apply<T: Scalar>(&self, windows: ArrayView2<'_, f32>) -> Array2<T> {
        let (m, s) = (self.mean, self.std);
        windows.mapv(|v| T::lit((v as f64 - m) / s))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoEncoder<T> {
    pub encoder: [LstmCell<T>; 2],
    pub decoder: [LstmCell<T>; 2],
    pub head: DenseLayer<T>,
    pub arch: AeArchitecture,
    pub normalization: Normalization,
}

/// Final `(h, c)` of both encoder layers, `B x H` each.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState<T> {
    pub h: [Array2<T>; 2],
    pub c: [Array2<T>; 2],
}

impl<T: Scalar> EncoderState<T> {
    /// The feature vector per row: the top-layer `c`.
    pub fn features(&self) -> &Array2<T> {
        &self.c[1]
    }
}

struct StackCache<T> {
    lower: LstmStepCache<T>,
    upper: LstmStepCache<T>,
}

struct ForwardPass<T> {
    encoder: Vec<StackCache<T>>,
    decoder: Vec<StackCache<T>>,
    /// Top decoder `h` per decoder step.
    top_h: Vec<Array2<T>>,
    /// Reconstruction in decoding (reversed) order, `B x l`.
    outputs: Array2<T>,
}

impl<T: Scalar> AutoEncoder<T> {
    pub fn zeros(arch: AeArchitecture) -> Self {
        let h = arch.hidden;
        AutoEncoder {
            encoder: [LstmCell::zeros(arch.window, h), LstmCell::zeros(h, h)],
            decoder: [LstmCell::zeros(1, h), LstmCell::zeros(h, h)],
            head: DenseLayer::zeros(h, 1, Activation::Identity),
            arch,
            normalization: Normalization::identity(),
        }
    }

    pub fn init(arch: AeArchitecture, seed: u64) -> Self {
        let mut rng = seed::rng(seed, "ae.init", 0);
        let h = arch.hidden;
        AutoEncoder {
            encoder: [LstmCell::init(&mut rng, arch.window, h), LstmCell::init(&mut rng, h, h)],
            decoder: [LstmCell::init(&mut rng, 1, h), LstmCell::init(&mut rng, h, h)],
            head: DenseLayer::glorot(&mut rng, h, 1, Activation::Identity),
            arch,
            normalization: Normalization::identity(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.arch.hidden
    }

    fn check_batch(&self, x: &ArrayView2<'_, T>) -> Result<usize> {
        self.arch.encoder_steps(x.ncols())
    }

    fn zero_state(&self, batch: usize) -> (Array2<T>, Array2<T>) {
        (
            Array2::zeros((batch, self.arch.hidden)),
            Array2::zeros((batch, self.arch.hidden)),
        )
    }

    /// Encoder pass over a z-scored batch.
    fn run_encoder(&self, x: ArrayView2<'_, T>, keep: bool) -> Result<(EncoderState<T>, Vec<StackCache<T>>)> {
        let steps = self.check_batch(&x)?;
        let b = x.nrows();
        let (mut h1, mut c1) = self.zero_state(b);
        let (mut h2, mut c2) = self.zero_state(b);
        let mut caches = Vec::with_capacity(if keep { steps } else { 0 });
        let (w, st) = (self.arch.window, self.arch.stride);
        for t in 0..steps {
            let xt = x.slice(s![.., t * st..t * st + w]);
            let (nh1, nc1, lower) = self.encoder[0].step_batch(xt, h1.view(), c1.view())?;
            let (nh2, nc2, upper) = self.encoder[1].step_batch(nh1.view(), h2.view(), c2.view())?;
            (h1, c1, h2, c2) = (nh1, nc1, nh2, nc2);
            if keep {
                caches.push(StackCache { lower, upper });
            }
        }
        Ok((
            EncoderState {
                h: [h1, h2],
                c: [c1, c2],
            },
            caches,
        ))
    }

    /// Teacher-forced decoder pass. Returns outputs in reversed order.
    fn run_decoder(&self, state: &EncoderState<T>, x: ArrayView2<'_, T>, keep: bool) -> Result<ForwardPass<T>> {
        let (b, l) = x.dim();
        if state.h[0].nrows() != b {
            return Err(Error::Shape(format!(
                "encoder state for {} rows, sub-traces for {b}",
                state.h[0].nrows()
            )));
        }
        let [mut h1, mut h2] = state.h.clone();
        let [mut c1, mut c2] = state.c.clone();
        let mut outputs = Array2::zeros((b, l));
        let mut decoder = Vec::with_capacity(if keep { l } else { 0 });
        let mut top_h = Vec::with_capacity(if keep { l } else { 0 });
        let mut input = Array2::<T>::zeros((b, 1));
        for t in 0..l {
            if t > 0 {
                input.column_mut(0).assign(&x.column(l - t));
            }
            let (nh1, nc1, lower) = self.decoder[0].step_batch(input.view(), h1.view(), c1.view())?;
            let (nh2, nc2, upper) = self.decoder[1].step_batch(nh1.view(), h2.view(), c2.view())?;
            let y = self.head.forward_batch(nh2.view())?;
            outputs.column_mut(t).assign(&y.column(0));
            (h1, c1, h2, c2) = (nh1, nc1, nh2, nc2);
            if keep {
                decoder.push(StackCache { lower, upper });
                top_h.push(h2.clone());
            }
        }
        Ok(ForwardPass {
            encoder: Vec::new(),
            decoder,
            top_h,
            outputs,
        })
    }

    /// Mean per-sample squared reconstruction error of a z-scored batch and
    /// its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, x: ArrayView2<'_, T>) -> Result<(T, AutoEncoder<T>)> {
        let (state, enc_caches) = self.run_encoder(x, true)?;
        let mut pass = self.run_decoder(&state, x, true)?;
        pass.encoder = enc_caches;
        let (b, l) = x.dim();
        let n = T::lit((b * l) as f64);
        let two = T::lit(2.0);
        let mut loss = T::zero();
        let mut d_out = Array2::<T>::zeros((b, l));
        for t in 0..l {
            let target = x.column(l - 1 - t);
            for r in 0..b {
                let d = pass.outputs[[r, t]] - target[r];
                loss += d * d;
                d_out[[r, t]] = two * d / n;
            }
        }
        let mut grad = AutoEncoder::zeros(self.arch);
        grad.normalization = self.normalization;
        let hz = self.arch.hidden;
        let mut dh1 = Array2::<T>::zeros((b, hz));
        let mut dc1 = Array2::<T>::zeros((b, hz));
        let mut dh2 = Array2::<T>::zeros((b, hz));
        let mut dc2 = Array2::<T>::zeros((b, hz));
        for t in (0..l).rev() {
            let y = pass.outputs.slice(s![.., t..t + 1]);
            let dy = d_out.slice(s![.., t..t + 1]);
            dh2 += &self.head.backward_batch(pass.top_h[t].view(), y, dy, &mut grad.head);
            let cache = &pass.decoder[t];
            let (dx2, dh2p, dc2p) = self.decoder[1].backward_batch(&cache.upper, dh2.view(), dc2.view(), &mut grad.decoder[1]);
            dh1 += &dx2;
            let (_, dh1p, dc1p) = self.decoder[0].backward_batch(&cache.lower, dh1.view(), dc1.view(), &mut grad.decoder[0]);
            (dh1, dc1, dh2, dc2) = (dh1p, dc1p, dh2p, dc2p);
        }
        for cache in pass.encoder.iter().rev() {
            let (dx2, dh2p, dc2p) = self.encoder[1].backward_batch(&cache.upper, dh2.view(), dc2.view(), &mut grad.encoder[1]);
            dh1 += &dx2;
            let (_, dh1p, dc1p) = self.encoder[0].backward_batch(&cache.lower, dh1.view(), dc1.view(), &mut grad.encoder[0]);
            (dh1, dc1, dh2, dc2) = (dh1p, dc1p, dh2p, dc2p);
        }
        Ok((loss / n, grad))
    }

    /// Loss only, for evaluation and finite differences.
    pub fn loss(&self, x: ArrayView2<'_, T>) -> Result<T> {
        let out = self.reconstruct_normalized(x)?;
        let (b, l) = x.dim();
        let mut loss = T::zero();
        for r in 0..b {
            for t in 0..l {
                let d = out[[r, t]] - x[[r, t]];
                loss += d * d;
            }
        }
        Ok(loss / T::lit((b * l) as f64))
    }

    /// Reconstruction of a z-scored batch, natural sample order.
    fn reconstruct_normalized(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let (state, _) = self.run_encoder(x, false)?;
        let pass = self.run_decoder(&state, x, false)?;
        let mut out = pass.outputs;
        out.invert_axis(Axis(1));
        Ok(out)
    }

    fn normalized(&self, windows: ArrayView2<'_, f32>) -> Array2<T> {
        self.normalization.apply(windows)
    }

    /// Encodes one raw sub-trace: the feature vector and the final states.
    pub fn encode(&self, sub_trace: ArrayView1<'_, f32>) -> Result<(Array1<T>, EncoderState<T>)> {
        let x = self.normalized(sub_trace.insert_axis(Axis(0)));
        let (state, _) = self.run_encoder(x.view(), false)?;
        Ok((state.c[1].row(0).to_owned(), state))
    }

    /// Decodes from encoder states with teacher forcing on `sub_trace`;
    /// returns the reconstruction in natural order and raw units.
    pub fn decode(&self, state: &EncoderState<T>, sub_trace: ArrayView1<'_, f32>) -> Result<Array1<T>> {
        let x = self.normalized(sub_trace.insert_axis(Axis(0)));
        let pass = self.run_decoder(state, x.view(), false)?;
        let mut out = pass.outputs.row(0).to_owned();
        out.invert_axis(Axis(0));
        Ok(self.denormalize(out))
    }

    fn denormalize<D: ndarray::Dimension>(&self, mut a: ndarray::Array<T, D>) -> ndarray::Array<T, D> {
        let (m, s) = (T::lit(self.normalization.mean), T::lit(self.normalization.std));
        a.mapv_inplace(|v| v * s + m);
        a
    }

    /// Reconstructs raw windows in parallel chunks; raw units.
    pub fn reconstruct(&self, windows: ArrayView2<'_, f32>) -> Result<Array2<T>> {
        self.arch.encoder_steps(windows.ncols())?;
        let parts: Vec<Array2<T>> = windows
            .axis_chunks_iter(Axis(0), INFERENCE_CHUNK)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|chunk| self.reconstruct_normalized(self.normalized(chunk).view()))
            .collect::<Result<_>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        let out = if views.is_empty() {
            Array2::zeros((0, windows.ncols()))
        } else {
            concatenate(Axis(0), &views).expect("chunks share width")
        };
        Ok(self.denormalize(out))
    }

    /// Feature rows for raw windows, computed in parallel fixed-size chunks.
    pub fn encode_windows(&self, windows: ArrayView2<'_, f32>) -> Result<Array2<T>> {
        self.arch.encoder_steps(windows.ncols())?;
        let parts: Vec<Array2<T>> = windows
            .axis_chunks_iter(Axis(0), INFERENCE_CHUNK)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|chunk| {
                let x = self.normalized(chunk);
                self.run_encoder(x.view(), false).map(|(st, _)| st.c[1].clone())
            })
            .collect::<Result<_>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        Ok(if views.is_empty() {
            Array2::zeros((0, self.arch.hidden))
        } else {
            concatenate(Axis(0), &views).expect("chunks share width")
        })
    }

    /// Checkpoint blocks, including architecture and normalization.
    pub fn checkpoint_blocks(&self) -> Vec<NamedBlock> {
        let mut blocks = named_blocks(self);
        blocks.push(NamedBlock {
            name: "config.architecture".into(),
            dims: vec![3],
            data: vec![self.arch.hidden as f64, self.arch.window as f64, self.arch.stride as f64],
        });
        blocks.push(NamedBlock {
            name: "config.normalization".into(),
            dims: vec![2],
            data: vec![self.normalization.mean, self.normalization.std],
        });
        blocks
    }

    pub fn from_checkpoint_blocks(blocks: &[NamedBlock]) -> Result<Self> {
        let find = |name: &str| {
            blocks
                .iter()
                .find(|b| b.name == name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))
        };
        let a = find("config.architecture")?;
        let nrm = find("config.normalization")?;
        if a.data.len() != 3 || nrm.data.len() != 2 {
            return Err(Error::Corrupt("bad auto-encoder config block".into()));
        }
        let arch = AeArchitecture {
            hidden: a.data[0] as usize,
            window: a.data[1] as usize,
            stride: a.data[2] as usize,
        };
        if arch.hidden == 0 || arch.window == 0 || arch.stride == 0 {
            return Err(Error::Corrupt("zero-sized auto-encoder in checkpoint".into()));
        }
        let mut ae = AutoEncoder::zeros(arch);
        ae.normalization = Normalization {
            mean: nrm.data[0],
            std: nrm.data[1],
        };
        load_into(&mut ae, blocks)?;
        Ok(ae)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(path, &self.checkpoint_blocks())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_blocks(&load_checkpoint(path)?)
    }
}

const INFERENCE_CHUNK: usize = 256;

impl<T: Scalar> Parameterized<T> for AutoEncoder<T> {
    fn param_views(&self) -> Vec<ParamView<'_, T>> {
        use crate::nn::params_prefixed as p;
        let mut v = p("encoder.l1", self.encoder[0].param_views());
        v.extend(p("encoder.l2", self.encoder[1].param_views()));
        v.extend(p("decoder.l1", self.decoder[0].param_views()));
        v.extend(p("decoder.l2", self.decoder[1].param_views()));
        v.extend(p("head", self.head.param_views()));
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let [e1, e2] = &mut self.encoder;
        let [d1, d2] = &mut self.decoder;
        let mut v = e1.param_slices_mut();
        v.extend(e2.param_slices_mut());
        v.extend(d1.param_slices_mut());
        v.extend(d2.param_slices_mut());
        v.extend(self.head.param_slices_mut());
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AeTrainConfig {
    pub arch: AeArchitecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Stop once the epoch loss has improved by less than this ...
    pub early_stop_tol: f64,
    /// ... for this many consecutive epochs.
    pub patience: usize,
    /// Fixed input scaling; fitted on the training windows when `None`.
    pub normalization: Option<Normalization>,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        AeTrainConfig {
            arch: AeArchitecture::default(),
            epochs: 50,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: crate::DEFAULT_SEED,
            early_stop_tol: 1e-5,
            patience: 5,
            normalization: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedAutoEncoder<T> {
    pub model: AutoEncoder<T>,
    /// Mean training loss per epoch (z-scored units).
    pub history: Vec<f64>,
}

/// Epoch-shuffled mini-batch schedule drawn from `seed`.
pub fn shuffled_schedule(n: usize, batch_size: usize, epochs: usize, seed: u64) -> Vec<Vec<Vec<usize>>> {
    (0..epochs)
        .map(|e| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seed::rng(seed, "ae.shuffle", e as u64));
            order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
        })
        .collect()
}

/// Trains on all windows of `sub` pooled together.
pub fn train_autoencoder<T: Scalar>(sub: &SubTraceSet, cfg: &AeTrainConfig) -> Result<TrainedAutoEncoder<T>> {
    train_on_windows(sub.windows(), cfg)
}

pub fn train_on_windows<T: Scalar>(windows: ArrayView2<'_, f32>, cfg: &AeTrainConfig) -> Result<TrainedAutoEncoder<T>> {
    if windows.nrows() == 0 {
        return Err(Error::Argument("no sub-traces to train on".into()));
    }
    let schedule = shuffled_schedule(windows.nrows(), cfg.batch_size, cfg.epochs, cfg.seed);
    train_with_schedule(windows, cfg, &schedule)
}

/// Runs exactly the given epochs of mini-batches (row indices into
/// `windows`), stopping early per `cfg`.
pub fn train_with_schedule<T: Scalar>(
    windows: ArrayView2<'_, f32>,
    cfg: &AeTrainConfig,
    schedule: &[Vec<Vec<usize>>],
) -> Result<TrainedAutoEncoder<T>> {
    if windows.nrows() == 0 {
        return Err(Error::Argument("no sub-traces to train on".into()));
    }
    if cfg.batch_size == 0 || cfg.arch.hidden == 0 || cfg.arch.stride == 0 || cfg.arch.window == 0 {
        return Err(Error::Config("auto-encoder sizes must be positive".into()));
    }
    cfg.arch.encoder_steps(windows.ncols())?;
    let mut model = AutoEncoder::<T>::init(cfg.arch, cfg.seed);
    model.normalization = cfg.normalization.unwrap_or_else(|| Normalization::fit(windows));
    let data: Array2<T> = model.normalization.apply(windows);
    let mut adam = AdamState::new(cfg.adam, &model);
    let mut history = Vec::with_capacity(schedule.len());
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for (epoch, batches) in schedule.iter().enumerate() {
        let (mut total, mut count) = (0.0f64, 0usize);
        for batch in batches {
            if batch.iter().any(|i| *i >= data.nrows()) {
                return Err(Error::Argument("schedule refers past the data".into()));
            }
            let x = data.select(Axis(0), batch);
            let (loss, grad) = model.loss_and_gradient(x.view())?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "auto-encoder loss became {loss} in epoch {epoch} after {} optimizer steps",
                    adam.t
                )));
            }
            adam_step(&mut adam, &mut model, &grad)?;
            total += loss * batch.len() as f64;
            count += batch.len();
        }
        let epoch_loss = total / count.max(1) as f64;
        log::debug!("auto-encoder epoch {epoch}: loss {epoch_loss:.6}");
        history.push(epoch_loss);
        if best - epoch_loss < cfg.early_stop_tol {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        } else {
            stale = 0;
        }
        best = best.min(epoch_loss);
    }
    if !model.all_finite() {
        return Err(Error::Training("auto-encoder parameters became non-finite".into()));
    }
    Ok(TrainedAutoEncoder { model, history })
}

/// Per-trace auto-encoder features with the plaintext of each row.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<T> {
    pub data: Array2<T>,
    pub plaintexts: Vec<Block>,
    pub provenance: String,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(data: Array2<T>, plaintexts: Vec<Block>, provenance: impl Into<String>) -> Result<Self> {
        if data.nrows() != plaintexts.len() {
            return Err(Error::Shape(format!(
                "{} feature rows, {} plaintexts",
                data.nrows(),
                plaintexts.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature".into()));
        }
        Ok(FeatureMatrix {
            data,
            plaintexts,
            provenance: provenance.into(),
        })
    }

    pub fn num_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Column-wise min-max normalized copy.
    pub fn normalized(&self) -> Result<FeatureMatrix<T>> {
        Ok(FeatureMatrix {
            data: trace::minmax_normalize(self.data.view())?,
            plaintexts: self.plaintexts.clone(),
            provenance: format!("{} | minmax", self.provenance),
        })
    }

    pub fn prefix(&self, n: usize) -> FeatureMatrix<T> {
        let n = n.min(self.num_rows());
        FeatureMatrix {
            data: self.data.slice(s![..n, ..]).to_owned(),
            plaintexts: self.plaintexts[..n].to_vec(),
            provenance: self.provenance.clone(),
        }
    }

    /// Values rounded to `f32`, as stored in SCFT files.
    pub fn to_f32(&self) -> Array2<f32> {
        self.data.mapv(|v| v.as_f64() as f32)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        trace::save_feature_file(path, self.to_f32().view(), &self.plaintexts)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (data, plaintexts) = trace::load_feature_file(path)?;
        FeatureMatrix::new(
            data.mapv(|v| T::lit(v as f64)),
            plaintexts,
            format!("file:{}", path.display()),
        )
    }
}

/// Encodes every sub-trace; row `k` is the feature of window `k`.
pub fn extract_features<T: Scalar>(ae: &AutoEncoder<T>, sub: &SubTraceSet, provenance: &str) -> Result<FeatureMatrix<T>> {
    let data = ae.encode_windows(sub.windows())?;
    FeatureMatrix::new(data, sub.plaintexts().to_vec(), provenance)
}
