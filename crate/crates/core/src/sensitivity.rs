//! Unsupervised leakage detection: per-candidate MLPs from features to the
//! bits of the S-box output, first-layer weight perturbation, monomial
//! variations and low-variation mask selection.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aes::{bits_of, intermediate, monomial, ByteMask};
use crate::nn::{adam_step, params_prefixed, Activation, AdamConfig, AdamState, DenseLayer, ParamView, Parameterized};
use crate::{seed, Error, Result, Scalar};

pub const OUTPUT_BITS: usize = 8;

/// Feed-forward network: ReLU hidden layers, 8 sigmoid outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(inputs: usize, hidden: &[usize]) -> Self {
        Self::build(inputs, hidden, |i, o, a| DenseLayer::zeros(i, o, a))
    }

    pub fn init(inputs: usize, hidden: &[usize], seed: u64, stream: u64) -> Self {
        let mut rng = seed::rng(seed, "mlp.init", stream);
        Self::build(inputs, hidden, |i, o, a| DenseLayer::glorot(&mut rng, i, o, a))
    }

    fn build(inputs: usize, hidden: &[usize], mut make: impl FnMut(usize, usize, Activation) -> DenseLayer<T>) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = inputs;
        for h in hidden {
            layers.push(make(prev, *h, Activation::Relu));
            prev = *h;
        }
        layers.push(make(prev, OUTPUT_BITS, Activation::Sigmoid));
        Mlp { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    /// Activations of every layer, input first.
    fn forward_all(&self, x: ArrayView2<'_, T>) -> Result<Vec<Array2<T>>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for layer in &self.layers {
            let y = layer.forward_batch(acts.last().expect("nonempty").view())?;
            acts.push(y);
        }
        Ok(acts)
    }

    /// Soft output bits, `B x 8`.
    pub fn predict(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let mut h = self.layers[0].forward_batch(x)?;
        for layer in &self.layers[1..] {
            h = layer.forward_batch(h.view())?;
        }
        Ok(h)
    }

    /// Mean binary cross-entropy over all outputs of the batch and its
    /// gradient. `targets` holds 0/1 values, `B x 8`.
    pub fn loss_and_gradient(&self, x: ArrayView2<'_, T>, targets: ArrayView2<'_, T>) -> Result<(T, Mlp<T>)> {
        let acts = self.forward_all(x)?;
        let out = acts.last().expect("output layer");
        if out.dim() != targets.dim() {
            return Err(Error::Shape(format!("targets {:?} for outputs {:?}", targets.dim(), out.dim())));
        }
        let n = T::lit(out.len() as f64);
        let loss = bce_mean(out.view(), targets);
        let mut grad = Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs(), l.outputs(), l.activation))
                .collect(),
        };
        // Sigmoid and cross-entropy fuse to (y - t) at the pre-activation.
        let dz = (out - &targets).mapv(|v| v / n);
        let last = self.layers.len() - 1;
        let mut d = self.layers[last].backward_from_preactivation(acts[last].view(), dz.view(), &mut grad.layers[last]);
        for i in (0..last).rev() {
            d = self.layers[i].backward_batch(acts[i].view(), acts[i + 1].view(), d.view(), &mut grad.layers[i]);
        }
        Ok((loss, grad))
    }

    pub fn loss(&self, x: ArrayView2<'_, T>, targets: ArrayView2<'_, T>) -> Result<T> {
        Ok(bce_mean(self.predict(x)?.view(), targets))
    }
}

fn bce_mean<T: Scalar>(pred: ArrayView2<'_, T>, targets: ArrayView2<'_, T>) -> T {
    let lo = T::lit(crate::nn::BCE_CLAMP);
    let hi = T::one() - lo;
    let mut total = T::zero();
    for (p, t) in pred.iter().zip(targets.iter()) {
        let p = p.max(lo).min(hi);
        total -= *t * p.ln() + (T::one() - *t) * (T::one() - p).ln();
    }
    total / T::lit(pred.len() as f64)
}

impl<T: Scalar> Parameterized<T> for Mlp<T> {
    fn param_views(&self) -> Vec<ParamView<'_, T>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| params_prefixed(&format!("layer{i}"), l.param_views()))
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.param_slices_mut()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Upper bound on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![64, 32, 16],
            epochs: 30,
            batch_size: 64,
            adam: AdamConfig::default(),
            max_steps: None,
            seed: crate::DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedMlp<T> {
    pub mlp: Mlp<T>,
    pub history: Vec<f64>,
}

/// `S x 8` 0/1 matrix of the bits of `values` (bit `b` in column `b`).
pub fn bit_targets<T: Scalar>(values: &[u8]) -> Array2<T> {
    let mut t = Array2::zeros((values.len(), OUTPUT_BITS));
    for (mut row, v) in t.rows_mut().into_iter().zip(values) {
        for (b, bit) in bits_of(*v).iter().enumerate() {
            row[b] = T::lit(*bit as f64);
        }
    }
    t
}

/// S-box outputs `S(P_j ^ k)` for one plaintext byte per row.
pub fn hypothesis_values(plaintext_bytes: &[u8], candidate: u8) -> Vec<u8> {
    plaintext_bytes.iter().map(|p| intermediate(*p, candidate)).collect()
}

/// Trains an MLP mapping feature rows to the bits of `values`. `stream`
/// selects the RNG streams (the key candidate).
pub fn train_mlp<T: Scalar>(features: ArrayView2<'_, T>, values: &[u8], cfg: &MlpConfig, stream: u64) -> Result<TrainedMlp<T>> {
    let s = features.nrows();
    if s < 2 {
        return Err(Error::Argument(format!("need at least 2 training rows, got {s}")));
    }
    if values.len() != s {
        return Err(Error::Shape(format!("{s} feature rows, {} targets", values.len())));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let targets: Array2<T> = bit_targets(values);
    let mut mlp = Mlp::init(features.ncols(), &cfg.hidden, cfg.seed, stream);
    let mut adam = AdamState::new(cfg.adam, &mlp);
    let budget = cfg.max_steps.unwrap_or(usize::MAX);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..s).collect();
    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::rng(cfg.seed, "mlp.shuffle", (stream << 20) | epoch as u64));
        let (mut total, mut count) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            if adam.t as usize >= budget {
                if count > 0 {
                    history.push(total / count as f64);
                }
                break 'epochs;
            }
            let x = features.select(Axis(0), batch);
            let t = targets.select(Axis(0), batch);
            let (loss, grad) = mlp.loss_and_gradient(x.view(), t.view())?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "MLP loss became {loss} in epoch {epoch} (stream {stream}, step {})",
                    adam.t
                )));
            }
            adam_step(&mut adam, &mut mlp, &grad)?;
            total += loss * batch.len() as f64;
            count += batch.len();
        }
        history.push(total / count.max(1) as f64);
    }
    Ok(TrainedMlp { mlp, history })
}

/// Fraction of correctly thresholded output bits, per bit.
pub fn bit_accuracy<T: Scalar>(mlp: &Mlp<T>, features: ArrayView2<'_, T>, values: &[u8]) -> Result<[f64; OUTPUT_BITS]> {
    let pred = mlp.predict(features)?;
    let mut hits = [0usize; OUTPUT_BITS];
    for (row, v) in pred.rows().into_iter().zip(values) {
        let bits = bits_of(*v);
        for b in 0..OUTPUT_BITS {
            let hard = (row[b].as_f64() >= 0.5) as u8;
            hits[b] += (hard == bits[b]) as usize;
        }
    }
    Ok(hits.map(|h| h as f64 / values.len().max(1) as f64))
}

/// How the monomial variation compares perturbed and unperturbed outputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationMode {
    /// `mean_j |X~_j^U - X^_j^U|` on soft outputs.
    Soft,
    /// Soft variation divided by `mean_j X^_j^U`, the mean unperturbed
    /// monomial value, so masks of every degree are compared on one scale.
    Relative,
    /// `mean_j |X~_j^U - X_j^U|` against the hypothesis labels.
    Label,
    /// Label variation divided by `mean_j X_j^U`, the frequency of the
    /// monomial among the hypothesis labels.
    #[default]
    LabelRelative,
    /// Outputs thresholded at 0.5 before taking monomials.
    Hard,
}

impl VariationMode {
    pub fn uses_labels(self) -> bool {
        matches!(self, VariationMode::Label | VariationMode::LabelRelative)
    }
}

impl std::str::FromStr for VariationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(VariationMode::Soft),
            "relative" => Ok(VariationMode::Relative),
            "label" => Ok(VariationMode::Label),
            "label-relative" => Ok(VariationMode::LabelRelative),
            "hard" => Ok(VariationMode::Hard),
            _ => Err(Error::Argument(format!(
                "unknown variation mode {s:?} (soft, relative, label, label-relative, hard)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityConfig {
    /// Perturbation relative to the RMS of the first-layer weights.
    pub delta_scale: f64,
    pub mode: VariationMode,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            delta_scale: 0.01,
            mode: VariationMode::default(),
        }
    }
}

/// `Delta_U` for all 255 masks, indexed by `mask - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialVariation {
    pub candidate: u8,
    pub delta_scale: f64,
    /// The absolute constant added to every first-layer weight.
    pub delta: f64,
    pub values: Vec<f64>,
}

impl MonomialVariation {
    pub fn get(&self, mask: ByteMask) -> f64 {
        self.values[mask.index()]
    }
}

/// Products of the selected soft bits for all 256 masks (entry 0 is 1).
fn all_monomials(bits: &[f64; OUTPUT_BITS], out: &mut [f64; 256]) {
    out[0] = 1.0;
    for u in 1..256usize {
        let low = u.trailing_zeros() as usize;
        out[u] = out[u & (u - 1)] * bits[low];
    }
}

fn row_bits<T: Scalar>(row: ndarray::ArrayView1<'_, T>, hard: bool) -> [f64; OUTPUT_BITS] {
    std::array::from_fn(|b| {
        let v = row[b].as_f64();
        if hard {
            (v >= 0.5) as u8 as f64
        } else {
            v
        }
    })
}

/// Root mean square of the first-layer weights.
pub fn first_layer_rms<T: Scalar>(mlp: &Mlp<T>) -> f64 {
    let w = &mlp.layers[0].weights;
    (w.iter().map(|v| v.as_f64().powi(2)).sum::<f64>() / w.len().max(1) as f64).sqrt()
}

/// Copy of `mlp` with `delta` added to every first-layer weight.
pub fn perturb_first_layer<T: Scalar>(mlp: &Mlp<T>, delta: f64) -> Mlp<T> {
    let mut p = mlp.clone();
    let d = T::lit(delta);
    p.layers[0].weights.mapv_inplace(|v| v + d);
    p
}

/// Perturbs the first layer by `delta_scale * RMS(W_1)` and measures the
/// variation of every monomial over the rows of `features`. `values` are the
/// hypothesis intermediates, used only in label mode.
pub fn perturb_and_measure<T: Scalar>(
    mlp: &Mlp<T>,
    features: ArrayView2<'_, T>,
    values: Option<&[u8]>,
    cfg: &SensitivityConfig,
    candidate: u8,
) -> Result<MonomialVariation> {
    if !(cfg.delta_scale >= 0.0 && cfg.delta_scale.is_finite()) {
        return Err(Error::Argument(format!("delta scale {} must be finite and >= 0", cfg.delta_scale)));
    }
    if features.nrows() == 0 {
        return Err(Error::Argument("no rows to measure variation on".into()));
    }
    let delta = cfg.delta_scale * first_layer_rms(mlp);
    let pert = perturb_first_layer(mlp, delta).predict(features)?;
    let values = match (cfg.mode.uses_labels(), values) {
        (true, Some(v)) => label_variation(pert.view(), v, cfg.mode)?,
        _ => {
            let base = mlp.predict(features)?;
            variation_from_outputs(base.view(), pert.view(), values, cfg.mode)?
        }
    };
    Ok(MonomialVariation {
        candidate,
        delta_scale: cfg.delta_scale,
        delta,
        values,
    })
}

/// `Delta_U` for all 255 masks (indexed by `mask - 1`) from unperturbed and
/// perturbed soft outputs, both `S x 8`.
pub fn variation_from_outputs<T: Scalar>(
    base: ArrayView2<'_, T>,
    pert: ArrayView2<'_, T>,
    values: Option<&[u8]>,
    mode: VariationMode,
) -> Result<Vec<f64>> {
    if base.dim() != pert.dim() || base.ncols() != OUTPUT_BITS {
        return Err(Error::Shape(format!("outputs {:?} vs {:?}", base.dim(), pert.dim())));
    }
    if mode.uses_labels() {
        let labels = values.ok_or_else(|| Error::Argument("label mode needs one hypothesis value per row".into()))?;
        return label_variation(pert, labels, mode);
    }
    let hard = mode == VariationMode::Hard;
    let mut diff = [0.0f64; 256];
    let mut level = [0.0f64; 256];
    let (mut mb, mut mp) = ([0.0; 256], [0.0; 256]);
    for j in 0..base.nrows() {
        all_monomials(&row_bits(base.row(j), hard), &mut mb);
        all_monomials(&row_bits(pert.row(j), hard), &mut mp);
        for u in 1..256 {
            diff[u] += (mp[u] - mb[u]).abs();
            level[u] += mb[u];
        }
    }
    Ok(finish_variation(&diff, &level, base.nrows(), mode == VariationMode::Relative))
}

/// Label modes: perturbed soft monomials against the monomials of the
/// hypothesis values, which are 0 or 1.
fn label_variation<T: Scalar>(pert: ArrayView2<'_, T>, labels: &[u8], mode: VariationMode) -> Result<Vec<f64>> {
    if labels.len() != pert.nrows() {
        return Err(Error::Argument("label mode needs one hypothesis value per row".into()));
    }
    let mut diff = [0.0f64; 256];
    let mut counts = [0usize; 256];
    let mut mp = [0.0; 256];
    for (j, &v) in labels.iter().enumerate() {
        all_monomials(&row_bits(pert.row(j), false), &mut mp);
        let v = v as usize;
        for u in 1..256 {
            diff[u] += if v & u == u { 1.0 - mp[u] } else { mp[u] };
        }
        counts[v] += 1;
    }
    let mut level = [0.0f64; 256];
    for (v, c) in counts.iter().enumerate().filter(|(_, c)| **c > 0) {
        for (u, l) in level.iter_mut().enumerate().skip(1) {
            if v & u == u {
                *l += *c as f64;
            }
        }
    }
    Ok(finish_variation(&diff, &level, pert.nrows(), mode == VariationMode::LabelRelative))
}

fn finish_variation(diff: &[f64; 256], level: &[f64; 256], rows: usize, relative: bool) -> Vec<f64> {
    let n = rows.max(1) as f64;
    (1..256)
        .map(|u| match relative {
            true if level[u] > 0.0 => diff[u] / level[u],
            true => 0.0,
            false => diff[u] / n,
        })
        .collect()
}

/// Per-candidate estimate of the leakage function in algebraic normal form.
#[derive(Clone, Debug, PartialEq)]
pub struct LeakageModel {
    pub candidate: u8,
    pub delta_scale: f64,
    /// `Delta_U`, indexed by `mask - 1`.
    pub delta: Vec<f64>,
    /// `1 - Delta_U / max Delta`, indexed by `mask - 1`.
    pub alpha: Vec<f64>,
    /// Low-variation cluster, ascending.
    pub selected: Vec<ByteMask>,
}

impl LeakageModel {
    pub fn alpha(&self, mask: ByteMask) -> f64 {
        self.alpha[mask.index()]
    }

    pub fn is_selected(&self, mask: ByteMask) -> bool {
        self.selected.binary_search(&mask).is_ok()
    }

    /// `alpha_U` on selected masks, zero elsewhere.
    pub fn effective_alpha(&self, mask: ByteMask) -> f64 {
        if self.is_selected(mask) {
            self.alpha(mask)
        } else {
            0.0
        }
    }

    /// `sum_{U in selected} alpha_U * X^U`.
    pub fn predict(&self, x: u8) -> f64 {
        self.selected
            .iter()
            .map(|u| self.alpha(*u) * monomial(x, *u) as f64)
            .sum()
    }

    /// Predicted leakage for all 256 values of `X`.
    pub fn table(&self) -> [f64; 256] {
        std::array::from_fn(|x| self.predict(x as u8))
    }

    pub fn to_json(&self) -> Result<String> {
        let hex = |v: &[f64]| -> BTreeMap<String, f64> {
            ByteMask::all().map(|m| (m.to_hex(), v[m.index()])).collect()
        };
        let doc = LeakageModelDoc {
            candidate: self.candidate,
            delta_scale: self.delta_scale,
            delta: hex(&self.delta),
            alpha: hex(&self.alpha),
            selected_masks: self.selected.iter().map(|m| m.to_hex()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LeakageModelDoc = serde_json::from_str(text)?;
        let unhex = |map: &BTreeMap<String, f64>, what: &str| -> Result<Vec<f64>> {
            let mut v = vec![f64::NAN; ByteMask::COUNT];
            for (k, x) in map {
                v[ByteMask::from_hex(k)?.index()] = *x;
            }
            if v.iter().any(|x| x.is_nan()) {
                return Err(Error::Format(format!("{what} must list all 255 masks")));
            }
            Ok(v)
        };
        let mut selected = doc
            .selected_masks
            .iter()
            .map(|s| ByteMask::from_hex(s))
            .collect::<Result<Vec<_>>>()?;
        selected.sort();
        selected.dedup();
        if selected.is_empty() {
            return Err(Error::Format("leakage model selects no masks".into()));
        }
        Ok(LeakageModel {
            candidate: doc.candidate,
            delta_scale: doc.delta_scale,
            delta: unhex(&doc.delta, "delta")?,
            alpha: unhex(&doc.alpha, "alpha")?,
            selected,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Serialize, Deserialize)]
struct LeakageModelDoc {
    candidate: u8,
    delta_scale: f64,
    delta: BTreeMap<String, f64>,
    alpha: BTreeMap<String, f64>,
    selected_masks: Vec<String>,
}

/// Exact 1-D 2-means: among the splits of the sorted values between two
/// distinct neighbours, the one minimizing the within-cluster sum of squares.
/// Returns the size of the lower cluster, or `None` if all values are equal.
pub fn two_means_split(sorted: &[f64]) -> Option<usize> {
    let sse = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    let mut best: Option<(f64, usize)> = None;
    for k in 1..sorted.len() {
        if sorted[k - 1] == sorted[k] {
            continue;
        }
        let cost = sse(&sorted[..k]) + sse(&sorted[k..]);
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, k));
        }
    }
    best.map(|(_, k)| k)
}

/// Turns variations into coefficients and selects the low-variation cluster.
pub fn fit_leakage_model(var: &MonomialVariation) -> Result<LeakageModel> {
    if var.values.len() != ByteMask::COUNT {
        return Err(Error::Shape(format!("{} variations, expected 255", var.values.len())));
    }
    if var.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Data("variations must be finite and non-negative".into()));
    }
    let max = var.values.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::DegenerateModel(format!(
            "all monomial variations are zero for candidate {:#04x}",
            var.candidate
        )));
    }
    let alpha: Vec<f64> = var.values.iter().map(|d| 1.0 - d / max).collect();
    let mut order: Vec<usize> = (0..ByteMask::COUNT).collect();
    order.sort_by(|a, b| var.values[*a].total_cmp(&var.values[*b]).then(a.cmp(b)));
    let sorted: Vec<f64> = order.iter().map(|i| var.values[*i]).collect();
    let k = two_means_split(&sorted).ok_or_else(|| {
        Error::DegenerateModel(format!(
            "all monomial variations are equal for candidate {:#04x}",
            var.candidate
        ))
    })?;
    let mut selected: Vec<ByteMask> = order[..k].iter().map(|i| ByteMask::from_index(*i)).collect();
    selected.sort();
    Ok(LeakageModel {
        candidate: var.candidate,
        delta_scale: var.delta_scale,
        delta: var.values.clone(),
        alpha,
        selected,
    })
}

/// Train, perturb and fit for one key candidate. `features` must already be
/// min-max normalized; `plaintext_bytes` are the attacked byte per row.
pub fn candidate_model<T: Scalar>(
    features: ArrayView2<'_, T>,
    plaintext_bytes: &[u8],
    candidate: u8,
    mlp: &MlpConfig,
    sens: &SensitivityConfig,
) -> Result<LeakageModel> {
    let values = hypothesis_values(plaintext_bytes, candidate);
    let trained = train_mlp(features, &values, mlp, candidate as u64)?;
    let var = perturb_and_measure(&trained.mlp, features, Some(&values), sens, candidate)?;
    fit_leakage_model(&var)
}

/// [`candidate_model`] for all 256 candidates in parallel. Candidates whose
/// variations are degenerate get `None`.
pub fn all_candidate_models<T: Scalar>(
    features: ArrayView2<'_, T>,
    plaintext_bytes: &[u8],
    mlp: &MlpConfig,
    sens: &SensitivityConfig,
) -> Result<Vec<Option<LeakageModel>>> {
    (0..=255u8)
        .into_par_iter()
        .map(|k| match candidate_model(features, plaintext_bytes, k, mlp, sens) {
            Ok(m) => Ok(Some(m)),
            Err(Error::DegenerateModel(msg)) => {
                log::warn!("{msg}");
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect()
}
