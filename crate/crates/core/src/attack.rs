//! Difference-of-means key ranking on raw samples, on features, and with
//! per-candidate leakage models, plus trace-count sweeps.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aes::{hamming_weight, intermediate};
use crate::autoencoder::FeatureMatrix;
use crate::sensitivity::{all_candidate_models, LeakageModel, MlpConfig, SensitivityConfig};
use crate::trace::{minmax_normalize, SubTraceSet, NUM_SBOX};
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate: u8,
    /// Maximum absolute difference of the two cluster means.
    pub score: f64,
    /// Rows in `C_0` and `C_1`.
    pub cluster_sizes: [usize; 2],
}

/// Per-plaintext-value row sums of a data matrix. Every DoM partition used
/// here depends on the row only through its plaintext byte, so cluster means
/// follow from these 256 group sums.
#[derive(Clone, Debug)]
pub struct GroupSums {
    pub sums: Array2<f64>,
    pub counts: [usize; 256],
}

impl GroupSums {
    pub fn new<A: Scalar>(data: ArrayView2<'_, A>, plaintext_bytes: &[u8]) -> Result<Self> {
        if data.nrows() != plaintext_bytes.len() {
            return Err(Error::Shape(format!(
                "{} rows, {} plaintext bytes",
                data.nrows(),
                plaintext_bytes.len()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::Argument("no traces to rank on".into()));
        }
        let mut sums = Array2::<f64>::zeros((256, data.ncols()));
        let mut counts = [0usize; 256];
        for (row, p) in data.rows().into_iter().zip(plaintext_bytes) {
            let mut acc = sums.row_mut(*p as usize);
            acc.zip_mut_with(&row, |a, v| *a += v.as_f64());
            counts[*p as usize] += 1;
        }
        Ok(GroupSums { sums, counts })
    }

    /// DoM score for a partition of plaintext values into `C_0` (`Some(false)`),
    /// `C_1` (`Some(true)`) or discarded (`None`). An empty cluster scores 0.
    pub fn score(&self, class: &[Option<bool>; 256]) -> (f64, [usize; 2]) {
        let d = self.sums.ncols();
        let mut tot = [vec![0.0f64; d], vec![0.0f64; d]];
        let mut sizes = [0usize; 2];
        for (p, c) in class.iter().enumerate() {
            if let Some(c) = c {
                if self.counts[p] == 0 {
                    continue;
                }
                let k = *c as usize;
                sizes[k] += self.counts[p];
                for (a, v) in tot[k].iter_mut().zip(self.sums.row(p)) {
                    *a += v;
                }
            }
        }
        if sizes[0] == 0 || sizes[1] == 0 {
            return (0.0, sizes);
        }
        let (n0, n1) = (sizes[0] as f64, sizes[1] as f64);
        let score = tot[0]
            .iter()
            .zip(&tot[1])
            .map(|(a, b)| (b / n1 - a / n0).abs())
            .fold(0.0, f64::max);
        (score, sizes)
    }
}

/// `C_0: HW(X) < 4`, `C_1: HW(X) > 4`, `HW(X) = 4` discarded.
pub fn hw_partition(candidate: u8) -> [Option<bool>; 256] {
    std::array::from_fn(|p| match hamming_weight(intermediate(p as u8, candidate)) {
        h if h < 4 => Some(false),
        h if h > 4 => Some(true),
        _ => None,
    })
}

/// Splits traces at the lower median `m` of the predicted leakage `l`:
/// `l < m` vs `l > m`, falling back to `l <= m` vs `l > m` and then
/// `l < m` vs `l >= m` when a side is empty. `None` if `l` is constant over
/// the observed traces.
pub fn median_partition(leakage: &[f64; 256], counts: &[usize; 256]) -> Option<[Option<bool>; 256]> {
    let mut observed: Vec<(f64, usize)> = (0..256)
        .filter(|p| counts[*p] > 0)
        .map(|p| (leakage[p], counts[p]))
        .collect();
    let total: usize = observed.iter().map(|o| o.1).sum();
    if total == 0 {
        return None;
    }
    observed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let target = (total - 1) / 2;
    let mut seen = 0;
    let mut m = observed[0].0;
    for (l, c) in &observed {
        if seen + c > target {
            m = *l;
            break;
        }
        seen += c;
    }
    let side = |below: &dyn Fn(f64) -> Option<bool>| -> [Option<bool>; 256] { std::array::from_fn(|p| below(leakage[p])) };
    let sizes = |class: &[Option<bool>; 256]| {
        let mut s = [0usize; 2];
        for (p, c) in class.iter().enumerate() {
            if let Some(c) = c {
                s[*c as usize] += counts[p];
            }
        }
        s
    };
    let rules: [&dyn Fn(f64) -> Option<bool>; 3] = [
        &|l| if l < m { Some(false) } else if l > m { Some(true) } else { None },
        &|l| Some(l > m),
        &|l| Some(l >= m),
    ];
    rules.iter().map(|r| side(*r)).find(|c| {
        let s = sizes(c);
        s[0] > 0 && s[1] > 0
    })
}

fn score_all(sums: &GroupSums, partition: impl Fn(u8) -> Option<[Option<bool>; 256]> + Sync) -> Vec<CandidateScore> {
    (0..=255u8)
        .into_par_iter()
        .map(|k| {
            let (score, cluster_sizes) = match partition(k) {
                Some(class) => sums.score(&class),
                None => (0.0, [0, 0]),
            };
            CandidateScore {
                candidate: k,
                score,
                cluster_sizes,
            }
        })
        .collect()
}

/// Classical DoM over the samples of `data`, one row per trace.
pub fn dpa_on<A: Scalar>(data: ArrayView2<'_, A>, plaintext_bytes: &[u8]) -> Result<Vec<CandidateScore>> {
    let sums = GroupSums::new(data, plaintext_bytes)?;
    Ok(score_all(&sums, |k| Some(hw_partition(k))))
}

/// Raw-sample DPA on the windows of S-box `byte`.
pub fn dpa_raw(sub: &SubTraceSet, byte: usize) -> Result<Vec<CandidateScore>> {
    check_byte(byte)?;
    let own = sub.for_byte(byte);
    dpa_on(own.windows(), &own.labels())
}

/// DPA over feature dimensions; rows of `features` are traces.
pub fn dpa_features<T: Scalar>(features: &FeatureMatrix<T>, byte: usize) -> Result<Vec<CandidateScore>> {
    check_byte(byte)?;
    dpa_on(features.data.view(), &plaintext_bytes(&features.plaintexts, byte))
}

/// Model-based DoM: candidate `k` clusters traces by the median of its own
/// model's predicted leakage of `S(P ^ k)`. Missing or degenerate models
/// score 0.
pub fn scaul_on<T: Scalar>(
    features: ArrayView2<'_, T>,
    plaintext_bytes: &[u8],
    models: &[Option<LeakageModel>],
) -> Result<Vec<CandidateScore>> {
    if models.len() != 256 {
        return Err(Error::Argument(format!("need 256 leakage models, got {}", models.len())));
    }
    let sums = GroupSums::new(features, plaintext_bytes)?;
    Ok(score_all(&sums, |k| {
        let model = models[k as usize].as_ref()?;
        let table = model.table();
        let leakage: [f64; 256] = std::array::from_fn(|p| table[intermediate(p as u8, k) as usize]);
        let split = median_partition(&leakage, &sums.counts);
        if split.is_none() {
            log::warn!("candidate {k:#04x}: predicted leakage is constant, scoring 0");
        }
        split
    }))
}

/// [`scaul_on`] with one model shared by every candidate.
pub fn scaul_fixed_on<T: Scalar>(
    features: ArrayView2<'_, T>,
    plaintext_bytes: &[u8],
    model: &LeakageModel,
) -> Result<Vec<CandidateScore>> {
    let models = vec![Some(model.clone()); 256];
    scaul_on(features, plaintext_bytes, &models)
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ScaulConfig {
    pub mlp: MlpConfig,
    pub sensitivity: SensitivityConfig,
    /// Skip per-candidate training and rank every candidate with this model.
    pub fixed_model: Option<LeakageModel>,
}

/// Full unsupervised ranking of one byte from raw (unnormalized) features:
/// min-max normalize, fit 256 candidate models, then model-based DoM.
pub fn scaul_rank<T: Scalar>(features: &FeatureMatrix<T>, byte: usize, cfg: &ScaulConfig) -> Result<Vec<CandidateScore>> {
    check_byte(byte)?;
    let x = minmax_normalize(features.data.view())?;
    let p = plaintext_bytes(&features.plaintexts, byte);
    match &cfg.fixed_model {
        Some(m) => scaul_fixed_on(x.view(), &p, m),
        None => {
            let models = all_candidate_models(x.view(), &p, &cfg.mlp, &cfg.sensitivity)?;
            scaul_on(x.view(), &p, &models)
        }
    }
}

fn check_byte(byte: usize) -> Result<()> {
    if byte >= NUM_SBOX {
        return Err(Error::Argument(format!("byte index {byte} above 15")));
    }
    Ok(())
}

pub fn plaintext_bytes(plaintexts: &[crate::trace::Block], byte: usize) -> Vec<u8> {
    plaintexts.iter().map(|p| p[byte]).collect()
}

/// Candidates by decreasing score, ties by increasing candidate.
pub fn ranking(scores: &[CandidateScore]) -> Vec<u8> {
    let mut order: Vec<&CandidateScore> = scores.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.candidate.cmp(&b.candidate)));
    order.iter().map(|c| c.candidate).collect()
}

/// Rank of `key`: one plus the number of other candidates scoring at least
/// as high, so a shared top score never counts as rank 1.
pub fn key_rank(scores: &[CandidateScore], key: u8) -> usize {
    let own = scores
        .iter()
        .find(|c| c.candidate == key)
        .map(|c| c.score)
        .unwrap_or(f64::NEG_INFINITY);
    1 + scores.iter().filter(|c| c.candidate != key && c.score >= own).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub trace_count: usize,
    /// Indexed by candidate.
    pub scores: Vec<CandidateScore>,
    pub true_key_rank: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeySweepResult {
    pub method: String,
    pub byte: usize,
    pub true_key: Option<u8>,
    pub grid: Vec<usize>,
    pub points: Vec<SweepPoint>,
    pub min_traces_to_rank1: Option<usize>,
}

/// Smallest grid count from which every later point has rank 1.
pub fn min_traces_to_rank1(points: &[SweepPoint]) -> Option<usize> {
    let mut first = None;
    for p in points.iter().rev() {
        if p.true_key_rank == Some(1) {
            first = Some(p.trace_count);
        } else {
            break;
        }
    }
    first
}

/// Evenly spaced grid `step, 2 step, ..` up to and including `max`.
pub fn linear_grid(step: usize, max: usize) -> Vec<usize> {
    if step == 0 {
        return Vec::new();
    }
    let mut g: Vec<usize> = (1..=max / step).map(|i| i * step).collect();
    if g.last() != Some(&max) && max > 0 {
        g.push(max);
    }
    g
}

/// Evaluates `rank_fn(n)` on every grid count `n` (the first `n` traces).
pub fn sweep(
    method: &str,
    byte: usize,
    true_key: Option<u8>,
    grid: &[usize],
    available: usize,
    rank_fn: impl Fn(usize) -> Result<Vec<CandidateScore>> + Sync,
) -> Result<KeySweepResult> {
    if grid.is_empty() {
        return Err(Error::Argument("empty trace-count grid".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(Error::Argument("trace-count grid must be positive and strictly ascending".into()));
    }
    if let Some(n) = grid.iter().find(|n| **n > available) {
        return Err(Error::Argument(format!("grid count {n} exceeds the {available} available traces")));
    }
    let points = grid
        .par_iter()
        .map(|n| {
            let mut scores = rank_fn(*n)?;
            scores.sort_by_key(|c| c.candidate);
            if scores.len() != 256 || scores.iter().enumerate().any(|(i, c)| c.candidate as usize != i) {
                return Err(Error::Argument("rank function must score every candidate once".into()));
            }
            Ok(SweepPoint {
                trace_count: *n,
                true_key_rank: true_key.map(|k| key_rank(&scores, k)),
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min = if true_key.is_some() {
        min_traces_to_rank1(&points)
    } else {
        None
    };
    Ok(KeySweepResult {
        method: method.to_string(),
        byte,
        true_key,
        grid: grid.to_vec(),
        points,
        min_traces_to_rank1: min,
    })
}

fn first_rows<T>(x: ArrayView2<'_, T>, n: usize) -> ArrayView2<'_, T> {
    x.slice_move(s![..n, ..])
}

/// Raw-sample DPA sweep over the windows of S-box `byte`.
pub fn sweep_raw(sub: &SubTraceSet, byte: usize, true_key: Option<u8>, grid: &[usize]) -> Result<KeySweepResult> {
    check_byte(byte)?;
    let own = sub.for_byte(byte);
    let labels = own.labels();
    sweep("dpa-raw", byte, true_key, grid, own.len(), |n| {
        dpa_on(first_rows(own.windows(), n), &labels[..n])
    })
}

/// Feature DPA sweep; features are min-max normalized on each prefix.
pub fn sweep_features<T: Scalar>(
    features: &FeatureMatrix<T>,
    byte: usize,
    true_key: Option<u8>,
    grid: &[usize],
) -> Result<KeySweepResult> {
    check_byte(byte)?;
    let p = plaintext_bytes(&features.plaintexts, byte);
    sweep("dpa-features", byte, true_key, grid, features.num_rows(), |n| {
        let x = minmax_normalize(first_rows(features.data.view(), n))?;
        dpa_on(x.view(), &p[..n])
    })
}

/// SCAUL sweep: leakage models are refitted on every prefix.
pub fn sweep_scaul<T: Scalar>(
    features: &FeatureMatrix<T>,
    byte: usize,
    true_key: Option<u8>,
    grid: &[usize],
    cfg: &ScaulConfig,
) -> Result<KeySweepResult> {
    check_byte(byte)?;
    let method = if cfg.fixed_model.is_some() { "scaul-fixed" } else { "scaul" };
    sweep(method, byte, true_key, grid, features.num_rows(), |n| {
        scaul_rank(&features.prefix(n), byte, cfg)
    })
}

impl KeySweepResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Plot-ready rows: `trace_count,candidate,score,rank,is_true_key`, where
    /// `rank` is the candidate's position in [`ranking`].
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trace_count", "candidate", "score", "rank", "is_true_key"])?;
        for p in &self.points {
            let order = ranking(&p.scores);
            let mut pos = [0usize; 256];
            for (i, c) in order.iter().enumerate() {
                pos[*c as usize] = i + 1;
            }
            for c in &p.scores {
                w.write_record([
                    p.trace_count.to_string(),
                    c.candidate.to_string(),
                    c.score.to_string(),
                    pos[c.candidate as usize].to_string(),
                    (Some(c.candidate) == self.true_key).to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Rank of the true key at the largest trace count.
    pub fn final_rank(&self) -> Option<usize> {
        self.points.last().and_then(|p| p.true_key_rank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::ByteMask;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Row-by-row DoM with the HW partition.
    fn naive_dom(data: &Array2<f64>, pts: &[u8], k: u8) -> f64 {
        let d = data.ncols();
        let (mut s0, mut s1) = (vec![0.0; d], vec![0.0; d]);
        let (mut n0, mut n1) = (0.0, 0.0);
        for (j, p) in pts.iter().enumerate() {
            let hw = intermediate(*p, k).count_ones();
            let (s, n) = match hw {
                0..=3 => (&mut s0, &mut n0),
                5..=8 => (&mut s1, &mut n1),
                _ => continue,
            };
            *n += 1.0;
            for i in 0..d {
                s[i] += data[[j, i]];
            }
        }
        if n0 == 0.0 || n1 == 0.0 {
            return 0.0;
        }
        (0..d).map(|i| (s1[i] / n1 - s0[i] / n0).abs()).fold(0.0, f64::max)
    }

    fn random_case(rows: usize, cols: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0));
        let pts = (0..rows).map(|_| rng.random()).collect();
        (data, pts)
    }

    #[test]
    fn identical_traces_score_zero() {
        let data = Array2::from_elem((40, 7), 3.25f64);
        let pts: Vec<u8> = (0..40).map(|i| (i * 37) as u8).collect();
        assert!(dpa_on(data.view(), &pts).unwrap().iter().all(|c| c.score == 0.0));
        let zeros = Array2::<f64>::zeros((40, 5));
        assert!(dpa_on(zeros.view(), &pts).unwrap().iter().all(|c| c.score == 0.0));
    }

    #[test]
    fn two_constant_traces_in_opposite_clusters() {
        let k = 0x2b;
        let low = (0..=255u8).find(|p| intermediate(*p, k).count_ones() < 4).unwrap();
        let high = (0..=255u8).find(|p| intermediate(*p, k).count_ones() > 4).unwrap();
        let data = ndarray::array![[1.0f64, 1.0, 1.0], [3.0, 3.0, 3.0]];
        let scores = dpa_on(data.view(), &[low, high]).unwrap();
        assert_eq!(scores[k as usize].score, 2.0);
        assert_eq!(scores[k as usize].cluster_sizes, [1, 1]);
    }

    #[test]
    fn one_hot_classes_score_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = 0x7e;
        let pts: Vec<u8> = (0..500).map(|_| rng.random()).collect();
        let mut data = Array2::<f64>::zeros((500, 9));
        for (j, p) in pts.iter().enumerate() {
            data[[j, intermediate(*p, k).count_ones() as usize]] = 1.0;
        }
        let scores = dpa_on(data.view(), &pts).unwrap();
        let want = naive_dom(&data, &pts, k);
        assert!(want > 0.0);
        assert!((scores[k as usize].score - want).abs() < 1e-12);
        assert_eq!(key_rank(&scores, k), 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        let data = Array2::<f64>::zeros((0, 3));
        assert!(matches!(dpa_on(data.view(), &[]), Err(Error::Argument(_))));
        let data = Array2::<f64>::zeros((2, 3));
        assert!(dpa_on(data.view(), &[1]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn group_sums_match_naive_dom(seed in 0u64..1000, rows in 2usize..60) {
            let (data, pts) = random_case(rows, 4, seed);
            let scores = dpa_on(data.view(), &pts).unwrap();
            for k in [0u8, 1, 0x55, 0xfe, (seed % 256) as u8] {
                prop_assert!((scores[k as usize].score - naive_dom(&data, &pts, k)).abs() < 1e-12);
            }
        }

        #[test]
        fn ranks_survive_affine_maps(seed in 0u64..1000, e in -3i32..4, b in -50i32..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = Array2::from_shape_simple_fn((30, 3), || rng.random_range(-64i32..64) as f64);
            let pts: Vec<u8> = (0..30).map(|_| rng.random()).collect();
            let a = 2f64.powi(e);
            let mapped = data.mapv(|v| a * v + b as f64);
            let s1 = dpa_on(data.view(), &pts).unwrap();
            let s2 = dpa_on(mapped.view(), &pts).unwrap();
            // Order is preserved for every pair that is not an exact tie.
            for x in &s1 {
                for y in &s1 {
                    if x.score > y.score + 1e-9 * (1.0 + x.score) {
                        prop_assert!(s2[x.candidate as usize].score > s2[y.candidate as usize].score);
                    }
                }
            }
            for (x, y) in s1.iter().zip(&s2) {
                prop_assert!((y.score - a * x.score).abs() <= 1e-9 * (1.0 + y.score));
            }
        }

        #[test]
        fn trace_order_does_not_matter(seed in 0u64..1000) {
            let (data, pts) = random_case(40, 3, seed);
            let mut order: Vec<usize> = (0..40).collect();
            order.reverse();
            order.swap(3, 17);
            let pd = data.select(ndarray::Axis(0), &order);
            let pp: Vec<u8> = order.iter().map(|i| pts[*i]).collect();
            let s1 = dpa_on(data.view(), &pts).unwrap();
            let s2 = dpa_on(pd.view(), &pp).unwrap();
            for (x, y) in s1.iter().zip(&s2) {
                prop_assert!((x.score - y.score).abs() < 1e-12);
                prop_assert_eq!(x.cluster_sizes, y.cluster_sizes);
            }
        }

        #[test]
        fn swapping_cluster_labels_keeps_the_score(seed in 0u64..1000, k in 0u8..=255) {
            let (data, pts) = random_case(50, 3, seed);
            let sums = GroupSums::new(data.view(), &pts).unwrap();
            let class = hw_partition(k);
            let swapped = class.map(|c| c.map(|b| !b));
            let (a, sa) = sums.score(&class);
            let (b, sb) = sums.score(&swapped);
            prop_assert_eq!(a, b);
            prop_assert_eq!(sa, [sb[1], sb[0]]);
        }
    }

    fn toy_model(selected: Vec<ByteMask>, alpha: f64) -> LeakageModel {
        LeakageModel {
            candidate: 0,
            delta_scale: 0.01,
            delta: vec![1.0; 255],
            alpha: vec![alpha; 255],
            selected,
        }
    }

    #[test]
    fn hw_shaped_model_splits_like_dpa() {
        let model = toy_model((0..8).map(|b| ByteMask::new(1 << b).unwrap()).collect(), 0.7);
        let counts = [10usize; 256];
        for k in [0u8, 0x3c, 0xff] {
            let leakage: [f64; 256] = std::array::from_fn(|p| model.predict(intermediate(p as u8, k)));
            assert_eq!(median_partition(&leakage, &counts).unwrap(), hw_partition(k));
        }
    }

    #[test]
    fn msb_model_is_the_msb_split() {
        let model = toy_model(vec![ByteMask::new(0x80).unwrap()], 0.9);
        for counts in [[1usize; 256], std::array::from_fn(|p| p % 3)] {
            let leakage: [f64; 256] = std::array::from_fn(|p| model.predict(intermediate(p as u8, 9)));
            let class = median_partition(&leakage, &counts).unwrap();
            for p in 0..256 {
                if counts[p] > 0 {
                    assert_eq!(class[p], Some(intermediate(p as u8, 9) >= 0x80));
                }
            }
        }
    }

    #[test]
    fn constant_leakage_has_no_split() {
        assert!(median_partition(&[0.5; 256], &[3; 256]).is_none());
        let mut counts = [0usize; 256];
        counts[4] = 9;
        let l: [f64; 256] = std::array::from_fn(|p| p as f64);
        assert!(median_partition(&l, &counts).is_none());
    }

    #[test]
    fn missing_models_score_zero() {
        let (data, pts) = random_case(60, 3, 4);
        let mut models: Vec<Option<LeakageModel>> = vec![None; 256];
        models[5] = Some(toy_model(vec![ByteMask::new(0x01).unwrap()], 1.0));
        let scores = scaul_on(data.view(), &pts, &models).unwrap();
        assert!(scores.iter().filter(|c| c.candidate != 5).all(|c| c.score == 0.0));
        assert!(scores[5].score > 0.0);
        assert!(scaul_on(data.view(), &pts, &models[..10]).is_err());
    }

    fn fixed_scores(f: impl Fn(u8) -> f64) -> Vec<CandidateScore> {
        (0..=255u8)
            .map(|k| CandidateScore {
                candidate: k,
                score: f(k),
                cluster_sizes: [1, 1],
            })
            .collect()
    }

    #[test]
    fn synthetic_sweep() {
        let grid = [10, 20, 40];
        let r = sweep("t", 0, Some(0), &grid, 40, |_| Ok(fixed_scores(|k| 255.0 - k as f64))).unwrap();
        assert!(r.points.iter().all(|p| p.true_key_rank == Some(1)));
        assert_eq!(r.min_traces_to_rank1, Some(10));
        assert!(sweep("t", 0, Some(0), &[10, 50], 40, |_| Ok(fixed_scores(|_| 0.0))).is_err());
        assert!(sweep("t", 0, Some(0), &[20, 10], 40, |_| Ok(fixed_scores(|_| 0.0))).is_err());
        assert!(sweep("t", 0, Some(0), &[], 40, |_| Ok(fixed_scores(|_| 0.0))).is_err());
    }

    #[test]
    fn ties_count_against_the_key() {
        let s = fixed_scores(|k| if k < 2 { 1.0 } else { 0.0 });
        assert_eq!(key_rank(&s, 0), 2);
        assert_eq!(key_rank(&s, 1), 2);
        assert_eq!(ranking(&s)[..2], [0, 1]);
        let zeros = fixed_scores(|_| 0.0);
        assert_eq!(key_rank(&zeros, 17), 256);
    }

    #[test]
    fn rank_one_must_hold_to_the_end() {
        let point = |n, r| SweepPoint {
            trace_count: n,
            scores: Vec::new(),
            true_key_rank: Some(r),
        };
        let pts = vec![point(1, 1), point(2, 3), point(3, 1), point(4, 1)];
        assert_eq!(min_traces_to_rank1(&pts), Some(3));
        let pts = vec![point(1, 1), point(2, 1), point(3, 2)];
        assert_eq!(min_traces_to_rank1(&pts), None);
    }

    #[test]
    fn csv_has_one_row_per_candidate_and_count() {
        let r = sweep("t", 3, Some(7), &[5, 6], 6, |n| Ok(fixed_scores(|k| (k as f64 - n as f64).abs()))).unwrap();
        let csv = r.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "trace_count,candidate,score,rank,is_true_key");
        assert_eq!(lines.len(), 1 + 2 * 256);
        assert_eq!(lines.iter().filter(|l| l.ends_with(",true")).count(), 2);
        assert_eq!(KeySweepResult::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn linear_grid_ends_at_max() {
        assert_eq!(linear_grid(250, 1000), vec![250, 500, 750, 1000]);
        assert_eq!(linear_grid(300, 1000), vec![300, 600, 900, 1000]);
        assert!(linear_grid(0, 10).is_empty());
    }
}
