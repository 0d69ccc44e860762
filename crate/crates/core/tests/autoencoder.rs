use ndarray::{Array1, Axis};
use scaul::aes::{hamming_weight, intermediate};
use scaul::autoencoder::{extract_features, train_autoencoder, AeArchitecture, AeTrainConfig};
use scaul::nn::AdamConfig;
use scaul::sim::{simulate, LeakageKind, SimConfig};
use scaul::trace::{extract_windows, SubTraceSet};

const KEY: [u8; 16] = *b"\x2b\x7e\x15\x16\x28\xae\xd2\xa6\xab\xf7\x15\x88\x09\xcf\x4f\x3c";

fn sim(num_traces: usize, sigma: f64, leak: f64, seed: u64) -> SimConfig {
    SimConfig {
        num_traces,
        samples_per_clock: 32,
        leak_amplitude: leak,
        noise_sigma: sigma,
        leak_spread: 5,
        margin: 32,
        seed,
        ..SimConfig::default()
    }
}

fn windows(cfg: &SimConfig) -> SubTraceSet {
    let ts = simulate(cfg, &KEY).unwrap();
    extract_windows(&ts, &cfg.window_spec(32, 0).unwrap(), None).unwrap()
}

fn train_cfg(hidden: usize, epochs: usize) -> AeTrainConfig {
    AeTrainConfig {
        arch: AeArchitecture {
            hidden,
            window: 4,
            stride: 2,
        },
        epochs,
        batch_size: 32,
        adam: AdamConfig {
            lr: 5e-3,
            ..AdamConfig::default()
        },
        ..AeTrainConfig::default()
    }
}

#[test]
fn periodic_baseline_is_reconstructed() {
    let cfg = sim(8, 0.0, 0.0, 1);
    let sub = windows(&cfg);
    let trained = train_autoencoder::<f64>(&sub, &train_cfg(8, 60)).unwrap();
    let rec = trained.model.reconstruct(sub.windows()).unwrap();
    let amplitude = cfg.baseline.amplitude;
    let worst = rec
        .iter()
        .zip(sub.windows().iter())
        .map(|(r, x)| (r - *x as f64).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.05 * amplitude, "worst per-sample error {worst}");
}

#[test]
fn training_reduces_loss_and_denoises() {
    let sigma = 0.5;
    let train = windows(&sim(150, sigma, 1.0, 2));
    let trained = train_autoencoder::<f32>(&train, &train_cfg(16, 12)).unwrap();
    let h = &trained.history;
    assert!(h.last().unwrap() < &(0.9 * h[0]), "history {h:?}");

    let noisy = windows(&sim(60, sigma, 1.0, 3));
    let clean = windows(&sim(60, 0.0, 1.0, 3));
    let rec = trained.model.reconstruct(noisy.windows()).unwrap();
    let mse = rec
        .iter()
        .zip(clean.windows().iter())
        .map(|(r, c)| (*r as f64 - *c as f64).powi(2))
        .sum::<f64>()
        / rec.len() as f64;
    assert!(mse < sigma * sigma, "reconstruction mse {mse}");
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn features_cluster_by_hamming_weight() {
    let cfg = SimConfig {
        leakage: LeakageKind::HammingWeight,
        ..sim(120, 0.0, 1.0, 4)
    };
    let sub = windows(&cfg);
    let trained = train_autoencoder::<f64>(&sub, &train_cfg(16, 10)).unwrap();
    let fm = extract_features(&trained.model, &sub, "test").unwrap();
    let labels = sub.labels();
    let d = fm.dim();
    let mut sums = vec![Array1::<f64>::zeros(d); 9];
    let mut counts = [0usize; 9];
    for (k, row) in fm.data.axis_iter(Axis(0)).enumerate() {
        let byte = sub.byte_indices()[k] as usize;
        let hw = hamming_weight(intermediate(labels[k], KEY[byte])) as usize;
        sums[hw] += &row;
        counts[hw] += 1;
    }
    let classes: Vec<usize> = (0..9).filter(|c| counts[*c] > 0).collect();
    let means: Vec<Array1<f64>> = classes.iter().map(|c| &sums[*c] / counts[*c] as f64).collect();
    let (mut dist, mut gap) = (Vec::new(), Vec::new());
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            dist.push((&means[a] - &means[b]).mapv(|v| v * v).sum().sqrt());
            gap.push(classes[a].abs_diff(classes[b]) as f64);
        }
    }
    let rho = pearson(&ranks(&dist), &ranks(&gap));
    assert!(rho > 0.5, "spearman {rho}");
}
