use scaul::aes::{hamming_weight, intermediate};
use scaul::attack::{dpa_raw, key_rank, linear_grid, sweep_raw};
use scaul::sim::{simulate, snr, Baseline, SimConfig, SnrClasses};
use scaul::trace::extract_windows;

const KEY: [u8; 16] = *b"\x2b\x7e\x15\x16\x28\xae\xd2\xa6\xab\xf7\x15\x88\x09\xcf\x4f\x3c";

fn hw_sim(num_traces: usize, sigma: f64, seed: u64) -> SimConfig {
    SimConfig {
        num_traces,
        noise_sigma: sigma,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn raw_dpa_recovers_every_byte() {
    let cfg = hw_sim(5000, 1.0, 21);
    let ts = simulate(&cfg, &KEY).unwrap();
    let sub = extract_windows(&ts, &cfg.window_spec(125, 0).unwrap(), None).unwrap();
    for byte in 0..16 {
        let scores = dpa_raw(&sub, byte).unwrap();
        assert_eq!(key_rank(&scores, KEY[byte]), 1, "byte {byte}");
    }
    let sweep = sweep_raw(&sub, 0, Some(KEY[0]), &linear_grid(250, 5000)).unwrap();
    assert!(sweep.min_traces_to_rank1.is_some());
    assert_eq!(sweep.final_rank(), Some(1));
}

#[test]
fn noiseless_score_equals_the_weight_gap() {
    let cfg = SimConfig {
        num_traces: 600,
        noise_sigma: 0.0,
        leak_amplitude: 0.75,
        baseline: Baseline::flat(),
        seed: 4,
        ..SimConfig::default()
    };
    let ts = simulate(&cfg, &KEY).unwrap();
    let sub = extract_windows(&ts, &cfg.window_spec(125, 0).unwrap(), None).unwrap();
    let byte = 3;
    let (mut high, mut low) = (Vec::new(), Vec::new());
    for pt in ts.plaintexts() {
        let h = hamming_weight(intermediate(pt[byte], KEY[byte])) as f64;
        if h > 4.0 {
            high.push(h);
        } else if h < 4.0 {
            low.push(h);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let expected = cfg.leak_amplitude * (mean(&high) - mean(&low));
    let scores = dpa_raw(&sub, byte).unwrap();
    let got = scores.iter().find(|s| s.candidate == KEY[byte]).unwrap();
    assert!((got.score - expected).abs() < 1e-5 * expected, "{} vs {expected}", got.score);
    assert_eq!(got.cluster_sizes, [low.len(), high.len()]);
}

#[test]
fn clock_jitter_lowers_the_true_key_score() {
    let score = |jitter| {
        let cfg = SimConfig {
            jitter_halfwidth: jitter,
            ..hw_sim(3000, 1.0, 8)
        };
        let ts = simulate(&cfg, &KEY).unwrap();
        let sub = extract_windows(&ts, &cfg.window_spec(125, 0).unwrap(), None).unwrap();
        let scores = dpa_raw(&sub, 0).unwrap();
        scores.iter().find(|s| s.candidate == KEY[0]).unwrap().score
    };
    let aligned = score(0);
    let jittered = score(12);
    assert!(jittered < 0.6 * aligned, "aligned {aligned} jittered {jittered}");
}

#[test]
fn snr_matches_the_weight_variance() {
    let (a, sigma) = (1.0, 2.0);
    let cfg = SimConfig {
        baseline: Baseline::flat(),
        leak_amplitude: a,
        ..hw_sim(20000, sigma, 13)
    };
    let ts = simulate(&cfg, &KEY).unwrap();
    let spec = cfg.window_spec(125, 0).unwrap();
    // Hamming weight of a uniform byte has variance 8 / 4.
    let expected = a * a * 2.0 / (sigma * sigma);
    let got = snr(&ts, None, 5, &spec, SnrClasses::HammingWeight).unwrap();
    assert!((got - expected).abs() < 0.1 * expected, "{got} vs {expected}");

    let clean = simulate(&SimConfig { noise_sigma: 0.0, ..cfg }, &KEY).unwrap();
    assert!(snr(&clean, None, 5, &spec, SnrClasses::Value).unwrap().is_infinite());
}
