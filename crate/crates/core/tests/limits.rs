use vervaat_core::experiments::{ks_critical_1pct, ks_two_sample};
use vervaat_core::limit_processes::{FbmSampler, HermiteSumSampler};
use vervaat_core::lrd_gauss::{CovarianceSpec, EmbeddingPolicy};

fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[test]
fn fbm_covariance_oracle() {
    let h = 0.8;
    let s = FbmSampler::new(h, 64).unwrap();
    let paths: Vec<_> = (0..3000u64).map(|i| s.sample(i)).collect();
    let cov = |a: f64, b: f64| (a.powf(2.0 * h) + b.powf(2.0 * h) - (a - b).abs().powf(2.0 * h)) / 2.0;
    for (a, b) in [(0.5, 1.0), (0.25, 0.75), (1.0, 1.0)] {
        let prod: Vec<f64> = paths.iter().map(|p| p.eval(a) * p.eval(b)).collect();
        let (m, se) = mean_se(&prod);
        assert!((m - cov(a, b)).abs() < 3.0 * se, "({a},{b}): {m} vs {}", cov(a, b));
    }
    // self-similarity: Var Y(t) = t^{2H}
    for t in [0.25, 0.5, 0.75] {
        let sq: Vec<f64> = paths.iter().map(|p| p.eval(t).powi(2)).collect();
        let (m, se) = mean_se(&sq);
        assert!((m - t.powf(2.0 * h)).abs() < 3.0 * se);
    }
}

#[test]
fn brownian_increments_uncorrelated() {
    let s = FbmSampler::new(0.5, 16).unwrap();
    let prods: Vec<f64> = (0..4000u64)
        .map(|i| {
            let p = s.sample(i);
            (p.values[1] - p.values[0]) * (p.values[9] - p.values[8])
        })
        .collect();
    let (m, se) = mean_se(&prods);
    assert!(m.abs() < 3.0 * se);
}

#[test]
fn hermite_sum_variances() {
    let spec = CovarianceSpec::fgn_matched(0.4);
    let s = HermiteSumSampler::new(1, &spec, 4096, 8, EmbeddingPolicy::default()).unwrap();
    let y1: Vec<f64> = (0..500u64).map(|i| s.sample(i).terminal()).collect();
    let var = y1.iter().map(|v| v * v).sum::<f64>() / 500.0;
    assert!((0.85..=1.15).contains(&var), "{var}");

    // Rosenblatt: Var Y₂(1) = 1/2, and the exact finite-m value from the γ² double sum
    let spec2 = CovarianceSpec::fgn_matched(0.25);
    let r = HermiteSumSampler::new(2, &spec2, 1 << 14, 8, EmbeddingPolicy::default()).unwrap();
    let exact: f64 = r.exact_terminal_variance();
    assert!((exact - 0.5).abs() < 0.15 * 0.5, "{exact}");
    let y2: Vec<f64> = (0..600u64).map(|i| r.sample(i).terminal()).collect();
    let (m, _) = mean_se(&y2);
    assert!(m.abs() < 0.15);
    let sq: Vec<f64> = y2.iter().map(|v| v * v).collect();
    let (v2, se2) = mean_se(&sq);
    assert!((v2 - exact).abs() < 3.0 * se2 + 0.15 * 0.5, "{v2} vs {exact}");
}

#[test]
fn fbm_and_hermite_sum_agree_in_distribution() {
    let spec = CovarianceSpec::fgn_matched(0.4);
    let f = FbmSampler::new(0.8, 8).unwrap();
    let h = HermiteSumSampler::new(1, &spec, 4096, 8, EmbeddingPolicy::default()).unwrap();
    let a: Vec<f64> = (0..500u64).map(|i| f.sample(i).terminal()).collect();
    let b: Vec<f64> = (0..500u64).map(|i| h.sample(10_000 + i).terminal()).collect();
    assert!(ks_two_sample(&a, &b) < ks_critical_1pct(500, 500));
}
