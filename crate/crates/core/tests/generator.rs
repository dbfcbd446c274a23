use vervaat_core::lrd_gauss::{
    generate_path, partial_sum_variance, CovarianceSpec, EmbeddingPolicy, PathGenerator, SlowlyVarying,
};
use vervaat_core::special::norm_cdf;

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[test]
fn same_seed_same_path() {
    let spec = CovarianceSpec::fgn_matched(0.3);
    let a = generate_path(&spec, 1000, 42).unwrap();
    let b = generate_path(&spec, 1000, 42).unwrap();
    assert_eq!(a.values, b.values);
    assert_ne!(a.values, generate_path(&spec, 1000, 43).unwrap().values);
    let one = generate_path(&spec, 1, 7).unwrap();
    assert_eq!(one.values.len(), 1);
    assert_eq!(one.values, generate_path(&spec, 1, 7).unwrap().values);
}

#[test]
fn pooled_marginals_pass_anderson_darling() {
    // first coordinate of independent paths, so the pooled draws are i.i.d.
    let spec = CovarianceSpec::fgn_matched(0.4);
    let gen = PathGenerator::new(&spec, 64, EmbeddingPolicy::default()).unwrap();
    let mut z: Vec<f64> = (0..10_000u64).map(|s| gen.sample_values(s)[0]).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let a2 = -n - z
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = (2 * i + 1) as f64;
            w * (norm_cdf(x).ln() + (1.0 - norm_cdf(z[z.len() - 1 - i])).ln())
        })
        .sum::<f64>()
        / n;
    // 1% critical value for a fully specified null
    assert!(a2 < 3.857, "A² = {a2}");
}

#[test]
fn autocovariance_and_halves_agree_with_spec() {
    let spec = CovarianceSpec::pure_power(0.4, SlowlyVarying::Constant(0.8));
    let n = 512;
    let gen = PathGenerator::new(&spec, n, EmbeddingPolicy::default()).unwrap();
    assert!(gen.method().is_exact());
    let reps = 400;
    let lags = [1usize, 2, 5, 10, 50];
    let mut first = vec![Vec::new(); lags.len()];
    let mut second = vec![Vec::new(); lags.len()];
    for s in 0..reps {
        let x = gen.sample_values(s);
        let h = n / 2;
        for (li, &k) in lags.iter().enumerate() {
            let est = |xs: &[f64]| xs.iter().zip(&xs[k..]).map(|(a, b)| a * b).sum::<f64>() / (xs.len() - k) as f64;
            first[li].push(est(&x[..h]));
            second[li].push(est(&x[h..]));
        }
    }
    for (li, &k) in lags.iter().enumerate() {
        let (m1, se1) = mean_and_se(&first[li]);
        let (m2, se2) = mean_and_se(&second[li]);
        let gamma = spec.autocovariance(k);
        assert!((m1 - gamma).abs() < 3.0 * se1, "lag {k}: {m1} vs {gamma}");
        assert!((m1 - m2).abs() < 3.0 * (se1 * se1 + se2 * se2).sqrt(), "lag {k}: halves differ");
    }
}

#[test]
fn partial_sum_variance_double_sum() {
    let spec = CovarianceSpec::pure_power(0.4, SlowlyVarying::Constant(1.0));
    let n: usize = 300;
    let mut brute = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            brute += spec.autocovariance(i.abs_diff(j));
        }
    }
    assert!((partial_sum_variance(&spec, n, 1) - brute).abs() < 1e-9 * brute);
    let mut brute2 = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            brute2 += spec.autocovariance(i.abs_diff(j)).powi(2);
        }
    }
    assert!((partial_sum_variance(&spec, n, 2) - brute2 / 2.0).abs() < 1e-9 * brute2);
    // fgn: Var Σ = n^{2H}
    let f = CovarianceSpec::fgn_matched(0.4);
    assert!((partial_sum_variance(&f, 1000, 1) - 1000f64.powf(1.6)).abs() < 1e-6 * 1000f64.powf(1.6));
}

#[test]
fn f32_paths() {
    let spec = CovarianceSpec::<f32>::fgn_matched(0.4);
    let p = generate_path(&spec, 256, 1).unwrap();
    assert_eq!(p.values.len(), 256);
    assert!(p.values.iter().all(|v| v.is_finite()));
    let d = generate_path(&CovarianceSpec::<f64>::fgn_matched(0.4), 256, 1).unwrap();
    for (a, b) in p.values.iter().zip(&d.values) {
        assert!((*a as f64 - b).abs() < 1e-3);
    }
}
