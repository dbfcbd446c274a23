use std::sync::Arc;

use proptest::prelude::*;
use vervaat_core::bk_vervaat::{
    a_process, check_identities, r_general, r_star, vervaat, vervaat_error, CouplingField, CouplingKind, ReductionField,
    ZField,
};
use vervaat_core::distributions::DistributionSpec;
use vervaat_core::hermite::{coefficient_c, HermiteAnalysis, SubordinationSpec};
use vervaat_core::scalar::factorial;
use vervaat_core::seq_processes::{level_sup, lp_norm, process_field, ProcessKind, SampleBatch, Side, TwoParamField};

fn uniforms() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..0.999, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rstar_two_forms(u in uniforms(), y in 0.0f64..=1.0, d in 0.5f64..5.0) {
        let b = SampleBatch::new(u.clone(), None).unwrap();
        let alpha = process_field(ProcessKind::Alpha, d, None).unwrap();
        let quant = process_field(ProcessKind::U, d, None).unwrap();
        for k in 1..=u.len() {
            let level = b.level(k);
            for side in [Side::Left, Side::Value, Side::Right] {
                let def = d * (alpha.eval(&level, y, side) - quant.eval(&level, y, side));
                let direct = r_star::<f64>().eval(&level, y, side);
                prop_assert!((def - direct).abs() <= 1e-10 * (k as f64).max(1.0));
            }
        }
    }

    #[test]
    fn vervaat_identity_holds(u in uniforms(), s in 0.0f64..=1.0, d in 0.5f64..5.0) {
        let b = SampleBatch::new(u.clone(), None).unwrap();
        let alpha = process_field(ProcessKind::Alpha, d, None).unwrap();
        for k in 1..=u.len() {
            let level = b.level(k);
            let q = vervaat_error(d).eval(&level, s, Side::Value);
            let a = a_process(d).eval(&level, s, Side::Value);
            let rs = r_star::<f64>().eval(&level, s, Side::Value);
            let al = alpha.eval(&level, s, Side::Value);
            let v = vervaat(d).eval(&level, s, Side::Value);
            let operands = 2.0 * k as f64 / (d * d) * (k as f64 + level.prefix_sum(k));
            let scale = v.abs().max(al * al).max(a.abs()).max(operands);
            prop_assert!((q - (a - rs * rs / (d * d))).abs() <= 1e-9 * scale);
            prop_assert!((q - (v - al * al)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn vervaat_is_nonnegative_integral(u in uniforms(), s in 0.0f64..=1.0) {
        // ∫_0^s R* ≥ 0 follows from the area interpretation of Vervaat's integral
        let b = SampleBatch::new(u.clone(), None).unwrap();
        for k in 1..=u.len() {
            prop_assert!(vervaat(1.0).eval(&b.level(k), s, Side::Value) >= -1e-12);
        }
    }

    #[test]
    fn general_identity_exponential(u in uniforms(), d in 0.5f64..5.0) {
        let x: Vec<f64> = u.iter().map(|v| -(-v).ln_1p()).collect();
        let b = SampleBatch::new(u, Some(x)).unwrap();
        let rep = check_identities(&b, d, &DistributionSpec::Exponential { rate: 1.0 }, 0, 0);
        prop_assert!(rep.vervaat <= 1e-9 && rep.rstar_two_form <= 1e-10 && rep.general <= 1e-9, "{:?}", rep);
    }

    #[test]
    fn hermite_coefficients_bounded(l in 1usize..9, x in -3.0f64..3.0) {
        for g in [SubordinationSpec::Identity, SubordinationSpec::Square, SubordinationSpec::Absolute] {
            let c = coefficient_c(&g, l, x).unwrap();
            prop_assert!(c.abs() <= factorial::<f64>(l) + 1e-12);
        }
    }

    #[test]
    fn quantile_inverts_cdf(rate in 0.1f64..10.0, y in 0.001f64..0.999) {
        for dist in [
            DistributionSpec::Exponential { rate },
            DistributionSpec::Normal { mu: 1.0, sigma: rate },
            DistributionSpec::Cauchy { loc: 0.0, scale: rate },
            DistributionSpec::Uniform { lo: -rate, hi: rate },
        ] {
            prop_assert!((dist.cdf(dist.quantile(y)) - y).abs() < 1e-9);
        }
    }
}

#[test]
fn uniform_marginal_makes_general_equal_rstar() {
    let u = vec![0.42, 0.11, 0.93, 0.57, 0.05, 0.76];
    let b = SampleBatch::new(u, None).unwrap();
    let rg = r_general(2.0, DistributionSpec::standard_uniform());
    for k in 1..=6 {
        let level = b.level(k);
        for i in 0..=50 {
            let y = i as f64 / 50.0;
            let a = rg.eval(&level, y, Side::Value);
            assert!((a - r_star::<f64>().eval(&level, y, Side::Value)).abs() < 1e-12);
        }
    }
}

#[test]
fn exponential_general_by_hand() {
    // n = 3, y = 0.5, t = 1, d = 1
    let u: Vec<f64> = vec![0.2, 0.9, 0.6];
    let x: Vec<f64> = u.iter().map(|v| -(-v).ln_1p()).collect();
    let b = SampleBatch::new(u.clone(), Some(x)).unwrap();
    let level = b.level(3);
    // N(0.5) = 1, Û(0.5) = U_(2) = 0.6, Q(0.5) = ln 2, f(Q(0.5)) = 0.5
    let q = 2f64.ln();
    let rho = 3.0 * 0.5 * (q - (-(-0.6f64).ln_1p()));
    let expected = (1.0 - 1.5) - rho;
    let got = r_general(1.0, DistributionSpec::Exponential { rate: 1.0 }).eval(&level, 0.5, Side::Value);
    assert!((got - expected).abs() < 1e-14);
}

#[test]
fn sup_and_lp_against_grid_oracle() {
    let u = vec![0.42, 0.11, 0.93, 0.57, 0.05, 0.76, 0.31];
    let b = SampleBatch::new(u, None).unwrap();
    let q = vervaat_error(1.3);
    let level = b.level(7);
    let exact = level_sup(&q, &level, (0.0, 1.0));
    let mut grid = 0.0f64;
    for i in 0..=200_000 {
        grid = grid.max(q.eval(&level, i as f64 / 200_000.0, Side::Value).abs());
    }
    assert!(exact >= grid - 1e-12 && exact - grid < 1e-6, "{exact} vs {grid}");
    let l2 = lp_norm(&process_field(ProcessKind::Alpha, 1.0, None).unwrap(), &b, 2).unwrap();
    let mut riemann = 0.0;
    let m = 2000;
    for k in 1..7 {
        let level = b.level(k);
        let mut s = 0.0;
        for i in 0..m {
            let y = (i as f64 + 0.5) / m as f64;
            s += (k as f64 * (level.sorted_u().iter().filter(|&&v| v <= y).count() as f64 / k as f64 - y)).powi(2);
        }
        riemann += s / m as f64 / 7.0;
    }
    assert!((l2.powi(2) - riemann).abs() < 1e-3 * riemann.max(1.0), "{l2} vs {riemann}");
}

#[test]
fn z_is_finite_up_to_the_edges() {
    let analysis = Arc::new(
        HermiteAnalysis::new(&SubordinationSpec::QuantileCompose(DistributionSpec::Exponential { rate: 1.0 })).unwrap(),
    );
    let eta: Vec<f64> = (0..64).map(|i| ((i * 37 % 64) as f64 / 64.0 - 0.5) * 0.1).collect();
    let r = Arc::new(ReductionField::new(&eta, analysis));
    let z = ZField::new(r.clone(), 8.0);
    for s in [0.0, 1e-9, 0.1, 0.5, 0.9, 1.0 - 1e-9, 1.0] {
        assert!(z.eval_at(s, 64).is_finite());
    }
    let c = CouplingField::new(CouplingKind::Empirical, r, 8.0, None);
    assert_eq!(c.cell_degree(), None);
}

#[test]
fn f32_instantiation() {
    let u: Vec<f32> = vec![0.3, 0.7];
    let b = SampleBatch::new(u, None).unwrap();
    let level = b.level(2);
    assert!((r_star::<f32>().eval(&level, 0.5, Side::Value) + 0.4).abs() < 1e-6);
    let a = HermiteAnalysis::<f32>::new(&SubordinationSpec::Identity).unwrap();
    assert_eq!(a.tau(), 1);
    assert!((a.kappas().k1 - 0.398_942).abs() < 1e-4);
}
