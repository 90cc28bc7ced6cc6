use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use youngflow::{
    dyadic_ladder, first_order_remainder, gen_fbm, indefinite_integral, p_variation, young_integral, young_loeve_bound,
    FbmSpec, OperatorPath, SampledPath, TagRule,
};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn random_path(rng: &mut ChaCha8Rng, n: usize, d: usize) -> SampledPath {
    let mut values = vec![0.0; n * d];
    for i in d..n * d {
        values[i] = values[i - d] + rng.random_range(-1.0..1.0);
    }
    SampledPath::new(SampledPath::uniform_grid(n, 1.0), values, d).unwrap()
}

/// Left sum of `r ↦ r` against `r ↦ r` on `n` uniform intervals, `(n − 1) / 2n`.
fn ramp_left_sum(n: usize) -> f64 {
    (n as f64 - 1.0) / (2.0 * n as f64)
}

#[test]
fn left_ramp_sums_follow_the_closed_form() {
    for n in [1usize, 2, 16, 100, 1024] {
        let x = SampledPath::from_fn(n + 1, 1.0, 1, |t| vec![t]).unwrap();
        let z = OperatorPath::scalar(x.clone()).unwrap();
        let v = young_integral(&z, &x, 0.0, 1.0, TagRule::Left).unwrap().value[0];
        assert!((v - ramp_left_sum(n)).abs() < 1e-14, "n = {n}: {v}");
    }
    assert_eq!(ramp_left_sum(16), 0.46875);
}

#[test]
fn young_loeve_holds_on_random_subintervals() {
    let (p, q) = (1.0 / 0.7, 1.0 / 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..3 {
        let x = gen_fbm(&FbmSpec::new(0.75, 513, 1.0, seed)).unwrap();
        let z = OperatorPath::scalar(x.clone()).unwrap();
        for _ in 0..40 {
            let i = rng.random_range(0..x.len() - 1);
            let j = rng.random_range(i + 1..x.len());
            let (s, t) = (x.time(i), x.time(j));
            let rem = norm(&first_order_remainder(&z, &x, s, t, TagRule::Left).unwrap());
            let bound = young_loeve_bound(&z, &x, p, q, s, t).unwrap();
            assert!(rem <= bound, "[{s}, {t}]: {rem} > {bound}");
        }
    }
}

#[test]
fn tag_choice_washes_out_under_refinement() {
    for seed in 0..3 {
        let x = gen_fbm(&FbmSpec::new(0.7, (1 << 11) + 1, 1.0, seed)).unwrap();
        let gaps: Vec<f64> = dyadic_ladder(&x, 5)
            .unwrap()
            .iter()
            .map(|xl| {
                let z = OperatorPath::scalar(xl.clone()).unwrap();
                let l = young_integral(&z, xl, 0.0, 1.0, TagRule::Left).unwrap().value[0];
                let m = young_integral(&z, xl, 0.0, 1.0, TagRule::MidpointTime).unwrap().value[0];
                (l - m).abs()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] <= 1.1 * w[0]), "{gaps:?}");
        assert!(gaps[4] < 0.5 * gaps[0], "{gaps:?}");
    }
}

#[test]
fn indefinite_integral_variation_is_controlled() {
    let x = gen_fbm(&FbmSpec::new(0.8, (1 << 10) + 1, 1.0, 3)).unwrap();
    let p = 1.0 / 0.75;
    for xl in dyadic_ladder(&x, 4).unwrap() {
        let z = OperatorPath::scalar(xl.map(1, |_, v| vec![v[0].cos()]).unwrap()).unwrap();
        let w = indefinite_integral(&z, &xl, TagRule::Left).unwrap();
        assert_eq!(w.first(), &[0.0]);
        let wp = p_variation(&w, p).unwrap().value;
        let xp = p_variation(&xl, p).unwrap().value;
        let bound = xp + young_loeve_bound(&z, &xl, p, p, 0.0, 1.0).unwrap();
        assert!(wp <= bound, "{wp} > {bound}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integral_is_linear_in_the_integrand(
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        tag in prop::sample::select(vec![TagRule::Left, TagRule::Right, TagRule::MidpointTime]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_path(&mut rng, 33, 2);
        let z1 = OperatorPath::matrix(random_path(&mut rng, 33, 6), 3, 2).unwrap();
        let z2 = OperatorPath::matrix(random_path(&mut rng, 33, 6), 3, 2).unwrap();
        let combo = z1.linear_combination(a, &z2, b).unwrap();
        let lhs = young_integral(&combo, &x, 0.0, 1.0, tag).unwrap().value;
        let i1 = young_integral(&z1, &x, 0.0, 1.0, tag).unwrap().value;
        let i2 = young_integral(&z2, &x, 0.0, 1.0, tag).unwrap().value;
        let scale = norm(&i1).max(norm(&i2)).max(1.0) * (a.abs() + b.abs() + 1.0);
        for k in 0..3 {
            prop_assert!((lhs[k] - (a * i1[k] + b * i2[k])).abs() <= 1e-12 * scale * 33.0);
        }
    }

    #[test]
    fn integral_is_additive_over_intervals(seed in any::<u64>(), cut in 1usize..32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_path(&mut rng, 33, 2);
        let z = OperatorPath::matrix(random_path(&mut rng, 33, 4), 2, 2).unwrap();
        let u = x.time(cut);
        let whole = young_integral(&z, &x, 0.0, 1.0, TagRule::Left).unwrap().value;
        let a = young_integral(&z, &x, 0.0, u, TagRule::Left).unwrap().value;
        let b = young_integral(&z, &x, u, 1.0, TagRule::Left).unwrap().value;
        let w = indefinite_integral(&z, &x, TagRule::Left).unwrap();
        let c = young_integral(&z, &x, u, 1.0, TagRule::Left).unwrap().value;
        for k in 0..2 {
            let tol = 1e-12 * (1.0 + whole[k].abs() + a[k].abs() + b[k].abs());
            prop_assert!((a[k] + b[k] - whole[k]).abs() <= tol);
            prop_assert!((w.last()[k] - w.value(cut)[k] - c[k]).abs() <= tol);
        }
    }

    #[test]
    fn identity_integrand_recovers_increments(seed in any::<u64>(), i in 0usize..16, j in 17usize..33) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_path(&mut rng, 33, 3);
        let z = OperatorPath::identity(x.times().to_vec(), 3).unwrap();
        let v = young_integral(&z, &x, x.time(i), x.time(j), TagRule::Left).unwrap().value;
        for (k, vk) in v.iter().enumerate() {
            prop_assert!((vk - (x.value(j)[k] - x.value(i)[k])).abs() <= 1e-12 * 33.0);
        }
    }
}
