mod common;

use mfcce_core::analytic::{cce_margin, finite_n_gap_oracle, hk_coefficients, DeviceProbs, Interval};
use mfcce_core::correlation::build_example_device;
use mfcce_core::equilibrium::{cce_gap_nplayer, mean_field_gap_mc, DeviationFamily};
use mfcce_core::metrics::{w2_empirical_1d, Empirical1D};
use mfcce_core::model::{build_bang_bang_model, MeasureView, Particles};
use mfcce_core::sde::{simulate_n_player, PlayerSpec, TimeGrid};
use mfcce_core::ConstantAction;
use proptest::prelude::*;

fn device() -> impl Strategy<Value = [f64; 4]> {
    (
        prop::array::uniform4(prop_oneof![1 => Just(0.0), 4 => 0.0f64..1.0]),
    )
        .prop_filter_map("all zero", |(w,)| {
            let s: f64 = w.iter().sum();
            (s > 1e-3).then(|| {
                let p = w.map(|x| x / s);
                [p[0], p[1], p[2], (1.0 - p[0] - p[1] - p[2]).max(0.0)]
            })
        })
}

fn interval() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..4.0, 0.05f64..4.0).prop_map(|(a, b)| (-a, b))
}

fn sample(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..max)
}

fn w2(x: &[f64], y: &[f64]) -> f64 {
    w2_empirical_1d(&Empirical1D::from_slice(x).unwrap(), &Empirical1D::from_slice(y).unwrap()).value
}

fn simplified_hk(p: [f64; 4], a: f64, b: f64) -> (f64, f64) {
    let [p11, p12, p21, p22] = p;
    let (c1, c2) = (p11 + p21, p12 + p22);
    let h = -b * (p11 + p12) - a * (p21 + p22);
    let part = |x: f64, c: f64| if c > 0.0 { x * x / c } else { 0.0 };
    (h, part(b * p11 + a * p21, c1) + part(b * p12 + a * p22, c2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn w2_is_a_metric(x in sample(40), y in sample(40), z in sample(40)) {
        prop_assert!(w2(&x, &x) == 0.0);
        prop_assert!((w2(&x, &y) - w2(&y, &x)).abs() < 1e-12);
        prop_assert!(w2(&x, &z) <= w2(&x, &y) + w2(&y, &z) + 1e-9);
    }

    #[test]
    fn w2_scale_equivariance(x in sample(40), y in sample(40), alpha in -5.0f64..5.0) {
        let ex = Empirical1D::from_slice(&x).unwrap();
        let ey = Empirical1D::from_slice(&y).unwrap();
        let scaled = w2_empirical_1d(&ex.scaled(alpha), &ey.scaled(alpha)).value;
        let base = w2_empirical_1d(&ex, &ey).value;
        prop_assert!((scaled - alpha.abs() * base).abs() <= 1e-9 * (1.0 + base * alpha.abs()));
    }

    #[test]
    fn w2_translation_of_identical_samples(x in sample(40), shift in -5.0f64..5.0) {
        let y: Vec<f64> = x.iter().map(|v| v + shift).collect();
        prop_assert!((w2(&x, &y) - shift.abs()).abs() < 1e-9);
    }

    #[test]
    fn moment_bound(x in prop::collection::vec(-100.0f64..100.0, 2..60)) {
        for d in [1usize, 2] {
            let len = x.len() / d * d;
            let v = MeasureView::from_particles(Particles::new(&x[..len], d).unwrap());
            let sq: f64 = v.mean().iter().map(|m| m * m).sum();
            prop_assert!(sq <= v.second_moment() * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn margin_is_continuous(p in device(), (a, b) in interval(), i in 0usize..4, j in 0usize..4) {
        prop_assume!(i != j && p[i] > 1e-6);
        let delta = 1e-9;
        let mut q = p;
        q[i] -= delta;
        q[j] += delta;
        let iv = Interval::new(a, b).unwrap();
        let m0 = cce_margin(&DeviceProbs::from_array(p).unwrap(), iv);
        let m1 = cce_margin(&DeviceProbs::from_array(q).unwrap(), iv);
        prop_assert!((m0 - m1).abs() < 1e-6 * (1.0 + a * a + b * b), "{} vs {}", m0, m1);
    }

    #[test]
    fn swap_with_symmetric_interval(p in device(), b in 0.05f64..4.0) {
        let iv = Interval::new(-b, b).unwrap();
        let d = DeviceProbs::from_array(p).unwrap();
        prop_assert!((cce_margin(&d, iv) - cce_margin(&d.swapped(), iv)).abs() < 1e-12 * (1.0 + b * b));
    }

    #[test]
    fn epsilon_n_converges_at_rate_one_over_n(p in device(), (a, b) in interval(), n in 10usize..2000) {
        let (c, t) = (1.0, 2.0);
        let iv = Interval::new(a, b).unwrap();
        let d = DeviceProbs::from_array(p).unwrap();
        let eps_inf = c * t * t * (-cce_margin(&d, iv)).max(0.0);
        let eps_n = finite_n_gap_oracle(&d, iv, c, t, n).unwrap().epsilon;
        let s = a.abs().max(b);
        let bound = 4.0 * c * t * t * s * s + c * t;
        prop_assert!((eps_n - eps_inf).abs() <= bound / n as f64, "N={}: {} vs {}", n, eps_n, eps_inf);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn halving_dt_keeps_terminal_state(seed in any::<u64>(), rep in 0u64..1000, action in -1.0f64..1.0) {
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let a = ConstantAction::scalar(action);
        let players = vec![PlayerSpec::uninformed(&a); 8];
        let x = simulate_n_player(&model, &TimeGrid::new(2.0, 100).unwrap(), &players, seed, rep).unwrap();
        let y = simulate_n_player(&model, &TimeGrid::new(2.0, 200).unwrap(), &players, seed, rep).unwrap();
        for j in 0..8 {
            prop_assert!((x.state(j, 100)[0] - y.state(j, 200)[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn sense_flip_negates_raw_differences(p in device(), seed in any::<u64>()) {
        let iv = Interval::new(-1.0, 1.0).unwrap();
        let dev = build_example_device(&DeviceProbs::from_array(p).unwrap(), iv).unwrap();
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let flipped = model.clone().with_sense(model.sense().flipped());
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let fam = DeviationFamily::uniform_grid(model.actions(), 5).unwrap();
        let x = cce_gap_nplayer(&model, &grid, &dev, 5, &fam, 20, seed).unwrap();
        let y = cce_gap_nplayer(&flipped, &grid, &dev, 5, &fam, 20, seed).unwrap();
        for (u, v) in x.candidates.iter().zip(&y.candidates) {
            prop_assert_eq!(u.raw.mean, -v.raw.mean);
        }
        let x = mean_field_gap_mc(&model, &grid, &dev, &fam, 20, seed).unwrap();
        let y = mean_field_gap_mc(&flipped, &grid, &dev, &fam, 20, seed).unwrap();
        for (u, v) in x.candidates.iter().zip(&y.candidates) {
            prop_assert_eq!(u.raw.mean, -v.raw.mean);
        }
    }

    #[test]
    fn common_noise_makes_deviation_payoff_quadratic(p in device(), seed in any::<u64>(), n in 2usize..30) {
        let iv = Interval::new(-1.0, 1.0).unwrap();
        let dev = build_example_device(&DeviceProbs::from_array(p).unwrap(), iv).unwrap();
        let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let fam = DeviationFamily::uniform_grid(model.actions(), 21).unwrap();
        let r = cce_gap_nplayer(&model, &grid, &dev, n, &fam, 1, seed).unwrap();
        let pts: Vec<(f64, f64)> = r.candidates.iter().map(|c| (c.action[0], c.j_dev.mean)).collect();
        // Lagrange quadratic through the two ends and the middle.
        let (x0, y0) = pts[0];
        let (x1, y1) = pts[10];
        let (x2, y2) = pts[20];
        for &(x, y) in &pts {
            let fit = y0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2))
                + y1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2))
                + y2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
            prop_assert!((fit - y).abs() < 1e-10, "{} vs {}", fit, y);
        }
    }
}

#[test]
fn simplified_coefficients_agree_on_random_devices() {
    use rand::Rng;
    let mut r = mfcce_core::rng::stream(7, 0, 0);
    for _ in 0..10_000 {
        let mut p = [0.0; 4];
        for x in &mut p {
            *x = if r.random::<f64>() < 0.2 { 0.0 } else { r.random::<f64>() };
        }
        let s: f64 = p.iter().sum();
        if s == 0.0 {
            continue;
        }
        let mut p = p.map(|x| x / s);
        p[3] = (1.0 - p[0] - p[1] - p[2]).max(0.0);
        let a = -0.01 - 3.0 * r.random::<f64>();
        let b = 0.01 + 3.0 * r.random::<f64>();
        let hk = hk_coefficients(&DeviceProbs::from_array(p).unwrap(), Interval::new(a, b).unwrap());
        let (h, k) = simplified_hk(p, a, b);
        assert!((hk.h - h).abs() < 1e-12 && (hk.k - k).abs() < 1e-12, "{p:?}");
    }
}

#[test]
fn swap_invariance_on_fixed_devices() {
    use rand::Rng;
    let mut r = mfcce_core::rng::stream(8, 0, 0);
    for _ in 0..100 {
        let w: [f64; 4] = std::array::from_fn(|_| r.random::<f64>());
        let s: f64 = w.iter().sum();
        let mut p = w.map(|x| x / s);
        p[3] = 1.0 - p[0] - p[1] - p[2];
        let d = DeviceProbs::from_array(p).unwrap();
        let iv = Interval::new(-1.5, 1.5).unwrap();
        assert!((cce_margin(&d, iv) - cce_margin(&d.swapped(), iv)).abs() < 1e-12);
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let iv = Interval::new(-1.0, 1.0).unwrap();
    let dev = build_example_device(&DeviceProbs::new(0.4, 0.1, 0.2, 0.3).unwrap(), iv).unwrap();
    let model = build_bang_bang_model(-1.0, 1.0, 1.0, 2.0).unwrap();
    let grid = TimeGrid::new(2.0, 20).unwrap();
    let fam = DeviationFamily::uniform_grid(model.actions(), 7).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| cce_gap_nplayer(&model, &grid, &dev, 15, &fam, 64, 99).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}
