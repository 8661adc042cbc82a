use codedopt::bounds::DEFAULT_LOG_CONSTANT;
use codedopt::geometry::{estimate_gaussian_width, L1TangentCone};
use codedopt::regularizers::in_tangent_cone;
use codedopt::*;
use ndarray::Array1;
use proptest::prelude::*;

fn vector(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, 1..=max_len)
}

fn pair(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|n| (prop::collection::vec(-10.0..10.0f64, n), prop::collection::vec(-10.0..10.0f64, n)))
}

fn dist(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|x| x * x).sum().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn l1_projection_is_feasible_and_idempotent(v in vector(30), radius in 0.01..20.0f64) {
        let spec = RegularizerSpec::l1_ball(radius);
        let p = spec.project(Array1::from(v).view());
        prop_assert!(spec.is_feasible(p.view(), 1e-12));
        prop_assert_eq!(spec.project(p.view()), p);
    }

    #[test]
    fn projections_are_nonexpansive((u, v) in pair(30), radius in 0.01..20.0f64) {
        let (u, v) = (Array1::from(u), Array1::from(v));
        for spec in [RegularizerSpec::l1_ball(radius), RegularizerSpec::l2_ball(radius)] {
            let (pu, pv) = (spec.project(u.view()), spec.project(v.view()));
            prop_assert!(dist(&pu, &pv) <= dist(&u, &v) + 1e-12);
        }
    }

    #[test]
    fn l1_projection_is_the_closest_feasible_point(v in vector(12), radius in 0.1..5.0f64, t in 0.0..1.0f64) {
        // The segment to any feasible point never gets closer than the projection.
        let spec = RegularizerSpec::l1_ball(radius);
        let v = Array1::from(v);
        let p = spec.project(v.view());
        let q = spec.project((&v * 3.0).view());
        let mix = &p * (1.0 - t) + &q * t;
        prop_assert!(dist(&v, &p) <= dist(&v, &mix) + 1e-9);
    }

    #[test]
    fn ksparse_projection_keeps_k_largest(v in vector(30), k in 1usize..10) {
        let spec = RegularizerSpec::k_sparse(k);
        let v = Array1::from(v);
        let p = spec.project(v.view());
        prop_assert!(p.iter().filter(|x| **x != 0.0).count() <= k);
        prop_assert_eq!(spec.project(p.view()), p.clone());
        let kept_min = p.iter().filter(|x| **x != 0.0).map(|x| x.abs()).fold(f64::INFINITY, f64::min);
        let dropped_max = v.iter().zip(p.iter()).filter(|(_, q)| **q == 0.0).map(|(x, _)| x.abs()).fold(0.0, f64::max);
        prop_assert!(p.iter().all(|x| *x == 0.0) || kept_min >= dropped_max);
    }

    #[test]
    fn beta_and_alpha_are_monotone(m in 2usize..400, s in 0usize..399) {
        prop_assume!(s + 1 < m);
        let b = beta_sm(s, m).unwrap();
        prop_assert!(b <= (m as f64).sqrt() + 1e-12);
        prop_assert!(beta_sm(s + 1, m).unwrap() <= b + 1e-12);
        prop_assert!(beta_sm(s, m + 1).unwrap() >= b - 1e-12);
        let a = alpha_sm(s, m).value;
        prop_assert!(alpha_sm(s + 1, m).value <= a + 1e-12);
        prop_assert!(alpha_sm(s, m + 1).value >= a - 1e-12);
        prop_assert!(a <= b + 1e-12);
    }

    #[test]
    fn step_bound_grows_with_stragglers_and_shrinks_with_load(
        m in 20usize..2000,
        frac in 0.0..0.9f64,
        rho in 0.0..1.0f64,
        m0 in 0.0..50.0f64,
    ) {
        let s = (frac * m as f64) as usize;
        let inputs = |m| BoundInputs {
            kappa: 1.0, rho, mu_tilde: 0.3, sigma_r: 1.1, m0, m, s,
            xi: 0.5, noise_norm: 0.0, log_constant: DEFAULT_LOG_CONSTANT,
        };
        let here = inputs(m);
        let bigger = inputs(m + 1);
        let mut last = theorem1_step_bound(&here, 0).unwrap();
        for s_tau in 1..=s {
            let b = theorem1_step_bound(&here, s_tau).unwrap();
            prop_assert!(b.contraction >= last.contraction && b.neighborhood_coeff >= last.neighborhood_coeff);
            last = b;
        }
        let (a, b) = (theorem1_step_bound(&here, s).unwrap(), theorem1_step_bound(&bigger, s).unwrap());
        prop_assert!(b.contraction <= a.contraction && b.neighborhood_coeff <= a.neighborhood_coeff);
    }

    #[test]
    fn partitions_cover_rows_evenly(m in 1usize..500, workers in 1usize..50) {
        prop_assume!(workers <= m);
        let parts = partition_rows(m, workers).unwrap();
        prop_assert_eq!(parts.len(), workers);
        prop_assert_eq!(parts[0].start, 0);
        prop_assert_eq!(parts.last().unwrap().end, m);
        prop_assert!(parts.windows(2).all(|w| w[0].end == w[1].start));
        let sizes: Vec<usize> = parts.iter().map(|r| r.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn straggler_sets_respect_the_toleration(
        m in 1usize..200, workers in 1usize..20, s in 0usize..200, seed in any::<u64>(), iter in 0usize..1000,
    ) {
        prop_assume!(workers <= m && s <= m);
        let parts = partition_rows(m, workers).unwrap();
        let rows = sample_straggler_set(&StragglerModel::row_level(s, seed), iter, &parts).unwrap();
        prop_assert_eq!(rows.len(), s);
        prop_assert!(rows.windows(2).all(|w| w[0] < w[1]) && rows.iter().all(|&i| i < m));
        let whole = sample_straggler_set(&StragglerModel::worker_level(s, seed), iter, &parts).unwrap();
        prop_assert!(whole.len() <= s);
        for block in &parts {
            let hit = whole.iter().filter(|i| block.contains(i)).count();
            prop_assert!(hit == 0 || hit == block.len());
        }
        // Maximal: no remaining worker fits in the leftover budget.
        prop_assert!(parts.iter().all(|b| whole.contains(&b.start) || b.len() > s - whole.len()));
    }

    #[test]
    fn l1_cone_projection_lands_in_the_cone(seed in any::<u64>(), d in 2usize..40, k in 1usize..5) {
        prop_assume!(k <= d);
        let truth = gen_sparse_signal(d, k, seed).unwrap();
        let spec = radius_from_truth(RegularizerKind::L1Ball, &truth);
        let cone = L1TangentCone::new(&truth).unwrap();
        let mut rng = codedopt::rng::rng_from_seed(seed ^ 1);
        let g = codedopt::linalg::gaussian_vector(d, &mut rng);
        let p = cone.project(g.view());
        prop_assert!(in_tangent_cone(&spec, &truth, p.view(), 1e-9));
        prop_assert!((&g - &p).dot(&p).abs() <= 1e-9 * (1.0 + g.dot(&g)));
        let again = cone.project(p.view());
        prop_assert!(again.iter().zip(p.iter()).all(|(a, b)| (a - b).abs() <= 1e-9));
    }
}

#[test]
fn width_estimate_grows_with_the_set() {
    let truth = gen_sparse_signal(30, 3, 5).unwrap();
    let spec = radius_from_truth(RegularizerKind::L1Ball, &truth);
    let dirs = sample_descent_directions(&spec, &truth, 400, 6).unwrap();
    let mut last = f64::NEG_INFINITY;
    for count in [1, 10, 50, 200, 400] {
        let (w, _) = estimate_gaussian_width(&dirs[..count], 500, 7).unwrap();
        assert!(w >= last, "{count}: {w} < {last}");
        last = w;
    }
}

#[test]
fn cone_width_agrees_with_statistical_dimension() {
    use codedopt::geometry::{image_width, statistical_dimension};
    // With X = I the image cone is the cone itself and ω² ≤ δ ≤ ω² + 1.
    let d = 120;
    let truth = gen_sparse_signal(d, 4, 8).unwrap();
    let spec = radius_from_truth(RegularizerKind::L1Ball, &truth);
    let cone = L1TangentCone::new(&truth).unwrap();
    let x = ndarray::Array2::<f64>::eye(d);
    let dirs = sample_descent_directions(&spec, &truth, 200, 9).unwrap();
    let (omega, _) = image_width(x.view(), &dirs, Some(&cone), 2000, 10).unwrap();
    let (delta, _) = statistical_dimension(&cone, 2000, 11);
    let m0 = codedopt::geometry::minimal_computational_load(omega, 0.0).unwrap();
    assert!((m0 - delta).abs() <= 0.2 * delta, "ω² = {m0}, δ = {delta}");
}

#[test]
fn phase_grid_success_rate_grows_with_load() {
    let problem = ProblemConfig { n: 60, d: 80, k: 3, noise_std: 0.0, scaling: DesignScaling::Normalized };
    let mut config = ExperimentConfig::new(problem, EncoderKind::Gaussian, vec![4, 8, 16, 32, 64], vec![0, 2]);
    config.trials = 10;
    config.iters = 300;
    config.base_seed = 12;
    let grid = run_phase_transition(&config).unwrap();
    for s in [0, 2] {
        let rates: Vec<f64> = grid.rows.iter().filter(|r| r.s == s).map(|r| r.success_rate).collect();
        assert!(rates.windows(2).all(|w| w[1] >= w[0] - 2.0 / config.trials as f64), "s = {s}: {rates:?}");
    }
    assert_eq!(grid.row(64, 0).unwrap().success_rate, 1.0);
    assert_eq!(grid.row(4, 2).unwrap().success_rate, 0.0);
}
