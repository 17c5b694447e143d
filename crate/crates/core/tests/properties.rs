use fairmab::algorithms::{ucb_exploration_length, Algorithm, RunOptions};
use fairmab::harness::{Aggregate, FeasibilityFilter, InstanceGenerator};
use fairmab::ingest::{aggregate, parse_movies, parse_ratings};
use fairmab::instance::{expected_agent_rewards, max_row_rewards, sample_rewards, social_welfare};
use fairmab::lp::{solve_active_set, solve_dense, LpTolerances};
use fairmab::metrics::{fairness_regret_increment, sw_regret_increment};
use fairmab::policy::{
    build_p1, build_p2, check_sufficient_feasibility, construct_feasible_policy, is_fair,
    solve_dual_lambda, solve_p1, two_arm_optimal_x,
};
use fairmab::rng::RunRng;
use fairmab::{solve_lp, BanditInstance, LinearProgram, LpStatus, Matrix};
use proptest::prelude::*;

fn matrix(n: usize, m: usize, lo: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(lo..=1.0f64, n * m)
        .prop_map(move |v| Matrix::from_fn(n, m, |i, j| v[i * m + j]))
}

fn dims(max_n: usize, max_m: usize) -> impl Strategy<Value = (usize, usize)> {
    (1..=max_n, 2..=max_m)
}

fn policy(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, m).prop_map(|v| {
        let s: f64 = v.iter().sum::<f64>() + 1e-9;
        let mut p: Vec<f64> = v.iter().map(|x| (x + 1e-9 / v.len() as f64) / s).collect();
        let tot: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= tot);
        p
    })
}

/// Instance with fractions satisfying one of the sufficient conditions.
fn sufficient_instance() -> impl Strategy<Value = (Matrix, Vec<f64>)> {
    dims(8, 5).prop_flat_map(|(n, m)| {
        let cap = 1.0 / n.min(m) as f64;
        (
            matrix(n, m, 0.0),
            prop::collection::vec(0.0..=1.0f64, n),
            any::<bool>(),
        )
            .prop_map(move |(a, raw, use_sum)| {
                let c = if use_sum {
                    let s: f64 = raw.iter().sum::<f64>().max(1.0);
                    raw.iter().map(|x| x / s).collect()
                } else {
                    raw.iter().map(|x| x * cap).collect()
                };
                (a, c)
            })
    })
}

fn feasible_instance(max_n: usize, max_m: usize) -> impl Strategy<Value = (Matrix, Vec<f64>)> {
    dims(max_n, max_m)
        .prop_flat_map(|(n, m)| (matrix(n, m, 0.01), prop::collection::vec(0.0..=0.6f64, n)))
        .prop_filter("P1 feasible", |(a, c)| solve_p1(a, c).is_ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), arm in 0usize..3) {
        let a = Matrix::from_rows(&[[0.2, 0.5, 0.9], [0.7, 0.1, 0.4]]).unwrap();
        let inst = BanditInstance::new(a, vec![0.0, 0.0], 10).unwrap();
        let mut r1 = RunRng::new(seed, 0);
        let mut r2 = RunRng::new(seed, 0);
        for _ in 0..20 {
            let x = sample_rewards(&inst, arm, &mut r1).unwrap();
            let y = sample_rewards(&inst, arm, &mut r2).unwrap();
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn agent_rewards_are_linear_in_policy(
        (a, p, q) in dims(6, 5).prop_flat_map(|(n, m)| (matrix(n, m, 0.0), policy(m), policy(m))),
        w in 0.0..=1.0f64,
    ) {
        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| w * x + (1.0 - w) * y).collect();
        let lhs = expected_agent_rewards(&a, &mix).unwrap();
        let fp = expected_agent_rewards(&a, &p).unwrap();
        let fq = expected_agent_rewards(&a, &q).unwrap();
        for i in 0..a.rows() {
            prop_assert!((lhs[i] - (w * fp[i] + (1.0 - w) * fq[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn optimal_lp_solutions_satisfy_constraints(
        (a, c) in dims(6, 4).prop_flat_map(|(n, m)| (matrix(n, m, 0.0), prop::collection::vec(0.0..=0.8f64, n))),
        obj_noise in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let lp = build_p1(&a, &c).unwrap();
        let obj: Vec<f64> = obj_noise[..a.cols()].to_vec();
        let (g, h) = lp.constraints();
        let lp = LinearProgram::new(obj, g.clone(), h.to_vec(), true).unwrap();
        let sol = solve_lp(&lp).unwrap();
        if sol.status == LpStatus::Optimal {
            let x = sol.x.unwrap();
            prop_assert!(lp.max_violation(&x) <= 1e-8);
            prop_assert!(x.iter().all(|&v| v >= -1e-8));
            prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn objective_scaling_preserves_optimum((a, c) in feasible_instance(6, 4), k in 0.01..100.0f64) {
        let lp = build_p1(&a, &c).unwrap();
        let base = solve_lp(&lp).unwrap();
        let scaled_lp = lp.scaled_objective(k);
        let scaled = solve_lp(&scaled_lp).unwrap();
        prop_assert_eq!(base.status, scaled.status);
        let (v, vk) = (base.value.unwrap(), scaled.value.unwrap());
        prop_assert!((vk - k * v).abs() <= 1e-9 * (1.0 + k * v.abs()));
        // the unscaled vertex is optimal for the scaled problem
        let x = base.x.unwrap();
        let at_x: f64 = scaled_lp.objective().iter().zip(&x).map(|(o, y)| o * y).sum();
        prop_assert!((at_x - vk).abs() <= 1e-9 * (1.0 + vk.abs()));
    }

    #[test]
    fn sufficient_conditions_give_fair_witnesses((a, c) in sufficient_instance()) {
        let (s, m) = check_sufficient_feasibility(&c, a.rows(), a.cols());
        prop_assert!(s || m);
        prop_assert!(solve_p1(&a, &c).is_ok());
        let w = construct_feasible_policy(&a, &c).unwrap();
        prop_assert!(is_fair(&a, &c, w.as_slice(), 1e-9));
    }

    #[test]
    fn two_arm_closed_form_matches_lp((a, c) in feasible_instance(10, 2)) {
        let x = two_arm_optimal_x(&a, &c).unwrap();
        let p = [x, 1.0 - x];
        prop_assert!(is_fair(&a, &c, &p, 1e-9));
        let opt = solve_p1(&a, &c).unwrap();
        prop_assert!(is_fair(&a, &c, opt.policy.as_slice(), 1e-9));
        prop_assert!((social_welfare(&a, &p).unwrap() - opt.welfare).abs() <= 1e-6);
    }

    #[test]
    fn strong_duality((a, c) in feasible_instance(6, 4)) {
        let primal = solve_p1(&a, &c).unwrap().welfare;
        let dual = solve_dual_lambda(&a, &c, &max_row_rewards(&a)).unwrap();
        prop_assert!((primal - dual.value).abs() <= 1e-6);
        prop_assert!(dual.lambda.iter().all(|&l| l >= -1e-9));
    }

    #[test]
    fn widening_confidence_never_lowers_p2(
        (a, c, w1, w2) in dims(5, 4).prop_flat_map(|(n, m)| (
            matrix(n, m, 0.0),
            prop::collection::vec(0.0..=0.5f64, n),
            prop::collection::vec(0.0..0.2f64, m),
            prop::collection::vec(0.0..0.2f64, m),
        )),
    ) {
        let bounds = |w: &[f64]| {
            let u = Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] + w[j]);
            let l = Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] - w[j]);
            (u, l)
        };
        let wide: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| x + y).collect();
        let (u, l) = bounds(&w1);
        let (uw, lw) = bounds(&wide);
        let narrow = solve_lp(&build_p2(&u, &l, &c).unwrap()).unwrap();
        let widened = solve_lp(&build_p2(&uw, &lw, &c).unwrap()).unwrap();
        if let Some(v) = narrow.value {
            prop_assert_eq!(widened.status, LpStatus::Optimal);
            prop_assert!(widened.value.unwrap() >= v - 1e-9);
        }
    }

    #[test]
    fn p2_is_optimistic_when_truth_is_inside_bounds(
        ((a, c), w) in feasible_instance(5, 4).prop_flat_map(|(a, c)| {
            let m = a.cols();
            (Just((a, c)), prop::collection::vec(0.0..0.3f64, m))
        }),
    ) {
        let u = Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] + w[j]);
        let l = Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] - w[j]);
        let opt = solve_p1(&a, &c).unwrap();
        let p2 = solve_lp(&build_p2(&u, &l, &c).unwrap()).unwrap();
        prop_assert_eq!(p2.status, LpStatus::Optimal);
        prop_assert!(p2.value.unwrap() >= opt.welfare - 1e-9);
    }

    #[test]
    fn fairness_increment_is_zero_exactly_on_fair_policies(
        (a, c, p) in dims(6, 4).prop_flat_map(|(n, m)| (
            matrix(n, m, 0.0), prop::collection::vec(0.0..=1.0f64, n), policy(m),
        )),
    ) {
        let inc = fairness_regret_increment(&a, &c, &max_row_rewards(&a), &p).unwrap();
        prop_assert!(inc >= 0.0);
        prop_assert_eq!(inc == 0.0, is_fair(&a, &c, &p, 0.0));
    }

    #[test]
    fn regret_increments_are_lipschitz(
        (a, c, p, q) in dims(6, 4).prop_flat_map(|(n, m)| (
            matrix(n, m, 0.0), prop::collection::vec(0.0..=1.0f64, n), policy(m), policy(m),
        )),
    ) {
        let star = max_row_rewards(&a);
        let n = a.rows() as f64;
        let delta: f64 = p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum();
        let fp = fairness_regret_increment(&a, &c, &star, &p).unwrap();
        let fq = fairness_regret_increment(&a, &c, &star, &q).unwrap();
        prop_assert!((fp - fq).abs() <= n * delta + 1e-12);
        let opt = vec![1.0 / a.cols() as f64; a.cols()];
        let sp = sw_regret_increment(&a, &opt, &p).unwrap();
        let sq = sw_regret_increment(&a, &opt, &q).unwrap();
        prop_assert!((sp - sq).abs() <= n * delta + 1e-12);
    }

    #[test]
    fn two_arm_welfare_increment_is_gap_times_delta((a, c) in feasible_instance(8, 2), x in 0.0..=1.0f64) {
        let xs = two_arm_optimal_x(&a, &c).unwrap();
        let gap: f64 = a.iter_rows().map(|r| r[0] - r[1]).sum();
        let inc = sw_regret_increment(&a, &[xs, 1.0 - xs], &[x, 1.0 - x]).unwrap();
        prop_assert!((inc - (xs - x) * gap).abs() <= 1e-12);
    }

    #[test]
    fn pruning_keeps_the_optimum(
        (a, c) in (60usize..140, 2usize..=4).prop_flat_map(|(n, m)| (matrix(n, m, 0.05), prop::collection::vec(0.0..=0.35f64, n))),
    ) {
        let lp = build_p1(&a, &c).unwrap();
        let full = solve_dense(&lp, &LpTolerances::default()).unwrap();
        let pruned = solve_lp(&lp.pruned()).unwrap();
        prop_assert_eq!(full.status, pruned.status);
        if let (Some(v), Some(w), Some(x)) = (full.value, pruned.value, pruned.x) {
            prop_assert!((v - w).abs() <= 1e-9);
            prop_assert!(lp.max_violation(&x) <= 1e-8);
        }
    }

    #[test]
    fn active_set_matches_dense(
        (a, c) in (65usize..120, 2usize..=4).prop_flat_map(|(n, m)| (matrix(n, m, 0.05), prop::collection::vec(0.0..=0.35f64, n))),
    ) {
        let lp = build_p1(&a, &c).unwrap();
        let tol = LpTolerances::default();
        let dense = solve_dense(&lp, &tol).unwrap();
        let active = solve_active_set(&lp, &tol).unwrap();
        prop_assert_eq!(dense.status, active.status);
        if let (Some(v), Some(w)) = (dense.value, active.value) {
            prop_assert!((v - w).abs() <= 1e-9);
        }
    }

    #[test]
    fn generator_emits_only_feasible_instances(seed in any::<u64>(), n in 1usize..6, m in 2usize..5, c in 0.0..0.6f64) {
        let g = InstanceGenerator { n, m, lo: 0.05, hi: 0.95, filter: FeasibilityFilter::LpFeasible, seed, require_binding: false };
        let fr = vec![c; n];
        if let Ok(a) = g.generate(&fr) {
            prop_assert!(build_p1(&a, &fr).is_ok());
            prop_assert!(solve_p1(&a, &fr).is_ok());
            prop_assert!(a.as_slice().iter().all(|&x| (0.05..=0.95).contains(&x)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_account_for_every_round(seed in any::<u64>(), horizon in 3usize..400, which in 0usize..3) {
        let a = Matrix::from_rows(&[[0.9, 0.2, 0.5], [0.1, 0.8, 0.5]]).unwrap();
        let inst = BanditInstance::new(a, vec![0.3, 0.3], horizon).unwrap();
        let alg = [
            Algorithm::ExploreFirst { alpha: 0.6 },
            Algorithm::RewardFairUcb,
            Algorithm::DualHeuristic { refresh: None },
        ][which];
        let opts = RunOptions::default();
        let tr = alg.run(&inst, seed, &opts).unwrap();
        prop_assert_eq!(tr.pulls.iter().sum::<usize>(), horizon);
        prop_assert_eq!(tr.sw_cum.len(), horizon);
        prop_assert!(tr.fr_cum.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(tr.pull_rate_sum <= 2.0 * ((3 * horizon) as f64).sqrt() + 1e-9);
        prop_assert_eq!(tr, alg.run(&inst, seed, &opts).unwrap());
    }

    #[test]
    fn exploration_block_is_balanced(seed in any::<u64>(), horizon in 50usize..3000) {
        let a = Matrix::from_rows(&[[0.9, 0.2, 0.5], [0.1, 0.8, 0.5]]).unwrap();
        let inst = BanditInstance::new(a, vec![0.3, 0.3], horizon).unwrap();
        let opts = RunOptions { record_rounds: true, ..Default::default() };
        let explore = ucb_exploration_length(horizon, 3);
        let per_arm = (1..).find(|k| k * k >= horizon).unwrap();
        for alg in [Algorithm::RewardFairUcb, Algorithm::DualHeuristic { refresh: None }] {
            let tr = alg.run(&inst, seed, &opts).unwrap();
            let mut counts = [0usize; 3];
            for r in &tr.rounds.unwrap()[..explore] {
                counts[r.arm] += 1;
            }
            if explore < horizon {
                prop_assert_eq!(counts, [per_arm; 3]);
            }
        }
    }

    #[test]
    fn aggregate_mean_is_the_seed_mean(seeds in prop::collection::vec(any::<u64>(), 1..6)) {
        let a = Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]]).unwrap();
        let inst = BanditInstance::new(a, vec![0.5, 0.5], 200).unwrap();
        let alg = Algorithm::ExploreFirst { alpha: 0.67 };
        let traces: Vec<_> = seeds.iter().map(|&s| alg.run(&inst, s, &RunOptions::default()).unwrap()).collect();
        let agg = Aggregate::from_traces(&traces);
        let k = traces.len() as f64;
        for t in 0..200 {
            let sw = traces.iter().map(|tr| tr.sw_cum[t]).sum::<f64>() / k;
            let fr = traces.iter().map(|tr| tr.fr_cum[t]).sum::<f64>() / k;
            prop_assert!((agg.sw_mean[t] - sw).abs() <= 1e-12);
            prop_assert!((agg.fr_mean[t] - fr).abs() <= 1e-12);
        }
    }

    #[test]
    fn ingest_ignores_line_order(
        ratings in prop::collection::vec((1u32..6, 1u32..5, 1u8..=5), 1..40),
        shuffle_seed in any::<u64>(),
    ) {
        let movies = b"1::A (1990)::Comedy\n2::B (1991)::Action|Thriller\n3::C (1992)::Drama|Romance|War\n4::D (1993)::Children's|Animation\n";
        let movies = parse_movies(movies, "movies.dat").unwrap();
        let mut lines: Vec<String> = ratings.iter().enumerate()
            .map(|(k, (u, m, r))| format!("{u}::{m}::{r}::{k}"))
            .collect();
        let build = |lines: &[String]| {
            let recs = parse_ratings(lines.join("\n").as_bytes(), "ratings.dat").unwrap();
            aggregate(&recs, &movies, "ratings.dat").unwrap()
        };
        let before = build(&lines);
        let mut rng = RunRng::new(shuffle_seed, 0);
        for i in (1..lines.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            lines.swap(i, j);
        }
        let after = build(&lines);
        prop_assert_eq!(&before, &after);
        prop_assert_eq!(before.matrix.cols(), 18);
        prop_assert!(before.matrix.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}

#[test]
fn empirical_means_concentrate() {
    let a = Matrix::from_rows(&[[0.05, 0.5, 0.93], [0.7, 0.0, 1.0]]).unwrap();
    let inst = BanditInstance::new(a.clone(), vec![0.0, 0.0], 10).unwrap();
    let k = 4000;
    let bound = 5.0 * 0.5 * (2.0 * (2.0f64 / 0.001).ln() / k as f64).sqrt();
    let mut rng = RunRng::new(99, 0);
    for j in 0..3 {
        let mut sums = [0.0; 2];
        for _ in 0..k {
            let r = sample_rewards(&inst, j, &mut rng).unwrap();
            sums[0] += r.0[0];
            sums[1] += r.0[1];
        }
        for i in 0..2 {
            assert!((sums[i] / k as f64 - a[(i, j)]).abs() <= bound);
        }
    }
}

#[test]
fn confidence_box_covers_truth() {
    let a = Matrix::from_rows(&[[0.9, 0.2, 0.5], [0.1, 0.8, 0.5], [0.4, 0.4, 0.7]]).unwrap();
    let inst = BanditInstance::new(a, vec![0.3; 3], 2000).unwrap();
    let (mut covered, mut checked) = (0u64, 0u64);
    for seed in 0..100 {
        let tr = Algorithm::RewardFairUcb
            .run(&inst, seed, &RunOptions::default())
            .unwrap();
        covered += tr.coverage.covered;
        checked += tr.coverage.checked;
    }
    assert!(checked > 0);
    assert!(covered as f64 / checked as f64 >= 0.99);
}

#[test]
fn identity_commit_is_balanced() {
    let inst = BanditInstance::new(Matrix::identity(2), vec![0.5, 0.5], 100_000).unwrap();
    let opts = RunOptions::default();
    let xs: Vec<f64> = (1..=20)
        .map(|s| {
            let tr = Algorithm::ExploreFirst { alpha: 0.67 }
                .run(&inst, s, &opts)
                .unwrap();
            tr.final_policy.unwrap().as_slice()[0]
        })
        .collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.05, "mean exploited x = {mean}");
}
