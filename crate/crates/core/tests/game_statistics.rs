use std::sync::Arc;

use tugwar::dpp::{dpp_residual, solve_value};
use tugwar::fields::{eval_probabilities, ConstantP};
use tugwar::game::{
    estimate_value, fractional_pull_strategy, greedy_dpp_strategy, monte_carlo_value, pull_toward_strategy, run_game,
    supermartingale_diagnostic, Game, Mover, StoppingRule, Strategy,
};
use tugwar::grid::{make_grid, DomainSpec};
use tugwar::payoff::{ConstantPayoff, FnPayoff};
use tugwar::rng::substream;

fn wavy(x: &[f64], t: f64) -> f64 {
    (2.0 * x[0]).sin() + 0.5 * x.iter().map(|v| v * v).sum::<f64>() - t
}

#[test]
fn greedy_play_estimates_the_dpp_value() {
    let g = Arc::new(make_grid(DomainSpec::cube(1, 1.0).unwrap(), 0.05, 0.2, 0.4).unwrap());
    let p = ConstantP::new(4.0).unwrap();
    let pay = FnPayoff(wavy);
    let v = Arc::new(solve_value(&g, &p, &pay).unwrap());
    let game = Game::lattice(&g, &p, &pay).unwrap();
    let s = greedy_dpp_strategy(Arc::clone(&v));
    let mut within = 0;
    let starts = [-0.6, -0.25, 0.0, 0.3, 0.65];
    for (i, &x0) in starts.iter().enumerate() {
        let est =
            estimate_value(&game, (&[x0], 0.4), &s, &s, &StoppingRule::BoundaryExit, 4000, 100 + i as u64).unwrap();
        let node = g.nearest_node(&[x0]).unwrap();
        let exact = v.get(node, g.nearest_slice(0.4));
        if (est.mean - exact).abs() <= 3.0 * est.std_error {
            within += 1;
        }
    }
    assert!(within >= 4, "{within} of {}", starts.len());
}

#[test]
fn fixing_one_strategy_orders_the_estimates() {
    let g = Arc::new(make_grid(DomainSpec::cube(1, 1.0).unwrap(), 0.05, 0.2, 0.4).unwrap());
    let p = ConstantP::new(4.0).unwrap();
    let pay = FnPayoff(wavy);
    let v = Arc::new(solve_value(&g, &p, &pay).unwrap());
    let game = Game::lattice(&g, &p, &pay).unwrap();
    let greedy = greedy_dpp_strategy(Arc::clone(&v));
    let pull = pull_toward_strategy(vec![-0.9], false);
    let x0 = [0.2];
    let u = v.get(g.nearest_node(&x0).unwrap(), g.nearest_slice(0.4));
    let lower = estimate_value(&game, (&x0, 0.4), &pull, &greedy, &StoppingRule::BoundaryExit, 4000, 1).unwrap();
    let upper = estimate_value(&game, (&x0, 0.4), &greedy, &pull, &StoppingRule::BoundaryExit, 4000, 2).unwrap();
    assert!(lower.mean <= u + 3.0 * lower.std_error, "{lower:?} vs {u}");
    assert!(u <= upper.mean + 3.0 * upper.std_error, "{upper:?} vs {u}");
}

#[test]
fn coin_and_random_frequencies() {
    let g = make_grid(DomainSpec::cube(2, 1.0).unwrap(), 0.05, 0.2, 1.0).unwrap();
    let p = ConstantP::new(4.0).unwrap();
    let pay = ConstantPayoff(0.0);
    let game = Game::continuum(&g, &p, &pay);
    let rounds = 200_000;
    let mut counts = [0usize; 3];
    let mut sum = [0.0f64; 2];
    let mut sq = 0.0f64;
    let mut sq2 = 0.0f64;
    for i in 0..rounds / 100 {
        let mut state = game.start(&[0.0, 0.0], 1.0, substream(77, i as u64)).unwrap();
        let (mut a, mut b) = (Strategy::Zero, Strategy::Zero);
        for _ in 0..100 {
            let mover = game.play_round(&mut state, &mut a, &mut b).unwrap();
            counts[match mover {
                Mover::PlayerI => 0,
                Mover::PlayerII => 1,
                Mover::Random => 2,
            }] += 1;
            if mover == Mover::Random {
                let v = &state.history().last().unwrap().vector;
                sum[0] += v[0];
                sum[1] += v[1];
                let l2 = v[0] * v[0] + v[1] * v[1];
                sq += l2;
                sq2 += l2 * l2;
            }
        }
    }
    let alpha = eval_probabilities(&p, &[0.0, 0.0], 1.0, 2).unwrap().alpha;
    assert!((alpha - 1.0 / 3.0).abs() < 1e-15);
    let expect = [alpha / 2.0, alpha / 2.0, 1.0 - alpha];
    for k in 0..3 {
        let f = counts[k] as f64 / rounds as f64;
        let se = (expect[k] * (1.0 - expect[k]) / rounds as f64).sqrt();
        assert!((f - expect[k]).abs() <= 4.0 * se, "mover {k}: {f}");
    }
    let m = counts[2] as f64;
    let eps = 0.2 * (1.0 - 1e-12);
    // each coordinate of a uniform point in B_ε ⊂ ℝ² has variance ε²/4
    let coord_se = (eps * eps / 4.0 / m).sqrt();
    assert!(sum.iter().all(|s| (s / m).abs() <= 4.0 * coord_se));
    let mean_sq = sq / m;
    let var_sq = sq2 / m - mean_sq * mean_sq;
    assert!((mean_sq - eps * eps * 2.0 / 4.0).abs() <= 4.0 * (var_sq / m).sqrt());
}

#[test]
fn distance_to_an_exterior_point_is_nearly_a_supermartingale() {
    let g = make_grid(DomainSpec::cube(2, 1.0).unwrap(), 0.05, 0.2, 0.6).unwrap();
    let p = ConstantP::new(4.0).unwrap();
    let pay = ConstantPayoff(0.0);
    let game = Game::continuum(&g, &p, &pay);
    let z = vec![1.6, 0.0];
    for opponent in [pull_toward_strategy(z.clone(), false), Strategy::PushAway { origin: z.clone() }] {
        let trajectories: Vec<_> = (0..3000u64)
            .map(|i| {
                let mut s1 = pull_toward_strategy(z.clone(), false);
                let mut s2 = opponent.clone();
                run_game(
                    &game,
                    (&[0.0, 0.0], 0.6),
                    &mut s1,
                    &mut s2,
                    &StoppingRule::BoundaryExit,
                    substream(5, i),
                    true,
                )
                .unwrap()
                .trajectory
                .unwrap()
            })
            .collect();
        let rep = supermartingale_diagnostic(&trajectories, &z, 1.0, 0.2, 6, 200).unwrap();
        assert!(rep.judged_bins() >= 3);
        assert!(rep.passed(), "{rep:?}");
    }
}

#[test]
fn fractional_pull_wins_both_tosses_often_enough() {
    let g = make_grid(DomainSpec::cube(1, 1.0).unwrap(), 0.025, 0.1, 1.0).unwrap();
    let p = ConstantP::new(4.0).unwrap();
    let pay = ConstantPayoff(0.0);
    let game = Game::continuum(&g, &p, &pay);
    let (x0, y) = ([0.0f64], vec![0.15f64]);
    let alpha = 0.4;
    let runs = 40_000;
    let mut hits = 0;
    let mut landed = 0;
    for i in 0..runs {
        let mut state = game.start(&x0, 0.5, substream(9, i)).unwrap();
        let mut s1 = fractional_pull_strategy(&x0, y.clone(), 2, 0.1).unwrap();
        let mut s2 = Strategy::Zero;
        let a = game.play_round(&mut state, &mut s1, &mut s2).unwrap();
        let b = game.play_round(&mut state, &mut s1, &mut s2).unwrap();
        if a == Mover::PlayerI && b == Mover::PlayerI {
            hits += 1;
            if (state.x()[0] - y[0]).abs() < 1e-12 {
                landed += 1;
            }
        }
    }
    let f = hits as f64 / runs as f64;
    let bound = (alpha / 2.0f64).powi(2);
    let se = (bound * (1.0 - bound) / runs as f64).sqrt();
    assert!(f >= bound - 4.0 * se, "{f} < {bound}");
    assert_eq!(landed, hits);
}

#[test]
fn monte_carlo_value_function_satisfies_the_dpp_statistically() {
    let g = Arc::new(make_grid(DomainSpec::cube(1, 0.5).unwrap(), 0.05, 0.2, 0.06).unwrap());
    let p = ConstantP::new(4.0).unwrap();
    let pay = FnPayoff(wavy);
    let v = Arc::new(solve_value(&g, &p, &pay).unwrap());
    let game = Game::lattice(&g, &p, &pay).unwrap();
    let (mc, se) = monte_carlo_value(&game, &v, 20_000, 3).unwrap();
    let r = dpp_residual(&mc, &p).unwrap();
    assert!(r <= 5.0 * se, "residual {r} vs se {se}");
    assert!(r > 0.0);
}
