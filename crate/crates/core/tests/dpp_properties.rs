use std::sync::Arc;

use proptest::prelude::*;
use tugwar::dpp::{dpp_step, solve_value, DppOperator};
use tugwar::fields::{eval_probabilities, AffineP, ConstantP, PExponentField};
use tugwar::grid::{ball_stencil, make_grid, DomainSpec, SpaceTimeGrid};
use tugwar::payoff::{extend_payoff, FnPayoff, TabulatedPayoff};
use tugwar::table::{Interpolation, RegularTable};

fn small_grid(n: usize) -> Arc<SpaceTimeGrid<f64>> {
    let (h, eps, t) = if n == 1 { (0.05, 0.2, 0.3) } else { (0.1, 0.4, 0.3) };
    Arc::new(make_grid(DomainSpec::cube(n, 1.0).unwrap(), h, eps, t).unwrap())
}

/// Piecewise-constant payoff from a random table over `[-2, 2]ⁿ × [-1, 1]`.
fn rough_payoff(n: usize, values: &[f64]) -> TabulatedPayoff<f64> {
    let shape = vec![4usize; n + 1];
    let count: usize = shape.iter().product();
    let vals: Vec<f64> = (0..count).map(|i| values[i % values.len()]).collect();
    let mut origin = vec![-2.0; n];
    origin.push(-1.0);
    let mut spacing = vec![4.0 / 3.0; n];
    spacing.push(2.0 / 3.0);
    TabulatedPayoff::new(RegularTable::new(origin, spacing, shape, vals, Interpolation::Nearest).unwrap())
}

fn field(n: usize, grad: f64, tc: f64, c: f64) -> AffineP<f64> {
    let mut g = vec![0.0; n];
    g[0] = grad;
    AffineP::new(g, tc, c, 2.1, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn maximum_principle_and_step_monotonicity(
        n in 1usize..=2,
        values in prop::collection::vec(-5.0f64..5.0, 8..40),
        bump in prop::collection::vec(0.0f64..1.0, 8..40),
        grad in -3.0f64..3.0,
        tc in -2.0f64..2.0,
        c in 2.1f64..8.0,
    ) {
        let g = small_grid(n);
        let p = field(n, grad, tc, c);
        let pay = rough_payoff(n, &values);
        let v = solve_value(&g, &p, &pay).unwrap();
        let bd = extend_payoff(&pay, &g).unwrap();
        let (lo, hi) = (bd.min(), bd.max());
        prop_assert!(v.values().iter().all(|&u| u >= lo - 1e-12 && u <= hi + 1e-12));

        let op = DppOperator::new(&g, &p).unwrap();
        let s = g.first_marching_slice();
        let prev1 = v.slice(s - 1).to_vec();
        let prev2: Vec<f64> = prev1.iter().enumerate().map(|(i, u)| u + bump[i % bump.len()]).collect();
        let out1 = dpp_step(&op, &prev1, s, &bd).unwrap();
        let out2 = dpp_step(&op, &prev2, s, &bd).unwrap();
        prop_assert!(out1.iter().zip(&out2).all(|(a, b)| a <= b));
    }

    #[test]
    fn shift_and_positive_scaling(
        values in prop::collection::vec(-5.0f64..5.0, 8..40),
        shift in -10.0f64..10.0,
        scale in 0.01f64..10.0,
        c in 2.1f64..8.0,
    ) {
        let g = small_grid(2);
        let p = field(2, 0.7, 0.0, c);
        let op = DppOperator::new(&g, &p).unwrap();
        let s = g.first_marching_slice();
        let prev: Vec<f64> = (0..g.node_count()).map(|i| values[i % values.len()]).collect();
        let base = op.apply_interior(&prev, s).unwrap();
        let shifted: Vec<f64> = prev.iter().map(|u| u + shift).collect();
        let scaled: Vec<f64> = prev.iter().map(|u| u * scale).collect();
        let a = op.apply_interior(&shifted, s).unwrap();
        let b = op.apply_interior(&scaled, s).unwrap();
        for k in 0..base.len() {
            prop_assert!((a[k] - (base[k] + shift)).abs() <= 1e-12 * (1.0 + shift.abs() + base[k].abs()));
            prop_assert!((b[k] - scale * base[k]).abs() <= 1e-12 * (1.0 + scale * base[k].abs()) * 10.0);
        }
    }

    #[test]
    fn probabilities_sum_to_one(p in 2.0f64..1e6, n in 1usize..12) {
        prop_assume!(p > 2.0);
        let f = ConstantP::new(p).unwrap();
        let pr = eval_probabilities(&f, &vec![0.0; n], 0.0, n).unwrap();
        prop_assert_eq!(pr.alpha + pr.beta, 1.0);
        prop_assert!(pr.alpha > 0.0 && pr.alpha < 1.0);
    }

    #[test]
    fn stencils_are_uniform_and_symmetric(n in 1usize..=3, ratio in 4.0f64..7.0) {
        let h = 0.1;
        let g = make_grid(DomainSpec::cube(n, 0.6).unwrap(), h, ratio * h, 0.1).unwrap();
        let node = g.interior_nodes().next().unwrap();
        let st = ball_stencil(&g, node).unwrap();
        // compensated sum, so the check sees the weights and not the roundoff
        // of adding a thousand of them
        let (mut total, mut carry) = (0.0f64, 0.0f64);
        for &w in &st.mean_weights {
            let t = total + w;
            carry += if total.abs() >= w.abs() { (total - t) + w } else { (w - t) + total };
            total = t;
        }
        let total = total + carry;
        prop_assert!((total - 1.0).abs() <= 1e-14);
        prop_assert!(st.mean_weights.iter().all(|&w| w == st.mean_weights[0]));
        let center = g.lattice_coords(node).to_vec();
        for &m in &st.members {
            let mirror: Vec<i32> = g.lattice_coords(m).iter().zip(&center).map(|(a, c)| 2 * c - a).collect();
            let id = g.node_at(&mirror).unwrap();
            prop_assert!(st.members.contains(&id));
        }
    }
}

#[test]
fn translation_equivariance_for_constant_p() {
    let g = make_grid(DomainSpec::cube(2, 1.0).unwrap(), 0.1, 0.4, 0.2).unwrap();
    let p = ConstantP::new(3.5).unwrap();
    let op = DppOperator::new(&g, &p).unwrap();
    let s = g.first_marching_slice();
    let f = |x: &[f64]| (3.0 * x[0]).sin() * (x[1] * x[1] - 0.3) + x[0].abs();
    let shift = [2i32, -1];
    let prev: Vec<f64> = (0..g.node_count()).map(|i| f(g.coords(i))).collect();
    let moved: Vec<f64> = (0..g.node_count())
        .map(|i| {
            let x = g.coords(i);
            f(&[x[0] - shift[0] as f64 * 0.1, x[1] - shift[1] as f64 * 0.1])
        })
        .collect();
    let a = op.apply_interior(&prev, s).unwrap();
    let b = op.apply_interior(&moved, s).unwrap();
    let mut checked = 0;
    for (rank, &va) in a.iter().enumerate() {
        let node = op.table().node(rank);
        let k: Vec<i32> = g.lattice_coords(node).iter().zip(shift).map(|(a, s)| a + s).collect();
        let Some(target) = g.node_at(&k) else { continue };
        let Some(r2) = op.table().rank(target) else { continue };
        assert!((b[r2] - va).abs() < 1e-13);
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn residual_is_tiny_for_constant_and_affine_p() {
    for n in [1usize, 2] {
        let g = small_grid(n);
        let fields: Vec<Box<dyn PExponentField<f64>>> =
            vec![Box::new(ConstantP::new(4.0).unwrap()), Box::new(field(n, 1.5, 0.5, 3.0))];
        for p in &fields {
            let pay = FnPayoff(|x: &[f64], t: f64| (2.0 * x[0]).cos() + t * x.iter().sum::<f64>());
            let v = solve_value(&g, p.as_ref(), &pay).unwrap();
            let m = extend_payoff(&pay, &g).unwrap().sup_norm();
            assert!(v.residual().unwrap() <= 1e-12 * m);
        }
    }
}
