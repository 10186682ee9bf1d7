//! Solve the example LP with block-splitting ADMM, compare against value
//! iteration, and read off the policy.

use distsynth::admm::{solve, AdmmParams};
use distsynth::decomposition::decompose;
use distsynth::instances::{eight_state_mdp, eight_state_partition, eight_state_rewards};
use distsynth::lp::{build_discounted, extract_policy};
use distsynth::mdp::{evaluate_policy_discounted, value_iteration_discounted};

fn main() -> distsynth::Result<()> {
    let mdp = eight_state_mdp();
    let r = eight_state_rewards(&mdp);
    let d = decompose(&mdp, &eight_state_partition(&mdp))?;
    let lp = build_discounted(&mdp, &d, &r, 0.9, None)?;

    let params = AdmmParams { rho: 100.0, eps_rel: 1e-5, eps_abs: 1e-6, trace_every: 2000, ..Default::default() };
    let rep = solve(&lp, &params)?;
    for t in &rep.trace {
        println!(
            "k {:>6}  obj {:>10.4}  infeas {:.2e}  r {:.2e}  s {:.2e}",
            t.k, t.objective, t.infeasibility, t.primal_res, t.dual_res
        );
    }
    let vi = value_iteration_discounted(&mdp, &r, 0.9, 1e-10)?;
    println!(
        "ADMM {:.4} after {} iterations (converged {}), VI {:.4}, rel error {:.3}%",
        rep.objective,
        rep.iterations,
        rep.converged,
        vi.scalar,
        100.0 * (rep.objective - vi.scalar).abs() / vi.scalar.abs()
    );

    let policy = extract_policy(&lp, &rep.x);
    let v = evaluate_policy_discounted(&mdp, &policy, &r, 0.9)?;
    let value: f64 = v.iter().zip(mdp.initial()).map(|(v, u)| v * u).sum();
    println!("extracted policy is worth {value:.4}");
    for s in 0..mdp.num_states() {
        let k = policy.greedy_choices()[s];
        println!("  {} -> {}", mdp.state_name(s), mdp.action_name(mdp.choices(s)[k].action));
    }
    Ok(())
}
