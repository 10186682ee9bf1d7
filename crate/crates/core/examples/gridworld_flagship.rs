//! A 20x20 four-room gridworld, partitioned along the walls and solved in
//! parallel blocks. Takes a few seconds in release mode.

use std::time::Instant;

use distsynth::admm::{solve, AdmmParams};
use distsynth::decomposition::decompose;
use distsynth::gridworld::{build_gridworld, discounted_reward_fn, room_layout, wall_partition, Cell};
use distsynth::lp::build_discounted;
use distsynth::mdp::value_iteration_discounted;

fn main() -> distsynth::Result<()> {
    let layout = room_layout(20, 20, 2, 2)?;
    let mut spec = layout.spec;
    spec.seed = 7;
    spec.start = vec![Cell(1, 1)];
    spec.place_random(1, 5)?;
    for y in (0..spec.height).rev() {
        let row: String = (0..spec.width)
            .map(|x| {
                let c = Cell(x, y);
                if spec.targets.contains(&c) {
                    'G'
                } else if spec.restricted.contains(&c) {
                    'X'
                } else if spec.start.contains(&c) {
                    'S'
                } else if spec.walls.contains(&c) {
                    '#'
                } else {
                    '.'
                }
            })
            .collect();
        println!("{row}");
    }

    let mdp = build_gridworld(&spec)?;
    let r = discounted_reward_fn(&spec)?;
    let pi = wall_partition(&spec, &layout.rooms)?;
    let d = decompose(&mdp, &pi)?;
    println!("{} states, {} rooms, |K0| = {}, kernels {:?}", mdp.num_states(), pi.len(), d.k0.len(), &d.n[1..]);

    let lp = build_discounted(&mdp, &d, &r, 0.9, None)?;
    let start = Instant::now();
    let params =
        AdmmParams { eps_rel: 1e-6, eps_abs: 1e-6, max_iter: 200_000, trace_every: 5000, ..Default::default() };
    let rep = solve(&lp, &params)?;
    let secs = start.elapsed().as_secs_f64();
    for t in &rep.trace {
        println!("k {:>6}  obj {:>8.3}  infeas {:.2e}", t.k, t.objective, t.infeasibility);
    }
    let vi = value_iteration_discounted(&mdp, &r, 0.9, 1e-10)?.scalar;
    println!(
        "ADMM {:.4} vs VI {vi:.4} (rel {:.3}%), {} iterations in {secs:.1}s",
        rep.objective,
        100.0 * (rep.objective - vi).abs() / vi.abs(),
        rep.iterations
    );
    Ok(())
}
