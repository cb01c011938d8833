//! Quick calibration probe: one solver run on a chosen benchmark, printing
//! the estimate, relative error, and wall time per training phase.
//!
//! Usage: `cargo run --release -p dfbdp --example calibrate -- \
//!   [benchmark] [dim] [steps] [first_iters] [warm_iters] [quad_nodes] [seed]`

use std::time::Instant;

use dfbdp::benchmarks::{make_problem, BenchmarkId};
use dfbdp::forward::TimeGrid;
use dfbdp::solver::{solve, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("ex1_uniform");
    let dim: Option<usize> = args.get(2).and_then(|s| s.parse().ok());
    let id = BenchmarkId::from_name(name, dim).expect("benchmark name");
    let steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(id.default_steps());
    let first: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let warm: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(500);
    let quad: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(16);
    let seed: u64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(20260815);

    let problem = make_problem(id).expect("problem construction");
    let grid = TimeGrid::uniform(problem.horizon, steps).expect("grid");
    let mut config = TrainConfig::new(1000, id.default_hidden(), seed);
    config.first_step_iters = first;
    config.warm_step_iters = warm;
    config.quad_nodes = quad;

    println!(
        "benchmark {id} d={} N={steps} M={} iters={first}/{warm} quad={quad} seed={seed}",
        problem.dim, config.batch_size
    );
    let start = Instant::now();
    let solution = solve(&problem, &grid, &config).expect("solve");
    let elapsed = start.elapsed().as_secs_f64();
    let y0 = solution.y0(&problem).expect("y0");
    let exact = problem
        .exact
        .as_ref()
        .map(|e| (e.u)(0.0, &problem.x0))
        .expect("benchmarks provide exact solutions");
    println!(
        "y0 = {y0:.6}  exact = {exact:.6}  rel_err = {:.4}  wall = {elapsed:.1}s",
        ((y0 - exact) / exact).abs()
    );
    println!(
        "final losses: first {:.3e}  mid {:.3e}  last {:.3e}",
        solution.final_losses[steps - 1],
        solution.final_losses[steps / 2],
        solution.final_losses[0]
    );
}
