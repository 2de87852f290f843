//! Builds a small network by hand, finds its optimum, lists every
//! assignment within a cost bound, and prints the toulbar2 export.
//!
//! ```text
//! cargo run --example solve_network
//! ```

use cfn_learn::cfn::io::ToulbarExport;
use cfn_learn::solver::{self, brute_force};
use cfn_learn::{CostFunctionNetwork, CostMatrix, SolverConfig, VariableOrder};

fn main() -> cfn_learn::Result<()> {
    // Three 3-valued variables on a cycle: neighbours must differ, and
    // variable 0 prefers its last value.
    let mut net = CostFunctionNetwork::new(vec![3, 3, 3]);
    let top = net.top();
    let neq = CostMatrix::from_rows(&[
        vec![top, 0.0, 0.5],
        vec![0.0, top, 0.0],
        vec![1.0, 0.0, top],
    ])?;
    net.set_pair(0, 1, neq.clone())?;
    net.set_pair(1, 2, neq.clone())?;
    net.set_pair(2, 0, neq)?;
    net.add_unary(0, &[1.0, 1.0, 0.0])?;

    for order in [VariableOrder::StaticDegree, VariableOrder::MinDomainThenIndex] {
        let res = solver::solve(&net, &SolverConfig::default().with_order(order));
        println!(
            "{order:?}: best {:?} cost {} ({} nodes)",
            res.best.values(),
            res.best_cost,
            res.nodes_expanded
        );
    }
    let check = brute_force(&net)?;
    println!("exhaustive: best {:?} cost {}", check.best.values(), check.best_cost);

    let cfg = SolverConfig::default().enumerating(check.best_cost + 1.0, 100);
    let all = solver::enumerate(&net, &cfg)?;
    println!("within {} of the optimum:", 1.0);
    for (y, c) in &all.solutions {
        println!("  {:?} {c}", y.values());
    }

    let conditioned = net.condition(&[(1, 2)])?;
    let res = solver::solve(&conditioned, &SolverConfig::default());
    println!("with x1 = 2: {:?} cost {}", res.best.values(), res.best_cost);

    println!("{}", serde_json::to_string_pretty(&net.to_toulbar2_json("cycle"))?);
    Ok(())
}
