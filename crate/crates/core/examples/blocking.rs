//! Why plain pseudo-likelihood misses redundant constraints: on a chain of
//! four binary variables the forbidden entries of the middle matrix get no
//! gradient, until the neighbours that already explain them are masked.
//!
//! ```text
//! cargo run --example blocking
//! ```

use cfn_learn::loss::{self, MaskPlan};
use cfn_learn::{Assignment, CostFunctionNetwork, CostMatrix};

fn main() -> cfn_learn::Result<()> {
    let mut net = CostFunctionNetwork::new(vec![2; 4]);
    let equal_costly = CostMatrix::from_rows(&[vec![20.0, 0.0], vec![0.0, 20.0]])?;
    net.set_pair(0, 1, equal_costly.clone())?;
    net.set_pair(1, 2, CostMatrix::zeros(2, 2))?;
    net.set_pair(2, 3, equal_costly)?;
    let y = Assignment(vec![0, 1, 1, 0]);

    let plain = loss::npll(&net, &y)?;
    println!("NPLL {:.4}, gradient on C12: {:?}", plain.value, plain.grad_pairs[&(1, 2)]);

    let plan = MaskPlan::from_sets(vec![vec![], vec![0], vec![3], vec![]])?;
    let masked = loss::e_npll(&net, &y, &plan)?;
    println!("E-NPLL {:.4}, gradient on C12: {:?}", masked.value, masked.grad_pairs[&(1, 2)]);

    for i in 1..=2 {
        let p = loss::conditional_distribution(&net, &y, i, &[])?;
        let q = loss::conditional_distribution(&net, &y, i, plan.excluded(i))?;
        println!("P(x{i} | rest) {p:.4?}, masked {q:.4?}");
    }
    Ok(())
}
