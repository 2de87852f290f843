//! Learns from puzzles that have several solutions, then compares the
//! completions allowed by the thresholded model with the true ones.
//!
//! ```text
//! cargo run --release --example multi_solution -- [seed]
//! ```

use cfn_learn::experiment::{self, EvalMode, TrainConfig};
use cfn_learn::loss::MaskSize;
use cfn_learn::sudoku;

fn main() -> cfn_learn::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let train = sudoku::generate_multi_set(4, 200, 2, 6, 11)?;
    let valid = sudoku::generate_multi_set(4, 50, 2, 6, 12)?;
    let test = sudoku::generate_multi_set(4, 60, 2, 6, 13)?;

    let cfg = TrainConfig {
        k: Some(MaskSize::Count(3)),
        seed,
        max_solutions_shown: 5,
        ..TrainConfig::for_size(4)
    };
    let out = experiment::train(&cfg, &train, &valid, &mut std::io::sink())?;
    let report = experiment::evaluate(&out.checkpoint.params, &test, EvalMode::AnyOfKnown, &cfg.solver())?;
    println!("{} epochs, any-of-known {}/{}", out.epochs_run, report.grids_solved, report.grids_total);

    let net = experiment::predict_network(&out.checkpoint.params)?;
    let (mut equal, mut missing, mut extra) = (0, 0, 0);
    for s in &test {
        let c = experiment::enumerate_learned(&net, s, 1.0, 10_000)?;
        equal += c.equal as usize;
        missing += c.missing.len();
        extra += c.extra.len();
    }
    println!("solution sets equal on {equal}/{}; {missing} missing, {extra} extra completions", test.len());
    Ok(())
}
