//! Trains one 4x4 model per mask size and seed, and prints the share of
//! runs that solve every test puzzle.
//!
//! ```text
//! cargo run --release --example k_sweep -- [seeds]
//! ```

use std::io;

use cfn_learn::experiment::{self, TrainConfig};
use cfn_learn::loss::MaskSize;
use cfn_learn::sudoku;

fn main() -> cfn_learn::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let train = sudoku::generate_set(4, 200, 4..=6, true, 1)?;
    let valid = sudoku::generate_set(4, 50, 4..=6, true, 2)?;
    let test = sudoku::generate_set(4, 100, 4..=6, true, 3)?;

    let ks = [0, 2, 3, 12].map(MaskSize::Count);
    let seeds: Vec<u64> = (0..seeds).collect();
    let runs = experiment::sweep_k(&TrainConfig::for_size(4), &ks, &seeds, &train, &valid, &test, |r| {
        eprintln!("k={} seed={} epochs={} test={:.2}", r.k, r.seed, r.epochs_run, r.test_accuracy);
    });
    experiment::write_sweep_summary_csv(io::stdout(), &experiment::summarize_sweep(&runs))?;
    Ok(())
}
