//! Trains the same 4x4 data with the structured hinge loss and with
//! E-NPLL, and compares accuracy and recovered constraints.
//!
//! ```text
//! cargo run --release --example hinge_vs_enpll -- [seed]
//! ```

use cfn_learn::experiment::{self, EvalMode, LossKind, TrainConfig};
use cfn_learn::sudoku;

fn main() -> cfn_learn::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let train = sudoku::generate_set(4, 200, 4..=6, true, 1)?;
    let valid = sudoku::generate_set(4, 50, 4..=6, true, 2)?;
    let test = sudoku::generate_set(4, 100, 4..=6, true, 3)?;
    let minimum = experiment::min_irredundant_rule_count(4, 20, 0)?;

    for loss in [LossKind::Hinge, LossKind::ENpll] {
        let cfg = TrainConfig {
            loss,
            seed,
            ..TrainConfig::for_size(4)
        };
        let out = experiment::train(&cfg, &train, &valid, &mut std::io::sink())?;
        let acc = experiment::evaluate(&out.checkpoint.params, &test, EvalMode::Single, &cfg.solver())?.accuracy();
        let net = experiment::predict_network(&out.checkpoint.params)?;
        let rules = sudoku::analyze_rules(4, &net, 1.0, 0.1)?;
        println!(
            "{loss:?}: {} epochs, test {:.2}, {} / 56 constraints (irredundant minimum {minimum}), {} spurious",
            out.epochs_run, acc, rules.counts.recovered, rules.counts.spurious
        );
    }
    Ok(())
}
