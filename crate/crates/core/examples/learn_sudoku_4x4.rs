//! Learns the 4x4 Sudoku rules from 200 solved grids and checks them on
//! low-hint puzzles.
//!
//! ```text
//! cargo run --release --example learn_sudoku_4x4 -- [loss] [k] [seed]
//! ```

use std::io;

use cfn_learn::experiment::{self, EvalMode, LossKind, TrainConfig};
use cfn_learn::loss::MaskSize;
use cfn_learn::sudoku;

fn main() -> cfn_learn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let loss: LossKind = args.first().map_or(Ok(LossKind::ENpll), |s| s.parse())?;
    let k: MaskSize = args.get(1).map_or(Ok(MaskSize::Count(3)), |s| s.parse())?;
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let train = sudoku::generate_set(4, 200, 4..=6, true, 1)?;
    let valid = sudoku::generate_set(4, 50, 4..=6, true, 2)?;
    let test = sudoku::generate_set(4, 100, 4..=6, true, 3)?;

    let cfg = TrainConfig {
        loss,
        k: Some(k),
        seed,
        ..TrainConfig::for_size(4)
    };
    let out = experiment::train(&cfg, &train, &valid, &mut io::stderr())?;
    let params = &out.checkpoint.params;
    let report = experiment::evaluate(params, &test, EvalMode::Single, &cfg.solver())?;
    println!(
        "{} epochs, {:.1}s, test accuracy {}/{}",
        out.epochs_run,
        out.wall_clock_s,
        report.grids_solved,
        report.grids_total
    );
    let net = experiment::predict_network(params)?;
    let rules = sudoku::analyze_rules(4, &net, 1.0, 0.1)?;
    println!("{}", rules.summary_json()?);
    println!("support gap {:.3}", rules.support_gap());
    Ok(())
}
