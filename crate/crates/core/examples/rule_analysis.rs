//! Classifies the pair matrices of a network as difference constraints,
//! zero matrices or anything else, and writes the reports. Without an
//! argument the true 4x4 rules are analysed; otherwise a checkpoint or
//! network JSON file.
//!
//! ```text
//! cargo run --release --example rule_analysis -- [model.json]
//! ```

use std::fs::File;

use cfn_learn::experiment::{self, Model};
use cfn_learn::sudoku;

fn main() -> cfn_learn::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => Model::load(path)?,
        None => Model::Fixed(sudoku::true_rules(4)?),
    };
    let size = model.size()?;
    let report = sudoku::analyze_rules(size, &model.network()?, 1.0, 0.1)?;
    println!("{}", report.summary_json()?);
    println!("support gap {:.3}", report.support_gap());

    let dir = std::env::temp_dir();
    report.write_csv(File::create(dir.join("rules.csv"))?)?;
    report.write_histogram_csv(File::create(dir.join("rules_hist.csv"))?, 40)?;
    println!("wrote rules.csv and rules_hist.csv to {}", dir.display());

    if size == 4 {
        let minimum = experiment::min_irredundant_rule_count(4, 20, 0)?;
        let learned: Vec<_> = report.constraint_set().into_iter().collect();
        println!(
            "smallest irredundant rule set found: {minimum}; learned set accepts {} grids (true rules: 288)",
            experiment::count_grids(4, &learned, 100_000)?
        );
    }
    Ok(())
}
