//! Writes 4x4 datasets: unique-solution puzzles with 4 to 6 hints and
//! puzzles with between 2 and 6 solutions.
//!
//! ```text
//! cargo run --release --example generate_data -- [out_dir]
//! ```

use std::path::PathBuf;

use cfn_learn::sudoku;

fn main() -> cfn_learn::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir)?;

    for (name, count, seed) in [("train", 200, 1), ("valid", 50, 2), ("test", 100, 3)] {
        let set = sudoku::generate_set(4, count, 4..=6, true, seed)?;
        let path = dir.join(format!("sudoku4_{name}.csv"));
        sudoku::save_dataset(&path, &set)?;
        println!("{}: {} puzzles", path.display(), set.len());
    }

    let multi = sudoku::generate_multi_set(4, 60, 2, 6, 13)?;
    let path = dir.join("sudoku4_multi.csv");
    sudoku::save_dataset(&path, &multi)?;
    let mut by_count = [0usize; 7];
    for s in &multi {
        by_count[s.solutions.len()] += 1;
    }
    println!("{}: solution counts 2..=6 -> {:?}", path.display(), &by_count[2..]);

    let back = sudoku::load_dataset(&path)?;
    assert_eq!(back, multi);
    println!("first puzzle {} has {} solutions", back[0].puzzle_string(), back[0].solutions.len());
    Ok(())
}
