//! Sudoku grids of side 4 and 9 as cost function networks.
//!
//! Cells are numbered row-major. Digits are stored 0-based internally and
//! written 1-based in dataset files, where `0` (or `.`) marks an empty cell.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::cfn::{Assignment, CostFunctionNetwork, CostMatrix};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::solver::{enumerate, SolverConfig, VariableOrder};

/// Cap on solutions kept per sample when enumerating multi-solution grids.
pub const MAX_STORED_SOLUTIONS: usize = 1000;

pub fn check_size(size: usize) -> Result<()> {
    if size == 4 || size == 9 {
        Ok(())
    } else {
        Err(Error::Config(format!("unsupported grid size {size}, expected 4 or 9")))
    }
}

fn box_side(size: usize) -> usize {
    if size == 4 {
        2
    } else {
        3
    }
}

pub fn row_of(size: usize, cell: usize) -> usize {
    cell / size
}

pub fn col_of(size: usize, cell: usize) -> usize {
    cell % size
}

pub fn box_of(size: usize, cell: usize) -> usize {
    let b = box_side(size);
    (row_of(size, cell) / b) * b + col_of(size, cell) / b
}

pub fn shares_unit(size: usize, a: usize, b: usize) -> bool {
    a != b
        && (row_of(size, a) == row_of(size, b)
            || col_of(size, a) == col_of(size, b)
            || box_of(size, a) == box_of(size, b))
}

/// Canonical pairs `(i, j)`, `i < j`, of cells sharing a row, column or box.
pub fn unit_pairs(size: usize) -> Vec<(usize, usize)> {
    let n = size * size;
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| shares_unit(size, i, j))
        .collect()
}

/// Hard rule network: `top` on the diagonal of every unit-sharing pair.
pub fn true_rules(size: usize) -> Result<CostFunctionNetwork> {
    check_size(size)?;
    let mut net = CostFunctionNetwork::new(vec![size; size * size]);
    let top = net.top();
    let mut diff = CostMatrix::zeros(size, size);
    for v in 0..size {
        diff.set(v, v, top);
    }
    for (i, j) in unit_pairs(size) {
        net.set_pair(i, j, diff.clone())?;
    }
    Ok(net)
}

pub fn is_valid_solution(size: usize, grid: &[usize]) -> bool {
    grid.len() == size * size
        && grid.iter().all(|&v| v < size)
        && unit_pairs(size).iter().all(|&(i, j)| grid[i] != grid[j])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SudokuSample {
    pub size: usize,
    /// One entry per cell, `Some(digit)` for hints.
    pub hints: Vec<Option<usize>>,
    /// Full grids extending the hints, at least one.
    pub solutions: Vec<Vec<usize>>,
}

impl SudokuSample {
    pub fn hint_count(&self) -> usize {
        self.hints.iter().filter(|h| h.is_some()).count()
    }

    pub fn evidence(&self) -> Vec<(usize, usize)> {
        self.hints
            .iter()
            .enumerate()
            .filter_map(|(c, h)| h.map(|v| (c, v)))
            .collect()
    }

    pub fn is_hint(&self) -> Vec<bool> {
        self.hints.iter().map(Option::is_some).collect()
    }

    pub fn solution(&self, k: usize) -> Assignment {
        Assignment(self.solutions[k].clone())
    }

    pub fn validate(&self) -> Result<()> {
        check_size(self.size)?;
        let n = self.size * self.size;
        if self.hints.len() != n {
            return Err(Error::Structure(format!("{} hint cells for a {n}-cell grid", self.hints.len())));
        }
        if self.solutions.is_empty() {
            return Err(Error::Structure("sample without solution".into()));
        }
        for s in &self.solutions {
            if !is_valid_solution(self.size, s) {
                return Err(Error::Structure("solution breaks a row, column or box".into()));
            }
            if self.hints.iter().zip(s).any(|(h, &v)| h.is_some_and(|h| h != v)) {
                return Err(Error::Structure("solution contradicts a hint".into()));
            }
        }
        Ok(())
    }

    pub fn puzzle_string(&self) -> String {
        self.hints
            .iter()
            .map(|h| h.map_or('0', digit_char))
            .collect()
    }
}

fn digit_char(v: usize) -> char {
    char::from_digit(v as u32 + 1, 10).expect("digit below 9")
}

pub fn grid_string(grid: &[usize]) -> String {
    grid.iter().map(|&v| digit_char(v)).collect()
}

fn size_for_len(len: usize) -> Option<usize> {
    match len {
        16 => Some(4),
        81 => Some(9),
        _ => None,
    }
}

fn parse_cells(text: &str, allow_empty: bool) -> std::result::Result<(usize, Vec<Option<usize>>), String> {
    let len = text.chars().count();
    let size = size_for_len(len).ok_or_else(|| format!("grid string has {len} characters, expected 16 or 81"))?;
    let cells = text
        .chars()
        .map(|ch| match ch {
            '0' | '.' if allow_empty => Ok(None),
            c => match c.to_digit(10) {
                Some(d) if d >= 1 && d as usize <= size => Ok(Some(d as usize - 1)),
                _ => Err(format!("invalid digit {c:?} for a {size}x{size} grid")),
            },
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((size, cells))
}

/// Parses `puzzle,solution` lines. Consecutive lines with the same puzzle
/// form one multi-solution sample. A non-numeric first line is taken as a
/// header and skipped.
pub fn parse_dataset(reader: impl Read, origin: &Path) -> Result<Vec<SudokuSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut samples: Vec<SudokuSample> = Vec::new();
    let mut last_puzzle = String::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        if record.len() != 2 {
            return Err(err(format!("expected 2 fields, found {}", record.len())));
        }
        let (puzzle, solution) = (&record[0], &record[1]);
        if idx == 0 && !puzzle.chars().all(|c| c.is_ascii_digit() || c == '.') {
            continue;
        }
        let (size, hints) = parse_cells(puzzle, true).map_err(&err)?;
        let (sol_size, sol) = parse_cells(solution, false).map_err(&err)?;
        if sol_size != size {
            return Err(err("puzzle and solution lengths differ".into()));
        }
        let sol: Vec<usize> = sol.into_iter().map(|v| v.expect("solution cells are filled")).collect();
        if let Some(cell) = hints.iter().zip(&sol).position(|(h, &v)| h.is_some_and(|h| h != v)) {
            return Err(err(format!("solution contradicts hint at cell {cell}")));
        }
        if !is_valid_solution(size, &sol) {
            return Err(err("solution breaks a row, column or box".into()));
        }
        match samples.last_mut() {
            Some(prev) if puzzle == last_puzzle => {
                if !prev.solutions.contains(&sol) {
                    prev.solutions.push(sol);
                }
            }
            _ => {
                samples.push(SudokuSample {
                    size,
                    hints,
                    solutions: vec![sol],
                });
                last_puzzle = puzzle.to_string();
            }
        }
    }
    Ok(samples)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<SudokuSample>> {
    let path = path.as_ref();
    parse_dataset(File::open(path)?, path)
}

/// One `puzzle,solution` line per stored solution, no header.
pub fn write_dataset(mut out: impl Write, samples: &[SudokuSample]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
    for s in samples {
        let puzzle = s.puzzle_string();
        for sol in &s.solutions {
            wtr.write_record([puzzle.as_str(), grid_string(sol).as_str()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, samples: &[SudokuSample]) -> Result<()> {
    write_dataset(File::create(path)?, samples)
}

fn uniqueness_solver() -> SolverConfig {
    SolverConfig::default().with_order(VariableOrder::MinDomainThenIndex)
}

/// All completions of `hints` under the true rules, up to `max`.
pub fn solutions_of(size: usize, hints: &[Option<usize>], max: usize) -> Result<(Vec<Vec<usize>>, bool)> {
    let evidence: Vec<(usize, usize)> = hints
        .iter()
        .enumerate()
        .filter_map(|(c, h)| h.map(|v| (c, v)))
        .collect();
    let net = true_rules(size)?.condition(&evidence)?;
    let e = enumerate(&net, &uniqueness_solver().enumerating(0.0, max))?;
    let complete = e.is_complete();
    Ok((e.solutions.into_iter().map(|(a, _)| a.0).collect(), complete))
}

fn count_solutions(size: usize, hints: &[Option<usize>], max: usize) -> Result<usize> {
    Ok(solutions_of(size, hints, max)?.0.len())
}

/// Random complete grid by randomized backtracking over the rule network.
pub fn random_full_grid(size: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    check_size(size)?;
    let rules = true_rules(size)?;
    let n = size * size;
    let mut grid = vec![usize::MAX; n];
    fn fill(
        cell: usize,
        grid: &mut [usize],
        rules: &CostFunctionNetwork,
        size: usize,
        rng: &mut impl Rng,
    ) -> bool {
        if cell == grid.len() {
            return true;
        }
        let mut values: Vec<usize> = (0..size).collect();
        values.shuffle(rng);
        for v in values {
            let ok = (0..cell).all(|p| rules.pair_cost(p, cell, grid[p], v) < rules.top());
            if ok {
                grid[cell] = v;
                if fill(cell + 1, grid, rules, size, rng) {
                    return true;
                }
            }
        }
        grid[cell] = usize::MAX;
        false
    }
    if fill(0, &mut grid, &rules, size, rng) {
        Ok(grid)
    } else {
        Err(Error::Generation("could not fill a grid".into()))
    }
}

const GENERATION_ATTEMPTS: usize = 20;

/// Fills a random grid, then removes cells in random order down to
/// `hint_count`. With `require_unique`, a removal that would allow a second
/// solution is undone, so the result may stop above `hint_count`; the best of
/// a few attempts is returned.
pub fn generate(size: usize, hint_count: usize, rng: &mut impl Rng, require_unique: bool) -> Result<SudokuSample> {
    check_size(size)?;
    let n = size * size;
    if hint_count > n {
        return Err(Error::Generation(format!("{hint_count} hints exceed {n} cells")));
    }
    let min_unique = if size == 9 { 17 } else { 4 };
    if require_unique && hint_count < min_unique {
        return Err(Error::Generation(format!(
            "a unique {size}x{size} puzzle needs at least {min_unique} hints"
        )));
    }

    let mut best: Option<SudokuSample> = None;
    for _ in 0..GENERATION_ATTEMPTS {
        let grid = random_full_grid(size, rng)?;
        let mut hints: Vec<Option<usize>> = grid.iter().copied().map(Some).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut count = n;
        for cell in order {
            if count == hint_count {
                break;
            }
            hints[cell] = None;
            if require_unique && count_solutions(size, &hints, 2)? > 1 {
                hints[cell] = Some(grid[cell]);
            } else {
                count -= 1;
            }
        }
        let solutions = if require_unique {
            vec![grid]
        } else {
            solutions_of(size, &hints, MAX_STORED_SOLUTIONS)?.0
        };
        let sample = SudokuSample { size, hints, solutions };
        let done = sample.hint_count() == hint_count;
        if best.as_ref().is_none_or(|b| sample.hint_count() < b.hint_count()) {
            best = Some(sample);
        }
        if done {
            break;
        }
    }
    best.ok_or_else(|| Error::Generation("no attempt succeeded".into()))
}

/// Puzzle with between `min_solutions` and `max_solutions` solutions, all of
/// them stored.
pub fn generate_multi_solution(
    size: usize,
    min_solutions: usize,
    max_solutions: usize,
    rng: &mut impl Rng,
) -> Result<SudokuSample> {
    check_size(size)?;
    if min_solutions < 2 || min_solutions > max_solutions {
        return Err(Error::Generation(format!(
            "bad solution range [{min_solutions}, {max_solutions}]"
        )));
    }
    let n = size * size;
    for _ in 0..GENERATION_ATTEMPTS * 5 {
        let grid = random_full_grid(size, rng)?;
        let mut hints: Vec<Option<usize>> = grid.iter().copied().map(Some).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for cell in order {
            hints[cell] = None;
            if count_solutions(size, &hints, max_solutions + 1)? > max_solutions {
                hints[cell] = Some(grid[cell]);
            }
        }
        let (solutions, complete) = solutions_of(size, &hints, max_solutions + 1)?;
        if complete && solutions.len() >= min_solutions && solutions.len() <= max_solutions {
            return Ok(SudokuSample { size, hints, solutions });
        }
    }
    Err(Error::Generation(format!(
        "no {size}x{size} puzzle with {min_solutions}..={max_solutions} solutions found"
    )))
}

/// `count` puzzles with hint counts drawn uniformly from `hints`, seeded
/// from one stream so the same arguments always give the same set.
pub fn generate_set(
    size: usize,
    count: usize,
    hints: std::ops::RangeInclusive<usize>,
    require_unique: bool,
    seed: u64,
) -> Result<Vec<SudokuSample>> {
    let mut rng = stream_rng(seed, Stream::Data, &[size as u64]);
    (0..count)
        .map(|_| {
            let h = rng.random_range(hints.clone());
            generate(size, h, &mut rng, require_unique)
        })
        .collect()
}

/// `count` puzzles with `min..=max` solutions each. Each puzzle draws its own
/// upper bound from the range so the counts spread out.
pub fn generate_multi_set(size: usize, count: usize, min: usize, max: usize, seed: u64) -> Result<Vec<SudokuSample>> {
    if min < 2 || min > max {
        return Err(Error::Generation(format!("bad solution range [{min}, {max}]")));
    }
    let mut rng = stream_rng(seed, Stream::Data, &[size as u64, min as u64, max as u64]);
    (0..count)
        .map(|_| {
            let cap = rng.random_range(min..=max);
            generate_multi_solution(size, min, cap, &mut rng)
        })
        .collect()
}

/// One-hot row, column and box of both cells of every canonical pair.
#[derive(Debug, Clone)]
pub struct PairFeatures {
    pub size: usize,
    pub pairs: Vec<(usize, usize)>,
    /// One row per pair, `6 * size` columns.
    pub matrix: Array2<f64>,
}

impl PairFeatures {
    pub fn new(size: usize) -> Result<Self> {
        check_size(size)?;
        let n = size * size;
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let width = 6 * size;
        let mut matrix = Array2::zeros((pairs.len(), width));
        for (p, &(i, j)) in pairs.iter().enumerate() {
            for (slot, cell) in [(0, i), (3, j)] {
                matrix[[p, slot * size + row_of(size, cell)]] = 1.0;
                matrix[[p, (slot + 1) * size + col_of(size, cell)]] = 1.0;
                matrix[[p, (slot + 2) * size + box_of(size, cell)]] = 1.0;
            }
        }
        Ok(Self { size, pairs, matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleClass {
    DifferenceConstraint,
    Zero,
    Other,
}

impl RuleClass {
    fn as_str(self) -> &'static str {
        match self {
            RuleClass::DifferenceConstraint => "difference-constraint",
            RuleClass::Zero => "zero",
            RuleClass::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRule {
    pub i: usize,
    pub j: usize,
    pub class: RuleClass,
    pub min_diag: f64,
    pub max_offdiag: f64,
    /// Ground truth: the two cells share a row, column or box.
    pub shares_unit: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RuleCounts {
    pub total: usize,
    pub difference: usize,
    pub zero: usize,
    pub other: usize,
    pub unit_pairs: usize,
    /// Unit-sharing pairs classified as difference constraints.
    pub recovered: usize,
    /// Pairs sharing no unit classified as difference constraints.
    pub spurious: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleReport {
    pub size: usize,
    pub tau_on: f64,
    pub tau_off: f64,
    pub counts: RuleCounts,
    #[serde(skip)]
    pub pairs: Vec<PairRule>,
}

/// Classifies each pair matrix of a predicted network: a difference
/// constraint has every diagonal entry above `tau_on` and every off-diagonal
/// magnitude below `tau_off`; a zero matrix has every magnitude below
/// `tau_off`. Absent pairs read as zero matrices.
pub fn analyze_rules(size: usize, net: &CostFunctionNetwork, tau_on: f64, tau_off: f64) -> Result<RuleReport> {
    check_size(size)?;
    let n = size * size;
    if net.num_vars() != n || net.domains().iter().any(|&d| d != size) {
        return Err(Error::Structure(format!("network does not match a {size}x{size} grid")));
    }
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    let mut counts = RuleCounts::default();
    for i in 0..n {
        for j in i + 1..n {
            let (mut min_diag, mut max_offdiag, mut max_abs) = (f64::INFINITY, 0.0f64, 0.0f64);
            for a in 0..size {
                for b in 0..size {
                    let c = net.pair_cost(i, j, a, b);
                    max_abs = max_abs.max(c.abs());
                    if a == b {
                        min_diag = min_diag.min(c);
                    } else {
                        max_offdiag = max_offdiag.max(c.abs());
                    }
                }
            }
            let class = if min_diag > tau_on && max_offdiag < tau_off {
                RuleClass::DifferenceConstraint
            } else if max_abs < tau_off {
                RuleClass::Zero
            } else {
                RuleClass::Other
            };
            let unit = shares_unit(size, i, j);
            counts.total += 1;
            counts.unit_pairs += unit as usize;
            match class {
                RuleClass::DifferenceConstraint => {
                    counts.difference += 1;
                    if unit {
                        counts.recovered += 1;
                    } else {
                        counts.spurious += 1;
                    }
                }
                RuleClass::Zero => counts.zero += 1,
                RuleClass::Other => counts.other += 1,
            }
            pairs.push(PairRule {
                i,
                j,
                class,
                min_diag,
                max_offdiag,
                shares_unit: unit,
            });
        }
    }
    Ok(RuleReport {
        size,
        tau_on,
        tau_off,
        counts,
        pairs,
    })
}

impl RuleReport {
    /// `pair_i,pair_j,class,min_diag,max_offdiag`
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["pair_i", "pair_j", "class", "min_diag", "max_offdiag"])?;
        for p in &self.pairs {
            wtr.write_record([
                p.i.to_string(),
                p.j.to_string(),
                p.class.as_str().to_string(),
                p.min_diag.to_string(),
                p.max_offdiag.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Difference-classified pairs, as canonical keys.
    pub fn constraint_set(&self) -> BTreeSet<(usize, usize)> {
        self.pairs
            .iter()
            .filter(|p| p.class == RuleClass::DifferenceConstraint)
            .map(|p| (p.i, p.j))
            .collect()
    }

    /// Smallest min-diagonal over unit pairs minus the largest over the
    /// other pairs. Positive means the two populations do not overlap.
    pub fn support_gap(&self) -> f64 {
        let lo_unit = self
            .pairs
            .iter()
            .filter(|p| p.shares_unit)
            .map(|p| p.min_diag)
            .fold(f64::INFINITY, f64::min);
        let hi_free = self
            .pairs
            .iter()
            .filter(|p| !p.shares_unit)
            .map(|p| p.min_diag)
            .fold(f64::NEG_INFINITY, f64::max);
        lo_unit - hi_free
    }

    /// Histogram of min-diagonal costs, split by ground truth:
    /// `bin_lo,bin_hi,constrained,unconstrained`.
    pub fn write_histogram_csv(&self, out: impl Write, bins: usize) -> Result<()> {
        let bins = bins.max(1);
        let values = self.pairs.iter().map(|p| p.min_diag);
        let lo = values.clone().fold(f64::INFINITY, f64::min);
        let hi = values.fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![(0usize, 0usize); bins];
        for p in &self.pairs {
            let b = (((p.min_diag - lo) / width) as usize).min(bins - 1);
            if p.shares_unit {
                counts[b].0 += 1;
            } else {
                counts[b].1 += 1;
            }
        }
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["bin_lo", "bin_hi", "constrained", "unconstrained"])?;
        for (b, (c, u)) in counts.iter().enumerate() {
            let b_lo = lo + b as f64 * width;
            wtr.write_record([
                b_lo.to_string(),
                (b_lo + width).to_string(),
                c.to_string(),
                u.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
