use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use cfn_learn::cfn::io::ToulbarExport;
use cfn_learn::experiment::{self, EvalMode, LossKind, Model, TrainConfig};
use cfn_learn::loss::MaskSize;
use cfn_learn::solver::{self, SolverConfig, VariableOrder};
use cfn_learn::sudoku;
use cfn_learn::{CostFunctionNetwork, Error, Result};

#[derive(Parser)]
#[command(name = "cfnl", version, about = "Learn cost function networks from solved examples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a JSON-lines log.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "checkpoint.json")]
        out: PathBuf,
        /// Log file; stderr when absent.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Solve every grid of a dataset with a model or a network file.
    Evaluate {
        /// Checkpoint or network JSON.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "single")]
        mode: Mode,
        #[arg(long, default_value_t = 1_000_000)]
        node_limit: u64,
        /// Per-grid CSV: `grid,solved,node_limit_hit,prediction`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train one model per (k, seed) pair and tabulate the runs.
    SweepK {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated mask sizes, e.g. `0,2,3,12` or `10%`.
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<MaskSize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// Summary CSV: `k,epochs,time_s,runs_solved_percent`.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        /// Per-run CSV.
        #[arg(long)]
        runs: Option<PathBuf>,
        /// Directory receiving one training log per run.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Generate a puzzle dataset.
    GenerateData {
        #[arg(long, default_value_t = 4)]
        size: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Hint range `MIN-MAX` (or a single count) for unique puzzles.
        #[arg(long, default_value = "4-6")]
        hints: String,
        /// Solution range `MIN-MAX` for multi-solution puzzles; overrides `--hints`.
        #[arg(long)]
        multi: Option<String>,
        /// Keep at most this many solutions per multi-solution puzzle.
        #[arg(long, default_value_t = 5)]
        keep: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimize a network file, or enumerate its solutions under a bound.
    Solve {
        network: PathBuf,
        /// Evidence as `var=value` pairs, e.g. `0=1,5=3`.
        #[arg(long, value_delimiter = ',')]
        evidence: Vec<String>,
        /// Enumerate every assignment costing at most this much.
        #[arg(long)]
        enumerate: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        max_solutions: usize,
        #[arg(long, default_value_t = 100_000_000)]
        node_limit: u64,
        #[arg(long, value_enum, default_value = "static-degree")]
        order: Order,
        /// Also write the conditioned network in toulbar2's JSON format.
        #[arg(long)]
        export_toulbar2: Option<PathBuf>,
    },
    /// Classify the pair matrices of a model against the Sudoku rules.
    AnalyzeRules {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tau_on: f64,
        #[arg(long, default_value_t = 0.1)]
        tau_off: f64,
        /// Per-pair CSV.
        #[arg(long, default_value = "rules.csv")]
        csv: PathBuf,
        #[arg(long, default_value = "rules_histogram.csv")]
        histogram: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long, default_value = "rules_summary.json")]
        summary: PathBuf,
        /// Also save the predicted network.
        #[arg(long)]
        network_out: Option<PathBuf>,
    },
    /// Threshold a model, enumerate each grid's solutions and compare them
    /// with the true ones.
    EnumerateLearned {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 10_000)]
        max_solutions: usize,
        /// CSV: `grid,equal,learned,truth,missing,extra,partial`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Single,
    AnyOfKnown,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Order {
    StaticDegree,
    MinDomain,
}

/// Configuration file plus overrides.
#[derive(Args)]
struct ConfigArgs {
    /// TOML or JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    k: Option<MaskSize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    hinge_margin: Option<f64>,
    #[arg(long)]
    exclude_hint_terms: bool,
    /// Drop wall-clock fields from logs so reruns are byte-identical.
    #[arg(long)]
    deterministic: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                if path.extension().is_some_and(|e| e == "json") {
                    serde_json::from_str(&text)?
                } else {
                    TrainConfig::from_toml(&text)?
                }
            }
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($field:ident <- $arg:expr),*) => {
                $(if let Some(v) = $arg.clone() { cfg.$field = v; })*
            };
        }
        set!(size <- self.size, loss <- self.loss, lr <- self.lr, weight_decay <- self.weight_decay,
             l1_lambda <- self.l1, max_epochs <- self.max_epochs, patience <- self.patience,
             seed <- self.seed, hinge_margin <- self.hinge_margin);
        if self.k.is_some() {
            cfg.k = self.k;
        }
        for (slot, arg) in [(&mut cfg.train, &self.train), (&mut cfg.valid, &self.valid), (&mut cfg.test, &self.test)] {
            if arg.is_some() {
                slot.clone_from(arg);
            }
        }
        cfg.exclude_hint_terms |= self.exclude_hint_terms;
        cfg.deterministic |= self.deterministic;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_range(text: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let bad = || Error::Config(format!("expected N or MIN-MAX, got {text:?}"));
    let (lo, hi) = match text.split_once('-') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let n = text.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if lo > hi {
        return Err(bad());
    }
    Ok(lo..=hi)
}

fn parse_evidence(items: &[String]) -> Result<Vec<(usize, usize)>> {
    items
        .iter()
        .map(|item| {
            let bad = || Error::Config(format!("evidence {item:?} is not var=value"));
            let (var, val) = item.split_once('=').ok_or_else(bad)?;
            Ok((var.trim().parse().map_err(|_| bad())?, val.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg, out, log } => {
            let cfg = cfg.resolve()?;
            let (train, valid, test) = experiment::load_datasets(&cfg)?;
            let mut sink: Box<dyn Write> = match &log {
                Some(p) => Box::new(create(p)?),
                None => Box::new(io::stderr()),
            };
            let outcome = experiment::train(&cfg, &train, &valid, &mut sink)?;
            sink.flush()?;
            outcome.checkpoint.save(&out)?;
            println!(
                "trained {} epochs, best validation accuracy {:.3}",
                outcome.epochs_run, outcome.best_val_accuracy
            );
            if !test.is_empty() {
                let report = experiment::evaluate(&outcome.checkpoint.params, &test, EvalMode::AnyOfKnown, &cfg.solver())?;
                println!("test: {}/{} grids solved", report.grids_solved, report.grids_total);
            }
        }
        Command::Evaluate { model, data, mode, node_limit, csv } => {
            let model = Model::load(&model)?;
            let samples = sudoku::load_dataset(&data)?;
            let size = model.size()?;
            if let Some(s) = samples.iter().find(|s| s.size != size) {
                return Err(Error::Structure(format!("{size}x{size} model, {}x{} grid in dataset", s.size, s.size)));
            }
            let mode = match mode {
                Mode::Single => EvalMode::Single,
                Mode::AnyOfKnown => EvalMode::AnyOfKnown,
            };
            let solver = SolverConfig {
                node_limit,
                ..SolverConfig::default().with_order(VariableOrder::MinDomainThenIndex)
            };
            let mut report = experiment::evaluate_network(&model.network()?, &samples, mode, &solver)?;
            if let Model::Trained(c) = &model {
                report.epochs_run = c.meta.get("epochs_run").and_then(|v| v.as_u64()).map(|v| v as usize);
            }
            if let Some(path) = csv {
                let mut wtr = csv::Writer::from_writer(create(&path)?);
                wtr.write_record(["grid", "solved", "node_limit_hit", "prediction"])?;
                for (g, o) in report.outcomes.iter().enumerate() {
                    wtr.write_record([
                        g.to_string(),
                        o.solved.to_string(),
                        o.node_limit_hit.to_string(),
                        sudoku::grid_string(&o.prediction),
                    ])?;
                }
                wtr.flush()?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "grids_total": report.grids_total,
                    "grids_solved": report.grids_solved,
                    "accuracy": report.accuracy(),
                    "node_limit_hits": report.node_limit_hits,
                    "wall_clock_s": report.wall_clock_s,
                    "epochs_run": report.epochs_run,
                })
            );
        }
        Command::SweepK { cfg, ks, seeds, out, runs, logs } => {
            let cfg = cfg.resolve()?;
            let (train, valid, test) = experiment::load_datasets(&cfg)?;
            if let Some(dir) = &logs {
                fs::create_dir_all(dir)?;
            }
            let mut log_error = None;
            let results = experiment::sweep_k(&cfg, &ks, &seeds, &train, &valid, &test, |run| {
                eprintln!(
                    "k={} seed={} epochs={} test={:.3}{}",
                    run.k,
                    run.seed,
                    run.epochs_run,
                    run.test_accuracy,
                    run.error.as_deref().map(|e| format!(" error: {e}")).unwrap_or_default()
                );
                if let Some(dir) = &logs {
                    let name = format!("k{}_seed{}.jsonl", run.k.to_string().replace('%', "pct"), run.seed);
                    if let Err(e) = fs::write(dir.join(name), &run.log) {
                        log_error.get_or_insert(e);
                    }
                }
            });
            if let Some(e) = log_error {
                return Err(e.into());
            }
            experiment::write_sweep_summary_csv(create(&out)?, &experiment::summarize_sweep(&results))?;
            if let Some(path) = runs {
                experiment::write_sweep_runs_csv(create(&path)?, &results)?;
            }
        }
        Command::GenerateData { size, count, hints, multi, keep, seed, out } => {
            let mut samples = match multi {
                Some(range) => {
                    let r = parse_range(&range)?;
                    sudoku::generate_multi_set(size, count, *r.start(), *r.end(), seed)?
                }
                None => sudoku::generate_set(size, count, parse_range(&hints)?, true, seed)?,
            };
            for s in &mut samples {
                s.solutions.truncate(keep.max(1));
            }
            sudoku::save_dataset(&out, &samples)?;
            println!("wrote {} puzzles to {}", samples.len(), out.display());
        }
        Command::Solve { network, evidence, enumerate, max_solutions, node_limit, order, export_toulbar2 } => {
            let net = CostFunctionNetwork::read_json(&network)?.condition(&parse_evidence(&evidence)?)?;
            if let Some(path) = export_toulbar2 {
                let name = network.file_stem().and_then(|s| s.to_str()).unwrap_or("cfn");
                fs::write(path, serde_json::to_string_pretty(&net.to_toulbar2_json(name))?)?;
            }
            let order = match order {
                Order::StaticDegree => VariableOrder::StaticDegree,
                Order::MinDomain => VariableOrder::MinDomainThenIndex,
            };
            let cfg = SolverConfig {
                node_limit,
                ..SolverConfig::default().with_order(order)
            };
            match enumerate {
                None => {
                    let res = solver::solve(&net, &cfg);
                    println!(
                        "{}",
                        serde_json::json!({
                            "assignment": res.best.0,
                            "cost": res.best_cost,
                            "optimal": res.proven_optimal,
                            "nodes": res.nodes_expanded,
                        })
                    );
                }
                Some(bound) => {
                    let e = solver::enumerate(&net, &cfg.enumerating(bound, max_solutions))?;
                    for (a, c) in &e.solutions {
                        println!("{}", serde_json::json!({ "assignment": a.0, "cost": c }));
                    }
                    eprintln!(
                        "{} solutions, truncated: {}, node limit hit: {}",
                        e.solutions.len(),
                        e.truncated,
                        e.node_limit_hit
                    );
                }
            }
        }
        Command::AnalyzeRules { model, tau_on, tau_off, csv, histogram, bins, summary, network_out } => {
            let model = Model::load(&model)?;
            let net = model.network()?;
            if let Some(path) = network_out {
                net.write_json(path)?;
            }
            let report = sudoku::analyze_rules(model.size()?, &net, tau_on, tau_off)?;
            report.write_csv(create(&csv)?)?;
            report.write_histogram_csv(create(&histogram)?, bins)?;
            let mut summary_json = serde_json::to_value(&report)?;
            summary_json["support_gap"] = serde_json::json!(report.support_gap());
            fs::write(&summary, serde_json::to_string_pretty(&summary_json)?)?;
            println!("{}", serde_json::to_string_pretty(&summary_json)?);
        }
        Command::EnumerateLearned { model, data, tau, max_solutions, csv } => {
            let net = Model::load(&model)?.network()?;
            let samples = sudoku::load_dataset(&data)?;
            let mut rows = Vec::with_capacity(samples.len());
            for s in &samples {
                rows.push(experiment::enumerate_learned(&net, s, tau, max_solutions)?);
            }
            if let Some(path) = csv {
                let mut wtr = csv::Writer::from_writer(create(&path)?);
                wtr.write_record(["grid", "equal", "learned", "truth", "missing", "extra", "partial"])?;
                for (g, c) in rows.iter().enumerate() {
                    wtr.write_record([
                        g.to_string(),
                        c.equal.to_string(),
                        c.learned.to_string(),
                        c.truth.to_string(),
                        c.missing.len().to_string(),
                        c.extra.len().to_string(),
                        c.partial.to_string(),
                    ])?;
                }
                wtr.flush()?;
            }
            let equal = rows.iter().filter(|c| c.equal).count();
            let partial = rows.iter().filter(|c| c.partial).count();
            println!("{equal}/{} grids with identical solution sets ({partial} partial)", rows.len());
        }
    }
    Ok(())
}
