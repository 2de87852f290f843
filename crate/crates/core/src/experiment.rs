//! Training, evaluation and the experiments built on them.
//!
//! A model maps the features of every cell pair to a cost matrix. Because
//! Sudoku features only encode grid geometry, one forward pass yields the
//! whole predicted network; hints enter afterwards as evidence.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cfn::{Assignment, CostFunctionNetwork, CostMatrix};
use crate::error::{Error, Result};
use crate::loss::{self, LossReport, MaskSeed, MaskSize, PllOptions};
use crate::mlp::{AdamConfig, Checkpoint, MlpConfig, ParamStore};
use crate::rng::{stream_rng, Stream};
use crate::solver::{enumerate, solve, SolverConfig, VariableOrder};
use crate::sudoku::{self, PairFeatures, SudokuSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Npll,
    ENpll,
    Hinge,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "npll" => Ok(LossKind::Npll),
            "e-npll" | "enpll" => Ok(LossKind::ENpll),
            "hinge" => Ok(LossKind::Hinge),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

/// Training settings. Fields left as `None` take size-dependent defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub size: usize,
    pub loss: LossKind,
    pub k: Option<MaskSize>,
    pub lr: f64,
    pub weight_decay: f64,
    /// Add decay to the gradient instead of shrinking weights directly.
    pub coupled_weight_decay: bool,
    pub l1_lambda: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub hidden_width: Option<usize>,
    pub hidden_layers: Option<usize>,
    pub residual_period: usize,
    /// Solutions of a multi-solution sample that training may pick from.
    pub max_solutions_shown: usize,
    /// Leave out the pseudo-likelihood terms of hinted cells.
    pub exclude_hint_terms: bool,
    pub hinge_margin: f64,
    /// Free (unassigned) cells at the first hinge epoch.
    pub hinge_free_start: Option<usize>,
    pub hinge_free_step: usize,
    /// Validate every this many epochs.
    pub eval_every: Option<usize>,
    pub node_limit: u64,
    /// Omit wall-clock fields so logs are byte-reproducible.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            size: 9,
            loss: LossKind::ENpll,
            k: None,
            lr: 1e-3,
            weight_decay: 1e-4,
            coupled_weight_decay: false,
            l1_lambda: 2e-4,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            train: None,
            valid: None,
            test: None,
            hidden_width: None,
            hidden_layers: None,
            residual_period: 2,
            max_solutions_shown: 5,
            exclude_hint_terms: false,
            hinge_margin: 1.0,
            hinge_free_start: None,
            hinge_free_step: 2,
            eval_every: None,
            node_limit: 1_000_000,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn for_size(size: usize) -> Self {
        Self {
            size,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn mask_size(&self) -> MaskSize {
        self.k.unwrap_or(MaskSize::Count(if self.size == 4 { 3 } else { 10 }))
    }

    pub fn mlp_config(&self) -> MlpConfig {
        let small = self.size == 4;
        MlpConfig {
            input_dim: 6 * self.size,
            hidden_width: self.hidden_width.unwrap_or(if small { 64 } else { 128 }),
            hidden_layers: self.hidden_layers.unwrap_or(if small { 4 } else { 10 }),
            residual_period: self.residual_period,
            output_dim: self.size * self.size,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            decoupled: !self.coupled_weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn hinge_free_start(&self) -> usize {
        self.hinge_free_start.unwrap_or(if self.size == 4 { 8 } else { 20 })
    }

    pub fn eval_every(&self) -> usize {
        self.eval_every.unwrap_or(if self.size == 4 { 1 } else { 5 }).max(1)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            node_limit: self.node_limit,
            ..SolverConfig::default().with_order(VariableOrder::MinDomainThenIndex)
        }
    }

    pub fn validate(&self) -> Result<()> {
        sudoku::check_size(self.size)?;
        self.mask_size().resolve(self.size * self.size)?;
        self.mlp_config().validate()?;
        if !(self.lr > 0.0) || self.weight_decay < 0.0 || self.l1_lambda < 0.0 || self.hinge_margin < 0.0 {
            return Err(Error::Config("rates, decay, l1 and margin must be non-negative".into()));
        }
        if self.max_solutions_shown == 0 {
            return Err(Error::Config("max_solutions_shown must be positive".into()));
        }
        Ok(())
    }
}

/// Builds a network from one output row per pair.
pub fn assemble_network(features: &PairFeatures, output: ArrayView2<'_, f64>) -> Result<CostFunctionNetwork> {
    let d = features.size;
    if output.nrows() != features.pairs.len() || output.ncols() != d * d {
        return Err(Error::Structure(format!(
            "output of shape {:?} does not match {} pairs of {d}x{d} matrices",
            output.dim(),
            features.pairs.len()
        )));
    }
    let mut net = CostFunctionNetwork::new(vec![d; d * d]);
    for (row, &(i, j)) in output.rows().into_iter().zip(&features.pairs) {
        net.set_pair(i, j, CostMatrix::from_flat(d, d, row.to_vec())?)?;
    }
    Ok(net)
}

/// The network a model predicts for grids of its size.
pub fn predict_network(params: &ParamStore) -> Result<CostFunctionNetwork> {
    let size = size_of_model(params)?;
    let features = PairFeatures::new(size)?;
    let (out, _) = params.forward(features.matrix.view())?;
    assemble_network(&features, out.view())
}

pub fn size_of_model(params: &ParamStore) -> Result<usize> {
    match params.config.output_dim {
        16 => Ok(4),
        81 => Ok(9),
        d => Err(Error::Structure(format!("model outputs {d} costs per pair, not a Sudoku size"))),
    }
}

/// Something that yields a Sudoku network: a trained checkpoint, or a fixed
/// network such as the true rules.
#[derive(Debug, Clone)]
pub enum Model {
    Trained(Box<Checkpoint>),
    Fixed(CostFunctionNetwork),
}

impl Model {
    /// Reads a checkpoint or a network file, told apart by their keys.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("params").is_some() {
            let ckpt: Checkpoint = serde_json::from_value(value)?;
            if ckpt.version != crate::mlp::CHECKPOINT_VERSION {
                return Err(Error::Config(format!("checkpoint version {} not supported", ckpt.version)));
            }
            Ok(Model::Trained(Box::new(ckpt)))
        } else {
            Ok(Model::Fixed(CostFunctionNetwork::from_json(&text)?))
        }
    }

    pub fn network(&self) -> Result<CostFunctionNetwork> {
        match self {
            Model::Trained(c) => predict_network(&c.params),
            Model::Fixed(net) => Ok(net.clone()),
        }
    }

    pub fn size(&self) -> Result<usize> {
        match self {
            Model::Trained(c) => size_of_model(&c.params),
            Model::Fixed(net) => match net.num_vars() {
                16 if net.domains().iter().all(|&d| d == 4) => Ok(4),
                81 if net.domains().iter().all(|&d| d == 9) => Ok(9),
                _ => Err(Error::Structure("network is not a 4x4 or 9x9 grid".into())),
            },
        }
    }
}

/// Gradient of the loss with respect to the network output, plus the L1
/// penalty `lambda * sum |c|` on every predicted cost.
pub fn upstream_gradient(
    features: &PairFeatures,
    output: ArrayView2<'_, f64>,
    report: &LossReport,
    l1_lambda: f64,
) -> (Array2<f64>, f64) {
    let mut up = Array2::zeros(output.raw_dim());
    let mut l1 = 0.0;
    for (p, key) in features.pairs.iter().enumerate() {
        let mut row = up.row_mut(p);
        if let Some(g) = report.grad_pairs.get(key) {
            row.iter_mut().zip(g).for_each(|(u, g)| *u += g);
        }
        if l1_lambda > 0.0 {
            for (u, &c) in row.iter_mut().zip(output.row(p)) {
                l1 += c.abs();
                if c != 0.0 {
                    *u += l1_lambda * c.signum();
                }
            }
        }
    }
    (up, l1_lambda * l1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Exact match with the first stored solution.
    Single,
    /// Match with any stored solution.
    AnyOfKnown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOutcome {
    pub solved: bool,
    pub node_limit_hit: bool,
    pub prediction: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub grids_total: usize,
    pub grids_solved: usize,
    pub node_limit_hits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
    pub outcomes: Vec<GridOutcome>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        if self.grids_total == 0 {
            0.0
        } else {
            self.grids_solved as f64 / self.grids_total as f64
        }
    }
}

/// Conditions `net` on each grid's hints and solves it exactly. A grid whose
/// search hits the node limit counts as unsolved.
pub fn evaluate_network(
    net: &CostFunctionNetwork,
    samples: &[SudokuSample],
    mode: EvalMode,
    solver: &SolverConfig,
) -> Result<EvalReport> {
    let start = Instant::now();
    let mut outcomes = Vec::with_capacity(samples.len());
    for s in samples {
        if s.hints.len() != net.num_vars() {
            return Err(Error::Structure(format!(
                "{}x{} grid given to a network over {} cells",
                s.size,
                s.size,
                net.num_vars()
            )));
        }
        let res = solve(&net.condition(&s.evidence())?, solver);
        let prediction = res.best.0;
        let solved = res.proven_optimal
            && match mode {
                EvalMode::Single => s.solutions.first() == Some(&prediction),
                EvalMode::AnyOfKnown => s.solutions.contains(&prediction),
            };
        outcomes.push(GridOutcome {
            solved,
            node_limit_hit: !res.proven_optimal,
            prediction,
        });
    }
    Ok(EvalReport {
        grids_total: outcomes.len(),
        grids_solved: outcomes.iter().filter(|o| o.solved).count(),
        node_limit_hits: outcomes.iter().filter(|o| o.node_limit_hit).count(),
        wall_clock_s: Some(start.elapsed().as_secs_f64()),
        epochs_run: None,
        outcomes,
    })
}

pub fn evaluate(
    params: &ParamStore,
    samples: &[SudokuSample],
    mode: EvalMode,
    solver: &SolverConfig,
) -> Result<EvalReport> {
    let model = size_of_model(params)?;
    if let Some(s) = samples.iter().find(|s| s.size != model) {
        return Err(Error::Structure(format!(
            "model for {model}x{model} grids evaluated on a {}x{} grid",
            s.size, s.size
        )));
    }
    evaluate_network(&predict_network(params)?, samples, mode, solver)
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
    /// Hinge samples skipped because the solver hit its node limit.
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Latest parameters among those with the best validation accuracy.
    pub checkpoint: Checkpoint,
    pub epochs_run: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<EpochLog>,
    pub wall_clock_s: f64,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    features: PairFeatures,
    params: ParamStore,
    adam: AdamConfig,
    solver: SolverConfig,
}

impl Trainer<'_> {
    /// One gradient step on one grid. Returns the loss, or `None` when a
    /// hinge sample had to be skipped.
    fn step(&mut self, epoch: usize, index: usize, sample: &SudokuSample) -> Result<Option<f64>> {
        let cfg = self.cfg;
        let coords = [epoch as u64, index as u64];
        let shown = sample.solutions.len().min(cfg.max_solutions_shown);
        let choice = if shown > 1 {
            stream_rng(cfg.seed, Stream::SolutionChoice, &coords).random_range(0..shown)
        } else {
            0
        };
        let y = sample.solution(choice);

        let (out, cache) = self.params.forward(self.features.matrix.view())?;
        let non_finite = |detail: String| Error::NonFiniteLoss {
            epoch,
            sample: index,
            detail: format!("{detail}; puzzle {}", sample.puzzle_string()),
        };
        if out.iter().any(|c| !c.is_finite()) {
            return Err(non_finite("network produced a non-finite cost".into()));
        }
        let net = assemble_network(&self.features, out.view())?;

        let report = match cfg.loss {
            LossKind::Npll | LossKind::ENpll => {
                let k = if cfg.loss == LossKind::Npll {
                    MaskSize::Count(0)
                } else {
                    cfg.mask_size()
                };
                let plan = loss::sample_mask(
                    net.num_vars(),
                    k,
                    MaskSeed {
                        global_seed: cfg.seed,
                        epoch: epoch as u64,
                        sample: index as u64,
                    },
                )?;
                let hints = sample.is_hint();
                let opts = PllOptions {
                    plan: Some(&plan),
                    skip_terms: cfg.exclude_hint_terms.then_some(hints.as_slice()),
                };
                loss::pll(&net, &y, opts)?
            }
            LossKind::Hinge => {
                let evidence = self.curriculum_evidence(epoch, index, sample, &y);
                match loss::hinge(&net.condition(&evidence)?, &y, cfg.hinge_margin, &self.solver) {
                    Ok((report, _)) => report,
                    Err(Error::NodeLimit { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
        };

        let (up, l1) = upstream_gradient(&self.features, out.view(), &report, cfg.l1_lambda);
        let value = report.value + l1;
        if !value.is_finite() {
            return Err(non_finite(format!("loss {} plus l1 {l1}", report.value)));
        }
        let grad = self.params.backward(&cache, up.view())?;
        self.params.adam_step(&grad, &self.adam)?;
        Ok(Some(value))
    }

    /// Hints plus extra cells of `y`, leaving `start + step * epoch` cells
    /// free (or all non-hint cells once that is larger).
    fn curriculum_evidence(&self, epoch: usize, index: usize, sample: &SudokuSample, y: &Assignment) -> Vec<(usize, usize)> {
        let cfg = self.cfg;
        let mut evidence = sample.evidence();
        let mut open: Vec<usize> = (0..y.len()).filter(|&c| sample.hints[c].is_none()).collect();
        let free = cfg.hinge_free_start() + cfg.hinge_free_step * epoch;
        if free < open.len() {
            let mut rng = stream_rng(cfg.seed, Stream::Curriculum, &[epoch as u64, index as u64]);
            open.shuffle(&mut rng);
            evidence.extend(open[free..].iter().map(|&c| (c, y[c])));
        }
        evidence
    }
}

/// Trains a model and writes one JSON line per epoch to `log`.
pub fn train(
    cfg: &TrainConfig,
    train_set: &[SudokuSample],
    valid_set: &[SudokuSample],
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(s) = train_set.iter().chain(valid_set).find(|s| s.size != cfg.size) {
        return Err(Error::Config(format!(
            "dataset holds {}x{} grids but the configuration says {}",
            s.size, s.size, cfg.size
        )));
    }
    let start = Instant::now();
    let mut init_rng = stream_rng(cfg.seed, Stream::Init, &[]);
    let params = ParamStore::init(cfg.mlp_config(), &mut init_rng)?;
    let mut trainer = Trainer {
        cfg,
        features: PairFeatures::new(cfg.size)?,
        params,
        adam: cfg.adam(),
        solver: cfg.solver(),
    };
    let mut shuffle_rng: ChaCha8Rng = stream_rng(cfg.seed, Stream::Shuffle, &[]);
    let mut best = (f64::NEG_INFINITY, trainer.params.clone());
    let mut since_best = 0usize;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut total, mut counted, mut skipped) = (0.0, 0usize, 0usize);
        for &idx in &order {
            match trainer.step(epoch, idx, &train_set[idx])? {
                Some(v) => {
                    total += v;
                    counted += 1;
                }
                None => skipped += 1,
            }
        }
        let last = epoch + 1 == cfg.max_epochs;
        let val_accuracy = if (epoch + 1) % cfg.eval_every() == 0 || last {
            let net = predict_network(&trainer.params)?;
            Some(evaluate_network(&net, valid_set, EvalMode::AnyOfKnown, &trainer.solver)?.accuracy())
        } else {
            None
        };
        let entry = EpochLog {
            epoch,
            loss: if counted > 0 { total / counted as f64 } else { 0.0 },
            val_accuracy,
            skipped,
            wall_clock_s: (!cfg.deterministic).then(|| start.elapsed().as_secs_f64()),
        };
        serde_json::to_writer(&mut *log, &entry)?;
        writeln!(log)?;
        history.push(entry);

        if let Some(acc) = val_accuracy {
            if acc > best.0 {
                since_best = 0;
            } else {
                since_best += cfg.eval_every();
            }
            if acc >= best.0 {
                best = (acc, trainer.params.clone());
            }
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let epochs_run = history.len();
    let best_val_accuracy = if epochs_run == 0 { 0.0 } else { best.0 };
    let mut checkpoint = Checkpoint::new(best.1, shuffle_rng);
    checkpoint.meta.insert("size".into(), json!(cfg.size));
    checkpoint.meta.insert("epochs_run".into(), json!(epochs_run));
    checkpoint.meta.insert("best_val_accuracy".into(), json!(best_val_accuracy));
    checkpoint.meta.insert("train_config".into(), serde_json::to_value(cfg)?);
    Ok(TrainOutcome {
        checkpoint,
        epochs_run,
        best_val_accuracy,
        history,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Loads the datasets named in the configuration.
pub fn load_datasets(cfg: &TrainConfig) -> Result<(Vec<SudokuSample>, Vec<SudokuSample>, Vec<SudokuSample>)> {
    let load = |p: &Option<PathBuf>, what: &str| match p {
        Some(p) => sudoku::load_dataset(p),
        None => Err(Error::Config(format!("no {what} dataset given"))),
    };
    let train = load(&cfg.train, "training")?;
    let valid = load(&cfg.valid, "validation")?;
    let test = match &cfg.test {
        Some(p) => sudoku::load_dataset(p)?,
        None => Vec::new(),
    };
    Ok((train, valid, test))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRun {
    pub k: MaskSize,
    pub seed: u64,
    pub epochs_run: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub solved_all: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub log: Vec<u8>,
    #[serde(skip)]
    pub checkpoint: Option<Checkpoint>,
}

/// Trains one model per `(k, seed)` and scores it on `test`. A failed run is
/// recorded with its error and the sweep moves on.
pub fn sweep_k(
    base: &TrainConfig,
    ks: &[MaskSize],
    seeds: &[u64],
    train_set: &[SudokuSample],
    valid_set: &[SudokuSample],
    test_set: &[SudokuSample],
    mut on_run: impl FnMut(&SweepRun),
) -> Vec<SweepRun> {
    let mut runs = Vec::with_capacity(ks.len() * seeds.len());
    for &k in ks {
        for &seed in seeds {
            let cfg = TrainConfig {
                k: Some(k),
                seed,
                ..base.clone()
            };
            let mut log = Vec::new();
            let result = train(&cfg, train_set, valid_set, &mut log).and_then(|out| {
                let report = evaluate(&out.checkpoint.params, test_set, EvalMode::AnyOfKnown, &cfg.solver())?;
                Ok((out, report))
            });
            let run = match result {
                Ok((out, report)) => SweepRun {
                    k,
                    seed,
                    epochs_run: out.epochs_run,
                    wall_clock_s: (!cfg.deterministic).then_some(out.wall_clock_s),
                    val_accuracy: out.best_val_accuracy,
                    test_accuracy: report.accuracy(),
                    solved_all: report.grids_total > 0 && report.grids_solved == report.grids_total,
                    error: None,
                    log,
                    checkpoint: Some(out.checkpoint),
                },
                Err(e) => SweepRun {
                    k,
                    seed,
                    epochs_run: 0,
                    wall_clock_s: None,
                    val_accuracy: 0.0,
                    test_accuracy: 0.0,
                    solved_all: false,
                    error: Some(e.to_string()),
                    log,
                    checkpoint: None,
                },
            };
            on_run(&run);
            runs.push(run);
        }
    }
    runs
}

/// Per-run rows: `k,seed,epochs,wall_clock_s,val_accuracy,test_accuracy,solved_all,error`.
pub fn write_sweep_runs_csv(out: impl Write, runs: &[SweepRun]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["k", "seed", "epochs", "wall_clock_s", "val_accuracy", "test_accuracy", "solved_all", "error"])?;
    for r in runs {
        wtr.write_record([
            r.k.to_string(),
            r.seed.to_string(),
            r.epochs_run.to_string(),
            r.wall_clock_s.map_or(String::new(), |t| format!("{t:.3}")),
            r.val_accuracy.to_string(),
            r.test_accuracy.to_string(),
            r.solved_all.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub k: MaskSize,
    pub runs: usize,
    pub runs_solved: usize,
    pub mean_epochs: f64,
    pub mean_wall_clock_s: Option<f64>,
}

impl SweepSummary {
    pub fn percent_solved(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            100.0 * self.runs_solved as f64 / self.runs as f64
        }
    }
}

/// One row per k, in the order the values first appear.
pub fn summarize_sweep(runs: &[SweepRun]) -> Vec<SweepSummary> {
    let mut ks: Vec<MaskSize> = Vec::new();
    for r in runs {
        if !ks.contains(&r.k) {
            ks.push(r.k);
        }
    }
    ks.into_iter()
        .map(|k| {
            let rows: Vec<&SweepRun> = runs.iter().filter(|r| r.k == k).collect();
            let n = rows.len() as f64;
            let times: Vec<f64> = rows.iter().filter_map(|r| r.wall_clock_s).collect();
            SweepSummary {
                k,
                runs: rows.len(),
                runs_solved: rows.iter().filter(|r| r.solved_all).count(),
                mean_epochs: rows.iter().map(|r| r.epochs_run as f64).sum::<f64>() / n,
                mean_wall_clock_s: (times.len() == rows.len()).then(|| times.iter().sum::<f64>() / n),
            }
        })
        .collect()
}

/// `k,epochs,time_s,runs_solved_percent`
pub fn write_sweep_summary_csv(out: impl Write, summary: &[SweepSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["k", "epochs", "time_s", "runs_solved_percent"])?;
    for s in summary {
        wtr.write_record([
            s.k.to_string(),
            format!("{:.1}", s.mean_epochs),
            s.mean_wall_clock_s.map_or("-".to_string(), |t| format!("{t:.1}")),
            format!("{:.0}", s.percent_solved()),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Learned solution set against the true one for a single grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetComparison {
    pub equal: bool,
    pub learned: usize,
    pub truth: usize,
    pub missing: Vec<Vec<usize>>,
    pub extra: Vec<Vec<usize>>,
    /// An enumeration was truncated or stopped, so the sets may be incomplete.
    pub partial: bool,
}

fn solution_set(net: &CostFunctionNetwork, max_solutions: usize) -> Result<(BTreeSet<Vec<usize>>, bool)> {
    let cfg = SolverConfig::default()
        .with_order(VariableOrder::MinDomainThenIndex)
        .enumerating(0.0, max_solutions);
    let e = enumerate(net, &cfg)?;
    let complete = e.is_complete();
    Ok((e.solutions.into_iter().map(|(a, _)| a.0).collect(), complete))
}

/// Thresholds `net` at `tau`, conditions on the grid's hints and enumerates
/// every zero-cost completion, then compares with the completions allowed by
/// the true rules.
pub fn enumerate_learned(
    net: &CostFunctionNetwork,
    sample: &SudokuSample,
    tau: f64,
    max_solutions: usize,
) -> Result<SetComparison> {
    let evidence = sample.evidence();
    let hard = net.threshold_to_boolean(tau).condition(&evidence)?;
    let (learned, learned_complete) = solution_set(&hard, max_solutions)?;
    let rules = sudoku::true_rules(sample.size)?.condition(&evidence)?;
    let (truth, truth_complete) = solution_set(&rules, max_solutions)?;
    let missing: Vec<Vec<usize>> = truth.difference(&learned).cloned().collect();
    let extra: Vec<Vec<usize>> = learned.difference(&truth).cloned().collect();
    Ok(SetComparison {
        equal: missing.is_empty() && extra.is_empty(),
        learned: learned.len(),
        truth: truth.len(),
        missing,
        extra,
        partial: !(learned_complete && truth_complete),
    })
}

fn difference_network(size: usize, constraints: &[(usize, usize)]) -> Result<CostFunctionNetwork> {
    let mut net = CostFunctionNetwork::new(vec![size; size * size]);
    let mut diff = CostMatrix::zeros(size, size);
    for v in 0..size {
        diff.set(v, v, net.top());
    }
    for &(i, j) in constraints {
        net.set_pair(i, j, diff.clone())?;
    }
    Ok(net)
}

/// Number of complete grids accepted by a set of difference constraints,
/// stopping past `max`.
pub fn count_grids(size: usize, constraints: &[(usize, usize)], max: usize) -> Result<usize> {
    Ok(solution_set(&difference_network(size, constraints)?, max)?.0.len())
}

/// Greedily drops constraints (in `order`) whose removal keeps the set of
/// accepted grids unchanged. Removing a constraint can only add grids, so
/// equality is checked by counting. Only 4x4 grids are small enough.
pub fn irredundant_rules(size: usize, order: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    if size != 4 {
        return Err(Error::Config("redundancy elimination enumerates every grid; 4x4 only".into()));
    }
    let target = count_grids(size, order, usize::MAX)?;
    let mut kept: Vec<(usize, usize)> = order.to_vec();
    let mut idx = 0;
    while idx < kept.len() {
        let mut trial = kept.clone();
        trial.remove(idx);
        if count_grids(size, &trial, target + 1)? == target {
            kept = trial;
        } else {
            idx += 1;
        }
    }
    Ok(kept)
}

/// Smallest irredundant subset of the true rules found over `attempts`
/// random removal orders.
pub fn min_irredundant_rule_count(size: usize, attempts: usize, seed: u64) -> Result<usize> {
    let mut best = usize::MAX;
    for a in 0..attempts.max(1) {
        let mut order = sudoku::unit_pairs(size);
        order.shuffle(&mut stream_rng(seed, Stream::Data, &[a as u64]));
        best = best.min(irredundant_rules(size, &order)?.len());
    }
    Ok(best)
}
