//! Exact minimization and bounded enumeration over pairwise networks.
//!
//! Depth-first branch and bound. At every node the lower bound is
//!
//! ```text
//! acc + offset + sum over unassigned i of min_a (unary_i(a) + sum over assigned j of C[i,j](a, y_j))
//! ```
//!
//! where pair matrices have first been shifted so their smallest entry is
//! zero (the shifts are collected in `offset`). The shift keeps the bound
//! valid when learned costs are negative.
//!
//! Among co-optimal assignments the lexicographically smallest one (in
//! variable index order) is returned, whatever the branching order.

use serde::{Deserialize, Serialize};

use crate::cfn::{sat_add, Assignment, Cost, CostFunctionNetwork};
use crate::error::{Error, Result};

/// Largest search space [`brute_force`] agrees to scan.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VariableOrder {
    /// Decreasing number of non-zero incident matrices, ties by index.
    #[default]
    StaticDegree,
    /// Fewest values that can still lead below the current bound, ties by index.
    MinDomainThenIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// 0 means unlimited.
    pub node_limit: u64,
    pub enumeration_bound: Cost,
    pub max_solutions: usize,
    pub variable_order: VariableOrder,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            node_limit: 100_000_000,
            enumeration_bound: 0.0,
            max_solutions: 1000,
            variable_order: VariableOrder::StaticDegree,
        }
    }
}

impl SolverConfig {
    pub fn with_order(mut self, order: VariableOrder) -> Self {
        self.variable_order = order;
        self
    }

    pub fn enumerating(mut self, bound: Cost, max_solutions: usize) -> Self {
        self.enumeration_bound = bound;
        self.max_solutions = max_solutions;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub best: Assignment,
    /// `top` when no assignment costs less than `top`.
    pub best_cost: Cost,
    pub nodes_expanded: u64,
    pub proven_optimal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    /// Sorted lexicographically.
    pub solutions: Vec<(Assignment, Cost)>,
    /// More than `max_solutions` assignments are within the bound. The kept
    /// ones are the first found in search order.
    pub truncated: bool,
    /// The node limit stopped the search before it was exhaustive.
    pub node_limit_hit: bool,
    pub nodes_expanded: u64,
}

impl Enumeration {
    pub fn is_complete(&self) -> bool {
        !self.truncated && !self.node_limit_hit
    }
}

enum Mode {
    Optimize { best: Vec<usize>, best_cost: Cost },
    Enumerate { bound: Cost, max: usize, found: Vec<(Assignment, Cost)>, truncated: bool },
}

struct Search<'a> {
    net: &'a CostFunctionNetwork,
    top: Cost,
    n: usize,
    domains: Vec<usize>,
    /// Start of each variable's slice in the flat delta vector.
    slot: Vec<usize>,
    width: usize,
    base_delta: Vec<Cost>,
    /// For each i: neighbors j with the shifted matrix oriented as rows = values of i.
    adj: Vec<Vec<(usize, Vec<Cost>)>>,
    offset: Cost,
    static_order: Vec<usize>,
    order: VariableOrder,
    node_limit: u64,
    nodes: u64,
    aborted: bool,
    stop: bool,
    values: Vec<usize>,
    assigned: Vec<bool>,
    mode: Mode,
}

impl<'a> Search<'a> {
    fn new(net: &'a CostFunctionNetwork, cfg: &SolverConfig, mode: Mode) -> Self {
        let n = net.num_vars();
        let top = net.top();
        let domains = net.domains().to_vec();
        let mut slot = Vec::with_capacity(n);
        let mut width = 0;
        for &d in &domains {
            slot.push(width);
            width += d;
        }
        let mut base_delta = vec![0.0; width];
        for (i, u) in net.unaries() {
            base_delta[slot[i]..slot[i] + domains[i]].copy_from_slice(u);
        }

        let mut adj: Vec<Vec<(usize, Vec<Cost>)>> = vec![Vec::new(); n];
        let mut degree = vec![0usize; n];
        let mut offset = 0.0;
        for ((i, j), m) in net.pairs() {
            if m.is_zero() {
                continue;
            }
            degree[i] += 1;
            degree[j] += 1;
            let finite_min = m
                .as_slice()
                .iter()
                .copied()
                .filter(|&c| c < top)
                .fold(f64::INFINITY, f64::min);
            let shift = if finite_min.is_finite() { finite_min } else { top };
            offset = sat_add(offset, shift, top);
            let shifted = |c: Cost| if c >= top || shift >= top { top } else { c - shift };
            let (di, dj) = (domains[i], domains[j]);
            let mut fwd = Vec::with_capacity(di * dj);
            let mut bwd = vec![0.0; di * dj];
            for a in 0..di {
                for b in 0..dj {
                    let c = shifted(m.get(a, b));
                    fwd.push(c);
                    bwd[b * di + a] = c;
                }
            }
            adj[i].push((j, fwd));
            adj[j].push((i, bwd));
        }

        let mut static_order: Vec<usize> = (0..n).collect();
        static_order.sort_by_key(|&i| (std::cmp::Reverse(degree[i]), i));

        Self {
            net,
            top,
            n,
            domains,
            slot,
            width,
            base_delta,
            adj,
            offset,
            static_order,
            order: cfg.variable_order,
            node_limit: cfg.node_limit,
            nodes: 0,
            aborted: false,
            stop: false,
            values: vec![0; n],
            assigned: vec![false; n],
            mode,
        }
    }

    fn tolerance(x: Cost) -> Cost {
        1e-9 * x.abs().max(1.0)
    }

    /// Can some completion of the current partial assignment be
    /// lexicographically smaller than the incumbent?
    fn lex_can_improve(&self, best: &[usize]) -> bool {
        for i in 0..self.n {
            if self.assigned[i] {
                match self.values[i].cmp(&best[i]) {
                    std::cmp::Ordering::Less => return true,
                    std::cmp::Ordering::Greater => return false,
                    std::cmp::Ordering::Equal => {}
                }
            } else if best[i] > 0 {
                return true;
            }
        }
        false
    }

    fn threshold(&self) -> Cost {
        match &self.mode {
            Mode::Optimize { best_cost, .. } => *best_cost,
            Mode::Enumerate { bound, .. } => *bound,
        }
    }

    fn prunable(&self, lb: Cost) -> bool {
        match &self.mode {
            Mode::Optimize { best, best_cost } => {
                let tol = Self::tolerance(*best_cost);
                if lb > best_cost + tol {
                    true
                } else if lb >= best_cost - tol {
                    !self.lex_can_improve(best)
                } else {
                    false
                }
            }
            Mode::Enumerate { bound, .. } => lb > bound + Self::tolerance(*bound) || lb >= self.top,
        }
    }

    fn var_slice<'d>(&self, delta: &'d [Cost], i: usize) -> &'d [Cost] {
        &delta[self.slot[i]..self.slot[i] + self.domains[i]]
    }

    fn leaf(&mut self) {
        let cost = self.net.evaluate_unchecked(&self.values);
        let top = self.top;
        match &mut self.mode {
            Mode::Optimize { best, best_cost } => {
                if cost < *best_cost || (cost == *best_cost && self.values < *best) {
                    best.copy_from_slice(&self.values);
                    *best_cost = cost;
                }
            }
            Mode::Enumerate { bound, max, found, truncated } => {
                if cost <= *bound && cost < top {
                    if found.len() == *max {
                        *truncated = true;
                    } else {
                        found.push((Assignment(self.values.clone()), cost));
                    }
                }
                if *truncated {
                    self.stop = true;
                }
            }
        }
    }

    fn dfs(&mut self, delta: &[Cost], acc: Cost, depth: usize) {
        if self.stop {
            return;
        }
        self.nodes += 1;
        if self.node_limit > 0 && self.nodes > self.node_limit {
            self.aborted = true;
            self.stop = true;
            return;
        }
        if depth == self.n {
            self.leaf();
            return;
        }

        let top = self.top;
        let mut lb = sat_add(acc, self.offset, top);
        let mut mins = vec![0.0; self.n];
        for i in 0..self.n {
            if self.assigned[i] {
                continue;
            }
            let m = self.var_slice(delta, i).iter().copied().fold(f64::INFINITY, f64::min);
            mins[i] = m;
            lb = sat_add(lb, m, top);
        }
        if self.prunable(lb) {
            return;
        }

        let var = match self.order {
            VariableOrder::StaticDegree => *self
                .static_order
                .iter()
                .find(|&&i| !self.assigned[i])
                .expect("unassigned variable below full depth"),
            VariableOrder::MinDomainThenIndex => {
                let limit = self.threshold();
                let limit = limit + Self::tolerance(limit);
                let mut pick = (usize::MAX, usize::MAX);
                for i in 0..self.n {
                    if self.assigned[i] {
                        continue;
                    }
                    let rest = lb - mins[i];
                    let alive = self
                        .var_slice(delta, i)
                        .iter()
                        .filter(|&&c| c < top && sat_add(rest, c, top) <= limit)
                        .count();
                    if alive < pick.0 {
                        pick = (alive, i);
                    }
                }
                pick.1
            }
        };

        let mut order: Vec<usize> = (0..self.domains[var]).collect();
        {
            let costs = self.var_slice(delta, var);
            order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
        }

        let mut child = vec![0.0; self.width];
        for a in order {
            if self.stop {
                return;
            }
            let c = delta[self.slot[var] + a];
            if c >= top {
                continue;
            }
            child.copy_from_slice(delta);
            for (j, table) in &self.adj[var] {
                if self.assigned[*j] {
                    continue;
                }
                let dj = self.domains[*j];
                let row = &table[a * dj..(a + 1) * dj];
                let s = self.slot[*j];
                for (slot, &x) in child[s..s + dj].iter_mut().zip(row) {
                    *slot = sat_add(*slot, x, top);
                }
            }
            self.assigned[var] = true;
            self.values[var] = a;
            self.dfs(&child, sat_add(acc, c, top), depth + 1);
            self.assigned[var] = false;
            self.values[var] = 0;
        }
    }

    fn run(&mut self) {
        let delta = self.base_delta.clone();
        self.dfs(&delta, 0.0, 0);
    }
}

/// Minimum-cost assignment by depth-first branch and bound.
pub fn solve(net: &CostFunctionNetwork, cfg: &SolverConfig) -> SolveResult {
    let n = net.num_vars();
    // The all-zero assignment is the lexicographic minimum, so starting from
    // it settles every tie in its favour and gives infeasible networks a
    // well-defined answer.
    let zeros = vec![0; n];
    let zero_cost = net.evaluate_unchecked(&zeros);
    let mut search = Search::new(
        net,
        cfg,
        Mode::Optimize {
            best: zeros,
            best_cost: zero_cost,
        },
    );
    search.run();
    let nodes = search.nodes;
    let aborted = search.aborted;
    match search.mode {
        Mode::Optimize { best, best_cost } => SolveResult {
            best: Assignment(best),
            best_cost,
            nodes_expanded: nodes,
            proven_optimal: !aborted,
        },
        Mode::Enumerate { .. } => unreachable!(),
    }
}

/// All assignments costing at most `cfg.enumeration_bound`, at most
/// `cfg.max_solutions` of them, in lexicographic order.
pub fn enumerate(net: &CostFunctionNetwork, cfg: &SolverConfig) -> Result<Enumeration> {
    if cfg.enumeration_bound >= net.top() {
        return Err(Error::BoundNotBelowTop {
            bound: cfg.enumeration_bound,
            top: net.top(),
        });
    }
    if cfg.max_solutions == 0 {
        return Err(Error::Config("max_solutions must be at least 1".into()));
    }
    let mut search = Search::new(
        net,
        cfg,
        Mode::Enumerate {
            bound: cfg.enumeration_bound,
            max: cfg.max_solutions,
            found: Vec::new(),
            truncated: false,
        },
    );
    search.run();
    let nodes = search.nodes;
    let aborted = search.aborted;
    match search.mode {
        Mode::Enumerate { mut found, truncated, .. } => {
            found.sort_by(|a, b| a.0.cmp(&b.0));
            Ok(Enumeration {
                solutions: found,
                truncated,
                node_limit_hit: aborted,
                nodes_expanded: nodes,
            })
        }
        Mode::Optimize { .. } => unreachable!(),
    }
}

/// Exhaustive scan in lexicographic order. Test oracle for [`solve`].
pub fn brute_force(net: &CostFunctionNetwork) -> Result<SolveResult> {
    let size: f64 = net.domains().iter().map(|&d| d as f64).product();
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let n = net.num_vars();
    let mut y = vec![0usize; n];
    let mut best = y.clone();
    let mut best_cost = net.evaluate_unchecked(&y);
    let mut visited = 1u64;
    if net.domains().contains(&0) {
        return Err(Error::Structure("empty domain".into()));
    }
    loop {
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(SolveResult {
                    best: Assignment(best),
                    best_cost,
                    nodes_expanded: visited,
                    proven_optimal: true,
                });
            }
            k -= 1;
            y[k] += 1;
            if y[k] < net.domain(k) {
                break;
            }
            y[k] = 0;
        }
        visited += 1;
        let c = net.evaluate_unchecked(&y);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&y);
        }
    }
}

/// Loss-augmented inference: minimizes `cost(t) - margin * hamming(y, t)`.
/// The Hamming term enters as unary costs `-margin` on every value that
/// differs from `y`.
pub fn hinge_argmin(
    net: &CostFunctionNetwork,
    y: &Assignment,
    margin: Cost,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if !(margin >= 0.0) {
        return Err(Error::Config(format!("margin must be non-negative, got {margin}")));
    }
    net.check_assignment(y)?;
    if margin == 0.0 {
        return Ok(solve(net, cfg));
    }
    let mut augmented = net.clone();
    for i in 0..net.num_vars() {
        let u: Vec<Cost> = (0..net.domain(i))
            .map(|a| if a == y[i] { 0.0 } else { -margin })
            .collect();
        augmented.add_unary(i, &u)?;
    }
    Ok(solve(&augmented, cfg))
}
