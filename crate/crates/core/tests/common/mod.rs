#![allow(dead_code)]

use std::collections::BTreeMap;

use cfn_learn::experiment::{assemble_network, upstream_gradient};
use cfn_learn::loss::{e_npll, hinge, npll, sample_mask, LossReport, MaskSeed, MaskSize};
use cfn_learn::mlp::{MlpConfig, ParamStore};
use cfn_learn::sudoku::{random_full_grid, PairFeatures};
use cfn_learn::solver::{self, Enumeration};
use cfn_learn::{Assignment, Cost, CostFunctionNetwork, CostMatrix, SolverConfig, VariableOrder};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random network: every pair present with probability `density`, costs in
/// [-2, 3], a `top_rate` share of entries set to TOP, optional unaries.
pub fn random_net(
    rng: &mut impl Rng,
    n: usize,
    max_d: usize,
    density: f64,
    top_rate: f64,
    unaries: bool,
) -> CostFunctionNetwork {
    let domains: Vec<usize> = (0..n).map(|_| rng.random_range(1..=max_d)).collect();
    let mut net = CostFunctionNetwork::new(domains.clone());
    let top = net.top();
    let cost = |rng: &mut dyn rand::RngCore| {
        if rng.random_bool(top_rate) {
            top
        } else {
            rng.random_range(-2.0..3.0)
        }
    };
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                let data = (0..domains[i] * domains[j]).map(|_| cost(rng)).collect();
                net.set_pair(i, j, CostMatrix::from_flat(domains[i], domains[j], data).unwrap()).unwrap();
            }
        }
        if unaries && rng.random_bool(0.5) {
            let u: Vec<Cost> = (0..domains[i]).map(|_| cost(rng)).collect();
            net.add_unary(i, &u).unwrap();
        }
    }
    net
}

/// Dense finite network (every pair, no TOP) for gradient checks.
pub fn dense_finite_net(rng: &mut impl Rng, n: usize, max_d: usize) -> CostFunctionNetwork {
    random_net(rng, n, max_d, 1.0, 0.0, true)
}

pub fn random_assignment(rng: &mut impl Rng, net: &CostFunctionNetwork) -> Assignment {
    Assignment(net.domains().iter().map(|&d| rng.random_range(0..d)).collect())
}

/// Every assignment in lexicographic order.
pub fn all_assignments(domains: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &d in domains {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..d).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Independent cost: plain sums, saturated at TOP at the end.
pub fn naive_cost(net: &CostFunctionNetwork, y: &[usize]) -> Cost {
    let top = net.top();
    let mut total = 0.0;
    for (i, u) in net.unaries() {
        if u[y[i]] >= top {
            return top;
        }
        total += u[y[i]];
    }
    for ((i, j), m) in net.pairs() {
        let c = m.get(y[i], y[j]);
        if c >= top {
            return top;
        }
        total += c;
    }
    total.min(top)
}

/// Assignments below TOP costing at most `bound`, lexicographic.
pub fn brute_enumerate(net: &CostFunctionNetwork, bound: Cost) -> Vec<Vec<usize>> {
    all_assignments(net.domains())
        .into_iter()
        .filter(|y| {
            let c = naive_cost(net, y);
            c < net.top() && c <= bound + 1e-9 * bound.abs().max(1.0)
        })
        .collect()
}

/// Optimum by exhaustive scan: lowest cost, lexicographically first.
pub fn brute_min(net: &CostFunctionNetwork) -> (Vec<usize>, Cost) {
    let mut best = (vec![0; net.num_vars()], f64::INFINITY);
    for y in all_assignments(net.domains()) {
        let c = naive_cost(net, &y);
        if c < best.1 {
            best = (y, c);
        }
    }
    best
}

/// Conditional of variable `i` computed from full-assignment costs:
/// P(v) proportional to exp(-cost(y with y_i = v)).
pub fn conditional_by_cost(net: &CostFunctionNetwork, y: &Assignment, i: usize) -> Vec<f64> {
    let costs: Vec<f64> = (0..net.domain(i))
        .map(|v| {
            let mut t = y.0.clone();
            t[i] = v;
            naive_cost(net, &t)
        })
        .collect();
    let m = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = costs.iter().map(|c| (-(c - m)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Central differences of `f` over every pair entry of `net`.
pub fn fd_pair_grad(
    net: &CostFunctionNetwork,
    h: f64,
    f: impl Fn(&CostFunctionNetwork) -> f64,
) -> BTreeMap<(usize, usize), Vec<f64>> {
    let mut out = BTreeMap::new();
    for ((i, j), m) in net.pairs() {
        let mut g = Vec::with_capacity(m.as_slice().len());
        for a in 0..m.rows() {
            for b in 0..m.cols() {
                let shifted = |delta: f64| {
                    let mut copy = net.clone();
                    let mut mm = m.clone();
                    mm.set(a, b, m.get(a, b) + delta);
                    copy.set_pair(i, j, mm).unwrap();
                    f(&copy)
                };
                g.push((shifted(h) - shifted(-h)) / (2.0 * h));
            }
        }
        out.insert((i, j), g);
    }
    out
}

/// `||a - b|| / max(||a||, ||b||, floor)` over flattened vectors.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

pub fn flatten(map: &BTreeMap<(usize, usize), Vec<f64>>) -> Vec<f64> {
    map.values().flatten().copied().collect()
}

/// Pair entries then unary entries, in map order.
pub fn net_params(net: &CostFunctionNetwork) -> Vec<f64> {
    let mut out: Vec<f64> = net.pairs().flat_map(|(_, m)| m.as_slice().to_vec()).collect();
    out.extend(net.unaries().flat_map(|(_, u)| u.to_vec()));
    out
}

/// Same structure as `net` with costs taken from `params` (see [`net_params`]).
pub fn with_params(net: &CostFunctionNetwork, params: &[f64]) -> CostFunctionNetwork {
    let mut out = CostFunctionNetwork::with_top(net.domains().to_vec(), net.top());
    let mut it = params.iter().copied();
    for ((i, j), m) in net.pairs() {
        let data: Vec<f64> = it.by_ref().take(m.as_slice().len()).collect();
        out.set_pair(i, j, CostMatrix::from_flat(m.rows(), m.cols(), data).unwrap()).unwrap();
    }
    for (i, u) in net.unaries() {
        let data: Vec<f64> = it.by_ref().take(u.len()).collect();
        out.add_unary(i, &data).unwrap();
    }
    out
}

/// Central differences over every cost of the network.
pub fn fd_net(net: &CostFunctionNetwork, h: f64, f: impl Fn(&CostFunctionNetwork) -> f64) -> Vec<f64> {
    let p = net_params(net);
    (0..p.len())
        .map(|k| {
            let mut plus = p.clone();
            plus[k] += h;
            let mut minus = p.clone();
            minus[k] -= h;
            (f(&with_params(net, &plus)) - f(&with_params(net, &minus))) / (2.0 * h)
        })
        .collect()
}

pub fn report_grad(r: &LossReport) -> Vec<f64> {
    let mut out: Vec<f64> = r.grad_pairs.values().flatten().copied().collect();
    out.extend(r.grad_unaries.values().flatten().copied());
    out
}

const H: f64 = 1e-5;

fn grad_instance(seed: u64) -> (CostFunctionNetwork, Assignment, ChaCha8Rng) {
    let mut r = rng(seed);
    let n = r.random_range(2..=6);
    let net = dense_finite_net(&mut r, n, 4);
    let y = random_assignment(&mut r, &net);
    (net, y, r)
}

pub fn npll_check(seed: u64) -> f64 {
    let (net, y, _) = grad_instance(seed);
    let analytic = report_grad(&npll(&net, &y).unwrap());
    let fd = fd_net(&net, H, |c| npll(c, &y).unwrap().value);
    rel_err(&analytic, &fd, 1e-6)
}

pub fn e_npll_check(seed: u64) -> f64 {
    let (net, y, mut r) = grad_instance(seed);
    let n = net.num_vars();
    let k = r.random_range(0..n);
    let plan = sample_mask(
        n,
        MaskSize::Count(k),
        MaskSeed {
            global_seed: seed,
            epoch: 0,
            sample: 0,
        },
    )
    .unwrap();
    let analytic = report_grad(&e_npll(&net, &y, &plan).unwrap());
    let fd = fd_net(&net, H, |c| e_npll(c, &y, &plan).unwrap().value);
    rel_err(&analytic, &fd, 1e-6)
}

/// Gap between the best and second-best loss-augmented values.
pub fn augmented_gap(net: &CostFunctionNetwork, y: &Assignment, margin: f64) -> f64 {
    let mut vals: Vec<f64> = all_assignments(net.domains())
        .iter()
        .map(|t| naive_cost(net, t) - margin * y.hamming(&Assignment(t.clone())) as f64)
        .collect();
    vals.sort_by(f64::total_cmp);
    if vals.len() < 2 {
        return f64::INFINITY;
    }
    vals[1] - vals[0]
}

/// `None` when the loss-augmented optimum is not isolated enough for
/// finite differences.
pub fn hinge_check(seed: u64) -> Option<f64> {
    let (net, y, mut r) = grad_instance(seed);
    let margin = r.random_range(0.1..2.0);
    if augmented_gap(&net, &y, margin) < 1e-3 {
        return None;
    }
    let cfg = SolverConfig::default();
    let analytic = report_grad(&hinge(&net, &y, margin, &cfg).unwrap().0);
    let fd = fd_net(&net, H, |c| hinge(c, &y, margin, &cfg).unwrap().0.value);
    Some(rel_err(&analytic, &fd, 1e-6))
}

pub fn l1_check(seed: u64) -> f64 {
    let (net, _, _) = grad_instance(seed);
    let analytic = flatten(&net.l1_gradient());
    let fd = flatten(&fd_pair_grad(&net, H, |c| c.l1_norm().unwrap()));
    rel_err(&analytic, &fd, 1e-6)
}

fn perturbed_biases(params: &mut ParamStore, r: &mut impl Rng) {
    let mut idx = 0;
    for (w, b) in params.weights.clone().iter().zip(params.biases.clone().iter()) {
        idx += w.len();
        for k in 0..b.len() {
            params.set_flat(idx + k, r.random_range(-0.5..0.5));
        }
        idx += b.len();
    }
}

/// Tiny MLP with random shape, random upstream, objective `sum(up * out)`.
pub fn mlp_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let cfg = MlpConfig {
        input_dim: r.random_range(1..=4),
        hidden_width: r.random_range(2..=5),
        hidden_layers: r.random_range(1..=4),
        residual_period: r.random_range(0..=2),
        output_dim: r.random_range(1..=4),
    };
    let mut params = ParamStore::init(cfg.clone(), &mut r).unwrap();
    perturbed_biases(&mut params, &mut r);
    let rows = r.random_range(1..=4);
    let x = Array2::from_shape_fn((rows, cfg.input_dim), |_| r.random_range(-1.0..1.0));
    let up = Array2::from_shape_fn((rows, cfg.output_dim), |_| r.random_range(-1.0..1.0));
    let (_, cache) = params.forward(x.view()).unwrap();
    let analytic = params.backward(&cache, up.view()).unwrap().flatten();
    let objective = |p: &ParamStore| (p.forward(x.view()).unwrap().0 * &up).sum();
    let fd = fd_params(&params, H, objective);
    rel_err(&analytic, &fd, 1e-6)
}

pub fn fd_params(params: &ParamStore, h: f64, f: impl Fn(&ParamStore) -> f64) -> Vec<f64> {
    let flat = params.flatten();
    (0..flat.len())
        .map(|k| {
            let mut p = params.clone();
            p.set_flat(k, flat[k] + h);
            let plus = f(&p);
            p.set_flat(k, flat[k] - h);
            (plus - f(&p)) / (2.0 * h)
        })
        .collect()
}

/// Gradient of E-NPLL plus L1 through a small 4x4 model, against finite
/// differences on every parameter.
pub fn end_to_end_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let features = PairFeatures::new(4).unwrap();
    let cfg = MlpConfig {
        input_dim: features.dim(),
        hidden_width: 6,
        hidden_layers: 2,
        residual_period: 2,
        output_dim: 16,
    };
    let mut params = ParamStore::init(cfg, &mut r).unwrap();
    perturbed_biases(&mut params, &mut r);
    let y = Assignment(random_full_grid(4, &mut r).unwrap());
    let plan = sample_mask(
        16,
        MaskSize::Count(3),
        MaskSeed {
            global_seed: seed,
            epoch: 1,
            sample: 2,
        },
    )
    .unwrap();
    let l1 = 2e-4;
    let objective = |p: &ParamStore| {
        let (out, _) = p.forward(features.matrix.view()).unwrap();
        let net = assemble_network(&features, out.view()).unwrap();
        e_npll(&net, &y, &plan).unwrap().value + l1 * out.iter().map(|c| c.abs()).sum::<f64>()
    };
    let (out, cache) = params.forward(features.matrix.view()).unwrap();
    let net = assemble_network(&features, out.view()).unwrap();
    let report = e_npll(&net, &y, &plan).unwrap();
    let (up, _) = upstream_gradient(&features, out.view(), &report, l1);
    let analytic = params.backward(&cache, up.view()).unwrap().flatten();
    let fd = fd_params(&params, 1e-6, objective);
    rel_err(&analytic, &fd, 1e-8)
}

const ORDERS: [VariableOrder; 2] = [VariableOrder::StaticDegree, VariableOrder::MinDomainThenIndex];

pub fn solutions(e: &Enumeration) -> Vec<Vec<usize>> {
    e.solutions.iter().map(|(a, _)| a.0.clone()).collect()
}

/// Optimum and enumeration of one random network against exhaustive scans.
/// Returns a description of the first disagreement.
pub fn compare_with_brute_force(net: &CostFunctionNetwork) -> Result<(), String> {
    let (best, best_cost) = brute_min(net);
    let lib = solver::brute_force(net).unwrap();
    if lib.best.0 != best || lib.best_cost != best_cost {
        return Err(format!("brute_force {:?}/{} vs oracle {best:?}/{best_cost}", lib.best, lib.best_cost));
    }
    for order in ORDERS {
        let cfg = SolverConfig::default().with_order(order);
        let res = solver::solve(net, &cfg);
        if !res.proven_optimal {
            return Err("search stopped early".into());
        }
        if (res.best_cost - best_cost).abs() > 1e-9 * best_cost.abs().max(1.0) {
            return Err(format!("{order:?}: cost {} vs {best_cost}", res.best_cost));
        }
        if res.best.0 != best {
            return Err(format!("{order:?}: tie broken to {:?}, expected {best:?}", res.best));
        }
        if best_cost < net.top() {
            for slack in [0.0, 0.5, 2.0] {
                let bound = best_cost + slack;
                let e = solver::enumerate(net, &cfg.clone().enumerating(bound, 100_000)).unwrap();
                let want = brute_enumerate(net, bound);
                if solutions(&e) != want || !e.is_complete() {
                    return Err(format!("{order:?}: enumeration at {bound} differs"));
                }
                for (a, c) in &e.solutions {
                    if (naive_cost(net, &a.0) - c).abs() > 1e-9 {
                        return Err("reported cost differs from evaluation".into());
                    }
                }
            }
        }
    }
    Ok(())
}

/// Completions of a Sudoku by bitmask backtracking on the most constrained
/// cell, up to `max`. Independent of the network solver.
pub fn sudoku_completions(size: usize, hints: &[Option<usize>], max: usize) -> Vec<Vec<usize>> {
    let b = (size as f64).sqrt() as usize;
    let n = size * size;
    let unit = |c: usize| (c / size, c % size, (c / size / b) * b + (c % size) / b);
    let mut rows = vec![0u32; size];
    let mut cols = vec![0u32; size];
    let mut boxes = vec![0u32; size];
    let mut grid = vec![usize::MAX; n];
    for (c, h) in hints.iter().enumerate() {
        if let Some(v) = *h {
            let (r, k, x) = unit(c);
            if (rows[r] | cols[k] | boxes[x]) & (1 << v) != 0 {
                return Vec::new();
            }
            rows[r] |= 1 << v;
            cols[k] |= 1 << v;
            boxes[x] |= 1 << v;
            grid[c] = v;
        }
    }
    struct St<'a> {
        size: usize,
        unit: &'a dyn Fn(usize) -> (usize, usize, usize),
        rows: Vec<u32>,
        cols: Vec<u32>,
        boxes: Vec<u32>,
        grid: Vec<usize>,
        out: Vec<Vec<usize>>,
        max: usize,
    }
    fn go(s: &mut St<'_>) {
        if s.out.len() >= s.max {
            return;
        }
        let full = (1u32 << s.size) - 1;
        let mut pick = None;
        let mut fewest = u32::MAX;
        for c in 0..s.grid.len() {
            if s.grid[c] == usize::MAX {
                let (r, k, x) = (s.unit)(c);
                let free = full & !(s.rows[r] | s.cols[k] | s.boxes[x]);
                if free.count_ones() < fewest {
                    fewest = free.count_ones();
                    pick = Some((c, free));
                }
            }
        }
        let Some((c, free)) = pick else {
            s.out.push(s.grid.clone());
            return;
        };
        let (r, k, x) = (s.unit)(c);
        for v in 0..s.size {
            if free & (1 << v) != 0 {
                s.grid[c] = v;
                s.rows[r] |= 1 << v;
                s.cols[k] |= 1 << v;
                s.boxes[x] |= 1 << v;
                go(s);
                s.rows[r] &= !(1 << v);
                s.cols[k] &= !(1 << v);
                s.boxes[x] &= !(1 << v);
                s.grid[c] = usize::MAX;
            }
        }
    }
    let mut s = St {
        size,
        unit: &unit,
        rows,
        cols,
        boxes,
        grid,
        out: Vec::new(),
        max,
    };
    go(&mut s);
    s.out.sort();
    s.out
}
