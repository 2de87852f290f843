//! Pseudo-likelihood and Hinge losses on a predicted network.
//!
//! For variable `i` observed in context `y`, the message vector is
//! `m_i(v) = unary_i(v) + sum_j C[i,j](v, y_j)` and the conditional is
//! `softmax(-m_i)`. NPLL sums `-log P(y_i | y_-i)` over all variables. E-NPLL
//! does the same but drops, for each `i`, the messages coming from a random
//! set `M_i` of other variables.
//!
//! Gradients are taken with respect to every stored cost entry. An entry
//! `C[i,j](a, b)` collects `1[a = y_i, b = y_j] - P_i(a) 1[b = y_j]` from the
//! term of `i` (unless `j` is masked for `i`) and the mirrored quantity from
//! the term of `j`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::cfn::{sat_add, Assignment, Cost, CostFunctionNetwork, CostMatrix};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::solver::{hinge_argmin, SolverConfig};

/// How many incoming messages each variable loses. Written as `3` or `10%`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskSize {
    Count(usize),
    /// Percentage of the `n - 1` other variables, rounded to nearest.
    Percent(f64),
}

impl fmt::Display for MaskSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskSize::Count(k) => write!(f, "{k}"),
            MaskSize::Percent(p) => write!(f, "{p}%"),
        }
    }
}

impl FromStr for MaskSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("mask size {s:?} is neither a count nor a percentage"));
        match s.strip_suffix('%') {
            Some(p) => p.trim().parse().map(MaskSize::Percent).map_err(|_| bad()),
            None => s.parse().map(MaskSize::Count).map_err(|_| bad()),
        }
    }
}

impl Serialize for MaskSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MaskSize::Count(k) => s.serialize_u64(*k as u64),
            MaskSize::Percent(_) => s.collect_str(self),
        }
    }
}

impl<'de> Deserialize<'de> for MaskSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct MaskVisitor;

        impl Visitor<'_> for MaskVisitor {
            type Value = MaskSize;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a count or a percentage such as \"10%\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<MaskSize, E> {
                Ok(MaskSize::Count(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<MaskSize, E> {
                usize::try_from(v)
                    .map(MaskSize::Count)
                    .map_err(|_| E::custom("mask size must be non-negative"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<MaskSize, E> {
                v.parse().map_err(E::custom)
            }
        }

        d.deserialize_any(MaskVisitor)
    }
}

impl MaskSize {
    pub fn resolve(self, n: usize) -> Result<usize> {
        let others = n.saturating_sub(1);
        match self {
            MaskSize::Count(k) if k <= others => Ok(k),
            MaskSize::Percent(p) if (0.0..=100.0).contains(&p) => {
                Ok(((p / 100.0) * others as f64).round() as usize)
            }
            other => Err(Error::MaskOutOfRange {
                k: format!("{other:?}"),
                n,
            }),
        }
    }
}

/// Seed material for one mask: the same triple always yields the same plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskSeed {
    pub global_seed: u64,
    pub epoch: u64,
    pub sample: u64,
}

/// Per-variable sets of muted neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    excluded: Vec<Vec<usize>>,
}

impl MaskPlan {
    pub fn empty(n: usize) -> Self {
        Self {
            excluded: vec![Vec::new(); n],
        }
    }

    /// Every variable ignores every other one.
    pub fn full(n: usize) -> Self {
        Self {
            excluded: (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect(),
        }
    }

    pub fn from_sets(mut excluded: Vec<Vec<usize>>) -> Result<Self> {
        let n = excluded.len();
        for (i, set) in excluded.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.iter().any(|&j| j == i || j >= n) {
                return Err(Error::Structure(format!("mask of variable {i} contains {i} or an unknown variable")));
            }
        }
        Ok(Self { excluded })
    }

    pub fn num_vars(&self) -> usize {
        self.excluded.len()
    }

    pub fn excluded(&self, i: usize) -> &[usize] {
        &self.excluded[i]
    }
}

/// Draws `M_i` uniformly without replacement for every variable. Each
/// variable has its own stream keyed by (seed, epoch, sample, variable).
pub fn sample_mask(n: usize, k: MaskSize, seed: MaskSeed) -> Result<MaskPlan> {
    let k = k.resolve(n)?;
    if k == 0 {
        return Ok(MaskPlan::empty(n));
    }
    let excluded = (0..n)
        .map(|i| {
            let mut rng = stream_rng(
                seed.global_seed,
                Stream::Mask,
                &[seed.epoch, seed.sample, i as u64],
            );
            let mut set: Vec<usize> = sample(&mut rng, n - 1, k)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect();
            set.sort_unstable();
            set
        })
        .collect();
    Ok(MaskPlan { excluded })
}

/// Loss value with gradients shaped like the network's tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    /// Row-major, same shape as the stored matrix for each canonical pair.
    pub grad_pairs: BTreeMap<(usize, usize), Vec<f64>>,
    pub grad_unaries: BTreeMap<usize, Vec<f64>>,
}

impl LossReport {
    fn zeros_like(net: &CostFunctionNetwork) -> Self {
        Self {
            value: 0.0,
            grad_pairs: net
                .pairs()
                .map(|(k, m)| (k, vec![0.0; m.rows() * m.cols()]))
                .collect(),
            grad_unaries: net.unaries().map(|(i, u)| (i, vec![0.0; u.len()])).collect(),
        }
    }
}

/// Stored matrices incident to each variable, with orientation.
struct Incidence<'a> {
    lists: Vec<Vec<(usize, &'a CostMatrix, bool)>>,
}

impl<'a> Incidence<'a> {
    fn new(net: &'a CostFunctionNetwork) -> Self {
        let mut lists = vec![Vec::new(); net.num_vars()];
        for ((i, j), m) in net.pairs() {
            lists[i].push((j, m, true));
            lists[j].push((i, m, false));
        }
        Self { lists }
    }
}

fn messages_with(
    net: &CostFunctionNetwork,
    inc: &Incidence<'_>,
    y: &[usize],
    i: usize,
    muted: &[bool],
) -> Vec<Cost> {
    let top = net.top();
    let mut m: Vec<Cost> = match net.unary(i) {
        Some(u) => u.to_vec(),
        None => vec![0.0; net.domain(i)],
    };
    for &(j, mat, i_is_row) in &inc.lists[i] {
        if muted[j] {
            continue;
        }
        for (v, slot) in m.iter_mut().enumerate() {
            let c = if i_is_row { mat.get(v, y[j]) } else { mat.get(y[j], v) };
            *slot = sat_add(*slot, c, top);
        }
    }
    m
}

fn mute_flags(n: usize, excluded: &[usize]) -> Vec<bool> {
    let mut muted = vec![false; n];
    for &j in excluded {
        if j < n {
            muted[j] = true;
        }
    }
    muted
}

/// Message vector of variable `i` given the other values of `y`, ignoring
/// the neighbors in `excluded`.
pub fn messages(
    net: &CostFunctionNetwork,
    y: &Assignment,
    i: usize,
    excluded: &[usize],
) -> Result<Vec<Cost>> {
    net.check_assignment(y)?;
    let inc = Incidence::new(net);
    Ok(messages_with(net, &inc, y.values(), i, &mute_flags(net.num_vars(), excluded)))
}

/// `softmax(-m)` with the minimum subtracted first. Values at `top` get
/// exactly zero probability unless every value is at `top`.
pub fn softmax_neg(m: &[Cost], top: Cost) -> Vec<f64> {
    let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
    let all_top = lo >= top;
    let w: Vec<f64> = m
        .iter()
        .map(|&c| if c >= top && !all_top { 0.0 } else { (-(c - lo)).exp() })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// `-log softmax(-m)[v]`, stabilized.
fn neg_log_prob(m: &[Cost], v: usize, top: Cost) -> f64 {
    let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
    if lo >= top {
        return (m.len() as f64).ln();
    }
    let z: f64 = m
        .iter()
        .filter(|&&c| c < top)
        .map(|&c| (-(c - lo)).exp())
        .sum();
    (m[v] - lo) + z.ln()
}

pub fn conditional_distribution(
    net: &CostFunctionNetwork,
    y: &Assignment,
    i: usize,
    excluded: &[usize],
) -> Result<Vec<f64>> {
    let m = messages(net, y, i, excluded)?;
    Ok(softmax_neg(&m, net.top()))
}

/// Options shared by NPLL and E-NPLL.
#[derive(Debug, Clone, Copy, Default)]
pub struct PllOptions<'a> {
    pub plan: Option<&'a MaskPlan>,
    /// Variables whose own term is left out of the sum (their matrices still
    /// feed the other terms).
    pub skip_terms: Option<&'a [bool]>,
}

/// Pseudo-loglikelihood with optional masks and skipped terms.
pub fn pll(net: &CostFunctionNetwork, y: &Assignment, opts: PllOptions<'_>) -> Result<LossReport> {
    net.check_assignment(y)?;
    let n = net.num_vars();
    if let Some(plan) = opts.plan {
        if plan.num_vars() != n {
            return Err(Error::Structure(format!(
                "mask plan covers {} variables, network has {n}",
                plan.num_vars()
            )));
        }
    }
    if let Some(skip) = opts.skip_terms {
        if skip.len() != n {
            return Err(Error::Structure("skip_terms length differs from variable count".into()));
        }
    }
    let top = net.top();
    let inc = Incidence::new(net);
    let y = y.values();
    let mut report = LossReport::zeros_like(net);
    let mut muted = vec![false; n];

    for i in 0..n {
        if opts.skip_terms.is_some_and(|s| s[i]) {
            continue;
        }
        let excluded = opts.plan.map_or(&[][..], |p| p.excluded(i));
        for &j in excluded {
            muted[j] = true;
        }
        let m = messages_with(net, &inc, y, i, &muted);
        let p = softmax_neg(&m, top);
        report.value += neg_log_prob(&m, y[i], top);

        // d(-log P_i(y_i)) / d m_i(a) = 1[a = y_i] - P_i(a)
        let dm: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(a, &pa)| if a == y[i] { 1.0 - pa } else { -pa })
            .collect();
        if let Some(g) = report.grad_unaries.get_mut(&i) {
            for (ga, d) in g.iter_mut().zip(&dm) {
                *ga += d;
            }
        }
        for &(j, mat, i_is_row) in &inc.lists[i] {
            if muted[j] {
                continue;
            }
            let key = if i_is_row { (i, j) } else { (j, i) };
            let g = report.grad_pairs.get_mut(&key).expect("gradient slot for stored pair");
            let cols = mat.cols();
            for (a, d) in dm.iter().enumerate() {
                let idx = if i_is_row { a * cols + y[j] } else { y[j] * cols + a };
                g[idx] += d;
            }
        }
        for &j in excluded {
            muted[j] = false;
        }
    }
    Ok(report)
}

pub fn npll(net: &CostFunctionNetwork, y: &Assignment) -> Result<LossReport> {
    pll(net, y, PllOptions::default())
}

pub fn e_npll(net: &CostFunctionNetwork, y: &Assignment, plan: &MaskPlan) -> Result<LossReport> {
    pll(
        net,
        y,
        PllOptions {
            plan: Some(plan),
            skip_terms: None,
        },
    )
}

/// Hinge loss with Hamming margin:
/// `cost(y) - [cost(y_m) - margin * hamming(y, y_m)]` where `y_m` minimizes
/// the bracket. The gradient is +1 on every entry selected by `y` and -1 on
/// every entry selected by `y_m`.
pub fn hinge(
    net: &CostFunctionNetwork,
    y: &Assignment,
    margin: Cost,
    cfg: &SolverConfig,
) -> Result<(LossReport, Assignment)> {
    let res = hinge_argmin(net, y, margin, cfg)?;
    if !res.proven_optimal {
        return Err(Error::NodeLimit {
            nodes: res.nodes_expanded,
        });
    }
    let ym = res.best;
    let value = net.evaluate(y)? - net.evaluate(&ym)? + margin * y.hamming(&ym) as f64;
    let mut report = LossReport::zeros_like(net);
    report.value = value;
    for (&(i, j), g) in report.grad_pairs.iter_mut() {
        let cols = net.domain(j);
        g[y[i] * cols + y[j]] += 1.0;
        g[ym[i] * cols + ym[j]] -= 1.0;
    }
    for (&i, g) in report.grad_unaries.iter_mut() {
        g[y[i]] += 1.0;
        g[ym[i]] -= 1.0;
    }
    Ok((report, ym))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfn::DEFAULT_TOP;

    fn zero_pair_net(n: usize, d: usize) -> CostFunctionNetwork {
        let mut net = CostFunctionNetwork::new(vec![d; n]);
        for i in 0..n {
            for j in i + 1..n {
                net.set_pair(i, j, CostMatrix::zeros(d, d)).unwrap();
            }
        }
        net
    }

    /// Binary chain with cost 20 on equal values for (0,1) and (2,3) and a
    /// zero matrix on (1,2).
    fn blocking_net() -> CostFunctionNetwork {
        let mut net = CostFunctionNetwork::new(vec![2; 4]);
        let eq20 = CostMatrix::from_rows(&[vec![20.0, 0.0], vec![0.0, 20.0]]).unwrap();
        net.set_pair(0, 1, eq20.clone()).unwrap();
        net.set_pair(1, 2, CostMatrix::zeros(2, 2)).unwrap();
        net.set_pair(2, 3, eq20).unwrap();
        net
    }

    #[test]
    fn zero_net_messages_and_uniform_conditional() {
        let net = zero_pair_net(3, 9);
        let y = Assignment(vec![4, 2, 8]);
        assert_eq!(messages(&net, &y, 1, &[]).unwrap(), vec![0.0; 9]);
        for p in conditional_distribution(&net, &y, 0, &[]).unwrap() {
            assert!((p - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn excluding_all_leaves_unaries() {
        let mut net = blocking_net();
        net.add_unary(1, &[0.5, -1.0]).unwrap();
        let y = Assignment(vec![0, 1, 1, 0]);
        assert_eq!(messages(&net, &y, 1, &[0, 2, 3]).unwrap(), vec![0.5, -1.0]);
    }

    #[test]
    fn top_message_forces_value() {
        let p = softmax_neg(&[0.0, DEFAULT_TOP], DEFAULT_TOP);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn npll_two_zero_binary_vars() {
        let net = zero_pair_net(2, 2);
        let r = npll(&net, &Assignment(vec![0, 0])).unwrap();
        assert!((r.value - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert_eq!(r.grad_pairs[&(0, 1)], vec![1.0, -0.5, -0.5, 0.0]);
    }

    #[test]
    fn npll_blocks_redundant_forbidden_pair() {
        let net = blocking_net();
        let y = Assignment(vec![0, 1, 1, 0]);
        let r = npll(&net, &y).unwrap();
        let g = &r.grad_pairs[&(1, 2)];
        // (0,1) and (1,0) are forbidden by Y1 + Y2 > 1 and touched by the context.
        assert!(g[1].abs() < 1e-6 && g[2].abs() < 1e-6);
        // (0,0) is never reached by this sample's indicators.
        assert_eq!(g[0], 0.0);

        let plan = MaskPlan::from_sets(vec![vec![], vec![0], vec![3], vec![]]).unwrap();
        let e = e_npll(&net, &y, &plan).unwrap();
        let g = &e.grad_pairs[&(1, 2)];
        assert!((g[1] + 0.5).abs() < 1e-12, "{g:?}");
        assert!((g[2] + 0.5).abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn empty_masks_match_npll_exactly() {
        let net = blocking_net();
        let y = Assignment(vec![1, 0, 1, 1]);
        assert_eq!(e_npll(&net, &y, &MaskPlan::empty(4)).unwrap(), npll(&net, &y).unwrap());
    }

    #[test]
    fn full_masks_reduce_to_log_domain_sizes() {
        let net = blocking_net();
        let y = Assignment(vec![1, 0, 1, 1]);
        let r = e_npll(&net, &y, &MaskPlan::full(4)).unwrap();
        assert!((r.value - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert!(r.grad_pairs.values().all(|g| g.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn mask_sizes_and_membership() {
        let plan = sample_mask(81, MaskSize::Count(10), MaskSeed { global_seed: 3, epoch: 1, sample: 7 }).unwrap();
        for i in 0..81 {
            assert_eq!(plan.excluded(i).len(), 10);
            assert!(!plan.excluded(i).contains(&i));
        }
        let zero = sample_mask(81, MaskSize::Count(0), MaskSeed { global_seed: 3, epoch: 1, sample: 7 }).unwrap();
        assert_eq!(zero, MaskPlan::empty(81));
        let pct = sample_mask(11, MaskSize::Percent(25.0), MaskSeed { global_seed: 0, epoch: 0, sample: 0 }).unwrap();
        assert!(pct.excluded.iter().all(|s| s.len() == 3));
    }

    #[test]
    fn mask_regeneration_is_identical() {
        let seed = MaskSeed { global_seed: 11, epoch: 4, sample: 2 };
        let first = sample_mask(16, MaskSize::Count(5), seed).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_mask(16, MaskSize::Count(5), seed).unwrap(), first);
        }
        let other = sample_mask(16, MaskSize::Count(5), MaskSeed { epoch: 5, ..seed }).unwrap();
        assert_ne!(other, first);
    }

    #[test]
    fn mask_out_of_range() {
        let s = MaskSeed { global_seed: 0, epoch: 0, sample: 0 };
        assert!(sample_mask(5, MaskSize::Count(5), s).is_err());
        assert!(sample_mask(5, MaskSize::Percent(101.0), s).is_err());
        assert!(sample_mask(5, MaskSize::Count(4), s).is_ok());
    }

    #[test]
    fn hinge_zero_when_observed_is_unique_optimum() {
        let net = blocking_net();
        // (1,0,1,0) is the unique minimum (cost 0) once values 0 of
        // variables 0 and 2 carry a unary cost.
        let mut net = net;
        net.add_unary(0, &[1.0, 0.0]).unwrap();
        net.add_unary(2, &[1.0, 0.0]).unwrap();
        let y = Assignment(vec![1, 0, 1, 0]);
        let (r, ym) = hinge(&net, &y, 0.0, &SolverConfig::default()).unwrap();
        assert_eq!(ym, y);
        assert_eq!(r.value, 0.0);
        assert!(r.grad_pairs.values().all(|g| g.iter().all(|&x| x == 0.0)));
        assert!(r.grad_unaries.values().all(|g| g.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn skipped_terms_drop_out() {
        let net = blocking_net();
        let y = Assignment(vec![0, 1, 1, 0]);
        let skip = [true, false, false, true];
        let r = pll(&net, &y, PllOptions { plan: None, skip_terms: Some(&skip) }).unwrap();
        let full = npll(&net, &y).unwrap();
        assert!(r.value < full.value);
    }
}
