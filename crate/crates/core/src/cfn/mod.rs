//! Pairwise cost function networks.
//!
//! A network holds `n` discrete variables, at most one unary cost vector per
//! variable and at most one dense cost matrix per unordered pair of
//! variables. Costs are signed reals bounded above by a finite `top`
//! sentinel that stands for infinity: any sum that reaches `top` stays there.
//!
//! Pair matrices are stored under the canonical key `(i, j)` with `i < j`,
//! rows indexed by the value of `i`. Reading the pair as `(j, i)` yields the
//! transpose.

pub mod io;

use std::collections::BTreeMap;

pub use io::{CfnFile, ToulbarExport};

use crate::error::{Error, Result};

pub type Cost = f64;

/// Stand-in for an infinite cost.
pub const DEFAULT_TOP: Cost = 1e9;

/// Adds two costs, saturating at `top`. A `top` operand absorbs everything,
/// including negative costs.
#[inline]
pub fn sat_add(a: Cost, b: Cost, top: Cost) -> Cost {
    if a >= top || b >= top {
        top
    } else {
        let s = a + b;
        if s >= top {
            top
        } else {
            s
        }
    }
}

/// Brings an input cost into the representable range: anything at or above
/// `top` (including `+inf`) becomes exactly `top`.
fn normalize_cost(c: Cost, top: Cost, what: &str) -> Result<Cost> {
    if c.is_nan() {
        return Err(Error::Structure(format!("NaN cost in {what}")));
    }
    if c == f64::NEG_INFINITY {
        return Err(Error::Structure(format!("-inf cost in {what}")));
    }
    Ok(if c >= top { top } else { c })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableSpec {
    pub index: usize,
    pub domain_size: usize,
}

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Cost>,
}

impl CostMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<Cost>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Structure(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Cost>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Structure("ragged cost matrix".into()));
        }
        Self::from_flat(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> Cost {
        self.data[a * self.cols + b]
    }

    pub fn set(&mut self, a: usize, b: usize, c: Cost) {
        self.data[a * self.cols + b] = c;
    }

    pub fn as_slice(&self) -> &[Cost] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<Cost>> {
        self.data.chunks(self.cols.max(1)).map(<[Cost]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for a in 0..self.rows {
            for b in 0..self.cols {
                t.set(b, a, self.get(a, b));
            }
        }
        t
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&c| c == 0.0)
    }

    pub fn map(&self, f: impl Fn(Cost) -> Cost) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&c| f(c)).collect(),
        }
    }
}

/// A full assignment: one value per variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hamming(&self, other: &Assignment) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl std::ops::Index<usize> for Assignment {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostFunctionNetwork {
    domains: Vec<usize>,
    pairs: BTreeMap<(usize, usize), CostMatrix>,
    unaries: BTreeMap<usize, Vec<Cost>>,
    top: Cost,
}

impl CostFunctionNetwork {
    pub fn new(domains: Vec<usize>) -> Self {
        Self::with_top(domains, DEFAULT_TOP)
    }

    pub fn with_top(domains: Vec<usize>, top: Cost) -> Self {
        assert!(top > 0.0 && top.is_finite(), "top must be a positive finite cost");
        Self {
            domains,
            pairs: BTreeMap::new(),
            unaries: BTreeMap::new(),
            top,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    pub fn domain(&self, i: usize) -> usize {
        self.domains[i]
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn variables(&self) -> impl Iterator<Item = VariableSpec> + '_ {
        self.domains
            .iter()
            .enumerate()
            .map(|(index, &domain_size)| VariableSpec { index, domain_size })
    }

    pub fn max_domain(&self) -> usize {
        self.domains.iter().copied().max().unwrap_or(0)
    }

    pub fn top(&self) -> Cost {
        self.top
    }

    fn check_var(&self, i: usize) -> Result<()> {
        if i >= self.domains.len() {
            return Err(Error::Structure(format!(
                "variable {i} out of range for {} variables",
                self.domains.len()
            )));
        }
        Ok(())
    }

    /// Stores the cost matrix for `(i, j)`, rows indexed by the value of `i`.
    /// Replaces any matrix already stored for the pair.
    pub fn set_pair(&mut self, i: usize, j: usize, costs: CostMatrix) -> Result<()> {
        self.check_var(i)?;
        self.check_var(j)?;
        if i == j {
            return Err(Error::Structure(format!("pair ({i},{i}) is not binary")));
        }
        if costs.rows != self.domains[i] || costs.cols != self.domains[j] {
            return Err(Error::Structure(format!(
                "pair ({i},{j}) expects a {}x{} matrix, got {}x{}",
                self.domains[i], self.domains[j], costs.rows, costs.cols
            )));
        }
        let top = self.top;
        let mut costs = costs;
        for c in &mut costs.data {
            *c = normalize_cost(*c, top, "pair matrix")?;
        }
        let (key, m) = if i < j {
            ((i, j), costs)
        } else {
            ((j, i), costs.transpose())
        };
        self.pairs.insert(key, m);
        Ok(())
    }

    /// Adds `costs` entrywise to the unary function of `i` (saturating).
    pub fn add_unary(&mut self, i: usize, costs: &[Cost]) -> Result<()> {
        self.check_var(i)?;
        if costs.len() != self.domains[i] {
            return Err(Error::Structure(format!(
                "unary for variable {i} expects {} costs, got {}",
                self.domains[i],
                costs.len()
            )));
        }
        let top = self.top;
        let incoming = costs
            .iter()
            .map(|&c| normalize_cost(c, top, "unary"))
            .collect::<Result<Vec<_>>>()?;
        match self.unaries.get_mut(&i) {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(incoming) {
                    *e = sat_add(*e, c, top);
                }
            }
            None => {
                self.unaries.insert(i, incoming);
            }
        }
        Ok(())
    }

    /// Matrix stored for the canonical pair `(min(i,j), max(i,j))`.
    pub fn pair(&self, i: usize, j: usize) -> Option<&CostMatrix> {
        self.pairs.get(&(i.min(j), i.max(j)))
    }

    /// `C[i,j](a, b)` for either orientation; absent pairs read as zero.
    #[inline]
    pub fn pair_cost(&self, i: usize, j: usize, a: usize, b: usize) -> Cost {
        if i < j {
            self.pairs.get(&(i, j)).map_or(0.0, |m| m.get(a, b))
        } else {
            self.pairs.get(&(j, i)).map_or(0.0, |m| m.get(b, a))
        }
    }

    pub fn unary(&self, i: usize) -> Option<&[Cost]> {
        self.unaries.get(&i).map(Vec::as_slice)
    }

    pub fn unary_cost(&self, i: usize, a: usize) -> Cost {
        self.unaries.get(&i).map_or(0.0, |u| u[a])
    }

    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), &CostMatrix)> {
        self.pairs.iter().map(|(&k, m)| (k, m))
    }

    pub fn unaries(&self) -> impl Iterator<Item = (usize, &[Cost])> {
        self.unaries.iter().map(|(&i, u)| (i, u.as_slice()))
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Neighbors of `i` through stored matrices, in increasing index order.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.pairs
            .keys()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn check_assignment(&self, y: &Assignment) -> Result<()> {
        if y.len() != self.domains.len() {
            return Err(Error::Structure(format!(
                "assignment has {} values for {} variables",
                y.len(),
                self.domains.len()
            )));
        }
        if let Some((i, &v)) = y.0.iter().enumerate().find(|(i, &v)| v >= self.domains[*i]) {
            return Err(Error::Structure(format!(
                "value {v} outside domain of variable {i} (size {})",
                self.domains[i]
            )));
        }
        Ok(())
    }

    /// Joint cost of a full assignment: unaries in variable order, then pairs
    /// in canonical key order, added with saturation.
    pub fn evaluate(&self, y: &Assignment) -> Result<Cost> {
        self.check_assignment(y)?;
        Ok(self.evaluate_unchecked(y.values()))
    }

    pub(crate) fn evaluate_unchecked(&self, y: &[usize]) -> Cost {
        let top = self.top;
        let mut total = 0.0;
        for (&i, u) in &self.unaries {
            total = sat_add(total, u[y[i]], top);
        }
        for (&(i, j), m) in &self.pairs {
            total = sat_add(total, m.get(y[i], y[j]), top);
        }
        total
    }

    /// Fixes evidenced variables: unary 0 on the observed value, `top`
    /// elsewhere, merged into existing unaries.
    pub fn condition(&self, evidence: &[(usize, usize)]) -> Result<Self> {
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        for &(var, val) in evidence {
            self.check_var(var)?;
            if val >= self.domains[var] {
                return Err(Error::Structure(format!(
                    "evidence value {val} outside domain of variable {var}"
                )));
            }
            if let Some(&prev) = seen.get(&var) {
                if prev != val {
                    return Err(Error::ConflictingEvidence {
                        var,
                        first: prev,
                        second: val,
                    });
                }
            }
            seen.insert(var, val);
        }
        let mut out = self.clone();
        for (var, val) in seen {
            let mut u = vec![self.top; self.domains[var]];
            u[val] = 0.0;
            out.add_unary(var, &u)?;
        }
        Ok(out)
    }

    /// Every cost `>= tau` becomes `top`, every other cost becomes 0.
    pub fn threshold_to_boolean(&self, tau: Cost) -> Self {
        assert!(tau > 0.0, "threshold must be positive");
        let top = self.top;
        let cut = |c: Cost| if c >= tau { top } else { 0.0 };
        Self {
            domains: self.domains.clone(),
            pairs: self.pairs.iter().map(|(&k, m)| (k, m.map(cut))).collect(),
            unaries: self
                .unaries
                .iter()
                .map(|(&i, u)| (i, u.iter().map(|&c| cut(c)).collect()))
                .collect(),
            top,
        }
    }

    /// Sum of absolute pairwise costs. Unary terms are not included.
    pub fn l1_norm(&self) -> Result<Cost> {
        let mut total = 0.0;
        for (&(i, j), m) in &self.pairs {
            for &c in &m.data {
                if c >= self.top {
                    return Err(Error::TopEntry { i, j });
                }
                total += c.abs();
            }
        }
        Ok(total)
    }

    /// Subgradient of [`l1_norm`](Self::l1_norm): `sign(c)` per pair entry,
    /// 0 at exact zeros.
    pub fn l1_gradient(&self) -> BTreeMap<(usize, usize), Vec<Cost>> {
        self.pairs
            .iter()
            .map(|(&k, m)| {
                let g = m
                    .data
                    .iter()
                    .map(|&c| if c == 0.0 { 0.0 } else { c.signum() })
                    .collect();
                (k, g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The four binary variables with Y0 != Y1, Y1 + Y2 > 1, Y2 != Y3.
    pub(crate) fn four_var_example() -> CostFunctionNetwork {
        let t = DEFAULT_TOP;
        let mut net = CostFunctionNetwork::new(vec![2; 4]);
        let neq = CostMatrix::from_rows(&[vec![t, 0.0], vec![0.0, t]]).unwrap();
        let sum_gt_1 = CostMatrix::from_rows(&[vec![t, t], vec![t, 0.0]]).unwrap();
        net.set_pair(0, 1, neq.clone()).unwrap();
        net.set_pair(1, 2, sum_gt_1).unwrap();
        net.set_pair(2, 3, neq).unwrap();
        net
    }

    #[test]
    fn empty_network_costs_nothing() {
        let net = CostFunctionNetwork::new(vec![3, 2, 4]);
        assert_eq!(net.evaluate(&vec![2, 1, 3].into()).unwrap(), 0.0);
    }

    #[test]
    fn four_var_example_accepts_0110() {
        let net = four_var_example();
        assert_eq!(net.evaluate(&vec![0, 1, 1, 0].into()).unwrap(), 0.0);
        assert_eq!(net.evaluate(&vec![0, 0, 1, 0].into()).unwrap(), DEFAULT_TOP);
    }

    #[test]
    fn transposed_view_is_coherent() {
        let mut net = CostFunctionNetwork::new(vec![2, 3]);
        let m = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]]).unwrap();
        net.set_pair(1, 0, m).unwrap();
        assert_eq!(net.pair(0, 1).unwrap().rows(), 2);
        for a in 0..3 {
            for b in 0..2 {
                assert_eq!(net.pair_cost(1, 0, a, b), net.pair_cost(0, 1, b, a));
            }
        }
        assert_eq!(net.pair_cost(1, 0, 2, 1), 5.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = CostFunctionNetwork::new(vec![2, 2]);
        assert!(net.evaluate(&vec![0].into()).is_err());
        assert!(net.evaluate(&vec![0, 2].into()).is_err());
        let mut net = net;
        assert!(net.set_pair(0, 1, CostMatrix::zeros(2, 3)).is_err());
        assert!(net.set_pair(0, 0, CostMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn nan_rejected_and_infinity_becomes_top() {
        let mut net = CostFunctionNetwork::new(vec![2, 2]);
        let bad = CostMatrix::from_rows(&[vec![f64::NAN, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(net.set_pair(0, 1, bad).is_err());
        let inf = CostMatrix::from_rows(&[vec![f64::INFINITY, 0.0], vec![0.0, 0.0]]).unwrap();
        net.set_pair(0, 1, inf).unwrap();
        assert_eq!(net.pair_cost(0, 1, 0, 0), DEFAULT_TOP);
    }

    #[test]
    fn saturation_absorbs_everything() {
        let t = DEFAULT_TOP;
        assert_eq!(sat_add(t, 5.0, t), t);
        assert_eq!(sat_add(t, -5.0, t), t);
        assert_eq!(sat_add(t - 1.0, 2.0, t), t);
        assert_eq!(sat_add(1.0, -3.0, t), -2.0);
    }

    #[test]
    fn unary_merge_saturates() {
        let mut net = CostFunctionNetwork::new(vec![2]);
        net.add_unary(0, &[1.0, DEFAULT_TOP]).unwrap();
        net.add_unary(0, &[2.0, -4.0]).unwrap();
        assert_eq!(net.unary(0).unwrap(), &[3.0, DEFAULT_TOP]);
    }

    #[test]
    fn condition_on_nothing_is_identity() {
        let net = four_var_example();
        assert_eq!(net.condition(&[]).unwrap(), net);
    }

    #[test]
    fn conflicting_evidence_errors() {
        let net = four_var_example();
        assert!(matches!(
            net.condition(&[(1, 0), (1, 1)]),
            Err(Error::ConflictingEvidence { var: 1, .. })
        ));
        assert!(net.condition(&[(1, 1), (1, 1)]).is_ok());
        assert!(net.condition(&[(1, 2)]).is_err());
    }

    #[test]
    fn sum_constraint_redundant_under_context() {
        // With Y1 = Y2 = 1 fixed, dropping Y1 + Y2 > 1 changes no finite cost.
        let net = four_var_example().condition(&[(1, 1), (2, 1)]).unwrap();
        let mut without = CostFunctionNetwork::new(vec![2; 4]);
        without.set_pair(0, 1, net.pair(0, 1).unwrap().clone()).unwrap();
        without.set_pair(2, 3, net.pair(2, 3).unwrap().clone()).unwrap();
        let without = without.condition(&[(1, 1), (2, 1)]).unwrap();
        let mut best = DEFAULT_TOP;
        for code in 0..16usize {
            let y: Assignment = (0..4).map(|b| (code >> b) & 1).collect::<Vec<_>>().into();
            let c = net.evaluate(&y).unwrap();
            assert_eq!(c, without.evaluate(&y).unwrap());
            best = best.min(c);
        }
        assert_eq!(best, 0.0);
    }

    #[test]
    fn threshold_maps_to_zero_or_top() {
        let mut net = CostFunctionNetwork::new(vec![1, 2]);
        net.set_pair(0, 1, CostMatrix::from_rows(&[vec![0.01, 3.2]]).unwrap())
            .unwrap();
        let hard = net.threshold_to_boolean(1.0);
        assert_eq!(hard.pair(0, 1).unwrap().as_slice(), &[0.0, DEFAULT_TOP]);
        assert_eq!(hard.threshold_to_boolean(1.0), hard);
        let zero = CostFunctionNetwork::new(vec![2, 2]);
        assert_eq!(zero.threshold_to_boolean(0.5), zero);
    }

    #[test]
    fn l1_norm_of_small_matrix() {
        let mut net = CostFunctionNetwork::new(vec![2, 2]);
        assert_eq!(net.l1_norm().unwrap(), 0.0);
        net.set_pair(0, 1, CostMatrix::from_rows(&[vec![1.0, -2.0], vec![0.0, 3.0]]).unwrap())
            .unwrap();
        net.add_unary(0, &[100.0, -100.0]).unwrap();
        assert_eq!(net.l1_norm().unwrap(), 6.0);
        assert_eq!(net.l1_gradient()[&(0, 1)], vec![1.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn l1_rejects_top() {
        let net = four_var_example();
        assert!(matches!(net.l1_norm(), Err(Error::TopEntry { i: 0, j: 1 })));
    }

    #[test]
    fn neighbors_follow_stored_pairs() {
        let net = four_var_example();
        assert_eq!(net.neighbors(1), vec![0, 2]);
        assert_eq!(net.neighbors(3), vec![2]);
    }
}
