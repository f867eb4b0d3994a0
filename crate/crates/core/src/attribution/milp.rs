//! Exact attribution minimizing multiple assignment:
//!
//! ```text
//! min  sum_i y_i - lambda * sum_ij affinity_ij x_ij
//! s.t. sum_{i in S_j} x_ij = quota_j                      for every content j
//!      sum_{j in T_i} x_ij <= 1 + M_i y_i                 M_i = max(2, |T_i| - 1)
//!      sum_{j in T_i} x_ij >= 2 - 2 (1 - y_i)
//!      x, y binary
//! ```
//!
//! Solved by LP-based branch-and-bound: best-bound node order (FIFO on ties),
//! branching on the most fractional variable (ties by (subscriber, content),
//! with `y_i` ordered before subscriber `i`'s `x` variables). Contents whose
//! quota is 0 or equals their candidate count are fixed up front, and the
//! remaining candidate graph is split into connected components that are
//! solved independently.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::greedy::greedy_selection;
use super::instance::{Assignment, AttributionInstance};
use super::simplex::{LinearProgram, LpOutcome, RowKind};
use crate::error::{AimError, Result};

const INT_TOL: f64 = 1e-6;
const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ExactOptions {
    /// LP solves allowed per connected component before returning the incumbent.
    pub node_limit: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            node_limit: 200_000,
        }
    }
}

/// Search statistics of one exact solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub components: usize,
    pub nodes: usize,
    /// Incumbents whose objective fell below their node's LP bound (should stay 0).
    pub bound_violations: usize,
    pub node_limit_hit: bool,
    pub gap: f64,
}

pub fn solve_exact(instance: &AttributionInstance, lambda: f64) -> Result<Assignment> {
    solve_exact_with(instance, lambda, &ExactOptions::default()).map(|(a, _)| a)
}

pub fn solve_exact_with(
    instance: &AttributionInstance,
    lambda: f64,
    options: &ExactOptions,
) -> Result<(Assignment, SolveStats)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(AimError::Config(format!(
            "lambda {lambda} must be finite and >= 0"
        )));
    }
    instance.check_feasible()?;

    let counts = instance.candidate_counts();
    let n_cand = instance.candidates.len();
    // Some(true/false) for candidates fixed by their content's quota.
    let fixed: Vec<Option<bool>> = instance
        .candidates
        .iter()
        .map(|c| {
            let q = instance.quotas[c.content] as usize;
            if q == 0 {
                Some(false)
            } else if q == counts[c.content] {
                Some(true)
            } else {
                None
            }
        })
        .collect();

    let components = free_components(instance, &fixed);
    let greedy = greedy_selection(instance);
    let mut greedy_mask = vec![false; n_cand];
    for &k in &greedy {
        greedy_mask[k] = true;
    }

    let by_sub = instance.by_subscriber();
    let fixed_ones: Vec<u32> = by_sub
        .iter()
        .map(|ks| ks.iter().filter(|&&k| fixed[k] == Some(true)).count() as u32)
        .collect();

    let results: Vec<(Vec<usize>, ComponentStats)> = components
        .par_iter()
        .map(|comp| {
            let problem =
                ComponentProblem::new(instance, comp, &by_sub, &fixed, &fixed_ones, lambda);
            problem.solve(&greedy_mask, options)
        })
        .collect();

    let mut selection: Vec<usize> = (0..n_cand).filter(|&k| fixed[k] == Some(true)).collect();
    let mut stats = SolveStats {
        components: components.len(),
        ..SolveStats::default()
    };
    for (sel, cs) in results {
        selection.extend(sel);
        stats.nodes += cs.nodes;
        stats.bound_violations += cs.bound_violations;
        stats.node_limit_hit |= cs.limit_hit;
        stats.gap += cs.gap;
    }
    if stats.node_limit_hit {
        log::warn!(
            "node budget exhausted; returning best found with optimality gap {:.3e}",
            stats.gap
        );
    }
    let mut assignment = Assignment::from_selection(instance, selection, lambda);
    assignment.optimality_gap = Some(stats.gap);
    assignment.nodes = stats.nodes;
    Ok((assignment, stats))
}

/// Connected components (as candidate index lists) of the graph linking
/// subscribers and contents through unfixed candidates.
fn free_components(instance: &AttributionInstance, fixed: &[Option<bool>]) -> Vec<Vec<usize>> {
    let ns = instance.subscribers.len();
    let mut parent: Vec<usize> = (0..ns + instance.contents.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (k, c) in instance.candidates.iter().enumerate() {
        if fixed[k].is_none() {
            let a = find(&mut parent, c.subscriber);
            let b = find(&mut parent, ns + c.content);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut comps: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (k, c) in instance.candidates.iter().enumerate() {
        if fixed[k].is_none() {
            let root = find(&mut parent, c.subscriber);
            comps.entry(root).or_default().push(k);
        }
    }
    comps.into_values().collect()
}

#[derive(Debug, Default)]
struct ComponentStats {
    nodes: usize,
    bound_violations: usize,
    limit_hit: bool,
    gap: f64,
}

#[derive(Debug)]
struct SubscriberTerm {
    /// Local x variables belonging to this subscriber.
    xs: Vec<usize>,
    /// Attributions already fixed to 1 outside the component.
    fixed_ones: u32,
    big_m: f64,
    /// Local index of `y_i`, if the subscriber can reach two attributions.
    y: Option<usize>,
}

#[derive(Debug)]
struct ComponentProblem {
    /// Global candidate index of each local x variable.
    cand: Vec<usize>,
    affinity: Vec<f64>,
    contents: Vec<(u32, Vec<usize>)>,
    subs: Vec<SubscriberTerm>,
    n_vars: usize,
    /// Branching key per local variable.
    keys: Vec<(usize, usize)>,
    lambda: f64,
}

#[derive(Debug)]
struct Node {
    bound: f64,
    seq: u64,
    fix: Vec<Option<bool>>,
    /// LP solution at this node.
    values: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: invert so the smallest bound, then oldest, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum NodeLp {
    Infeasible,
    Solved { value: f64, values: Vec<f64> },
}

impl ComponentProblem {
    fn new(
        instance: &AttributionInstance,
        comp: &[usize],
        by_sub: &[Vec<usize>],
        fixed: &[Option<bool>],
        fixed_ones: &[u32],
        lambda: f64,
    ) -> Self {
        let cand = comp.to_vec();
        let local_of = |k: usize| cand.binary_search(&k).ok();
        let affinity = cand
            .iter()
            .map(|&k| instance.candidates[k].affinity)
            .collect();

        let mut content_members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (l, &k) in cand.iter().enumerate() {
            content_members
                .entry(instance.candidates[k].content)
                .or_default()
                .push(l);
        }
        let contents = content_members
            .into_iter()
            .map(|(j, xs)| (instance.quotas[j], xs))
            .collect();

        let mut sub_ids: Vec<usize> = cand
            .iter()
            .map(|&k| instance.candidates[k].subscriber)
            .collect();
        sub_ids.dedup();
        let mut n_vars = cand.len();
        let mut subs = Vec::new();
        let mut keys: Vec<(usize, usize)> = cand
            .iter()
            .map(|&k| {
                let c = &instance.candidates[k];
                (c.subscriber, c.content + 1)
            })
            .collect();
        for s in sub_ids {
            let xs: Vec<usize> = by_sub[s]
                .iter()
                .filter(|&&k| fixed[k].is_none())
                .filter_map(|&k| local_of(k))
                .collect();
            let f = fixed_ones[s];
            let reach = f as usize + xs.len();
            let y = if f < 2 && reach >= 2 {
                let idx = n_vars;
                n_vars += 1;
                keys.push((s, 0));
                Some(idx)
            } else {
                None
            };
            subs.push(SubscriberTerm {
                xs,
                fixed_ones: f,
                big_m: (by_sub[s].len() as f64 - 1.0).max(2.0),
                y,
            });
        }
        Self {
            cand,
            affinity,
            contents,
            subs,
            n_vars,
            keys,
            lambda,
        }
    }

    /// LP relaxation with the node's fixings substituted out.
    fn relax(&self, fix: &[Option<bool>]) -> NodeLp {
        let free: Vec<usize> = (0..self.n_vars).filter(|&v| fix[v].is_none()).collect();
        let mut col = vec![usize::MAX; self.n_vars];
        for (c, &v) in free.iter().enumerate() {
            col[v] = c;
        }
        let mut lp = LinearProgram::new(free.len());
        let mut constant = 0.0;

        for (l, &a) in self.affinity.iter().enumerate() {
            match fix[l] {
                None => lp.objective[col[l]] = -self.lambda * a,
                Some(true) => constant -= self.lambda * a,
                Some(false) => {}
            }
        }

        for (quota, xs) in &self.contents {
            let ones = xs.iter().filter(|&&l| fix[l] == Some(true)).count() as f64;
            let free_xs: Vec<usize> = xs.iter().copied().filter(|&l| fix[l].is_none()).collect();
            let residual = f64::from(*quota) - ones;
            if residual < -0.5 || residual > free_xs.len() as f64 + 0.5 {
                return NodeLp::Infeasible;
            }
            if free_xs.is_empty() {
                continue;
            }
            lp.add_row(
                free_xs.iter().map(|&l| (col[l], 1.0)).collect(),
                RowKind::Eq,
                residual,
            );
            if residual >= 2.0 {
                for &l in &free_xs {
                    lp.add_row(vec![(col[l], 1.0)], RowKind::Le, 1.0);
                }
            }
        }

        for s in &self.subs {
            let Some(y) = s.y else {
                if s.fixed_ones >= 2 {
                    constant += 1.0;
                }
                continue;
            };
            let ones =
                s.fixed_ones as f64 + s.xs.iter().filter(|&&l| fix[l] == Some(true)).count() as f64;
            let free_xs: Vec<usize> = s.xs.iter().copied().filter(|&l| fix[l].is_none()).collect();
            let coefs: Vec<(usize, f64)> = free_xs.iter().map(|&l| (col[l], 1.0)).collect();
            match fix[y] {
                None => {
                    lp.objective[col[y]] = 1.0;
                    let mut le = coefs.clone();
                    le.push((col[y], -s.big_m));
                    lp.add_row(le, RowKind::Le, 1.0 - ones);
                    let mut ge = coefs;
                    ge.push((col[y], -2.0));
                    lp.add_row(ge, RowKind::Ge, -ones);
                }
                Some(false) => {
                    let cap = 1.0 - ones;
                    if cap < -0.5 {
                        return NodeLp::Infeasible;
                    }
                    if (free_xs.len() as f64) > cap + 0.5 {
                        lp.add_row(coefs, RowKind::Le, cap);
                    }
                }
                Some(true) => {
                    constant += 1.0;
                    let need = 2.0 - ones;
                    if need > free_xs.len() as f64 + 0.5 {
                        return NodeLp::Infeasible;
                    }
                    if need > 0.5 {
                        lp.add_row(coefs, RowKind::Ge, need);
                    }
                }
            }
        }

        match lp.solve() {
            LpOutcome::Optimal { x, value } => {
                let mut values = vec![0.0; self.n_vars];
                for v in 0..self.n_vars {
                    values[v] = match fix[v] {
                        Some(true) => 1.0,
                        Some(false) => 0.0,
                        None => x[col[v]],
                    };
                }
                NodeLp::Solved {
                    value: value + constant,
                    values,
                }
            }
            // bounded below by construction; treat numerical failure as infeasible
            LpOutcome::Infeasible | LpOutcome::Unbounded => NodeLp::Infeasible,
        }
    }

    /// Objective of an integral x selection (local indices with value 1).
    fn evaluate(&self, chosen: &[bool]) -> f64 {
        let mut obj = 0.0;
        for (l, &a) in self.affinity.iter().enumerate() {
            if chosen[l] {
                obj -= self.lambda * a;
            }
        }
        for s in &self.subs {
            let n = s.fixed_ones as usize + s.xs.iter().filter(|&&l| chosen[l]).count();
            if n >= 2 {
                obj += 1.0;
            }
        }
        obj
    }

    fn branch_variable(&self, values: &[f64], fix: &[Option<bool>]) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for v in 0..self.n_vars {
            if fix[v].is_some() {
                continue;
            }
            let frac = values[v] - values[v].floor();
            let dist = frac.min(1.0 - frac);
            if dist <= INT_TOL {
                continue;
            }
            best = match best {
                None => Some((dist, v)),
                Some((bd, bv)) => {
                    if dist > bd + 1e-12 || (dist >= bd - 1e-12 && self.keys[v] < self.keys[bv]) {
                        Some((dist, v))
                    } else {
                        Some((bd, bv))
                    }
                }
            };
        }
        best.map(|(_, v)| v)
    }

    fn solve(&self, greedy_mask: &[bool], options: &ExactOptions) -> (Vec<usize>, ComponentStats) {
        let n_x = self.cand.len();
        let mut stats = ComponentStats::default();

        let mut incumbent: Vec<bool> = self.cand.iter().map(|&k| greedy_mask[k]).collect();
        let mut best = self.evaluate(&incumbent);

        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        let root = vec![None; self.n_vars];
        stats.nodes += 1;
        if let NodeLp::Solved { value, values } = self.relax(&root) {
            self.consider(
                value,
                values,
                root,
                &mut heap,
                &mut seq,
                &mut incumbent,
                &mut best,
                &mut stats,
            );
        }

        while let Some(node) = heap.pop() {
            if node.bound >= best - PRUNE_TOL {
                // best-bound order: nothing left can improve
                heap.clear();
                break;
            }
            if stats.nodes >= options.node_limit {
                stats.limit_hit = true;
                stats.gap = (best - node.bound).max(0.0);
                break;
            }
            let Some(v) = self.branch_variable(&node.values, &node.fix) else {
                continue;
            };
            for side in [false, true] {
                let mut fix = node.fix.clone();
                fix[v] = Some(side);
                stats.nodes += 1;
                if let NodeLp::Solved { value, values } = self.relax(&fix) {
                    self.consider(
                        value,
                        values,
                        fix,
                        &mut heap,
                        &mut seq,
                        &mut incumbent,
                        &mut best,
                        &mut stats,
                    );
                }
            }
        }

        let selected = (0..n_x)
            .filter(|&l| incumbent[l])
            .map(|l| self.cand[l])
            .collect();
        (selected, stats)
    }

    #[allow(clippy::too_many_arguments)]
    fn consider(
        &self,
        value: f64,
        values: Vec<f64>,
        fix: Vec<Option<bool>>,
        heap: &mut BinaryHeap<Node>,
        seq: &mut u64,
        incumbent: &mut Vec<bool>,
        best: &mut f64,
        stats: &mut ComponentStats,
    ) {
        if value >= *best - PRUNE_TOL {
            return;
        }
        if self.branch_variable(&values, &fix).is_none() {
            let chosen: Vec<bool> = values[..self.cand.len()].iter().map(|&v| v > 0.5).collect();
            let obj = self.evaluate(&chosen);
            if obj < value - PRUNE_TOL {
                stats.bound_violations += 1;
            }
            if obj < *best - PRUNE_TOL {
                *best = obj;
                *incumbent = chosen;
            }
            return;
        }
        *seq += 1;
        heap.push(Node {
            bound: value,
            seq: *seq,
            fix,
            values,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{brute_force, rank_greedy, CandidatePair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn pair(s: &str, c: &str, a: f64) -> CandidatePair {
        CandidatePair {
            subscriber_id: s.into(),
            content_id: c.into(),
            affinity: a,
            order: 1,
        }
    }

    #[test]
    fn perfect_matching_has_zero_objective_at_lambda_zero() {
        let q = BTreeMap::from([
            ("c1".to_string(), 1),
            ("c2".to_string(), 1),
            ("c3".to_string(), 1),
        ]);
        let inst = AttributionInstance::new(
            vec![
                pair("a", "c1", 0.9),
                pair("a", "c2", 0.8),
                pair("b", "c2", 0.2),
                pair("b", "c3", 0.7),
                pair("c", "c3", 0.6),
                pair("c", "c1", 0.5),
            ],
            &q,
        )
        .unwrap();
        let a = solve_exact(&inst, 0.0).unwrap();
        assert_eq!(a.objective, 0.0);
        assert!(a.multi_assigned.is_empty());
        a.verify(&inst).unwrap();
    }

    #[test]
    fn single_content_reproduces_greedy() {
        let q = BTreeMap::from([("c".to_string(), 3)]);
        let pairs: Vec<_> = ["p", "q", "r", "s", "t"]
            .iter()
            .zip([0.3, 0.9, 0.1, 0.6, 0.75])
            .map(|(s, a)| pair(s, "c", a))
            .collect();
        let inst = AttributionInstance::new(pairs, &q).unwrap();
        let g = rank_greedy(&inst).unwrap();
        for lambda in [0.0, 0.5, 3.0] {
            let e = solve_exact(&inst, lambda).unwrap();
            assert_eq!(e.assigned, g.assigned);
        }
    }

    #[test]
    fn infeasible_quota_reported() {
        let q = BTreeMap::from([("c".to_string(), 2)]);
        let inst = AttributionInstance::new(vec![pair("a", "c", 0.5)], &q).unwrap();
        assert!(matches!(
            solve_exact(&inst, 1.0),
            Err(AimError::Infeasible { .. })
        ));
    }

    #[test]
    fn negative_lambda_rejected() {
        let inst = AttributionInstance::new(vec![], &BTreeMap::new()).unwrap();
        assert!(solve_exact(&inst, -1.0).is_err());
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> AttributionInstance {
        let n_sub = rng.random_range(1..=10);
        let n_con = rng.random_range(1..=3);
        let mut pairs = Vec::new();
        for s in 0..n_sub {
            for c in 0..n_con {
                if rng.random::<f64>() < 0.6 && pairs.len() < 25 {
                    pairs.push(pair(
                        &format!("s{s}"),
                        &format!("c{c}"),
                        (rng.random::<f64>() * 1000.0).round() / 1000.0,
                    ));
                }
            }
        }
        let mut counts = BTreeMap::new();
        for p in &pairs {
            *counts.entry(p.content_id.clone()).or_insert(0u32) += 1;
        }
        let quotas = counts
            .into_iter()
            .map(|(c, n)| (c, rng.random_range(0..=n)))
            .collect();
        AttributionInstance::new(pairs, &quotas).unwrap()
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..40 {
            let inst = random_instance(&mut rng);
            for lambda in [0.0, 0.3, 2.0] {
                let (e, stats) = solve_exact_with(&inst, lambda, &ExactOptions::default()).unwrap();
                let b = brute_force(&inst, lambda).unwrap();
                e.verify(&inst).unwrap();
                assert!(
                    (e.objective - b.objective).abs() < 1e-9,
                    "{} vs {}",
                    e.objective,
                    b.objective
                );
                assert_eq!(stats.bound_violations, 0);
                assert!(!stats.node_limit_hit);
            }
        }
    }
}
