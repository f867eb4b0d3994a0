use super::instance::{Assignment, AttributionInstance};
use crate::error::{AimError, Result};

pub const BRUTE_FORCE_LIMIT: usize = 25;
const TIE_TOL: f64 = 1e-9;

/// Exhaustive search over every quota-satisfying selection. Among optimal
/// selections, returns the lexicographically smallest list of assigned
/// (subscriber, content) pairs.
pub fn brute_force(instance: &AttributionInstance, lambda: f64) -> Result<Assignment> {
    if instance.candidates.len() > BRUTE_FORCE_LIMIT {
        return Err(AimError::TooLarge {
            candidates: instance.candidates.len(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if !(lambda >= 0.0) {
        return Err(AimError::Config(format!("lambda {lambda} must be >= 0")));
    }
    instance.check_feasible()?;

    let groups = instance.by_content();
    let mut search = Search {
        instance,
        groups: &groups,
        lambda,
        per_sub: vec![0; instance.subscribers.len()],
        current: Vec::new(),
        best: None,
    };
    search.content(0);
    let (_, best) = search
        .best
        .expect("a feasible instance has at least one selection");
    Ok(Assignment::from_selection(instance, best, lambda))
}

struct Search<'a> {
    instance: &'a AttributionInstance,
    groups: &'a [Vec<usize>],
    lambda: f64,
    per_sub: Vec<u32>,
    current: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn content(&mut self, j: usize) {
        if j == self.groups.len() {
            self.evaluate();
            return;
        }
        let quota = self.instance.quotas[j] as usize;
        self.choose(j, 0, quota);
    }

    /// Choose `remaining` more members of content `j` from position `from` on.
    fn choose(&mut self, j: usize, from: usize, remaining: usize) {
        if remaining == 0 {
            self.content(j + 1);
            return;
        }
        let members = &self.groups[j];
        for pos in from..members.len() {
            if members.len() - pos < remaining {
                break;
            }
            let k = members[pos];
            let s = self.instance.candidates[k].subscriber;
            self.per_sub[s] += 1;
            self.current.push(k);
            self.choose(j, pos + 1, remaining - 1);
            self.current.pop();
            self.per_sub[s] -= 1;
        }
    }

    fn evaluate(&mut self) {
        let multi = self.per_sub.iter().filter(|&&n| n >= 2).count() as f64;
        let affinity: f64 = self
            .current
            .iter()
            .map(|&k| self.instance.candidates[k].affinity)
            .sum();
        let obj = multi - self.lambda * affinity;
        let mut sel = self.current.clone();
        sel.sort_unstable();
        let replace = match &self.best {
            None => true,
            Some((b, bsel)) => obj < b - TIE_TOL || (obj <= b + TIE_TOL && sel < *bsel),
        };
        if replace {
            self.best = Some((obj, sel));
        }
    }
}
