//! Dense two-phase primal simplex for small linear programs
//! `min c'x  s.t.  rows, x >= 0`.

const EPS: f64 = 1e-9;
/// Switch from Dantzig pricing to Bland's rule after this many degenerate pivots.
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    width: usize,
    data: Vec<f64>,
    /// Number of constraint rows; row `m` is the objective row.
    m: usize,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(pr, pc);
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..=self.m {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.data[r * w..(r + 1) * w];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if *p != 0.0 {
                    *v -= f * p;
                }
            }
            row[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Minimizes the objective row over columns `< allowed`. Returns false if unbounded.
    fn optimize(&mut self, allowed: usize) -> bool {
        let rhs = self.rhs_col();
        let mut degenerate = 0usize;
        loop {
            let obj = self.m;
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut enter = None;
            let mut best = -EPS;
            for c in 0..allowed {
                let d = self.at(obj, c);
                if d < -EPS {
                    if bland {
                        enter = Some(c);
                        break;
                    }
                    if d < best {
                        best = d;
                        enter = Some(c);
                    }
                }
            }
            let Some(pc) = enter else {
                return true;
            };

            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, pc);
                if a > EPS {
                    let ratio = self.at(r, rhs) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - EPS
                                || (ratio <= lratio + EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((pr, ratio)) = leave else {
                return false;
            };
            if ratio.abs() <= EPS {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(pr, pc);
        }
    }
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            rows: Vec::new(),
        }
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) {
        self.rows.push(Row { coefs, kind, rhs });
    }

    pub fn solve(&self) -> LpOutcome {
        let n = self.n_vars;
        let m = self.rows.len();
        if m == 0 {
            // every variable sits at its lower bound unless it improves the objective
            if self.objective.iter().any(|&c| c < -EPS) {
                return LpOutcome::Unbounded;
            }
            return LpOutcome::Optimal {
                x: vec![0.0; n],
                value: 0.0,
            };
        }

        // Normalize to non-negative right-hand sides.
        let rows: Vec<(Vec<(usize, f64)>, RowKind, f64)> = self
            .rows
            .iter()
            .map(|r| {
                if r.rhs < 0.0 {
                    let kind = match r.kind {
                        RowKind::Le => RowKind::Ge,
                        RowKind::Ge => RowKind::Le,
                        RowKind::Eq => RowKind::Eq,
                    };
                    (
                        r.coefs.iter().map(|&(j, a)| (j, -a)).collect(),
                        kind,
                        -r.rhs,
                    )
                } else {
                    (r.coefs.clone(), r.kind, r.rhs)
                }
            })
            .collect();

        let n_slack = rows.iter().filter(|r| r.1 != RowKind::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != RowKind::Le).count();
        let art_start = n + n_slack;
        let width = n + n_slack + n_art + 1;
        let mut t = Tableau {
            width,
            data: vec![0.0; (m + 1) * width],
            m,
            basis: vec![0; m],
        };

        let mut slack = n;
        let mut art = art_start;
        for (i, (coefs, kind, rhs)) in rows.iter().enumerate() {
            for &(j, a) in coefs {
                t.data[i * width + j] += a;
            }
            t.data[i * width + width - 1] = *rhs;
            match kind {
                RowKind::Le => {
                    t.data[i * width + slack] = 1.0;
                    t.basis[i] = slack;
                    slack += 1;
                }
                RowKind::Ge => {
                    t.data[i * width + slack] = -1.0;
                    slack += 1;
                    t.data[i * width + art] = 1.0;
                    t.basis[i] = art;
                    art += 1;
                }
                RowKind::Eq => {
                    t.data[i * width + art] = 1.0;
                    t.basis[i] = art;
                    art += 1;
                }
            }
        }

        // Phase 1: minimize the sum of artificials.
        if n_art > 0 {
            for c in art_start..width - 1 {
                t.data[m * width + c] = 1.0;
            }
            for i in 0..m {
                if t.basis[i] >= art_start {
                    for c in 0..width {
                        t.data[m * width + c] -= t.data[i * width + c];
                    }
                }
            }
            t.optimize(width - 1);
            if -t.at(m, width - 1) > 1e-7 {
                return LpOutcome::Infeasible;
            }
            // Drive remaining (zero-valued) artificials out of the basis.
            for i in 0..m {
                if t.basis[i] >= art_start {
                    if let Some(c) = (0..art_start).find(|&c| t.at(i, c).abs() > EPS) {
                        t.pivot(i, c);
                    }
                }
            }
        }

        // Phase 2.
        for c in 0..width {
            t.data[m * width + c] = 0.0;
        }
        for (j, &c) in self.objective.iter().enumerate() {
            t.data[m * width + j] = c;
        }
        for i in 0..m {
            let b = t.basis[i];
            let cb = t.at(m, b);
            if cb != 0.0 {
                for c in 0..width {
                    t.data[m * width + c] -= cb * t.data[i * width + c];
                }
            }
        }
        if !t.optimize(art_start) {
            return LpOutcome::Unbounded;
        }

        let mut x = vec![0.0; n];
        for i in 0..m {
            if t.basis[i] < n {
                x[t.basis[i]] = t.at(i, width - 1).max(0.0);
            }
        }
        let value = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpOutcome::Optimal { x, value }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(lp: &LinearProgram) -> (Vec<f64>, f64) {
        match lp.solve() {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3a + 5b s.t. a <= 4, 2b <= 12, 3a + 2b <= 18  -> (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-3.0, -5.0];
        lp.add_row(vec![(0, 1.0)], RowKind::Le, 4.0);
        lp.add_row(vec![(1, 2.0)], RowKind::Le, 12.0);
        lp.add_row(vec![(0, 3.0), (1, 2.0)], RowKind::Le, 18.0);
        let (x, v) = optimal(&lp);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
        assert!((v + 36.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min a + 2b s.t. a + b = 3, a >= 1, b >= 1  -> a = 2, b = 1
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.add_row(vec![(0, 1.0), (1, 1.0)], RowKind::Eq, 3.0);
        lp.add_row(vec![(0, 1.0)], RowKind::Ge, 1.0);
        lp.add_row(vec![(1, 1.0)], RowKind::Ge, 1.0);
        let (x, v) = optimal(&lp);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
        assert!((v - 4.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // min a s.t. -a <= -2  -> a = 2
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.add_row(vec![(0, -1.0)], RowKind::Le, -2.0);
        let (x, _) = optimal(&lp);
        assert!((x[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![(0, 1.0)], RowKind::Le, 1.0);
        lp.add_row(vec![(0, 1.0)], RowKind::Ge, 2.0);
        assert_eq!(lp.solve(), LpOutcome::Infeasible);

        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, 0.0];
        lp.add_row(vec![(0, 1.0), (1, -1.0)], RowKind::Le, 1.0);
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_assignment_lp_is_integral() {
        // 3x3 assignment polytope; optimum picks the anti-diagonal
        let cost = [[4.0, 3.0, 1.0], [3.0, 1.0, 3.0], [1.0, 3.0, 4.0]];
        let mut lp = LinearProgram::new(9);
        for i in 0..3 {
            for j in 0..3 {
                lp.objective[i * 3 + j] = cost[i][j];
            }
            lp.add_row((0..3).map(|j| (i * 3 + j, 1.0)).collect(), RowKind::Eq, 1.0);
            lp.add_row((0..3).map(|j| (j * 3 + i, 1.0)).collect(), RowKind::Eq, 1.0);
        }
        let (x, v) = optimal(&lp);
        assert!((v - 3.0).abs() < 1e-9);
        for (k, xv) in x.iter().enumerate() {
            let expect = if k == 2 || k == 4 || k == 6 { 1.0 } else { 0.0 };
            assert!((xv - expect).abs() < 1e-9);
        }
    }
}
