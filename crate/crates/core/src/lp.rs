//! Dense bounded-variable primal simplex.
//!
//! Sized for the policy programs (a couple of dozen variables). Two phases,
//! Bland's smallest-index rule for both the entering and the leaving
//! variable, and nonbasic variables parked at either of their bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PIVOT_TOL: f64 = 1e-9;
pub const FEASIBILITY_TOL: f64 = 1e-8;
const OPTIMALITY_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

/// `maximize c·x  s.t.  A_eq x = b_eq,  A_ub x ≤ b_ub,  l ≤ x ≤ u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ineq_matrix: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    /// Per-variable `(lower, upper)`; lower must be finite, upper may be `inf`.
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    /// A problem with no constraints and every variable in `[0, inf)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            objective,
            eq_matrix: Vec::new(),
            eq_rhs: Vec::new(),
            ineq_matrix: Vec::new(),
            ineq_rhs: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.eq_rhs.len() + self.ineq_rhs.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_matrix.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.ineq_matrix.push(row);
        self.ineq_rhs.push(rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        let bad = |what: &str| Err(Error::LpStructure(what.to_string()));
        if self.bounds.len() != n {
            return bad("bounds length differs from objective length");
        }
        if self.eq_matrix.len() != self.eq_rhs.len() || self.ineq_matrix.len() != self.ineq_rhs.len()
        {
            return bad("constraint rows and right-hand sides differ in count");
        }
        if self
            .eq_matrix
            .iter()
            .chain(&self.ineq_matrix)
            .any(|row| row.len() != n)
        {
            return bad("constraint row length differs from objective length");
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || hi.is_nan() || lo > hi {
                return Err(Error::LpStructure(format!(
                    "variable {j} has invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        let finite = |v: &f64| v.is_finite();
        let all_finite = self.objective.iter().all(finite)
            && self.eq_rhs.iter().chain(&self.ineq_rhs).all(finite)
            && self.eq_matrix.iter().chain(&self.ineq_matrix).flatten().all(finite);
        if !all_finite {
            return bad("non-finite coefficient");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl LpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless the status is optimal.
    pub values: Vec<f64>,
    pub objective_value: f64,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> Self {
        let objective_value = match status {
            LpStatus::Unbounded => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        LpSolution {
            status,
            values: Vec::new(),
            objective_value,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Current value of each row's basic variable.
    basic_values: Vec<f64>,
    basis: Vec<usize>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    /// Columns that may never enter the basis.
    locked: Vec<bool>,
    reduced: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn price(&mut self, cost: &[f64]) {
        self.reduced = cost.to_vec();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (d, a) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
    }

    fn entering(&self) -> Option<(usize, f64)> {
        (0..self.reduced.len()).find_map(|j| {
            if self.is_basic[j] || self.locked[j] {
                return None;
            }
            let d = self.reduced[j];
            if !self.at_upper[j] && d < -OPTIMALITY_TOL && self.upper[j] > 0.0 {
                Some((j, 1.0))
            } else if self.at_upper[j] && d > OPTIMALITY_TOL {
                Some((j, -1.0))
            } else {
                None
            }
        })
    }

    fn step(&mut self) -> Result<Step> {
        let Some((col, dir)) = self.entering() else {
            return Ok(Step::Optimal);
        };
        self.pivots += 1;
        if self.pivots > MAX_PIVOTS {
            return Err(Error::LpIterationLimit(MAX_PIVOTS));
        }

        // (limit, basic variable index, row, leaves at upper)
        let mut best: Option<(f64, usize, usize, bool)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let alpha = dir * row[col];
            let b = self.basis[i];
            let candidate = if alpha > PIVOT_TOL {
                Some(((self.basic_values[i] / alpha).max(0.0), false))
            } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                Some((((self.upper[b] - self.basic_values[i]) / -alpha).max(0.0), true))
            } else {
                None
            };
            if let Some((limit, to_upper)) = candidate {
                let better = match best {
                    None => true,
                    Some((l, bv, _, _)) => limit < l || (limit == l && b < bv),
                };
                if better {
                    best = Some((limit, b, i, to_upper));
                }
            }
        }

        let flip = self.upper[col];
        let (theta, leaving) = match best {
            Some((limit, _, row, to_upper)) if limit < flip => (limit, Some((row, to_upper))),
            _ if flip.is_finite() => (flip, None),
            _ => return Ok(Step::Unbounded),
        };

        for (v, row) in self.basic_values.iter_mut().zip(&self.rows) {
            *v -= dir * theta * row[col];
        }
        let start = if self.at_upper[col] { self.upper[col] } else { 0.0 };

        match leaving {
            None => self.at_upper[col] = !self.at_upper[col],
            Some((r, to_upper)) => {
                let out = self.basis[r];
                self.is_basic[out] = false;
                self.at_upper[out] = to_upper;
                self.is_basic[col] = true;
                self.at_upper[col] = false;
                self.basis[r] = col;
                self.basic_values[r] = start + dir * theta;
                self.pivot(r, col);
            }
        }
        Ok(Step::Moved)
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for a in &mut self.rows[r] {
            *a /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (a, pr) in row.iter_mut().zip(&pivot_row) {
                    *a -= f * pr;
                }
                row[col] = 0.0;
            }
        }
        let f = self.reduced[col];
        if f != 0.0 {
            for (d, pr) in self.reduced.iter_mut().zip(&pivot_row) {
                *d -= f * pr;
            }
            self.reduced[col] = 0.0;
        }
    }

    fn run(&mut self) -> Result<bool> {
        loop {
            match self.step()? {
                Step::Optimal => return Ok(true),
                Step::Unbounded => return Ok(false),
                Step::Moved => {}
            }
        }
    }

    fn value(&self, j: usize) -> f64 {
        if self.is_basic[j] {
            let r = self.basis.iter().position(|&b| b == j).unwrap();
            self.basic_values[r]
        } else if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }
}

/// Solves `problem`. Infeasible and unbounded instances are reported through
/// the status; only malformed input is an error.
pub fn solve(problem: &LpProblem) -> Result<LpSolution> {
    problem.check()?;
    let n = problem.num_vars();
    let m_eq = problem.eq_rhs.len();
    let m_ub = problem.ineq_rhs.len();
    let m = m_eq + m_ub;

    // Shift every variable to a zero lower bound.
    let shift: Vec<f64> = problem.bounds.iter().map(|b| b.0).collect();
    let shifted_rhs = |row: &[f64], rhs: f64| rhs - row.iter().zip(&shift).map(|(a, l)| a * l).sum::<f64>();

    let slack0 = n;
    let art0 = n + m_ub;
    let cols = art0 + m;
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut needs_artificial = vec![false; m];

    for (i, (row, &b)) in problem.eq_matrix.iter().zip(&problem.eq_rhs).enumerate() {
        let b = shifted_rhs(row, b);
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        let mut t = vec![0.0; cols];
        for (dst, a) in t.iter_mut().zip(row) {
            *dst = sign * a;
        }
        t[art0 + i] = 1.0;
        rows.push(t);
        rhs.push(sign * b);
        basis.push(art0 + i);
        needs_artificial[i] = true;
    }
    for (k, (row, &b)) in problem.ineq_matrix.iter().zip(&problem.ineq_rhs).enumerate() {
        let i = m_eq + k;
        let b = shifted_rhs(row, b);
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        let mut t = vec![0.0; cols];
        for (dst, a) in t.iter_mut().zip(row) {
            *dst = sign * a;
        }
        t[slack0 + k] = sign;
        if sign > 0.0 {
            basis.push(slack0 + k);
        } else {
            t[art0 + i] = 1.0;
            basis.push(art0 + i);
            needs_artificial[i] = true;
        }
        rows.push(t);
        rhs.push(sign * b);
    }

    let mut upper = vec![f64::INFINITY; cols];
    for (j, &(lo, hi)) in problem.bounds.iter().enumerate() {
        upper[j] = hi - lo;
    }
    let mut locked = vec![false; cols];
    for i in 0..m {
        if !needs_artificial[i] {
            // Never part of the problem.
            locked[art0 + i] = true;
            upper[art0 + i] = 0.0;
        }
    }
    let mut is_basic = vec![false; cols];
    for &b in &basis {
        is_basic[b] = true;
    }

    let mut tab = Tableau {
        rows,
        basic_values: rhs,
        basis,
        upper,
        at_upper: vec![false; cols],
        is_basic,
        locked,
        reduced: Vec::new(),
        pivots: 0,
    };

    // Phase one: drive the artificials to zero.
    let mut phase_one = vec![0.0; cols];
    for i in 0..m {
        if needs_artificial[i] {
            phase_one[art0 + i] = 1.0;
        }
    }
    tab.price(&phase_one);
    tab.run()?;
    let infeasibility: f64 = (art0..cols).map(|j| tab.value(j)).sum();
    if infeasibility > FEASIBILITY_TOL {
        return Ok(LpSolution::without_point(LpStatus::Infeasible));
    }
    for j in art0..cols {
        tab.locked[j] = true;
        tab.upper[j] = 0.0;
        if !tab.is_basic[j] {
            tab.at_upper[j] = false;
        }
    }

    // Phase two on the original objective, as a minimisation.
    let mut cost = vec![0.0; cols];
    for (c, &o) in cost.iter_mut().zip(&problem.objective) {
        *c = -o;
    }
    tab.price(&cost);
    if !tab.run()? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded));
    }

    let values: Vec<f64> = (0..n)
        .map(|j| {
            let (lo, hi) = problem.bounds[j];
            (shift[j] + tab.value(j)).clamp(lo, hi)
        })
        .collect();
    let objective_value = dot(&problem.objective, &values);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective_value,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest violations of a claimed solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub equality: f64,
    pub inequality: f64,
    pub bounds: f64,
    /// `|c·x - reported objective|`.
    pub objective: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.equality
            .max(self.inequality)
            .max(self.bounds)
            .max(self.objective)
    }
}

/// Measures how well `solution` satisfies `problem`. A solution without a
/// point of the right length reports infinite residuals.
pub fn verify(problem: &LpProblem, solution: &LpSolution) -> Residuals {
    let x = &solution.values;
    if x.len() != problem.num_vars() {
        return Residuals {
            equality: f64::INFINITY,
            inequality: f64::INFINITY,
            bounds: f64::INFINITY,
            objective: f64::INFINITY,
        };
    }
    let equality = problem
        .eq_matrix
        .iter()
        .zip(&problem.eq_rhs)
        .map(|(row, b)| (dot(row, x) - b).abs())
        .fold(0.0, f64::max);
    let inequality = problem
        .ineq_matrix
        .iter()
        .zip(&problem.ineq_rhs)
        .map(|(row, b)| (dot(row, x) - b).max(0.0))
        .fold(0.0, f64::max);
    let bounds = x
        .iter()
        .zip(&problem.bounds)
        .map(|(v, &(lo, hi))| (lo - v).max(v - hi).max(0.0))
        .fold(0.0, f64::max);
    Residuals {
        equality,
        inequality,
        bounds,
        objective: (dot(&problem.objective, x) - solution.objective_value).abs(),
    }
}
