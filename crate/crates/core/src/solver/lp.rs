//! Dense bounded-variable primal simplex.
//!
//! Bounds are handled implicitly: a nonbasic variable sits at its lower or
//! upper bound and may flip between them without a basis change. Pivoting
//! uses the smallest-index rule for both the entering and the leaving
//! variable, so the path taken is a deterministic function of the input.

use std::fmt;

use thiserror::Error;

/// Absolute feasibility tolerance on scaled rows.
pub const FEAS_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    LessEq,
    Eq,
    GreaterEq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize c·x  s.t.  rows, lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("constraint {row} has {got} coefficients, expected {expected}")]
    RowLength {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("bound vectors have lengths {lower}/{upper}, expected {expected}")]
    BoundLength {
        lower: usize,
        upper: usize,
        expected: usize,
    },
    #[error("variable {0} has lower bound above upper bound")]
    CrossedBounds(usize),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("simplex exceeded {MAX_ITERATIONS} iterations")]
    IterationLimit,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coefficients: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coefficients,
            relation,
            rhs,
        });
        self
    }

    pub fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::BoundLength {
                lower: self.lower.len(),
                upper: self.upper.len(),
                expected: n,
            });
        }
        for (row, c) in self.constraints.iter().enumerate() {
            if c.coefficients.len() != n {
                return Err(LpError::RowLength {
                    row,
                    got: c.coefficients.len(),
                    expected: n,
                });
            }
            if !c.rhs.is_finite() || c.coefficients.iter().any(|a| !a.is_finite()) {
                return Err(LpError::NonFinite("constraint"));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(LpError::CrossedBounds(j));
            }
        }
        Ok(())
    }

    /// Largest scaled violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let scale = row_scale(&c.coefficients);
            let lhs: f64 = c.coefficients.iter().zip(x).map(|(a, v)| a * v).sum();
            let r = (lhs - c.rhs) / scale;
            let v = match c.relation {
                Relation::LessEq => r.max(0.0),
                Relation::GreaterEq => (-r).max(0.0),
                Relation::Eq => r.abs(),
            };
            worst = worst.max(v);
        }
        for (j, v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }
}

fn row_scale(coefficients: &[f64]) -> f64 {
    let m = coefficients.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

impl fmt::Display for LinearProgram {
    /// Plain-text dump, one row per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let term = |f: &mut fmt::Formatter<'_>, coeffs: &[f64]| -> fmt::Result {
            let mut first = true;
            for (j, a) in coeffs.iter().enumerate().filter(|(_, a)| **a != 0.0) {
                if first {
                    write!(f, "{a} x{j}")?;
                } else if *a < 0.0 {
                    write!(f, " - {} x{j}", -a)?;
                } else {
                    write!(f, " + {a} x{j}")?;
                }
                first = false;
            }
            if first {
                write!(f, "0")?;
            }
            Ok(())
        };
        write!(f, "minimize ")?;
        term(f, &self.objective)?;
        writeln!(f)?;
        for c in &self.constraints {
            write!(f, "  ")?;
            term(f, &c.coefficients)?;
            let op = match c.relation {
                Relation::LessEq => "<=",
                Relation::Eq => "=",
                Relation::GreaterEq => ">=",
            };
            writeln!(f, " {op} {}", c.rhs)?;
        }
        for j in 0..self.num_vars() {
            writeln!(f, "  {} <= x{j} <= {}", self.lower[j], self.upper[j])?;
        }
        Ok(())
    }
}

/// How an original variable maps onto internal nonnegative-lower-bound
/// columns.
#[derive(Clone, Copy)]
enum Column {
    /// `x = l + y`, `0 ≤ y ≤ u - l`.
    Shifted { col: usize, offset: f64 },
    /// `x = u - y`, `y ≥ 0` (lower bound is −∞).
    Mirrored { col: usize, offset: f64 },
    /// `x = y⁺ - y⁻`.
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// `B⁻¹A`, one row per constraint.
    rows: Vec<Vec<f64>>,
    /// Current value of the basic variable of each row.
    values: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, q: usize) {
        let piv = self.rows[r][q];
        for v in &mut self.rows[r] {
            *v /= piv;
        }
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[q];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[q] = 0.0;
            }
        }
        self.rows[r] = pivot_row;
        self.basis[r] = q;
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    /// Runs simplex iterations minimizing `cost` from the current basis.
    /// Returns `false` when the objective is unbounded below.
    fn optimize(&mut self, cost: &[f64]) -> Result<bool, LpError> {
        let n = self.upper.len();
        let m = self.rows.len();
        let mut is_basic = vec![false; n];
        for &b in &self.basis {
            is_basic[b] = true;
        }
        for _ in 0..MAX_ITERATIONS {
            let mut entering = None;
            for j in 0..n {
                if is_basic[j] || self.upper[j] == 0.0 {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..m {
                    d -= cost[self.basis[i]] * self.rows[i][j];
                }
                if (!self.at_upper[j] && d < -COST_TOL) || (self.at_upper[j] && d > COST_TOL) {
                    entering = Some(j);
                    break;
                }
            }
            let Some(q) = entering else {
                return Ok(true);
            };
            // x_q moves by dir * step; basic x_i moves by -alpha_i * step.
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };
            let mut best_step = self.upper[q];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..m {
                let alpha = self.rows[i][q] * dir;
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let x = self.values[i];
                let (step, to_upper) = if alpha > 0.0 {
                    (x.max(0.0) / alpha, false)
                } else if self.upper[b].is_finite() {
                    ((self.upper[b] - x).max(0.0) / -alpha, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => step <= best_step,
                    Some((li, _)) => step < best_step || (step == best_step && b < self.basis[li]),
                };
                if better {
                    best_step = step;
                    leave = Some((i, to_upper));
                }
            }
            if best_step.is_infinite() {
                return Ok(false);
            }
            for i in 0..m {
                self.values[i] -= self.rows[i][q] * dir * best_step;
            }
            match leave {
                None => self.at_upper[q] = !self.at_upper[q],
                Some((r, to_upper)) => {
                    let entering_value = self.nonbasic_value(q) + dir * best_step;
                    let leaving = self.basis[r];
                    self.pivot(r, q);
                    self.values[r] = entering_value;
                    self.at_upper[q] = false;
                    self.at_upper[leaving] = to_upper;
                    is_basic[leaving] = false;
                    is_basic[q] = true;
                }
            }
        }
        Err(LpError::IterationLimit)
    }
}

/// Solves `lp` to optimality, or classifies it as infeasible or unbounded.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check()?;
    let n_orig = lp.num_vars();

    // Map original variables onto columns with lower bound 0.
    let mut columns = Vec::with_capacity(n_orig);
    let mut col_upper = Vec::new();
    let mut col_cost = Vec::new();
    for j in 0..n_orig {
        let (l, u, c) = (lp.lower[j], lp.upper[j], lp.objective[j]);
        if l.is_finite() {
            columns.push(Column::Shifted {
                col: col_upper.len(),
                offset: l,
            });
            col_upper.push(u - l);
            col_cost.push(c);
        } else if u.is_finite() {
            columns.push(Column::Mirrored {
                col: col_upper.len(),
                offset: u,
            });
            col_upper.push(f64::INFINITY);
            col_cost.push(-c);
        } else {
            let pos = col_upper.len();
            columns.push(Column::Split { pos, neg: pos + 1 });
            col_upper.extend([f64::INFINITY, f64::INFINITY]);
            col_cost.extend([c, -c]);
        }
    }
    let n_struct = col_upper.len();

    // Rows in terms of internal columns, scaled, with slacks.
    let m = lp.constraints.len();
    let n_slack = lp
        .constraints
        .iter()
        .filter(|c| c.relation != Relation::Eq)
        .count();
    let n_total = n_struct + n_slack + m;
    let mut rows = vec![vec![0.0; n_total]; m];
    let mut values = vec![0.0; m];
    let mut slack = n_struct;
    for (i, c) in lp.constraints.iter().enumerate() {
        let scale = row_scale(&c.coefficients);
        let mut rhs = c.rhs;
        for (j, &a) in c.coefficients.iter().enumerate() {
            match columns[j] {
                Column::Shifted { col, offset } => {
                    rows[i][col] = a / scale;
                    rhs -= a * offset;
                }
                Column::Mirrored { col, offset } => {
                    rows[i][col] = -a / scale;
                    rhs -= a * offset;
                }
                Column::Split { pos, neg } => {
                    rows[i][pos] = a / scale;
                    rows[i][neg] = -a / scale;
                }
            }
        }
        match c.relation {
            Relation::LessEq => {
                rows[i][slack] = 1.0;
                slack += 1;
            }
            Relation::GreaterEq => {
                rows[i][slack] = -1.0;
                slack += 1;
            }
            Relation::Eq => {}
        }
        let rhs = rhs / scale;
        // Artificial with sign chosen so it starts nonnegative.
        let art = n_struct + n_slack + i;
        if rhs < 0.0 {
            for v in rows[i].iter_mut() {
                *v = -*v;
            }
        }
        rows[i][art] = 1.0;
        values[i] = rhs.abs();
    }

    let mut upper = col_upper.clone();
    upper.extend(std::iter::repeat_n(f64::INFINITY, n_slack + m));
    let mut tab = Tableau {
        rows,
        values,
        upper,
        basis: (n_struct + n_slack..n_total).collect(),
        at_upper: vec![false; n_total],
    };

    let mut phase1 = vec![0.0; n_total];
    for c in phase1.iter_mut().skip(n_struct + n_slack) {
        *c = 1.0;
    }
    tab.optimize(&phase1)?;
    let infeasibility: f64 = (0..m)
        .filter(|&i| tab.basis[i] >= n_struct + n_slack)
        .map(|i| tab.values[i])
        .sum();
    if infeasibility > FEAS_TOL {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            values: vec![f64::NAN; n_orig],
            objective: f64::NAN,
        });
    }
    // Pin artificials at zero for phase II.
    for j in n_struct + n_slack..n_total {
        tab.upper[j] = 0.0;
        tab.at_upper[j] = false;
    }
    let mut phase2 = col_cost.clone();
    phase2.extend(std::iter::repeat_n(0.0, n_slack + m));
    if !tab.optimize(&phase2)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: vec![f64::NAN; n_orig],
            objective: f64::NEG_INFINITY,
        });
    }

    let mut internal = vec![0.0; n_total];
    for j in 0..n_total {
        internal[j] = tab.nonbasic_value(j);
    }
    for (i, &b) in tab.basis.iter().enumerate() {
        internal[b] = tab.values[i];
    }
    let values: Vec<f64> = columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let v = match *col {
                Column::Shifted { col, offset } => {
                    offset + internal[col].clamp(0.0, col_upper[col])
                }
                Column::Mirrored { col, offset } => offset - internal[col].max(0.0),
                Column::Split { pos, neg } => internal[pos] - internal[neg],
            };
            v.clamp(lp.lower[j], lp.upper[j])
        })
        .collect();
    let objective = lp.objective.iter().zip(&values).map(|(c, x)| c * x).sum();
    debug_assert!(
        lp.max_violation(&values) <= FEAS_TOL * 10.0,
        "optimal point violates constraints by {}\n{lp}",
        lp.max_violation(&values)
    );
    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective,
    })
}
