//! Dense linear programming over halfspace systems.
//!
//! Every geometric query in this crate reduces to `max c·x s.t. Ax ≤ b` with
//! `x` free. The solver works on the dual `min b·y s.t. Aᵀy = c, y ≥ 0`,
//! whose tableau has only `dim` rows, and reads the primal optimizer off the
//! simplex multipliers. Problems here are small (a few dozen columns, a few
//! hundred rows), so a dense two-phase tableau is plenty.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Primal feasibility tolerance on normalized rows.
pub const FEAS_TOL: f64 = 1e-8;
/// Reduced-cost tolerance.
pub const OPT_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_SWITCH: usize = 40;

/// A system of linear inequalities `{x : Ax ≤ b}` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfspaceSystem {
    dim: usize,
    normals: Vec<f64>,
    offsets: Vec<f64>,
}

impl HalfspaceSystem {
    /// Build from row vectors. Fails on ragged rows, length mismatch or
    /// non-finite entries.
    pub fn new(dim: usize, rows: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if rows.len() != offsets.len() {
            return Err(Error::dim(format!(
                "{} normal rows but {} offsets",
                rows.len(),
                offsets.len()
            )));
        }
        let mut normals = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::dim(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            normals.extend_from_slice(row);
        }
        Self::from_flat(dim, normals, offsets)
    }

    /// Build from a row-major flat coefficient buffer.
    pub fn from_flat(dim: usize, normals: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        if normals.len() != dim * offsets.len() {
            return Err(Error::dim(format!(
                "coefficient buffer of length {} does not match {} rows of dimension {dim}",
                normals.len(),
                offsets.len()
            )));
        }
        if normals.iter().chain(offsets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("halfspace system has non-finite entries".into()));
        }
        Ok(Self {
            dim,
            normals,
            offsets,
        })
    }

    /// The unconstrained system over `dim` coordinates.
    pub fn unconstrained(dim: usize) -> Self {
        Self {
            dim,
            normals: Vec::new(),
            offsets: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.normals[i * self.dim..(i + 1) * self.dim]
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.row(i), self.offsets[i]))
    }

    /// Append one inequality. Non-finite data is a caller bug.
    pub fn push(&mut self, normal: &[f64], offset: f64) {
        assert_eq!(normal.len(), self.dim, "row dimension mismatch");
        debug_assert!(offset.is_finite() && normal.iter().all(|v| v.is_finite()));
        self.normals.extend_from_slice(normal);
        self.offsets.push(offset);
    }

    /// Keep only the rows whose index satisfies `keep`.
    pub fn retain_rows(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut out = Self::unconstrained(self.dim);
        for i in 0..self.len() {
            if keep(i) {
                out.push(self.row(i), self.offsets[i]);
            }
        }
        out
    }

    /// Largest violation `max_i (a_i·x − b_i)`, or `-inf` for an empty list.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows()
            .map(|(a, b)| dot(a, x) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Outcome of [`solve_max`]. The optimizer and value exist only for
/// [`LpStatus::Optimal`].
#[derive(Clone, Debug, PartialEq)]
pub enum LpResult {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpResult {
    pub fn status(&self) -> LpStatus {
        match self {
            LpResult::Optimal { .. } => LpStatus::Optimal,
            LpResult::Infeasible => LpStatus::Infeasible,
            LpResult::Unbounded => LpStatus::Unbounded,
        }
    }

    pub fn optimizer(&self) -> Option<&[f64]> {
        match self {
            LpResult::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            LpResult::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

/// Maximize `objective·x` over `{x : Ax ≤ b}`.
pub fn solve_max(objective: &[f64], constraints: &HalfspaceSystem) -> Result<LpResult> {
    if objective.len() != constraints.dim() {
        return Err(Error::dim(format!(
            "objective has length {} but constraints have dimension {}",
            objective.len(),
            constraints.dim()
        )));
    }
    if objective.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("objective has non-finite entries".into()));
    }
    let n = constraints.dim();

    // Normalize rows; zero rows are either trivially true or prove infeasibility.
    let mut rows = Vec::with_capacity(constraints.len() * n);
    let mut rhs = Vec::with_capacity(constraints.len());
    for (a, b) in constraints.rows() {
        let s = norm(a);
        if s <= 1e-300 {
            if b < -FEAS_TOL {
                return Ok(LpResult::Infeasible);
            }
            continue;
        }
        rows.extend(a.iter().map(|v| v / s));
        rhs.push(b / s);
    }
    let scale = norm(objective);
    let c: Vec<f64> = if scale > 0.0 {
        objective.iter().map(|v| v / scale).collect()
    } else {
        vec![0.0; n]
    };
    let problem = Problem {
        n,
        rows: &rows,
        rhs: &rhs,
    };

    let mut last_err = None;
    for rule in [PivotRule::DantzigThenBland, PivotRule::Bland] {
        match problem.solve(&c, rule) {
            Ok(Solved::Optimal(x)) => {
                let value = dot(objective, &x);
                return Ok(LpResult::Optimal { x, value });
            }
            Ok(Solved::Infeasible) => return Ok(LpResult::Infeasible),
            Ok(Solved::Unbounded) => return Ok(LpResult::Unbounded),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Solver("no pivot rule succeeded".into())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PivotRule {
    DantzigThenBland,
    Bland,
}

enum Solved {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
}

/// Normalized primal data, rows of unit norm.
struct Problem<'a> {
    n: usize,
    rows: &'a [f64],
    rhs: &'a [f64],
}

impl Problem<'_> {
    fn q(&self) -> usize {
        self.rhs.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n..(i + 1) * self.n]
    }

    fn solve(&self, c: &[f64], rule: PivotRule) -> Result<Solved> {
        let n = self.n;
        let q = self.q();
        if n == 0 {
            return Ok(Solved::Optimal(Vec::new()));
        }
        if q == 0 {
            return Ok(if c.iter().all(|v| *v == 0.0) {
                Solved::Optimal(vec![0.0; n])
            } else {
                Solved::Unbounded
            });
        }
        match self.dual_simplex(c, rule)? {
            DualOutcome::Optimal(x) => Ok(Solved::Optimal(x)),
            DualOutcome::DualUnbounded => Ok(Solved::Infeasible),
            DualOutcome::DualInfeasible => {
                // Either the primal is infeasible or it is unbounded; a pure
                // feasibility solve (zero objective) always has a dual start.
                match self.dual_simplex(&vec![0.0; n], rule)? {
                    DualOutcome::Optimal(_) => Ok(Solved::Unbounded),
                    DualOutcome::DualUnbounded => Ok(Solved::Infeasible),
                    DualOutcome::DualInfeasible => Err(Error::Solver(
                        "zero-objective dual reported infeasible".into(),
                    )),
                }
            }
        }
    }

    fn dual_simplex(&self, c: &[f64], rule: PivotRule) -> Result<DualOutcome> {
        let n = self.n;
        let q = self.q();
        let mut t = Tableau::new(n, q);
        let mut signs = vec![1.0; n];
        for j in 0..n {
            let s = if c[j] < 0.0 { -1.0 } else { 1.0 };
            signs[j] = s;
            for i in 0..q {
                t.set(j, i, s * self.row(i)[j]);
            }
            t.set(j, q + j, 1.0);
            t.set_rhs(j, s * c[j]);
            t.basis[j] = q + j;
        }

        // Phase 1: minimize the sum of artificials.
        for k in 0..q {
            let mut d = 0.0;
            for j in 0..n {
                d -= t.get(j, k);
            }
            t.obj[k] = d;
        }
        let mut z = 0.0;
        for j in 0..n {
            z += t.rhs(j);
        }
        t.obj[t.cols] = -z;
        match t.run(q + n, rule)? {
            RunEnd::Optimal => {}
            RunEnd::Unbounded => {
                return Err(Error::Solver("phase one reported unbounded".into()));
            }
        }
        let infeasibility = -t.obj[t.cols];
        if infeasibility > FEAS_TOL {
            return Ok(DualOutcome::DualInfeasible);
        }

        // Drive remaining artificials out of the basis where possible.
        for r in 0..n {
            if t.basis[r] < q {
                continue;
            }
            let mut best = None;
            let mut best_abs = 1e-9;
            for k in 0..q {
                let v = t.get(r, k).abs();
                if v > best_abs && !t.basis.contains(&k) {
                    best_abs = v;
                    best = Some(k);
                }
            }
            if let Some(k) = best {
                t.set_rhs(r, 0.0);
                t.pivot(r, k);
            }
        }

        // Phase 2: minimize b·y; artificials may not re-enter.
        let cost = |k: usize| if k < q { self.rhs[k] } else { 0.0 };
        for k in 0..t.cols {
            let mut d = cost(k);
            for r in 0..n {
                d -= cost(t.basis[r]) * t.get(r, k);
            }
            t.obj[k] = d;
        }
        let mut z = 0.0;
        for r in 0..n {
            z += cost(t.basis[r]) * t.rhs(r);
        }
        t.obj[t.cols] = -z;
        match t.run(q, rule)? {
            RunEnd::Unbounded => return Ok(DualOutcome::DualUnbounded),
            RunEnd::Optimal => {}
        }

        let mut x: Vec<f64> = (0..n).map(|j| -signs[j] * t.obj[q + j]).collect();
        let tol = FEAS_TOL * self.rhs.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        let violation = self.max_violation(&x);
        if violation > tol {
            // Re-solve the active rows directly to shed tableau round-off.
            let basic: Vec<usize> = t.basis.iter().copied().filter(|&k| k < q).collect();
            if basic.len() == n {
                let m = DMatrix::from_fn(n, n, |r, col| self.row(basic[r])[col]);
                let rhs = DVector::from_iterator(n, basic.iter().map(|&i| self.rhs[i]));
                if let Some(sol) = m.lu().solve(&rhs) {
                    let refined: Vec<f64> = sol.iter().copied().collect();
                    if self.max_violation(&refined) < violation {
                        x = refined;
                    }
                }
            }
            let violation = self.max_violation(&x);
            if violation > tol {
                return Err(Error::Solver(format!(
                    "optimizer violates constraints by {violation:e}"
                )));
            }
        }
        Ok(DualOutcome::Optimal(x))
    }

    fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.q())
            .map(|i| dot(self.row(i), x) - self.rhs[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

enum DualOutcome {
    Optimal(Vec<f64>),
    DualInfeasible,
    DualUnbounded,
}

enum RunEnd {
    Optimal,
    Unbounded,
}

/// Dense simplex tableau for `min cost·y, My = rhs, y ≥ 0`. The objective
/// row holds reduced costs and, in its last slot, minus the objective.
struct Tableau {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(rows: usize, q: usize) -> Self {
        let cols = q + rows;
        Self {
            rows,
            cols,
            data: vec![0.0; rows * (cols + 1)],
            obj: vec![0.0; cols + 1],
            basis: vec![0; rows],
        }
    }

    #[inline]
    fn get(&self, r: usize, k: usize) -> f64 {
        self.data[r * (self.cols + 1) + k]
    }

    #[inline]
    fn set(&mut self, r: usize, k: usize, v: f64) {
        self.data[r * (self.cols + 1) + k] = v;
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.cols + 1) + self.cols]
    }

    fn set_rhs(&mut self, r: usize, v: f64) {
        let c = self.cols;
        self.set(r, c, v);
    }

    fn pivot(&mut self, r: usize, k: usize) {
        let w = self.cols + 1;
        let p = self.get(r, k);
        {
            let row = &mut self.data[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[k] = 1.0;
        }
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for other in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = other[k];
            if f != 0.0 {
                for (o, pv) in other.iter_mut().zip(prow.iter()) {
                    *o -= f * pv;
                }
                other[k] = 0.0;
            }
        }
        let f = self.obj[k];
        if f != 0.0 {
            for (o, pv) in self.obj.iter_mut().zip(prow.iter()) {
                *o -= f * pv;
            }
            self.obj[k] = 0.0;
        }
        self.basis[r] = k;
    }

    /// Pivot until optimal; columns at or beyond `enter_limit` never enter.
    fn run(&mut self, enter_limit: usize, rule: PivotRule) -> Result<RunEnd> {
        let max_iter = 50 * (self.cols + self.rows) + 500;
        let mut bland = rule == PivotRule::Bland;
        let mut degenerate_run = 0;
        for _ in 0..max_iter {
            let Some(k) = self.entering(enter_limit, bland) else {
                return Ok(RunEnd::Optimal);
            };
            let Some(r) = self.leaving(k, bland) else {
                return Ok(RunEnd::Unbounded);
            };
            if self.rhs(r).abs() <= 1e-14 {
                degenerate_run += 1;
                if degenerate_run >= DEGENERATE_SWITCH {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, k);
            for rr in 0..self.rows {
                if self.rhs(rr) < 0.0 {
                    self.set_rhs(rr, 0.0);
                }
            }
        }
        Err(Error::Solver(format!(
            "iteration limit {max_iter} reached ({} rows, {} columns)",
            self.rows, self.cols
        )))
    }

    fn entering(&self, limit: usize, bland: bool) -> Option<usize> {
        let mut best = None;
        let mut best_val = -OPT_TOL;
        for k in 0..limit {
            let d = self.obj[k];
            if d < best_val {
                if bland {
                    return Some(k);
                }
                best_val = d;
                best = Some(k);
            }
        }
        best
    }

    fn leaving(&self, k: usize, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64, f64)> = None;
        for r in 0..self.rows {
            let a = self.get(r, k);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(r) / a;
            best = match best {
                None => Some((r, ratio, a)),
                Some((br, bratio, ba)) => {
                    let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                    let better = if tie {
                        if bland {
                            self.basis[r] < self.basis[br]
                        } else {
                            a > ba
                        }
                    } else {
                        ratio < bratio
                    };
                    if better {
                        Some((r, ratio, a))
                    } else {
                        Some((br, bratio, ba))
                    }
                }
            };
        }
        best.map(|(r, _, _)| r)
    }
}
