//! Halfspace-form polytopes and the set operations the invariance
//! computations need.
//!
//! Everything is done with support-function LPs and Fourier–Motzkin
//! elimination; no vertex enumeration and no explicit Minkowski sums.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{dot, norm, solve_max, HalfspaceSystem, LpResult, FEAS_TOL};

/// Default absolute tolerance for containment and equality on unit rows.
pub const CONTAINMENT_TOL: f64 = 1e-6;
/// A row is kept when its LP maximum beats the offset by more than this.
pub const REDUNDANCY_TOL: f64 = 1e-9;

/// Rows with coefficients below this (after normalization) count as zero.
const COEF_EPS: f64 = 1e-12;
/// Row counts above which per-row LP loops go parallel.
const PAR_ROWS: usize = 32;

/// Convex polyhedron `{x : Ax ≤ b}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeJson", into = "PolytopeJson")]
pub struct HPolytope {
    system: HalfspaceSystem,
}

/// A linearly mapped set `M·D` used as a Pontryagin-difference term.
#[derive(Clone, Debug)]
pub struct MappedSet {
    /// Maps the set's space into the host polytope's space (`host_dim × set_dim`).
    pub map: DMatrix<f64>,
    pub set: HPolytope,
}

impl MappedSet {
    pub fn new(map: DMatrix<f64>, set: HPolytope) -> Self {
        Self { map, set }
    }
}

impl HPolytope {
    pub fn new(system: HalfspaceSystem) -> Self {
        Self { system }
    }

    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        Ok(Self::new(HalfspaceSystem::new(dim, rows, offsets)?))
    }

    /// Axis-aligned box `lower ≤ x ≤ upper`.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim(format!(
                "box bounds of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        let n = lower.len();
        let mut sys = HalfspaceSystem::unconstrained(n);
        let mut e = vec![0.0; n];
        for i in 0..n {
            if !(lower[i].is_finite() && upper[i].is_finite()) {
                return Err(Error::Domain("box bounds must be finite".into()));
            }
            e[i] = 1.0;
            sys.push(&e, upper[i]);
            e[i] = -1.0;
            sys.push(&e, -lower[i]);
            e[i] = 0.0;
        }
        Ok(Self::new(sys))
    }

    /// Symmetric box `[-r, r]^n`.
    pub fn symmetric_box(radius: &[f64]) -> Result<Self> {
        let lower: Vec<f64> = radius.iter().map(|r| -r).collect();
        Self::from_box(&lower, radius)
    }

    /// The canonical empty set: the single row `0·x ≤ -1`.
    pub fn empty(dim: usize) -> Self {
        let mut sys = HalfspaceSystem::unconstrained(dim);
        sys.push(&vec![0.0; dim], -1.0);
        Self::new(sys)
    }

    /// All of `ℝ^dim`.
    pub fn universe(dim: usize) -> Self {
        Self::new(HalfspaceSystem::unconstrained(dim))
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn system(&self) -> &HalfspaceSystem {
        &self.system
    }

    /// Number of inequalities.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.system.len()
    }

    pub fn is_unconstrained(&self) -> bool {
        self.system.is_empty()
    }

    /// Unit-norm rows; trivially satisfied zero rows are dropped and a
    /// violated zero row collapses the whole set to [`HPolytope::empty`].
    pub fn normalized(&self) -> Self {
        let n = self.dim();
        let mut out = HalfspaceSystem::unconstrained(n);
        let mut row = vec![0.0; n];
        for (a, b) in self.system.rows() {
            let s = norm(a);
            if s <= COEF_EPS {
                if b < -FEAS_TOL {
                    return Self::empty(n);
                }
                continue;
            }
            for (r, v) in row.iter_mut().zip(a) {
                let x = v / s;
                *r = if x.abs() <= COEF_EPS { 0.0 } else { x };
            }
            out.push(&row, b / s);
        }
        Self::new(out)
    }

    fn has_violated_zero_row(&self) -> bool {
        self.system
            .rows()
            .any(|(a, b)| norm(a) <= COEF_EPS && b < -FEAS_TOL)
    }

    pub fn is_empty(&self) -> Result<bool> {
        if self.has_violated_zero_row() {
            return Ok(true);
        }
        let zero = vec![0.0; self.dim()];
        Ok(matches!(solve_max(&zero, &self.system)?, LpResult::Infeasible))
    }

    /// `max {direction·x : x ∈ P}`; `+∞` when unbounded, an error when empty.
    pub fn support(&self, direction: &[f64]) -> Result<f64> {
        match solve_max(direction, &self.system)? {
            LpResult::Optimal { value, .. } => Ok(value),
            LpResult::Unbounded => Ok(f64::INFINITY),
            LpResult::Infeasible => Err(Error::Domain("support of an empty polytope".into())),
        }
    }

    /// Maximizer and value of `direction·x`, `None` if unbounded.
    pub fn support_point(&self, direction: &[f64]) -> Result<Option<(Vec<f64>, f64)>> {
        match solve_max(direction, &self.system)? {
            LpResult::Optimal { x, value } => Ok(Some((x, value))),
            LpResult::Unbounded => Ok(None),
            LpResult::Infeasible => Err(Error::Domain("support of an empty polytope".into())),
        }
    }

    /// Row-stacked intersection.
    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope> {
        if self.dim() != other.dim() {
            return Err(Error::dim(format!(
                "intersect of dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut sys = self.system.clone();
        for (a, b) in other.system.rows() {
            sys.push(a, b);
        }
        Ok(Self::new(sys))
    }

    /// Intersect many polytopes of a common dimension.
    pub fn intersect_all<'a>(
        dim: usize,
        parts: impl IntoIterator<Item = &'a HPolytope>,
    ) -> Result<HPolytope> {
        parts
            .into_iter()
            .try_fold(Self::universe(dim), |acc, p| acc.intersect(p))
    }

    /// Cartesian product `self × other` over stacked coordinates.
    pub fn cartesian_product(&self, other: &HPolytope) -> HPolytope {
        let (n1, n2) = (self.dim(), other.dim());
        let mut sys = HalfspaceSystem::unconstrained(n1 + n2);
        let mut row = vec![0.0; n1 + n2];
        for (a, b) in self.system.rows() {
            row.fill(0.0);
            row[..n1].copy_from_slice(a);
            sys.push(&row, b);
        }
        for (a, b) in other.system.rows() {
            row.fill(0.0);
            row[n1..].copy_from_slice(a);
            sys.push(&row, b);
        }
        Self::new(sys)
    }

    /// `P ⊖ (M₁D₁ ⊕ … ⊕ MₖDₖ)`, each facet pulled in by the supports of the
    /// mapped sets. An empty term list returns `P` unchanged.
    pub fn pontryagin_diff_mapped(&self, terms: &[MappedSet]) -> Result<HPolytope> {
        for (j, t) in terms.iter().enumerate() {
            if t.map.nrows() != self.dim() || t.map.ncols() != t.set.dim() {
                return Err(Error::dim(format!(
                    "term {j}: map is {}×{}, expected {}×{}",
                    t.map.nrows(),
                    t.map.ncols(),
                    self.dim(),
                    t.set.dim()
                )));
            }
            if t.set.is_empty()? {
                return Err(Error::Domain(format!(
                    "term {j}: Pontryagin difference by an empty set"
                )));
            }
        }
        if terms.is_empty() {
            return Ok(self.clone());
        }
        if self.has_violated_zero_row() {
            return Ok(Self::empty(self.dim()));
        }
        let rows: Vec<(Vec<f64>, f64)> = self
            .system
            .rows()
            .map(|(a, b)| (a.to_vec(), b))
            .collect();
        let shrink = |(a, b): &(Vec<f64>, f64)| -> Result<f64> {
            let av = DVector::from_column_slice(a);
            let mut off = *b;
            for t in terms {
                let dir = t.map.tr_mul(&av);
                off -= t.set.support(dir.as_slice())?;
            }
            Ok(off)
        };
        let offsets: Vec<f64> = if rows.len() > PAR_ROWS {
            rows.par_iter().map(shrink).collect::<Result<_>>()?
        } else {
            rows.iter().map(shrink).collect::<Result<_>>()?
        };
        if offsets.iter().any(|o| !o.is_finite()) {
            return Ok(Self::empty(self.dim()));
        }
        let mut sys = HalfspaceSystem::unconstrained(self.dim());
        for ((a, _), o) in rows.iter().zip(offsets) {
            sys.push(a, o);
        }
        Ok(Self::new(sys))
    }

    /// `{z : M z + c ∈ P}` where `M` is `dim(P) × k`.
    pub fn preimage(&self, map: &DMatrix<f64>, shift: &[f64]) -> Result<HPolytope> {
        if map.nrows() != self.dim() || shift.len() != self.dim() {
            return Err(Error::dim(format!(
                "preimage map {}×{} with shift of length {} into dimension {}",
                map.nrows(),
                map.ncols(),
                shift.len(),
                self.dim()
            )));
        }
        let k = map.ncols();
        let mut sys = HalfspaceSystem::unconstrained(k);
        for (a, b) in self.system.rows() {
            let av = DVector::from_column_slice(a);
            let row = map.tr_mul(&av);
            sys.push(row.as_slice(), b - dot(a, shift));
        }
        Ok(Self::new(sys))
    }

    /// Orthogonal projection that removes the coordinates in `drop`, by
    /// Fourier–Motzkin elimination with redundancy removal after each step.
    pub fn eliminate(&self, drop: &[usize]) -> Result<HPolytope> {
        let n = self.dim();
        let mut to_drop: Vec<usize> = drop.to_vec();
        to_drop.sort_unstable();
        to_drop.dedup();
        if let Some(&bad) = to_drop.iter().find(|&&i| i >= n) {
            return Err(Error::dim(format!(
                "cannot eliminate coordinate {bad} of a {n}-dimensional polytope"
            )));
        }
        if to_drop.is_empty() {
            return Ok(self.clone());
        }
        let out_dim = n - to_drop.len();
        let mut cur = self.normalized();
        if cur.has_violated_zero_row() {
            return Ok(Self::empty(out_dim));
        }
        // Original index of each current column.
        let mut cols: Vec<usize> = (0..n).collect();
        while !to_drop.is_empty() {
            let (pick, _) = to_drop
                .iter()
                .enumerate()
                .map(|(slot, &orig)| {
                    let k = cols.iter().position(|&c| c == orig).unwrap();
                    let (mut pos, mut neg) = (0usize, 0usize);
                    for (a, _) in cur.system.rows() {
                        if a[k] > COEF_EPS {
                            pos += 1;
                        } else if a[k] < -COEF_EPS {
                            neg += 1;
                        }
                    }
                    (slot, pos * neg)
                })
                .min_by_key(|&(slot, cost)| (cost, to_drop[slot]))
                .unwrap();
            let orig = to_drop.remove(pick);
            let k = cols.iter().position(|&c| c == orig).unwrap();
            cur = fm_step(&cur, k)?;
            cols.remove(k);
            cur = cur.remove_redundancy()?;
            if cur.has_violated_zero_row() {
                return Ok(Self::empty(out_dim));
            }
        }
        Ok(cur)
    }

    /// Drop every row that does not change the set. Rows come back
    /// normalized; an empty input comes back as [`HPolytope::empty`].
    pub fn remove_redundancy(&self) -> Result<HPolytope> {
        let n = self.dim();
        let norm = self.normalized();
        if norm.has_violated_zero_row() {
            return Ok(Self::empty(n));
        }
        if norm.is_unconstrained() {
            return Ok(norm);
        }
        let Some((center, radius)) = norm.inscribed_ball(1.0)? else {
            return Ok(Self::empty(n));
        };
        if radius < -FEAS_TOL {
            return Ok(Self::empty(n));
        }
        let sys = dedup_rows(&norm.system);
        let q = sys.len();
        // None = undecided, Some(true) = facet, Some(false) = redundant.
        let mut verdict: Vec<Option<bool>> = vec![None; q];

        // Rows strictly slack over the bounding box are slack over P.
        if q > 4 * n && n > 0 {
            if let Some((lo, hi)) = Self::new(sys.clone()).bounding_box()? {
                for (i, (a, b)) in sys.rows().enumerate() {
                    let reach: f64 = a
                        .iter()
                        .zip(lo.iter().zip(&hi))
                        .map(|(c, (l, h))| (c * l).max(c * h))
                        .sum();
                    if reach < b - 1e-8 * (1.0 + b.abs()) {
                        verdict[i] = Some(false);
                    }
                }
            }
        }

        // The first wall a ray from an interior point hits is a facet.
        if radius > 1e-7 && n > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_fac7);
            let rays = (4 * q).clamp(32, 256);
            let mut dir = vec![0.0; n];
            for _ in 0..rays {
                for d in dir.iter_mut() {
                    *d = rng.gen_range(-1.0..1.0);
                }
                let mut best = (f64::INFINITY, usize::MAX);
                let mut second = f64::INFINITY;
                for (i, (a, b)) in sys.rows().enumerate() {
                    if verdict[i] == Some(false) {
                        continue;
                    }
                    let rate = dot(a, &dir);
                    if rate <= 1e-12 {
                        continue;
                    }
                    let t = (b - dot(a, &center)) / rate;
                    if t < best.0 {
                        second = best.0;
                        best = (t, i);
                    } else if t < second {
                        second = t;
                    }
                }
                if best.1 != usize::MAX && second - best.0 > 1e-9 * (1.0 + best.0.abs()) {
                    verdict[best.1] = Some(true);
                }
            }
        }

        let keep = if radius > 1e-7 && n > 0 {
            clarkson(&sys, &verdict, &center)?
        } else {
            sequential_lp(&sys, &verdict)?
        };
        Ok(Self::new(sys.retain_rows(|i| keep[i])))
    }

    /// Per-axis bounds, `None` if unbounded in some axis direction.
    pub fn bounding_box(&self) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let n = self.dim();
        let results: Vec<f64> = (0..2 * n)
            .into_par_iter()
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
                self.support(&e)
            })
            .collect::<Result<_>>()?;
        if results.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let hi = (0..n).map(|i| results[2 * i]).collect();
        let lo = (0..n).map(|i| -results[2 * i + 1]).collect();
        Ok(Some((lo, hi)))
    }

    /// `R ⊆ P` up to `tol` on unit rows. An empty `R` is contained in anything.
    pub fn contains_set(&self, other: &HPolytope, tol: f64) -> Result<bool> {
        if self.dim() != other.dim() {
            return Err(Error::dim(format!(
                "containment between dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        if other.is_empty()? {
            return Ok(true);
        }
        let outer = self.normalized();
        if outer.has_violated_zero_row() {
            return Ok(false);
        }
        let check = |i: usize| -> Result<bool> {
            let (a, b) = (outer.system.row(i), outer.system.offset(i));
            Ok(other.support(a)? <= b + tol)
        };
        let q = outer.len();
        if q > PAR_ROWS {
            let verdicts: Vec<bool> = (0..q).into_par_iter().map(check).collect::<Result<_>>()?;
            Ok(verdicts.into_iter().all(|v| v))
        } else {
            for i in 0..q {
                if !check(i)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }

    /// Membership with slack `tol` measured on unit rows.
    pub fn contains_point(&self, x: &[f64], tol: f64) -> bool {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        self.system.rows().all(|(a, b)| {
            let s = norm(a);
            if s <= COEF_EPS {
                b >= -FEAS_TOL
            } else {
                dot(a, x) - b <= tol * s
            }
        })
    }

    /// Mutual containment.
    pub fn equal(&self, other: &HPolytope, tol: f64) -> Result<bool> {
        Ok(self.contains_set(other, tol)? && other.contains_set(self, tol)?)
    }

    /// Center and radius of the largest inscribed ball. A negative radius
    /// means the set is empty; an unbounded radius is reported as `+∞`.
    pub fn chebyshev_center(&self) -> Result<(Vec<f64>, f64)> {
        const CAP: f64 = 1e12;
        match self.normalized().inscribed_ball(CAP)? {
            None => Ok((vec![0.0; self.dim()], f64::NEG_INFINITY)),
            Some((c, r)) if r >= CAP * (1.0 - 1e-9) => Ok((c, f64::INFINITY)),
            Some(cr) => Ok(cr),
        }
    }

    /// Ball LP on an already normalized system, radius capped at `cap`.
    fn inscribed_ball(&self, cap: f64) -> Result<Option<(Vec<f64>, f64)>> {
        if self.has_violated_zero_row() {
            return Ok(None);
        }
        let n = self.dim();
        let mut sys = HalfspaceSystem::unconstrained(n + 1);
        let mut row = vec![0.0; n + 1];
        for (a, b) in self.system.rows() {
            let s = norm(a);
            if s <= COEF_EPS {
                continue;
            }
            row[..n].copy_from_slice(a);
            row[n] = s;
            sys.push(&row, b);
        }
        row.fill(0.0);
        row[n] = 1.0;
        sys.push(&row, cap);
        let mut obj = vec![0.0; n + 1];
        obj[n] = 1.0;
        match solve_max(&obj, &sys)? {
            LpResult::Optimal { mut x, value } => {
                x.truncate(n);
                Ok(Some((x, value)))
            }
            LpResult::Infeasible => Ok(None),
            LpResult::Unbounded => Err(Error::Solver("capped ball LP unbounded".into())),
        }
    }

    /// Fix some coordinates and return the polytope over the rest, in
    /// increasing index order.
    pub fn slice(&self, fixed: &BTreeMap<usize, f64>) -> Result<HPolytope> {
        let n = self.dim();
        if let Some((&bad, _)) = fixed.iter().find(|(&i, _)| i >= n) {
            return Err(Error::dim(format!(
                "slice fixes coordinate {bad} of a {n}-dimensional polytope"
            )));
        }
        let free: Vec<usize> = (0..n).filter(|i| !fixed.contains_key(i)).collect();
        let mut sys = HalfspaceSystem::unconstrained(free.len());
        let mut row = vec![0.0; free.len()];
        for (a, b) in self.system.rows() {
            let shift: f64 = fixed.iter().map(|(&i, v)| a[i] * v).sum();
            for (r, &i) in row.iter_mut().zip(&free) {
                *r = a[i];
            }
            sys.push(&row, b - shift);
        }
        Ok(Self::new(sys))
    }
}

/// LP redundancy test of row `i` against the rows flagged in `pool`.
fn redundant_against(sys: &HalfspaceSystem, i: usize, pool: impl Fn(usize) -> bool) -> Result<bool> {
    let mut others = sys.retain_rows(|j| j != i && pool(j));
    let (a, b) = (sys.row(i), sys.offset(i));
    others.push(a, b + 1.0);
    match solve_max(a, &others)? {
        LpResult::Optimal { value, .. } => Ok(value <= b + REDUNDANCY_TOL),
        LpResult::Unbounded => Ok(false),
        LpResult::Infeasible => Err(Error::Solver(
            "redundancy test infeasible on a nonempty polytope".into(),
        )),
    }
}

/// Undecided rows tested one by one; rows found redundant leave the pool.
fn sequential_lp(sys: &HalfspaceSystem, verdict: &[Option<bool>]) -> Result<Vec<bool>> {
    let mut active: Vec<bool> = verdict.iter().map(|v| *v != Some(false)).collect();
    for i in 0..sys.len() {
        if verdict[i].is_none() && redundant_against(sys, i, |j| active[j])? {
            active[i] = false;
        }
    }
    Ok(active)
}

/// Output-sensitive redundancy removal (Clarkson): each undecided row is
/// tested by an LP over the facets found so far; when the optimizer lies
/// outside the polytope, the segment from the interior point to it crosses
/// a new facet first.
fn clarkson(sys: &HalfspaceSystem, verdict: &[Option<bool>], center: &[f64]) -> Result<Vec<bool>> {
    let (n, q) = (sys.dim(), sys.len());
    let mut keep: Vec<bool> = verdict.iter().map(|v| *v == Some(true)).collect();
    let mut removed: Vec<bool> = verdict.iter().map(|v| *v == Some(false)).collect();
    let mut basis = sys.retain_rows(|j| keep[j]);
    let slack: Vec<f64> = sys.rows().map(|(a, b)| b - dot(a, center)).collect();
    let mut dir = vec![0.0; n];
    for i in 0..q {
        if verdict[i].is_some() || keep[i] {
            continue;
        }
        let (a, b) = (sys.row(i), sys.offset(i));
        loop {
            let mut lp = basis.clone();
            lp.push(a, b + 1.0);
            let x = match solve_max(a, &lp)? {
                LpResult::Optimal { value, .. } if value <= b + REDUNDANCY_TOL => {
                    removed[i] = true;
                    break;
                }
                LpResult::Optimal { x, .. } => x,
                _ => return Err(Error::Solver("bounded redundancy LP failed".into())),
            };
            for ((d, xv), c) in dir.iter_mut().zip(&x).zip(center) {
                *d = xv - c;
            }
            // Rows of the basis hold on the whole segment; only new rows can be hit.
            let mut best = (f64::INFINITY, usize::MAX);
            let mut second = f64::INFINITY;
            for j in 0..q {
                if keep[j] || removed[j] {
                    continue;
                }
                let rate = dot(sys.row(j), &dir);
                if rate <= 1e-14 {
                    continue;
                }
                let t = slack[j] / rate;
                if t < best.0 {
                    second = best.0;
                    best = (t, j);
                } else if t < second {
                    second = t;
                }
            }
            let j = best.1;
            if j == usize::MAX || second - best.0 <= 1e-9 * (1.0 + best.0.abs()) {
                // Degenerate crossing: settle row i with a full LP.
                if redundant_against(sys, i, |k| !removed[k])? {
                    removed[i] = true;
                } else {
                    keep[i] = true;
                    basis.push(a, b);
                }
                break;
            }
            keep[j] = true;
            basis.push(sys.row(j), sys.offset(j));
            if j == i {
                break;
            }
        }
    }
    Ok(keep)
}

/// One Fourier–Motzkin step removing column `k`.
fn fm_step(p: &HPolytope, k: usize) -> Result<HPolytope> {
    let n = p.dim();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut out = HalfspaceSystem::unconstrained(n - 1);
    let strip = |a: &[f64]| -> Vec<f64> {
        a.iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, v)| *v)
            .collect()
    };
    for (i, (a, b)) in p.system.rows().enumerate() {
        if a[k] > COEF_EPS {
            pos.push(i);
        } else if a[k] < -COEF_EPS {
            neg.push(i);
        } else {
            out.push(&strip(a), b);
        }
    }
    let mut combo = vec![0.0; n];
    for &i in &pos {
        let (ai, bi) = (p.system.row(i), p.system.offset(i));
        for &j in &neg {
            let (aj, bj) = (p.system.row(j), p.system.offset(j));
            let (wi, wj) = (-aj[k], ai[k]);
            for (c, (x, y)) in combo.iter_mut().zip(ai.iter().zip(aj)) {
                *c = wi * x + wj * y;
            }
            combo[k] = 0.0;
            out.push(&strip(&combo), wi * bi + wj * bj);
        }
    }
    Ok(HPolytope::new(out).normalized())
}

/// Collapse rows with the same unit normal, keeping the tightest offset.
fn dedup_rows(sys: &HalfspaceSystem) -> HalfspaceSystem {
    let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut keep: Vec<(usize, f64)> = Vec::new();
    for (i, (a, b)) in sys.rows().enumerate() {
        let key: Vec<i64> = a.iter().map(|v| (v * 1e10).round() as i64).collect();
        match seen.get(&key) {
            Some(&slot) => {
                if b < keep[slot].1 {
                    keep[slot] = (i, b);
                }
            }
            None => {
                seen.insert(key, keep.len());
                keep.push((i, b));
            }
        }
    }
    let mut out = HalfspaceSystem::unconstrained(sys.dim());
    for (i, b) in keep {
        out.push(sys.row(i), b);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct PolytopeJson {
    dim: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<PolytopeJson> for HPolytope {
    type Error = Error;

    fn try_from(j: PolytopeJson) -> Result<Self> {
        HPolytope::from_rows(j.dim, j.a, j.b)
    }
}

impl From<HPolytope> for PolytopeJson {
    fn from(p: HPolytope) -> Self {
        PolytopeJson {
            dim: p.dim(),
            a: p.system.rows().map(|(a, _)| a.to_vec()).collect(),
            b: p.system.offsets().to_vec(),
        }
    }
}
