//! Controlled predecessor and the fixed-point computation of the maximal
//! robust controlled invariant set of a delay-free linear system.

use crate::error::Result;
use crate::lp::HalfspaceSystem;
use crate::polytope::{HPolytope, CONTAINMENT_TOL};
use crate::system::LinearSystem;

#[derive(Clone, Copy, Debug)]
pub struct FixedPointOptions {
    pub max_iter: usize,
    /// Absolute tolerance of the set-equality termination test.
    pub tol: f64,
    /// Keep every iterate `V₀, V₁, …` in the result.
    pub keep_iterates: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: CONTAINMENT_TOL,
            keep_iterates: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FixedPointResult {
    /// The invariant set when `converged`, otherwise the last iterate (an
    /// outer approximation that must not be treated as invariant).
    pub set: HPolytope,
    pub converged: bool,
    /// Number of predecessor evaluations performed.
    pub iterations: usize,
    pub iterates: Vec<HPolytope>,
}

/// `{x : ∃u ∈ U, ∀dᵢ ∈ Dᵢ, Ax + Bu + Σ Fᵢdᵢ ∈ V}`.
pub fn pre(sys: &LinearSystem, target: &HPolytope) -> Result<HPolytope> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    if target.is_empty()? {
        return Ok(HPolytope::empty(n));
    }
    let shrunk = target.pontryagin_diff_mapped(&sys.disturbance_terms())?;
    if shrunk.is_empty()? {
        return Ok(HPolytope::empty(n));
    }
    // Lift to (x, u): a·(Ax + Bu) ≤ b together with u ∈ U.
    let mut lifted = HalfspaceSystem::unconstrained(n + m);
    let mut row = vec![0.0; n + m];
    for (a, b) in shrunk.system().rows() {
        for (j, r) in row[..n].iter_mut().enumerate() {
            *r = (0..n).map(|i| a[i] * sys.a[(i, j)]).sum();
        }
        for (j, r) in row[n..].iter_mut().enumerate() {
            *r = (0..n).map(|i| a[i] * sys.b[(i, j)]).sum();
        }
        lifted.push(&row, b);
    }
    for (g, h) in sys.input_set.system().rows() {
        row[..n].fill(0.0);
        row[n..].copy_from_slice(g);
        lifted.push(&row, h);
    }
    let inputs: Vec<usize> = (n..n + m).collect();
    HPolytope::new(lifted).eliminate(&inputs)
}

/// Iterate `V₀ = X`, `V_{k+1} = pre(V_k) ∩ X` to a fixed point.
pub fn max_invariant_set(
    sys: &LinearSystem,
    safe: &HPolytope,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    let mut current = safe.remove_redundancy()?;
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push(current.clone());
    }
    if current.is_empty()? {
        return Ok(FixedPointResult {
            set: current,
            converged: true,
            iterations: 0,
            iterates,
        });
    }
    for k in 1..=opts.max_iter {
        let next = pre(sys, &current)?.intersect(safe)?.remove_redundancy()?;
        if opts.keep_iterates {
            iterates.push(next.clone());
        }
        if next.is_empty()? {
            return Ok(FixedPointResult {
                set: next,
                converged: true,
                iterations: k,
                iterates,
            });
        }
        // V_{k+1} ⊆ V_k holds by monotonicity, so equality is the reverse inclusion.
        if next.contains_set(&current, opts.tol)? && current.contains_set(&next, opts.tol)? {
            return Ok(FixedPointResult {
                set: current,
                converged: true,
                iterations: k,
                iterates,
            });
        }
        current = next;
    }
    Ok(FixedPointResult {
        set: current,
        converged: false,
        iterations: opts.max_iter,
        iterates,
    })
}

/// `C ⊆ pre(C) ∩ X`.
pub fn is_invariant(sys: &LinearSystem, set: &HPolytope, safe: &HPolytope) -> Result<bool> {
    is_invariant_tol(sys, set, safe, CONTAINMENT_TOL)
}

pub fn is_invariant_tol(
    sys: &LinearSystem,
    set: &HPolytope,
    safe: &HPolytope,
    tol: f64,
) -> Result<bool> {
    if set.is_empty()? {
        return Ok(true);
    }
    let bound = pre(sys, set)?.intersect(safe)?;
    bound.contains_set(set, tol)
}
