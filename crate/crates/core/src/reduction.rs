//! Reduced-order computation of the maximal robust controlled invariant set
//! of a delayed (and previewed) system.
//!
//! The τ-step state prediction `x̂` evolves as an n-dimensional delay-free
//! system. Its maximal invariant set `Ĉ` inside the shrunk safe set, pulled
//! back through the prediction map and intersected with the "first τ steps
//! stay safe" constraints and `X × U^τ × D_p^p`, is exactly the maximal
//! invariant set of the high-dimensional augmented system. The only
//! operation in the augmented space is an intersection.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariance::{max_invariant_set, FixedPointOptions};
use crate::polytope::{HPolytope, MappedSet};
use crate::system::{augmented_safe_set, AugmentedState, DelaySystemSpec, DisturbanceChannel, LinearSystem};

/// Augmented dimensions above which `c_ext` is not canonicalized by default.
pub const CANONICAL_DIM_LIMIT: usize = 40;

/// Membership slack on unit rows for online queries.
pub const MEMBER_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default)]
pub struct ReductionOptions {
    pub fixed_point: FixedPointOptions,
    /// `Some(false)` forces skipping the final redundancy removal;
    /// `None` canonicalizes when the augmented dimension is at most 40.
    pub canonicalize: Option<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub aux_fixed_point_s: f64,
    pub constraint_assembly_s: f64,
    pub canonicalization_s: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.aux_fixed_point_s + self.constraint_assembly_s + self.canonicalization_s
    }
}

#[derive(Clone, Debug)]
pub struct ReducedInvariantResult {
    pub aux_system: LinearSystem,
    /// `X ⊖ D_τ`, or `X̂` with preview.
    pub shrunk_safe_set: HPolytope,
    /// Invariant set of the auxiliary system.
    pub c_hat: HPolytope,
    /// `C₀ … C_{τ−1}, C_τ, S` over the augmented state.
    pub constraint_family: Vec<HPolytope>,
    /// Intersection of the family, canonical when `canonical` is set.
    pub c_ext: HPolytope,
    pub canonical: bool,
    pub converged: bool,
    pub maximal: bool,
    pub iterations: usize,
    pub timings: PhaseTimings,
}

impl ReducedInvariantResult {
    pub fn is_empty(&self) -> Result<bool> {
        if self.c_hat.is_empty()? {
            return Ok(true);
        }
        self.c_ext.is_empty()
    }
}

/// The reduction for one spec, with `A^k` cached for `k = 0..=τ`.
pub struct DelayReduction<'a> {
    spec: &'a DelaySystemSpec,
    powers: Vec<DMatrix<f64>>,
}

impl<'a> DelayReduction<'a> {
    pub fn new(spec: &'a DelaySystemSpec) -> Self {
        let n = spec.state_dim();
        let mut powers = Vec::with_capacity(spec.tau + 1);
        powers.push(DMatrix::identity(n, n));
        for k in 1..=spec.tau {
            let next = &spec.base.a * &powers[k - 1];
            powers.push(next);
        }
        Self { spec, powers }
    }

    pub fn spec(&self) -> &DelaySystemSpec {
        self.spec
    }

    /// `A^k`.
    pub fn power(&self, k: usize) -> &DMatrix<f64> {
        &self.powers[k]
    }

    fn is_previewed(&self, channel: usize) -> bool {
        self.spec.preview > 0 && self.spec.previewed_channel == Some(channel)
    }

    /// Prediction dynamics `x̂⁺ = A x̂ + B u + A^τ F₀ d₀ + A^{τ−p} F_p d_{p,f}`.
    pub fn build_aux(&self) -> LinearSystem {
        let (tau, p) = (self.spec.tau, self.spec.preview);
        let base = &self.spec.base;
        let channels = base
            .channels
            .iter()
            .enumerate()
            .map(|(i, ch)| {
                let k = if self.is_previewed(i) { tau - p } else { tau };
                DisturbanceChannel {
                    gain: &self.powers[k] * &ch.gain,
                    set: ch.set.clone(),
                }
            })
            .collect();
        LinearSystem {
            a: base.a.clone(),
            b: base.b.clone(),
            channels,
            state_space: base.state_space.clone(),
            input_set: base.input_set.clone(),
        }
    }

    /// Disturbance terms `A^{j−1} Fᵢ Dᵢ` that are unknown when predicting
    /// `k` steps ahead: `j = 1..k` for non-measurable channels and
    /// `j = 1..k−p` for the previewed one.
    fn error_terms(&self, k: usize) -> Vec<MappedSet> {
        let p = self.spec.preview;
        let mut terms = Vec::new();
        for (i, ch) in self.spec.base.channels.iter().enumerate() {
            let last = if self.is_previewed(i) { k.saturating_sub(p) } else { k };
            for j in 1..=last {
                terms.push(MappedSet::new(&self.powers[j - 1] * &ch.gain, ch.set.clone()));
            }
        }
        terms
    }

    /// Terms added when going from horizon `k − 1` to `k`.
    fn error_terms_step(&self, k: usize) -> Vec<MappedSet> {
        let p = self.spec.preview;
        let mut terms = Vec::new();
        for (i, ch) in self.spec.base.channels.iter().enumerate() {
            let j = if self.is_previewed(i) {
                if k <= p {
                    continue;
                }
                k - p
            } else {
                k
            };
            terms.push(MappedSet::new(&self.powers[j - 1] * &ch.gain, ch.set.clone()));
        }
        terms
    }

    /// `X ⊖ D_τ` (or `X̂` with preview).
    pub fn shrunk_safe(&self) -> Result<HPolytope> {
        self.spec
            .safe_set
            .pontryagin_diff_mapped(&self.error_terms(self.spec.tau))
    }

    /// Linear map from the augmented state to the known part of `x(k)`:
    /// `A^k x + Σ_{j=1}^{k} A^{j−1} B u_{k−j+1} + Σ_{j=max(1,k−p+1)}^{k} A^{j−1} F_p d_{p,k−j+1}`.
    pub fn prediction_map(&self, k: usize) -> DMatrix<f64> {
        let spec = self.spec;
        let (n, m, l) = (spec.state_dim(), spec.input_dim(), spec.preview_dim());
        let (tau, p) = (spec.tau, spec.preview);
        assert!(k <= tau, "prediction horizon beyond the delay");
        let mut map = DMatrix::zeros(n, spec.augmented_dim());
        map.view_mut((0, 0), (n, n)).copy_from(&self.powers[k]);
        for j in 1..=k {
            let slot = k - j;
            let block = &self.powers[j - 1] * &spec.base.b;
            map.view_mut((0, n + slot * m), (n, m)).copy_from(&block);
        }
        if let (Some(c), true) = (spec.previewed_channel, p > 0) {
            let gain = &spec.base.channels[c].gain;
            let d_off = n + m * tau;
            for j in (k + 1).saturating_sub(p).max(1)..=k {
                let slot = k - j;
                let block = &self.powers[j - 1] * gain;
                map.view_mut((0, d_off + slot * l), (n, l)).copy_from(&block);
            }
        }
        map
    }

    /// `C_k` for `0 ≤ k < τ`: `x(k)` stays in `X` for every disturbance.
    pub fn constraint_k(&self, k: usize) -> Result<HPolytope> {
        if k >= self.spec.tau {
            return Err(Error::Domain(format!(
                "constraint index {k} outside 0..{}",
                self.spec.tau
            )));
        }
        let target = self.spec.safe_set.pontryagin_diff_mapped(&self.error_terms(k))?;
        self.pull_back(&target, k)
    }

    /// `C_τ`: the prediction `x̂_τ` lies in `c_hat`.
    pub fn constraint_tau(&self, c_hat: &HPolytope) -> Result<HPolytope> {
        if c_hat.dim() != self.spec.state_dim() {
            return Err(Error::dim(format!(
                "Ĉ has dimension {}, expected {}",
                c_hat.dim(),
                self.spec.state_dim()
            )));
        }
        self.pull_back(c_hat, self.spec.tau)
    }

    fn pull_back(&self, target: &HPolytope, k: usize) -> Result<HPolytope> {
        let zero = vec![0.0; self.spec.state_dim()];
        target.preimage(&self.prediction_map(k), &zero)
    }

    /// Shrunk safe sets for horizons `0..=τ`, built incrementally.
    fn shrunk_by_horizon(&self) -> Result<Vec<HPolytope>> {
        let mut out = Vec::with_capacity(self.spec.tau + 1);
        let mut cur = self.spec.safe_set.clone();
        out.push(cur.clone());
        for k in 1..=self.spec.tau {
            cur = cur.pontryagin_diff_mapped(&self.error_terms_step(k))?;
            out.push(cur.clone());
        }
        Ok(out)
    }

    /// Full reduced computation.
    pub fn compute(&self, opts: &ReductionOptions) -> Result<ReducedInvariantResult> {
        let spec = self.spec;
        let tau = spec.tau;

        let t0 = Instant::now();
        let aux = self.build_aux();
        let shrunk = self.shrunk_by_horizon()?;
        let shrunk_safe = shrunk[tau].clone();
        let fixed = max_invariant_set(&aux, &shrunk_safe, &opts.fixed_point)?;
        let aux_time = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let mut family = Vec::with_capacity(tau + 2);
        for (k, target) in shrunk.iter().take(tau).enumerate() {
            family.push(self.pull_back(target, k)?);
        }
        family.push(self.constraint_tau(&fixed.set)?);
        family.push(augmented_safe_set(spec));
        let stacked = HPolytope::intersect_all(spec.augmented_dim(), &family)?;
        let assembly_time = t1.elapsed().as_secs_f64();

        let canonical = opts
            .canonicalize
            .unwrap_or(spec.augmented_dim() <= CANONICAL_DIM_LIMIT);
        let t2 = Instant::now();
        let c_ext = if canonical {
            stacked.remove_redundancy()?
        } else {
            stacked
        };
        let canon_time = t2.elapsed().as_secs_f64();

        Ok(ReducedInvariantResult {
            aux_system: aux,
            shrunk_safe_set: shrunk_safe,
            c_hat: fixed.set,
            constraint_family: family,
            c_ext,
            canonical,
            converged: fixed.converged,
            maximal: fixed.converged,
            iterations: fixed.iterations,
            timings: PhaseTimings {
                aux_fixed_point_s: aux_time,
                constraint_assembly_s: assembly_time,
                canonicalization_s: canon_time,
            },
        })
    }
}

/// Convenience wrapper around [`DelayReduction::compute`].
pub fn compute(spec: &DelaySystemSpec, opts: &ReductionOptions) -> Result<ReducedInvariantResult> {
    DelayReduction::new(spec).compute(opts)
}

/// Membership of an augmented state, evaluated constraint by constraint.
pub fn member(spec: &DelaySystemSpec, result: &ReducedInvariantResult, z: &AugmentedState) -> Result<bool> {
    z.check_dims(spec)?;
    let v = z.to_vec();
    Ok(member_vec(result, &v, MEMBER_TOL))
}

pub(crate) fn member_vec(result: &ReducedInvariantResult, z: &[f64], tol: f64) -> bool {
    result
        .constraint_family
        .iter()
        .all(|c| c.contains_point(z, tol))
}

// ---------------------------------------------------------------------------
// Bundle

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BundleFlags {
    pub converged: bool,
    pub maximal: bool,
    pub empty: bool,
    pub canonical: bool,
}

/// On-disk form of a [`ReducedInvariantResult`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultBundle {
    pub spec_hash: String,
    pub tau: usize,
    pub preview: usize,
    pub augmented_dim: usize,
    pub iterations: usize,
    pub c_hat: HPolytope,
    pub shrunk_safe_set: HPolytope,
    pub constraint_family: Vec<HPolytope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_ext: Option<HPolytope>,
    pub flags: BundleFlags,
    /// Wall-clock phase timings; omit them for byte-reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<PhaseTimings>,
}

impl ResultBundle {
    pub fn from_result(spec: &DelaySystemSpec, r: &ReducedInvariantResult) -> Result<Self> {
        Ok(Self {
            spec_hash: spec.hash()?,
            tau: spec.tau,
            preview: spec.preview,
            augmented_dim: spec.augmented_dim(),
            iterations: r.iterations,
            c_hat: r.c_hat.clone(),
            shrunk_safe_set: r.shrunk_safe_set.clone(),
            constraint_family: r.constraint_family.clone(),
            c_ext: r.canonical.then(|| r.c_ext.clone()),
            flags: BundleFlags {
                converged: r.converged,
                maximal: r.maximal,
                empty: r.is_empty()?,
                canonical: r.canonical,
            },
            timings: Some(r.timings),
        })
    }

    /// Rebuild the in-memory result; the system specification must be the one hashed.
    pub fn into_result(self, spec: &DelaySystemSpec) -> Result<ReducedInvariantResult> {
        if self.spec_hash != spec.hash()? {
            return Err(Error::InvalidSpec(
                "bundle was computed for a different system specification".into(),
            ));
        }
        let dim = spec.augmented_dim();
        if self.constraint_family.iter().any(|c| c.dim() != dim) {
            return Err(Error::dim("bundle constraint dimension mismatch"));
        }
        let c_ext = match self.c_ext {
            Some(c) => c,
            None => HPolytope::intersect_all(dim, &self.constraint_family)?,
        };
        Ok(ReducedInvariantResult {
            aux_system: DelayReduction::new(spec).build_aux(),
            shrunk_safe_set: self.shrunk_safe_set,
            c_hat: self.c_hat,
            constraint_family: self.constraint_family,
            c_ext,
            canonical: self.flags.canonical,
            converged: self.flags.converged,
            maximal: self.flags.maximal,
            iterations: self.iterations,
            timings: self.timings.unwrap_or_default(),
        })
    }
}
