//! Online safety supervision and closed-loop simulation of the delayed
//! system with delay and preview buffers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_max, HalfspaceSystem, LpResult};
use crate::polytope::HPolytope;
use crate::reduction::{member_vec, DelayReduction, ReducedInvariantResult, MEMBER_TOL};
use crate::signal::{DisturbanceSignal, SignalSource};
use crate::system::{augment, AugmentedState, DelaySystemSpec, LinearSystem};

/// `u_nom = −K z`, or zero.
#[derive(Clone, Debug, PartialEq)]
pub enum Controller {
    Zero,
    Gain(DMatrix<f64>),
}

impl Controller {
    fn nominal(&self, z: &[f64], m: usize) -> Result<Vec<f64>> {
        match self {
            Controller::Zero => Ok(vec![0.0; m]),
            Controller::Gain(k) => {
                if k.nrows() != m || k.ncols() != z.len() {
                    return Err(Error::dim(format!(
                        "gain is {}x{}, expected {m}x{}",
                        k.nrows(),
                        k.ncols(),
                        z.len()
                    )));
                }
                Ok((-(k * DVector::from_column_slice(z))).iter().copied().collect())
            }
        }
    }
}

/// Online part of the supervisor: `T = Ĉ ⊖ (aux disturbance terms)` and the
/// prediction map `z ↦ x̂_τ`.
pub struct Supervisor<'a> {
    spec: &'a DelaySystemSpec,
    result: &'a ReducedInvariantResult,
    target: HPolytope,
    prediction: DMatrix<f64>,
}

impl<'a> Supervisor<'a> {
    pub fn new(spec: &'a DelaySystemSpec, result: &'a ReducedInvariantResult) -> Result<Self> {
        let target = result
            .c_hat
            .pontryagin_diff_mapped(&result.aux_system.disturbance_terms())?;
        let prediction = DelayReduction::new(spec).prediction_map(spec.tau);
        Ok(Self {
            spec,
            result,
            target,
            prediction,
        })
    }

    /// `x̂_τ` of an augmented state vector.
    pub fn predict(&self, z: &[f64]) -> Vec<f64> {
        (&self.prediction * DVector::from_column_slice(z)).iter().copied().collect()
    }

    pub fn is_member(&self, z: &[f64]) -> bool {
        member_vec(self.result, z, MEMBER_TOL)
    }

    /// `{u ∈ U : A x̂ + B u ∈ T}` for a given prediction `x̂`.
    pub fn admissible_at(&self, x_hat: &[f64]) -> Result<HPolytope> {
        let sys = &self.result.aux_system;
        let ax = (&sys.a * DVector::from_column_slice(x_hat)).iter().copied().collect::<Vec<_>>();
        self.target
            .preimage(&sys.b, &ax)?
            .intersect(&sys.input_set)
    }

    pub fn admissible(&self, z: &[f64]) -> Result<HPolytope> {
        if z.len() != self.spec.augmented_dim() {
            return Err(Error::dim(format!(
                "augmented state of length {}, expected {}",
                z.len(),
                self.spec.augmented_dim()
            )));
        }
        if !self.is_member(z) {
            return Err(Error::Domain("state lies outside the invariant set".into()));
        }
        self.admissible_at(&self.predict(z))
    }
}

/// Inputs that keep the prediction inside `Ĉ` against every disturbance.
pub fn admissible_inputs(
    spec: &DelaySystemSpec,
    result: &ReducedInvariantResult,
    z: &AugmentedState,
) -> Result<HPolytope> {
    z.check_dims(spec)?;
    Supervisor::new(spec, result)?.admissible(&z.to_vec())
}

/// The admissible point closest to `u_nom` in the max-norm, ties broken by
/// the 1-norm; `u_nom` itself when already admissible.
pub fn project_input(u_nom: &[f64], admissible: &HPolytope) -> Result<Vec<f64>> {
    let m = admissible.dim();
    if u_nom.len() != m {
        return Err(Error::dim(format!("input of length {}, expected {m}", u_nom.len())));
    }
    if admissible.contains_point(u_nom, 0.0) {
        return Ok(u_nom.to_vec());
    }
    // Variables (u, s): maximize −s with |u − u_nom|_∞ ≤ s.
    let mut cheb = HalfspaceSystem::unconstrained(m + 1);
    let mut row = vec![0.0; m + 1];
    for i in 0..m {
        for sign in [1.0, -1.0] {
            row.fill(0.0);
            row[i] = sign;
            row[m] = -1.0;
            cheb.push(&row, sign * u_nom[i]);
        }
    }
    for (g, h) in admissible.system().rows() {
        row[..m].copy_from_slice(g);
        row[m] = 0.0;
        cheb.push(&row, h);
    }
    let mut obj = vec![0.0; m + 1];
    obj[m] = -1.0;
    let dist = match solve_max(&obj, &cheb)? {
        LpResult::Optimal { value, .. } => -value,
        _ => return Err(Error::Supervisor("admissible input set is empty".into())),
    };

    // Variables (u, e): minimize Σe with |u − u_nom| ≤ e, |u − u_nom|_∞ ≤ dist.
    let slack = 1e-9 * dist.max(1.0);
    let mut l1 = HalfspaceSystem::unconstrained(2 * m);
    let mut row = vec![0.0; 2 * m];
    for i in 0..m {
        for sign in [1.0, -1.0] {
            row.fill(0.0);
            row[i] = sign;
            l1.push(&row, sign * u_nom[i] + dist + slack);
            row[m + i] = -1.0;
            l1.push(&row, sign * u_nom[i]);
        }
    }
    for (g, h) in admissible.system().rows() {
        row.fill(0.0);
        row[..m].copy_from_slice(g);
        l1.push(&row, h);
    }
    let mut obj = vec![0.0; 2 * m];
    obj[m..].fill(-1.0);
    match solve_max(&obj, &l1)? {
        LpResult::Optimal { x, .. } => Ok(x[..m].to_vec()),
        _ => Err(Error::Solver("tie-break projection failed".into())),
    }
}

/// One step of a closed-loop run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub u_nominal: Vec<f64>,
    pub u_applied: Vec<f64>,
    /// Value of each channel acting on `x` at this step.
    pub disturbances: Vec<Vec<f64>>,
    pub x_hat: Vec<f64>,
    pub safe: bool,
    pub admissible_empty: bool,
    /// The supervisor projected the input at this step.
    pub supervised: bool,
    /// A signal value had to be clamped into its disturbance set.
    pub disturbance_clamped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub z0: AugmentedState,
    pub start_inside: bool,
    pub records: Vec<SimRecord>,
    /// State after the last recorded step.
    pub final_x: Vec<f64>,
    pub final_safe: bool,
}

impl SimTrace {
    pub fn first_violation(&self) -> Option<usize> {
        self.records
            .iter()
            .find(|r| !r.safe)
            .map(|r| r.t)
            .or_else(|| (!self.final_safe).then_some(self.records.len()))
    }

    pub fn all_safe(&self) -> bool {
        self.first_violation().is_none()
    }

    pub fn any_admissible_empty(&self) -> bool {
        self.records.iter().any(|r| r.admissible_empty)
    }
}

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub controller: Controller,
    /// One signal per channel of the base system.
    pub signals: Vec<DisturbanceSignal>,
    pub z0: AugmentedState,
    pub steps: usize,
    pub supervised: bool,
}

/// The first `p` samples of the previewed channel's signal, which fill the
/// preview window at `t = 0`.
pub fn initial_preview(spec: &DelaySystemSpec, signals: &[DisturbanceSignal]) -> Result<Vec<Vec<f64>>> {
    let Some(c) = spec.previewed_channel.filter(|_| spec.preview > 0) else {
        return Ok(Vec::new());
    };
    let signal = signals
        .get(c)
        .ok_or_else(|| Error::dim("no signal for the previewed channel"))?;
    let mut src = SignalSource::new(signal, &spec.base.channels[c].set)?;
    (0..spec.preview).map(|k| Ok(src.value(k)?.0)).collect()
}

/// Chebyshev center of `c_ext` restricted to the preview window the signals
/// will produce, or `None` when that slice is empty.
pub fn deepest_start(
    spec: &DelaySystemSpec,
    result: &ReducedInvariantResult,
    signals: &[DisturbanceSignal],
) -> Result<Option<AugmentedState>> {
    let window = initial_preview(spec, signals)?;
    let off = spec.state_dim() + spec.input_dim() * spec.tau;
    let fixed: std::collections::BTreeMap<usize, f64> = window
        .iter()
        .flatten()
        .enumerate()
        .map(|(i, &v)| (off + i, v))
        .collect();
    let free = result.c_ext.slice(&fixed)?;
    let (c, r) = free.chebyshev_center()?;
    if r < 0.0 {
        return Ok(None);
    }
    let mut z = c;
    z.extend(window.iter().flatten());
    AugmentedState::from_slice(spec, &z).map(Some)
}

fn clamp_to(set: &HPolytope, u: &[f64]) -> Result<Vec<f64>> {
    project_input(u, set)
}

/// Run the augmented dynamics in closed loop.
pub fn simulate(
    spec: &DelaySystemSpec,
    result: &ReducedInvariantResult,
    cfg: &SimulationConfig,
) -> Result<SimTrace> {
    cfg.z0.check_dims(spec)?;
    let channels = &spec.base.channels;
    if cfg.signals.len() != channels.len() {
        return Err(Error::dim(format!(
            "{} disturbance signals for {} channels",
            cfg.signals.len(),
            channels.len()
        )));
    }
    let mut sources = cfg
        .signals
        .iter()
        .zip(channels)
        .map(|(s, ch)| SignalSource::new(s, &ch.set))
        .collect::<Result<Vec<_>>>()?;

    let aug: LinearSystem = augment(spec);
    let sup = Supervisor::new(spec, result)?;
    let (n, m, p) = (spec.state_dim(), spec.input_dim(), spec.preview);
    let previewed = spec.previewed_channel.filter(|_| p > 0);

    let mut z0 = cfg.z0.clone();
    // The preview window at t = 0 holds d_p(0..p−1) from the signal itself.
    let mut clamped_init = false;
    if let Some(c) = previewed {
        for k in 0..p {
            let (v, cl) = sources[c].value(k)?;
            z0.preview_window[k] = v;
            clamped_init |= cl;
        }
    }
    let mut z = z0.to_vec();
    let start_inside = sup.is_member(&z);
    let mut records = Vec::with_capacity(cfg.steps);

    for t in 0..cfg.steps {
        let x = z[..n].to_vec();
        let x_hat = sup.predict(&z);
        let u_nominal = cfg.controller.nominal(&z, m)?;
        let mut admissible_empty = false;
        let mut supervised = false;
        let u_applied = if cfg.supervised && sup.is_member(&z) {
            let adm = sup.admissible_at(&x_hat)?;
            if adm.is_empty()? {
                admissible_empty = true;
                clamp_to(&spec.base.input_set, &u_nominal)?
            } else {
                supervised = true;
                project_input(&u_nominal, &adm)?
            }
        } else {
            clamp_to(&spec.base.input_set, &u_nominal)?
        };

        // Values acting now, plus the newly revealed previewed sample.
        let mut acting = Vec::with_capacity(channels.len());
        let mut aug_inputs = Vec::new();
        let mut clamped = t == 0 && clamped_init;
        for (i, src) in sources.iter_mut().enumerate() {
            if Some(i) == previewed {
                let off = n + m * spec.tau;
                acting.push(z[off..off + spec.preview_dim()].to_vec());
            } else {
                let (v, cl) = src.value(t)?;
                clamped |= cl;
                acting.push(v.clone());
                aug_inputs.push(v);
            }
        }
        if let Some(c) = previewed {
            let (v, cl) = sources[c].value(t + p)?;
            clamped |= cl;
            aug_inputs.push(v);
        }

        records.push(SimRecord {
            t,
            safe: spec.safe_set.contains_point(&x, MEMBER_TOL),
            x,
            u_nominal,
            u_applied: u_applied.clone(),
            disturbances: acting,
            x_hat,
            admissible_empty,
            supervised,
            disturbance_clamped: clamped,
        });
        z = aug.step(&z, &u_applied, &aug_inputs);
    }

    let final_x = z[..n].to_vec();
    Ok(SimTrace {
        z0,
        start_inside,
        final_safe: spec.safe_set.contains_point(&final_x, MEMBER_TOL),
        final_x,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{compute, ReductionOptions};

    fn toy(tau: usize, p: usize) -> DelaySystemSpec {
        let text = format!(
            r#"{{"A": 1.5, "B": 1.0,
                "channels": [{{"F": 1.0, "D": {{"box": {{"lower": [-2], "upper": [2]}}}}, "preview": {p}}}],
                "X": {{"box": {{"lower": [-32], "upper": [32]}}}},
                "U": {{"box": {{"lower": [-20], "upper": [20]}}}},
                "tau": {tau}}}"#
        );
        DelaySystemSpec::from_json_str(&text).unwrap()
    }

    fn bounds(p: &HPolytope) -> (f64, f64) {
        (-p.support(&[-1.0]).unwrap(), p.support(&[1.0]).unwrap())
    }

    #[test]
    fn admissible_interval_of_toy() {
        let spec = toy(1, 0);
        let r = compute(&spec, &ReductionOptions::default()).unwrap();
        let adm = admissible_inputs(&spec, &r, &AugmentedState::zeros(&spec)).unwrap();
        let (chat_lo, chat_hi) = bounds(&r.c_hat);
        // 1.5·0 + u ∈ Ĉ ⊖ 1.5[−2, 2], intersected with [−20, 20].
        let (lo, hi) = bounds(&adm);
        assert!((hi - (chat_hi - 3.0).min(20.0)).abs() < 1e-9);
        assert!((lo - (chat_lo + 3.0).max(-20.0)).abs() < 1e-9);
        assert!(lo < hi);
    }

    #[test]
    fn admissible_at_chebyshev_center() {
        let spec = toy(5, 1);
        let r = compute(&spec, &ReductionOptions::default()).unwrap();
        let (c, _) = r.c_ext.chebyshev_center().unwrap();
        let z = AugmentedState::from_slice(&spec, &c).unwrap();
        assert!(!admissible_inputs(&spec, &r, &z).unwrap().is_empty().unwrap());
    }

    #[test]
    fn outside_state_is_rejected() {
        let spec = toy(1, 0);
        let r = compute(&spec, &ReductionOptions::default()).unwrap();
        let z = AugmentedState {
            x: vec![40.0],
            input_history: vec![vec![0.0]],
            preview_window: vec![],
        };
        assert!(matches!(admissible_inputs(&spec, &r, &z), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_input_matrix() {
        let text = r#"{"A": 0.5, "B": 0.0,
            "channels": [{"F": 1.0, "D": {"box": {"lower": [-1], "upper": [1]}}}],
            "X": {"box": {"lower": [-4], "upper": [4]}},
            "U": {"box": {"lower": [-1], "upper": [1]}}, "tau": 0}"#;
        let spec = DelaySystemSpec::from_json_str(text).unwrap();
        let r = compute(&spec, &ReductionOptions::default()).unwrap();
        let sup = Supervisor::new(&spec, &r).unwrap();
        let adm = sup.admissible(&[1.0]).unwrap();
        assert!(adm.equal(&spec.base.input_set, 1e-9).unwrap());
        // 0.5·7 ∉ [−3, 3]: no input helps.
        assert!(sup.admissible_at(&[7.0]).unwrap().is_empty().unwrap());
    }

    #[test]
    fn projection_examples() {
        let interval = HPolytope::symmetric_box(&[5.0]).unwrap();
        assert_eq!(project_input(&[3.0], &interval).unwrap(), vec![3.0]);
        assert!((project_input(&[7.0], &interval).unwrap()[0] - 5.0).abs() < 1e-12);
        let square = HPolytope::symmetric_box(&[1.0, 1.0]).unwrap();
        let u = project_input(&[2.0, 0.5], &square).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-9 && (u[1] - 0.5).abs() < 1e-9, "{u:?}");
        assert!(matches!(
            project_input(&[0.0], &HPolytope::empty(1)),
            Err(Error::Supervisor(_))
        ));
    }

    #[test]
    fn unit_square_projection_matches_grid_search() {
        let square = HPolytope::symmetric_box(&[1.0, 1.0]).unwrap();
        let u_nom = [2.0, 0.5];
        let mut best = (f64::INFINITY, f64::INFINITY, [0.0, 0.0]);
        for i in 0..=2000 {
            for j in 0..=2000 {
                let u = [-1.0 + i as f64 * 1e-3, -1.0 + j as f64 * 1e-3];
                let dx = (u[0] - u_nom[0]).abs();
                let dy = (u[1] - u_nom[1]).abs();
                let key = (dx.max(dy), dx + dy);
                if key.0 < best.0 - 1e-12 || ((key.0 - best.0).abs() <= 1e-12 && key.1 < best.1) {
                    best = (key.0, key.1, u);
                }
            }
        }
        let u = project_input(&u_nom, &square).unwrap();
        assert!((u[0] - best.2[0]).abs() <= 1e-3 && (u[1] - best.2[1]).abs() <= 1e-3);
    }

    #[test]
    fn zero_disturbance_stable_system_stays_safe() {
        let text = r#"{"A": 0.5, "B": 1.0,
            "channels": [{"F": 1.0, "D": {"box": {"lower": [-1], "upper": [1]}}}],
            "X": {"box": {"lower": [-4], "upper": [4]}},
            "U": {"box": {"lower": [-1], "upper": [1]}}, "tau": 2}"#;
        let spec = DelaySystemSpec::from_json_str(text).unwrap();
        let r = compute(&spec, &ReductionOptions::default()).unwrap();
        let cfg = SimulationConfig {
            controller: Controller::Zero,
            signals: vec![DisturbanceSignal::zero(1)],
            z0: AugmentedState::zeros(&spec),
            steps: 50,
            supervised: false,
        };
        let trace = simulate(&spec, &r, &cfg).unwrap();
        assert_eq!(trace.records.len(), 50);
        assert!(trace.all_safe());
        assert!(trace.records.iter().enumerate().all(|(t, rec)| rec.t == t));
    }

    #[test]
    fn supervised_toy_run_is_safe() {
        let spec = toy(5, 1);
        let r = compute(&spec, &ReductionOptions::default()).unwrap();
        let signals = vec![DisturbanceSignal::UniformRandom { seed: 11 }];
        let z0 = deepest_start(&spec, &r, &signals).unwrap().unwrap();
        let cfg = SimulationConfig {
            controller: Controller::Zero,
            signals,
            z0,
            steps: 200,
            supervised: true,
        };
        let trace = simulate(&spec, &r, &cfg).unwrap();
        assert!(trace.start_inside);
        assert!(trace.all_safe() && !trace.any_admissible_empty());
        assert!(trace.records.iter().all(|rec| rec.supervised));
    }

    #[test]
    fn unsupervised_worst_case_leaves_safe_set() {
        let spec = toy(5, 0);
        let r = compute(&spec, &ReductionOptions::default()).unwrap();
        let mut z0 = AugmentedState::zeros(&spec);
        z0.x = vec![30.0];
        let cfg = SimulationConfig {
            controller: Controller::Gain(DMatrix::from_row_slice(1, 6, &[1.5, 1.0, 1.0, 1.0, 1.0, 1.0])),
            signals: vec![DisturbanceSignal::Constant { value: vec![2.0] }],
            z0,
            steps: 40,
            supervised: false,
        };
        let trace = simulate(&spec, &r, &cfg).unwrap();
        assert!(trace.first_violation().is_some());
    }
}
