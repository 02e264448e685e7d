//! Problem descriptions: delay-free linear systems, delayed/previewed
//! systems, the augmented state, and JSON ingestion.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::polytope::{HPolytope, MappedSet, CONTAINMENT_TOL};

/// A disturbance entering the dynamics as `F d` with `d ∈ D`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisturbanceChannel {
    pub gain: DMatrix<f64>,
    pub set: HPolytope,
}

/// `x⁺ = A x + B u + Σᵢ Fᵢ dᵢ` with `u ∈ U`, `dᵢ ∈ Dᵢ`, all disturbances
/// non-measurable.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub channels: Vec<DisturbanceChannel>,
    /// State space `Q`; an unconstrained polytope stands for all of `ℝⁿ`.
    pub state_space: HPolytope,
    pub input_set: HPolytope,
}

impl LinearSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        channels: Vec<DisturbanceChannel>,
        state_space: HPolytope,
        input_set: HPolytope,
    ) -> Result<Self> {
        let sys = Self {
            a,
            b,
            channels,
            state_space,
            input_set,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n {
            return Err(Error::dim(format!("A is {}×{}, not square", n, self.a.ncols())));
        }
        if self.b.nrows() != n {
            return Err(Error::dim(format!("B has {} rows, expected {n}", self.b.nrows())));
        }
        if self.input_set.dim() != self.b.ncols() {
            return Err(Error::dim(format!(
                "U has dimension {}, B has {} columns",
                self.input_set.dim(),
                self.b.ncols()
            )));
        }
        if self.state_space.dim() != n {
            return Err(Error::dim(format!(
                "Q has dimension {}, expected {n}",
                self.state_space.dim()
            )));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&self.a) || !finite(&self.b) {
            return Err(Error::InvalidSpec("A and B must be finite".into()));
        }
        require_bounded_nonempty(&self.input_set, "U")?;
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.gain.nrows() != n || ch.gain.ncols() != ch.set.dim() {
                return Err(Error::dim(format!(
                    "channel {i}: F is {}×{}, D has dimension {}",
                    ch.gain.nrows(),
                    ch.gain.ncols(),
                    ch.set.dim()
                )));
            }
            if !finite(&ch.gain) {
                return Err(Error::InvalidSpec(format!("channel {i}: F must be finite")));
            }
            require_bounded_nonempty(&ch.set, &format!("D of channel {i}"))?;
        }
        Ok(())
    }

    /// Disturbance channels as Pontryagin-difference terms.
    pub fn disturbance_terms(&self) -> Vec<MappedSet> {
        self.channels
            .iter()
            .map(|c| MappedSet::new(c.gain.clone(), c.set.clone()))
            .collect()
    }

    /// One step of the dynamics.
    pub fn step(&self, x: &[f64], u: &[f64], disturbances: &[Vec<f64>]) -> Vec<f64> {
        assert_eq!(disturbances.len(), self.channels.len(), "one value per channel");
        let mut next = &self.a * DVector::from_column_slice(x) + &self.b * DVector::from_column_slice(u);
        for (ch, d) in self.channels.iter().zip(disturbances) {
            next += &ch.gain * DVector::from_column_slice(d);
        }
        next.iter().copied().collect()
    }
}

fn require_bounded_nonempty(p: &HPolytope, what: &str) -> Result<()> {
    if p.is_empty()? {
        return Err(Error::InvalidSpec(format!("{what} is empty")));
    }
    if p.bounding_box()?.is_none() {
        return Err(Error::InvalidSpec(format!("{what} is unbounded")));
    }
    Ok(())
}

/// A delayed (and possibly previewed) system:
/// `x(t+1) = A x(t) + B u(t−τ) + Σᵢ Fᵢ dᵢ(t)` where at most one channel is
/// previewed `p ≤ τ` steps ahead.
#[derive(Clone, Debug, PartialEq)]
pub struct DelaySystemSpec {
    pub base: LinearSystem,
    pub tau: usize,
    pub preview: usize,
    pub safe_set: HPolytope,
    pub previewed_channel: Option<usize>,
}

impl DelaySystemSpec {
    pub fn new(
        base: LinearSystem,
        tau: usize,
        preview: usize,
        safe_set: HPolytope,
        previewed_channel: Option<usize>,
    ) -> Result<Self> {
        let spec = Self {
            base,
            tau,
            preview,
            safe_set,
            previewed_channel,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let n = self.base.state_dim();
        if self.safe_set.dim() != n {
            return Err(Error::dim(format!(
                "X has dimension {}, expected {n}",
                self.safe_set.dim()
            )));
        }
        if self.preview > self.tau {
            return Err(Error::PreviewExceedsDelay {
                preview: self.preview,
                tau: self.tau,
            });
        }
        match (self.previewed_channel, self.preview) {
            (Some(c), p) if p > 0 => {
                if c >= self.base.channels.len() {
                    return Err(Error::InvalidSpec(format!("previewed channel {c} does not exist")));
                }
            }
            (None, 0) => {}
            _ => {
                return Err(Error::InvalidSpec(
                    "a previewed channel must be named exactly when preview > 0".into(),
                ))
            }
        }
        if !self.base.state_space.contains_set(&self.safe_set, CONTAINMENT_TOL)? {
            return Err(Error::InvalidSpec("safe set X is not contained in Q".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.base.input_dim()
    }

    /// Dimension of the previewed disturbance, 0 without preview.
    pub fn preview_dim(&self) -> usize {
        self.previewed_channel
            .map(|c| self.base.channels[c].set.dim())
            .unwrap_or(0)
    }

    /// `n + mτ + pl`.
    pub fn augmented_dim(&self) -> usize {
        self.state_dim() + self.input_dim() * self.tau + self.preview_dim() * self.preview
    }

    /// Same problem with a different delay and preview.
    pub fn with_delay(&self, tau: usize, preview: usize) -> Result<Self> {
        let previewed_channel = if preview > 0 {
            Some(self.previewed_channel.unwrap_or(0))
        } else {
            None
        };
        Self::new(self.base.clone(), tau, preview, self.safe_set.clone(), previewed_channel)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: SpecJson = serde_json::from_str(text)?;
        raw.into_spec()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpecJson::from_spec(self))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_json_string()?.as_bytes());
        Ok(hex::encode(digest))
    }

    /// Run the delayed recursion directly with an explicit input queue.
    ///
    /// `past_inputs` holds `u(−τ), …, u(−1)`; `inputs[t]` is `u(t)`;
    /// `disturbances[t][i]` is the value of channel `i` acting at time `t`
    /// (for the previewed channel this is `d_p(t)` itself). Returns
    /// `x(0), …, x(T)`.
    pub fn replay_delayed(
        &self,
        x0: &[f64],
        past_inputs: &[Vec<f64>],
        inputs: &[Vec<f64>],
        disturbances: &[Vec<Vec<f64>>],
    ) -> Vec<Vec<f64>> {
        assert_eq!(past_inputs.len(), self.tau, "need τ past inputs");
        assert_eq!(inputs.len(), disturbances.len());
        let mut queue: VecDeque<Vec<f64>> = past_inputs.iter().cloned().collect();
        let mut xs = vec![x0.to_vec()];
        for (u, d) in inputs.iter().zip(disturbances) {
            queue.push_back(u.clone());
            let applied = queue.pop_front().unwrap();
            let next = self.base.step(xs.last().unwrap(), &applied, d);
            xs.push(next);
        }
        xs
    }
}

/// Loads and validates a spec file.
pub fn load_spec(path: impl AsRef<Path>) -> Result<DelaySystemSpec> {
    let text = std::fs::read_to_string(path)?;
    DelaySystemSpec::from_json_str(&text)
}

/// State of the augmented system: `(x, u₁..u_τ, d_{p,1}..d_{p,p})`, where
/// `u₁` is applied next and `d_{p,1}` acts next.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub x: Vec<f64>,
    pub input_history: Vec<Vec<f64>>,
    pub preview_window: Vec<Vec<f64>>,
}

impl AugmentedState {
    pub fn zeros(spec: &DelaySystemSpec) -> Self {
        Self {
            x: vec![0.0; spec.state_dim()],
            input_history: vec![vec![0.0; spec.input_dim()]; spec.tau],
            preview_window: vec![vec![0.0; spec.preview_dim()]; spec.preview],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        for u in &self.input_history {
            v.extend_from_slice(u);
        }
        for d in &self.preview_window {
            v.extend_from_slice(d);
        }
        v
    }

    pub fn from_slice(spec: &DelaySystemSpec, z: &[f64]) -> Result<Self> {
        if z.len() != spec.augmented_dim() {
            return Err(Error::dim(format!(
                "augmented state of length {}, expected {}",
                z.len(),
                spec.augmented_dim()
            )));
        }
        let (n, m, l) = (spec.state_dim(), spec.input_dim(), spec.preview_dim());
        let x = z[..n].to_vec();
        let input_history = (0..spec.tau)
            .map(|k| z[n + k * m..n + (k + 1) * m].to_vec())
            .collect();
        let off = n + m * spec.tau;
        let preview_window = (0..spec.preview)
            .map(|k| z[off + k * l..off + (k + 1) * l].to_vec())
            .collect();
        Ok(Self {
            x,
            input_history,
            preview_window,
        })
    }

    pub fn check_dims(&self, spec: &DelaySystemSpec) -> Result<()> {
        let ok = self.x.len() == spec.state_dim()
            && self.input_history.len() == spec.tau
            && self.input_history.iter().all(|u| u.len() == spec.input_dim())
            && self.preview_window.len() == spec.preview
            && self.preview_window.iter().all(|d| d.len() == spec.preview_dim());
        if ok {
            Ok(())
        } else {
            Err(Error::dim("augmented state does not match the system specification"))
        }
    }
}

/// The delay-free equivalent over `(x, u₁..u_τ, d_{p,1}..d_{p,p})`.
///
/// Channels of the result: every non-previewed channel acting on `x`, then
/// (with preview) the future previewed value entering the last window slot.
pub fn augment(spec: &DelaySystemSpec) -> LinearSystem {
    let (n, m, l) = (spec.state_dim(), spec.input_dim(), spec.preview_dim());
    let (tau, p) = (spec.tau, spec.preview);
    let dim = spec.augmented_dim();
    let base = &spec.base;
    let u_off = n;
    let d_off = n + m * tau;

    let mut a = DMatrix::zeros(dim, dim);
    a.view_mut((0, 0), (n, n)).copy_from(&base.a);
    let mut b = DMatrix::zeros(dim, m);
    if tau == 0 {
        b.view_mut((0, 0), (n, m)).copy_from(&base.b);
    } else {
        a.view_mut((0, u_off), (n, m)).copy_from(&base.b);
        for k in 0..tau - 1 {
            a.view_mut((u_off + k * m, u_off + (k + 1) * m), (m, m))
                .copy_from(&DMatrix::identity(m, m));
        }
        b.view_mut((u_off + (tau - 1) * m, 0), (m, m))
            .copy_from(&DMatrix::identity(m, m));
    }

    let mut channels = Vec::new();
    for (i, ch) in base.channels.iter().enumerate() {
        if Some(i) == spec.previewed_channel && p > 0 {
            continue;
        }
        let mut f = DMatrix::zeros(dim, ch.set.dim());
        f.view_mut((0, 0), (n, ch.set.dim())).copy_from(&ch.gain);
        channels.push(DisturbanceChannel {
            gain: f,
            set: ch.set.clone(),
        });
    }
    if let (Some(c), true) = (spec.previewed_channel, p > 0) {
        let ch = &base.channels[c];
        a.view_mut((0, d_off), (n, l)).copy_from(&ch.gain);
        for k in 0..p - 1 {
            a.view_mut((d_off + k * l, d_off + (k + 1) * l), (l, l))
                .copy_from(&DMatrix::identity(l, l));
        }
        let mut f = DMatrix::zeros(dim, l);
        f.view_mut((d_off + (p - 1) * l, 0), (l, l))
            .copy_from(&DMatrix::identity(l, l));
        channels.push(DisturbanceChannel {
            gain: f,
            set: ch.set.clone(),
        });
    }

    let extra = dim - n;
    let state_space = base
        .state_space
        .cartesian_product(&HPolytope::universe(extra));
    LinearSystem {
        a,
        b,
        channels,
        state_space,
        input_set: base.input_set.clone(),
    }
}

/// Safe set of the augmented system: `X × U^τ × D_p^p`.
pub fn augmented_safe_set(spec: &DelaySystemSpec) -> HPolytope {
    let mut s = spec.safe_set.clone();
    for _ in 0..spec.tau {
        s = s.cartesian_product(&spec.base.input_set);
    }
    if let Some(c) = spec.previewed_channel {
        for _ in 0..spec.preview {
            s = s.cartesian_product(&spec.base.channels[c].set);
        }
    }
    s
}

// ---------------------------------------------------------------------------
// JSON schema

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixJson {
    Rows(Vec<Vec<f64>>),
    Scalar(f64),
}

impl MatrixJson {
    fn into_matrix(self, what: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixJson::Scalar(v) => Ok(DMatrix::from_element(1, 1, v)),
            MatrixJson::Rows(rows) => {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|row| row.len() != c) {
                    return Err(Error::dim(format!("{what} has ragged rows")));
                }
                Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
            }
        }
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixJson::Rows(
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct BoxJson {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SetJson {
    Box {
        #[serde(rename = "box")]
        bounds: BoxJson,
    },
    Halfspaces(HPolytope),
}

impl SetJson {
    fn into_polytope(self) -> Result<HPolytope> {
        match self {
            SetJson::Box { bounds } => HPolytope::from_box(&bounds.lower, &bounds.upper),
            SetJson::Halfspaces(p) => Ok(p),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelJson {
    #[serde(rename = "F")]
    f: MatrixJson,
    #[serde(rename = "D")]
    d: SetJson,
    #[serde(default)]
    preview: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecJson {
    #[serde(rename = "A")]
    a: MatrixJson,
    #[serde(rename = "B")]
    b: MatrixJson,
    #[serde(default)]
    channels: Vec<ChannelJson>,
    #[serde(rename = "X")]
    x: SetJson,
    #[serde(rename = "U")]
    u: SetJson,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    q: Option<SetJson>,
    tau: usize,
}

impl SpecJson {
    fn into_spec(self) -> Result<DelaySystemSpec> {
        let a = self.a.into_matrix("A")?;
        let b = self.b.into_matrix("B")?;
        let n = a.nrows();
        let mut channels = Vec::new();
        let mut previewed = Vec::new();
        for (i, ch) in self.channels.into_iter().enumerate() {
            if ch.preview > 0 {
                previewed.push((i, ch.preview));
            }
            channels.push(DisturbanceChannel {
                gain: ch.f.into_matrix(&format!("F of channel {i}"))?,
                set: ch.d.into_polytope()?,
            });
        }
        if previewed.len() > 1 {
            return Err(Error::InvalidSpec(
                "at most one channel may carry preview".into(),
            ));
        }
        let state_space = match self.q {
            Some(q) => q.into_polytope()?,
            None => HPolytope::universe(n),
        };
        let base = LinearSystem::new(a, b, channels, state_space, self.u.into_polytope()?)?;
        let (previewed_channel, preview) = match previewed.first() {
            Some(&(i, p)) => (Some(i), p),
            None => (None, 0),
        };
        DelaySystemSpec::new(base, self.tau, preview, self.x.into_polytope()?, previewed_channel)
    }

    fn from_spec(spec: &DelaySystemSpec) -> Self {
        let base = &spec.base;
        SpecJson {
            a: MatrixJson::from_matrix(&base.a),
            b: MatrixJson::from_matrix(&base.b),
            channels: base
                .channels
                .iter()
                .enumerate()
                .map(|(i, c)| ChannelJson {
                    f: MatrixJson::from_matrix(&c.gain),
                    d: SetJson::Halfspaces(c.set.clone()),
                    preview: if Some(i) == spec.previewed_channel {
                        spec.preview
                    } else {
                        0
                    },
                })
                .collect(),
            x: SetJson::Halfspaces(spec.safe_set.clone()),
            u: SetJson::Halfspaces(base.input_set.clone()),
            q: (!base.state_space.is_unconstrained())
                .then(|| SetJson::Halfspaces(base.state_space.clone())),
            tau: spec.tau,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_json(tau: usize, p: usize) -> String {
        format!(
            r#"{{
  "A": [[1.5]], "B": [[1.0]],
  "channels": [{{"F": [[1.0]], "D": {{"box": {{"lower": [-2.0], "upper": [2.0]}}}}, "preview": {p}}}],
  "X": {{"box": {{"lower": [-32.0], "upper": [32.0]}}}},
  "U": {{"box": {{"lower": [-20.0], "upper": [20.0]}}}},
  "tau": {tau}
}}"#
        )
    }

    #[test]
    fn loads_toy_spec() {
        let spec = DelaySystemSpec::from_json_str(&toy_json(5, 1)).unwrap();
        assert_eq!(spec.tau, 5);
        assert_eq!(spec.preview, 1);
        assert_eq!(spec.previewed_channel, Some(0));
        assert_eq!(spec.augmented_dim(), 1 + 5 + 1);
        assert_eq!(spec.base.a[(0, 0)], 1.5);
    }

    #[test]
    fn preview_longer_than_delay_is_rejected() {
        let err = DelaySystemSpec::from_json_str(&toy_json(5, 6)).unwrap_err();
        assert!(matches!(err, Error::PreviewExceedsDelay { preview: 6, tau: 5 }));
        assert!(err.to_string().contains("preview exceeds delay: unsupported"));
    }

    #[test]
    fn delay_free_spec_is_valid() {
        let spec = DelaySystemSpec::from_json_str(&toy_json(0, 0)).unwrap();
        let aug = augment(&spec);
        assert_eq!(aug, spec.base);
        assert_eq!(augmented_safe_set(&spec), spec.safe_set);
    }

    #[test]
    fn rejects_bad_inputs() {
        let unbounded_u = toy_json(1, 0).replace(
            r#""U": {"box": {"lower": [-20.0], "upper": [20.0]}}"#,
            r#""U": {"dim": 1, "A": [[1.0]], "b": [20.0]}"#,
        );
        assert!(matches!(
            DelaySystemSpec::from_json_str(&unbounded_u),
            Err(Error::InvalidSpec(_))
        ));
        let bad_dim = toy_json(1, 0).replace(r#""B": [[1.0]]"#, r#""B": [[1.0], [2.0]]"#);
        assert!(matches!(
            DelaySystemSpec::from_json_str(&bad_dim),
            Err(Error::Dimension(_))
        ));
        let outside_q = toy_json(1, 0).replace(
            r#""tau""#,
            r#""Q": {"box": {"lower": [-10.0], "upper": [10.0]}}, "tau""#,
        );
        assert!(matches!(
            DelaySystemSpec::from_json_str(&outside_q),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            DelaySystemSpec::from_json_str("{ not json"),
            Err(Error::Json(_))
        ));
    }

    #[test]
    fn scalar_matrix_shorthand() {
        let text = toy_json(1, 0).replace("[[1.5]]", "1.5");
        let spec = DelaySystemSpec::from_json_str(&text).unwrap();
        assert_eq!(spec.base.a, DMatrix::from_element(1, 1, 1.5));
    }

    #[test]
    fn augmented_block_structure() {
        let spec = DelaySystemSpec::from_json_str(&toy_json(2, 0)).unwrap();
        let aug = augment(&spec);
        let expect_a =
            DMatrix::from_row_slice(3, 3, &[1.5, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(aug.a, expect_a);
        assert_eq!(aug.b, DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]));
        assert_eq!(aug.channels.len(), 1);
        assert_eq!(aug.channels[0].gain, DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]));
    }

    #[test]
    fn preview_slot_feeds_state_row() {
        let spec = DelaySystemSpec::from_json_str(&toy_json(1, 1)).unwrap();
        let aug = augment(&spec);
        // (x, u₁, d_{p,1})
        assert_eq!(aug.a, DMatrix::from_row_slice(3, 3, &[1.5, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        assert_eq!(aug.b, DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]));
        assert_eq!(aug.channels[0].gain, DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]));
    }

    #[test]
    fn augmented_state_layout() {
        let spec = DelaySystemSpec::from_json_str(&toy_json(2, 1)).unwrap();
        let z = AugmentedState {
            x: vec![1.0],
            input_history: vec![vec![2.0], vec![3.0]],
            preview_window: vec![vec![4.0]],
        };
        assert_eq!(z.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(AugmentedState::from_slice(&spec, &z.to_vec()).unwrap(), z);
        assert!(AugmentedState::from_slice(&spec, &[1.0]).is_err());
    }
}
