//! Disturbance signals for closed-loop simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::HPolytope;

/// Source of one channel's disturbance values, indexed by time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSignal {
    Constant {
        value: Vec<f64>,
    },
    /// `offset + amplitude · sin(2π t / period + phase)`, per component.
    Sine {
        amplitude: Vec<f64>,
        period: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: Vec<f64>,
    },
    /// Independent uniform samples over the bounding box of `D`.
    UniformRandom {
        seed: u64,
    },
    /// Recorded samples; the last sample is held past the end.
    Replay {
        samples: Vec<Vec<f64>>,
    },
}

impl DisturbanceSignal {
    pub fn zero(dim: usize) -> Self {
        DisturbanceSignal::Constant {
            value: vec![0.0; dim],
        }
    }
}

/// A signal bound to a channel set, producing in-bounds values.
pub(crate) struct SignalSource {
    signal: DisturbanceSignal,
    set: HPolytope,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rng: Option<ChaCha8Rng>,
    cache: Vec<(Vec<f64>, bool)>,
}

impl SignalSource {
    pub(crate) fn new(signal: &DisturbanceSignal, set: &HPolytope) -> Result<Self> {
        let dim = set.dim();
        let (lower, upper) = set
            .bounding_box()?
            .ok_or_else(|| Error::InvalidSpec("disturbance set is unbounded".into()))?;
        let check = |v: &[f64], what: &str| {
            if v.len() != dim {
                Err(Error::dim(format!("{what} has length {}, expected {dim}", v.len())))
            } else {
                Ok(())
            }
        };
        let rng = match signal {
            DisturbanceSignal::Constant { value } => {
                check(value, "constant disturbance")?;
                None
            }
            DisturbanceSignal::Sine {
                amplitude,
                period,
                offset,
                ..
            } => {
                check(amplitude, "sine amplitude")?;
                if !offset.is_empty() {
                    check(offset, "sine offset")?;
                }
                if !(period.is_finite() && *period > 0.0) {
                    return Err(Error::InvalidSpec("sine period must be positive".into()));
                }
                None
            }
            DisturbanceSignal::UniformRandom { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            DisturbanceSignal::Replay { samples } => {
                if samples.is_empty() {
                    return Err(Error::InvalidSpec("replay signal has no samples".into()));
                }
                for s in samples {
                    check(s, "replay sample")?;
                }
                None
            }
        };
        Ok(Self {
            signal: signal.clone(),
            set: set.clone(),
            lower,
            upper,
            rng,
            cache: Vec::new(),
        })
    }

    /// Value at step `t` and whether it had to be clamped into `D`.
    pub(crate) fn value(&mut self, t: usize) -> Result<(Vec<f64>, bool)> {
        while self.cache.len() <= t {
            let k = self.cache.len();
            let raw = self.raw(k);
            let bounded = self.bound(raw)?;
            self.cache.push(bounded);
        }
        Ok(self.cache[t].clone())
    }

    fn raw(&mut self, t: usize) -> Vec<f64> {
        match &self.signal {
            DisturbanceSignal::Constant { value } => value.clone(),
            DisturbanceSignal::Sine {
                amplitude,
                period,
                phase,
                offset,
            } => {
                let s = (2.0 * std::f64::consts::PI * t as f64 / period + phase).sin();
                amplitude
                    .iter()
                    .enumerate()
                    .map(|(i, a)| offset.get(i).copied().unwrap_or(0.0) + a * s)
                    .collect()
            }
            DisturbanceSignal::UniformRandom { .. } => {
                let rng = self.rng.as_mut().expect("seeded");
                self.lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                    .collect()
            }
            DisturbanceSignal::Replay { samples } => samples[t.min(samples.len() - 1)].clone(),
        }
    }

    fn bound(&self, raw: Vec<f64>) -> Result<(Vec<f64>, bool)> {
        let mut clamped = false;
        let mut v: Vec<f64> = raw
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&x, (&lo, &hi))| {
                let c = x.clamp(lo, hi);
                clamped |= c != x;
                c
            })
            .collect();
        if !self.set.contains_point(&v, 0.0) {
            v = crate::supervisor::project_input(&v, &self.set)?;
            clamped = true;
        }
        Ok((v, clamped))
    }
}
