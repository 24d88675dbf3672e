//! Rules generating the inter-transmission intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TimingBounds;

/// Frequency of the sinusoidal interval law used in the unicycle example.
pub const SINUSOID_FREQUENCY: f64 = 10.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyKind {
    Constant { interval: f64 },
    /// Intervals drawn uniformly from `[T1, T2]`.
    Uniform { seed: u64 },
    /// `t_{k+1} − t_k = T1 + (T2 − T1)(1 + sin(freq·t_k + phase))/2`.
    Sinusoidal { freq: f64, phase: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionPolicy {
    pub kind: PolicyKind,
    pub timing: TimingBounds,
}

impl TransmissionPolicy {
    pub fn new(kind: PolicyKind, timing: TimingBounds) -> Result<Self> {
        let p = Self { kind, timing };
        match kind {
            PolicyKind::Constant { interval } => {
                p.admit(interval)?;
            }
            PolicyKind::Sinusoidal { freq, phase } if !(freq.is_finite() && phase.is_finite()) => {
                return Err(Error::InvalidInput(format!("sinusoidal policy needs finite frequency and phase, got {freq}, {phase}")));
            }
            _ => {}
        }
        Ok(p)
    }

    pub fn constant(interval: f64, timing: TimingBounds) -> Result<Self> {
        Self::new(PolicyKind::Constant { interval }, timing)
    }

    pub fn uniform(seed: u64, timing: TimingBounds) -> Self {
        Self { kind: PolicyKind::Uniform { seed }, timing }
    }

    pub fn sinusoidal(freq: f64, phase: f64, timing: TimingBounds) -> Result<Self> {
        Self::new(PolicyKind::Sinusoidal { freq, phase }, timing)
    }

    fn admit(&self, interval: f64) -> Result<f64> {
        let (t1, t2) = (self.timing.t1(), self.timing.t2());
        if interval.is_finite() && interval >= t1 && interval <= t2 {
            Ok(interval)
        } else {
            Err(Error::InvalidInput(format!("transmission interval {interval} outside [{t1}, {t2}]")))
        }
    }

    /// A fresh interval generator; the uniform law restarts from its seed.
    pub fn sampler(&self) -> PolicySampler {
        let rng = match self.kind {
            PolicyKind::Uniform { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        PolicySampler { policy: *self, rng }
    }
}

#[derive(Debug, Clone)]
pub struct PolicySampler {
    policy: TransmissionPolicy,
    rng: Option<ChaCha8Rng>,
}

impl PolicySampler {
    /// Interval following a transmission at time `t_k`.
    pub fn next_interval(&mut self, t_k: f64) -> Result<f64> {
        let (t1, t2) = (self.policy.timing.t1(), self.policy.timing.t2());
        let dt = match self.policy.kind {
            PolicyKind::Constant { interval } => interval,
            PolicyKind::Uniform { .. } => {
                let rng = self.rng.as_mut().expect("uniform sampler carries an rng");
                if t2 > t1 {
                    rng.random_range(t1..=t2)
                } else {
                    t1
                }
            }
            PolicyKind::Sinusoidal { freq, phase } => {
                let s = 0.5 * (1.0 + (freq * t_k + phase).sin());
                (t1 + (t2 - t1) * s).clamp(t1, t2)
            }
        };
        self.policy.admit(dt)
    }
}
