//! Exogenous input signals.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

type SignalFn = dyn Fn(f64, &mut [f64]) + Send + Sync;

/// A disturbance `d(t) ∈ ℝ^{n_d}`, with the times at which it may be
/// discontinuous so the integrator can step onto them.
#[derive(Clone)]
pub struct Disturbance {
    n_d: usize,
    f: Option<Arc<SignalFn>>,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for Disturbance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Disturbance").field("n_d", &self.n_d).field("zero", &self.f.is_none()).field("breakpoints", &self.breakpoints).finish()
    }
}

impl Disturbance {
    pub fn zero(n_d: usize) -> Self {
        Self { n_d, f: None, breakpoints: Vec::new() }
    }

    pub fn from_fn(n_d: usize, f: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { n_d, f: Some(Arc::new(f)), breakpoints: Vec::new() }
    }

    /// Constant `amplitude` on `[t_on, t_off)`, zero elsewhere.
    pub fn pulse(amplitude: Vec<f64>, t_on: f64, t_off: f64) -> Result<Self> {
        if !(t_on.is_finite() && t_off.is_finite() && t_on < t_off) {
            return Err(Error::InvalidInput(format!("pulse needs t_on < t_off, got [{t_on}, {t_off})")));
        }
        let n_d = amplitude.len();
        let mut d = Self::from_fn(n_d, move |t, out| {
            let on = t >= t_on && t < t_off;
            for (o, a) in out.iter_mut().zip(&amplitude) {
                *o = if on { *a } else { 0.0 };
            }
        });
        d.breakpoints = vec![t_on, t_off];
        Ok(d)
    }

    /// A smooth finite-energy signal: per channel, a sum of three sinusoids
    /// under a decaying envelope, with seeded amplitudes, frequencies,
    /// phases and decay rates.
    pub fn random_finite_energy(n_d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<(f64, [(f64, f64, f64); 3])> = (0..n_d)
            .map(|_| {
                let decay = rng.random_range(0.2..1.0);
                let waves = [(); 3].map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.2..5.0), rng.random_range(0.0..std::f64::consts::TAU)));
                (decay, waves)
            })
            .collect();
        Self::from_fn(n_d, move |t, out| {
            for (o, (decay, waves)) in out.iter_mut().zip(&params) {
                let env = (-decay * t.max(0.0)).exp();
                *o = env * waves.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum::<f64>();
            }
        })
    }

    pub fn with_breakpoints(mut self, mut times: Vec<f64>) -> Self {
        self.breakpoints.append(&mut times);
        self.breakpoints.retain(|t| t.is_finite());
        self.breakpoints.sort_by(f64::total_cmp);
        self.breakpoints.dedup();
        self
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_none()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// First breakpoint strictly after `t` (by more than `eps`).
    pub(crate) fn next_breakpoint(&self, t: f64, eps: f64) -> Option<f64> {
        self.breakpoints.iter().copied().find(|b| *b > t + eps)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match &self.f {
            Some(f) => f(t, out),
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_d];
        self.eval_into(t, &mut out);
        out
    }
}
