//! Simulation of the hybrid closed loop.
//!
//! The state is `(x̄, η, τ)`. Between transmissions it flows as
//! `ẋ̄ = 𝔸x̄ + 𝔹η + 𝕍d`, `η̇ = 𝕁x̄ + ℍη + 𝕎d`, `τ̇ = −1`; when the timer
//! reaches zero, `η` is reset to zero and `τ` to the next interval of the
//! transmission policy.

mod diagnostics;
mod disturbance;
mod dopri;
mod policy;
mod sweep;

use std::cell::Cell;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use diagnostics::{decay_estimate, empirical_l2_ratio, flow_dissipation, jump_monotonicity, lemma1_check, lyapunov_along, DecayEstimate, DissipationReport, L2Report, Lemma1Report};
pub use disturbance::Disturbance;
pub use policy::{PolicyKind, PolicySampler, TransmissionPolicy, SINUSOID_FREQUENCY};
pub use sweep::{sweep_t2, SweepRow};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::Mat;
use crate::model::{ClosedLoopMatrices, ControllerParams, PlantModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Record samples on the grid `k·sample_dt`; `None` records every
    /// accepted step.
    pub sample_dt: Option<f64>,
    pub max_steps: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, max_step: 0.05, sample_dt: None, max_steps: 5_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub xbar: Vec<f64>,
    pub eta: Vec<f64>,
    pub tau: f64,
}

impl InitialState {
    /// From plant, controller and holder states, with `η = C_p x_p − ŷ`.
    pub fn from_components(plant: &PlantModel, x_p: &[f64], x_c: &[f64], yhat: &[f64], tau: f64) -> Result<Self> {
        if x_p.len() != plant.n_p() {
            return Err(crate::error::dim_err("x_p", plant.n_p(), x_p.len()));
        }
        if yhat.len() != plant.n_y() {
            return Err(crate::error::dim_err("ŷ", plant.n_y(), yhat.len()));
        }
        let mut xbar = x_p.to_vec();
        xbar.extend_from_slice(x_c);
        let eta = eta_from_yhat(plant, &xbar, yhat);
        Ok(Self { xbar, eta, tau })
    }
}

/// `ŷ = C_p x_p − η`, with `x_p` the leading block of `x̄`.
pub fn yhat_from_eta(plant: &PlantModel, xbar: &[f64], eta: &[f64]) -> Vec<f64> {
    let y = &plant.c * nalgebra::DVector::from_column_slice(&xbar[..plant.n_p()]);
    y.iter().zip(eta).map(|(y, e)| y - e).collect()
}

/// `η = C_p x_p − ŷ`.
pub fn eta_from_yhat(plant: &PlantModel, xbar: &[f64], yhat: &[f64]) -> Vec<f64> {
    let y = &plant.c * nalgebra::DVector::from_column_slice(&xbar[..plant.n_p()]);
    y.iter().zip(yhat).map(|(y, h)| y - h).collect()
}

/// `u = C_c x_c + D_c ŷ`.
pub fn control_input(plant: &PlantModel, ctrl: &ControllerParams, xbar: &[f64], eta: &[f64]) -> Vec<f64> {
    let yhat = nalgebra::DVector::from_vec(yhat_from_eta(plant, xbar, eta));
    let xc = nalgebra::DVector::from_column_slice(&xbar[plant.n_p()..]);
    (&ctrl.c * xc + &ctrl.d * yhat).iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSample {
    pub t: f64,
    pub j: usize,
    pub xbar: Vec<f64>,
    pub eta: Vec<f64>,
    pub tau: f64,
    pub y_o: Vec<f64>,
    pub d: Vec<f64>,
    /// `∫₀ᵗ |y_o|²`.
    pub energy_out: f64,
    /// `∫₀ᵗ |d|²`.
    pub energy_in: f64,
}

impl ArcSample {
    /// `|(x̄, η)|`, the distance to the attractor.
    pub fn distance(&self) -> f64 {
        self.xbar.iter().chain(&self.eta).map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSegment {
    pub j: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Indices into [`HybridArc::samples`].
    pub samples: Range<usize>,
    /// Whether the segment ends with a jump (rather than the horizon).
    pub ends_in_jump: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub t: f64,
    /// Jump counter after the jump.
    pub j: usize,
    pub eta_before: Vec<f64>,
    pub tau_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridArc {
    pub n_xbar: usize,
    pub n_y: usize,
    pub n_d: usize,
    pub n_yo: usize,
    pub t1: f64,
    pub t2: f64,
    pub samples: Vec<ArcSample>,
    pub segments: Vec<FlowSegment>,
    pub jumps: Vec<JumpRecord>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl HybridArc {
    pub fn first(&self) -> &ArcSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &ArcSample {
        self.samples.last().expect("arcs hold at least one sample")
    }

    /// `√∫|y_o|²` over the whole arc.
    pub fn output_l2(&self) -> f64 {
        self.last().energy_out.max(0.0).sqrt()
    }

    /// `√∫|d|²` over the whole arc.
    pub fn input_l2(&self) -> f64 {
        self.last().energy_in.max(0.0).sqrt()
    }

    pub fn max_distance(&self) -> f64 {
        self.samples.iter().map(ArcSample::distance).fold(0.0, f64::max)
    }

    /// Checks that the samples form a well-formed hybrid arc: `t`
    /// non-decreasing, `j` growing by one exactly at jumps, `τ ∈ [0, T2]`,
    /// `τ ∈ [T1, T2]` and `η = 0` right after jumps, and flow lengths equal
    /// to the intervals drawn at the preceding jump.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("malformed arc: {m}")));
        if self.samples.is_empty() || self.segments.is_empty() {
            return bad("no samples".into());
        }
        for w in self.samples.windows(2) {
            if w[1].t < w[0].t {
                return bad(format!("time decreases at t = {}", w[0].t));
            }
            if w[1].j != w[0].j && w[1].j != w[0].j + 1 {
                return bad(format!("jump counter skips from {} to {}", w[0].j, w[1].j));
            }
        }
        for s in &self.samples {
            if s.tau < -tol || s.tau > self.t2 + tol {
                return bad(format!("τ = {} outside [0, {}] at t = {}", s.tau, self.t2, s.t));
            }
        }
        for (k, seg) in self.segments.iter().enumerate() {
            if seg.samples.is_empty() {
                return bad(format!("segment {k} has no samples"));
            }
            if self.samples[seg.samples.clone()].iter().any(|s| s.j != seg.j) {
                return bad(format!("segment {k} mixes jump counters"));
            }
            let first = &self.samples[seg.samples.start];
            if k > 0 {
                if seg.j != self.segments[k - 1].j + 1 || !self.segments[k - 1].ends_in_jump {
                    return bad(format!("segment {k} does not follow a jump"));
                }
                if first.eta.iter().any(|v| *v != 0.0) {
                    return bad(format!("η not reset at t = {}", first.t));
                }
                if first.tau < self.t1 - tol || first.tau > self.t2 + tol {
                    return bad(format!("post-jump τ = {} outside [{}, {}]", first.tau, self.t1, self.t2));
                }
            }
            if seg.ends_in_jump {
                let len = seg.t_end - seg.t_start;
                if (len - first.tau).abs() > tol {
                    return bad(format!("flow of length {len} after drawing τ = {}", first.tau));
                }
            }
        }
        if self.jumps.len() != self.segments.iter().filter(|s| s.ends_in_jump).count() {
            return bad("jump records do not match segments".into());
        }
        Ok(())
    }

    /// CSV with columns `t, j, xbar_*, eta_*, tau, yo_*, d_*`, values printed
    /// to 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,j");
        for (pre, n) in [("xbar", self.n_xbar), ("eta", self.n_y)] {
            for i in 1..=n {
                let _ = write!(out, ",{pre}_{i}");
            }
        }
        out.push_str(",tau");
        for (pre, n) in [("yo", self.n_yo), ("d", self.n_d)] {
            for i in 1..=n {
                let _ = write!(out, ",{pre}_{i}");
            }
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{}", fmt_f64(s.t), s.j);
            for v in s.xbar.iter().chain(&s.eta).chain(std::iter::once(&s.tau)).chain(&s.y_o).chain(&s.d) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Layout of the integrated vector `(x̄, η, τ, ∫|y_o|², ∫|d|²)`.
struct Layout {
    nx: usize,
    ny: usize,
}

impl Layout {
    fn tau(&self) -> usize {
        self.nx + self.ny
    }
    fn len(&self) -> usize {
        self.nx + self.ny + 3
    }
}

/// The disturbance is sampled at `min(t, cap)`, so a step ending on a
/// breakpoint sees the left limit there.
fn rhs<'a>(cl: &'a ClosedLoopMatrices, d: &'a Disturbance, cap: &'a Cell<f64>, lay: &Layout) -> impl FnMut(f64, &[f64], &mut [f64]) + 'a {
    let (nx, ny) = (lay.nx, lay.ny);
    let mut dv = vec![0.0; d.n_d()];
    move |t, z, out| {
        d.eval_into(t.min(cap.get()), &mut dv);
        let (x, e) = (&z[..nx], &z[nx..nx + ny]);
        for i in 0..nx {
            let mut acc = 0.0;
            for k in 0..nx {
                acc += cl.a[(i, k)] * x[k];
            }
            for k in 0..ny {
                acc += cl.b[(i, k)] * e[k];
            }
            for k in 0..dv.len() {
                acc += cl.v[(i, k)] * dv[k];
            }
            out[i] = acc;
        }
        for i in 0..ny {
            let mut acc = 0.0;
            for k in 0..nx {
                acc += cl.j[(i, k)] * x[k];
            }
            for k in 0..ny {
                acc += cl.h[(i, k)] * e[k];
            }
            for k in 0..dv.len() {
                acc += cl.w[(i, k)] * dv[k];
            }
            out[nx + i] = acc;
        }
        out[nx + ny] = -1.0;
        let mut yo2 = 0.0;
        for i in 0..cl.c_o.nrows() {
            let yi: f64 = (0..nx).map(|k| cl.c_o[(i, k)] * x[k]).sum();
            yo2 += yi * yi;
        }
        out[nx + ny + 1] = yo2;
        out[nx + ny + 2] = dv.iter().map(|v| v * v).sum();
    }
}

struct Recorder<'a> {
    cl: &'a ClosedLoopMatrices,
    d: &'a Disturbance,
    lay: Layout,
    samples: Vec<ArcSample>,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, j: usize, z: &[f64]) {
        let (nx, ny) = (self.lay.nx, self.lay.ny);
        let xbar = z[..nx].to_vec();
        let y_o = (&self.cl.c_o * nalgebra::DVector::from_column_slice(&xbar)).iter().copied().collect();
        self.samples.push(ArcSample {
            t,
            j,
            xbar,
            eta: z[nx..nx + ny].to_vec(),
            tau: z[nx + ny],
            y_o,
            d: self.d.eval(t),
            energy_out: z[nx + ny + 1],
            energy_in: z[nx + ny + 2],
        });
    }
}

/// Integrates the hybrid closed loop on `[0, t_end]`.
pub fn simulate(cl: &ClosedLoopMatrices, x0: &InitialState, d: &Disturbance, policy: &TransmissionPolicy, t_end: f64, settings: &SimSettings) -> Result<HybridArc> {
    cl.validate()?;
    let lay = Layout { nx: cl.n_xbar(), ny: cl.n_y() };
    if x0.xbar.len() != lay.nx {
        return Err(crate::error::dim_err("initial x̄", lay.nx, x0.xbar.len()));
    }
    if x0.eta.len() != lay.ny {
        return Err(crate::error::dim_err("initial η", lay.ny, x0.eta.len()));
    }
    if d.n_d() != cl.n_d() {
        return Err(crate::error::dim_err("disturbance channels", cl.n_d(), d.n_d()));
    }
    let t2 = policy.timing.t2();
    if !(x0.tau >= 0.0 && x0.tau <= t2) {
        return Err(Error::InvalidInput(format!("initial τ = {} outside [0, {t2}]", x0.tau)));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {t_end}")));
    }
    let s = settings;
    if !(s.rtol > 0.0 && s.atol > 0.0 && s.max_step > 0.0) || s.sample_dt.is_some_and(|dt| !(dt > 0.0)) {
        return Err(Error::InvalidInput(format!("invalid simulation settings {s:?}")));
    }

    let tau_i = lay.tau();
    let mut z = vec![0.0; lay.len()];
    z[..lay.nx].copy_from_slice(&x0.xbar);
    z[lay.nx..tau_i].copy_from_slice(&x0.eta);
    z[tau_i] = x0.tau;
    let cap = Cell::new(f64::INFINITY);
    let mut f = rhs(cl, d, &cap, &Layout { nx: lay.nx, ny: lay.ny });
    let mut rec = Recorder { cl, d, lay, samples: Vec::new() };
    let mut segments = Vec::new();
    let mut jumps = Vec::new();
    let mut sampler = policy.sampler();
    let (mut t, mut j) = (0.0_f64, 0_usize);
    let mut h = s.max_step.min(1e-2);
    let (mut accepted, mut rejected) = (0, 0);
    let mut fz = vec![0.0; z.len()];
    let hmin = 1e-14;
    let horizon_eps = 1e-12 * t_end.max(1.0);

    loop {
        let seg_start = rec.samples.len();
        let t_seg = t;
        rec.push(t, j, &z);
        let mut ends_in_jump = false;
        f(t, &z, &mut fz);
        // τ decreases at unit rate, so the next jump time is known exactly.
        let t_jump = t + z[tau_i];
        let t_stop = t_jump.min(t_end);
        while t < t_stop - horizon_eps {
            if accepted + rejected >= s.max_steps {
                return Err(integration_failure(t, &z, "step budget exhausted"));
            }
            let mut h_try = h.min(s.max_step).min(t_stop - t);
            let mut step_end = None;
            if let Some(b) = d.next_breakpoint(t, horizon_eps).filter(|b| b - t <= h_try) {
                h_try = b - t;
                step_end = Some(b);
            }
            cap.set(step_end.map_or(f64::INFINITY, f64::next_down));
            let tr = dopri::trial(&mut f, t, &z, &fz, h_try, s.rtol, s.atol);
            if !(tr.err <= 1.0) {
                rejected += 1;
                if !tr.err.is_finite() {
                    return Err(integration_failure(t, &z, "non-finite error estimate"));
                }
                h = h_try * dopri::step_factor(tr.err);
                if h < hmin {
                    return Err(integration_failure(t, &z, "step size underflow"));
                }
                continue;
            }
            accepted += 1;
            // A step cut short by a jump or breakpoint keeps the previous proposal.
            if h_try >= h.min(s.max_step) {
                h = h_try * dopri::step_factor(tr.err);
            }
            let t_next = if t_stop - (t + h_try) <= horizon_eps { t_stop } else { step_end.unwrap_or(t + h_try) };
            record_grid(&mut rec, s.sample_dt, &tr.dense, t, t_next, j, true);
            t = t_next;
            z = tr.y;
            fz = tr.f_end;
            if step_end.is_some() {
                cap.set(f64::INFINITY);
                f(t, &z, &mut fz);
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(integration_failure(t, &z, "state became non-finite"));
            }
        }
        if t_jump <= t_end - horizon_eps {
            t = t_jump;
            z[tau_i] = 0.0;
            if let Some(last) = rec.samples.last_mut().filter(|last| last.t == t) {
                last.tau = 0.0;
            }
        }
        if z[tau_i] <= 0.0 && t < t_end - horizon_eps {
            ends_in_jump = true;
        }
        if rec.samples.last().is_none_or(|last| last.t < t || rec.samples.len() == seg_start) {
            rec.push(t, j, &z);
        }
        segments.push(FlowSegment { j, t_start: t_seg, t_end: t, samples: seg_start..rec.samples.len(), ends_in_jump });
        if !ends_in_jump {
            break;
        }
        let eta_before = z[rec.lay.nx..tau_i].to_vec();
        let next = sampler.next_interval(t)?;
        z[rec.lay.nx..tau_i].iter_mut().for_each(|v| *v = 0.0);
        z[tau_i] = next;
        j += 1;
        jumps.push(JumpRecord { t, j, eta_before, tau_after: next });
    }

    Ok(HybridArc {
        n_xbar: rec.lay.nx,
        n_y: rec.lay.ny,
        n_d: cl.n_d(),
        n_yo: cl.n_yo(),
        t1: policy.timing.t1(),
        t2,
        samples: rec.samples,
        segments,
        jumps,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

/// Records samples on `(t0, t1)` (grid mode) or at `t1` (step mode, when
/// `at_end`).
fn record_grid(rec: &mut Recorder<'_>, sample_dt: Option<f64>, dense: &dopri::DenseStep, t0: f64, t1: f64, j: usize, at_end: bool) {
    let mut buf = vec![0.0; rec.lay.len()];
    match sample_dt {
        None => {
            if at_end {
                dense.eval_into(t1, &mut buf);
                rec.push(t1, j, &buf);
            }
        }
        Some(dt) => {
            let mut k = (t0 / dt).floor() as i64 + 1;
            loop {
                let tg = k as f64 * dt;
                if tg >= t1 {
                    break;
                }
                if tg > t0 {
                    dense.eval_into(tg, &mut buf);
                    rec.push(tg, j, &buf);
                }
                k += 1;
            }
        }
    }
}

fn integration_failure(t: f64, z: &[f64], reason: &str) -> Error {
    Error::Integration { t, reason: format!("{reason}; last state {z:?}") }
}

/// Closed loop with `H = 0`, `E = 0` in place of the designed holder.
pub fn zoh_variant(plant: &PlantModel, ctrl: &ControllerParams) -> Result<ClosedLoopMatrices> {
    let hold = crate::model::HolderParams::zero_order_hold(plant.n_y(), ctrl.n_c());
    crate::model::assemble_closed_loop(plant, ctrl, &hold)
}

/// A flow-only closed loop `ẋ̄ = A x̄ + V d`, `y_o = C x̄`, with a single
/// inert holder channel; with transmissions rarer than the horizon it
/// behaves as a plain LTI system.
pub fn lti_closed_loop(a: Mat, v: Mat, c: Mat) -> Result<ClosedLoopMatrices> {
    let n = a.nrows();
    let nd = v.ncols();
    let cl = ClosedLoopMatrices {
        b: Mat::zeros(n, 1),
        j: Mat::zeros(1, n),
        h: Mat::from_element(1, 1, -1.0),
        w: Mat::zeros(1, nd),
        a,
        v,
        c_o: c,
    };
    cl.validate()?;
    Ok(cl)
}
