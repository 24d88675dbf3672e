//! Post-processing of simulated arcs.

use serde::{Deserialize, Serialize};

use super::{ArcSample, HybridArc};
use crate::analysis::{lyapunov_value, CertificateConstants};
use crate::error::{Error, Result};
use crate::lmi::Certificate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2Report {
    /// `√∫|y_o|²`.
    pub output_l2: f64,
    /// `√∫|d|²`.
    pub input_l2: f64,
    /// `|φ(0,0)|_𝒜`.
    pub initial_distance: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// `α|φ(0,0)|_𝒜 + γ√∫|d|²`.
    pub bound: f64,
    /// `bound − output_l2`; non-negative when the bound holds.
    pub slack: f64,
    /// `output_l2 / input_l2`, when the input has energy.
    pub ratio: Option<f64>,
}

/// Compares the output energy of `arc` with the L2-gain bound.
pub fn empirical_l2_ratio(arc: &HybridArc, gamma: f64, alpha: f64) -> Result<L2Report> {
    if arc.samples.len() < 2 || arc.last().t <= arc.first().t {
        return Err(Error::InvalidInput("L2 ratio needs an arc of positive length".into()));
    }
    let (output_l2, input_l2) = (arc.output_l2(), arc.input_l2());
    let initial_distance = arc.first().distance();
    let bound = alpha * initial_distance + gamma * input_l2;
    Ok(L2Report {
        output_l2,
        input_l2,
        initial_distance,
        alpha,
        gamma,
        bound,
        slack: bound - output_l2,
        ratio: (input_l2 > 0.0).then(|| output_l2 / input_l2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub kappa: f64,
    /// Fitted rate in hybrid time `t + j`; positive means decay.
    pub lambda: f64,
    pub samples_used: usize,
}

/// Least-squares fit of `log|φ|_𝒜 ≈ log κ̂ − λ̂ (t + j)` over the second
/// half (in hybrid time) of a disturbance-free arc.
pub fn decay_estimate(arc: &HybridArc) -> Result<DecayEstimate> {
    if arc.samples.iter().any(|s| s.d.iter().any(|v| *v != 0.0)) {
        return Err(Error::InvalidInput("decay estimate needs d ≡ 0".into()));
    }
    let pre_zero: Vec<&ArcSample> = arc.samples.iter().take_while(|s| s.distance() > 0.0).collect();
    let s_of = |s: &ArcSample| s.t + s.j as f64;
    let Some(last) = pre_zero.last() else {
        return Err(Error::InvalidInput("arc starts on the attractor".into()));
    };
    let mid = 0.5 * (s_of(pre_zero[0]) + s_of(last));
    let pts: Vec<(f64, f64)> = pre_zero.iter().filter(|s| s_of(s) >= mid).map(|s| (s_of(s), s.distance().ln())).collect();
    if pts.len() < 2 {
        return Err(Error::InvalidInput("too few samples for a decay fit".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("decay fit over a single hybrid time".into()));
    }
    let slope = sxy / sxx;
    Ok(DecayEstimate { kappa: (my - slope * mx).exp(), lambda: -slope, samples_used: pts.len() })
}

/// `𝒱` at every sample.
pub fn lyapunov_along(arc: &HybridArc, cert: &Certificate) -> Result<Vec<f64>> {
    arc.samples.iter().map(|s| lyapunov_value(&s.xbar, &s.eta, s.tau, &cert.p1, &cert.p2, cert.delta)).collect()
}

/// Largest relative increase of `𝒱` across a jump; `≤ 0` when `𝒱` never
/// grows at jumps.
pub fn jump_monotonicity(arc: &HybridArc, cert: &Certificate) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for w in arc.segments.windows(2) {
        let before = &arc.samples[w[0].samples.end - 1];
        let after = &arc.samples[w[1].samples.start];
        let v0 = lyapunov_value(&before.xbar, &before.eta, before.tau, &cert.p1, &cert.p2, cert.delta)?;
        let v1 = lyapunov_value(&after.xbar, &after.eta, after.tau, &cert.p1, &cert.p2, cert.delta)?;
        worst = worst.max((v1 - v0) / v0.abs().max(f64::MIN_POSITIVE));
    }
    Ok(if worst.is_finite() { worst } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    /// Largest of `(d𝒱/dt − rhs) / scale` over sample pairs.
    pub worst: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// Checks `d𝒱/dt ≤ −2λ_t𝒱 − |y_o|² + γ²|d|²` along flows, with `d𝒱/dt`
/// from finite differences of consecutive samples and the right side
/// averaged over each pair.
pub fn flow_dissipation(arc: &HybridArc, cert: &Certificate, lambda_t: f64, gamma: f64, rel_tol: f64) -> Result<DissipationReport> {
    let v = lyapunov_along(arc, cert)?;
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0;
    let rhs = |s: &ArcSample, v: f64| -> (f64, f64) {
        let y2: f64 = s.y_o.iter().map(|x| x * x).sum();
        let d2: f64 = s.d.iter().map(|x| x * x).sum();
        let terms = [2.0 * lambda_t * v, y2, gamma * gamma * d2];
        (-terms[0] - terms[1] + terms[2], terms.iter().fold(0.0, |m: f64, t| m.max(t.abs())))
    };
    for seg in &arc.segments {
        for k in seg.samples.start..seg.samples.end.saturating_sub(1) {
            let (a, b) = (&arc.samples[k], &arc.samples[k + 1]);
            let dt = b.t - a.t;
            if dt <= 0.0 {
                continue;
            }
            let fd = (v[k + 1] - v[k]) / dt;
            let (ra, sa) = rhs(a, v[k]);
            let (rb, sb) = rhs(b, v[k + 1]);
            let scale = sa.max(sb).max(fd.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max((fd - 0.5 * (ra + rb)) / scale);
            pairs += 1;
        }
    }
    let worst = if worst.is_finite() { worst } else { 0.0 };
    Ok(DissipationReport { worst, pairs, pass: worst <= rel_tol })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    /// Smallest `ω − λ(t+j) + λ_t t` over the samples.
    pub worst_margin: f64,
    pub pass: bool,
}

/// Checks `−λ_t t ≤ ω − λ(t + j)` at every sample of the arc.
pub fn lemma1_check(arc: &HybridArc, c: &CertificateConstants) -> Lemma1Report {
    let worst_margin = arc.samples.iter().map(|s| c.omega - c.lambda * (s.t + s.j as f64) + c.lambda_t * s.t).fold(f64::INFINITY, f64::min);
    Lemma1Report { worst_margin, pass: worst_margin >= -1e-12 }
}
