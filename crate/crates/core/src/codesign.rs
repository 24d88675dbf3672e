//! Joint synthesis of the controller and the holding device.
//!
//! For fixed `δ` the synthesis conditions are LMIs except for the coupling
//! `F·F_i = I`. It is relaxed to `[[F, I], [I, F_i]] ⪰ 0` and enforced by the
//! cone-complementarity iteration, which minimizes the linearization
//! `trace(F⁽ᵏ⁾F_i + F_i⁽ᵏ⁾F)` until `trace(F·F_i)` reaches its lower bound
//! `2n_p`. The outer loop bisects for the smallest `δ` at which the `τ = 0`
//! conditions are feasible, then grows `δ` geometrically until a design
//! passes the posterior check `R − F⁻¹ ≺ 0`.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, VerificationReport};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lmi::{self, Certificate, DesignVarHandles, DesignVariables, PoleRegion};
use crate::model::{self, assemble_closed_loop, ControllerParams, HolderParams, HolderVariables, LyapunovFactors, PlantModel, TimingBounds, TransformedGains};
use crate::sdp::{self, AffExpr, SdpProblem, SdpSettings, SdpStatus, Sense};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodesignOptions {
    /// Prescribed L2 gain.
    pub gamma: f64,
    pub timing: TimingBounds,
    /// Growth ratio of the `δ` line search.
    #[serde(default = "defaults::ratio")]
    pub ratio: f64,
    /// Upper end of the `δ` search.
    #[serde(default = "defaults::delta_max")]
    pub delta_max: f64,
    #[serde(default = "defaults::bisection_tol")]
    pub bisection_tol: f64,
    #[serde(default = "defaults::cc_max_iter")]
    pub cc_max_iter: usize,
    /// Relative tolerance on `trace(F·F_i) − 2n_p`.
    #[serde(default = "defaults::cc_trace_tol")]
    pub cc_trace_tol: f64,
    /// The iteration stops when the linearized objective decreases by less
    /// than this fraction.
    #[serde(default = "defaults::cc_stagnation_tol")]
    pub cc_stagnation_tol: f64,
    /// Keep iterating after the trace target is met while `R − F⁻¹ ≺ 0`
    /// still fails.
    #[serde(default = "defaults::yes")]
    pub cc_until_posterior: bool,
    /// Margin used for every strict inequality.
    #[serde(default = "defaults::eps_strict")]
    pub eps_strict: f64,
    /// Scale-relative slack of the final certificate check.
    #[serde(default = "defaults::verify_rel_tol")]
    pub verify_rel_tol: f64,
    #[serde(default)]
    pub pole_region: PoleRegion,
    #[serde(default)]
    pub sdp: SdpSettings,
}

mod defaults {
    pub fn ratio() -> f64 {
        1.1
    }
    pub fn delta_max() -> f64 {
        10.0
    }
    pub fn bisection_tol() -> f64 {
        0.1
    }
    pub fn cc_max_iter() -> usize {
        200
    }
    pub fn cc_trace_tol() -> f64 {
        1e-4
    }
    pub fn cc_stagnation_tol() -> f64 {
        1e-4
    }
    pub fn yes() -> bool {
        true
    }
    pub fn eps_strict() -> f64 {
        1e-7
    }
    pub fn verify_rel_tol() -> f64 {
        crate::analysis::DEFAULT_REL_TOL
    }
}

impl CodesignOptions {
    pub fn new(gamma: f64, timing: TimingBounds) -> Self {
        Self {
            gamma,
            timing,
            ratio: defaults::ratio(),
            delta_max: defaults::delta_max(),
            bisection_tol: defaults::bisection_tol(),
            cc_max_iter: defaults::cc_max_iter(),
            cc_trace_tol: defaults::cc_trace_tol(),
            cc_stagnation_tol: defaults::cc_stagnation_tol(),
            cc_until_posterior: true,
            eps_strict: defaults::eps_strict(),
            verify_rel_tol: defaults::verify_rel_tol(),
            pole_region: PoleRegion::default(),
            sdp: SdpSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.ratio > 1.0 && self.ratio.is_finite()) {
            return bad(format!("line-search ratio must exceed 1, got {}", self.ratio));
        }
        if !(self.delta_max > 0.0 && self.delta_max.is_finite()) {
            return bad(format!("delta_max must be positive, got {}", self.delta_max));
        }
        for (v, name) in [
            (self.bisection_tol, "bisection_tol"),
            (self.cc_trace_tol, "cc_trace_tol"),
            (self.cc_stagnation_tol, "cc_stagnation_tol"),
            (self.eps_strict, "eps_strict"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.cc_max_iter == 0 {
            return bad("cc_max_iter must be at least 1".into());
        }
        self.pole_region.validate()
    }
}

/// Input document of a design run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub plant: PlantModel,
    pub options: CodesignOptions,
}

/// One solve of the cone-complementarity iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcRecord {
    pub delta: f64,
    pub iteration: usize,
    pub status: SdpStatus,
    /// `trace(F·F_i)` at the new iterate.
    pub trace: Option<f64>,
    /// `trace(F⁽ᵏ⁾F_i + F_i⁽ᵏ⁾F)` at the new iterate.
    pub linearized: Option<f64>,
    /// `λmax(R − F⁻¹)` at the new iterate.
    pub posterior_margin: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcStop {
    /// Trace target met (and the posterior check, if requested).
    Converged,
    MaxIterations,
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct CcSolution {
    pub vars: DesignVariables,
    pub trace: f64,
    pub iterations: usize,
    pub stop: CcStop,
    pub posterior: PosteriorCheck,
}

#[derive(Debug, Clone)]
pub enum CcOutcome {
    Feasible(Box<CcSolution>),
    Infeasible { status: SdpStatus, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorCheck {
    pub pass: bool,
    /// `λmax(R − F⁻¹)`, absent when `F` is singular.
    pub margin: Option<f64>,
    pub message: String,
}

/// Passes iff `λmax(R − F⁻¹) < 0`.
pub fn posterior_check(r: &Mat, f: &Mat) -> PosteriorCheck {
    if r.shape() != f.shape() || r.nrows() != r.ncols() {
        return PosteriorCheck { pass: false, margin: None, message: format!("shape mismatch: R {:?}, F {:?}", r.shape(), f.shape()) };
    }
    match linalg::inverse(&linalg::symmetrize(f), "F") {
        Ok(fi) => {
            let margin = linalg::lambda_max(&(r - fi));
            PosteriorCheck { pass: margin < 0.0, margin: Some(margin), message: String::new() }
        }
        Err(e) => PosteriorCheck { pass: false, margin: None, message: e.to_string() },
    }
}

/// The fixed-`δ` constraint set of the synthesis problem.
struct Synthesis {
    problem: SdpProblem,
    handles: DesignVarHandles,
}

fn synthesis_problem(plant: &PlantModel, delta: f64, opts: &CodesignOptions, include_t2: bool) -> Result<Synthesis> {
    let mut p = SdpProblem::new();
    let h = DesignVarHandles::declare(&mut p, plant);
    let v = h.exprs();
    let eps = opts.eps_strict;
    let t2 = opts.timing.t2();
    let (np, ny) = (plant.n_p(), plant.n_y());

    p.add_lmi("Theta > 0", lmi::theta_expr(&v)?, Sense::Psd, eps);
    p.add_lmi("M1hat < 0", lmi::m1_hat_expr(&v, plant)?, Sense::Nsd, eps);
    p.add_lmi("M2hat(0) < 0", lmi::m2_hat_expr(0.0, t2, delta, &v, plant)?, Sense::Nsd, eps);
    if include_t2 {
        p.add_lmi("M2hat(T2) < 0", lmi::m2_hat_expr(t2, t2, delta, &v, plant)?, Sense::Nsd, eps);
    }
    p.add_lmi("R - F_i < 0", &v.r - &v.f_i, Sense::Nsd, eps);
    p.add_lmi("Q - O < 0", &v.q - &v.o, Sense::Nsd, eps);
    p.add_lmi("P2 > 0", v.p2.clone(), Sense::Psd, eps);
    p.add_lmi("Q > 0", v.q.clone(), Sense::Psd, eps);
    p.add_lmi("R > 0", v.r.clone(), Sense::Psd, eps);
    p.add_lmi("V + V' > 0", v.v.he()?, Sense::Psd, eps);
    p.add_lmi("gamma1 > 0", v.gamma1.clone(), Sense::Psd, eps);
    p.add_lmi("gamma2 > 0", v.gamma2.clone(), Sense::Psd, eps);
    let g2 = AffExpr::constant(Mat::from_element(1, 1, opts.gamma * opts.gamma));
    p.add_lmi("gamma1 + gamma2 <= gamma^2", &(&v.gamma1 + &v.gamma2) - &g2, Sense::Nsd, 0.0);
    let n2 = 2 * np;
    let cc = AffExpr::block(&[vec![v.f.clone(), AffExpr::identity(n2)], vec![AffExpr::identity(n2), v.f_i.clone()]])?;
    p.add_lmi("[F I; I F_i] >= 0", cc, Sense::Psd, 0.0);
    for (name, e, psd) in opts.pole_region.exprs(&v, plant)? {
        p.add_lmi(name, e, if psd { Sense::Psd } else { Sense::Nsd }, eps);
    }
    let _ = ny;
    Ok(Synthesis { problem: p, handles: h })
}

fn linearized_objective(s: &Synthesis, f_k: &Mat, fi_k: &Mat) -> Result<AffExpr> {
    let v = s.handles.exprs();
    Ok(v.f_i.inner(f_k)? + v.f.inner(fi_k)?)
}

/// Runs the cone-complementarity iteration at a fixed `δ` with the full
/// constraint set.
pub fn cc_minimize_trace(plant: &PlantModel, delta: f64, opts: &CodesignOptions, log: &mut Vec<CcRecord>) -> Result<CcOutcome> {
    cc_minimize_trace_from(plant, delta, opts, None, log)
}

/// As [`cc_minimize_trace`], linearizing first at `start = (F, F_i)`
/// instead of the identity.
pub fn cc_minimize_trace_from(plant: &PlantModel, delta: f64, opts: &CodesignOptions, start: Option<(&Mat, &Mat)>, log: &mut Vec<CcRecord>) -> Result<CcOutcome> {
    opts.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let syn = synthesis_problem(plant, delta, opts, true)?;
    let n2 = 2 * plant.n_p();
    let target = n2 as f64;
    let (mut f_k, mut fi_k) = match start {
        Some((f, fi)) => {
            linalg::check_shape(f, n2, n2, "F start")?;
            linalg::check_shape(fi, n2, n2, "F_i start")?;
            (f.clone(), fi.clone())
        }
        None => (Mat::identity(n2, n2), Mat::identity(n2, n2)),
    };
    let mut prev_lin = f64::INFINITY;
    let mut best: Option<CcSolution> = None;

    for k in 0..opts.cc_max_iter {
        let mut p = syn.problem.clone();
        p.minimize(linearized_objective(&syn, &f_k, &fi_k)?);
        let sol = sdp::solve(&p, &opts.sdp)?;
        let Some(vars) = syn.handles.extract(&sol, delta) else {
            log.push(CcRecord { delta, iteration: k, status: sol.status, trace: None, linearized: None, posterior_margin: None, note: sol.diagnostics.message.clone() });
            debug!("delta {delta:.5} iteration {k}: {:?} ({})", sol.status, sol.diagnostics.message);
            return Ok(match best {
                // A later solve failing numerically does not undo earlier feasible iterates.
                Some(b) if k > 0 => CcOutcome::Feasible(Box::new(CcSolution { stop: CcStop::Stagnated, ..b })),
                _ => CcOutcome::Infeasible { status: sol.status, message: sol.diagnostics.message },
            });
        };
        let trace = vars.cc_trace();
        let lin = sol.objective.unwrap_or(f64::NAN);
        let posterior = posterior_check(&vars.r, &vars.f);
        let mut note = String::new();
        if trace < target - 1e-8 * target {
            note = format!("trace below lower bound by {:.3e}", target - trace);
        }
        log.push(CcRecord { delta, iteration: k, status: sol.status, trace: Some(trace), linearized: Some(lin), posterior_margin: posterior.margin, note });
        debug!("delta {delta:.5} iteration {k}: trace {trace:.9} linearized {lin:.9} posterior {:?}", posterior.margin);

        let met = trace - target <= opts.cc_trace_tol * target;
        let done = met && (!opts.cc_until_posterior || posterior.pass);
        // The first linearization point need not be feasible, so the first
        // pair of objective values is not comparable.
        let stagnated = k > 1 && lin > prev_lin - opts.cc_stagnation_tol * prev_lin.abs().max(1.0);
        f_k = vars.f.clone();
        fi_k = vars.f_i.clone();
        prev_lin = lin;
        let stop = if done {
            Some(CcStop::Converged)
        } else if stagnated {
            Some(CcStop::Stagnated)
        } else if k + 1 == opts.cc_max_iter {
            Some(CcStop::MaxIterations)
        } else {
            None
        };
        let cur = CcSolution { vars, trace, iterations: k + 1, stop: stop.unwrap_or(CcStop::MaxIterations), posterior };
        if let Some(stop) = stop {
            return Ok(CcOutcome::Feasible(Box::new(CcSolution { stop, ..cur })));
        }
        best = Some(cur);
    }
    unreachable!("the loop returns on its last iteration")
}

/// Whether the relaxed `δ`-dependent constraint set without the `τ = T2`
/// inequality admits a solution.
fn lower_bound_feasible(plant: &PlantModel, delta: f64, opts: &CodesignOptions, log: &mut Vec<CcRecord>) -> Result<bool> {
    let syn = synthesis_problem(plant, delta, opts, false)?;
    let n2 = 2 * plant.n_p();
    let mut p = syn.problem.clone();
    p.minimize(linearized_objective(&syn, &Mat::identity(n2, n2), &Mat::identity(n2, n2))?);
    let sol = sdp::solve(&p, &opts.sdp)?;
    let trace = syn.handles.extract(&sol, delta).map(|v| v.cc_trace());
    log.push(CcRecord { delta, iteration: 0, status: sol.status, trace, linearized: sol.objective, posterior_margin: None, note: "lower-bound probe".into() });
    Ok(sol.is_optimal())
}

/// Smallest `δ ∈ (0, δ̄]`, to the bisection tolerance, at which the `τ = 0`
/// conditions are feasible. `None` when infeasible at `δ̄`.
pub fn delta_lower_bound(plant: &PlantModel, opts: &CodesignOptions, log: &mut Vec<CcRecord>) -> Result<Option<f64>> {
    opts.validate()?;
    let mut hi = opts.delta_max;
    if !lower_bound_feasible(plant, hi, opts, log)? {
        return Ok(None);
    }
    let mut lo = 0.0;
    while hi - lo > opts.bisection_tol {
        let mid = 0.5 * (lo + hi);
        if lower_bound_feasible(plant, mid, opts, log)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Result of a successful co-design, also the on-disk design format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignResult {
    pub plant: PlantModel,
    pub timing: TimingBounds,
    pub gamma: f64,
    pub controller: ControllerParams,
    pub holder: HolderParams,
    pub certificate: Certificate,
    /// `δ` of the accepted design.
    pub delta_used: f64,
    #[serde(default)]
    pub delta_min: Option<f64>,
    /// `trace(F·F_i)` of the accepted design.
    #[serde(default)]
    pub cc_trace: Option<f64>,
    #[serde(default)]
    pub variables: Option<DesignVariables>,
    #[serde(default)]
    pub verification: Option<VerificationReport>,
    #[serde(default)]
    pub log: Vec<CcRecord>,
}

impl DesignResult {
    pub fn closed_loop(&self) -> Result<model::ClosedLoopMatrices> {
        assemble_closed_loop(&self.plant, &self.controller, &self.holder)
    }

    pub fn verify(&self, rel_tol: f64) -> Result<VerificationReport> {
        analysis::verify_certificate(&self.certificate, &self.closed_loop()?, self.timing.t2(), self.gamma, rel_tol)
    }
}

#[derive(Debug, Clone)]
pub enum DesignOutcome {
    Feasible(Box<DesignResult>),
    NoFeasibleSolution { delta_min: Option<f64>, log: Vec<CcRecord> },
}

impl DesignOutcome {
    pub fn result(&self) -> Option<&DesignResult> {
        match self {
            DesignOutcome::Feasible(r) => Some(r),
            DesignOutcome::NoFeasibleSolution { .. } => None,
        }
    }
}

/// Turns solved variables into a controller, holder and certificate.
pub fn recover(plant: &PlantModel, vars: &DesignVariables, gamma: f64) -> Result<(ControllerParams, HolderParams, Certificate)> {
    let u = model::factor_u(&vars.x, &vars.y, &vars.v)?;
    let p1 = model::build_p1(&vars.x, &vars.y, &u, &vars.v)?;
    let factors = LyapunovFactors { x: vars.x.clone(), y: vars.y.clone(), u, v: vars.v.clone() };
    let gains = TransformedGains { k: vars.k.clone(), l: vars.l.clone(), m: vars.m.clone(), n: vars.n.clone() };
    let hv = HolderVariables { j: vars.j.clone(), z: vars.z.clone(), p2: vars.p2.clone() };
    let (ctrl, hold) = model::reconstruct_controller(plant, &gains, &factors, &hv)?;
    let s = linalg::symmetrize(&linalg::inverse(&linalg::symmetrize(&vars.f), "F")?);
    let cert = Certificate {
        p1,
        p2: linalg::symmetrize(&vars.p2),
        s,
        r: linalg::symmetrize(&vars.r),
        q: linalg::symmetrize(&vars.q),
        o: linalg::symmetrize(&vars.o),
        delta: vars.delta,
        gamma1: vars.gamma1,
        gamma2: vars.gamma2,
        gamma,
    };
    Ok((ctrl, hold, cert))
}

/// The full design loop: bisection for the lower bound on `δ`, then a
/// geometric line search on `δ` with the cone-complementarity iteration and
/// the posterior check at each step.
pub fn design(plant: &PlantModel, opts: &CodesignOptions) -> Result<DesignOutcome> {
    opts.validate()?;
    let mut log = Vec::new();
    let Some(delta_min) = delta_lower_bound(plant, opts, &mut log)? else {
        info!("no feasible delta up to {}", opts.delta_max);
        return Ok(DesignOutcome::NoFeasibleSolution { delta_min: None, log });
    };
    info!("delta lower bound {delta_min:.6}");
    let mut delta = delta_min;
    while delta <= opts.delta_max {
        match cc_minimize_trace(plant, delta, opts, &mut log)? {
            CcOutcome::Infeasible { status, .. } => debug!("delta {delta:.5}: {status:?}"),
            CcOutcome::Feasible(cc) => {
                let target = 2.0 * plant.n_p() as f64;
                let met = cc.trace - target <= opts.cc_trace_tol * target;
                if met && cc.posterior.pass {
                    match accept(plant, opts, &cc, delta_min, &log) {
                        Ok(Some(res)) => {
                            info!("accepted design at delta {delta:.6}, trace {:.9}", cc.trace);
                            let mut res = res;
                            res.log = log;
                            return Ok(DesignOutcome::Feasible(Box::new(res)));
                        }
                        Ok(None) => {}
                        Err(e @ Error::Singular { .. }) => {
                            log.push(CcRecord { delta, iteration: cc.iterations, status: SdpStatus::NumericalFailure, trace: Some(cc.trace), linearized: None, posterior_margin: cc.posterior.margin, note: format!("recovery failed: {e}") });
                        }
                        Err(e) => return Err(e),
                    }
                } else {
                    debug!("delta {delta:.5}: trace {:.6}, posterior {:?}", cc.trace, cc.posterior.margin);
                }
            }
        }
        delta *= opts.ratio;
    }
    Ok(DesignOutcome::NoFeasibleSolution { delta_min: Some(delta_min), log })
}

fn accept(plant: &PlantModel, opts: &CodesignOptions, cc: &CcSolution, delta_min: f64, log: &[CcRecord]) -> Result<Option<DesignResult>> {
    let (controller, holder, certificate) = recover(plant, &cc.vars, opts.gamma)?;
    let cl = assemble_closed_loop(plant, &controller, &holder)?;
    let report = analysis::verify_certificate(&certificate, &cl, opts.timing.t2(), opts.gamma, opts.verify_rel_tol)?;
    if !report.passed {
        let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        debug!("delta {:.5}: recovered certificate fails {failed:?}", cc.vars.delta);
        return Ok(None);
    }
    if !opts.pole_region.is_empty() && !opts.pole_region.contains_spectrum(&cl.a) {
        debug!("delta {:.5}: closed-loop spectrum outside the requested region", cc.vars.delta);
    }
    let _ = log;
    Ok(Some(DesignResult {
        plant: plant.clone(),
        timing: opts.timing,
        gamma: opts.gamma,
        controller,
        holder,
        certificate,
        delta_used: cc.vars.delta,
        delta_min: Some(delta_min),
        cc_trace: Some(cc.trace),
        variables: Some(cc.vars.clone()),
        verification: Some(report),
        log: Vec::new(),
    }))
}
