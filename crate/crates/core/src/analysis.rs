//! A posteriori verification of a Lyapunov certificate for the hybrid closed
//! loop, and the stability constants it implies.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Mat};
use crate::lmi::{build_analysis_m1, build_analysis_m2, Certificate};
use crate::model::{ClosedLoopMatrices, TimingBounds};

/// Default scale-relative slack for [`verify_certificate`].
pub const DEFAULT_REL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    /// Signed extremal eigenvalue: `λmin` for `≻ 0` conditions, `λmax` for
    /// `≺ 0` / `⪯ 0` conditions, `γ² − γ1 − γ2` for the gain budget.
    pub margin: f64,
    /// Largest absolute entry of the tested matrix; for a difference
    /// `A − B`, of the operands.
    pub scale: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub rel_tol: f64,
    pub checks: Vec<ConditionCheck>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn positive(name: &str, m: &Mat, rel_tol: f64) -> ConditionCheck {
    let margin = linalg::lambda_min(m);
    let scale = linalg::max_abs(m);
    ConditionCheck { name: name.into(), margin, scale, pass: margin > -rel_tol * scale }
}

fn negative_difference(name: &str, a: &Mat, b: &Mat, rel_tol: f64) -> ConditionCheck {
    let margin = linalg::lambda_max(&(a - b));
    let scale = linalg::max_abs(a).max(linalg::max_abs(b));
    ConditionCheck { name: name.into(), margin, scale, pass: margin < rel_tol * scale }
}

fn nonpositive(name: &str, m: &Mat, rel_tol: f64) -> ConditionCheck {
    let margin = linalg::lambda_max(m);
    let scale = linalg::max_abs(m);
    ConditionCheck { name: name.into(), margin, scale, pass: margin <= rel_tol * scale }
}

fn positive_scalar(name: &str, v: f64) -> ConditionCheck {
    ConditionCheck { name: name.into(), margin: v, scale: v.abs(), pass: v > 0.0 }
}

/// Checks every condition of the certificate with eigenvalue computations.
/// With `rel_tol = 0` strict inequalities are strict; a positive `rel_tol`
/// lets each eigenvalue miss its sign by `rel_tol · scale`.
pub fn verify_certificate(cert: &Certificate, cl: &ClosedLoopMatrices, t2: f64, gamma: f64, rel_tol: f64) -> Result<VerificationReport> {
    cl.validate()?;
    cert.check(cl)?;
    if !(t2 > 0.0) {
        return Err(Error::InvalidInput(format!("T2 must be positive, got {t2}")));
    }
    let mut checks = vec![
        positive("P1 > 0", &cert.p1, rel_tol),
        positive("P2 > 0", &cert.p2, rel_tol),
        positive("S > 0", &cert.s, rel_tol),
        positive("R > 0", &cert.r, rel_tol),
        positive("Q > 0", &cert.q, rel_tol),
        positive("O > 0", &cert.o, rel_tol),
        negative_difference("Q - O < 0", &cert.q, &cert.o, rel_tol),
        negative_difference("R - S < 0", &cert.r, &cert.s, rel_tol),
        nonpositive("M1 <= 0", &build_analysis_m1(&cert.p1, &cert.s, &cert.q, cert.gamma1, cl)?, rel_tol),
        nonpositive("M2(0) <= 0", &build_analysis_m2(0.0, t2, &cert.p2, &cert.o, &cert.r, cert.gamma2, cert.delta, cl)?, rel_tol),
        nonpositive("M2(T2) <= 0", &build_analysis_m2(t2, t2, &cert.p2, &cert.o, &cert.r, cert.gamma2, cert.delta, cl)?, rel_tol),
        positive_scalar("delta > 0", cert.delta),
        positive_scalar("gamma1 > 0", cert.gamma1),
        positive_scalar("gamma2 > 0", cert.gamma2),
    ];
    let g2 = gamma * gamma;
    let budget = g2 - cert.gamma1 - cert.gamma2;
    checks.push(ConditionCheck { name: "gamma1 + gamma2 <= gamma^2".into(), margin: budget, scale: g2, pass: budget >= -rel_tol * g2 });
    let passed = checks.iter().all(|c| c.pass);
    Ok(VerificationReport { rel_tol, checks, passed })
}

/// Constants of the exponential-stability and L2-gain bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateConstants {
    pub c_v1_lo: f64,
    pub c_v1_hi: f64,
    pub c_v2_lo: f64,
    pub c_v2_hi: f64,
    pub k_v1: f64,
    pub k_v2: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub chi3: f64,
    /// Flow decay rate of `𝒱` in ordinary time.
    pub lambda_t: f64,
    /// Largest admissible hybrid-time rate, `λ_t T1 / (1 + T1)`.
    pub lambda_max: f64,
    /// Rate used for `κ` (equal to `lambda_max`).
    pub lambda: f64,
    pub omega: f64,
    /// `κ = 2 √(χ2/χ1) e^ω`.
    pub kappa: f64,
    /// `α = χ2` as fixed by the stability proof.
    pub alpha: f64,
    /// `√χ2`, the coefficient that multiplies `|φ(0,0)|_𝒜` when the squared
    /// integral bound is converted to norms.
    pub alpha_norm: f64,
}

pub fn certificate_constants(cert: &Certificate, timing: TimingBounds) -> Result<CertificateConstants> {
    let (t1, t2) = (timing.t1(), timing.t2());
    let c_v1_lo = linalg::lambda_min(&cert.p1);
    let c_v1_hi = linalg::lambda_max(&cert.p1);
    let c_v2_lo = linalg::lambda_min(&cert.p2);
    let c_v2_hi = linalg::lambda_max(&cert.p2) * (cert.delta * t2).exp();
    let k_v1 = -linalg::lambda_max(&(&cert.r - &cert.s));
    let k_v2 = -linalg::lambda_max(&(&cert.q - &cert.o));
    let chi1 = c_v1_lo.min(c_v2_lo);
    let chi2 = c_v1_hi.max(c_v2_hi);
    let chi3 = k_v1.min(k_v2);
    if !(chi1 > 0.0 && chi3 > 0.0) {
        return Err(Error::InvalidInput(format!("certificate is not valid: chi1 = {chi1:.3e}, chi3 = {chi3:.3e}")));
    }
    let lambda_t = chi3 / (2.0 * chi2);
    let lambda_max = lambda_t * t1 / (1.0 + t1);
    let lambda = lambda_max;
    let omega = lambda;
    let kappa = 2.0 * (chi2 / chi1).sqrt() * omega.exp();
    Ok(CertificateConstants {
        c_v1_lo,
        c_v1_hi,
        c_v2_lo,
        c_v2_hi,
        k_v1,
        k_v2,
        chi1,
        chi2,
        chi3,
        lambda_t,
        lambda_max,
        lambda,
        omega,
        kappa,
        alpha: chi2,
        alpha_norm: chi2.sqrt(),
    })
}

/// `𝒱 = x̄ᵀP1x̄ + e^{δτ} ηᵀP2η`.
pub fn lyapunov_value(xbar: &[f64], eta: &[f64], tau: f64, p1: &Mat, p2: &Mat, delta: f64) -> Result<f64> {
    if xbar.len() != p1.nrows() || p1.nrows() != p1.ncols() {
        return Err(dim_err("lyapunov x̄", p1.nrows(), xbar.len()));
    }
    if eta.len() != p2.nrows() || p2.nrows() != p2.ncols() {
        return Err(dim_err("lyapunov η", p2.nrows(), eta.len()));
    }
    let q = |v: &[f64], p: &Mat| -> f64 {
        let mut s = 0.0;
        for i in 0..v.len() {
            for j in 0..v.len() {
                s += v[i] * p[(i, j)] * v[j];
            }
        }
        s
    };
    Ok(q(xbar, p1) + (delta * tau).exp() * q(eta, p2))
}

/// Time derivative of `𝒱` along the flow at `(x̄, η, τ)` with input `d`.
pub fn lyapunov_flow_rate(cl: &ClosedLoopMatrices, cert: &Certificate, xbar: &[f64], eta: &[f64], tau: f64, d: &[f64]) -> f64 {
    let x = nalgebra::DVector::from_column_slice(xbar);
    let e = nalgebra::DVector::from_column_slice(eta);
    let dv = nalgebra::DVector::from_column_slice(d);
    let xdot = &cl.a * &x + &cl.b * &e + &cl.v * &dv;
    let edot = &cl.j * &x + &cl.h * &e + &cl.w * &dv;
    let p1x = &cert.p1 * &x;
    let p2e = &cert.p2 * &e;
    2.0 * p1x.dot(&xdot) + (cert.delta * tau).exp() * (2.0 * p2e.dot(&edot) - cert.delta * e.dot(&p2e))
}
