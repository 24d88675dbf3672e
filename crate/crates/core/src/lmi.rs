//! Matrix-inequality blocks for analysis and synthesis.
//!
//! Every synthesis block is built once as an [`AffExpr`] in the decision
//! variables. The same builder serves the SDP (variables are coordinates) and
//! concrete evaluation (variables are constants), so the two can never drift
//! apart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, bmat, check_shape, Mat};
use crate::model::{ClosedLoopMatrices, PlantModel};
use crate::sdp::{AffExpr, SdpProblem, SdpSolution, Var};

/// Concrete values of the synthesis decision variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignVariables {
    #[serde(rename = "X", with = "crate::io::mat")]
    pub x: Mat,
    #[serde(rename = "Y", with = "crate::io::mat")]
    pub y: Mat,
    #[serde(rename = "K", with = "crate::io::mat")]
    pub k: Mat,
    #[serde(rename = "L", with = "crate::io::mat")]
    pub l: Mat,
    #[serde(rename = "M", with = "crate::io::mat")]
    pub m: Mat,
    #[serde(rename = "N", with = "crate::io::mat")]
    pub n: Mat,
    #[serde(rename = "J", with = "crate::io::mat")]
    pub j: Mat,
    #[serde(rename = "Z", with = "crate::io::mat")]
    pub z: Mat,
    #[serde(rename = "V", with = "crate::io::mat")]
    pub v: Mat,
    #[serde(rename = "P2", with = "crate::io::mat")]
    pub p2: Mat,
    #[serde(rename = "Q", with = "crate::io::mat")]
    pub q: Mat,
    #[serde(rename = "O", with = "crate::io::mat")]
    pub o: Mat,
    #[serde(rename = "R", with = "crate::io::mat")]
    pub r: Mat,
    #[serde(rename = "F", with = "crate::io::mat")]
    pub f: Mat,
    #[serde(rename = "F_i", with = "crate::io::mat")]
    pub f_i: Mat,
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta: f64,
}

impl DesignVariables {
    /// All-zero variables of the right shapes, handy for building test cases.
    pub fn zeros(plant: &PlantModel) -> Self {
        let (np, nu, ny) = (plant.n_p(), plant.n_u(), plant.n_y());
        let z = Mat::zeros;
        Self {
            x: z(np, np),
            y: z(np, np),
            k: z(np, np),
            l: z(np, ny),
            m: z(nu, np),
            n: z(nu, ny),
            j: z(ny, ny),
            z: z(ny, np),
            v: z(np, np),
            p2: z(ny, ny),
            q: z(ny, ny),
            o: z(ny, ny),
            r: z(2 * np, 2 * np),
            f: z(2 * np, 2 * np),
            f_i: z(2 * np, 2 * np),
            gamma1: 0.0,
            gamma2: 0.0,
            delta: 0.0,
        }
    }

    pub fn check(&self, plant: &PlantModel) -> Result<()> {
        let (np, nu, ny) = (plant.n_p(), plant.n_u(), plant.n_y());
        let shapes: [(&Mat, usize, usize, &str); 15] = [
            (&self.x, np, np, "X"),
            (&self.y, np, np, "Y"),
            (&self.k, np, np, "K"),
            (&self.l, np, ny, "L"),
            (&self.m, nu, np, "M"),
            (&self.n, nu, ny, "N"),
            (&self.j, ny, ny, "J"),
            (&self.z, ny, np, "Z"),
            (&self.v, np, np, "V"),
            (&self.p2, ny, ny, "P2"),
            (&self.q, ny, ny, "Q"),
            (&self.o, ny, ny, "O"),
            (&self.r, 2 * np, 2 * np, "R"),
            (&self.f, 2 * np, 2 * np, "F"),
            (&self.f_i, 2 * np, 2 * np, "F_i"),
        ];
        for (m, r, c, name) in shapes {
            check_shape(m, r, c, name)?;
        }
        Ok(())
    }

    pub fn exprs(&self) -> VarExprs {
        let c = |m: &Mat| AffExpr::constant(m.clone());
        let s = |v: f64| AffExpr::constant(Mat::from_element(1, 1, v));
        VarExprs {
            x: c(&self.x),
            y: c(&self.y),
            k: c(&self.k),
            l: c(&self.l),
            m: c(&self.m),
            n: c(&self.n),
            j: c(&self.j),
            z: c(&self.z),
            v: c(&self.v),
            p2: c(&self.p2),
            q: c(&self.q),
            o: c(&self.o),
            r: c(&self.r),
            f: c(&self.f),
            f_i: c(&self.f_i),
            gamma1: s(self.gamma1),
            gamma2: s(self.gamma2),
        }
    }

    /// `trace(F·F_i)`.
    pub fn cc_trace(&self) -> f64 {
        (&self.f * &self.f_i).trace()
    }
}

/// The decision variables as affine expressions.
#[derive(Debug, Clone)]
pub struct VarExprs {
    pub x: AffExpr,
    pub y: AffExpr,
    pub k: AffExpr,
    pub l: AffExpr,
    pub m: AffExpr,
    pub n: AffExpr,
    pub j: AffExpr,
    pub z: AffExpr,
    pub v: AffExpr,
    pub p2: AffExpr,
    pub q: AffExpr,
    pub o: AffExpr,
    pub r: AffExpr,
    pub f: AffExpr,
    pub f_i: AffExpr,
    pub gamma1: AffExpr,
    pub gamma2: AffExpr,
}

/// Handles of the decision variables declared in an [`SdpProblem`].
#[derive(Debug, Clone)]
pub struct DesignVarHandles {
    pub x: Var,
    pub y: Var,
    pub k: Var,
    pub l: Var,
    pub m: Var,
    pub n: Var,
    pub j: Var,
    pub z: Var,
    pub v: Var,
    pub p2: Var,
    pub q: Var,
    pub o: Var,
    pub r: Var,
    pub f: Var,
    pub f_i: Var,
    pub gamma1: Var,
    pub gamma2: Var,
}

impl DesignVarHandles {
    pub fn declare(problem: &mut SdpProblem, plant: &PlantModel) -> Self {
        let (np, nu, ny) = (plant.n_p(), plant.n_u(), plant.n_y());
        Self {
            x: problem.symmetric("X", np),
            y: problem.symmetric("Y", np),
            k: problem.full("K", np, np),
            l: problem.full("L", np, ny),
            m: problem.full("M", nu, np),
            n: problem.full("N", nu, ny),
            j: problem.full("J", ny, ny),
            z: problem.full("Z", ny, np),
            v: problem.full("V", np, np),
            p2: problem.symmetric("P2", ny),
            q: problem.symmetric("Q", ny),
            o: problem.symmetric("O", ny),
            r: problem.symmetric("R", 2 * np),
            f: problem.symmetric("F", 2 * np),
            f_i: problem.symmetric("F_i", 2 * np),
            gamma1: problem.scalar("gamma1"),
            gamma2: problem.scalar("gamma2"),
        }
    }

    pub fn exprs(&self) -> VarExprs {
        VarExprs {
            x: self.x.expr(),
            y: self.y.expr(),
            k: self.k.expr(),
            l: self.l.expr(),
            m: self.m.expr(),
            n: self.n.expr(),
            j: self.j.expr(),
            z: self.z.expr(),
            v: self.v.expr(),
            p2: self.p2.expr(),
            q: self.q.expr(),
            o: self.o.expr(),
            r: self.r.expr(),
            f: self.f.expr(),
            f_i: self.f_i.expr(),
            gamma1: self.gamma1.expr(),
            gamma2: self.gamma2.expr(),
        }
    }

    pub fn extract(&self, sol: &SdpSolution, delta: f64) -> Option<DesignVariables> {
        let y = sol.coords()?;
        Some(DesignVariables {
            x: self.x.value(y),
            y: self.y.value(y),
            k: self.k.value(y),
            l: self.l.value(y),
            m: self.m.value(y),
            n: self.n.value(y),
            j: self.j.value(y),
            z: self.z.value(y),
            v: self.v.value(y),
            p2: self.p2.value(y),
            q: self.q.value(y),
            o: self.o.value(y),
            r: self.r.value(y),
            f: self.f.value(y),
            f_i: self.f_i.value(y),
            gamma1: y[self.gamma1.offset()],
            gamma2: y[self.gamma2.offset()],
            delta,
        })
    }
}

/// Lyapunov data certifying dissipativity of the hybrid closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(rename = "P1", with = "crate::io::mat")]
    pub p1: Mat,
    #[serde(rename = "P2", with = "crate::io::mat")]
    pub p2: Mat,
    #[serde(rename = "S", with = "crate::io::mat")]
    pub s: Mat,
    #[serde(rename = "R", with = "crate::io::mat")]
    pub r: Mat,
    #[serde(rename = "Q", with = "crate::io::mat")]
    pub q: Mat,
    #[serde(rename = "O", with = "crate::io::mat")]
    pub o: Mat,
    pub delta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma: f64,
}

impl Certificate {
    pub fn check(&self, cl: &ClosedLoopMatrices) -> Result<()> {
        let (n, ny) = (cl.n_xbar(), cl.n_y());
        for (m, d, name) in [(&self.p1, n, "P1"), (&self.s, n, "S"), (&self.r, n, "R"), (&self.p2, ny, "P2"), (&self.q, ny, "Q"), (&self.o, ny, "O")] {
            check_shape(m, d, d, name)?;
        }
        for (v, name) in [(self.delta, "delta"), (self.gamma1, "gamma1"), (self.gamma2, "gamma2"), (self.gamma, "gamma")] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("certificate scalar {name} is not finite")));
            }
        }
        Ok(())
    }
}

fn c(m: &Mat) -> AffExpr {
    AffExpr::constant(m.clone())
}

fn eye(n: usize) -> AffExpr {
    AffExpr::identity(n)
}

fn zeros(r: usize, c: usize) -> AffExpr {
    AffExpr::zeros(r, c)
}

/// `Θ = [[Y, I], [I, X]]`.
pub fn theta_expr(v: &VarExprs) -> Result<AffExpr> {
    let n = v.x.rows();
    AffExpr::block(&[vec![v.y.clone(), eye(n)], vec![eye(n), v.x.clone()]])
}

/// `Λ = [[A_pY + B_pM, A_p + B_pNC_p], [K, XA_p + LC_p]]`.
pub fn lambda_expr(v: &VarExprs, plant: &PlantModel) -> Result<AffExpr> {
    let (ap, bp, cp) = (&plant.a, &plant.b, &plant.c);
    let l11 = v.y.lmul(ap)? + v.m.lmul(bp)?;
    let l12 = v.n.lmul(bp)?.rmul(cp)? + c(ap);
    let l22 = v.x.rmul(ap)? + v.l.rmul(cp)?;
    AffExpr::block(&[vec![l11, l12], vec![v.k.clone(), l22]])
}

/// `Π = −[B_pN; L]`.
pub fn pi_expr(v: &VarExprs, plant: &PlantModel) -> Result<AffExpr> {
    Ok(-AffExpr::block(&[vec![v.n.lmul(&plant.b)?], vec![v.l.clone()]])?)
}

/// `Ξ = [W_p; XW_p]`.
pub fn xi_expr(v: &VarExprs, plant: &PlantModel) -> Result<AffExpr> {
    AffExpr::block(&[vec![c(&plant.w)], vec![v.x.rmul(&plant.w)?]])
}

/// `Φ = [[Y, I], [Vᵀ, 0]]`.
pub fn phi_expr(v: &VarExprs) -> Result<AffExpr> {
    let n = v.y.rows();
    AffExpr::block(&[vec![v.y.clone(), eye(n)], vec![v.v.t(), zeros(n, n)]])
}

/// Synthesis form of the flow inequality.
pub fn m1_hat_expr(v: &VarExprs, plant: &PlantModel) -> Result<AffExpr> {
    let n2 = 2 * plant.n_p();
    let (ny, nd, nyo) = (plant.n_y(), plant.n_d(), plant.n_yo());
    let lam = lambda_expr(v, plant)?;
    let pi = pi_expr(v, plant)?;
    let xi = xi_expr(v, plant)?;
    let phi_t = phi_expr(v)?.t();
    let co = linalg::hstack(&[&plant.c_o, &Mat::zeros(nyo, plant.n_p())])?;
    let phi_t_cot = phi_t.rmul(&co.transpose())?;
    let g1 = -scalar_times_identity(&v.gamma1, nd)?;
    AffExpr::block(&[
        vec![lam.he()?, pi.clone(), xi.clone(), phi_t.clone(), phi_t_cot.clone()],
        vec![pi.t(), -v.q.clone(), zeros(ny, nd), zeros(ny, n2), zeros(ny, nyo)],
        vec![xi.t(), zeros(nd, ny), g1, zeros(nd, n2), zeros(nd, nyo)],
        vec![phi_t.t(), zeros(n2, ny), zeros(n2, nd), -v.f.clone(), zeros(n2, nyo)],
        vec![phi_t_cot.t(), zeros(nyo, ny), zeros(nyo, nd), zeros(nyo, n2), -eye(nyo)],
    ])
}

/// `s·I_n` for a scalar expression `s`.
fn scalar_times_identity(s: &AffExpr, n: usize) -> Result<AffExpr> {
    AffExpr::block(&(0..n).map(|i| (0..n).map(|j| if i == j { s.clone() } else { zeros(1, 1) }).collect()).collect::<Vec<_>>())
}

fn check_tau(tau: f64, t2: f64) -> Result<()> {
    if !(tau.is_finite() && (0.0..=t2).contains(&tau)) {
        return Err(Error::InvalidInput(format!("tau = {tau} outside [0, T2 = {t2}]")));
    }
    Ok(())
}

/// Synthesis form of the timer inequality at `τ`.
pub fn m2_hat_expr(tau: f64, t2: f64, delta: f64, v: &VarExprs, plant: &PlantModel) -> Result<AffExpr> {
    check_tau(tau, t2)?;
    let n2 = 2 * plant.n_p();
    let nd = plant.n_d();
    let e = (delta * tau).exp();
    let cp = &plant.c;
    let m11 = (v.j.he()? - v.p2.scale(delta)).scale(e) + v.o.clone();
    let p2cpap = v.p2.rmul(&(cp * &plant.a))?;
    let m12 = AffExpr::block(&[vec![p2cpap - v.j.rmul(cp)?, -v.z.clone()]])?.scale(e);
    let m13 = v.p2.rmul(&(cp * &plant.w))?.scale(e);
    AffExpr::block(&[
        vec![m11, m12.clone(), m13.clone()],
        vec![m12.t(), -v.r.clone(), zeros(n2, nd)],
        vec![m13.t(), zeros(nd, n2), -scalar_times_identity(&v.gamma2, nd)?],
    ])
}

pub fn build_theta(x: &Mat, y: &Mat) -> Result<Mat> {
    let n = x.nrows();
    check_shape(x, n, n, "X")?;
    check_shape(y, n, n, "Y")?;
    Ok(bmat(&[vec![y.clone(), Mat::identity(n, n)], vec![Mat::identity(n, n), x.clone()]])?)
}

pub fn build_m1_hat(vars: &DesignVariables, plant: &PlantModel) -> Result<Mat> {
    vars.check(plant)?;
    Ok(m1_hat_expr(&vars.exprs(), plant)?.eval(&[]))
}

pub fn build_m2_hat(tau: f64, t2: f64, vars: &DesignVariables, plant: &PlantModel) -> Result<Mat> {
    vars.check(plant)?;
    Ok(m2_hat_expr(tau, t2, vars.delta, &vars.exprs(), plant)?.eval(&[]))
}

/// `[[He(P1𝔸) + S + C_oᵀC_o, P1𝔹, P1𝕍], [•, −Q, 0], [•, •, −γ1 I]]`.
pub fn build_analysis_m1(p1: &Mat, s: &Mat, q: &Mat, gamma1: f64, cl: &ClosedLoopMatrices) -> Result<Mat> {
    let (n, ny, nd) = (cl.n_xbar(), cl.n_y(), cl.n_d());
    check_shape(p1, n, n, "P1")?;
    check_shape(s, n, n, "S")?;
    check_shape(q, ny, ny, "Q")?;
    let pa = p1 * &cl.a;
    let pb = p1 * &cl.b;
    let pv = p1 * &cl.v;
    let m11 = linalg::he(&pa) + s + cl.c_o.transpose() * &cl.c_o;
    let m = bmat(&[
        vec![m11, pb.clone(), pv.clone()],
        vec![pb.transpose(), -q, Mat::zeros(ny, nd)],
        vec![pv.transpose(), Mat::zeros(nd, ny), -Mat::identity(nd, nd) * gamma1],
    ])?;
    Ok(linalg::symmetrize(&m))
}

/// The same inequality with `S = F⁻¹` expanded by a Schur complement:
/// `[[He(P1𝔸), P1𝔹, P1𝕍, I, C_oᵀ], [•, −Q, 0, 0, 0], [•, •, −γ1 I, 0, 0], [•, •, •, −F, 0], [•, •, •, •, −I]]`.
pub fn build_analysis_m1_schur(p1: &Mat, f: &Mat, q: &Mat, gamma1: f64, cl: &ClosedLoopMatrices) -> Result<Mat> {
    let (n, ny, nd, nyo) = (cl.n_xbar(), cl.n_y(), cl.n_d(), cl.n_yo());
    check_shape(p1, n, n, "P1")?;
    check_shape(f, n, n, "F")?;
    check_shape(q, ny, ny, "Q")?;
    let z = Mat::zeros;
    let pb = p1 * &cl.b;
    let pv = p1 * &cl.v;
    let cot = cl.c_o.transpose();
    let m = bmat(&[
        vec![linalg::he(&(p1 * &cl.a)), pb.clone(), pv.clone(), Mat::identity(n, n), cot.clone()],
        vec![pb.transpose(), -q, z(ny, nd), z(ny, n), z(ny, nyo)],
        vec![pv.transpose(), z(nd, ny), -Mat::identity(nd, nd) * gamma1, z(nd, n), z(nd, nyo)],
        vec![Mat::identity(n, n), z(n, ny), z(n, nd), -f, z(n, nyo)],
        vec![cl.c_o.clone(), z(nyo, ny), z(nyo, nd), z(nyo, n), -Mat::identity(nyo, nyo)],
    ])?;
    Ok(linalg::symmetrize(&m))
}

/// `[[(He(P2ℍ) − δP2)e^{δτ} + O, P2𝕁e^{δτ}, P2𝕎e^{δτ}], [•, −R, 0], [•, •, −γ2 I]]`.
#[allow(clippy::too_many_arguments)]
pub fn build_analysis_m2(tau: f64, t2: f64, p2: &Mat, o: &Mat, r: &Mat, gamma2: f64, delta: f64, cl: &ClosedLoopMatrices) -> Result<Mat> {
    check_tau(tau, t2)?;
    let (n, ny, nd) = (cl.n_xbar(), cl.n_y(), cl.n_d());
    check_shape(p2, ny, ny, "P2")?;
    check_shape(o, ny, ny, "O")?;
    check_shape(r, n, n, "R")?;
    let e = (delta * tau).exp();
    let m11 = (linalg::he(&(p2 * &cl.h)) - p2 * delta) * e + o;
    let m12 = p2 * &cl.j * e;
    let m13 = p2 * &cl.w * e;
    let m = bmat(&[
        vec![m11, m12.clone(), m13.clone()],
        vec![m12.transpose(), -r, Mat::zeros(n, nd)],
        vec![m13.transpose(), Mat::zeros(nd, n), -Mat::identity(nd, nd) * gamma2],
    ])?;
    Ok(linalg::symmetrize(&m))
}

/// Optional pole-region constraints on the closed-loop flow matrix `𝔸`,
/// imposed through the same Lyapunov matrix `P1` after the congruence with
/// `Φ`. All fields default to off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleRegion {
    /// `Re λ < −α`: `He(Λ) + 2αΘ ⪯ 0`.
    #[serde(default)]
    pub min_decay: Option<f64>,
    /// `Re λ > −h`: `He(Λ) + 2hΘ ⪰ 0`.
    #[serde(default)]
    pub max_speed: Option<f64>,
    /// Eigenvalues inside the sector `|Im λ| ≤ −Re λ · cot θ`, i.e. damping
    /// ratio at least `sin θ`; `θ` in radians, in `(0, π/2)`.
    #[serde(default)]
    pub sector_angle: Option<f64>,
}

impl PoleRegion {
    pub fn is_empty(&self) -> bool {
        self.min_decay.is_none() && self.max_speed.is_none() && self.sector_angle.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.min_decay {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::InvalidInput(format!("min_decay must be nonnegative, got {a}")));
            }
        }
        if let Some(h) = self.max_speed {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidInput(format!("max_speed must be positive, got {h}")));
            }
        }
        if let (Some(a), Some(h)) = (self.min_decay, self.max_speed) {
            if a >= h {
                return Err(Error::InvalidInput(format!("empty strip: min_decay {a} >= max_speed {h}")));
            }
        }
        if let Some(t) = self.sector_angle {
            if !(t > 0.0 && t < std::f64::consts::FRAC_PI_2) {
                return Err(Error::InvalidInput(format!("sector_angle must be in (0, pi/2), got {t}")));
            }
        }
        Ok(())
    }

    /// `(name, expression, psd?)` for every active region constraint.
    pub fn exprs(&self, v: &VarExprs, plant: &PlantModel) -> Result<Vec<(&'static str, AffExpr, bool)>> {
        let lam = lambda_expr(v, plant)?;
        let theta = theta_expr(v)?;
        let he = lam.he()?;
        let mut out = Vec::new();
        if let Some(a) = self.min_decay {
            out.push(("pole region: decay", &he + &theta.scale(2.0 * a), false));
        }
        if let Some(h) = self.max_speed {
            out.push(("pole region: speed", &he + &theta.scale(2.0 * h), true));
        }
        if let Some(t) = self.sector_angle {
            let skew = &lam - &lam.t();
            let (s, co) = t.sin_cos();
            let e = AffExpr::block(&[vec![he.scale(s), skew.scale(co)], vec![skew.t().scale(co), he.scale(s)]])?;
            out.push(("pole region: sector", e, false));
        }
        Ok(out)
    }

    /// Checks the region directly on the eigenvalues of `a`.
    pub fn contains_spectrum(&self, a: &Mat) -> bool {
        linalg::eigenvalues(a).iter().all(|z| {
            self.min_decay.is_none_or(|al| z.re < -al)
                && self.max_speed.is_none_or(|h| z.re > -h)
                && self.sector_angle.is_none_or(|t| z.im.abs() * t.sin() <= -z.re * t.cos() + 1e-12)
        })
    }
}
