//! Infeasible primal-dual path-following method for block-diagonal SDPs in
//! dual form
//!
//! ```text
//! max bᵀy   s.t.   Z = C − Σ_k y_k A_k ⪰ 0
//! min ⟨C, X⟩ s.t.   ⟨A_k, X⟩ = b_k,  X ⪰ 0
//! ```
//!
//! Search directions are HKM with a Mehrotra predictor-corrector. Infeasibility
//! and unboundedness are read off the diverging iterates via their Farkas
//! rays.

use std::collections::HashSet;

use nalgebra::{Cholesky, DVector};

use super::{SdpProblem, SdpSettings, SdpStatus, Sense};
use crate::linalg::Mat;

type Trips = Vec<(usize, usize, f64)>;

pub(crate) struct Block {
    n: usize,
    c: Mat,
    /// `(coordinate, symmetric triplets)` with both triangles stored.
    a: Vec<(usize, Trips)>,
}

pub(crate) struct Conic {
    pub m: usize,
    pub b: Vec<f64>,
    blocks: Vec<Block>,
}

impl Conic {
    pub fn build(problem: &SdpProblem, y0: &[f64], basis: Option<&Mat>, objective: &[f64]) -> Conic {
        let m = basis.map_or(problem.n_coords(), |b| b.ncols());
        let b: Vec<f64> = match basis {
            None => objective.iter().map(|c| -c).collect(),
            Some(nb) => (0..m).map(|k| -(0..nb.nrows()).map(|i| nb[(i, k)] * objective[i]).sum::<f64>()).collect(),
        };
        let blocks = problem
            .lmis()
            .iter()
            .map(|lmi| {
                let n = lmi.expr.rows();
                let sign = if lmi.sense == Sense::Psd { 1.0 } else { -1.0 };
                let g0 = crate::linalg::symmetrize(&lmi.expr.eval(y0)) * sign - Mat::identity(n, n) * lmi.margin;
                // Z = C − Σ y A with C = G0 and A_k = −G_k.
                let mut a: Vec<(usize, Trips)> = match basis {
                    None => lmi
                        .expr
                        .by_coord()
                        .into_iter()
                        .map(|(k, t)| (k, t.into_iter().map(|(i, j, v)| (i, j, -sign * v)).collect()))
                        .collect(),
                    Some(nb) => {
                        let per = lmi.expr.by_coord();
                        let mut out = Vec::new();
                        for k in 0..m {
                            let mut d = Mat::zeros(n, n);
                            for (i, t) in &per {
                                let w = nb[(*i, k)];
                                if w != 0.0 {
                                    for &(r, c, v) in t {
                                        d[(r, c)] -= sign * w * v;
                                    }
                                }
                            }
                            let scale = crate::linalg::max_abs(&d);
                            if scale > 0.0 {
                                let mut trips = Vec::new();
                                for r in 0..n {
                                    for c in 0..n {
                                        if d[(r, c)].abs() > 1e-14 * scale {
                                            trips.push((r, c, d[(r, c)]));
                                        }
                                    }
                                }
                                out.push((k, trips));
                            }
                        }
                        out
                    }
                };
                // Row scaling of the block keeps its data of order one.
                let mut scale = crate::linalg::max_abs(&g0);
                for (_, t) in &a {
                    for &(_, _, v) in t {
                        scale = scale.max(v.abs());
                    }
                }
                let w = 1.0 / scale.max(1.0);
                for (_, t) in &mut a {
                    for e in t.iter_mut() {
                        e.2 *= w;
                    }
                }
                Block { n, c: g0 * w, a }
            })
            .collect();
        Conic { m, b, blocks }
    }

    pub fn used_coords(&self) -> HashSet<usize> {
        self.blocks.iter().flat_map(|b| b.a.iter().map(|(k, _)| *k)).collect()
    }

    fn a_op(&self, w: &[Mat]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (blk, wb) in self.blocks.iter().zip(w) {
            for (k, t) in &blk.a {
                out[*k] += t.iter().map(|&(i, j, v)| v * wb[(i, j)]).sum::<f64>();
            }
        }
        out
    }

    fn a_adj(&self, y: &DVector<f64>) -> Vec<Mat> {
        self.blocks
            .iter()
            .map(|blk| {
                let mut out = Mat::zeros(blk.n, blk.n);
                for (k, t) in &blk.a {
                    let yk = y[*k];
                    if yk != 0.0 {
                        for &(i, j, v) in t {
                            out[(i, j)] += yk * v;
                        }
                    }
                }
                out
            })
            .collect()
    }
}

pub(crate) struct IpmOutput {
    pub status: SdpStatus,
    pub y: Vec<f64>,
    pub iterations: usize,
    pub pinf: f64,
    pub dinf: f64,
    pub gap: f64,
    pub message: String,
}

fn dot(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| crate::linalg::inner(x, y)).sum()
}

fn fro(a: &[Mat]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

/// Largest `α` with `X + αΔX ⪰ 0` (infinite if the direction never leaves the
/// cone, zero if `X` itself is not positive definite).
fn max_step(x: &Mat, dx: &Mat) -> f64 {
    let Some(ch) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(w) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(v) = l.solve_lower_triangular(&w.transpose()) else {
        return 0.0;
    };
    let lmin = crate::linalg::lambda_min(&v);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn min_step(xs: &[Mat], dxs: &[Mat]) -> f64 {
    xs.iter().zip(dxs).map(|(x, d)| max_step(x, d)).fold(f64::INFINITY, f64::min)
}

/// `X A Z⁻¹` for a sparse symmetric `A`.
fn sandwich(x: &Mat, t: &Trips, zinv: &Mat) -> Mat {
    let n = x.nrows();
    let mut g = Mat::zeros(n, n);
    if t.len() > 2 * n {
        let mut a = Mat::zeros(n, n);
        for &(i, j, v) in t {
            a[(i, j)] += v;
        }
        return x * a * zinv;
    }
    for &(p, q, v) in t {
        for r in 0..n {
            let xr = x[(r, p)] * v;
            if xr != 0.0 {
                for s in 0..n {
                    g[(r, s)] += xr * zinv[(q, s)];
                }
            }
        }
    }
    g
}

struct Schur {
    chol: Option<Cholesky<f64, nalgebra::Dyn>>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Schur {
    fn solve(&self, r: &DVector<f64>) -> Option<DVector<f64>> {
        if let Some(c) = &self.chol {
            return Some(c.solve(r));
        }
        self.lu.as_ref().and_then(|lu| lu.solve(r))
    }
}

fn schur(conic: &Conic, x: &[Mat], zinv: &[Mat], used: &HashSet<usize>) -> Schur {
    let m = conic.m;
    let mut mm = Mat::zeros(m, m);
    for ((blk, xb), zb) in conic.blocks.iter().zip(x).zip(zinv) {
        for (jj, (kj, tj)) in blk.a.iter().enumerate() {
            let g = sandwich(xb, tj, zb);
            for (ki, ti) in blk.a.iter().skip(jj) {
                let v: f64 = ti.iter().map(|&(p, q, a)| a * g[(p, q)]).sum();
                mm[(*ki, *kj)] += v;
                if ki != kj {
                    mm[(*kj, *ki)] += v;
                }
            }
        }
    }
    for k in 0..m {
        if !used.contains(&k) {
            mm[(k, k)] = 1.0;
        }
    }
    let diag_max = (0..m).map(|k| mm[(k, k)].abs()).fold(0.0_f64, f64::max).max(1e-300);
    if let Some(c) = Cholesky::new(mm.clone()) {
        return Schur { chol: Some(c), lu: None };
    }
    for bump in [1e-14, 1e-12, 1e-10] {
        let mut reg = mm.clone();
        for k in 0..m {
            reg[(k, k)] += bump * diag_max;
        }
        if let Some(c) = Cholesky::new(reg) {
            return Schur { chol: Some(c), lu: None };
        }
    }
    Schur { chol: None, lu: Some(mm.lu()) }
}

pub(crate) fn run(conic: &Conic, settings: &SdpSettings) -> IpmOutput {
    let m = conic.m;
    let b = DVector::from_column_slice(&conic.b);
    let used = conic.used_coords();
    let n_total: usize = conic.blocks.iter().map(|b| b.n).sum();
    let norm_b = b.norm();
    let norm_c = fro(&conic.blocks.iter().map(|b| b.c.clone()).collect::<Vec<_>>());

    let mut x: Vec<Mat> = Vec::new();
    let mut z: Vec<Mat> = Vec::new();
    for blk in &conic.blocks {
        let n = blk.n as f64;
        let mut xi = n.sqrt().max(10.0);
        let mut eta = n.sqrt().max(10.0).max(blk.c.norm());
        for (k, t) in &blk.a {
            let na = t.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt();
            xi = xi.max(n * (1.0 + conic.b[*k].abs()) / (1.0 + na));
            eta = eta.max(na);
        }
        x.push(Mat::identity(blk.n, blk.n) * xi);
        z.push(Mat::identity(blk.n, blk.n) * eta);
    }
    let mut y = DVector::zeros(m);

    let mut out = IpmOutput {
        status: SdpStatus::NumericalFailure,
        y: vec![0.0; m],
        iterations: 0,
        pinf: f64::INFINITY,
        dinf: f64::INFINITY,
        gap: f64::INFINITY,
        message: String::new(),
    };
    let relaxed = |o: &IpmOutput| o.pinf < 100.0 * settings.feas_tol && o.dinf < 100.0 * settings.feas_tol && o.gap < 100.0 * settings.gap_tol;
    let mut stalls = 0;

    for iter in 0..=settings.max_iter {
        let aty = conic.a_adj(&y);
        let ax = conic.a_op(&x);
        let rp = &b - &ax;
        let rd: Vec<Mat> = conic.blocks.iter().zip(&z).zip(&aty).map(|((blk, zb), ab)| &blk.c - zb - ab).collect();
        let trxz = dot(&x, &z);
        let mu = trxz / n_total as f64;
        let pobj = dot(&conic.blocks.iter().map(|b| b.c.clone()).collect::<Vec<_>>(), &x);
        let dobj = b.dot(&y);
        out.iterations = iter;
        out.pinf = rp.norm() / (1.0 + norm_b);
        out.dinf = fro(&rd) / (1.0 + norm_c);
        out.gap = trxz / (1.0 + pobj.abs() + dobj.abs());
        out.y = y.iter().copied().collect();

        if out.pinf < settings.feas_tol && out.dinf < settings.feas_tol && out.gap < settings.gap_tol {
            out.status = SdpStatus::Optimal;
            out.message = "converged".into();
            return out;
        }
        // Farkas ray for the inequality side: X ⪰ 0, 𝒜(X) ≈ 0, ⟨C, X⟩ < 0.
        if iter > 2 && pobj < 0.0 && out.dinf > settings.feas_tol && ax.norm() / (-pobj) < settings.infeas_tol {
            out.status = SdpStatus::Infeasible;
            out.message = format!("infeasibility certificate, ‖𝒜X‖/|⟨C,X⟩| = {:.2e}", ax.norm() / (-pobj));
            return out;
        }
        // Improving ray for the objective: bᵀy → ∞ with C − 𝒜ᵀy ⪰ 0.
        if iter > 2 && dobj > 0.0 && out.pinf > settings.feas_tol {
            let at_z: Vec<Mat> = aty.iter().zip(&z).map(|(a, zb)| a + zb).collect();
            if fro(&at_z) / dobj < settings.infeas_tol {
                out.status = SdpStatus::Unbounded;
                out.message = "objective unbounded along a feasible ray".into();
                return out;
            }
        }
        if iter == settings.max_iter {
            break;
        }

        let Some(zinv) = z.iter().map(|zb| Cholesky::new(zb.clone()).map(|c| c.inverse())).collect::<Option<Vec<Mat>>>() else {
            out.message = "dual slack lost definiteness".into();
            break;
        };
        let sch = schur(conic, &x, &zinv, &used);
        let x_rd_zinv: Vec<Mat> = x.iter().zip(&rd).zip(&zinv).map(|((xb, r), zi)| xb * r * zi).collect();
        let base_rhs = &rp + conic.a_op(&x_rd_zinv);

        let direction = |rc_zinv: &[Mat]| -> Option<(DVector<f64>, Vec<Mat>, Vec<Mat>)> {
            let rhs = &base_rhs - conic.a_op(rc_zinv);
            let dy = sch.solve(&rhs)?;
            if dy.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let at_dy = conic.a_adj(&dy);
            let dz: Vec<Mat> = rd.iter().zip(&at_dy).map(|(r, a)| r - a).collect();
            let dx: Vec<Mat> = rc_zinv
                .iter()
                .zip(&x)
                .zip(&dz)
                .zip(&zinv)
                .map(|(((rcz, xb), dzb), zi)| {
                    let d = rcz - xb * dzb * zi;
                    (&d + d.transpose()) * 0.5
                })
                .collect();
            Some((dy, dx, dz))
        };

        // Predictor.
        let neg_x: Vec<Mat> = x.iter().map(|xb| -xb).collect();
        let Some((_, dxp, dzp)) = direction(&neg_x) else {
            out.message = "Schur complement solve failed".into();
            break;
        };
        let ap = min_step(&x, &dxp).min(1.0);
        let ad = min_step(&z, &dzp).min(1.0);
        let x_aff: Vec<Mat> = x.iter().zip(&dxp).map(|(a, d)| a + d * ap).collect();
        let z_aff: Vec<Mat> = z.iter().zip(&dzp).map(|(a, d)| a + d * ad).collect();
        let ratio = (dot(&x_aff, &z_aff) / trxz).clamp(0.0, 1.0);
        let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
        let sigma = ratio.powf(expon).min(1.0);

        // Corrector.
        let rc_zinv: Vec<Mat> = x
            .iter()
            .zip(&zinv)
            .zip(dxp.iter().zip(&dzp))
            .map(|((xb, zi), (dxb, dzb))| zi * (sigma * mu) - xb - dxb * dzb * zi)
            .collect();
        let Some((dy, dx, dz)) = direction(&rc_zinv) else {
            out.message = "Schur complement solve failed".into();
            break;
        };
        let frac = 0.9 + 0.09 * ap.min(ad);
        let alpha_p = (frac * min_step(&x, &dx)).min(1.0);
        let alpha_d = (frac * min_step(&z, &dz)).min(1.0);
        if alpha_p < 1e-10 && alpha_d < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                out.message = "step length collapsed".into();
                break;
            }
        } else {
            stalls = 0;
        }
        for (xb, d) in x.iter_mut().zip(&dx) {
            *xb += d * alpha_p;
        }
        for (zb, d) in z.iter_mut().zip(&dz) {
            *zb += d * alpha_d;
        }
        y += &dy * alpha_d;
    }

    if relaxed(&out) {
        out.status = SdpStatus::Optimal;
        out.message = format!("reduced accuracy: {}", if out.message.is_empty() { "iteration limit" } else { &out.message });
    } else if out.message.is_empty() {
        out.message = "iteration limit reached".into();
    }
    out
}
