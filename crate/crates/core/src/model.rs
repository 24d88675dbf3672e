//! Plant, controller and holder descriptions, the hybrid closed-loop matrices,
//! and the change-of-variables algebra that turns LMI solutions back into a
//! controller/holder pair.
//!
//! Closed-loop coordinates are `x̄ = (x_p, x_c)`, `η = C_p x_p − ŷ` and the
//! countdown timer `τ`. Between transmissions
//!
//! ```text
//! ẋ̄ = 𝔸 x̄ + 𝔹 η + 𝕍 d,    η̇ = 𝕁 x̄ + ℍ η + 𝕎 d,    τ̇ = −1
//! ```
//!
//! and at a transmission `η⁺ = 0`, `τ⁺ ∈ [T1, T2]`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::io::{mat_from_rows, rows_of};
use crate::linalg::{self, bmat, check_shape, inverse, Mat};

/// LTI plant `ẋ_p = A_p x_p + B_p u + W_p d`, `y = C_p x_p`, `y_o = C_op x_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlantRecord", into = "PlantRecord")]
pub struct PlantModel {
    pub a: Mat,
    pub b: Mat,
    pub w: Mat,
    pub c: Mat,
    pub c_o: Mat,
}

impl PlantModel {
    pub fn new(a: Mat, b: Mat, w: Mat, c: Mat, c_o: Mat) -> Result<Self> {
        let n_p = a.nrows();
        if n_p == 0 {
            return Err(Error::InvalidInput("plant order n_p must be at least 1".into()));
        }
        check_shape(&a, n_p, n_p, "A_p")?;
        for (m, name) in [(&b, "B_p"), (&w, "W_p")] {
            if m.nrows() != n_p || m.ncols() == 0 {
                return Err(dim_err(name, format!("{n_p}xk with k >= 1"), format!("{}x{}", m.nrows(), m.ncols())));
            }
        }
        for (m, name) in [(&c, "C_p"), (&c_o, "C_op")] {
            if m.ncols() != n_p || m.nrows() == 0 {
                return Err(dim_err(name, format!("kx{n_p} with k >= 1"), format!("{}x{}", m.nrows(), m.ncols())));
            }
        }
        Ok(Self { a, b, w, c, c_o })
    }

    pub fn n_p(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_d(&self) -> usize {
        self.w.ncols()
    }
    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }
    pub fn n_yo(&self) -> usize {
        self.c_o.nrows()
    }
}

/// Dynamic controller `ẋ_c = A_c x_c + B_c ŷ`, `u = C_c x_c + D_c ŷ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControllerRecord", into = "ControllerRecord")]
pub struct ControllerParams {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl ControllerParams {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n_c = a.nrows();
        check_shape(&a, n_c, n_c, "A_c")?;
        let (n_y, n_u) = (b.ncols(), c.nrows());
        check_shape(&b, n_c, n_y, "B_c")?;
        check_shape(&c, n_u, n_c, "C_c")?;
        check_shape(&d, n_u, n_y, "D_c")?;
        Ok(Self { a, b, c, d })
    }

    pub fn zeros(n_c: usize, n_u: usize, n_y: usize) -> Self {
        Self {
            a: Mat::zeros(n_c, n_c),
            b: Mat::zeros(n_c, n_y),
            c: Mat::zeros(n_u, n_c),
            d: Mat::zeros(n_u, n_y),
        }
    }

    pub fn n_c(&self) -> usize {
        self.a.nrows()
    }

    fn check_against(&self, plant: &PlantModel) -> Result<()> {
        let n_c = self.n_c();
        check_shape(&self.b, n_c, plant.n_y(), "B_c")?;
        check_shape(&self.c, plant.n_u(), n_c, "C_c")?;
        check_shape(&self.d, plant.n_u(), plant.n_y(), "D_c")
    }
}

/// Generalized holder `ŷ̇ = H ŷ + E x_c` between samples, `ŷ⁺ = y` at samples.
/// The zero-order hold is `H = 0`, `E = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HolderRecord", into = "HolderRecord")]
pub struct HolderParams {
    pub h: Mat,
    pub e: Mat,
}

impl HolderParams {
    pub fn new(h: Mat, e: Mat) -> Result<Self> {
        let n_y = h.nrows();
        check_shape(&h, n_y, n_y, "H")?;
        if e.nrows() != n_y {
            return Err(dim_err("E", format!("{n_y} rows"), e.nrows()));
        }
        Ok(Self { h, e })
    }

    pub fn zero_order_hold(n_y: usize, n_c: usize) -> Self {
        Self { h: Mat::zeros(n_y, n_y), e: Mat::zeros(n_y, n_c) }
    }
}

/// Bounds on the inter-transmission time, `T1 ≤ t_{k+1} − t_k ≤ T2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TimingRecord", into = "TimingRecord")]
pub struct TimingBounds {
    t1: f64,
    t2: f64,
}

impl TimingBounds {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(t1 > 0.0 && t2 >= t1 && t2.is_finite()) {
            return Err(Error::InvalidInput(format!("timing bounds need 0 < T1 <= T2, got T1 = {t1}, T2 = {t2}")));
        }
        Ok(Self { t1, t2 })
    }
    pub fn t1(&self) -> f64 {
        self.t1
    }
    /// Maximum allowable transfer interval.
    pub fn t2(&self) -> f64 {
        self.t2
    }
}

/// Flow and jump data of the hybrid closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopMatrices {
    /// 𝔸, `(n_p+n_c)²`.
    pub a: Mat,
    /// 𝔹, `(n_p+n_c)×n_y`.
    pub b: Mat,
    /// 𝕍, `(n_p+n_c)×n_d`.
    pub v: Mat,
    /// 𝕁 = [𝕁1 | 𝕁2], `n_y×(n_p+n_c)`.
    pub j: Mat,
    /// ℍ, `n_y×n_y`.
    pub h: Mat,
    /// 𝕎 = C_p W_p.
    pub w: Mat,
    /// C_o = [C_op 0].
    pub c_o: Mat,
}

impl ClosedLoopMatrices {
    /// Dimension of `x̄`.
    pub fn n_xbar(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_y(&self) -> usize {
        self.h.nrows()
    }
    pub fn n_d(&self) -> usize {
        self.v.ncols()
    }
    pub fn n_yo(&self) -> usize {
        self.c_o.nrows()
    }

    /// Flow matrix acting on `(x̄, η)`: `[[𝔸, 𝔹], [𝕁, ℍ]]`.
    pub fn flow_matrix(&self) -> Mat {
        bmat(&[vec![self.a.clone(), self.b.clone()], vec![self.j.clone(), self.h.clone()]])
            .expect("closed-loop blocks are consistent by construction")
    }

    /// Disturbance matrix acting on `d`: `[𝕍; 𝕎]`.
    pub fn input_matrix(&self) -> Mat {
        linalg::vstack(&[&self.v, &self.w]).expect("closed-loop blocks are consistent by construction")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_xbar();
        let ny = self.n_y();
        let nd = self.n_d();
        check_shape(&self.a, n, n, "𝔸")?;
        check_shape(&self.b, n, ny, "𝔹")?;
        check_shape(&self.v, n, nd, "𝕍")?;
        check_shape(&self.j, ny, n, "𝕁")?;
        check_shape(&self.h, ny, ny, "ℍ")?;
        check_shape(&self.w, ny, nd, "𝕎")?;
        check_shape(&self.c_o, self.n_yo(), n, "C_o")
    }
}

/// Builds the flow matrices of the closed loop from plant, controller and
/// holder.
///
/// The η-dynamics follow from differentiating `η = C_p x_p − ŷ`, which gives
/// `ℍ = H − C_p B_p D_c`, `𝕁1 = C_p A_p + C_p B_p D_c C_p − H C_p` and
/// `𝕁2 = C_p B_p C_c − E`.
pub fn assemble_closed_loop(plant: &PlantModel, ctrl: &ControllerParams, hold: &HolderParams) -> Result<ClosedLoopMatrices> {
    ctrl.check_against(plant)?;
    let n_c = ctrl.n_c();
    let n_y = plant.n_y();
    check_shape(&hold.h, n_y, n_y, "H")?;
    check_shape(&hold.e, n_y, n_c, "E")?;

    let (ap, bp, wp, cp) = (&plant.a, &plant.b, &plant.w, &plant.c);
    let cpbp = cp * bp;

    let a = bmat(&[
        vec![ap + bp * &ctrl.d * cp, bp * &ctrl.c],
        vec![&ctrl.b * cp, ctrl.a.clone()],
    ])?;
    let b = -linalg::vstack(&[&(bp * &ctrl.d), &ctrl.b])?;
    let v = linalg::vstack(&[wp, &Mat::zeros(n_c, plant.n_d())])?;
    let j1 = cp * ap + &cpbp * &ctrl.d * cp - &hold.h * cp;
    let j2 = &cpbp * &ctrl.c - &hold.e;
    let j = linalg::hstack(&[&j1, &j2])?;
    let h = &hold.h - &cpbp * &ctrl.d;
    let w = cp * wp;
    let c_o = linalg::hstack(&[&plant.c_o, &Mat::zeros(plant.n_yo(), n_c)])?;
    Ok(ClosedLoopMatrices { a, b, v, j, h, w, c_o })
}

/// Linearizing change of variables `(K, L, M, N)` of the output-feedback
/// synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedGains {
    pub k: Mat,
    pub l: Mat,
    pub m: Mat,
    pub n: Mat,
}

/// The matrices `X, Y` from the Lyapunov block and the factors `U, V` with
/// `XY + UVᵀ = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovFactors {
    pub x: Mat,
    pub y: Mat,
    pub u: Mat,
    pub v: Mat,
}

/// Holder-side decision variables `J`, `Z` and the Lyapunov weight `P2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderVariables {
    pub j: Mat,
    pub z: Mat,
    pub p2: Mat,
}

fn check_factors(plant: &PlantModel, f: &LyapunovFactors) -> Result<()> {
    let n = plant.n_p();
    for (m, name) in [(&f.x, "X"), (&f.y, "Y"), (&f.u, "U"), (&f.v, "V")] {
        check_shape(m, n, n, name)?;
    }
    Ok(())
}

/// Recovers the controller and holder from a solution of the synthesis LMIs.
///
/// ```text
/// [A_c B_c; C_c D_c] = [U⁻¹  −U⁻¹XB_p; 0 I] · [K − XA_pY  L; M N] · [V⁻ᵀ 0; −C_pYV⁻ᵀ I]
/// E = C_pB_pC_c + P2⁻¹Z,   H = C_pB_pD_c + P2⁻¹J
/// ```
pub fn reconstruct_controller(
    plant: &PlantModel,
    gains: &TransformedGains,
    factors: &LyapunovFactors,
    holder: &HolderVariables,
) -> Result<(ControllerParams, HolderParams)> {
    check_factors(plant, factors)?;
    let (n, ny, nu) = (plant.n_p(), plant.n_y(), plant.n_u());
    check_shape(&gains.k, n, n, "K")?;
    check_shape(&gains.l, n, ny, "L")?;
    check_shape(&gains.m, nu, n, "M")?;
    check_shape(&gains.n, nu, ny, "N")?;
    check_shape(&holder.j, ny, ny, "J")?;
    check_shape(&holder.z, ny, n, "Z")?;
    check_shape(&holder.p2, ny, ny, "P2")?;

    let LyapunovFactors { x, y, u, v } = factors;
    let u_inv = inverse(u, "U")?;
    let v_inv_t = inverse(v, "V")?.transpose();
    let p2_inv = inverse(&linalg::symmetrize(&holder.p2), "P2")?;

    let left = bmat(&[
        vec![u_inv.clone(), -(&u_inv * x * &plant.b)],
        vec![Mat::zeros(nu, n), Mat::identity(nu, nu)],
    ])?;
    let middle = bmat(&[
        vec![&gains.k - x * &plant.a * y, gains.l.clone()],
        vec![gains.m.clone(), gains.n.clone()],
    ])?;
    let right = bmat(&[
        vec![v_inv_t.clone(), Mat::zeros(n, ny)],
        vec![-(&plant.c * y * &v_inv_t), Mat::identity(ny, ny)],
    ])?;
    let full = left * middle * right;

    let ctrl = ControllerParams {
        a: full.view((0, 0), (n, n)).into_owned(),
        b: full.view((0, n), (n, ny)).into_owned(),
        c: full.view((n, 0), (nu, n)).into_owned(),
        d: full.view((n, n), (nu, ny)).into_owned(),
    };
    let cpbp = &plant.c * &plant.b;
    let hold = HolderParams {
        e: &cpbp * &ctrl.c + &p2_inv * &holder.z,
        h: &cpbp * &ctrl.d + &p2_inv * &holder.j,
    };
    Ok((ctrl, hold))
}

/// Exact inverse of the controller half of [`reconstruct_controller`]:
///
/// ```text
/// [K − XA_pY  L; M N] = [U XB_p; 0 I] · [A_c B_c; C_c D_c] · [Vᵀ 0; C_pY I]
/// ```
pub fn invert_controller_map(plant: &PlantModel, ctrl: &ControllerParams, factors: &LyapunovFactors) -> Result<TransformedGains> {
    check_factors(plant, factors)?;
    ctrl.check_against(plant)?;
    if ctrl.n_c() != plant.n_p() {
        return Err(dim_err("controller order", plant.n_p(), ctrl.n_c()));
    }
    let (n, ny, nu) = (plant.n_p(), plant.n_y(), plant.n_u());
    let LyapunovFactors { x, y, u, v } = factors;
    // Singular U or V makes the map non-invertible even though the product exists.
    inverse(u, "U")?;
    inverse(v, "V")?;

    let left = bmat(&[vec![u.clone(), x * &plant.b], vec![Mat::zeros(nu, n), Mat::identity(nu, nu)]])?;
    let middle = bmat(&[vec![ctrl.a.clone(), ctrl.b.clone()], vec![ctrl.c.clone(), ctrl.d.clone()]])?;
    let right = bmat(&[vec![v.transpose(), Mat::zeros(n, ny)], vec![&plant.c * y, Mat::identity(ny, ny)]])?;
    let full = left * middle * right;
    Ok(TransformedGains {
        k: full.view((0, 0), (n, n)) + x * &plant.a * y,
        l: full.view((0, n), (n, ny)).into_owned(),
        m: full.view((n, 0), (nu, n)).into_owned(),
        n: full.view((n, n), (nu, ny)).into_owned(),
    })
}

/// `U = (I − XY) V⁻ᵀ`, the canonical solution of `XY + UVᵀ = I`.
pub fn factor_u(x: &Mat, y: &Mat, v: &Mat) -> Result<Mat> {
    let n = x.nrows();
    check_shape(x, n, n, "X")?;
    check_shape(y, n, n, "Y")?;
    check_shape(v, n, n, "V")?;
    let v_inv_t = inverse(v, "V")?.transpose();
    Ok((Mat::identity(n, n) - x * y) * v_inv_t)
}

/// `P1 = [X U; Uᵀ −V⁻¹(Y − YXY)V⁻ᵀ]`, symmetrized. Positive definiteness is
/// not asserted here.
pub fn build_p1(x: &Mat, y: &Mat, u: &Mat, v: &Mat) -> Result<Mat> {
    let n = x.nrows();
    for (m, name) in [(x, "X"), (y, "Y"), (u, "U"), (v, "V")] {
        check_shape(m, n, n, name)?;
    }
    inverse(u, "U")?;
    let v_inv = inverse(v, "V")?;
    let p22 = -(&v_inv * (y - y * x * y) * v_inv.transpose());
    let p1 = bmat(&[vec![x.clone(), u.clone()], vec![u.transpose(), p22]])?;
    let asym = linalg::relative_asymmetry(&p1);
    if asym > 1e-8 {
        warn!("P1 asymmetry {asym:.2e} before symmetrization");
    }
    Ok(linalg::symmetrize(&p1))
}

/// `Φ = [Y I; Vᵀ 0]`, the congruence mapping `P1` to `Θ`.
pub fn build_phi(y: &Mat, v: &Mat) -> Result<Mat> {
    let n = y.nrows();
    check_shape(v, n, n, "V")?;
    bmat(&[vec![y.clone(), Mat::identity(n, n)], vec![v.transpose(), Mat::zeros(n, n)]])
}

// ---------------------------------------------------------------------------
// JSON records with explicit dimensions.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantRecord {
    n_p: usize,
    n_u: usize,
    n_y: usize,
    n_d: usize,
    n_yo: usize,
    #[serde(rename = "A_p")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B_p")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "W_p")]
    w: Vec<Vec<f64>>,
    #[serde(rename = "C_p")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "C_op")]
    c_o: Vec<Vec<f64>>,
}

fn field(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> std::result::Result<Mat, String> {
    let m = mat_from_rows(rows).map_err(|e| format!("field `{name}`: {e}"))?;
    if m.nrows() != r || m.ncols() != c {
        return Err(format!("field `{name}`: expected {r}x{c}, got {}x{}", m.nrows(), m.ncols()));
    }
    Ok(m)
}

impl TryFrom<PlantRecord> for PlantModel {
    type Error = String;
    fn try_from(p: PlantRecord) -> std::result::Result<Self, String> {
        if [p.n_p, p.n_u, p.n_y, p.n_d, p.n_yo].contains(&0) {
            return Err("all plant dimensions must be at least 1".into());
        }
        let plant = PlantModel::new(
            field("A_p", &p.a, p.n_p, p.n_p)?,
            field("B_p", &p.b, p.n_p, p.n_u)?,
            field("W_p", &p.w, p.n_p, p.n_d)?,
            field("C_p", &p.c, p.n_y, p.n_p)?,
            field("C_op", &p.c_o, p.n_yo, p.n_p)?,
        );
        plant.map_err(|e| e.to_string())
    }
}

impl From<PlantModel> for PlantRecord {
    fn from(p: PlantModel) -> Self {
        PlantRecord {
            n_p: p.n_p(),
            n_u: p.n_u(),
            n_y: p.n_y(),
            n_d: p.n_d(),
            n_yo: p.n_yo(),
            a: rows_of(&p.a),
            b: rows_of(&p.b),
            w: rows_of(&p.w),
            c: rows_of(&p.c),
            c_o: rows_of(&p.c_o),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerRecord {
    n_c: usize,
    n_u: usize,
    n_y: usize,
    #[serde(rename = "A_c")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B_c")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C_c")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D_c")]
    d: Vec<Vec<f64>>,
}

impl TryFrom<ControllerRecord> for ControllerParams {
    type Error = String;
    fn try_from(r: ControllerRecord) -> std::result::Result<Self, String> {
        Ok(ControllerParams {
            a: field("A_c", &r.a, r.n_c, r.n_c)?,
            b: field("B_c", &r.b, r.n_c, r.n_y)?,
            c: field("C_c", &r.c, r.n_u, r.n_c)?,
            d: field("D_c", &r.d, r.n_u, r.n_y)?,
        })
    }
}

impl From<ControllerParams> for ControllerRecord {
    fn from(c: ControllerParams) -> Self {
        ControllerRecord {
            n_c: c.a.nrows(),
            n_u: c.c.nrows(),
            n_y: c.b.ncols(),
            a: rows_of(&c.a),
            b: rows_of(&c.b),
            c: rows_of(&c.c),
            d: rows_of(&c.d),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HolderRecord {
    n_y: usize,
    n_c: usize,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(rename = "E")]
    e: Vec<Vec<f64>>,
}

impl TryFrom<HolderRecord> for HolderParams {
    type Error = String;
    fn try_from(r: HolderRecord) -> std::result::Result<Self, String> {
        Ok(HolderParams { h: field("H", &r.h, r.n_y, r.n_y)?, e: field("E", &r.e, r.n_y, r.n_c)? })
    }
}

impl From<HolderParams> for HolderRecord {
    fn from(h: HolderParams) -> Self {
        HolderRecord { n_y: h.h.nrows(), n_c: h.e.ncols(), h: rows_of(&h.h), e: rows_of(&h.e) }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimingRecord {
    #[serde(rename = "T1")]
    t1: f64,
    #[serde(rename = "T2")]
    t2: f64,
}

impl TryFrom<TimingRecord> for TimingBounds {
    type Error = String;
    fn try_from(r: TimingRecord) -> std::result::Result<Self, String> {
        TimingBounds::new(r.t1, r.t2).map_err(|e| e.to_string())
    }
}

impl From<TimingBounds> for TimingRecord {
    fn from(t: TimingBounds) -> Self {
        TimingRecord { t1: t.t1, t2: t.t2 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn well_conditioned(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        random_mat(rng, n, n) + Mat::identity(n, n) * 3.0
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        linalg::symmetrize(&random_mat(rng, n, n))
    }

    #[test]
    fn zero_controller_decouples() {
        let plant = reference::unicycle_plant();
        let ctrl = ControllerParams::zeros(3, 1, 2);
        let hold = HolderParams::zero_order_hold(2, 3);
        let cl = assemble_closed_loop(&plant, &ctrl, &hold).unwrap();
        let expected_a = linalg::block_diag(&[&plant.a, &Mat::zeros(3, 3)]);
        assert_eq!(cl.a, expected_a);
        assert_eq!(cl.b, Mat::zeros(6, 2));
        let expected_j = linalg::hstack(&[&(&plant.c * &plant.a), &Mat::zeros(2, 3)]).unwrap();
        assert_eq!(cl.j, expected_j);
        assert_eq!(cl.h, Mat::zeros(2, 2));
    }

    #[test]
    fn unicycle_disturbance_does_not_reach_measurements() {
        let plant = reference::unicycle_plant();
        let ctrl = ControllerParams::zeros(3, 1, 2);
        let hold = HolderParams::zero_order_hold(2, 3);
        let cl = assemble_closed_loop(&plant, &ctrl, &hold).unwrap();
        assert_eq!(cl.w, Mat::zeros(2, 1));
    }

    #[test]
    fn scalar_blocks_match_hand_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let [ap, bp, wp, cp, cop, ac, bc, cc, dc, h, e]: [f64; 11] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
            let plant = PlantModel::new(scalar(ap), scalar(bp), scalar(wp), scalar(cp), scalar(cop)).unwrap();
            let ctrl = ControllerParams::new(scalar(ac), scalar(bc), scalar(cc), scalar(dc)).unwrap();
            let hold = HolderParams::new(scalar(h), scalar(e)).unwrap();
            let cl = assemble_closed_loop(&plant, &ctrl, &hold).unwrap();
            // Hand-derived from η = c_p x_p − ŷ.
            let a = [ap + bp * dc * cp, bp * cc, bc * cp, ac];
            let b = [-bp * dc, -bc];
            let j = [cp * ap + cp * bp * dc * cp - h * cp, cp * bp * cc - e];
            let hh = h - cp * bp * dc;
            assert_relative_eq!(cl.a.as_slice(), Mat::from_row_slice(2, 2, &a).as_slice(), epsilon = 1e-14);
            assert_relative_eq!(cl.b.as_slice(), &b[..], epsilon = 1e-14);
            assert_relative_eq!(cl.j.as_slice(), &j[..], epsilon = 1e-14);
            assert_relative_eq!(cl.h[(0, 0)], hh, epsilon = 1e-14);
            assert_relative_eq!(cl.w[(0, 0)], cp * wp, epsilon = 1e-14);
            assert_relative_eq!(cl.v.as_slice(), &[wp, 0.0][..], epsilon = 1e-14);
            assert_relative_eq!(cl.c_o.as_slice(), &[cop, 0.0][..], epsilon = 1e-14);
        }
    }

    #[test]
    fn block_reassembly_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let plant = PlantModel::new(
            random_mat(&mut rng, 3, 3),
            random_mat(&mut rng, 3, 2),
            random_mat(&mut rng, 3, 1),
            random_mat(&mut rng, 2, 3),
            random_mat(&mut rng, 1, 3),
        )
        .unwrap();
        let ctrl = ControllerParams::new(
            random_mat(&mut rng, 4, 4),
            random_mat(&mut rng, 4, 2),
            random_mat(&mut rng, 2, 4),
            random_mat(&mut rng, 2, 2),
        )
        .unwrap();
        let hold = HolderParams::new(random_mat(&mut rng, 2, 2), random_mat(&mut rng, 2, 4)).unwrap();
        let cl = assemble_closed_loop(&plant, &ctrl, &hold).unwrap();
        let cpbp = &plant.c * &plant.b;
        assert_relative_eq!(hold.h.clone() - &cl.h, &cpbp * &ctrl.d, epsilon = 1e-13);
        let j2 = cl.j.view((0, 3), (2, 4)).into_owned();
        assert_relative_eq!(j2 + &hold.e, &cpbp * &ctrl.c, epsilon = 1e-13);
        assert_relative_eq!(cl.a.view((0, 0), (3, 3)).into_owned(), &plant.a + &plant.b * &ctrl.d * &plant.c, epsilon = 1e-13);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let plant = reference::unicycle_plant();
        let ctrl = ControllerParams::zeros(3, 1, 3);
        let hold = HolderParams::zero_order_hold(2, 3);
        assert!(matches!(assemble_closed_loop(&plant, &ctrl, &hold), Err(Error::Dimension { .. })));
    }

    #[test]
    fn factor_u_with_zero_x_is_inverse_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = well_conditioned(&mut rng, 3);
        let y = random_sym(&mut rng, 3);
        let u = factor_u(&Mat::zeros(3, 3), &y, &v).unwrap();
        assert_relative_eq!(u, v.transpose().try_inverse().unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn factor_u_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = random_sym(&mut rng, 3) * 0.3;
            let y = random_sym(&mut rng, 3) * 0.3;
            let v = well_conditioned(&mut rng, 3);
            let u = factor_u(&x, &y, &v).unwrap();
            let resid = &x * &y + &u * v.transpose() - Mat::identity(3, 3);
            assert!(linalg::max_abs(&resid) <= 1e-10);
        }
    }

    #[test]
    fn factor_u_rejects_singular_v() {
        let v = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(factor_u(&Mat::zeros(2, 2), &Mat::zeros(2, 2), &v), Err(Error::Singular { factor: "V", .. })));
    }

    #[test]
    fn p1_hand_example() {
        let i = Mat::identity(2, 2);
        let p1 = build_p1(&(&i * 2.0), &i, &(-&i), &i).unwrap();
        let expected = bmat(&[vec![&i * 2.0, -&i], vec![-&i, i.clone()]]).unwrap();
        assert_relative_eq!(p1, expected, epsilon = 1e-14);
        assert!(linalg::lambda_min(&p1) > 0.0);
    }

    #[test]
    fn p1_is_not_forced_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = well_conditioned(&mut rng, 2);
        let y = Mat::identity(2, 2);
        let u = v.transpose().try_inverse().unwrap();
        let p1 = build_p1(&Mat::zeros(2, 2), &y, &u, &v).unwrap();
        let vi = v.clone().try_inverse().unwrap();
        let p22 = -(&vi * &y * vi.transpose());
        assert_relative_eq!(p1.view((0, 0), (2, 2)).into_owned(), Mat::zeros(2, 2), epsilon = 1e-14);
        assert_relative_eq!(p1.view((2, 2), (2, 2)).into_owned(), p22, epsilon = 1e-12);
        assert!(linalg::lambda_min(&p1) < 0.0);
    }

    fn random_factors(rng: &mut ChaCha8Rng, n: usize) -> LyapunovFactors {
        let x = random_sym(rng, n) * 0.3 + Mat::identity(n, n);
        let y = random_sym(rng, n) * 0.3 + Mat::identity(n, n) * 0.2;
        let v = well_conditioned(rng, n);
        let u = factor_u(&x, &y, &v).unwrap();
        LyapunovFactors { x, y, u, v }
    }

    #[test]
    fn congruence_maps_p1_to_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let f = random_factors(&mut rng, 3);
            let p1 = build_p1(&f.x, &f.y, &f.u, &f.v).unwrap();
            let phi = build_phi(&f.y, &f.v).unwrap();
            let theta = bmat(&[vec![f.y.clone(), Mat::identity(3, 3)], vec![Mat::identity(3, 3), f.x.clone()]]).unwrap();
            let lhs = phi.transpose() * p1 * phi;
            assert!(linalg::max_abs(&(lhs - &theta)) <= 1e-9 * linalg::max_abs(&theta).max(1.0));
        }
    }

    #[test]
    fn theta_determinant_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in 1..=4 {
            let x = random_sym(&mut rng, n);
            let y = random_sym(&mut rng, n);
            let i = Mat::identity(n, n);
            let theta = bmat(&[vec![y.clone(), i.clone()], vec![i.clone(), x.clone()]]).unwrap();
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = sign * (&i - &x * &y).determinant();
            assert_relative_eq!(theta.determinant(), rhs, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn controller_map_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let plant = reference::unicycle_plant();
        for _ in 0..30 {
            let f = random_factors(&mut rng, 3);
            let gains = TransformedGains {
                k: random_mat(&mut rng, 3, 3),
                l: random_mat(&mut rng, 3, 2),
                m: random_mat(&mut rng, 1, 3),
                n: random_mat(&mut rng, 1, 2),
            };
            let hv = HolderVariables { j: random_mat(&mut rng, 2, 2), z: random_mat(&mut rng, 2, 3), p2: Mat::identity(2, 2) * 2.0 };
            let (ctrl, _) = reconstruct_controller(&plant, &gains, &f, &hv).unwrap();
            let back = invert_controller_map(&plant, &ctrl, &f).unwrap();
            for (a, b) in [(&back.k, &gains.k), (&back.l, &gains.l), (&back.m, &gains.m), (&back.n, &gains.n)] {
                let scale = linalg::max_abs(b).max(1.0);
                assert!(linalg::max_abs(&(a - b)) <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn zero_transformed_gains_give_zero_controller() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let plant = reference::unicycle_plant();
        let f = random_factors(&mut rng, 3);
        let gains = TransformedGains {
            k: &f.x * &plant.a * &f.y,
            l: Mat::zeros(3, 2),
            m: Mat::zeros(1, 3),
            n: Mat::zeros(1, 2),
        };
        let j = random_mat(&mut rng, 2, 2);
        let p2 = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let hv = HolderVariables { j: j.clone(), z: Mat::zeros(2, 3), p2: p2.clone() };
        let (ctrl, hold) = reconstruct_controller(&plant, &gains, &f, &hv).unwrap();
        for m in [&ctrl.a, &ctrl.b, &ctrl.c, &ctrl.d, &hold.e] {
            assert!(linalg::max_abs(m) <= 1e-12);
        }
        assert_relative_eq!(hold.h, p2.try_inverse().unwrap() * j, epsilon = 1e-12);
    }

    #[test]
    fn zero_controller_inverts_to_plain_gains() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let plant = reference::unicycle_plant();
        let f = random_factors(&mut rng, 3);
        let gains = invert_controller_map(&plant, &ControllerParams::zeros(3, 1, 2), &f).unwrap();
        assert_relative_eq!(gains.k, &f.x * &plant.a * &f.y, epsilon = 1e-12);
        assert_eq!(gains.l, Mat::zeros(3, 2));
        assert_eq!(gains.m, Mat::zeros(1, 3));
        assert_eq!(gains.n, Mat::zeros(1, 2));
    }

    #[test]
    fn singular_p2_is_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let plant = reference::unicycle_plant();
        let f = random_factors(&mut rng, 3);
        let gains = TransformedGains { k: Mat::zeros(3, 3), l: Mat::zeros(3, 2), m: Mat::zeros(1, 3), n: Mat::zeros(1, 2) };
        let hv = HolderVariables { j: Mat::zeros(2, 2), z: Mat::zeros(2, 3), p2: Mat::zeros(2, 2) };
        assert!(matches!(reconstruct_controller(&plant, &gains, &f, &hv), Err(Error::Singular { factor: "P2", .. })));
    }

    #[test]
    fn published_values_reproduce_output_side_of_controller() {
        let c = reference::published_design();
        let plant = reference::unicycle_plant();
        let (ctrl, hold) = reconstruct_controller(&plant, &c.gains(), &c.factors(), &c.holder_variables()).unwrap();
        let printed = reference::published_controller();
        let printed_hold = reference::published_holder();
        for (got, want) in [(&ctrl.c, &printed.c), (&ctrl.d, &printed.d), (&hold.h, &printed_hold.h)] {
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() <= 0.01 * w.abs(), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn plant_json_reports_missing_field() {
        let text = r#"{"n_p":1,"n_u":1,"n_y":1,"n_d":1,"n_yo":1,"A_p":[[0]],"W_p":[[1]],"C_p":[[1]],"C_op":[[1]]}"#;
        let err = serde_json::from_str::<PlantModel>(text).unwrap_err().to_string();
        assert!(err.contains("B_p"), "{err}");
    }

    #[test]
    fn plant_json_checks_dimensions() {
        let text = r#"{"n_p":2,"n_u":1,"n_y":1,"n_d":1,"n_yo":1,"A_p":[[0]],"B_p":[[1]],"W_p":[[1]],"C_p":[[1]],"C_op":[[1]]}"#;
        let err = serde_json::from_str::<PlantModel>(text).unwrap_err().to_string();
        assert!(err.contains("A_p"), "{err}");
    }

    #[test]
    fn plant_json_round_trip() {
        let plant = reference::unicycle_plant();
        let text = serde_json::to_string(&plant).unwrap();
        let back: PlantModel = serde_json::from_str(&text).unwrap();
        assert_eq!(plant, back);
    }
}
