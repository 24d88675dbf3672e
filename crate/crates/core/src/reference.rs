//! The unicycle benchmark and its published reference design.
//!
//! The published matrices carry three significant digits. The printed `J`
//! block is a verbatim copy of `Z` and cannot be the solver output; it is
//! replaced here by `P2·H` with the printed holder gain `H`, which is what the
//! recovery formula implies because `C_p B_p = 0` for this plant. The printed
//! `Q` and `O` are identical.

use crate::linalg::Mat;
use crate::lmi::Certificate;
use crate::model::{ControllerParams, HolderParams, HolderVariables, LyapunovFactors, PlantModel, TimingBounds, TransformedGains};

fn m(r: usize, c: usize, v: &[f64]) -> Mat {
    Mat::from_row_slice(r, c, v)
}

/// Kinematic unicycle linearized around a straight path: states are lateral
/// offset, heading and integrated offset.
pub fn unicycle_plant() -> PlantModel {
    PlantModel::new(
        m(3, 3, &[0.0, 1.0, 0.0, 0.0, -0.01, 0.0, 1.0, 0.0, 0.0]),
        m(3, 1, &[0.0, 1.0, 0.0]),
        m(3, 1, &[0.0, 1.0, 0.0]),
        m(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
        m(1, 3, &[0.0, 0.0, 1.0]),
    )
    .expect("unicycle plant dimensions are consistent")
}

pub fn unicycle_timing() -> TimingBounds {
    TimingBounds::new(0.1, 1.0).expect("valid bounds")
}

pub const UNICYCLE_GAMMA: f64 = 10.0;
pub const PUBLISHED_DELTA: f64 = 3.1611;
/// Published spectrum of the holder gain `H`.
pub const PUBLISHED_SPEC_H: [f64; 2] = [-0.3935, 0.2937];
/// Initial plant state of the reference transient.
pub const UNICYCLE_X0: [f64; 3] = [0.8, 0.1, -0.52];

/// Decision variables of the published unicycle design.
#[derive(Debug, Clone)]
pub struct PublishedDesign {
    pub k: Mat,
    pub l: Mat,
    pub m: Mat,
    pub n: Mat,
    pub j: Mat,
    pub z: Mat,
    pub x: Mat,
    pub y: Mat,
    pub v: Mat,
    pub u: Mat,
    pub p2: Mat,
    pub r: Mat,
    pub q: Mat,
    pub o: Mat,
    pub f: Mat,
    pub f_i: Mat,
    pub delta: f64,
}

impl PublishedDesign {
    pub fn gains(&self) -> TransformedGains {
        TransformedGains { k: self.k.clone(), l: self.l.clone(), m: self.m.clone(), n: self.n.clone() }
    }

    /// `(X, Y, U, V)` with the printed `U`.
    pub fn factors(&self) -> LyapunovFactors {
        LyapunovFactors { x: self.x.clone(), y: self.y.clone(), u: self.u.clone(), v: self.v.clone() }
    }

    pub fn holder_variables(&self) -> HolderVariables {
        HolderVariables { j: self.j.clone(), z: self.z.clone(), p2: self.p2.clone() }
    }
}

pub fn published_controller() -> ControllerParams {
    ControllerParams {
        a: m(3, 3, &[4.74, -1.04, -1.54, -106.0, 16.8, 20.1, 120.0, -20.7, -25.5]),
        b: m(3, 2, &[-0.27, 0.522, 3.06, -5.75, -4.01, 7.6]),
        c: m(1, 3, &[-215.0, 35.7, 43.5]),
        d: m(1, 2, &[6.84, -13.0]),
    }
}

pub fn published_holder() -> HolderParams {
    HolderParams {
        e: m(2, 3, &[-0.0634, 0.889, -0.959, 0.00323, -0.0103, 0.00532]),
        h: m(2, 2, &[-0.0787, 0.121, 0.971, -0.0211]),
    }
}

pub fn published_design() -> PublishedDesign {
    let p2 = m(2, 2, &[1.81, -2.46, -2.46, 9.07]);
    let j = &p2 * &published_holder().h;
    let q = m(2, 2, &[10.3, -16.3, -16.3, 28.4]);
    PublishedDesign {
        k: m(3, 3, &[-0.817, -11.2, -0.825, -2.47, 3.56, -0.228, 1.34, 11.7, -1.48]),
        l: m(3, 2, &[2.43, -7.88, -7.39, 14.0, 4.48, -5.93]),
        m: m(1, 3, &[-12.2, -11.4, 3.75]),
        n: m(1, 2, &[6.84, -13.0]),
        j,
        z: m(2, 3, &[-0.123, 1.63, -1.75, 0.185, -2.28, 2.4]),
        x: m(3, 3, &[101.0, -91.5, -47.9, -91.5, 130.0, 28.6, -47.9, 28.6, 30.3]),
        y: m(3, 3, &[3.87, -2.47, -1.33, -2.47, 14.1, -1.1, -1.33, -1.1, 1.52]),
        v: m(3, 3, &[0.0526, -1.85, 0.491, 0.441, 9.4, -5.73, -0.0246, -0.495, 1.03]),
        u: m(3, 3, &[-1650.0, 388.0, 250.0, 1480.0, -390.0, -173.0, 803.0, -174.0, -139.0]),
        p2,
        r: m(
            6,
            6,
            &[
                0.349, 0.952, 0.0252, 0.0164, -0.731, 0.925, //
                0.952, 8.95, -0.883, 0.544, -7.88, 8.52, //
                0.0252, -0.883, 0.232, -0.0533, 0.801, -0.924, //
                0.0164, 0.544, -0.0533, 1.07, -0.506, 0.485, //
                -0.731, -7.88, 0.801, -0.506, 7.36, -7.16, //
                0.925, 8.52, -0.924, 0.485, -7.16, 8.52,
            ],
        ),
        o: q.clone(),
        q,
        f: m(
            6,
            6,
            &[
                6.27, 0.00603, -5.2, 0.193, -0.084, -1.33, //
                0.00603, 31.1, -12.9, -0.193, 16.7, -18.4, //
                -5.2, -12.9, 16.8, -0.11, -6.96, 9.41, //
                0.193, -0.193, -0.11, 0.733, -0.0536, 0.073, //
                -0.084, 16.7, -6.96, -0.0536, 9.59, -9.42, //
                -1.33, -18.4, 9.41, 0.073, -9.42, 11.7,
            ],
        ),
        f_i: m(
            6,
            6,
            &[
                0.36, 0.949, 0.0144, 0.0104, -0.718, 0.94, //
                0.949, 8.95, -0.879, 0.546, -7.88, 8.52, //
                0.0144, -0.879, 0.242, -0.0474, 0.788, -0.939, //
                0.0104, 0.546, -0.0474, 1.41, -0.514, 0.474, //
                -0.718, -7.88, 0.788, -0.514, 7.51, -7.04, //
                0.94, 8.52, -0.939, 0.474, -7.04, 8.64,
            ],
        ),
        delta: PUBLISHED_DELTA,
    }
}

/// Split of `γ²` between the two dissipation budgets; the published data
/// fix only the sum.
pub const PUBLISHED_GAMMA_SPLIT: (f64, f64) = (50.0, 50.0);

/// Certificate built from the published data: `P1` from the printed
/// factors, and `S` taken as the printed `F_i`. The printed `F` is too poorly
/// conditioned at three digits for its inverse to satisfy `R − S ≺ 0`.
pub fn published_certificate() -> Certificate {
    let d = published_design();
    let p1 = crate::model::build_p1(&d.x, &d.y, &d.u, &d.v).expect("published factors have matching shapes");
    Certificate {
        p1: crate::linalg::symmetrize(&p1),
        p2: d.p2,
        s: d.f_i,
        r: d.r,
        q: d.q,
        o: d.o,
        delta: d.delta,
        gamma1: PUBLISHED_GAMMA_SPLIT.0,
        gamma2: PUBLISHED_GAMMA_SPLIT.1,
        gamma: UNICYCLE_GAMMA,
    }
}
