//! Dormand–Prince 5(4) steps with the order-4 continuous extension.

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Interpolant over one accepted step.
#[derive(Debug, Clone)]
pub(crate) struct DenseStep {
    pub t0: f64,
    pub h: f64,
    r: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }
}

pub(crate) struct Trial {
    pub y: Vec<f64>,
    /// Derivative at the step end (first stage of the next step).
    pub f_end: Vec<f64>,
    /// Scaled RMS error estimate; the step is acceptable when ≤ 1.
    pub err: f64,
    pub dense: DenseStep,
}

/// One trial step of size `h` from `(t, y)` with `f0 = f(t, y)`.
pub(crate) fn trial<F: FnMut(f64, &[f64], &mut [f64])>(f: &mut F, t: f64, y: &[f64], f0: &[f64], h: f64, rtol: f64, atol: f64) -> Trial {
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(f0.to_vec());
    let mut tmp = vec![0.0; n];
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += A[s][j] * kj[i];
            }
            tmp[i] = y[i] + h * acc;
        }
        let mut ks = vec![0.0; n];
        f(t + C[s] * h, &tmp, &mut ks);
        k.push(ks);
    }
    // Stage 7 is evaluated at the 5th-order solution, which equals `tmp`.
    let y1 = tmp;
    let mut err = 0.0;
    for i in 0..n {
        let e: f64 = h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
        let sc = atol + rtol * y[i].abs().max(y1[i].abs());
        err += (e / sc).powi(2);
    }
    let err = (err / n as f64).sqrt();

    let r1 = y.to_vec();
    let r2: Vec<f64> = (0..n).map(|i| y1[i] - y[i]).collect();
    let r3: Vec<f64> = (0..n).map(|i| h * k[0][i] - r2[i]).collect();
    let r4: Vec<f64> = (0..n).map(|i| r2[i] - h * k[6][i] - r3[i]).collect();
    let r5: Vec<f64> = (0..n).map(|i| h * (0..7).map(|s| D[s] * k[s][i]).sum::<f64>()).collect();
    let f_end = k.pop().expect("seven stages");
    Trial { y: y1, f_end, err, dense: DenseStep { t0: t, h, r: [r1, r2, r3, r4, r5] } }
}

/// Step-size factor after a trial with error estimate `err`.
pub(crate) fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}
