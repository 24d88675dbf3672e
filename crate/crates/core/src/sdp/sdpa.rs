//! Problem dump in the sparse SDPA text format.
//!
//! The file encodes `min Σ c_k y_k s.t. Σ_k y_k F_k − F_0 ⪰ 0` where each
//! constraint of the problem is one diagonal block, oriented so that it reads
//! `⪰ 0` (a `Nsd` constraint is negated, margins are folded into `F_0`).
//! Lines are:
//!
//! ```text
//! "<comment>
//! m                       number of scalar coordinates
//! nBlocks
//! n_1 n_2 ...             block sizes
//! c_1 ... c_m             objective
//! k b i j v               entry (i, j), i ≤ j, of F_k in block b (1-based)
//! ```

use std::fmt::Write as _;

use super::{SdpProblem, Sense};

pub fn write_sdpa(problem: &SdpProblem) -> String {
    let m = problem.n_coords();
    let mut out = String::new();
    let _ = writeln!(out, "\"dense LMI problem, {} variables, {} blocks", problem.vars().len(), problem.lmis().len());
    let _ = writeln!(out, "{m}");
    let _ = writeln!(out, "{}", problem.lmis().len());
    let sizes: Vec<String> = problem.lmis().iter().map(|c| c.expr.rows().to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let mut c = vec![0.0; m];
    if let Some(o) = problem.objective() {
        for &(k, _, _, v) in o.terms() {
            c[k] += v;
        }
    }
    let cs: Vec<String> = c.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(out, "{}", cs.join(" "));
    for (b, lmi) in problem.lmis().iter().enumerate() {
        let sign = if lmi.sense == Sense::Psd { 1.0 } else { -1.0 };
        let f0 = lmi.expr.constant_part();
        let n = f0.nrows();
        for i in 0..n {
            for j in i..n {
                let v = -(sign * f0[(i, j)] - if i == j { lmi.margin } else { 0.0 });
                if v != 0.0 {
                    let _ = writeln!(out, "0 {} {} {} {v:e}", b + 1, i + 1, j + 1);
                }
            }
        }
        for &(k, i, j, v) in lmi.expr.terms() {
            if i <= j {
                let _ = writeln!(out, "{} {} {} {} {:e}", k + 1, b + 1, i + 1, j + 1, sign * v);
            }
        }
    }
    out
}
