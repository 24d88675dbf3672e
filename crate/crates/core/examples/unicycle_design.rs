//! Runs the co-design on the unicycle example and prints the result.
//!
//! `cargo run --release -p cohold --example unicycle_design -- [gamma] [T2] [max_speed]`

use cohold::codesign::{design, CodesignOptions, DesignOutcome};
use cohold::model::TimingBounds;
use cohold::reference;

fn main() -> cohold::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let gamma = args.first().copied().unwrap_or(reference::UNICYCLE_GAMMA);
    let t2 = args.get(1).copied().unwrap_or(1.0);
    let mut opts = CodesignOptions::new(gamma, TimingBounds::new(0.1, t2)?);
    opts.pole_region.max_speed = Some(args.get(2).copied().unwrap_or(20.0));

    let start = std::time::Instant::now();
    match design(&reference::unicycle_plant(), &opts)? {
        DesignOutcome::Feasible(r) => {
            println!("delta {:.4} (lower bound {:?}), trace {:?}", r.delta_used, r.delta_min, r.cc_trace);
            println!("A_c = {}B_c = {}C_c = {}D_c = {}", r.controller.a, r.controller.b, r.controller.c, r.controller.d);
            println!("H = {}E = {}", r.holder.h, r.holder.e);
            println!("spec(H) = {:?}", cohold::linalg::eigenvalues(&r.holder.h));
        }
        DesignOutcome::NoFeasibleSolution { delta_min, log } => {
            println!("no feasible design; delta_min {delta_min:?} after {} solves", log.len());
        }
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
