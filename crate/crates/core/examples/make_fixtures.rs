//! Regenerates the derived JSON documents under `fixtures/` from the
//! hand-written `unicycle_config.json`.
//!
//! `cargo run --release -p cohold --example make_fixtures -- <dir>`

use std::path::PathBuf;

use cohold::codesign::{design, DesignConfig, DesignOutcome, DesignResult};
use cohold::io::{read_json, write_json};
use cohold::model::assemble_closed_loop;
use cohold::{analysis, reference};

fn main() -> cohold::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let plant = reference::unicycle_plant();

    let config: DesignConfig = read_json(dir.join("unicycle_config.json"))?;

    let controller = reference::published_controller();
    let holder = reference::published_holder();
    let certificate = reference::published_certificate();
    let cl = assemble_closed_loop(&plant, &controller, &holder)?;
    let published = DesignResult {
        plant: plant.clone(),
        timing: reference::unicycle_timing(),
        gamma: reference::UNICYCLE_GAMMA,
        controller,
        holder,
        certificate,
        delta_used: reference::PUBLISHED_DELTA,
        delta_min: None,
        cc_trace: None,
        variables: None,
        verification: None,
        log: Vec::new(),
    };
    let report = analysis::verify_certificate(&published.certificate, &cl, 1.0, reference::UNICYCLE_GAMMA, 5e-2)?;
    for c in &report.checks {
        println!("{:28} {:+.3e} / {:.3e} {}", c.name, c.margin, c.scale, c.pass);
    }
    write_json(dir.join("published_design.json"), &published)?;

    let mut zeroed = published.clone();
    zeroed.certificate.p1.fill(0.0);
    write_json(dir.join("published_design_zero_p1.json"), &zeroed)?;

    let mut over_budget = published.clone();
    // Larger than the 5% rounding slack on γ².
    over_budget.certificate.gamma1 += 10.0;
    write_json(dir.join("published_design_over_budget.json"), &over_budget)?;

    match design(&plant, &config.options)? {
        DesignOutcome::Feasible(mut r) => {
            r.log.clear();
            println!("designed: delta {}, trace {:?}", r.delta_used, r.cc_trace);
            write_json(dir.join("unicycle_design.json"), &r)?;
        }
        DesignOutcome::NoFeasibleSolution { .. } => println!("design infeasible"),
    }
    Ok(())
}
