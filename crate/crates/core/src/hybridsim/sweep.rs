//! Designs over a grid of maximal transmission intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codesign::{design, CodesignOptions, DesignOutcome};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{PlantModel, TimingBounds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t2: f64,
    pub feasible: bool,
    pub delta_used: Option<f64>,
    /// Spectral norm of `E`.
    pub e_norm: Option<f64>,
    /// Spectral norm of `H`.
    pub h_norm: Option<f64>,
    /// Largest real part of `spec(H)`.
    pub max_re_spec_h: Option<f64>,
    pub message: String,
}

/// Runs [`design`] for every `T2` in `grid` (in parallel), keeping the other
/// options of `base`. Per-point failures are reported in the rows.
pub fn sweep_t2(plant: &PlantModel, gamma: f64, grid: &[f64], base: &CodesignOptions) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty T2 grid".into()));
    }
    if let Some(t) = grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput(format!("grid values must be positive, got {t}")));
    }
    Ok(grid.par_iter().map(|&t2| sweep_point(plant, gamma, t2, base)).collect())
}

fn sweep_point(plant: &PlantModel, gamma: f64, t2: f64, base: &CodesignOptions) -> SweepRow {
    let mut row = SweepRow { t2, feasible: false, delta_used: None, e_norm: None, h_norm: None, max_re_spec_h: None, message: String::new() };
    let timing = match TimingBounds::new(base.timing.t1().min(t2), t2) {
        Ok(t) => t,
        Err(e) => {
            row.message = e.to_string();
            return row;
        }
    };
    let opts = CodesignOptions { gamma, timing, ..base.clone() };
    match design(plant, &opts) {
        Ok(DesignOutcome::Feasible(r)) => {
            row.feasible = true;
            row.delta_used = Some(r.delta_used);
            row.e_norm = Some(linalg::spectral_norm(&r.holder.e));
            row.h_norm = Some(linalg::spectral_norm(&r.holder.h));
            row.max_re_spec_h = Some(linalg::spectral_abscissa(&r.holder.h));
        }
        Ok(DesignOutcome::NoFeasibleSolution { .. }) => row.message = "no feasible design".into(),
        Err(e) => row.message = e.to_string(),
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_nonpositive_grids_rejected() {
        let plant = crate::reference::unicycle_plant();
        let opts = CodesignOptions::new(10.0, crate::reference::unicycle_timing());
        assert!(sweep_t2(&plant, 10.0, &[], &opts).is_err());
        assert!(sweep_t2(&plant, 10.0, &[0.5, -1.0], &opts).is_err());
    }
}
