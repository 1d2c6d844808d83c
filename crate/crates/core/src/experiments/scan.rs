//! Monte Carlo order parameters across a range of couplings, next to the
//! analytic predictions.

use serde::{Deserialize, Serialize};

use super::{chain_state, estimate_series, params_for};
use crate::analytic::{self, Branch};
use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::sampler::{run_tempered_with, Restriction, Schedule};
use crate::stats::Estimate;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseScanRow {
    pub beta: f64,
    pub theta: f64,
    pub mass_fraction: Estimate,
    /// `M1/n`.
    pub largest: Estimate,
    /// `M2/n`.
    pub second_largest: Estimate,
    /// `H/n`.
    pub energy: Estimate,
    /// `N/n`.
    pub power: Estimate,
    /// Analytic `a/B`.
    pub fraction_exact: f64,
    /// Analytic `F(β, B)`.
    pub free_energy_exact: f64,
    pub branch: Branch,
    pub converged: bool,
}

pub const SCAN_HEADER: &str = "beta,theta,branch,mass_fraction,mass_fraction_se,M1_n,M1_n_se,M2_n,M2_n_se,H_n,H_n_se,N_n,N_n_se,a_over_B,F,converged";

pub fn scan_csv(rows: &[PhaseScanRow]) -> String {
    let mut out = String::from(SCAN_HEADER);
    out.push('\n');
    for r in rows {
        let cols = [&r.mass_fraction, &r.largest, &r.second_largest, &r.energy, &r.power]
            .iter()
            .map(|e| format!("{},{}", e.value, e.std_error))
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.beta, r.theta, r.branch, cols, r.fraction_exact, r.free_energy_exact, r.converged
        ));
    }
    out
}

/// One tempered run over `betas` (sorted ascending). Supercritical rungs start
/// from a spike carrying the analytic condensate, the others from Gaussians.
pub fn phase_scan(cutoff: f64, betas: &[f64], topology: &GraphTopology, schedule: &Schedule) -> Result<Vec<PhaseScanRow>> {
    if betas.is_empty() {
        return Err(Error::param("beta", "the scan needs at least one coupling"));
    }
    if betas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("beta", "scan couplings must be strictly increasing"));
    }
    let ladder = betas.iter().map(|&b| params_for(topology, b, cutoff)).collect::<Result<Vec<_>>>()?;
    let states = ladder
        .iter()
        .enumerate()
        .map(|(k, p)| chain_state(p, topology, Restriction::None, schedule.seed, k as u64))
        .collect::<Result<Vec<_>>>()?;
    let runs = if ladder.len() == 1 {
        let state = states.into_iter().next().expect("one state");
        vec![crate::sampler::run_chain_with(state, &ladder[0], topology, schedule, |_, _, _| {})?]
    } else {
        run_tempered_with(states, &ladder, topology, schedule, |_, _, _, _| {})?.rungs
    };
    let n = topology.n() as f64;
    ladder
        .iter()
        .zip(&runs)
        .map(|(p, run)| {
            let series = |f: &dyn Fn(&crate::ObservableRecord) -> f64| -> Result<Estimate> {
                estimate_series(&run.records.iter().map(f).collect::<Vec<_>>())
            };
            let point = analytic::free_energy_f(p);
            Ok(PhaseScanRow {
                beta: p.beta,
                theta: p.theta(),
                mass_fraction: series(&|r| r.mass_fraction)?,
                largest: series(&|r| r.largest / n)?,
                second_largest: series(&|r| r.second_largest / n)?,
                energy: series(&|r| r.energy / n)?,
                power: series(&|r| r.power / n)?,
                fraction_exact: point.fraction,
                free_energy_exact: point.free_energy,
                branch: point.branch,
                converged: run.acceptance.converged(),
            })
        })
        .collect()
}
