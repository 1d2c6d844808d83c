//! Growth of the discrete `H¹` norm with system size on tori with `h = 1/L`.

use serde::{Deserialize, Serialize};

use super::{chain_state, derive_seed, params_for};
use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::sampler::{run_chain_with, Restriction, Schedule};
use crate::stats::{linear_fit, median, LinearFit};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct H1Row {
    pub n: usize,
    pub spacing: f64,
    pub average_degree: f64,
    pub median_h1_sq: f64,
    /// Smallest `h1_sq / (N/n)` over the samples; never below 1.
    pub min_ratio_to_mass: f64,
    pub samples: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct H1Table {
    pub theta: f64,
    pub cutoff: f64,
    pub rows: Vec<H1Row>,
    /// Log-log slope of `median h1_sq` against `n`.
    pub fit_sq: LinearFit,
    /// Exponent of the norm itself, half the slope above.
    pub exponent: f64,
}

impl H1Table {
    pub fn csv(&self) -> String {
        let mut out = String::from("n,h,average_degree,median_h1_sq,min_ratio_to_mass,samples,converged\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.n, r.spacing, r.average_degree, r.median_h1_sq, r.min_ratio_to_mass, r.samples, r.converged
            ));
        }
        out
    }
}

/// Samples each topology at coupling `theta = βB²` and fits the growth of the
/// median `h1_sq`. The topologies should form a family with `h = n^{-p}`.
pub fn h1_growth(theta: f64, cutoff: f64, topologies: &[GraphTopology], schedule: &Schedule) -> Result<H1Table> {
    if topologies.len() < 3 {
        return Err(Error::param("sizes", format!("a growth fit needs at least 3 sizes, got {}", topologies.len())));
    }
    let beta = theta / (cutoff * cutoff);
    let mut rows = Vec::with_capacity(topologies.len());
    for (index, topology) in topologies.iter().enumerate() {
        let params = params_for(topology, beta, cutoff)?;
        let seed = derive_seed(schedule.seed, index as u64);
        let state = chain_state(&params, topology, Restriction::None, seed, 0)?;
        let run = run_chain_with(state, &params, topology, &Schedule { seed, ..*schedule }, |_, _, _| {})?;
        let n = topology.n() as f64;
        let h1: Vec<f64> = run.records.iter().map(|r| r.h1_sq).collect();
        let min_ratio_to_mass =
            run.records.iter().map(|r| if r.power > 0.0 { r.h1_sq / (r.power / n) } else { f64::INFINITY }).fold(f64::INFINITY, f64::min);
        rows.push(H1Row {
            n: topology.n(),
            spacing: topology.spacing(),
            average_degree: topology.average_degree(),
            median_h1_sq: median(&h1)?,
            min_ratio_to_mass,
            samples: h1.len(),
            converged: run.acceptance.converged(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_h1_sq.ln()).collect();
    let fit_sq = linear_fit(&xs, &ys)?;
    Ok(H1Table { theta, cutoff, rows, fit_sq, exponent: fit_sq.slope / 2.0 })
}
