//! Time evolution of Gibbs samples: a condensate above the critical coupling
//! stays on its vertex, below it the largest site keeps moving.

use serde::{Deserialize, Serialize};

use super::{chain_state, derive_seed, fan_out};
use crate::analytic::{self, Branch, ThermoParams};
use crate::dynamics::{integrate, IntegrateOptions, LinearFlow, Trajectory};
use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::sampler::{run_chain_with, Restriction, Schedule};

/// Allowed gap between the mass fraction and `a/B` along a trajectory.
pub const FRACTION_BAND: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub start_vertex: usize,
    pub mode_fixed: bool,
    pub mode_changes: usize,
    /// `max_t |M1/N - a/B|`.
    pub max_fraction_gap: f64,
    /// Range of `M1(t)/n - a` over the recorded times.
    pub largest_deviation: (f64, f64),
    pub power_drift: f64,
    /// `max_t |H(t) - H(0)| / |H(0)|`.
    pub energy_drift: f64,
    pub warnings: Vec<String>,
}

impl TrajectorySummary {
    fn of(trajectory: &Trajectory, params: &ThermoParams) -> Self {
        let point = analytic::free_energy_f(params);
        let a = point.condensate;
        let n = params.n as f64;
        let (lo, hi) = trajectory
            .records
            .iter()
            .map(|r| r.largest / n - a)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        Self {
            start_vertex: trajectory.mode_path[0],
            mode_fixed: trajectory.mode_fixed(),
            mode_changes: trajectory.mode_changes(),
            max_fraction_gap: trajectory.records.iter().map(|r| (r.mass_fraction - point.fraction).abs()).fold(0.0, f64::max),
            largest_deviation: (lo, hi),
            power_drift: trajectory.power_drift(),
            energy_drift: trajectory.energy_drift() / trajectory.records[0].energy.abs(),
            warnings: trajectory.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BreatherReport {
    pub params: ThermoParams,
    pub branch: Branch,
    pub horizon: f64,
    pub dt: f64,
    pub record_every: u64,
    pub condensate: f64,
    pub fraction_exact: f64,
    pub trajectories: Vec<TrajectorySummary>,
    pub sampler_converged: bool,
}

impl BreatherReport {
    /// Share of trajectories whose mode never moved.
    pub fn persistent_fraction(&self) -> f64 {
        self.trajectories.iter().filter(|t| t.mode_fixed).count() as f64 / self.trajectories.len() as f64
    }

    /// Whether every trajectory kept its mass fraction within [`FRACTION_BAND`] of `a/B`.
    pub fn within_band(&self) -> bool {
        self.trajectories.iter().all(|t| t.max_fraction_gap <= FRACTION_BAND)
    }

    pub fn max_power_drift(&self) -> f64 {
        self.trajectories.iter().map(|t| t.power_drift).fold(0.0, f64::max)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("sample,start_vertex,mode_fixed,mode_changes,max_fraction_gap,dev_min,dev_max,power_drift,energy_drift\n");
        for (k, t) in self.trajectories.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                k,
                t.start_vertex,
                t.mode_fixed,
                t.mode_changes,
                t.max_fraction_gap,
                t.largest_deviation.0,
                t.largest_deviation.1,
                t.power_drift,
                t.energy_drift
            ));
        }
        out
    }
}

/// Settings shared by the trajectory ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub samples: usize,
    pub horizon: f64,
    pub dt: f64,
    pub record_every: u64,
}

fn ensemble(params: &ThermoParams, topology: &GraphTopology, schedule: &Schedule, settings: &EnsembleSettings) -> Result<BreatherReport> {
    if settings.samples == 0 {
        return Err(Error::param("samples", "must be positive"));
    }
    let flow = LinearFlow::for_topology(topology)?;
    let options = IntegrateOptions { record_every: settings.record_every, cutoff: Some(params.cutoff) };
    let results = fan_out(settings.samples, |k| {
        let seed = derive_seed(schedule.seed, k as u64);
        let state = chain_state(params, topology, Restriction::None, seed, 0)?;
        let run = run_chain_with(state, params, topology, &Schedule { seed, ..*schedule }, |_, _, _| {})?;
        let trajectory = integrate(run.state.field(), settings.horizon, settings.dt, &flow, topology, options)?;
        Ok((TrajectorySummary::of(&trajectory, params), run.acceptance.converged(), trajectory.dt))
    })?;
    let point = analytic::free_energy_f(params);
    Ok(BreatherReport {
        params: *params,
        branch: point.branch,
        horizon: settings.horizon,
        dt: results[0].2,
        record_every: settings.record_every,
        condensate: point.condensate,
        fraction_exact: point.fraction,
        sampler_converged: results.iter().all(|r| r.1),
        trajectories: results.into_iter().map(|r| r.0).collect(),
    })
}

/// Integrates `samples` independent supercritical Gibbs samples, each drawn by
/// its own chain, and tracks whether the condensate stays put.
pub fn breather_persistence(
    params: &ThermoParams,
    topology: &GraphTopology,
    schedule: &Schedule,
    settings: &EnsembleSettings,
) -> Result<BreatherReport> {
    if Branch::of(params.theta()) != Branch::Supercritical {
        return Err(Error::param("beta", format!("a breather needs beta B^2 above the critical value, got {}", params.theta())));
    }
    ensemble(params, topology, schedule, settings)
}

/// The subcritical companion of [`breather_persistence`].
pub fn mode_wandering(
    params: &ThermoParams,
    topology: &GraphTopology,
    schedule: &Schedule,
    settings: &EnsembleSettings,
) -> Result<BreatherReport> {
    if Branch::of(params.theta()) != Branch::Subcritical {
        return Err(Error::param("beta", format!("expected beta B^2 below the critical value, got {}", params.theta())));
    }
    ensemble(params, topology, schedule, settings)
}
