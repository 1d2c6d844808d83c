//! Single-site statistics of Gibbs samples on translatable graphs: away from
//! the mode, each coordinate behaves like an independent complex Gaussian.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{chain_state, fan_out};
use crate::analytic::{self, Branch, ThermoParams};
use crate::error::{Error, Result};
use crate::graph::{AutomorphismGroup, GraphTopology};
use crate::sampler::{run_chain_with, Restriction, Schedule};
use crate::stats::{correlation, ks_exponential};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub x: usize,
    pub y: usize,
    pub distance: usize,
    /// Correlation of `|ψ_x|^2` and `|ψ_y|^2`, pooled over the group orbit of the pair.
    pub correlation: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussReport {
    pub params: ThermoParams,
    pub branch: Branch,
    /// `B` below the transition, `B - a` above it.
    pub scale: f64,
    pub samples: usize,
    pub pooled: usize,
    /// KS distance of the pooled `|ψ_x|^2 / scale` from the unit exponential law.
    pub ks: f64,
    /// Supercritical only: the same with scale `B`, mode still excluded.
    pub ks_unscaled: Option<f64>,
    /// Share of pooled values above 1.
    pub tail: f64,
    pub tail_exact: f64,
    pub coordinates: Vec<usize>,
    pub correlations: Vec<PairCorrelation>,
    pub converged: bool,
}

impl GaussReport {
    pub fn max_abs_correlation(&self) -> f64 {
        self.correlations.iter().map(|c| c.correlation.abs()).fold(0.0, f64::max)
    }
}

fn distances(topology: &GraphTopology, source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; topology.n()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(x) = queue.pop_front() {
        for &y in topology.neighbors(x) {
            if dist[y as usize] == usize::MAX {
                dist[y as usize] = dist[x] + 1;
                queue.push_back(y as usize);
            }
        }
    }
    dist
}

/// `k` vertices starting at 0, each one as far as possible from those before it.
fn spread_coordinates(topology: &GraphTopology, k: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut chosen = vec![0];
    let mut tables = vec![distances(topology, 0)];
    while chosen.len() < k {
        let next = (0..topology.n())
            .filter(|v| !chosen.contains(v))
            .max_by_key(|&v| (tables.iter().map(|d| d[v]).min().unwrap_or(0), std::cmp::Reverse(v)))
            .expect("k is at most n");
        tables.push(distances(topology, next));
        chosen.push(next);
    }
    (chosen, tables)
}

/// Pools `|ψ_x|^2` over the samples of one chain and every vertex, dropping
/// the argmax of each sample above the transition, and compares with the
/// exponential law. The group carries `k` fixed coordinates around the graph
/// to estimate their pairwise correlations.
pub fn gaussian_coordinate_test(
    params: &ThermoParams,
    topology: &GraphTopology,
    group: &AutomorphismGroup,
    schedule: &Schedule,
    k: usize,
) -> Result<GaussReport> {
    group.validate(topology)?;
    let n = topology.n();
    if !(2..=n).contains(&k) {
        return Err(Error::param("k", format!("needs between 2 and {n} coordinates, got {k}")));
    }
    let branch = Branch::of(params.theta());
    if branch == Branch::Critical {
        return Err(Error::param("beta", "the coordinate test is undefined at the critical coupling"));
    }
    let point = analytic::free_energy_f(params);
    let supercritical = branch == Branch::Supercritical;
    let scale = params.cutoff - point.condensate;

    let state = chain_state(params, topology, Restriction::None, schedule.seed, 0)?;
    let mut snapshots: Vec<(Vec<f64>, usize)> = Vec::new();
    let run = run_chain_with(state, params, topology, schedule, |_, state, record| {
        snapshots.push((state.field().masses(), record.mode_vertex));
    })?;
    if snapshots.is_empty() {
        return Err(Error::InsufficientSamples("the chain emitted no samples".into()));
    }

    let mut pooled = Vec::with_capacity(snapshots.len() * n);
    for (masses, mode) in &snapshots {
        pooled.extend(masses.iter().enumerate().filter(|&(x, _)| !(supercritical && x == *mode)).map(|(_, &m)| m));
    }
    let scaled: Vec<f64> = pooled.iter().map(|m| m / scale).collect();
    let ks = ks_exponential(&scaled)?;
    let ks_unscaled = if supercritical {
        Some(ks_exponential(&pooled.iter().map(|m| m / params.cutoff).collect::<Vec<_>>())?)
    } else {
        None
    };
    let tail = scaled.iter().filter(|&&v| v > 1.0).count() as f64 / scaled.len() as f64;

    let (coordinates, tables) = spread_coordinates(topology, k);
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let correlations = fan_out(pairs.len(), |p| {
        let (i, j) = pairs[p];
        let (x, y) = (coordinates[i], coordinates[j]);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (masses, mode) in &snapshots {
            for map in group.maps() {
                let (gx, gy) = (map[x] as usize, map[y] as usize);
                if supercritical && (gx == *mode || gy == *mode) {
                    continue;
                }
                xs.push(masses[gx]);
                ys.push(masses[gy]);
            }
        }
        Ok(PairCorrelation { x, y, distance: tables[i][y], correlation: correlation(&xs, &ys)?, pairs: xs.len() })
    })?;

    Ok(GaussReport {
        params: *params,
        branch,
        scale,
        samples: snapshots.len(),
        pooled: scaled.len(),
        ks,
        ks_unscaled,
        tail,
        tail_exact: (-1.0f64).exp(),
        coordinates,
        correlations,
        converged: run.acceptance.converged(),
    })
}
