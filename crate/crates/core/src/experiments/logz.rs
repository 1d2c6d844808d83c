//! `(log Z)/n` by thermodynamic integration of `d log Z/dβ = -E_β[H]`.
//!
//! A first-order transition makes `E_β[H]` jump, and a single tempered ladder
//! through it mixes poorly. The state space is therefore split at
//! `M1 = Bn/2`, where at most one vertex can sit above the threshold. Each
//! half is integrated on its own from an exact `β = 0` anchor, and the two
//! partition functions are added at the end.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use super::{chain_state, derive_seed, estimate_series, params_for};
use crate::analytic::{solve_theta_c, ThermoParams};
use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::numeric::{ln_factorial, log_add_exp};
use crate::sampler::{run_tempered_with, Restriction, Schedule};
use crate::stats::Estimate;

pub const DEFAULT_RUNGS: usize = 17;
/// Fewest rungs [`beta_ladder`] will build.
pub const MIN_RUNGS: usize = 16;

/// `log` of the volume of `{N <= Bn}` in `C^n`, `n log(πBn) - log n!`.
pub fn ball_log_volume(n: usize, cutoff: f64) -> f64 {
    n as f64 * (PI * cutoff * n as f64).ln() - ln_factorial(n)
}

/// `log Z` at `β = 0` on `{M1 >= Bn/2}` and on `{M1 < Bn/2}`.
///
/// The masses `|f_x|^2` are uniform on a simplex, so one given vertex holds
/// half the cap with probability `2^{-n}`, and two never do.
pub fn branch_anchors(n: usize, cutoff: f64) -> (f64, f64) {
    let full = ball_log_volume(n, cutoff);
    let nf = n as f64;
    let share = (nf.ln() - nf * LN_2).exp();
    (full + nf.ln() - nf * LN_2, full + (-share).ln_1p())
}

/// Rungs from 0 to `beta` with twice the density inside
/// `[0.8, 1.2] θ_c/B²`, where `E[H]` changes fastest.
pub fn beta_ladder(beta: f64, cutoff: f64, rungs: usize) -> Result<Vec<f64>> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::param("beta", "the ladder needs a positive target"));
    }
    if rungs < MIN_RUNGS {
        return Err(Error::param("ladder", format!("needs at least {MIN_RUNGS} rungs, got {rungs}")));
    }
    let theta_c = solve_theta_c();
    let lo = (0.8 * theta_c / (cutoff * cutoff)).min(beta);
    let hi = (1.2 * theta_c / (cutoff * cutoff)).min(beta);
    // weight w(b) = b + |[0, b] ∩ [lo, hi]|, inverted piecewise
    let total = beta + (hi - lo);
    let intervals = (rungs - 1) as f64;
    Ok((0..rungs)
        .map(|k| {
            let w = total * k as f64 / intervals;
            let b = if w <= lo {
                w
            } else if w <= lo + 2.0 * (hi - lo) {
                lo + (w - lo) / 2.0
            } else {
                w - (hi - lo)
            };
            if k + 1 == rungs { beta } else { b.min(beta) }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RungEstimate {
    pub beta: f64,
    pub energy: Estimate,
    pub converged: bool,
    pub local_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchReport {
    pub branch: String,
    pub anchor: f64,
    pub log_z: Estimate,
    pub quadrature_error: f64,
    pub rungs: Vec<RungEstimate>,
    pub swap_rates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogZReport {
    pub params: ThermoParams,
    pub ladder: Vec<f64>,
    /// `(log Z)/n`.
    pub density: Estimate,
    pub log_z: Estimate,
    /// `(log Z)/n` at `β = 0`.
    pub anchor_density: f64,
    pub quadrature_error: f64,
    pub branches: Vec<BranchReport>,
    /// Rungs whose acceptance diagnostics failed, as `branch@beta`.
    pub unconverged: Vec<String>,
}

impl LogZReport {
    pub fn converged(&self) -> bool {
        self.unconverged.is_empty()
    }

    pub fn rungs_csv(&self) -> String {
        let mut out = String::from("branch,beta,E_H,std_error,converged,local_rate\n");
        for b in &self.branches {
            for r in &b.rungs {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    b.branch,
                    r.beta,
                    r.energy.value,
                    r.energy.std_error,
                    r.converged,
                    r.local_rate.map_or(String::new(), |x| x.to_string())
                ));
            }
        }
        out
    }
}

fn check_ladder(ladder: &[f64], beta: f64) -> Result<()> {
    if ladder.len() < 2 {
        return Err(Error::param("ladder", "needs at least two rungs"));
    }
    if ladder[0] != 0.0 {
        return Err(Error::param("ladder", "must start at beta = 0"));
    }
    if (ladder[ladder.len() - 1] - beta).abs() > 1e-12 * beta.max(1.0) {
        return Err(Error::param("ladder", format!("must end at the target beta {beta}")));
    }
    if ladder.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("ladder", "betas must be strictly increasing"));
    }
    Ok(())
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Trapezoid weights, so that the integral is `sum w_k y_k`.
fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; xs.len()];
    for (k, pair) in xs.windows(2).enumerate() {
        let half = 0.5 * (pair[1] - pair[0]);
        w[k] += half;
        w[k + 1] += half;
    }
    w
}

/// Integral of `ys` and a discretization error from the rule on every other rung.
fn integrate_rungs(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let full = trapezoid(xs, ys);
    let mut pick: Vec<usize> = (0..xs.len()).step_by(2).collect();
    if pick.last() != Some(&(xs.len() - 1)) {
        pick.push(xs.len() - 1);
    }
    if pick.len() < 2 || pick.len() == xs.len() {
        return (full, 0.0);
    }
    let coarse = trapezoid(&pick.iter().map(|&k| xs[k]).collect::<Vec<_>>(), &pick.iter().map(|&k| ys[k]).collect::<Vec<_>>());
    (full, (full - coarse).abs() / 3.0)
}

fn run_branch(
    name: &str,
    anchor: f64,
    restriction: Restriction,
    ladder: &[ThermoParams],
    topology: &GraphTopology,
    schedule: &Schedule,
) -> Result<BranchReport> {
    let states = ladder
        .iter()
        .enumerate()
        .map(|(k, p)| chain_state(p, topology, restriction, schedule.seed, k as u64))
        .collect::<Result<Vec<_>>>()?;
    let run = run_tempered_with(states, ladder, topology, schedule, |_, _, _, _| {})?;
    let mut rungs = Vec::with_capacity(ladder.len());
    for (p, chain) in ladder.iter().zip(&run.rungs) {
        let energies: Vec<f64> = chain.records.iter().map(|r| r.energy).collect();
        rungs.push(RungEstimate {
            beta: p.beta,
            energy: estimate_series(&energies)?,
            converged: chain.acceptance.converged(),
            local_rate: chain.acceptance.local,
        });
    }
    let betas: Vec<f64> = ladder.iter().map(|p| p.beta).collect();
    let means: Vec<f64> = rungs.iter().map(|r| r.energy.value).collect();
    let (integral, quadrature_error) = integrate_rungs(&betas, &means);
    // Swaps correlate neighbouring rungs, so the error bar comes from the
    // weighted sum taken sweep by sweep rather than from per-rung errors.
    let weights = trapezoid_weights(&betas);
    let samples = run.rungs.iter().map(|c| c.records.len()).min().unwrap_or(0);
    let combined: Vec<f64> = (0..samples)
        .map(|t| weights.iter().zip(&run.rungs).map(|(w, c)| w * c.records[t].energy).sum())
        .collect();
    let std_error = estimate_series(&combined)?.std_error;
    let n_samples = rungs.iter().map(|r| r.energy.n_samples).sum();
    Ok(BranchReport {
        branch: name.to_string(),
        anchor,
        log_z: Estimate {
            value: anchor - integral,
            std_error,
            n_samples,
            method: "thermodynamic-integration/trapezoid".into(),
        },
        quadrature_error,
        rungs,
        swap_rates: run.swap_rates,
    })
}

/// `(log Z)/n` at `params.beta`, integrated along `ladder` (which runs from 0 to
/// the target). At `β = 0` the exact ball volume is returned without sampling.
///
/// The error bar combines the batch-means errors of the rung energies with a
/// trapezoid discretization estimate.
pub fn estimate_logz_density(
    params: &ThermoParams,
    topology: &GraphTopology,
    ladder: &[f64],
    schedule: &Schedule,
) -> Result<LogZReport> {
    params.validate()?;
    schedule.validate()?;
    if params.n != topology.n() || params.spacing != topology.spacing() {
        return Err(Error::param("params", "n and h must match the topology"));
    }
    let n = params.n as f64;
    let anchor = ball_log_volume(params.n, params.cutoff);
    if params.beta == 0.0 {
        return Ok(LogZReport {
            params: *params,
            ladder: vec![0.0],
            density: Estimate::exact(anchor / n, "ball-volume"),
            log_z: Estimate::exact(anchor, "ball-volume"),
            anchor_density: anchor / n,
            quadrature_error: 0.0,
            branches: Vec::new(),
            unconverged: Vec::new(),
        });
    }
    check_ladder(ladder, params.beta)?;
    let rung_params = ladder.iter().map(|&b| params_for(topology, b, params.cutoff)).collect::<Result<Vec<_>>>()?;
    let split = params.mass_cap() / 2.0;
    let (anchor_c, anchor_u) = branch_anchors(params.n, params.cutoff);
    let mut branches = Vec::with_capacity(2);
    for (index, (name, anchor, restriction)) in [
        ("condensed", anchor_c, Restriction::CondensedAtLeast(split)),
        ("uncondensed", anchor_u, Restriction::Below(split)),
    ]
    .into_iter()
    .enumerate()
    {
        let branch_schedule = Schedule { seed: derive_seed(schedule.seed, index as u64), ..*schedule };
        branches.push(run_branch(name, anchor, restriction, &rung_params, topology, &branch_schedule)?);
    }
    let (c, u) = (&branches[0], &branches[1]);
    let log_z = log_add_exp(c.log_z.value, u.log_z.value);
    let (wc, wu) = ((c.log_z.value - log_z).exp(), (u.log_z.value - log_z).exp());
    let statistical = ((wc * c.log_z.std_error).powi(2) + (wu * u.log_z.std_error).powi(2)).sqrt();
    let quadrature_error = wc * c.quadrature_error + wu * u.quadrature_error;
    let std_error = statistical.hypot(quadrature_error);
    let n_samples = c.log_z.n_samples + u.log_z.n_samples;
    let method = "thermodynamic-integration/two-branch".to_string();
    let unconverged = branches
        .iter()
        .flat_map(|b| b.rungs.iter().filter(|r| !r.converged).map(move |r| format!("{}@{}", b.branch, r.beta)))
        .collect();
    Ok(LogZReport {
        params: *params,
        ladder: ladder.to_vec(),
        density: Estimate { value: log_z / n, std_error: std_error / n, n_samples, method: method.clone() },
        log_z: Estimate { value: log_z, std_error, n_samples, method },
        anchor_density: anchor / n,
        quadrature_error,
        branches,
        unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::log_add_exp;

    #[test]
    fn anchors_partition_the_ball() {
        for (n, cutoff) in [(1, 1.0), (2, 1.0), (5, 3.0), (64, 2.0)] {
            let (c, u) = branch_anchors(n, cutoff);
            assert!((log_add_exp(c, u) - ball_log_volume(n, cutoff)).abs() < 1e-12);
        }
        // one vertex: r uniform on [0, B]
        let (c, u) = branch_anchors(1, 1.0);
        assert!((c - (PI / 2.0).ln()).abs() < 1e-15 && (u - c).abs() < 1e-15);
    }

    #[test]
    fn ladder_shape() {
        let ladder = beta_ladder(4.0, 1.0, DEFAULT_RUNGS).unwrap();
        assert_eq!(ladder.len(), DEFAULT_RUNGS);
        assert_eq!((ladder[0], ladder[DEFAULT_RUNGS - 1]), (0.0, 4.0));
        assert!(ladder.windows(2).all(|w| w[1] > w[0]));
        let theta_c = solve_theta_c();
        let gaps: Vec<f64> = ladder.windows(2).map(|w| w[1] - w[0]).collect();
        let inside = gaps.iter().zip(&ladder).find(|&(_, &b)| b > 0.8 * theta_c && b < 1.1 * theta_c).unwrap().0;
        assert!((gaps[0] / inside - 2.0).abs() < 1e-9);
        assert!(beta_ladder(4.0, 1.0, 8).is_err());
        assert!(beta_ladder(0.0, 1.0, 16).is_err());
        // entirely below the window
        let low = beta_ladder(1.0, 1.0, 16).unwrap();
        assert!(low.windows(2).all(|w| (w[1] - w[0] - 1.0 / 15.0).abs() < 1e-12));
    }

    #[test]
    fn trapezoid_error_vanishes_on_lines() {
        let xs: Vec<f64> = (0..9).map(|k| k as f64 / 8.0).collect();
        let (v, e) = integrate_rungs(&xs, &xs.iter().map(|x| 3.0 * x - 1.0).collect::<Vec<_>>());
        assert!((v - 0.5).abs() < 1e-15 && e < 1e-15);
        let (v, e) = integrate_rungs(&xs, &xs.iter().map(|x| x * x).collect::<Vec<_>>());
        assert!((v - 1.0 / 3.0).abs() < 0.01 && ((v - 1.0 / 3.0).abs() - e).abs() < 1e-12);
        let w = trapezoid_weights(&xs);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_ladders() {
        assert!(check_ladder(&[0.0, 0.5, 1.0], 1.0).is_ok());
        assert!(check_ladder(&[0.1, 1.0], 1.0).is_err());
        assert!(check_ladder(&[0.0, 0.5], 1.0).is_err());
        assert!(check_ladder(&[0.0, 0.6, 0.5, 1.0], 1.0).is_err());
        assert!(check_ladder(&[0.0], 0.0).is_err());
    }
}
