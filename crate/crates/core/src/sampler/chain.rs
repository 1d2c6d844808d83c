use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{stream_rng, sweep, ChainState, MoveCounters, MoveKind, MoveMixture, Restriction, Target, SWAP_STREAM};
use crate::analytic::ThermoParams;
use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::observables::{ComplexField, ObservableRecord};

pub const STREAM_HEADER: &str = "step,H,N,S4,M1,M2,mode_vertex,mass_fraction,h1_sq";

/// Sweep counts and move settings shared by every chain of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Total sweeps, burn-in included.
    pub sweeps: u64,
    pub burn_in: u64,
    /// Emit every `thin`-th sweep after burn-in.
    pub thin: u64,
    pub mixture: MoveMixture,
    pub seed: u64,
    pub target: Target,
}

impl Schedule {
    /// `sweeps` sweeps with the first fifth discarded and no thinning.
    pub fn new(sweeps: u64, seed: u64) -> Self {
        Self { sweeps, burn_in: sweeps / 5, thin: 1, mixture: MoveMixture::default(), seed, target: Target::Full }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::param("sweeps", "must be positive"));
        }
        if self.thin == 0 {
            return Err(Error::param("thin", "must be positive"));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::param("burn-in", format!("{} leaves no sweeps out of {}", self.burn_in, self.sweeps)));
        }
        self.mixture.validate()
    }

    fn emits(&self, sweep: u64) -> bool {
        sweep >= self.burn_in && (sweep - self.burn_in) % self.thin == 0
    }
}

/// Post-burn-in acceptance rates of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub local: Option<f64>,
    pub phase: Option<f64>,
    pub transfer: Option<f64>,
    pub counters: MoveCounters,
    pub local_scale: f64,
}

impl AcceptanceReport {
    pub const LOCAL_WINDOW: (f64, f64) = (0.1, 0.6);

    fn of(state: &ChainState) -> Self {
        let c = *state.counters();
        Self {
            local: c.rate(MoveKind::LocalGaussian),
            phase: c.rate(MoveKind::PhaseRotation),
            transfer: c.rate(MoveKind::SpikeTransfer),
            counters: c,
            local_scale: state.local_scale(),
        }
    }

    /// Whether the adapted local move landed in the acceptance window.
    ///
    /// Phase rotations and transfers are not held to the window: at high
    /// temperature rotations are accepted almost always, and transfers out of a
    /// condensate are rare by construction.
    pub fn converged(&self) -> bool {
        let (lo, hi) = Self::LOCAL_WINDOW;
        self.local.is_none_or(|r| (lo..=hi).contains(&r))
    }
}

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub records: Vec<ObservableRecord>,
    /// Sweep index of each record.
    pub sweeps_at: Vec<u64>,
    pub acceptance: AcceptanceReport,
    pub state: ChainState,
}

impl ChainRun {
    pub fn csv(&self) -> String {
        stream_csv(&self.records, &self.sweeps_at)
    }

    /// Seed, stream, schedule and acceptance as JSON.
    pub fn metadata_json(&self, schedule: &Schedule) -> Result<String> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            seed: u64,
            stream: u64,
            schedule: &'a Schedule,
            restriction: Restriction,
            acceptance: &'a AcceptanceReport,
            converged: bool,
            records: usize,
        }
        Ok(serde_json::to_string_pretty(&Sidecar {
            seed: schedule.seed,
            stream: self.state.stream(),
            schedule,
            restriction: self.state.restriction(),
            acceptance: &self.acceptance,
            converged: self.acceptance.converged(),
            records: self.records.len(),
        })?)
    }
}

pub fn stream_csv(records: &[ObservableRecord], sweeps_at: &[u64]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(STREAM_HEADER);
    out.push('\n');
    for (r, step) in records.iter().zip(sweeps_at) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            step, r.energy, r.power, r.quartic, r.largest, r.second_largest, r.mode_vertex, r.mass_fraction, r.h1_sq
        ));
    }
    out
}

/// Runs a single unrestricted chain from `init` on stream 0 of `schedule.seed`.
pub fn run_chain(init: ComplexField, params: &ThermoParams, topology: &GraphTopology, schedule: &Schedule) -> Result<ChainRun> {
    let state = ChainState::new(init, params, topology, Restriction::None, schedule.seed, 0)?;
    run_chain_with(state, params, topology, schedule, |_, _, _| {})
}

/// Runs `state` through `schedule`, calling `visit(sweep, state, record)` at
/// every emitted sweep.
pub fn run_chain_with<V>(
    mut state: ChainState,
    params: &ThermoParams,
    topology: &GraphTopology,
    schedule: &Schedule,
    mut visit: V,
) -> Result<ChainRun>
where
    V: FnMut(u64, &ChainState, &ObservableRecord),
{
    schedule.validate()?;
    let mut records = Vec::new();
    let mut sweeps_at = Vec::new();
    state.set_adapting(schedule.burn_in > 0);
    for s in 0..schedule.sweeps {
        if s == schedule.burn_in {
            state.set_adapting(false);
            state.reset_counters();
        }
        sweep(&mut state, params, topology, &schedule.mixture, schedule.target);
        if schedule.emits(s) {
            let record = state.observe(topology);
            visit(s, &state, &record);
            records.push(record);
            sweeps_at.push(s);
        }
    }
    Ok(ChainRun { records, sweeps_at, acceptance: AcceptanceReport::of(&state), state })
}

#[derive(Debug, Clone)]
pub struct TemperedRun {
    pub rungs: Vec<ChainRun>,
    /// Post-burn-in swap acceptance for each adjacent pair `(k, k + 1)`.
    pub swap_rates: Vec<f64>,
    pub swap_attempts: Vec<u64>,
}

/// Replica exchange over `ladder`, one unrestricted chain per rung started from
/// the Gaussian initializer on stream `k`.
pub fn run_tempered(ladder: &[ThermoParams], topology: &GraphTopology, schedule: &Schedule) -> Result<TemperedRun> {
    let states = ladder
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let mut rng = stream_rng(schedule.seed ^ 0x5eed_1417, k as u64);
            let init = super::gaussian_init(p, &mut rng);
            ChainState::new(init, p, topology, Restriction::None, schedule.seed, k as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    run_tempered_with(states, ladder, topology, schedule, |_, _, _, _| {})
}

fn check_ladder(ladder: &[ThermoParams], states: usize) -> Result<()> {
    if ladder.len() < 2 {
        return Err(Error::param("ladder", "needs at least two rungs"));
    }
    if states != ladder.len() {
        return Err(Error::SizeMismatch { expected: ladder.len(), actual: states });
    }
    let first = ladder[0];
    for pair in ladder.windows(2) {
        if pair[1].beta < pair[0].beta {
            return Err(Error::param("ladder", "rungs must be sorted by beta"));
        }
    }
    if ladder.iter().any(|p| p.cutoff != first.cutoff || p.n != first.n || p.spacing != first.spacing) {
        return Err(Error::param("ladder", "rungs must share B, n and h"));
    }
    Ok(())
}

/// Replica exchange from the given per-rung states. After each sweep of every
/// rung, adjacent pairs `(k, k + 1)` with `k` of alternating parity propose to
/// exchange configurations with probability `min(1, e^{(β_k - β_{k+1})(E_k - E_{k+1})})`.
/// `visit(rung, sweep, state, record)` sees every emitted record.
pub fn run_tempered_with<V>(
    mut states: Vec<ChainState>,
    ladder: &[ThermoParams],
    topology: &GraphTopology,
    schedule: &Schedule,
    mut visit: V,
) -> Result<TemperedRun>
where
    V: FnMut(usize, u64, &ChainState, &ObservableRecord),
{
    schedule.validate()?;
    check_ladder(ladder, states.len())?;
    let rungs = ladder.len();
    let mut swap_rng = stream_rng(schedule.seed, SWAP_STREAM);
    let mut records = vec![Vec::new(); rungs];
    let mut sweeps_at = Vec::new();
    let mut attempts = vec![0u64; rungs - 1];
    let mut accepted = vec![0u64; rungs - 1];
    for state in states.iter_mut() {
        state.set_adapting(schedule.burn_in > 0);
    }
    for s in 0..schedule.sweeps {
        if s == schedule.burn_in {
            for state in states.iter_mut() {
                state.set_adapting(false);
                state.reset_counters();
            }
            attempts.iter_mut().for_each(|a| *a = 0);
            accepted.iter_mut().for_each(|a| *a = 0);
        }
        sweep_all(&mut states, ladder, topology, schedule);
        let mut k = (s % 2) as usize;
        while k + 1 < rungs {
            attempts[k] += 1;
            let e_lo = states[k].target_energy(topology, schedule.target);
            let e_hi = states[k + 1].target_energy(topology, schedule.target);
            let log_alpha = (ladder[k].beta - ladder[k + 1].beta) * (e_lo - e_hi);
            if log_alpha >= 0.0 || swap_rng.random::<f64>().ln() < log_alpha {
                let (lo, hi) = states.split_at_mut(k + 1);
                lo[k].swap_configuration(&mut hi[0]);
                accepted[k] += 1;
            }
            k += 2;
        }
        if schedule.emits(s) {
            for (r, state) in states.iter().enumerate() {
                let record = state.observe(topology);
                visit(r, s, state, &record);
                records[r].push(record);
            }
            sweeps_at.push(s);
        }
    }
    let swap_rates = attempts
        .iter()
        .zip(&accepted)
        .map(|(&a, &c)| if a > 0 { c as f64 / a as f64 } else { 0.0 })
        .collect();
    let rungs = states
        .into_iter()
        .zip(records)
        .map(|(state, records)| ChainRun {
            records,
            sweeps_at: sweeps_at.clone(),
            acceptance: AcceptanceReport::of(&state),
            state,
        })
        .collect();
    Ok(TemperedRun { rungs, swap_rates, swap_attempts: attempts })
}

#[cfg(feature = "parallel")]
fn sweep_all(states: &mut [ChainState], ladder: &[ThermoParams], topology: &GraphTopology, schedule: &Schedule) {
    use rayon::prelude::*;
    states
        .par_iter_mut()
        .zip(ladder.par_iter())
        .for_each(|(state, params)| sweep(state, params, topology, &schedule.mixture, schedule.target));
}

#[cfg(not(feature = "parallel"))]
fn sweep_all(states: &mut [ChainState], ladder: &[ThermoParams], topology: &GraphTopology, schedule: &Schedule) {
    for (state, params) in states.iter_mut().zip(ladder) {
        sweep(state, params, topology, &schedule.mixture, schedule.target);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_torus;
    use crate::sampler::gaussian_init;
    use crate::stats::batch_means;

    fn single_site(beta: f64) -> (GraphTopology, ThermoParams) {
        let t = GraphTopology::from_edges(1, 1.0, std::iter::empty()).unwrap();
        (t, ThermoParams::new(beta, 1.0, 1.0, 1).unwrap())
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        let (t, p) = single_site(0.0);
        let init = ComplexField::zeros(1);
        let mut s = Schedule::new(10, 0);
        s.thin = 0;
        assert!(run_chain(init.clone(), &p, &t, &s).is_err());
        let s = Schedule { sweeps: 0, burn_in: 0, ..Schedule::new(10, 0) };
        assert!(run_chain(init.clone(), &p, &t, &s).is_err());
        let s = Schedule { burn_in: 10, ..Schedule::new(10, 0) };
        assert!(run_chain(init, &p, &t, &s).is_err());
    }

    #[test]
    fn same_seed_same_stream() {
        let t = make_torus(4, 2).unwrap();
        let p = ThermoParams::new(1.0, 1.0, t.spacing(), t.n()).unwrap();
        let init = gaussian_init(&p, &mut stream_rng(1, 0));
        let s = Schedule::new(300, 11);
        let a = run_chain(init.clone(), &p, &t, &s).unwrap();
        let b = run_chain(init.clone(), &p, &t, &s).unwrap();
        assert_eq!(a.csv(), b.csv());
        let c = run_chain(init, &p, &t, &Schedule::new(300, 12)).unwrap();
        assert_ne!(a.csv(), c.csv());
        assert_eq!(a.records.len(), 240);
        assert_eq!(a.csv().lines().next().unwrap(), STREAM_HEADER);
    }

    #[test]
    fn uniform_disk_mean_mass() {
        let (t, p) = single_site(0.0);
        let run = run_chain(ComplexField::zeros(1), &p, &t, &Schedule::new(200_000, 3)).unwrap();
        let est = batch_means(&run.records.iter().map(|r| r.power).collect::<Vec<_>>(), 32).unwrap();
        assert!((est.value - 0.5).abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn identical_rungs_always_swap() {
        let t = make_torus(3, 1).unwrap();
        let p = ThermoParams::new(0.8, 1.0, t.spacing(), t.n()).unwrap();
        let run = run_tempered(&[p, p, p], &t, &Schedule::new(200, 4)).unwrap();
        assert!(run.swap_rates.iter().all(|&r| r == 1.0));
        assert!(run.swap_attempts.iter().all(|&a| a > 0));
    }

    #[test]
    fn ladder_validation() {
        let t = make_torus(3, 1).unwrap();
        let p = ThermoParams::new(0.8, 1.0, t.spacing(), t.n()).unwrap();
        let s = Schedule::new(10, 0);
        assert!(run_tempered(&[p], &t, &s).is_err());
        assert!(run_tempered(&[p, p.with_beta(0.1)], &t, &s).is_err());
        assert!(run_tempered(&[p, ThermoParams { cutoff: 2.0, ..p }], &t, &s).is_err());
    }

    #[test]
    fn tempering_preserves_each_rung_marginal() {
        // two-site rungs at different beta; each rung must still match its own oracle
        let t = make_torus(2, 1).unwrap();
        let cold = ThermoParams::new(1.0, 1.0, t.spacing(), t.n()).unwrap();
        let ladder = [cold.with_beta(0.0), cold.with_beta(0.5), cold];
        let run = run_tempered(&ladder, &t, &Schedule::new(150_000, 5)).unwrap();
        for (rung, params) in run.rungs.iter().zip(&ladder) {
            let exact = crate::sampler::oracle::moments(params, &t).unwrap();
            let est = batch_means(&rung.records.iter().map(|r| r.power).collect::<Vec<_>>(), 32).unwrap();
            assert!((est.value - exact.power).abs() < 4.0 * est.std_error, "beta {}: {est:?} vs {}", params.beta, exact.power);
        }
        assert!(run.swap_rates.iter().all(|&r| r > 0.2));
    }

    #[test]
    fn transfer_heavy_mixture_matches_two_site_oracle() {
        let t = make_torus(2, 1).unwrap();
        let p = ThermoParams::new(2.5, 1.0, t.spacing(), 2).unwrap();
        let exact = crate::sampler::oracle::moments(&p, &t).unwrap();
        let init = gaussian_init(&p, &mut stream_rng(6, 0));
        let schedule = Schedule {
            mixture: MoveMixture { local: 0.4, phase: 0.1, transfer: 0.5 },
            ..Schedule::new(400_000, 6)
        };
        let run = run_chain(init, &p, &t, &schedule).unwrap();
        let quartic: Vec<f64> = run.records.iter().map(|r| r.quartic).collect();
        let energy: Vec<f64> = run.records.iter().map(|r| r.energy).collect();
        for (samples, want) in [(quartic, exact.quartic), (energy, exact.energy)] {
            let est = batch_means(&samples, 32).unwrap();
            assert!(est.sigmas_from(want) < 4.0, "{est:?} vs {want}");
        }
        assert!(run.acceptance.transfer.unwrap() > 0.05);
    }

    #[test]
    fn sidecar_mentions_seed_and_acceptance() {
        let (t, p) = single_site(1.0);
        let s = Schedule::new(100, 77);
        let run = run_chain(ComplexField::zeros(1), &p, &t, &s).unwrap();
        let json: serde_json::Value = serde_json::from_str(&run.metadata_json(&s).unwrap()).unwrap();
        assert_eq!(json["seed"], 77);
        assert!(json["acceptance"]["local"].is_number());
    }
}
