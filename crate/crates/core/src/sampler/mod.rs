//! Metropolis sampling of the Gibbs measure `e^{-βH} 1{N <= Bn}` and exact
//! small-`n` oracles for it.
//!
//! Random streams: every chain owns a `ChaCha8Rng` seeded from the master seed
//! with [`rand_chacha::ChaCha8Rng::set_stream`] selecting the chain. Chain `k`
//! of an experiment uses stream `k`; tempering swaps use [`SWAP_STREAM`].

mod chain;
pub mod oracle;

pub use chain::{
    run_chain, run_chain_with, run_tempered, run_tempered_with, stream_csv, AcceptanceReport, ChainRun, Schedule,
    TemperedRun, STREAM_HEADER,
};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytic::ThermoParams;
use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::observables::{self, energy_from_parts, ComplexField, ObservableRecord};

/// Stream index reserved for replica-swap decisions.
pub const SWAP_STREAM: u64 = u64::MAX;

/// Caches are recomputed from scratch after this many accepted moves.
pub const REFRESH_INTERVAL: u64 = 10_000;

const ADAPT_WINDOW: u64 = 200;
const ADAPT_TARGET: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    /// Adds a complex Gaussian of variance `s^2 B` to one site.
    LocalGaussian,
    /// Moves mass between the largest site and a uniformly chosen other site,
    /// in a random direction, keeping phases. The amount is exponential with
    /// mean `B` truncated to the donor's mass; moves that would change which
    /// site is largest are rejected.
    SpikeTransfer,
    /// Rotates one site's phase uniformly.
    PhaseRotation,
}

impl MoveKind {
    pub const ALL: [MoveKind; 3] = [MoveKind::LocalGaussian, MoveKind::SpikeTransfer, MoveKind::PhaseRotation];

    fn slot(self) -> usize {
        match self {
            MoveKind::LocalGaussian => 0,
            MoveKind::SpikeTransfer => 1,
            MoveKind::PhaseRotation => 2,
        }
    }
}

/// Probabilities of each move kind within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveMixture {
    pub local: f64,
    pub phase: f64,
    pub transfer: f64,
}

impl Default for MoveMixture {
    fn default() -> Self {
        Self { local: 0.7, phase: 0.2, transfer: 0.1 }
    }
}

impl MoveMixture {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.local, self.phase, self.transfer];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::param("mixture", "weights must be finite and non-negative"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::param("mixture", "weights must sum to 1"));
        }
        Ok(())
    }

    fn pick(&self, u: f64) -> MoveKind {
        if u < self.local {
            MoveKind::LocalGaussian
        } else if u < self.local + self.phase {
            MoveKind::PhaseRotation
        } else {
            MoveKind::SpikeTransfer
        }
    }
}

/// Which density a chain targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `e^{-βH}` on the mass ball.
    #[default]
    Full,
    /// `e^{βS4/n}` on the mass ball (kinetic term dropped).
    Reduced,
}

/// Optional restriction of the state space by the largest site mass `M1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    #[default]
    None,
    /// Only states with `M1 >= c`.
    CondensedAtLeast(f64),
    /// Only states with `M1 < c`.
    Below(f64),
}

impl Restriction {
    fn threshold(&self) -> Option<f64> {
        match *self {
            Restriction::None => None,
            Restriction::CondensedAtLeast(c) | Restriction::Below(c) => Some(c),
        }
    }

    fn admits(&self, above: usize) -> bool {
        match self {
            Restriction::None => true,
            Restriction::CondensedAtLeast(_) => above > 0,
            Restriction::Below(_) => above == 0,
        }
    }
}

/// Proposal and acceptance counters, indexed like [`MoveKind::ALL`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounters {
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
}

impl MoveCounters {
    pub fn proposed(&self, kind: MoveKind) -> u64 {
        self.proposed[kind.slot()]
    }

    pub fn accepted(&self, kind: MoveKind) -> u64 {
        self.accepted[kind.slot()]
    }

    /// Acceptance rate, or `None` when nothing was proposed.
    pub fn rate(&self, kind: MoveKind) -> Option<f64> {
        let p = self.proposed(kind);
        (p > 0).then(|| self.accepted(kind) as f64 / p as f64)
    }
}

/// A field together with the running sums that the energy is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    field: ComplexField,
    power: f64,
    quartic: f64,
    gradient: f64,
    above: usize,
    /// Largest-mass site, lowest index on ties.
    mode: usize,
}

impl Configuration {
    fn new(field: ComplexField, topology: &GraphTopology, threshold: Option<f64>) -> Result<Self> {
        let gradient = observables::gradient_sum(&field, topology)?;
        let mut config = Self { power: 0.0, quartic: 0.0, gradient, above: 0, mode: 0, field };
        config.recount(threshold);
        Ok(config)
    }

    fn recount(&mut self, threshold: Option<f64>) {
        self.power = observables::power_n(&self.field);
        self.quartic = observables::quartic_sum(&self.field);
        self.above = match threshold {
            Some(c) => self.field.as_slice().iter().filter(|z| z.norm_sqr() >= c).count(),
            None => 0,
        };
        self.rescan_mode();
    }

    fn rescan_mode(&mut self) {
        let amps = self.field.as_slice();
        self.mode = (1..amps.len()).fold(0, |best, z| {
            if outranks(z, amps[z].norm_sqr(), best, amps[best].norm_sqr()) {
                z
            } else {
                best
            }
        });
    }

    pub fn field(&self) -> &ComplexField {
        &self.field
    }
}

/// One Markov chain: its configuration, random stream and bookkeeping.
#[derive(Debug, Clone)]
pub struct ChainState {
    config: Configuration,
    restriction: Restriction,
    rng: ChaCha8Rng,
    stream: u64,
    steps: u64,
    counters: MoveCounters,
    accepted_since_refresh: u64,
    local_scale: f64,
    adapting: bool,
    window_proposed: u64,
    window_accepted: u64,
}

impl ChainState {
    /// Builds a chain at `field`, which must satisfy the mass cutoff and the restriction.
    pub fn new(
        field: ComplexField,
        params: &ThermoParams,
        topology: &GraphTopology,
        restriction: Restriction,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        params.validate()?;
        check_params(params, topology)?;
        let config = Configuration::new(field, topology, restriction.threshold())?;
        if config.power > params.mass_cap() {
            return Err(Error::Domain(format!(
                "initial field has N = {} above the cutoff B n = {}",
                config.power,
                params.mass_cap()
            )));
        }
        if !restriction.admits(config.above) {
            return Err(Error::Domain(format!("initial field violates the restriction {restriction:?}")));
        }
        Ok(Self {
            config,
            restriction,
            rng: stream_rng(seed, stream),
            stream,
            steps: 0,
            counters: MoveCounters::default(),
            accepted_since_refresh: 0,
            local_scale: 0.5,
            adapting: false,
            window_proposed: 0,
            window_accepted: 0,
        })
    }

    pub fn field(&self) -> &ComplexField {
        &self.config.field
    }

    pub fn power(&self) -> f64 {
        self.config.power
    }

    pub fn quartic(&self) -> f64 {
        self.config.quartic
    }

    /// `sum_E |f_x - f_y|^2`, without the `h^-2` factor.
    pub fn gradient(&self) -> f64 {
        self.config.gradient
    }

    pub fn energy(&self, topology: &GraphTopology) -> f64 {
        energy_from_parts(self.config.gradient, self.config.quartic, topology.n(), topology.spacing())
    }

    /// The energy whose Boltzmann weight the target assigns.
    pub fn target_energy(&self, topology: &GraphTopology, target: Target) -> f64 {
        match target {
            Target::Full => self.energy(topology),
            Target::Reduced => -self.config.quartic / topology.n() as f64,
        }
    }

    pub fn restriction(&self) -> Restriction {
        self.restriction
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn counters(&self) -> &MoveCounters {
        &self.counters
    }

    pub fn reset_counters(&mut self) {
        self.counters = MoveCounters::default();
    }

    pub fn local_scale(&self) -> f64 {
        self.local_scale
    }

    pub fn set_local_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::param("local_scale", "must be finite and positive"));
        }
        self.local_scale = scale;
        Ok(())
    }

    /// Turns burn-in adaptation of the local scale on or off.
    pub fn set_adapting(&mut self, on: bool) {
        self.adapting = on;
        self.window_proposed = 0;
        self.window_accepted = 0;
    }

    /// Recomputes every cache from the field.
    pub fn refresh(&mut self, topology: &GraphTopology) {
        self.config.gradient =
            observables::gradient_sum(&self.config.field, topology).expect("chain field matches its topology");
        self.config.recount(self.restriction.threshold());
        self.accepted_since_refresh = 0;
    }

    /// Largest relative deviation between the caches and a full recomputation.
    pub fn cache_error(&self, topology: &GraphTopology) -> f64 {
        let mut fresh = self.config.clone();
        fresh.gradient = observables::gradient_sum(&fresh.field, topology).expect("chain field matches its topology");
        fresh.recount(self.restriction.threshold());
        let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
        let h = |c: &Configuration| energy_from_parts(c.gradient, c.quartic, topology.n(), topology.spacing());
        rel(self.config.power, fresh.power)
            .max(rel(self.config.quartic, fresh.quartic))
            .max(rel(self.config.gradient, fresh.gradient))
            .max(rel(h(&self.config), h(&fresh)))
    }

    pub fn observe(&self, topology: &GraphTopology) -> ObservableRecord {
        observables::observe(&self.config.field, topology).expect("chain field matches its topology")
    }

    pub(crate) fn swap_configuration(&mut self, other: &mut ChainState) {
        std::mem::swap(&mut self.config, &mut other.config);
    }
}

/// ChaCha8 seeded from `seed`, on the independent stream `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_params(params: &ThermoParams, topology: &GraphTopology) -> Result<()> {
    if params.n != topology.n() {
        return Err(Error::SizeMismatch { expected: topology.n(), actual: params.n });
    }
    if (params.spacing - topology.spacing()).abs() > 1e-12 * topology.spacing() {
        return Err(Error::param("h", format!("{} differs from the graph spacing {}", params.spacing, topology.spacing())));
    }
    Ok(())
}

/// Whether site `z` with mass `mz` is ahead of site `m` with mass `mm` in the
/// largest-site order (ties go to the lower index).
#[inline]
fn outranks(z: usize, mz: f64, m: usize, mm: f64) -> bool {
    mz > mm || (mz == mm && z < m)
}

struct Proposal {
    sites: [(usize, Complex64); 2],
    count: usize,
    d_power: f64,
    d_quartic: f64,
    d_gradient: f64,
    log_hastings: f64,
}

fn gradient_change(field: &[Complex64], topology: &GraphTopology, sites: &[(usize, Complex64)]) -> f64 {
    let mut delta = 0.0;
    for (k, &(x, new)) in sites.iter().enumerate() {
        let old = field[x];
        for &y in topology.neighbors(x) {
            let y = y as usize;
            match sites.iter().position(|&(s, _)| s == y) {
                // edges between two touched sites are handled once, from the later one
                Some(j) if j < k => {
                    let other_new = sites[j].1;
                    delta += (new - other_new).norm_sqr() - (old - field[y]).norm_sqr();
                }
                Some(_) => {}
                None => delta += (new - field[y]).norm_sqr() - (old - field[y]).norm_sqr(),
            }
        }
    }
    delta
}

fn propose(state: &mut ChainState, params: &ThermoParams, topology: &GraphTopology, kind: MoveKind) -> Option<Proposal> {
    let n = topology.n();
    let field = state.config.field.as_slice();
    let (sites, count, log_hastings) = match kind {
        MoveKind::LocalGaussian => {
            let x = state.rng.random_range(0..n);
            let fx = field[x];
            let sigma = state.local_scale * (0.5 * params.cutoff).sqrt();
            let re: f64 = state.rng.sample(StandardNormal);
            let im: f64 = state.rng.sample(StandardNormal);
            let g = fx + Complex64::new(re, im) * sigma;
            ([(x, g), (x, g)], 1, 0.0)
        }
        MoveKind::PhaseRotation => {
            let x = state.rng.random_range(0..n);
            let fx = field[x];
            let angle = state.rng.random_range(0.0..std::f64::consts::TAU);
            let g = fx * Complex64::from_polar(1.0, angle);
            ([(x, g), (x, g)], 1, 0.0)
        }
        MoveKind::SpikeTransfer => {
            if n < 2 {
                return None;
            }
            let mode = state.config.mode;
            let mut other = state.rng.random_range(0..n - 1);
            if other >= mode {
                other += 1;
            }
            let (donor, receiver) = if state.rng.random::<bool>() { (mode, other) } else { (other, mode) };
            let (fd, fr) = (field[donor], field[receiver]);
            let (pd, pr) = (fd.norm_sqr(), fr.norm_sqr());
            if pd == 0.0 {
                return None;
            }
            // exponential of scale B truncated to [0, pd]
            let scale = params.cutoff;
            let span = -(-pd / scale).exp_m1();
            let moved = (-scale * (-state.rng.random::<f64>() * span).ln_1p()).min(pd);
            let (new_pd, new_pr) = (pd - moved, pr + moved);
            if donor == mode {
                // the reverse move must see the same largest site
                let beaten = (0..n).any(|z| {
                    let mz = if z == receiver { new_pr } else { field[z].norm_sqr() };
                    z != mode && outranks(z, mz, mode, new_pd)
                });
                if beaten {
                    return None;
                }
            }
            let gd = fd * (new_pd / pd).sqrt();
            // an empty site has no phase to keep; give it a fresh uniform one
            let gr = if pr > 0.0 {
                fr * (new_pr / pr).sqrt()
            } else {
                Complex64::from_polar(new_pr.sqrt(), state.rng.random_range(0.0..std::f64::consts::TAU))
            };
            // the reverse move draws the same amount truncated to [0, new_pr]
            let reverse_span = -(-new_pr / scale).exp_m1();
            ([(donor, gd), (receiver, gr)], 2, (span / reverse_span).ln())
        }
    };
    let touched = &sites[..count];
    let mut d_power = 0.0;
    let mut d_quartic = 0.0;
    for &(s, g) in touched {
        let (old, new) = (field[s].norm_sqr(), g.norm_sqr());
        d_power += new - old;
        d_quartic += new * new - old * old;
    }
    // both moves conserve N exactly; rotations also keep every |f_x|
    match kind {
        MoveKind::LocalGaussian => {}
        MoveKind::SpikeTransfer => d_power = 0.0,
        MoveKind::PhaseRotation => (d_power, d_quartic) = (0.0, 0.0),
    }
    let d_gradient = gradient_change(field, topology, touched);
    Some(Proposal { sites, count, d_power, d_quartic, d_gradient, log_hastings })
}

fn step_with_target(
    state: &mut ChainState,
    params: &ThermoParams,
    topology: &GraphTopology,
    kind: MoveKind,
    target: Target,
) -> bool {
    state.steps += 1;
    state.counters.proposed[kind.slot()] += 1;
    let accepted = match propose(state, params, topology, kind) {
        Some(p) => try_accept(state, params, topology, target, p),
        None => false,
    };
    if accepted {
        state.counters.accepted[kind.slot()] += 1;
        state.accepted_since_refresh += 1;
        if state.accepted_since_refresh >= REFRESH_INTERVAL {
            state.refresh(topology);
        }
    }
    if kind == MoveKind::LocalGaussian && state.adapting {
        state.window_proposed += 1;
        state.window_accepted += accepted as u64;
        if state.window_proposed == ADAPT_WINDOW {
            let rate = state.window_accepted as f64 / ADAPT_WINDOW as f64;
            state.local_scale = (state.local_scale * (rate - ADAPT_TARGET).exp()).clamp(1e-6, 1e3);
            state.window_proposed = 0;
            state.window_accepted = 0;
        }
    }
    accepted
}

fn try_accept(state: &mut ChainState, params: &ThermoParams, topology: &GraphTopology, target: Target, p: Proposal) -> bool {
    let cfg = &state.config;
    if cfg.power + p.d_power > params.mass_cap() {
        return false;
    }
    let touched = &p.sites[..p.count];
    let mut above = cfg.above;
    if let Some(c) = state.restriction.threshold() {
        for &(s, g) in touched {
            above = above + (g.norm_sqr() >= c) as usize - (cfg.field.as_slice()[s].norm_sqr() >= c) as usize;
        }
        if !state.restriction.admits(above) {
            return false;
        }
    }
    let n = topology.n() as f64;
    let d_energy = match target {
        Target::Full => energy_from_parts(p.d_gradient, p.d_quartic, topology.n(), topology.spacing()),
        Target::Reduced => -p.d_quartic / n,
    };
    let log_alpha = -params.beta * d_energy + p.log_hastings;
    if log_alpha < 0.0 && state.rng.random::<f64>().ln() >= log_alpha {
        return false;
    }
    let cfg = &mut state.config;
    let mode_mass = cfg.field.as_slice()[cfg.mode].norm_sqr();
    let mut rescan = false;
    let amps = cfg.field.as_mut_slice();
    for &(s, g) in touched {
        amps[s] = g;
    }
    let mut best_mass = mode_mass;
    for &(s, g) in touched {
        let m = g.norm_sqr();
        if s == cfg.mode && m < mode_mass {
            rescan = true;
        } else if outranks(s, m, cfg.mode, best_mass) {
            cfg.mode = s;
            best_mass = m;
        }
    }
    if rescan {
        cfg.rescan_mode();
    }
    cfg.power += p.d_power;
    cfg.quartic += p.d_quartic;
    cfg.gradient += p.d_gradient;
    cfg.above = above;
    true
}

/// One Metropolis–Hastings update of `state` towards `e^{-βH} 1{N <= Bn}`.
/// Returns whether the proposal was accepted.
pub fn metropolis_step(state: &mut ChainState, params: &ThermoParams, topology: &GraphTopology, kind: MoveKind) -> bool {
    step_with_target(state, params, topology, kind, Target::Full)
}

/// As [`metropolis_step`] but towards `e^{βS4/n} 1{N <= Bn}`.
pub fn sample_reduced(state: &mut ChainState, params: &ThermoParams, topology: &GraphTopology, kind: MoveKind) -> bool {
    step_with_target(state, params, topology, kind, Target::Reduced)
}

/// One sweep: `n` moves drawn from `mixture`.
pub fn sweep(state: &mut ChainState, params: &ThermoParams, topology: &GraphTopology, mixture: &MoveMixture, target: Target) {
    for _ in 0..topology.n() {
        let kind = mixture.pick(state.rng.random::<f64>());
        step_with_target(state, params, topology, kind, target);
    }
}

/// I.i.d. complex Gaussians with `E|f_x|^2 = B/2`, redrawn until `N <= Bn`.
pub fn gaussian_init(params: &ThermoParams, rng: &mut impl Rng) -> ComplexField {
    let sigma = (params.cutoff / 4.0).sqrt();
    loop {
        let amps: Vec<Complex64> = (0..params.n)
            .map(|_| Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * sigma)
            .collect();
        let field = ComplexField::new(amps).expect("finite Gaussian draws");
        if observables::power_n(&field) <= params.mass_cap() {
            return field;
        }
    }
}

/// A spike of mass `fraction * Bn` at `vertex` over a Gaussian bulk that fills
/// most of the remaining mass, redrawn until `N <= Bn`.
pub fn condensed_init(params: &ThermoParams, fraction: f64, vertex: usize, rng: &mut impl Rng) -> Result<ComplexField> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::param("fraction", "must lie in [0, 1]"));
    }
    if vertex >= params.n {
        return Err(Error::param("vertex", format!("{vertex} is not below n = {}", params.n)));
    }
    let spike = fraction * params.mass_cap();
    let bulk_sites = (params.n - 1).max(1) as f64;
    let sigma = (0.9 * (params.mass_cap() - spike) / bulk_sites / 2.0).sqrt();
    loop {
        let mut amps: Vec<Complex64> = (0..params.n)
            .map(|_| Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * sigma)
            .collect();
        amps[vertex] = Complex64::new(spike.sqrt(), 0.0);
        let field = ComplexField::new(amps).expect("finite Gaussian draws");
        if observables::power_n(&field) <= params.mass_cap() {
            return Ok(field);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_torus;

    fn setup(side: usize, dim: usize, beta: f64, cutoff: f64) -> (GraphTopology, ThermoParams) {
        let t = make_torus(side, dim).unwrap();
        let p = ThermoParams::new(beta, cutoff, t.spacing(), t.n()).unwrap();
        (t, p)
    }

    fn chain(t: &GraphTopology, p: &ThermoParams, seed: u64) -> ChainState {
        let mut rng = stream_rng(seed, 99);
        let f = gaussian_init(p, &mut rng);
        ChainState::new(f, p, t, Restriction::None, seed, 0).unwrap()
    }

    #[test]
    fn beta_zero_accepts_every_phase_rotation() {
        let (t, p) = setup(4, 2, 0.0, 1.0);
        let mut s = chain(&t, &p, 1);
        for _ in 0..2000 {
            assert!(metropolis_step(&mut s, &p, &t, MoveKind::PhaseRotation));
        }
        assert!(s.counters().rate(MoveKind::SpikeTransfer).is_none());
    }

    #[test]
    fn beta_zero_local_rejections_are_exactly_the_cutoff_violations() {
        let (t, p) = setup(3, 1, 0.0, 1.0);
        let mut s = chain(&t, &p, 5);
        for _ in 0..5000 {
            let mut probe = s.clone();
            let proposal = propose(&mut probe, &p, &t, MoveKind::LocalGaussian).unwrap();
            let inside = s.power() + proposal.d_power <= p.mass_cap();
            assert_eq!(metropolis_step(&mut s, &p, &t, MoveKind::LocalGaussian), inside);
        }
    }

    #[test]
    fn phase_rotation_keeps_power_and_quartic() {
        let (t, p) = setup(4, 2, 1.0, 1.0);
        let mut s = chain(&t, &p, 2);
        for _ in 0..500 {
            let (n0, q0) = (s.power(), s.quartic());
            metropolis_step(&mut s, &p, &t, MoveKind::PhaseRotation);
            assert_eq!(s.power(), n0);
            assert_eq!(s.quartic(), q0);
        }
        let mut s = chain(&t, &p, 3);
        for _ in 0..500 {
            assert!(sample_reduced(&mut s, &p, &t, MoveKind::PhaseRotation));
        }
    }

    #[test]
    fn spike_transfer_keeps_power() {
        let (t, p) = setup(4, 2, 0.5, 1.0);
        let mut s = chain(&t, &p, 4);
        let n0 = observables::power_n(s.field());
        for _ in 0..5000 {
            metropolis_step(&mut s, &p, &t, MoveKind::SpikeTransfer);
        }
        assert!(s.counters().accepted(MoveKind::SpikeTransfer) > 100);
        let n1 = observables::power_n(s.field());
        assert!((n1 - n0).abs() <= 1e-13 * n0);
    }

    #[test]
    fn spike_transfer_on_one_site_is_rejected() {
        let t1 = GraphTopology::from_edges(1, 1.0, std::iter::empty()).unwrap();
        let p1 = ThermoParams::new(0.0, 1.0, 1.0, 1).unwrap();
        let mut s = ChainState::new(ComplexField::constant(1, Complex64::new(0.5, 0.0)), &p1, &t1, Restriction::None, 0, 0)
            .unwrap();
        assert!(!metropolis_step(&mut s, &p1, &t1, MoveKind::SpikeTransfer));
    }

    #[test]
    fn caches_track_recomputation() {
        let (t, p) = setup(4, 3, 0.7, 1.0);
        let mut s = chain(&t, &p, 6);
        let mix = MoveMixture::default();
        for _ in 0..200 {
            sweep(&mut s, &p, &t, &mix, Target::Full);
            assert!(s.cache_error(&t) <= 1e-9);
            assert_eq!(s.observe(&t).mode_vertex, s.config.mode);
        }
        s.refresh(&t);
        assert!(s.cache_error(&t) <= 1e-15);
    }

    #[test]
    fn cutoff_is_never_exceeded() {
        let (t, p) = setup(3, 2, 2.0, 1.0);
        let mut s = chain(&t, &p, 7);
        let mix = MoveMixture::default();
        for _ in 0..500 {
            sweep(&mut s, &p, &t, &mix, Target::Full);
            assert!(observables::power_n(s.field()) <= p.mass_cap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn restriction_is_enforced() {
        let (t, p) = setup(4, 1, 0.0, 1.0);
        let c = 0.5 * p.mass_cap();
        let mut rng = stream_rng(8, 0);
        let f = condensed_init(&p, 0.7, 1, &mut rng).unwrap();
        assert!(ChainState::new(f.clone(), &p, &t, Restriction::Below(c), 8, 0).is_err());
        let mut s = ChainState::new(f, &p, &t, Restriction::CondensedAtLeast(c), 8, 0).unwrap();
        let mix = MoveMixture::default();
        for _ in 0..2000 {
            sweep(&mut s, &p, &t, &mix, Target::Full);
            assert!(s.observe(&t).largest >= c);
        }
    }

    #[test]
    fn adaptation_moves_the_scale_towards_target() {
        let (t, p) = setup(4, 2, 1.0, 1.0);
        let mut s = chain(&t, &p, 9);
        s.set_local_scale(20.0).unwrap();
        s.set_adapting(true);
        for _ in 0..20_000 {
            metropolis_step(&mut s, &p, &t, MoveKind::LocalGaussian);
        }
        assert!(s.local_scale() < 5.0);
        s.set_adapting(false);
        s.reset_counters();
        for _ in 0..20_000 {
            metropolis_step(&mut s, &p, &t, MoveKind::LocalGaussian);
        }
        let rate = s.counters().rate(MoveKind::LocalGaussian).unwrap();
        assert!((0.15..0.5).contains(&rate), "rate {rate}");
    }

    #[test]
    fn initializers_respect_the_cutoff() {
        let (_, p) = setup(4, 3, 1.0, 2.0);
        let mut rng = stream_rng(10, 0);
        for _ in 0..20 {
            assert!(observables::power_n(&gaussian_init(&p, &mut rng)) <= p.mass_cap());
            let f = condensed_init(&p, 0.8, 3, &mut rng).unwrap();
            assert!(observables::power_n(&f) <= p.mass_cap());
            assert!((f.as_slice()[3].norm_sqr() - 0.8 * p.mass_cap()).abs() < 1e-9);
        }
        assert!(condensed_init(&p, 1.5, 0, &mut rng).is_err());
    }

    #[test]
    fn mismatched_parameters_are_rejected() {
        let (t, p) = setup(4, 2, 1.0, 1.0);
        let f = ComplexField::zeros(16);
        let wrong_n = ThermoParams { n: 8, ..p };
        assert!(ChainState::new(f.clone(), &wrong_n, &t, Restriction::None, 0, 0).is_err());
        let wrong_h = ThermoParams { spacing: 1.0, ..p };
        assert!(ChainState::new(f.clone(), &wrong_h, &t, Restriction::None, 0, 0).is_err());
        let big = ComplexField::constant(16, Complex64::new(2.0, 0.0));
        assert!(ChainState::new(big, &p, &t, Restriction::None, 0, 0).is_err());
        assert!(MoveMixture { local: 0.5, phase: 0.2, transfer: 0.1 }.validate().is_err());
    }
}
