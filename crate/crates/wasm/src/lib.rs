//! Browser bindings: the analytic curves, a live Metropolis chain on a 2-D
//! torus, and a split-step trajectory started from a sample of that chain.
//!
//! Build with `wasm-pack build crates/wasm --target web --out-dir www/pkg`.

use dnls::analytic::{self, ThermoParams};
use dnls::dynamics::{LinearFlow, Workspace};
use dnls::sampler::{self, ChainState, MoveMixture, Restriction, Target};
use dnls::{make_torus, ComplexField, GraphTopology};
use num_complex::Complex64;
use rand::Rng;
use wasm_bindgen::prelude::*;

/// Largest torus side the page allows.
pub const MAX_SIDE: usize = 64;

#[wasm_bindgen]
pub fn theta_c() -> f64 {
    analytic::solve_theta_c()
}

/// `[beta, F, a/B]` triples on `steps + 1` evenly spaced betas in `[0, beta_max]`.
pub fn curve_points(cutoff: f64, beta_max: f64, steps: usize) -> Result<Vec<f64>, String> {
    if steps == 0 || !(beta_max.is_finite() && beta_max > 0.0) {
        return Err("need steps > 0 and beta_max > 0".into());
    }
    let grid: Vec<f64> = (0..=steps).map(|k| beta_max * k as f64 / steps as f64).collect();
    let rows = analytic::emit_curves(cutoff, &grid).map_err(|e| e.to_string())?;
    Ok(rows.iter().flat_map(|r| [r.beta, r.point.free_energy, r.point.fraction]).collect())
}

#[wasm_bindgen]
pub fn free_energy_curve(cutoff: f64, beta_max: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    curve_points(cutoff, beta_max, steps).map_err(|e| JsError::new(&e))
}

fn square_torus(side: usize) -> Result<GraphTopology, String> {
    if !(2..=MAX_SIDE).contains(&side) {
        return Err(format!("side must lie in 2..={MAX_SIDE}"));
    }
    make_torus(side, 2).map_err(|e| e.to_string())
}

/// A Metropolis chain whose coupling can be changed while it runs.
#[wasm_bindgen]
pub struct MetropolisDemo {
    topology: GraphTopology,
    params: ThermoParams,
    state: ChainState,
}

impl MetropolisDemo {
    pub fn try_new(side: usize, theta: f64, cutoff: f64, seed: u64) -> Result<Self, String> {
        let topology = square_torus(side)?;
        let params = ThermoParams::new(theta / (cutoff * cutoff), cutoff, topology.spacing(), topology.n())
            .map_err(|e| e.to_string())?;
        let mut rng = sampler::stream_rng(seed, 1);
        let init = sampler::gaussian_init(&params, &mut rng);
        let state = ChainState::new(init, &params, &topology, Restriction::None, seed, 0).map_err(|e| e.to_string())?;
        Ok(Self { topology, params, state })
    }

    pub fn try_set_theta(&mut self, theta: f64) -> Result<(), String> {
        let beta = theta / (self.params.cutoff * self.params.cutoff);
        let params = self.params.with_beta(beta);
        params.validate().map_err(|e| e.to_string())?;
        self.params = params;
        Ok(())
    }

    pub fn field(&self) -> &ComplexField {
        self.state.field()
    }
}

#[wasm_bindgen]
impl MetropolisDemo {
    /// A chain on the `side x side` torus at coupling `theta = beta B^2`.
    #[wasm_bindgen(constructor)]
    pub fn new(side: usize, theta: f64, cutoff: f64, seed: u64) -> Result<MetropolisDemo, JsError> {
        Self::try_new(side, theta, cutoff, seed).map_err(|e| JsError::new(&e))
    }

    pub fn set_theta(&mut self, theta: f64) -> Result<(), JsError> {
        self.try_set_theta(theta).map_err(|e| JsError::new(&e))
    }

    pub fn sweep(&mut self, count: u32) {
        for _ in 0..count {
            sampler::sweep(&mut self.state, &self.params, &self.topology, &MoveMixture::default(), Target::Full);
        }
    }

    /// `|f_x|^2 / B` in row-major order.
    pub fn masses(&self) -> Vec<f64> {
        self.state.field().masses().into_iter().map(|m| m / self.params.cutoff).collect()
    }

    pub fn mass_fraction(&self) -> f64 {
        self.state.observe(&self.topology).mass_fraction
    }

    /// Analytic `a/B` at the current coupling.
    pub fn fraction_exact(&self) -> f64 {
        analytic::free_energy_f(&self.params).fraction
    }

    pub fn energy_density(&self) -> f64 {
        self.state.energy(&self.topology) / self.topology.n() as f64
    }

    pub fn theta(&self) -> f64 {
        self.params.theta()
    }
}

fn rotate(amps: &mut [Complex64], tau: f64) {
    for z in amps {
        let (s, c) = (z.norm_sqr() * tau).sin_cos();
        *z *= Complex64::new(c, s);
    }
}

/// Split-step evolution of a field on a square torus.
#[wasm_bindgen]
pub struct BreatherDemo {
    topology: GraphTopology,
    flow: LinearFlow,
    amps: Vec<Complex64>,
    scratch: Workspace,
    cutoff: f64,
    time: f64,
    power0: f64,
    start_mode: usize,
    mode_changes: u32,
    last_mode: usize,
}

impl BreatherDemo {
    pub fn try_new(side: usize, theta: f64, cutoff: f64, seed: u64, sweeps: u32) -> Result<Self, String> {
        let mut chain = MetropolisDemo::try_new(side, theta, cutoff, seed)?;
        let fraction = chain.fraction_exact();
        if fraction > 0.0 {
            // start the chain on the condensed branch so it need not nucleate
            let mut rng = sampler::stream_rng(seed, 2);
            let vertex = rng.random_range(0..chain.topology.n());
            let init = sampler::condensed_init(&chain.params, fraction, vertex, &mut rng).map_err(|e| e.to_string())?;
            chain.state = ChainState::new(init, &chain.params, &chain.topology, Restriction::None, seed, 0)
                .map_err(|e| e.to_string())?;
        }
        chain.sweep(sweeps);
        Self::from_field(chain.topology, chain.state.field().clone(), cutoff)
    }

    pub fn from_field(topology: GraphTopology, field: ComplexField, cutoff: f64) -> Result<Self, String> {
        let flow = LinearFlow::for_topology(&topology).map_err(|e| e.to_string())?;
        let record = dnls::observables::observe(&field, &topology).map_err(|e| e.to_string())?;
        Ok(Self {
            topology,
            flow,
            amps: field.into_vec(),
            scratch: Workspace::default(),
            cutoff,
            time: 0.0,
            power0: record.power,
            start_mode: record.mode_vertex,
            mode_changes: 0,
            last_mode: record.mode_vertex,
        })
    }

    fn mode(&self) -> usize {
        let mut best = 0;
        for (x, z) in self.amps.iter().enumerate() {
            if z.norm_sqr() > self.amps[best].norm_sqr() {
                best = x;
            }
        }
        best
    }

    fn power(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }
}

#[wasm_bindgen]
impl BreatherDemo {
    /// Thermalizes a chain for `sweeps` sweeps and takes its field as initial data.
    #[wasm_bindgen(constructor)]
    pub fn new(side: usize, theta: f64, cutoff: f64, seed: u64, sweeps: u32) -> Result<BreatherDemo, JsError> {
        Self::try_new(side, theta, cutoff, seed, sweeps).map_err(|e| JsError::new(&e))
    }

    /// `steps` Strang steps of size `dt`.
    pub fn advance(&mut self, steps: u32, dt: f64) {
        if steps == 0 || !(dt.is_finite() && dt > 0.0) {
            return;
        }
        let propagator = self.flow.propagator(dt);
        rotate(&mut self.amps, 0.5 * dt);
        for k in 0..steps {
            propagator.apply(&mut self.amps, &mut self.scratch);
            rotate(&mut self.amps, if k + 1 == steps { 0.5 * dt } else { dt });
        }
        self.time += steps as f64 * dt;
        let mode = self.mode();
        if mode != self.last_mode {
            self.mode_changes += 1;
            self.last_mode = mode;
        }
    }

    pub fn masses(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr() / self.cutoff).collect()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn mode_vertex(&self) -> usize {
        self.last_mode
    }

    pub fn start_vertex(&self) -> usize {
        self.start_mode
    }

    /// Mode changes seen at frame boundaries.
    pub fn mode_changes(&self) -> u32 {
        self.mode_changes
    }

    pub fn mass_fraction(&self) -> f64 {
        self.amps[self.mode()].norm_sqr() / self.power()
    }

    /// `|N(t)/N(0) - 1|`.
    pub fn power_drift(&self) -> f64 {
        (self.power() / self.power0 - 1.0).abs()
    }

    pub fn side(&self) -> usize {
        self.topology.torus().map_or(0, |s| s.side)
    }
}
