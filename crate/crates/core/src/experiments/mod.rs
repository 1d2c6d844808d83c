//! Drivers that run the sampler and the integrator against the analytic
//! predictions and collect the results into reports.

pub mod breather;
pub mod gauss;
pub mod h1;
pub mod logz;
pub mod report;
pub mod scan;
pub mod verify;

pub use breather::{breather_persistence, mode_wandering, BreatherReport, EnsembleSettings};
pub use gauss::{gaussian_coordinate_test, GaussReport};
pub use h1::{h1_growth, H1Table};
pub use logz::{beta_ladder, estimate_logz_density, LogZReport};
pub use scan::{phase_scan, PhaseScanRow};
pub use verify::{run_verify, VerifyReport};

use rand::Rng;

use crate::analytic::{self, ThermoParams};
use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::observables::ComplexField;
use crate::sampler::{self, stream_rng, ChainRun, ChainState, Restriction, Schedule};
use crate::stats::{batch_means, Estimate};

/// Batch count for every error bar in the reports.
pub const BATCHES: usize = 25;

/// Salt separating initializer streams from chain streams.
const INIT_SALT: u64 = 0x1417_5eed_d15c_0de5;

/// Mean of a chain observable with a batch-means error bar.
pub fn estimate_series(samples: &[f64]) -> Result<Estimate> {
    batch_means(samples, BATCHES)
}

/// A seed for sub-run `index` that differs from `seed` and from every other index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (index.wrapping_add(1)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Starting field for a chain on stream `stream`: a spike carrying the
/// condensate fraction on supercritical couplings or when `restriction`
/// demands a condensate, i.i.d. Gaussians otherwise.
/// The draw is repeated until `restriction` admits it.
pub(crate) fn starting_field(
    params: &ThermoParams,
    restriction: Restriction,
    seed: u64,
    stream: u64,
) -> Result<ComplexField> {
    let mut rng = stream_rng(seed ^ INIT_SALT, stream);
    let condensed = analytic::free_energy_f(params).fraction;
    for _ in 0..10_000 {
        let field = match restriction {
            Restriction::CondensedAtLeast(c) => {
                let fraction = condensed.max((c / params.mass_cap() + 1.0) / 2.0).min(1.0);
                let vertex = rng.random_range(0..params.n);
                sampler::condensed_init(params, fraction, vertex, &mut rng)?
            }
            Restriction::None if condensed > 0.0 => sampler::condensed_init(params, condensed, rng.random_range(0..params.n), &mut rng)?,
            _ => sampler::gaussian_init(params, &mut rng),
        };
        let largest = field.masses().into_iter().fold(0.0, f64::max);
        let admitted = match restriction {
            Restriction::None => true,
            Restriction::CondensedAtLeast(c) => largest >= c,
            Restriction::Below(c) => largest < c,
        };
        if admitted {
            return Ok(field);
        }
    }
    Err(Error::Domain(format!("no starting field satisfies {restriction:?}")))
}

pub(crate) fn chain_state(
    params: &ThermoParams,
    topology: &GraphTopology,
    restriction: Restriction,
    seed: u64,
    stream: u64,
) -> Result<ChainState> {
    let init = starting_field(params, restriction, seed, stream)?;
    ChainState::new(init, params, topology, restriction, seed, stream)
}

/// One unrestricted chain from the default starting field.
pub fn sample_chain(params: &ThermoParams, topology: &GraphTopology, schedule: &Schedule) -> Result<ChainRun> {
    let state = chain_state(params, topology, Restriction::None, schedule.seed, 0)?;
    sampler::run_chain_with(state, params, topology, schedule, |_, _, _| {})
}

pub(crate) fn params_for(topology: &GraphTopology, beta: f64, cutoff: f64) -> Result<ThermoParams> {
    ThermoParams::new(beta, cutoff, topology.spacing(), topology.n())
}

/// `f(0), ..., f(count - 1)` in order, on the rayon pool when available.
pub(crate) fn fan_out<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}
