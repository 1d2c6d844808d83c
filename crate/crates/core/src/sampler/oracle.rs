//! Partition functions and moments by direct quadrature, for one vertex or two
//! vertices joined by at most one edge.
//!
//! Each amplitude is written in polar form, `d^2 f = (1/2) dr dθ` with
//! `r = |f|^2`. For two sites only the phase difference `φ` enters the
//! energy, and it is integrated with the periodic trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::analytic::ThermoParams;
use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::quadrature::{integrate, periodic_trapezoid};

const OUTER_TOL: f64 = 1e-11;
const INNER_TOL: f64 = 1e-12;
const ANGLE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    N,
    S4,
    H,
}

/// `log Z` and the exact expectations of the main observables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub log_z: f64,
    pub power: f64,
    pub quartic: f64,
    /// `E sum_E |f_x - f_y|^2`.
    pub gradient: f64,
    pub energy: f64,
}

impl Moments {
    pub fn get(&self, observable: Observable) -> f64 {
        match observable {
            Observable::N => self.power,
            Observable::S4 => self.quartic,
            Observable::H => self.energy,
        }
    }
}

enum Shape {
    One,
    Two { coupled: bool },
}

fn shape(params: &ThermoParams, topology: &GraphTopology) -> Result<Shape> {
    params.validate()?;
    if params.n != topology.n() {
        return Err(Error::SizeMismatch { expected: topology.n(), actual: params.n });
    }
    match (topology.n(), topology.edge_count()) {
        (1, _) => Ok(Shape::One),
        (2, e) if e <= 1 => Ok(Shape::Two { coupled: e == 1 }),
        (n, e) => Err(Error::Unsupported(format!(
            "quadrature oracle handles one vertex or two vertices with at most one edge, got n = {n} with {e} edges"
        ))),
    }
}

// Components: [Z, Z E N, Z E S4, Z E gradient], each scaled by e^{-shift}.
fn integrals(params: &ThermoParams, topology: &GraphTopology, reduced: bool) -> Result<([f64; 4], f64)> {
    let (beta, cutoff) = (params.beta, params.cutoff);
    match shape(params, topology)? {
        Shape::One => {
            let shift = beta * cutoff * cutoff;
            let v = integrate(
                |r| {
                    let w = (beta * (r * r - cutoff * cutoff)).exp();
                    [w, r * w, r * r * w, 0.0]
                },
                0.0,
                cutoff,
                OUTER_TOL,
            )?;
            Ok(([v[0] * PI, v[1] * PI, v[2] * PI, 0.0], shift))
        }
        Shape::Two { coupled } => {
            let coupled = coupled && !reduced;
            let stiffness = beta / topology.spacing().powi(2);
            let cap = 2.0 * cutoff;
            let shift = 0.5 * beta * cap * cap;
            let mut failure = None;
            let v = integrate(
                |rho1| {
                    let r1 = rho1 * rho1;
                    let top = (cap - r1).max(0.0).sqrt();
                    let inner = integrate(
                        |rho2| {
                            let r2 = rho2 * rho2;
                            let jac = 4.0 * rho1 * rho2;
                            let mut log_w = 0.5 * beta * (r1 * r1 + r2 * r2) - shift;
                            let (g0, g1) = if coupled {
                                log_w -= stiffness * (rho1 - rho2).powi(2);
                                angular(2.0 * stiffness * rho1 * rho2)
                            } else {
                                (1.0, 0.0)
                            };
                            let w = jac * log_w.exp();
                            let grad = if coupled {
                                (rho1 - rho2).powi(2) * g0 + 2.0 * rho1 * rho2 * g1
                            } else {
                                0.0
                            };
                            [w * g0, w * g0 * (r1 + r2), w * g0 * (r1 * r1 + r2 * r2), w * grad]
                        },
                        0.0,
                        top,
                        INNER_TOL,
                    );
                    inner.unwrap_or_else(|e| {
                        failure.get_or_insert(e);
                        [0.0; 4]
                    })
                },
                0.0,
                cap.sqrt(),
                OUTER_TOL,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            let v = v?;
            Ok((v.map(|x| x * PI * PI), shift))
        }
    }
}

const PI: f64 = std::f64::consts::PI;

/// Averages of `e^{-κ(1 - cos φ)}` and `(1 - cos φ) e^{-κ(1 - cos φ)}` over a period.
fn angular(kappa: f64) -> (f64, f64) {
    let v = periodic_trapezoid(
        |phi| {
            let gap = 1.0 - phi.cos();
            let w = (-kappa * gap).exp();
            [w, gap * w]
        },
        ANGLE_TOL,
    )
    .expect("smooth periodic integrand converges");
    (v[0] / (2.0 * PI), v[1] / (2.0 * PI))
}

/// `log Z` for `e^{-βH} 1{N <= Bn}`.
pub fn log_partition(params: &ThermoParams, topology: &GraphTopology) -> Result<f64> {
    let (v, shift) = integrals(params, topology, false)?;
    Ok(v[0].ln() + shift)
}

/// `log Z'` for `e^{βS4/n} 1{N <= Bn}`.
pub fn log_partition_reduced(params: &ThermoParams, topology: &GraphTopology) -> Result<f64> {
    let (v, shift) = integrals(params, topology, true)?;
    Ok(v[0].ln() + shift)
}

pub fn moments(params: &ThermoParams, topology: &GraphTopology) -> Result<Moments> {
    let (v, shift) = integrals(params, topology, false)?;
    let n = topology.n() as f64;
    let (power, quartic, gradient) = (v[1] / v[0], v[2] / v[0], v[3] / v[0]);
    Ok(Moments {
        log_z: v[0].ln() + shift,
        power,
        quartic,
        gradient,
        energy: 2.0 * gradient / (n * topology.spacing().powi(2)) - quartic / n,
    })
}

pub fn moment(params: &ThermoParams, topology: &GraphTopology, observable: Observable) -> Result<f64> {
    moments(params, topology).map(|m| m.get(observable))
}

/// Probability that `|f|^2` falls in each bin `[edges[k], edges[k+1])` for a
/// single vertex.
pub fn single_site_bins(params: &ThermoParams, edges: &[f64]) -> Result<Vec<f64>> {
    if params.n != 1 {
        return Err(Error::Unsupported("bin probabilities are for one vertex".into()));
    }
    let beta = params.beta;
    let c = params.cutoff;
    let weight = |a: f64, b: f64| integrate(|r| [(beta * (r * r - c * c)).exp()], a, b, OUTER_TOL).map(|v| v[0]);
    let total = weight(0.0, c)?;
    edges.windows(2).map(|w| weight(w[0], w[1]).map(|x| x / total)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_torus;
    use crate::numeric::ln_factorial;

    fn one(beta: f64, cutoff: f64) -> (GraphTopology, ThermoParams) {
        let t = GraphTopology::from_edges(1, 1.0, std::iter::empty()).unwrap();
        (t, ThermoParams::new(beta, cutoff, 1.0, 1).unwrap())
    }

    fn two(beta: f64, cutoff: f64) -> (GraphTopology, ThermoParams) {
        let t = make_torus(2, 1).unwrap();
        let p = ThermoParams::new(beta, cutoff, t.spacing(), 2).unwrap();
        (t, p)
    }

    fn ball(n: usize, cutoff: f64) -> f64 {
        let n_f = n as f64;
        n_f * (PI * cutoff * n_f).ln() - ln_factorial(n)
    }

    #[test]
    fn ball_volumes_at_infinite_temperature() {
        for cutoff in [0.5, 1.0, 3.0] {
            let (t, p) = one(0.0, cutoff);
            assert!((log_partition(&p, &t).unwrap() - ball(1, cutoff)).abs() < 1e-12);
            let (t, p) = two(0.0, cutoff);
            assert!((log_partition(&p, &t).unwrap() - ball(2, cutoff)).abs() < 1e-10);
            assert!((log_partition_reduced(&p, &t).unwrap() - ball(2, cutoff)).abs() < 1e-10);
        }
    }

    #[test]
    fn single_site_golden_value() {
        // π ∫_0^1 e^{r^2} dr
        let (t, p) = one(1.0, 1.0);
        assert!((log_partition(&p, &t).unwrap().exp() - 4.595_055_979_702).abs() < 1e-9);
    }

    #[test]
    fn uniform_moments() {
        let (t, p) = one(0.0, 1.0);
        let m = moments(&p, &t).unwrap();
        assert!((m.power - 0.5).abs() < 1e-12);
        assert!((m.quartic - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.energy + m.quartic).abs() < 1e-15);
        // uniform 4-ball of squared radius 2: E N = 4/3
        let (t, p) = two(0.0, 1.0);
        let m = moments(&p, &t).unwrap();
        assert!((m.power - 4.0 / 3.0).abs() < 1e-9);
        // E|f1 - f2|^2 = E N by phase symmetry
        assert!((m.gradient - m.power).abs() < 1e-9);
    }

    #[test]
    fn two_uncoupled_sites_factor_as_a_reduced_integral() {
        let t = GraphTopology::from_edges(2, 0.5, std::iter::empty()).unwrap();
        let p = ThermoParams::new(1.3, 1.0, 0.5, 2).unwrap();
        let (tc, pc) = two(1.3, 1.0);
        let free = log_partition(&p, &t).unwrap();
        assert!((free - log_partition_reduced(&pc, &tc).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn coupling_lowers_the_partition_function() {
        for beta in [0.5, 1.0, 2.5] {
            let (t, p) = two(beta, 1.0);
            let z = log_partition(&p, &t).unwrap();
            let zr = log_partition_reduced(&p, &t).unwrap();
            assert!(z < zr, "beta {beta}: {z} vs {zr}");
        }
    }

    #[test]
    fn energy_derivative_matches_log_z() {
        // d log Z / d beta = -E H
        let (t, p) = two(1.0, 1.0);
        let eps = 1e-4;
        let up = log_partition(&p.with_beta(1.0 + eps), &t).unwrap();
        let down = log_partition(&p.with_beta(1.0 - eps), &t).unwrap();
        let m = moments(&p, &t).unwrap();
        assert!(((up - down) / (2.0 * eps) + m.energy).abs() < 1e-6);
        let (t, p) = one(2.0, 1.0);
        let up = log_partition(&p.with_beta(2.0 + eps), &t).unwrap();
        let down = log_partition(&p.with_beta(2.0 - eps), &t).unwrap();
        assert!(((up - down) / (2.0 * eps) + moments(&p, &t).unwrap().energy).abs() < 1e-6);
    }

    #[test]
    fn bins_sum_to_one() {
        let (_, p) = one(1.0, 1.0);
        let probs = single_site_bins(&p, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(probs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn unsupported_graphs() {
        let t = make_torus(3, 1).unwrap();
        let p = ThermoParams::new(1.0, 1.0, t.spacing(), 3).unwrap();
        assert!(matches!(log_partition(&p, &t), Err(Error::Unsupported(_))));
    }
}
