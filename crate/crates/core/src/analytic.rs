//! Closed-form thermodynamics of the focusing cubic model.
//!
//! Everything here is a pure function of the coupling `theta = beta * B^2`
//! (and of `B` for dimensional quantities). The critical coupling is the
//! unique zero of [`m_of_theta`] on `[2, 3]`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::format_significant;

/// Absolute tolerance of the critical-coupling bisection.
pub const ROOT_TOLERANCE: f64 = 1e-10;

/// Radicands of `sqrt(1 - 2/theta)` above `-RADICAND_SLACK` are clamped to zero.
const RADICAND_SLACK: f64 = 1e-14;

/// Inverse temperature, mass-density cutoff, lattice spacing and vertex count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoParams {
    pub beta: f64,
    pub cutoff: f64,
    pub spacing: f64,
    pub n: usize,
}

impl ThermoParams {
    pub fn new(beta: f64, cutoff: f64, spacing: f64, n: usize) -> Result<Self> {
        let params = Self { beta, cutoff, spacing, n };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::param("beta", format!("must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(Error::param("B", format!("must be finite and > 0, got {}", self.cutoff)));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::param("h", format!("must be finite and > 0, got {}", self.spacing)));
        }
        if self.n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        Ok(())
    }

    /// The dimensionless coupling `beta * B^2`.
    pub fn theta(&self) -> f64 {
        self.beta * self.cutoff * self.cutoff
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    /// The total mass allowed by the cutoff, `B * n`.
    pub fn mass_cap(&self) -> f64 {
        self.cutoff * self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Subcritical,
    Critical,
    Supercritical,
}

impl Branch {
    pub fn of(theta: f64) -> Branch {
        Self::relative_to(theta, solve_theta_c())
    }

    pub fn relative_to(theta: f64, theta_c: f64) -> Branch {
        if (theta - theta_c).abs() <= ROOT_TOLERANCE {
            Branch::Critical
        } else if theta < theta_c {
            Branch::Subcritical
        } else {
            Branch::Supercritical
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Subcritical => "subcritical",
            Branch::Critical => "critical",
            Branch::Supercritical => "supercritical",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Free energy density, condensate density and branch at one `(beta, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPoint {
    pub theta: f64,
    pub free_energy: f64,
    /// Condensate mass density `a`.
    pub condensate: f64,
    /// `a / B`.
    pub fraction: f64,
    pub branch: Branch,
}

fn sqrt_term(theta: f64) -> Result<f64> {
    if !(theta >= 2.0 - 2.0 * RADICAND_SLACK) || !theta.is_finite() {
        return Err(Error::Domain(format!("theta must be >= 2, got {theta}")));
    }
    let radicand = 1.0 - 2.0 / theta;
    if radicand < -RADICAND_SLACK {
        return Err(Error::Domain(format!("theta must be >= 2, got {theta}")));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// `m(theta) = theta/2 - 1/2 + (theta/2) s + ln(1/2 - s/2)` with `s = sqrt(1 - 2/theta)`.
pub fn m_of_theta(theta: f64) -> Result<f64> {
    let s = sqrt_term(theta)?;
    // 1/2 - s/2 == (1/theta) / (1 + s), without the cancellation at large theta.
    let tail = (1.0 / theta) / (1.0 + s);
    Ok(0.5 * theta - 0.5 + 0.5 * theta * s + tail.ln())
}

/// The unique zero of [`m_of_theta`], by bisection on `[2, 3]`.
pub fn solve_theta_c() -> f64 {
    let (mut lo, mut hi) = (2.0_f64, 3.0_f64);
    while hi - lo > ROOT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if m_of_theta(mid).expect("bracket lies in the domain") < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `f_theta(x) = theta x^2 + ln(1 - x)` on `[0, 1)`.
pub fn f_theta(theta: f64, x: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain(format!("x must lie in [0, 1), got {x}")));
    }
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!("theta must be >= 0, got {theta}")));
    }
    Ok(theta * x * x + (-x).ln_1p())
}

/// The nonzero maximizer `1/2 + sqrt(1 - 2/theta)/2` of `f_theta`; `1/2` at `theta = 2`.
pub fn x_star(theta: f64) -> Result<f64> {
    Ok(0.5 + 0.5 * sqrt_term(theta)?)
}

/// Condensate density `a = B x*(beta B^2)`. Only physical above the critical coupling;
/// below it the formula value is returned for diagnostics (see [`Branch::of`]).
pub fn condensate_a(params: &ThermoParams) -> Result<f64> {
    Ok(params.cutoff * x_star(params.theta())?)
}

/// `L(a, b) = beta a^2 + ln(b - a) + ln(pi) + 1`.
pub fn l_of_ab(params: &ThermoParams, a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0) || !(a < b) {
        return Err(Error::Domain(format!("need 0 <= a < b, got a = {a}, b = {b}")));
    }
    Ok(params.beta * a * a + (b - a).ln() + PI.ln() + 1.0)
}

/// `ln(B pi e)`, the free energy density of the uncondensed phase.
pub fn log_ball_density(cutoff: f64) -> f64 {
    (cutoff * PI).ln() + 1.0
}

pub fn free_energy_f(params: &ThermoParams) -> AnalyticPoint {
    free_energy_with(params.beta, params.cutoff, solve_theta_c())
}

fn free_energy_with(beta: f64, cutoff: f64, theta_c: f64) -> AnalyticPoint {
    let theta = beta * cutoff * cutoff;
    let branch = Branch::relative_to(theta, theta_c);
    let base = log_ball_density(cutoff);
    match branch {
        Branch::Subcritical => AnalyticPoint { theta, free_energy: base, condensate: 0.0, fraction: 0.0, branch },
        Branch::Critical | Branch::Supercritical => {
            let fraction = x_star(theta.max(theta_c)).expect("theta_c > 2");
            let free_energy = if branch == Branch::Critical {
                base
            } else {
                base + m_of_theta(theta).expect("theta > theta_c > 2")
            };
            AnalyticPoint { theta, free_energy, condensate: cutoff * fraction, fraction, branch }
        }
    }
}

/// One row of the free-energy / condensate-fraction curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub beta: f64,
    pub cutoff: f64,
    pub point: AnalyticPoint,
}

/// Evaluates [`free_energy_f`] along an ascending grid of inverse temperatures.
///
/// At exactly the critical coupling the condensed maximizer is reported; the
/// left limit of the fraction there is zero.
pub fn emit_curves(cutoff: f64, beta_grid: &[f64]) -> Result<Vec<CurveRow>> {
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(Error::param("B", format!("must be finite and > 0, got {cutoff}")));
    }
    if beta_grid.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::param("beta", "grid values must be finite and >= 0"));
    }
    if beta_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("beta", "grid must be sorted ascending"));
    }
    let theta_c = solve_theta_c();
    Ok(beta_grid
        .iter()
        .map(|&beta| CurveRow { beta, cutoff, point: free_energy_with(beta, cutoff, theta_c) })
        .collect())
}

pub const CURVE_HEADER: &str = "beta,B,theta,F,a,fraction,branch";

/// CSV with six significant digits per number.
pub fn curves_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for row in rows {
        let p = &row.point;
        let cells = [row.beta, row.cutoff, p.theta, p.free_energy, p.condensate, p.fraction]
            .map(|v| format_significant(v, 6));
        out.push_str(&cells.join(","));
        out.push(',');
        out.push_str(p.branch.as_str());
        out.push('\n');
    }
    out
}
