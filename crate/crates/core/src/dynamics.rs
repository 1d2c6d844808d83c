//! Split-step integration of `i df/dt = -Δf - |f|^2 f`.
//!
//! Each Strang step is a half-step of the nonlinear phase rotation
//! `f_x <- f_x e^{i|f_x|^2 dt/2}`, an exact linear step `e^{iΔ dt}`, and
//! another nonlinear half-step. Both substeps are exact flows, so `N` is
//! conserved to rounding.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphTopology, TorusShape};
use crate::observables::{self, ComplexField, ObservableRecord};

/// Largest graph handled by the dense eigensolver.
pub const DENSE_SPECTRAL_CAP: usize = 4096;

/// Eigenpairs of the graph Laplacian, `h^-2` included.
#[derive(Debug, Clone)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    eigenvectors: DMatrix<f64>,
}

impl SpectralData {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }
}

fn laplacian_matrix(topology: &GraphTopology) -> DMatrix<f64> {
    let n = topology.n();
    let inv_h2 = topology.spacing().powi(-2);
    let mut m = DMatrix::zeros(n, n);
    for &(u, v) in topology.edges() {
        let (u, v) = (u as usize, v as usize);
        m[(u, v)] += inv_h2;
        m[(v, u)] += inv_h2;
        m[(u, u)] -= inv_h2;
        m[(v, v)] -= inv_h2;
    }
    m
}

fn eigen(matrix: DMatrix<f64>) -> SpectralData {
    let eig = SymmetricEigen::new(matrix);
    // ascending order keeps the output independent of the solver's ordering
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    SpectralData { eigenvalues, eigenvectors }
}

pub fn build_spectral(topology: &GraphTopology) -> Result<SpectralData> {
    build_spectral_capped(topology, DENSE_SPECTRAL_CAP)
}

pub fn build_spectral_capped(topology: &GraphTopology, cap: usize) -> Result<SpectralData> {
    if topology.n() > cap {
        return Err(Error::SizeCap { requested: topology.n() as u128, cap });
    }
    Ok(eigen(laplacian_matrix(topology)))
}

/// How the linear substep is computed.
#[derive(Debug, Clone)]
pub enum LinearFlow {
    /// Through a full eigendecomposition; any graph up to the dense cap.
    Dense(SpectralData),
    /// Axis by axis on a torus, where the Laplacian is a sum of commuting
    /// one-dimensional circulant Laplacians. `symbol[q]` is the eigenvalue of
    /// the Fourier mode `q` on one axis.
    Torus { shape: TorusShape, symbol: Vec<f64> },
}

impl LinearFlow {
    /// The separable flow on tori, the dense one otherwise.
    pub fn for_topology(topology: &GraphTopology) -> Result<Self> {
        match topology.torus() {
            Some(shape) => Ok(Self::torus(shape, topology.spacing())),
            None => Self::dense(topology),
        }
    }

    pub fn dense(topology: &GraphTopology) -> Result<Self> {
        build_spectral(topology).map(LinearFlow::Dense)
    }

    fn torus(shape: TorusShape, spacing: f64) -> Self {
        let line = crate::graph::make_torus(shape.side, 1).expect("a side accepted once is accepted again");
        let line = GraphTopology::from_edges(shape.side, spacing, line.edges().iter().map(|&(u, v)| (u as usize, v as usize)))
            .expect("edges of a valid cycle");
        let row = laplacian_matrix(&line).row(0).transpose();
        let side = shape.side as f64;
        let symbol = (0..shape.side)
            .map(|q| {
                (0..shape.side).map(|k| row[k] * (2.0 * std::f64::consts::PI * (q * k) as f64 / side).cos()).sum()
            })
            .collect();
        LinearFlow::Torus { shape, symbol }
    }

    pub fn n(&self) -> usize {
        match self {
            LinearFlow::Dense(s) => s.n(),
            LinearFlow::Torus { shape, .. } => shape.side.pow(shape.dim as u32),
        }
    }

    /// The unitary `e^{iΔ dt}` ready to apply.
    pub fn propagator(&self, dt: f64) -> Propagator<'_> {
        match self {
            LinearFlow::Dense(s) => Propagator::Dense {
                spectral: s,
                phases: s.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, l * dt)).collect(),
            },
            LinearFlow::Torus { shape, symbol } => {
                let side = shape.side;
                let half = side / 2;
                let phases: Vec<Complex64> = symbol.iter().map(|&l| Complex64::from_polar(1.0, l * dt)).collect();
                let mut coeffs: Vec<Complex64> = (0..=half)
                    .map(|m| {
                        let sum: Complex64 = phases
                            .iter()
                            .enumerate()
                            .map(|(q, &z)| z * (2.0 * std::f64::consts::PI * (q * m) as f64 / side as f64).cos())
                            .sum();
                        sum / side as f64
                    })
                    .collect();
                let tail = tune_unitary(&mut coeffs, side);
                Propagator::Torus { shape: *shape, coeffs, tail }
            }
        }
    }
}

pub enum Propagator<'a> {
    Dense { spectral: &'a SpectralData, phases: Vec<Complex64> },
    /// A symmetric circulant applied along every axis, stored as
    /// `coeffs[m]` for offsets `m <= side/2`. The diagonal is
    /// `coeffs[0] + tail`, with `tail` far below the rounding of `coeffs[0]`.
    Torus { shape: TorusShape, coeffs: Vec<Complex64>, tail: Complex64 },
}

impl Propagator<'_> {
    pub fn apply(&self, f: &mut [Complex64], scratch: &mut Workspace) {
        match self {
            Propagator::Dense { spectral, phases } => {
                let v = &spectral.eigenvectors;
                let n = f.len();
                let scratch = &mut scratch.dense;
                scratch.clear();
                scratch.extend((0..n).map(|k| {
                    let col = v.column(k);
                    let c: Complex64 = col.iter().zip(f.iter()).map(|(&a, &z)| z * a).sum();
                    c * phases[k]
                }));
                f.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for (k, &c) in scratch.iter().enumerate() {
                    for (z, &a) in f.iter_mut().zip(v.column(k).iter()) {
                        *z += c * a;
                    }
                }
            }
            Propagator::Torus { shape, coeffs, tail } => torus_apply(shape, coeffs, *tail, f, &mut scratch.torus),
        }
    }
}

/// Reusable buffers for [`Propagator::apply`].
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    dense: Vec<Complex64>,
    torus: [Vec<f64>; 6],
}

// The field is split into real and imaginary planes. Each pass applies the
// circulant along the outermost axis, where the other coordinates run
// contiguously, and writes the result with that axis moved innermost. After
// `dim` passes the axes are back in order.
fn torus_apply(shape: &TorusShape, coeffs: &[Complex64], tail: Complex64, f: &mut [Complex64], buf: &mut [Vec<f64>; 6]) {
    let (side, n) = (shape.side, f.len());
    let rest = n / side;
    for v in buf.iter_mut() {
        v.resize(n, 0.0);
    }
    let [src_re, src_im, dst_re, dst_im, sum_re, sum_im] = buf;
    for (i, z) in f.iter().enumerate() {
        src_re[i] = z.re;
        src_im[i] = z.im;
    }
    for _ in 0..shape.dim {
        for r in 0..side {
            let (out_re, out_im) = (&mut dst_re[r * rest..(r + 1) * rest], &mut dst_im[r * rest..(r + 1) * rest]);
            for (i, (m, a)) in coeffs.iter().enumerate().skip(1).enumerate() {
                let (up, down) = ((r + m) % side, (r + side - m) % side);
                let (s_re, s_im) = (&mut sum_re[..rest], &mut sum_im[..rest]);
                if up == down {
                    s_re.copy_from_slice(&src_re[up * rest..(up + 1) * rest]);
                    s_im.copy_from_slice(&src_im[up * rest..(up + 1) * rest]);
                } else {
                    let (ur, dr) = (&src_re[up * rest..(up + 1) * rest], &src_re[down * rest..(down + 1) * rest]);
                    let (ui, di) = (&src_im[up * rest..(up + 1) * rest], &src_im[down * rest..(down + 1) * rest]);
                    for j in 0..rest {
                        s_re[j] = ur[j] + dr[j];
                        s_im[j] = ui[j] + di[j];
                    }
                }
                if i == 0 {
                    for j in 0..rest {
                        out_re[j] = a.re * s_re[j] - a.im * s_im[j];
                        out_im[j] = a.re * s_im[j] + a.im * s_re[j];
                    }
                } else {
                    for j in 0..rest {
                        out_re[j] += a.re * s_re[j] - a.im * s_im[j];
                        out_im[j] += a.re * s_im[j] + a.im * s_re[j];
                    }
                }
            }
            // The diagonal goes last. The exact rounding errors of `a.re * x`
            // and of the final sum are carried along with the tail, so the
            // tail survives the one remaining rounding on average.
            let a = coeffs[0];
            let split = Split::new(a.re);
            let (xr, xi) = (&src_re[r * rest..(r + 1) * rest], &src_im[r * rest..(r + 1) * rest]);
            for j in 0..rest {
                let (p_re, e_re) = split.two_prod(xr[j]);
                let (p_im, e_im) = split.two_prod(xi[j]);
                let (g_re, t_re) = two_sum(p_re, out_re[j] - a.im * xi[j]);
                let (g_im, t_im) = two_sum(p_im, out_im[j] + a.im * xr[j]);
                out_re[j] = g_re + ((t_re + e_re) + (tail.re * xr[j] - tail.im * xi[j]));
                out_im[j] = g_im + ((t_im + e_im) + (tail.re * xi[j] + tail.im * xr[j]));
            }
        }
        // move the axis just processed innermost
        for r in 0..side {
            for j in 0..rest {
                src_re[j * side + r] = dst_re[r * rest + j];
                src_im[j * side + r] = dst_im[r * rest + j];
            }
        }
    }
    for (i, z) in f.iter_mut().enumerate() {
        *z = Complex64::new(src_re[i], src_im[i]);
    }
}

/// A constant cut into two 26-bit halves for error-free products.
#[derive(Clone, Copy)]
struct Split {
    value: f64,
    hi: f64,
    lo: f64,
}

impl Split {
    fn new(value: f64) -> Self {
        let (hi, lo) = halves(value);
        Split { value, hi, lo }
    }

    /// `value * x` and its exact rounding error.
    #[inline(always)]
    fn two_prod(&self, x: f64) -> (f64, f64) {
        let p = self.value * x;
        let (xh, xl) = halves(x);
        (p, ((self.hi * xh - p) + self.hi * xl + self.lo * xh) + self.lo * xl)
    }
}

#[inline(always)]
fn halves(x: f64) -> (f64, f64) {
    let t = 134_217_729.0 * x;
    let hi = t - (t - x);
    (hi, x - hi)
}

#[inline(always)]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    (s, (a - (s - v)) + (b - v))
}

/// Double-word accumulator: `hi + lo` carries about 106 bits.
#[derive(Clone, Copy, Default)]
struct Wide {
    hi: f64,
    lo: f64,
}

impl Wide {
    /// Adds the exact product `a * b`.
    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let p_err = a.mul_add(b, -p);
        let s = self.hi + p;
        let v = s - self.hi;
        let s_err = (self.hi - (s - v)) + (p - v);
        self.hi = s;
        self.lo += s_err + p_err;
    }
}

/// Nudges the half row `coeffs` of a symmetric circulant by whole ulps until
/// its unitarity defect `P^* P - I`, evaluated with error-free products, is as
/// small as the coefficient grid allows. Returns a sub-ulp tail for
/// `coeffs[0]` that cancels the remaining diagonal defect.
///
/// A fixed `P` whose squared singular values sit a few ulps off 1 is applied
/// every step, and rounding the coefficients alone leaves a defect near
/// `1e-16`. That turns into a steady drift of `N` over millions of steps.
fn tune_unitary(coeffs: &mut [Complex64], side: usize) -> Complex64 {
    let half = coeffs.len() - 1;
    let fold = |m: usize| {
        let m = m % side;
        m.min(side - m)
    };
    // P^* P is a real symmetric circulant; entry k of its first row, minus δ_k0
    let defect = |c: &[Complex64]| -> Vec<f64> {
        (0..=half)
            .map(|k| {
                let mut acc = Wide::default();
                for l in 0..side {
                    let (a, b) = (c[fold(l)], c[fold(k + side - l)]);
                    acc.add_product(a.re, b.re);
                    acc.add_product(a.im, b.im);
                }
                let diag = if k == 0 { 1.0 } else { 0.0 };
                (acc.hi - diag) + acc.lo
            })
            .collect()
    };
    let norm = |e: &[f64]| e.iter().map(|x| x * x).sum::<f64>();
    let mut current = defect(coeffs);
    for _ in 0..64 {
        let mut moved = false;
        for m in 0..=half {
            for part in 0..2 {
                let value = if part == 0 { coeffs[m].re } else { coeffs[m].im };
                let ulp = value.abs().next_up() - value.abs();
                // d E_k / d value, up to the grid step
                let grad: Vec<f64> = (0..=half)
                    .map(|k| {
                        (0..side)
                            .filter(|&l| fold(l) == m)
                            .map(|l| {
                                let b = coeffs[fold(k + side - l)];
                                2.0 * if part == 0 { b.re } else { b.im }
                            })
                            .sum::<f64>()
                            * ulp
                    })
                    .collect();
                let gg = norm(&grad);
                if gg == 0.0 {
                    continue;
                }
                let steps = -(grad.iter().zip(&current).map(|(g, e)| g * e).sum::<f64>() / gg).round();
                if steps == 0.0 || steps.abs() > 1e6 {
                    continue;
                }
                let mut trial = coeffs.to_vec();
                let slot = if part == 0 { &mut trial[m].re } else { &mut trial[m].im };
                *slot += steps * ulp;
                let next = defect(&trial);
                if norm(&next) < norm(&current) {
                    coeffs.copy_from_slice(&trial);
                    current = next;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    // what is left on the diagonal of P^* P goes into a tail on coeffs[0]
    let p0 = coeffs[0];
    -p0 * (current[0] / (2.0 * p0.norm_sqr()))
}

#[inline]
fn nonlinear(f: &mut [Complex64], tau: f64) {
    for z in f.iter_mut() {
        let (s, c) = (z.norm_sqr() * tau).sin_cos();
        *z *= Complex64::new(c, s);
    }
}

/// One Strang step of size `dt` (negative steps run backwards).
pub fn step_strang(field: &ComplexField, dt: f64, flow: &LinearFlow) -> Result<ComplexField> {
    if field.len() != flow.n() {
        return Err(Error::SizeMismatch { expected: flow.n(), actual: field.len() });
    }
    if !dt.is_finite() {
        return Err(Error::param("dt", "must be finite"));
    }
    let mut amps = field.clone().into_vec();
    let mut scratch = Workspace::default();
    nonlinear(&mut amps, 0.5 * dt);
    flow.propagator(dt).apply(&mut amps, &mut scratch);
    nonlinear(&mut amps, 0.5 * dt);
    ComplexField::new(amps)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub records: Vec<ObservableRecord>,
    pub mode_path: Vec<usize>,
    /// Number of leading records that share the first mode vertex.
    pub persistence: usize,
    pub dt: f64,
    pub steps: u64,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn mode_changes(&self) -> usize {
        self.mode_path.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Whether the mode never moved.
    pub fn mode_fixed(&self) -> bool {
        self.persistence == self.mode_path.len()
    }

    /// `max_t |N(t)/N(0) - 1|`.
    pub fn power_drift(&self) -> f64 {
        let n0 = self.records[0].power;
        self.records.iter().map(|r| (r.power / n0 - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max_t |H(t) - H(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.records[0].energy;
        self.records.iter().map(|r| (r.energy - h0).abs()).fold(0.0, f64::max)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("t,H,N,S4,M1,M2,mode_vertex,mass_fraction\n");
        for (t, r) in self.times.iter().zip(&self.records) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                t, r.energy, r.power, r.quartic, r.largest, r.second_largest, r.mode_vertex, r.mass_fraction
            ));
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "dt": self.dt,
            "steps": self.steps,
            "records": self.records.len(),
            "persistence": self.persistence,
            "mode_changes": self.mode_changes(),
            "power_drift": self.power_drift(),
            "energy_drift": self.energy_drift(),
            "warnings": self.warnings,
        }))?)
    }
}

/// Options for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    /// Record observables every this many steps (and at t = 0).
    pub record_every: u64,
    /// Mass density `B` used for the blow-up threshold `|f_x|^2 > 10^6 B n` and
    /// the cutoff check; defaults to `N(0)/n`.
    pub cutoff: Option<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { record_every: 1, cutoff: None }
    }
}

/// Integrates to time `horizon` with `ceil(horizon / dt)` equal steps.
pub fn integrate(
    field0: &ComplexField,
    horizon: f64,
    dt: f64,
    flow: &LinearFlow,
    topology: &GraphTopology,
    options: IntegrateOptions,
) -> Result<Trajectory> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::param("T", "must be finite and positive"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", "must be finite and positive"));
    }
    if options.record_every == 0 {
        return Err(Error::param("record_every", "must be positive"));
    }
    if flow.n() != topology.n() || field0.len() != topology.n() {
        return Err(Error::SizeMismatch { expected: topology.n(), actual: field0.len() });
    }
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as u64;
    let dt = horizon / steps as f64;
    let n = topology.n() as f64;
    let first = observables::observe(field0, topology)?;
    let mut warnings = Vec::new();
    let cutoff = options.cutoff.unwrap_or(first.power / n);
    if first.power > cutoff * n * (1.0 + 1e-12) {
        warnings.push(format!("initial N = {} exceeds B n = {}", first.power, cutoff * n));
    }
    let blowup = 1e6 * cutoff.max(first.power / n) * n;
    let propagator = flow.propagator(dt);
    let mut amps = field0.clone().into_vec();
    let mut scratch = Workspace::default();
    let mut times = vec![0.0];
    let mut records = vec![first];
    let mut done = 0u64;
    while done < steps {
        let chunk = options.record_every.min(steps - done);
        // consecutive nonlinear half-steps merge exactly into full ones
        nonlinear(&mut amps, 0.5 * dt);
        for k in 0..chunk {
            propagator.apply(&mut amps, &mut scratch);
            nonlinear(&mut amps, if k + 1 == chunk { 0.5 * dt } else { dt });
        }
        done += chunk;
        let t = done as f64 * dt;
        if let Some(x) = amps.iter().position(|z| !(z.norm_sqr() <= blowup)) {
            return Err(Error::BlowUp {
                time: t,
                detail: format!("|f_{x}|^2 = {} (threshold {blowup})", amps[x].norm_sqr()),
            });
        }
        let field = ComplexField::new(amps)?;
        records.push(observables::observe(&field, topology)?);
        times.push(t);
        amps = field.into_vec();
    }
    let mode_path: Vec<usize> = records.iter().map(|r| r.mode_vertex).collect();
    let persistence = mode_path.iter().take_while(|&&m| m == mode_path[0]).count();
    Ok(Trajectory { times, records, mode_path, persistence, dt, steps, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_torus;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(n: usize, seed: u64, scale: f64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::new((0..n).map(|_| Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))).collect())
            .unwrap()
    }

    #[test]
    fn four_cycle_spectrum() {
        let t = GraphTopology::from_edges(4, 1.0, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let s = build_spectral(&t).unwrap();
        let want = [-4.0, -2.0, -2.0, 0.0];
        for (a, b) in s.eigenvalues().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        // the zero mode is constant
        let v = s.eigenvectors().column(3);
        assert!(v.iter().all(|x| (x.abs() - 0.5).abs() < 1e-12));
    }

    #[test]
    fn spectral_reconstruction_and_orthonormality() {
        let t = make_torus(4, 2).unwrap();
        let s = build_spectral(&t).unwrap();
        let v = s.eigenvectors();
        let gram = v.transpose() * v;
        assert!((gram - DMatrix::<f64>::identity(16, 16)).abs().max() < 1e-10);
        assert!(s.eigenvalues().iter().all(|&l| l <= 1e-10));
        let f = random_field(16, 1, 1.0);
        let direct = observables::laplacian(&f, &t).unwrap();
        for (x, want) in direct.as_slice().iter().enumerate() {
            let got: Complex64 = (0..16)
                .map(|k| {
                    let coef: Complex64 = (0..16).map(|y| f.as_slice()[y] * v[(y, k)]).sum();
                    coef * s.eigenvalues()[k] * v[(x, k)]
                })
                .sum();
            assert!((got - want).norm() <= 1e-8 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn size_cap() {
        let t = make_torus(5, 2).unwrap();
        assert!(matches!(build_spectral_capped(&t, 10), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn torus_and_dense_propagators_agree() {
        for (side, dim) in [(2, 3), (3, 2), (4, 3), (5, 1)] {
            let t = make_torus(side, dim).unwrap();
            let f = random_field(t.n(), side as u64, 1.0);
            let dense = LinearFlow::dense(&t).unwrap();
            let torus = LinearFlow::for_topology(&t).unwrap();
            assert!(matches!(torus, LinearFlow::Torus { .. }));
            let a = step_strang(&f, 0.013, &dense).unwrap();
            let b = step_strang(&f, 0.013, &torus).unwrap();
            assert!(a.max_relative_difference(&b) < 1e-12, "side {side} dim {dim}");
        }
    }

    #[test]
    fn linear_step_is_unitary() {
        let t = make_torus(6, 2).unwrap();
        let flow = LinearFlow::for_topology(&t).unwrap();
        let f = random_field(36, 2, 3.0);
        let mut amps = f.clone().into_vec();
        flow.propagator(0.37).apply(&mut amps, &mut Workspace::default());
        let g = ComplexField::new(amps).unwrap();
        let (a, b) = (observables::power_n(&f), observables::power_n(&g));
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn plane_wave_is_exact() {
        let t = make_torus(4, 2).unwrap();
        let flow = LinearFlow::for_topology(&t).unwrap();
        let c = Complex64::new(0.6, -0.3);
        let traj = integrate(&ComplexField::constant(16, c), 2.0, 0.01, &flow, &t, IntegrateOptions::default()).unwrap();
        let mut f = ComplexField::constant(16, c);
        for _ in 0..200 {
            f = step_strang(&f, 0.01, &flow).unwrap();
        }
        let exact = c * Complex64::from_polar(1.0, c.norm_sqr() * 2.0);
        assert!(f.as_slice().iter().all(|z| (z - exact).norm() < 1e-12));
        assert_eq!(traj.records.len(), 201);
        assert!(traj.power_drift() < 1e-14);
    }

    #[test]
    fn tuned_circulant_is_unitary() {
        for (side, dt) in [(2, 0.3), (3, 0.01), (8, 0.1 / 64.0), (8, 0.5), (11, 2e-3)] {
            let t = make_torus(side, 1).unwrap();
            let flow = LinearFlow::for_topology(&t).unwrap();
            let Propagator::Torus { coeffs, tail, .. } = flow.propagator(dt) else { panic!("torus flow") };
            let fold = |m: usize| (m % side).min(side - m % side);
            for k in 0..coeffs.len() {
                let mut acc = Wide::default();
                for l in 0..side {
                    let (a, b) = (coeffs[fold(l)], coeffs[fold(k + side - l)]);
                    acc.add_product(a.re, b.re);
                    acc.add_product(a.im, b.im);
                }
                let mut defect = (acc.hi - if k == 0 { 1.0 } else { 0.0 }) + acc.lo;
                if k == 0 {
                    defect += 2.0 * (coeffs[0].conj() * tail).re;
                    assert!(defect.abs() < 1e-24, "side {side} dt {dt}: {defect:e}");
                } else {
                    assert!(defect.abs() < 1e-16, "side {side} dt {dt} k {k}: {defect:e}");
                }
            }
        }
    }

    #[test]
    fn reversibility() {
        let t = make_torus(5, 2).unwrap();
        let flow = LinearFlow::for_topology(&t).unwrap();
        let f = random_field(25, 3, 1.5);
        let back = step_strang(&step_strang(&f, 0.02, &flow).unwrap(), -0.02, &flow).unwrap();
        assert!(back.max_relative_difference(&f) < 1e-12);
    }

    #[test]
    fn gauge_covariance() {
        let t = make_torus(4, 2).unwrap();
        let flow = LinearFlow::for_topology(&t).unwrap();
        let f = random_field(16, 4, 1.0);
        let mut g = f.clone();
        g.rotate_phase(0.9);
        let (mut a, mut b) = (f, g);
        for _ in 0..300 {
            a = step_strang(&a, 0.005, &flow).unwrap();
            b = step_strang(&b, 0.005, &flow).unwrap();
        }
        a.rotate_phase(0.9);
        assert!(a.max_relative_difference(&b) < 1e-10);
    }

    #[test]
    fn merged_half_steps_match_plain_steps() {
        let t = make_torus(4, 2).unwrap();
        let flow = LinearFlow::for_topology(&t).unwrap();
        let f = random_field(16, 5, 1.0);
        let opts = IntegrateOptions { record_every: 7, cutoff: None };
        let traj = integrate(&f, 0.7, 0.01, &flow, &t, opts).unwrap();
        let mut g = f;
        for _ in 0..70 {
            g = step_strang(&g, 0.01, &flow).unwrap();
        }
        let last = observables::observe(&g, &t).unwrap();
        let rec = traj.records.last().unwrap();
        assert!((rec.energy - last.energy).abs() < 1e-12 * (1.0 + last.energy.abs()));
        assert_eq!(traj.times.len(), 11);
        assert!((traj.times[10] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn invalid_arguments() {
        let t = make_torus(4, 1).unwrap();
        let flow = LinearFlow::for_topology(&t).unwrap();
        let f = ComplexField::zeros(4);
        let o = IntegrateOptions::default();
        assert!(integrate(&f, 0.0, 0.1, &flow, &t, o).is_err());
        assert!(integrate(&f, 1.0, -0.1, &flow, &t, o).is_err());
        assert!(integrate(&f, 1.0, 0.1, &flow, &t, IntegrateOptions { record_every: 0, cutoff: None }).is_err());
        assert!(integrate(&ComplexField::zeros(3), 1.0, 0.1, &flow, &t, o).is_err());
        assert!(step_strang(&ComplexField::zeros(3), 0.1, &flow).is_err());
    }

    #[test]
    fn cutoff_violation_is_a_warning() {
        let t = make_torus(4, 1).unwrap();
        let flow = LinearFlow::for_topology(&t).unwrap();
        let f = ComplexField::constant(4, Complex64::new(1.0, 0.0));
        let o = IntegrateOptions { record_every: 1, cutoff: Some(0.5) };
        let traj = integrate(&f, 0.1, 0.01, &flow, &t, o).unwrap();
        assert_eq!(traj.warnings.len(), 1);
    }

    #[test]
    fn power_is_conserved() {
        let t = make_torus(6, 2).unwrap();
        let flow = LinearFlow::for_topology(&t).unwrap();
        let traj = integrate(&random_field(36, 6, 1.0), 5.0, 0.002, &flow, &t, IntegrateOptions::default()).unwrap();
        assert!(traj.power_drift() < 1e-12);
        let summary: serde_json::Value = serde_json::from_str(&traj.summary_json().unwrap()).unwrap();
        assert_eq!(summary["steps"], 2500);
        assert!(traj.csv().starts_with("t,H,N,S4,M1,M2,mode_vertex,mass_fraction\n"));
    }
}
