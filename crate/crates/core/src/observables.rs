//! Field values on a graph and the functionals measured on them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::numeric::CompensatedSum;

/// One complex amplitude per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    amps: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if let Some(x) = amps.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Domain(format!("non-finite amplitude at vertex {x}")));
        }
        Ok(Self { amps })
    }

    pub fn zeros(n: usize) -> Self {
        Self { amps: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn constant(n: usize, value: Complex64) -> Self {
        Self { amps: vec![value; n] }
    }

    /// Zero everywhere except `value` at `vertex`.
    pub fn spike(n: usize, vertex: usize, value: Complex64) -> Self {
        let mut field = Self::zeros(n);
        field.amps[vertex] = value;
        field
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `|f_x|^2` per vertex.
    pub fn masses(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    /// The field `g` with `g[map[x]] = f[x]`.
    pub fn relabel(&self, map: &[u32]) -> Result<Self> {
        check_len(self.len(), map.len())?;
        let mut out = Self::zeros(self.len());
        for (x, &y) in map.iter().enumerate() {
            out.amps[y as usize] = self.amps[x];
        }
        Ok(out)
    }

    /// Multiplies every amplitude by `e^{i alpha}`.
    pub fn rotate_phase(&mut self, alpha: f64) {
        let phase = Complex64::from_polar(1.0, alpha);
        self.amps.iter_mut().for_each(|z| *z *= phase);
    }

    /// Largest relative deviation `max_x |f_x - g_x| / (1 + max_x |g_x|)`.
    pub fn max_relative_difference(&self, other: &ComplexField) -> f64 {
        let scale = 1.0 + other.amps.iter().map(|z| z.norm()).fold(0.0, f64::max);
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::SizeMismatch { expected, actual })
    }
}

fn check_sizes(field: &ComplexField, topology: &GraphTopology) -> Result<()> {
    check_len(topology.n(), field.len())
}

/// Everything measured on a single configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    /// Hamiltonian `H(f)`.
    pub energy: f64,
    /// Power `N(f) = sum |f_x|^2`.
    pub power: f64,
    /// `S4 = sum |f_x|^4`.
    pub quartic: f64,
    /// Largest `|f_x|^2` (M1).
    pub largest: f64,
    /// Second largest `|f_x|^2` (M2).
    pub second_largest: f64,
    pub mode_vertex: usize,
    /// `M1 / N`, or 0 for the zero field.
    pub mass_fraction: f64,
    /// Squared discrete H1 norm.
    pub h1_sq: f64,
}

/// `(Δf)_x = h^-2 sum_{y ~ x} (f_y - f_x)`.
pub fn laplacian(field: &ComplexField, topology: &GraphTopology) -> Result<ComplexField> {
    check_sizes(field, topology)?;
    let inv_h2 = topology.spacing().powi(-2);
    let f = field.as_slice();
    let amps = (0..topology.n())
        .map(|x| {
            let sum: Complex64 = topology.neighbors(x).iter().map(|&y| f[y as usize] - f[x]).sum();
            sum * inv_h2
        })
        .collect();
    Ok(ComplexField { amps })
}

/// `sum_{(x,y) in E} |f_x - f_y|^2`, without the `h^-2` factor.
pub fn gradient_sum(field: &ComplexField, topology: &GraphTopology) -> Result<f64> {
    check_sizes(field, topology)?;
    let f = field.as_slice();
    Ok(topology
        .edges()
        .iter()
        .map(|&(u, v)| (f[u as usize] - f[v as usize]).norm_sqr())
        .collect::<CompensatedSum>()
        .value())
}

pub fn power_n(field: &ComplexField) -> f64 {
    field.amps.iter().map(|z| z.norm_sqr()).collect::<CompensatedSum>().value()
}

pub fn quartic_sum(field: &ComplexField) -> f64 {
    field.amps.iter().map(|z| z.norm_sqr().powi(2)).collect::<CompensatedSum>().value()
}

/// Energy from its parts: `2 K / (n h^2) - S4 / n`.
#[inline]
pub fn energy_from_parts(gradient: f64, quartic: f64, n: usize, spacing: f64) -> f64 {
    let n = n as f64;
    2.0 * gradient / (n * spacing * spacing) - quartic / n
}

/// `H(f) = (2/n) sum_E |f_x - f_y|^2 / h^2 - (1/n) sum_x |f_x|^4`.
pub fn hamiltonian(field: &ComplexField, topology: &GraphTopology) -> Result<f64> {
    let gradient = gradient_sum(field, topology)?;
    Ok(energy_from_parts(gradient, quartic_sum(field), topology.n(), topology.spacing()))
}

/// `(1/n) sum |f_x|^2 + (1/n) sum_E |f_x - f_y|^2 / h^2`.
pub fn h1_norm_sq(field: &ComplexField, topology: &GraphTopology) -> Result<f64> {
    let gradient = gradient_sum(field, topology)?;
    let n = topology.n() as f64;
    Ok(power_n(field) / n + gradient / (n * topology.spacing().powi(2)))
}

/// All observables in one pass over vertices and one over edges.
pub fn observe(field: &ComplexField, topology: &GraphTopology) -> Result<ObservableRecord> {
    let gradient = gradient_sum(field, topology)?;
    let mut power = CompensatedSum::new();
    let mut quartic = CompensatedSum::new();
    let (mut largest, mut second, mut mode) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0usize);
    for (x, z) in field.amps.iter().enumerate() {
        let m = z.norm_sqr();
        power.add(m);
        quartic.add(m * m);
        if m > largest {
            second = largest;
            largest = m;
            mode = x;
        } else if m > second {
            second = m;
        }
    }
    let n = topology.n();
    let h = topology.spacing();
    let (power, quartic) = (power.value(), quartic.value());
    let second = if n > 1 { second } else { 0.0 };
    Ok(ObservableRecord {
        energy: energy_from_parts(gradient, quartic, n, h),
        power,
        quartic,
        largest,
        second_largest: second,
        mode_vertex: mode,
        mass_fraction: if power > 0.0 { largest / power } else { 0.0 },
        h1_sq: power / n as f64 + gradient / (n as f64 * h * h),
    })
}

/// Snapshot files: `n` followed by `2n` interleaved real/imaginary parts.
///
/// The text form is `n` on the first line and one `re im` pair per line. The
/// binary form is a little-endian `u64` count followed by little-endian `f64`s.
pub mod snapshot {
    use super::*;

    pub fn to_text(field: &ComplexField) -> String {
        let mut out = format!("{}\n", field.len());
        for z in field.as_slice() {
            out.push_str(&format!("{} {}\n", z.re, z.im));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<ComplexField> {
        let mut tokens = text.split_whitespace();
        let n: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or(Error::Parse { line: 1, message: "missing vertex count".into() })?;
        let values: Vec<f64> = tokens
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
        check_len(2 * n, values.len())?;
        ComplexField::new(values.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
    }

    pub fn to_bytes(field: &ComplexField) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 * field.len());
        out.extend_from_slice(&(field.len() as u64).to_le_bytes());
        for z in field.as_slice() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ComplexField> {
        let short = || Error::Parse { line: 0, message: "truncated binary snapshot".into() };
        let head: [u8; 8] = bytes.get(..8).ok_or_else(short)?.try_into().unwrap();
        let n = u64::from_le_bytes(head) as usize;
        let body = &bytes[8..];
        check_len(16 * n, body.len())?;
        let amps = body
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        ComplexField::new(amps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_torus, AutomorphismGroup};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_field(n: usize, seed: u64, scale: f64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::new((0..n).map(|_| c(rng.random_range(-scale..scale), rng.random_range(-scale..scale))).collect())
            .unwrap()
    }

    #[test]
    fn constant_field_is_harmonic() {
        let t = make_torus(4, 2).unwrap();
        let lap = laplacian(&ComplexField::constant(16, c(0.3, -1.2)), &t).unwrap();
        assert!(lap.as_slice().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn spike_stencil_on_four_cycle() {
        let t = make_torus(4, 1).unwrap();
        let lap = laplacian(&ComplexField::spike(4, 0, c(1.0, 0.0)), &t).unwrap();
        let re: Vec<f64> = lap.as_slice().iter().map(|z| z.re).collect();
        assert_eq!(re, vec![-32.0, 16.0, 0.0, 16.0]);
    }

    #[test]
    fn laplacian_telescopes() {
        let t = make_torus(5, 2).unwrap();
        let lap = laplacian(&random_field(25, 1, 2.0), &t).unwrap();
        let total: Complex64 = lap.as_slice().iter().sum();
        assert!(total.norm() < 1e-10);
    }

    #[test]
    fn size_mismatch_is_reported() {
        let t = make_torus(4, 1).unwrap();
        let f = ComplexField::zeros(3);
        assert!(matches!(laplacian(&f, &t), Err(Error::SizeMismatch { expected: 4, actual: 3 })));
        assert!(hamiltonian(&f, &t).is_err());
        assert!(observe(&f, &t).is_err());
        assert!(h1_norm_sq(&f, &t).is_err());
    }

    #[test]
    fn non_finite_fields_are_rejected() {
        assert!(ComplexField::new(vec![c(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn hamiltonian_of_constant_and_zero() {
        let t = make_torus(3, 2).unwrap();
        let z = c(0.6, 0.8 * 1.5);
        let h = hamiltonian(&ComplexField::constant(9, z), &t).unwrap();
        assert!((h + z.norm_sqr().powi(2)).abs() < 1e-12);
        assert_eq!(hamiltonian(&ComplexField::zeros(9), &t).unwrap(), 0.0);
    }

    #[test]
    fn hamiltonian_of_spike() {
        // f_o = sqrt(a n): 2d edges of weight a n each, quartic a^2 n
        let t = make_torus(4, 3).unwrap();
        let (n, a, d) = (64.0_f64, 0.8_f64, 3.0);
        let f = ComplexField::spike(64, 5, c((a * n).sqrt(), 0.0));
        let h = hamiltonian(&f, &t).unwrap();
        let h2 = t.spacing().powi(2);
        assert!((h - (4.0 * d * a / h2 - a * a * n)).abs() < 1e-9);
    }

    #[test]
    fn power_values() {
        assert_eq!(power_n(&ComplexField::zeros(7)), 0.0);
        assert!((power_n(&ComplexField::constant(7, c(1.0, 2.0))) - 35.0).abs() < 1e-12);
    }

    #[test]
    fn power_is_order_independent() {
        let f = random_field(2000, 9, 5.0);
        let mut shuffled = f.as_slice().to_vec();
        shuffled.reverse();
        shuffled.rotate_left(613);
        let g = ComplexField::new(shuffled).unwrap();
        let (a, b) = (power_n(&f), power_n(&g));
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn observe_spike_and_constant() {
        let t = make_torus(4, 2).unwrap();
        let rec = observe(&ComplexField::spike(16, 7, c(3.0, 4.0)), &t).unwrap();
        assert_eq!((rec.largest, rec.second_largest, rec.mass_fraction, rec.mode_vertex), (25.0, 0.0, 1.0, 7));
        let rec = observe(&ComplexField::constant(16, c(0.5, 0.0)), &t).unwrap();
        assert_eq!(rec.largest, 0.25);
        assert_eq!(rec.second_largest, 0.25);
        assert_eq!(rec.mode_vertex, 0);
        assert!((rec.mass_fraction - 1.0 / 16.0).abs() < 1e-15);
        let rec = observe(&ComplexField::zeros(16), &t).unwrap();
        assert_eq!(rec.mass_fraction, 0.0);
    }

    #[test]
    fn h1_of_constant() {
        let t = make_torus(3, 3).unwrap();
        let v = h1_norm_sq(&ComplexField::constant(27, c(1.0, 1.0)), &t).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        assert_eq!(h1_norm_sq(&ComplexField::zeros(27), &t).unwrap(), 0.0);
    }

    #[test]
    fn observe_is_equivariant_under_translations() {
        let t = make_torus(3, 2).unwrap();
        let group = AutomorphismGroup::torus_translations(&t).unwrap();
        let f = random_field(9, 4, 1.0);
        let base = observe(&f, &t).unwrap();
        for map in group.maps() {
            let moved = observe(&f.relabel(map).unwrap(), &t).unwrap();
            assert_eq!(moved.mode_vertex, map[base.mode_vertex] as usize);
            assert!((moved.energy - base.energy).abs() < 1e-12 * (1.0 + base.energy.abs()));
            assert!((moved.power - base.power).abs() < 1e-12 * base.power);
            assert_eq!(moved.largest, base.largest);
        }
    }

    #[test]
    fn snapshot_formats() {
        let f = random_field(6, 2, 3.0);
        assert_eq!(snapshot::from_text(&snapshot::to_text(&f)).unwrap(), f);
        assert_eq!(snapshot::from_bytes(&snapshot::to_bytes(&f)).unwrap(), f);
        let bytes = snapshot::to_bytes(&f);
        assert_eq!(&bytes[..8], &6u64.to_le_bytes());
        assert!(snapshot::from_bytes(&bytes[..20]).is_err());
        assert!(snapshot::from_text("2\n1 2\n3\n").is_err());
    }

    proptest! {
        #[test]
        fn record_invariants(seed in any::<u64>(), scale in 0.01f64..10.0) {
            let t = make_torus(4, 2).unwrap();
            let f = random_field(16, seed, scale);
            let r = observe(&f, &t).unwrap();
            let n = 16.0_f64;
            prop_assert!(r.largest >= r.second_largest && r.second_largest >= 0.0);
            prop_assert!(r.largest <= r.power * (1.0 + 1e-12));
            prop_assert!(r.quartic <= r.largest * r.power * (1.0 + 1e-12));
            prop_assert!(r.quartic.sqrt() / n <= r.power / n * (1.0 + 1e-12));
            prop_assert!(r.energy >= -r.quartic / n - 1e-12 * r.quartic);
            // H1 = N/n + (H + S4/n)/2
            let identity = r.power / n + 0.5 * (r.energy + r.quartic / n);
            prop_assert!((r.h1_sq - identity).abs() <= 1e-10 * r.h1_sq.max(1e-300));
            prop_assert!(r.h1_sq >= r.power / n);
        }

        #[test]
        fn gradient_bounded_under_mass_cutoff(seed in any::<u64>()) {
            // N <= B n implies sum_E |f_x - f_y|^2 <= 4 B D n
            let t = make_torus(5, 2).unwrap();
            let f = random_field(25, seed, 1.0);
            let cutoff = power_n(&f) / 25.0;
            let bound = 4.0 * cutoff * t.max_degree() as f64 * 25.0;
            prop_assert!(gradient_sum(&f, &t).unwrap() <= bound);
        }
    }
}
