//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Panel<const M: usize> {
    a: f64,
    b: f64,
    value: [f64; M],
    error: [f64; M],
    key: f64,
}

impl<const M: usize> PartialEq for Panel<M> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<const M: usize> Eq for Panel<M> {}
impl<const M: usize> PartialOrd for Panel<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const M: usize> Ord for Panel<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

fn rule<const M: usize, F: FnMut(f64) -> [f64; M]>(f: &mut F, a: f64, b: f64) -> ([f64; M], [f64; M]) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = [0.0; M];
    let mut gauss = [0.0; M];
    let mid = f(center);
    for i in 0..M {
        kronrod[i] = WGK[7] * mid[i];
        gauss[i] = WG[3] * mid[i];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let lo = f(center - dx);
        let hi = f(center + dx);
        for i in 0..M {
            let pair = lo[i] + hi[i];
            kronrod[i] += WGK[j] * pair;
            if j % 2 == 1 {
                gauss[i] += WG[j / 2] * pair;
            }
        }
    }
    let mut error = [0.0; M];
    for i in 0..M {
        kronrod[i] *= half;
        error[i] = (kronrod[i] - gauss[i] * half).abs();
    }
    (kronrod, error)
}

/// Integrates `f` over `[a, b]` until every component's error estimate is
/// below `rel_tol` times its magnitude.
///
/// Components should be non-negative (or at least not cancel), since the
/// stopping rule is purely relative.
pub fn integrate<const M: usize, F>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<[f64; M]>
where
    F: FnMut(f64) -> [f64; M],
{
    const MAX_PANELS: usize = 20_000;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok([0.0; M]);
    }
    let mut heap = BinaryHeap::new();
    let (value, error) = rule(&mut f, a, b);
    let mut total = value;
    let mut total_error = error;
    let scale = value.map(|v| v.abs().max(f64::MIN_POSITIVE));
    heap.push(panel(a, b, value, error, &scale));
    loop {
        let done = (0..M).all(|i| {
            let scale = total[i].abs();
            total_error[i] <= rel_tol * scale || (scale == 0.0 && total_error[i] == 0.0)
        });
        if done {
            return Ok(total);
        }
        if heap.len() >= MAX_PANELS {
            return Err(Error::Domain(format!(
                "quadrature did not reach relative tolerance {rel_tol} within {MAX_PANELS} panels"
            )));
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = rule(&mut f, worst.a, mid);
        let (rv, re) = rule(&mut f, mid, worst.b);
        for i in 0..M {
            total[i] += lv[i] + rv[i] - worst.value[i];
            total_error[i] += le[i] + re[i] - worst.error[i];
        }
        heap.push(panel(worst.a, mid, lv, le, &scale));
        heap.push(panel(mid, worst.b, rv, re, &scale));
        if heap.len() % 64 == 0 {
            // the running error drifts when many panels are replaced; resum
            total_error = [0.0; M];
            for p in heap.iter() {
                for i in 0..M {
                    total_error[i] += p.error[i];
                }
            }
        }
    }
}

fn panel<const M: usize>(a: f64, b: f64, value: [f64; M], error: [f64; M], scale: &[f64; M]) -> Panel<M> {
    let key = (0..M).map(|i| error[i] / scale[i]).fold(0.0, f64::max);
    Panel { a, b, value, error, key }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    integrate(|x| [f(x)], a, b, rel_tol).map(|v| v[0])
}

/// Trapezoid rule for a `2π`-periodic integrand over one period, doubling the
/// node count until successive estimates agree to `rel_tol`.
pub fn periodic_trapezoid<const M: usize, F>(mut f: F, rel_tol: f64) -> Result<[f64; M]>
where
    F: FnMut(f64) -> [f64; M],
{
    let mut nodes = 16usize;
    let mut previous = periodic_sum(&mut f, nodes);
    while nodes < 1 << 16 {
        nodes *= 2;
        let current = periodic_sum(&mut f, nodes);
        if (0..M).all(|i| (current[i] - previous[i]).abs() <= rel_tol * current[i].abs().max(f64::MIN_POSITIVE)) {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::Domain("periodic quadrature failed to converge".into()))
}

fn periodic_sum<const M: usize, F: FnMut(f64) -> [f64; M]>(f: &mut F, nodes: usize) -> [f64; M] {
    let step = std::f64::consts::TAU / nodes as f64;
    let mut acc = [0.0; M];
    for k in 0..nodes {
        let v = f(k as f64 * step);
        for i in 0..M {
            acc[i] += v[i];
        }
    }
    acc.map(|v| v * step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exact_for_low_degree_polynomials() {
        let v = integrate_scalar(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, 1e-14).unwrap();
        assert!((v - 13.5).abs() < 1e-13);
    }

    #[test]
    fn exponential_and_endpoint_singularity() {
        let v = integrate_scalar(f64::exp, 0.0, 1.0, 1e-13).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-13);
        let v = integrate_scalar(f64::sqrt, 0.0, 1.0, 1e-10).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn vector_components_converge_together() {
        let v = integrate(|x| [x.sin(), x.cos() + 1.0], 0.0, PI, 1e-12).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert!((v[1] - PI).abs() < 1e-12);
    }

    #[test]
    fn degenerate_interval_is_zero() {
        assert_eq!(integrate_scalar(|x| x, 1.0, 1.0, 1e-10).unwrap(), 0.0);
        assert!(integrate_scalar(|x| x, 0.0, f64::INFINITY, 1e-10).is_err());
    }

    #[test]
    fn periodic_rule_gives_bessel_i0() {
        // (1/2π) ∫ e^{cos φ} dφ = I0(1)
        let v = periodic_trapezoid(|p| [p.cos().exp()], 1e-15).unwrap()[0] / (2.0 * PI);
        assert!((v - 1.266_065_877_752_008_4).abs() < 1e-14);
    }
}
