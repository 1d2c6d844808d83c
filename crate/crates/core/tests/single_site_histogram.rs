//! The one-vertex chain against exact bin probabilities of `|f|^2`.

use dnls::analytic::ThermoParams;
use dnls::experiments::sample_chain;
use dnls::sampler::{oracle, Schedule};
use dnls::GraphTopology;

const BINS: usize = 20;
// 0.999 quantile of chi-squared with 19 degrees of freedom.
const CHI2_LIMIT: f64 = 43.82;

fn chi_squared(beta: f64, seed: u64, expected: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let g = GraphTopology::from_edges(1, 1.0, []).unwrap();
    let p = ThermoParams::new(beta, 1.0, 1.0, 1).unwrap();
    let mut schedule = Schedule::new(250_000, seed);
    schedule.thin = 25;
    let run = sample_chain(&p, &g, &schedule).unwrap();
    let mut counts = [0usize; BINS];
    for r in &run.records {
        counts[((r.power * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let edges: Vec<f64> = (0..=BINS).map(|k| k as f64 / BINS as f64).collect();
    let total = run.records.len() as f64;
    expected(&edges)
        .iter()
        .zip(counts)
        .map(|(q, c)| (c as f64 - total * q).powi(2) / (total * q))
        .sum()
}

#[test]
fn flat_at_infinite_temperature() {
    let chi2 = chi_squared(0.0, 11, |edges| vec![1.0 / BINS as f64; edges.len() - 1]);
    assert!(chi2 < CHI2_LIMIT, "chi2 = {chi2}");
}

#[test]
fn tilted_at_positive_beta() {
    let beta = 2.0;
    let exact = |edges: &[f64]| {
        // weight e^{βr²}, integrated per bin by Simpson
        let bin = |a: f64, b: f64| {
            let m = 200;
            let h = (b - a) / m as f64;
            let f = |r: f64| (beta * r * r).exp();
            (f(a) + f(b) + (1..m).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum::<f64>()) * h / 3.0
        };
        let masses: Vec<f64> = edges.windows(2).map(|w| bin(w[0], w[1])).collect();
        let z: f64 = masses.iter().sum();
        masses.iter().map(|m| m / z).collect::<Vec<_>>()
    };
    let p = ThermoParams::new(beta, 1.0, 1.0, 1).unwrap();
    let edges: Vec<f64> = (0..=BINS).map(|k| k as f64 / BINS as f64).collect();
    let library = oracle::single_site_bins(&p, &edges).unwrap();
    for (a, b) in library.iter().zip(exact(&edges)) {
        assert!((a - b).abs() < 1e-10);
    }
    let chi2 = chi_squared(beta, 12, exact);
    assert!(chi2 < CHI2_LIMIT, "chi2 = {chi2}");
}
