//! Closed-form complexity and signalling counts per scheduler.

use crate::sched::Algorithm;

/// Symbolic parameters the counts depend on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverheadModel {
    pub algorithm: Algorithm,
    pub cells: usize,
    pub users_per_cell: usize,
    pub kbar: usize,
    pub kprime: usize,
    pub antennas: usize,
    /// Fraction of map entries served from the map.
    pub eta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OverheadCounts {
    pub multiplications: u64,
    pub csi_acquisitions: u64,
    pub info_exchange: u64,
}

/// Evaluates the closed forms. Non-integer intermediate values (from `eta`)
/// are rounded to the nearest integer at the end.
pub fn overhead_counts(m: &OverheadModel) -> OverheadCounts {
    let l = m.cells as f64;
    let k = m.users_per_cell as f64;
    let kb = m.kbar as f64;
    let kp = m.kprime as f64;
    let n = m.antennas as f64;
    let u = 1.0 - m.eta;

    let iccs = l * l * kb * kb * kp + l * l * kb.powi(3);
    let fusion = l * l * u * k + l.powi(3) * u * u * k * k;
    let (mults, acq, exch) = match m.algorithm {
        Algorithm::Sus => (l * k * kb * n, l * k, 0.0),
        Algorithm::Greedy => (
            l * k * kb * kb * (n.powi(3) + k * n * n + kb * n * n),
            l * l * k,
            l * l * k * n,
        ),
        Algorithm::TwoStageAes => (l * kp * kp * k + iccs, 0.0, l * kp),
        Algorithm::TwoStageGis => (l * k.powi(3) + iccs, 0.0, l * kp),
        Algorithm::RobustAes => (
            l * kp * kp * k + iccs + fusion,
            l * l * u * k,
            robust_exchange(l, kp, u),
        ),
        Algorithm::RobustGis => (l * k.powi(3) + iccs + fusion, l * l * u * k, robust_exchange(l, kp, u)),
        Algorithm::Random => (1.0, 0.0, 0.0),
        Algorithm::BruteForce => {
            let combos = (0..m.kbar).fold(1.0, |acc, i| acc * (k - i as f64) / (i as f64 + 1.0));
            (combos.powf(l) * l * kb * n.powi(3), l * l * k, l * l * k * n)
        }
    };
    OverheadCounts {
        multiplications: mults.round() as u64,
        csi_acquisitions: acq.round() as u64,
        info_exchange: exch.round() as u64,
    }
}

/// `(2 - η) L K′ + L³ (1 - η) K′` written with `u = 1 - η`.
fn robust_exchange(l: f64, kp: f64, u: f64) -> f64 {
    (1.0 + u) * l * kp + l.powi(3) * u * kp
}

/// Robust information exchange with a measured unreliable fraction.
pub fn realized_robust_exchange(cells: usize, kprime: usize, unreliable_fraction: f64) -> u64 {
    robust_exchange(cells as f64, kprime as f64, unreliable_fraction).round() as u64
}

/// Four significant figures in `m.mmm×10^e` form for values ≥ 10⁴, plain
/// integers below.
pub fn sci4(v: u64) -> String {
    if v < 10_000 {
        return v.to_string();
    }
    let s = format!("{:.3e}", v as f64);
    let (mant, exp) = s.split_once('e').expect("exponent present");
    format!("{mant}×10^{exp}")
}
