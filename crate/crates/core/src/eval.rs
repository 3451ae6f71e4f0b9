//! Genie evaluation: MMSE receivers, SINR, sum rate and the exhaustive oracle.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::channel::ChannelVector;
use crate::error::{Error, Result};
use crate::geometry::Scenario;
use crate::sched::{ChannelMap, UserGroup};

/// Largest tolerated normwise backward error of the receiver solve.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Default bound on the number of groups the oracle may enumerate.
pub const DEFAULT_ENUMERATION_LIMIT: u128 = 1_000_000;

/// Receive combiner for one scheduled user.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceiveBeamformer {
    pub w: ChannelVector,
    /// `(cell, user)`.
    pub target: (usize, usize),
}

/// `Σ h hᴴ + σ² I` factorized once and shared by every user received at one BS.
struct Covariance {
    chol: Cholesky<Complex64, Dyn>,
    matrix: DMatrix<Complex64>,
}

impl Covariance {
    fn new<'a>(channels: impl IntoIterator<Item = &'a ChannelVector>, n: usize, noise_power: f64) -> Result<Self> {
        if !(noise_power > 0.0 && noise_power.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise power must be positive, got {noise_power}"
            )));
        }
        let mut m = DMatrix::<Complex64>::identity(n, n) * Complex64::new(noise_power, 0.0);
        for h in channels {
            if h.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: h.len(),
                });
            }
            if !h.is_finite() {
                return Err(Error::NonFinite("channel"));
            }
            let v = h.as_vector();
            m.ger(Complex64::new(1.0, 0.0), v, &v.conjugate(), Complex64::new(1.0, 0.0));
        }
        let chol = Cholesky::new(m.clone()).ok_or(Error::Solve("covariance is not positive definite"))?;
        Ok(Self { chol, matrix: m })
    }

    fn solve(&self, h: &ChannelVector) -> Result<ChannelVector> {
        let b = h.as_vector();
        let w: DVector<Complex64> = self.chol.solve(b);
        let residual = (&self.matrix * &w - b).norm();
        let scale = self.matrix.norm() * w.norm() + b.norm();
        if !(residual <= SOLVE_TOLERANCE * scale) {
            return Err(Error::Solve("receiver residual above tolerance"));
        }
        Ok(ChannelVector::from(w))
    }
}

/// `w = (h hᴴ + Σ_i h_i h_iᴴ + σ² I)⁻¹ h` for the desired channel `h`.
pub fn mmse_receiver(
    desired: &ChannelVector,
    interferers: &[&ChannelVector],
    noise_power: f64,
) -> Result<ChannelVector> {
    let cov = Covariance::new(
        std::iter::once(desired).chain(interferers.iter().copied()),
        desired.len(),
        noise_power,
    )?;
    cov.solve(desired)
}

/// Post-combining SINR with separate intra- and inter-cell interference terms.
pub fn sinr(
    w: &ChannelVector,
    desired: &ChannelVector,
    intra: &[&ChannelVector],
    inter: &[&ChannelVector],
    noise_power: f64,
) -> Result<f64> {
    let wn = w.norm_sqr();
    if wn == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let power = |h: &ChannelVector| w.inner(h).norm_sqr();
    let signal = power(desired);
    let intra: f64 = intra.iter().map(|h| power(h)).sum();
    let inter: f64 = inter.iter().map(|h| power(h)).sum();
    let gamma = signal / (intra + inter + wn * noise_power);
    if !gamma.is_finite() {
        return Err(Error::NonFinite("sinr"));
    }
    Ok(gamma)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserRate {
    pub cell: usize,
    pub user: usize,
    pub sinr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupEvaluation {
    pub sum_rate: f64,
    /// One entry per scheduled user, by cell then ascending id.
    pub users: Vec<UserRate>,
}

/// Evaluates a group with MMSE reception on the true channels. The result
/// does not depend on the order of users inside the group.
pub fn evaluate_group(group: &UserGroup, channels: &ChannelMap, noise_power: f64) -> Result<GroupEvaluation> {
    let cells = group.sorted_sets();
    let mut all: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(l, us)| us.iter().map(move |&u| (l, u)))
        .collect();
    all.sort_unstable_by_key(|&(_, u)| u);

    let mut users = Vec::with_capacity(all.len());
    let mut sum_rate = 0.0;
    for (l, served) in cells.iter().enumerate() {
        if served.is_empty() {
            continue;
        }
        let hs = all
            .iter()
            .map(|&(c, u)| Ok((c, u, channels.get(l, u)?)))
            .collect::<Result<Vec<_>>>()?;
        let n = hs[0].2.len();
        let cov = Covariance::new(hs.iter().map(|&(_, _, h)| h), n, noise_power)?;
        for &k in served {
            let h = channels.get(l, k)?;
            let w = cov.solve(h)?;
            let intra: Vec<&ChannelVector> = hs.iter().filter(|&&(c, u, _)| c == l && u != k).map(|t| t.2).collect();
            let inter: Vec<&ChannelVector> = hs.iter().filter(|&&(c, _, _)| c != l).map(|t| t.2).collect();
            let gamma = sinr(&w, h, &intra, &inter, noise_power)?;
            sum_rate += (1.0 + gamma).log2();
            users.push(UserRate {
                cell: l,
                user: k,
                sinr: gamma,
            });
        }
    }
    Ok(GroupEvaluation { sum_rate, users })
}

pub fn sum_rate(group: &UserGroup, channels: &ChannelMap, noise_power: f64) -> Result<f64> {
    Ok(evaluate_group(group, channels, noise_power)?.sum_rate)
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Number of groups the oracle would enumerate.
pub fn enumeration_size(cell_users: &[Vec<usize>], kbar: usize) -> u128 {
    cell_users
        .iter()
        .fold(1u128, |acc, c| acc.saturating_mul(binomial(c.len(), kbar)))
}

/// All `k`-subsets of `items` in lexicographic order of positions.
fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    let n = items.len();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exhaustive search over every per-cell `K̄`-subset combination. Among equal
/// sum rates the lexicographically smallest group (cells in order, ids
/// ascending) wins.
pub fn brute_force_optimum(
    channels: &ChannelMap,
    cell_users: &[Vec<usize>],
    kbar: usize,
    noise_power: f64,
    limit: u128,
) -> Result<(UserGroup, f64)> {
    let combinations = enumeration_size(cell_users, kbar);
    if combinations > limit {
        return Err(Error::EnumerationLimit { combinations, limit });
    }
    for (cell, c) in cell_users.iter().enumerate() {
        if c.len() < kbar {
            return Err(Error::NotEnoughUsers {
                cell,
                available: c.len(),
                required: kbar,
            });
        }
    }
    let per_cell: Vec<Vec<Vec<usize>>> = cell_users
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort_unstable();
            subsets(&c, kbar)
        })
        .collect();

    let mut best: Option<(UserGroup, f64)> = None;
    let mut counter = vec![0usize; per_cell.len()];
    loop {
        let group = UserGroup::from_cells(
            counter
                .iter()
                .enumerate()
                .map(|(l, &i)| per_cell[l][i].clone())
                .collect(),
        );
        let rate = sum_rate(&group, channels, noise_power)?;
        if best.as_ref().is_none_or(|(_, r)| rate > *r) {
            best = Some((group, rate));
        }
        // odometer, last cell fastest, keeps lexicographic order
        let mut l = per_cell.len();
        loop {
            if l == 0 {
                return Ok(best.expect("at least one combination"));
            }
            l -= 1;
            counter[l] += 1;
            if counter[l] < per_cell[l].len() {
                break;
            }
            counter[l] = 0;
        }
    }
}

/// Noise power placing the median grid center's interference-free
/// matched-filter SNR (at its serving BS) at `target_snr_db`.
pub fn calibrate_noise(scenario: &Scenario, target_snr_db: f64) -> Result<f64> {
    let mut gains = scenario
        .partition
        .grids()
        .iter()
        .map(|g| Ok(scenario.generate_channel(g.index.cell, g.center, 0)?.norm_sqr()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(noise_for_gains(&mut gains, target_snr_db))
}

/// `median(gains) / 10^(snr/10)`; sorts `gains` in place.
pub fn noise_for_gains(gains: &mut [f64], target_snr_db: f64) -> f64 {
    gains.sort_by(f64::total_cmp);
    let n = gains.len();
    let median = if n == 0 {
        1.0
    } else if n % 2 == 1 {
        gains[n / 2]
    } else {
        0.5 * (gains[n / 2 - 1] + gains[n / 2])
    };
    median / 10f64.powf(target_snr_db / 10.0)
}
