//! Baselines that schedule from instantaneous channels (or from nothing).

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelVector;
use crate::error::{Error, Result};
use crate::eval::sum_rate;

use super::csi::ChannelMap;
use super::types::{argmax_by_id, SelectionStep, UserGroup};

fn check_cells(cell_users: &[Vec<usize>], kbar: usize) -> Result<()> {
    for (cell, c) in cell_users.iter().enumerate() {
        if c.len() < kbar {
            return Err(Error::NotEnoughUsers {
                cell,
                available: c.len(),
                required: kbar,
            });
        }
    }
    Ok(())
}

fn sorted(c: &[usize]) -> Vec<usize> {
    let mut c = c.to_vec();
    c.sort_unstable();
    c
}

/// `h - Σ_j (g_jᴴ h / ‖g_j‖²) g_j`.
fn residual(h: &ChannelVector, basis: &[ChannelVector]) -> ChannelVector {
    let mut r = h.as_vector().clone();
    for g in basis {
        let coef = g.inner(h) / Complex64::new(g.norm_sqr(), 0.0);
        r -= g.as_vector() * coef;
    }
    ChannelVector::from(r)
}

/// Semi-orthogonal user selection, run independently in every cell at its
/// own BS. A candidate survives a round only while its correlation with the
/// newest basis vector stays below `alpha`.
pub fn sus_schedule(channels: &ChannelMap, cell_users: &[Vec<usize>], kbar: usize, alpha: f64) -> Result<UserGroup> {
    check_cells(cell_users, kbar)?;
    let mut group = UserGroup::empty(cell_users.len());
    for (l, users) in cell_users.iter().enumerate() {
        let mut pool = sorted(users);
        let mut pruned: Vec<usize> = Vec::new();
        let mut basis: Vec<ChannelVector> = Vec::with_capacity(kbar);
        let mut picks = 0;
        while picks < kbar && !pool.is_empty() {
            let residuals = pool
                .iter()
                .map(|&k| Ok((k, residual(channels.get(l, k)?, &basis))))
                .collect::<Result<Vec<_>>>()?;
            let (pick, metric) =
                argmax_by_id(residuals.iter().map(|(k, g)| (*k, g.norm()))).expect("pool is non-empty");
            let g = residuals
                .into_iter()
                .find(|(k, _)| *k == pick)
                .expect("picked from pool")
                .1;
            pool.retain(|&k| k != pick);
            group.push(SelectionStep {
                iteration: picks,
                cell: l,
                user: pick,
                metric,
                fallback: false,
            });
            picks += 1;
            let gn = g.norm();
            let mut keep = Vec::with_capacity(pool.len());
            for k in pool {
                let h = channels.get(l, k)?;
                let hn = h.norm();
                let rho = if hn == 0.0 || gn == 0.0 {
                    0.0
                } else {
                    h.inner(&g).norm() / (hn * gn)
                };
                if rho < alpha {
                    keep.push(k);
                } else {
                    pruned.push(k);
                }
            }
            pool = keep;
            basis.push(g);
        }
        if picks < kbar {
            let mut refill = pruned
                .into_iter()
                .map(|k| Ok((k, channels.get(l, k)?.norm())))
                .collect::<Result<Vec<_>>>()?;
            refill.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (k, norm) in refill.into_iter().take(kbar - picks) {
                group.push(SelectionStep {
                    iteration: picks,
                    cell: l,
                    user: k,
                    metric: norm,
                    fallback: true,
                });
                picks += 1;
            }
        }
    }
    Ok(group)
}

/// Adds, slot by slot and cell by cell, the candidate that maximizes the
/// exact multi-cell MMSE sum rate of the partial group.
pub fn greedy_schedule(
    channels: &ChannelMap,
    cell_users: &[Vec<usize>],
    kbar: usize,
    noise_power: f64,
) -> Result<UserGroup> {
    check_cells(cell_users, kbar)?;
    let mut pools: Vec<Vec<usize>> = cell_users.iter().map(|c| sorted(c)).collect();
    let mut group = UserGroup::empty(cell_users.len());
    for i in 0..kbar {
        for (l, pool) in pools.iter_mut().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for &k in pool.iter() {
                group.cells[l].push(k);
                let rate = sum_rate(&group, channels, noise_power);
                group.cells[l].pop();
                best = argmax_by_id(best.into_iter().chain([(k, rate?)]));
            }
            let (pick, rate) = best.expect("pool holds at least kbar users");
            pool.retain(|&k| k != pick);
            group.push(SelectionStep {
                iteration: i,
                cell: l,
                user: pick,
                metric: rate,
                fallback: false,
            });
        }
    }
    Ok(group)
}

/// Uniform draw of `kbar` users per cell without replacement.
pub fn random_schedule(cell_users: &[Vec<usize>], kbar: usize, seed: u64) -> Result<UserGroup> {
    check_cells(cell_users, kbar)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut group = UserGroup::empty(cell_users.len());
    for (l, users) in cell_users.iter().enumerate() {
        let users = sorted(users);
        for (i, idx) in rand::seq::index::sample(&mut rng, users.len(), kbar)
            .into_iter()
            .enumerate()
        {
            group.push(SelectionStep {
                iteration: i,
                cell: l,
                user: users[idx],
                metric: 0.0,
                fallback: false,
            });
        }
    }
    Ok(group)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{brute_force_optimum, DEFAULT_ENUMERATION_LIMIT};

    fn cv(v: &[f64]) -> ChannelVector {
        ChannelVector::from_real(v)
    }

    #[test]
    fn sus_orthogonal_takes_everyone() {
        let m = ChannelMap::new(vec![vec![
            cv(&[1.0, 0.0, 0.0]),
            cv(&[0.0, 2.0, 0.0]),
            cv(&[0.0, 0.0, 3.0]),
        ]]);
        for alpha in [0.01, 0.5, 1.0] {
            let g = sus_schedule(&m, &[vec![0, 1, 2]], 3, alpha).unwrap();
            assert_eq!(g.sorted_sets(), vec![vec![0, 1, 2]]);
            assert_eq!(g.cells[0][0], 2);
            assert!(g.steps.iter().all(|s| !s.fallback));
        }
    }

    #[test]
    fn sus_prunes_collinear_duplicate() {
        let m = ChannelMap::new(vec![vec![cv(&[2.0, 0.0]), cv(&[1.0, 0.0]), cv(&[0.0, 0.5])]]);
        let g = sus_schedule(&m, &[vec![0, 1, 2]], 2, 0.5).unwrap();
        assert_eq!(g.cells, vec![vec![0, 2]]);
    }

    #[test]
    fn sus_refills_when_pool_runs_dry() {
        let m = ChannelMap::new(vec![vec![cv(&[2.0, 0.0]), cv(&[1.0, 0.1]), cv(&[1.5, 0.0])]]);
        let g = sus_schedule(&m, &[vec![0, 1, 2]], 2, 0.5).unwrap();
        assert_eq!(g.cells, vec![vec![0, 2]]);
        assert!(g.steps[1].fallback);
    }

    #[test]
    fn greedy_single_user_is_strongest() {
        let m = ChannelMap::new(vec![vec![cv(&[1.0, 0.0]), cv(&[0.0, 3.0]), cv(&[2.0, 0.0])]]);
        let g = greedy_schedule(&m, &[vec![0, 1, 2]], 1, 1.0).unwrap();
        assert_eq!(g.cells, vec![vec![1]]);
        assert!((g.steps[0].metric - 10f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn greedy_interference_free_is_top_gain() {
        // each user on its own antenna, shared by both BSs
        let e = |i: usize, s: f64| {
            let mut v = vec![0.0; 6];
            v[i] = s;
            cv(&v)
        };
        let hs = vec![e(0, 1.0), e(1, 3.0), e(2, 2.0), e(3, 0.5), e(4, 4.0), e(5, 1.5)];
        let m = ChannelMap::new(vec![hs.clone(), hs]);
        let cells = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let g = greedy_schedule(&m, &cells, 2, 1.0).unwrap();
        assert_eq!(g.sorted_sets(), vec![vec![1, 2], vec![4, 5]]);
        let (opt, r) = brute_force_optimum(&m, &cells, 2, 1.0, DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert_eq!(opt.sorted_sets(), g.sorted_sets());
        assert!((sum_rate(&g, &m, 1.0).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn oracle_beats_greedy_when_first_pick_blocks() {
        // user 0 is strongest alone but sits between users 1 and 2, which are
        // orthogonal to each other; the optimal pair excludes user 0.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = ChannelMap::new(vec![vec![cv(&[1.2 * s, 1.2 * s]), cv(&[1.0, 0.0]), cv(&[0.0, 1.0])]]);
        let cells = vec![vec![0, 1, 2]];
        let noise = 0.01;
        let g = greedy_schedule(&m, &cells, 2, noise).unwrap();
        assert_eq!(g.cells[0][0], 0);
        let (opt, r) = brute_force_optimum(&m, &cells, 2, noise, 100).unwrap();
        assert_eq!(opt.cells, vec![vec![1, 2]]);
        assert!(r > sum_rate(&g, &m, noise).unwrap());
    }

    #[test]
    fn random_is_seeded() {
        let cells = vec![(0..50).collect::<Vec<_>>()];
        let a = random_schedule(&cells, 5, 7).unwrap();
        assert_eq!(a, random_schedule(&cells, 5, 7).unwrap());
        assert_ne!(a.sorted_sets(), random_schedule(&cells, 5, 8).unwrap().sorted_sets());
        let all = random_schedule(&[vec![2, 0, 1]], 3, 1).unwrap();
        assert_eq!(all.sorted_sets(), vec![vec![0, 1, 2]]);
    }
}
