//! Intra-cell active-user selection.

use crate::error::{Error, Result};

use super::csi::EffectiveCsi;
use super::types::{argmax_by_id, ActiveSet};

fn check_size(cell: usize, users: &[usize], kprime: usize) -> Result<()> {
    if users.len() < kprime {
        return Err(Error::NotEnoughUsers {
            cell,
            available: users.len(),
            required: kprime,
        });
    }
    Ok(())
}

/// Alternating elimination and selection.
///
/// Repeatedly admits the highest-gain candidate, then drops every candidate
/// whose correlation with an admitted user exceeds `alpha`. If the pool runs
/// dry before `kprime` users are admitted, the remaining slots are refilled
/// with the highest-gain dropped users, flagged as fallback.
pub fn aes_select(
    cell: usize,
    cell_users: &[usize],
    csi: &EffectiveCsi,
    observing_bs: usize,
    kprime: usize,
    alpha: f64,
) -> Result<ActiveSet> {
    check_size(cell, cell_users, kprime)?;
    let mut pool: Vec<usize> = cell_users.to_vec();
    pool.sort_unstable();
    let mut pruned: Vec<usize> = Vec::new();
    let mut members = Vec::with_capacity(kprime);
    let mut fallback = Vec::with_capacity(kprime);

    while members.len() < kprime && !pool.is_empty() {
        let (pick, _) = argmax_by_id(pool.iter().map(|&k| (k, csi.gain(observing_bs, k)))).expect("pool is non-empty");
        pool.retain(|&k| k != pick);
        members.push(pick);
        fallback.push(false);
        if members.len() < kprime {
            let (keep, drop): (Vec<usize>, Vec<usize>) = pool
                .iter()
                .partition(|&&k| members.iter().all(|&a| csi.corr(observing_bs, k, a) <= alpha));
            pool = keep;
            pruned.extend(drop);
        }
    }

    if members.len() < kprime {
        pruned.sort_by(|&a, &b| {
            csi.gain(observing_bs, b)
                .total_cmp(&csi.gain(observing_bs, a))
                .then(a.cmp(&b))
        });
        for k in pruned.into_iter().take(kprime - members.len()) {
            members.push(k);
            fallback.push(true);
        }
    }
    Ok(ActiveSet {
        cell,
        members,
        fallback,
    })
}

/// Global interference selection: repeatedly deletes the user with the
/// largest summed correlation to the other remaining users until `kprime`
/// remain. Members come back in ascending id order.
pub fn gis_select(
    cell: usize,
    cell_users: &[usize],
    csi: &EffectiveCsi,
    observing_bs: usize,
    kprime: usize,
) -> Result<ActiveSet> {
    check_size(cell, cell_users, kprime)?;
    let mut pool: Vec<usize> = cell_users.to_vec();
    pool.sort_unstable();
    while pool.len() > kprime {
        let scores = pool.iter().map(|&k| {
            let zeta: f64 = pool
                .iter()
                .filter(|&&j| j != k)
                .map(|&j| csi.corr(observing_bs, k, j))
                .sum();
            (k, zeta)
        });
        let (worst, _) = argmax_by_id(scores).expect("pool is non-empty");
        pool.retain(|&k| k != worst);
    }
    let n = pool.len();
    Ok(ActiveSet {
        cell,
        members: pool,
        fallback: vec![false; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aes_instance() -> EffectiveCsi {
        let mut csi = EffectiveCsi::manual(1, 3);
        csi.set_gain(0, 0, 5.0).set_gain(0, 1, 4.0).set_gain(0, 2, 3.0);
        csi.set_corr(0, 0, 1, 0.9).set_corr(0, 0, 2, 0.1).set_corr(0, 1, 2, 0.2);
        csi
    }

    #[test]
    fn aes_manual_trace() {
        let csi = aes_instance();
        let a = aes_select(0, &[0, 1, 2], &csi, 0, 2, 0.5).unwrap();
        assert_eq!(a.members, vec![0, 2]);
        assert_eq!(a.fallback_count(), 0);
    }

    #[test]
    fn aes_without_pruning_is_top_gain() {
        let csi = aes_instance();
        let a = aes_select(0, &[2, 1, 0], &csi, 0, 2, 1.0).unwrap();
        assert_eq!(a.members, vec![0, 1]);
    }

    #[test]
    fn aes_size_forced_refills() {
        let csi = aes_instance();
        let a = aes_select(0, &[0, 1, 2], &csi, 0, 3, 0.05).unwrap();
        let mut m = a.members.clone();
        m.sort_unstable();
        assert_eq!(m, vec![0, 1, 2]);
        assert_eq!(a.members[0], 0);
        assert_eq!(a.fallback, vec![false, true, true]);
        // refill is by gain
        assert_eq!(a.members[1], 1);
        assert!(matches!(
            aes_select(0, &[0, 1], &csi, 0, 3, 0.5),
            Err(Error::NotEnoughUsers { .. })
        ));
    }

    #[test]
    fn gis_manual_trace() {
        let mut csi = EffectiveCsi::manual(1, 3);
        csi.set_corr(0, 0, 1, 0.9).set_corr(0, 0, 2, 0.8).set_corr(0, 1, 2, 0.1);
        let a = gis_select(0, &[0, 1, 2], &csi, 0, 2).unwrap();
        assert_eq!(a.members, vec![1, 2]);
        let all = gis_select(0, &[2, 0, 1], &csi, 0, 3).unwrap();
        assert_eq!(all.members, vec![0, 1, 2]);
        assert!(gis_select(0, &[0], &csi, 0, 2).is_err());
    }

    #[test]
    fn gis_equal_correlations_drop_lowest_ids() {
        let n = 6;
        let mut csi = EffectiveCsi::manual(1, n);
        for a in 0..n {
            for b in a + 1..n {
                csi.set_corr(0, a, b, 0.37);
            }
        }
        let a = gis_select(0, &(0..n).collect::<Vec<_>>(), &csi, 0, 2).unwrap();
        assert_eq!(a.members, vec![4, 5]);
    }
}
