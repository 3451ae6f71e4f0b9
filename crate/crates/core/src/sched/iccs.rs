//! Inter-cell coordinated scheduling and the two-stage pipelines built on it.

use crate::channel::ChannelVector;
use crate::ckm::UsCkm;
use crate::error::{Error, Result};

use super::csi::EffectiveCsi;
use super::stage1::{aes_select, gis_select};
use super::types::{argmax_by_id, ActiveSet, FirstStage, SelectionStep, UserGroup, UserRecord};

/// `sqrt(gain * max(0, 1 - Σ ρ²))`: the residual norm of a candidate after
/// projecting out already scheduled users, assuming their directions are
/// orthonormal.
pub fn residual_metric(gain: f64, corr_to_selected: &[f64]) -> f64 {
    let overlap: f64 = corr_to_selected.iter().map(|r| r * r).sum();
    (gain.max(0.0) * (1.0 - overlap).max(0.0)).sqrt()
}

/// Slot-by-slot, cell-by-cell selection from the active sets. Each candidate
/// of cell `l` is scored at BS `l` against every user already scheduled in any
/// cell.
pub fn iccs_schedule(active_sets: &[ActiveSet], csi: &EffectiveCsi, kbar: usize) -> Result<UserGroup> {
    for a in active_sets {
        if a.len() < kbar {
            return Err(Error::NotEnoughUsers {
                cell: a.cell,
                available: a.len(),
                required: kbar,
            });
        }
    }
    let cells = active_sets.len();
    let mut pools: Vec<Vec<(usize, bool)>> = active_sets
        .iter()
        .map(|a| a.members.iter().copied().zip(a.fallback.iter().copied()).collect())
        .collect();
    let mut group = UserGroup::empty(cells);
    let mut placed: Vec<usize> = Vec::with_capacity(cells * kbar);
    let mut rhos: Vec<f64> = Vec::with_capacity(cells * kbar);

    for i in 0..kbar {
        for (l, pool) in pools.iter_mut().enumerate() {
            let scores: Vec<(usize, f64)> = pool
                .iter()
                .map(|&(k, _)| {
                    rhos.clear();
                    rhos.extend(placed.iter().map(|&j| csi.corr(l, k, j)));
                    (k, residual_metric(csi.gain(l, k), &rhos))
                })
                .collect();
            let (pick, metric) = argmax_by_id(scores).expect("pool holds at least kbar users");
            let pos = pool.iter().position(|&(k, _)| k == pick).expect("picked from pool");
            let (_, fallback) = pool.remove(pos);
            placed.push(pick);
            group.push(SelectionStep {
                iteration: i,
                cell: active_sets[l].cell,
                user: pick,
                metric,
                fallback,
            });
        }
    }
    Ok(group)
}

/// Knobs shared by both two-stage pipelines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoStageParams {
    pub kprime: usize,
    pub kbar: usize,
    pub alpha: f64,
    pub first_stage: FirstStage,
}

/// Stage 1 per cell (at the serving BS) followed by ICCS. `cell_users[l]`
/// lists the ids served by BS `l`.
pub fn two_stage(
    csi: &EffectiveCsi,
    cell_users: &[Vec<usize>],
    p: TwoStageParams,
) -> Result<(UserGroup, Vec<ActiveSet>)> {
    let active = cell_users
        .iter()
        .enumerate()
        .map(|(l, users)| match p.first_stage {
            FirstStage::Aes => aes_select(l, users, csi, l, p.kprime, p.alpha),
            FirstStage::Gis => gis_select(l, users, csi, l, p.kprime),
        })
        .collect::<Result<Vec<_>>>()?;
    let group = iccs_schedule(&active, csi, p.kbar)?;
    Ok((group, active))
}

/// Output of [`robust_two_stage`].
#[derive(Clone, Debug)]
pub struct RobustOutcome {
    pub group: UserGroup,
    pub active: Vec<ActiveSet>,
    pub csi: EffectiveCsi,
}

/// Fuses map and instantaneous CSI, then runs [`two_stage`] on the fused view.
/// `provider(bs, user)` is only called for users in unreliable grids.
pub fn robust_two_stage<F>(ckm: &UsCkm, users: &[UserRecord], provider: F, p: TwoStageParams) -> Result<RobustOutcome>
where
    F: FnMut(usize, &UserRecord) -> Result<ChannelVector>,
{
    let csi = EffectiveCsi::fuse(ckm, users, provider)?;
    let cell_users = users_by_cell(users, ckm.cells());
    let (group, active) = two_stage(&csi, &cell_users, p)?;
    Ok(RobustOutcome { group, active, csi })
}

/// Ids grouped by serving cell, ascending within each cell.
pub fn users_by_cell(users: &[UserRecord], cells: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); cells];
    for u in users {
        out[u.cell].push(u.id);
    }
    for c in &mut out {
        c.sort_unstable();
    }
    out
}
