//! User scheduling: two-stage map-driven selection, its robust variant and
//! instantaneous-CSI baselines.

mod baselines;
mod csi;
mod iccs;
mod stage1;
mod types;

pub use baselines::{greedy_schedule, random_schedule, sus_schedule};
pub use csi::{ChannelMap, CsiSource, EffectiveCsi};
pub use iccs::{
    iccs_schedule, residual_metric, robust_two_stage, two_stage, users_by_cell, RobustOutcome, TwoStageParams,
};
pub use stage1::{aes_select, gis_select};
pub use types::{ActiveSet, Algorithm, FirstStage, SelectionStep, UserGroup, UserRecord};
