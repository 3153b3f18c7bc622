//! Layer-freezing policy for partial fine-tuning of the visual tower.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::backend::EncoderBackend;
use crate::model::params::ParamGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreezePolicy {
    /// Number of final residual blocks left trainable.
    pub k_top_blocks: usize,
    pub unfreeze_post_norm_and_projection: bool,
}

impl Default for FreezePolicy {
    fn default() -> Self {
        Self {
            k_top_blocks: 3,
            unfreeze_post_norm_and_projection: true,
        }
    }
}

impl FreezePolicy {
    pub fn frozen() -> Self {
        Self {
            k_top_blocks: 0,
            unfreeze_post_norm_and_projection: false,
        }
    }

    pub fn is_trainable(&self, group: ParamGroup, n_blocks: usize) -> bool {
        match group {
            ParamGroup::Block(i) => i + self.k_top_blocks >= n_blocks,
            ParamGroup::PostNorm | ParamGroup::Projection => self.unfreeze_post_norm_and_projection,
            ParamGroup::Stem | ParamGroup::Text => false,
            ParamGroup::Head => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStatus {
    pub group: ParamGroup,
    pub params: usize,
    pub trainable: bool,
}

/// Trainable/frozen partition of the visual tower (optionally plus a head).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeReport {
    pub trainable: usize,
    pub total: usize,
    pub groups: Vec<GroupStatus>,
}

impl FreezeReport {
    pub fn frozen(&self) -> usize {
        self.total - self.trainable
    }

    pub fn trainable_fraction(&self) -> f64 {
        self.trainable as f64 / self.total as f64
    }

    /// Adds an always-trainable classification head to both counts.
    pub fn with_head(&self, head_params: usize) -> FreezeReport {
        let mut out = self.clone();
        out.trainable += head_params;
        out.total += head_params;
        out.groups.push(GroupStatus {
            group: ParamGroup::Head,
            params: head_params,
            trainable: true,
        });
        out
    }
}

/// Partition a visual inventory without touching any weights.
pub fn plan_freeze(inventory: &[(ParamGroup, usize)], n_blocks: usize, policy: &FreezePolicy) -> Result<FreezeReport> {
    if policy.k_top_blocks > n_blocks {
        return Err(Error::InvalidInput(format!(
            "cannot unfreeze {} blocks of {n_blocks}",
            policy.k_top_blocks
        )));
    }
    let mut groups: Vec<GroupStatus> = Vec::new();
    for &(group, count) in inventory.iter().filter(|(g, _)| g.is_visual()) {
        let trainable = policy.is_trainable(group, n_blocks);
        match groups.iter_mut().find(|s| s.group == group) {
            Some(s) => s.params += count,
            None => groups.push(GroupStatus {
                group,
                params: count,
                trainable,
            }),
        }
    }
    let total = groups.iter().map(|g| g.params).sum();
    let trainable = groups.iter().filter(|g| g.trainable).map(|g| g.params).sum();
    Ok(FreezeReport {
        trainable,
        total,
        groups,
    })
}

/// Marks the backend's parameters trainable or frozen per the policy and
/// returns the resulting partition of the visual tower.
pub fn apply_freeze_policy(backend: &mut dyn EncoderBackend, policy: &FreezePolicy) -> Result<FreezeReport> {
    let n_blocks = backend.num_blocks();
    let report = plan_freeze(&backend.visual_inventory(), n_blocks, policy)?;
    backend
        .params_mut()
        .set_trainable_where(|p| p.group.is_visual() && policy.is_trainable(p.group, n_blocks));
    Ok(report)
}
