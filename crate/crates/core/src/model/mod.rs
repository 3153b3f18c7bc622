//! Encoder backends, freezing, the classification head, prompt scoring and
//! checkpoints.

pub mod backend;
pub mod checkpoint;
pub mod clip;
pub mod freeze;
pub mod head;
pub mod inference;
pub mod nn;
pub mod params;
pub mod prompts;
pub mod stub;

pub use backend::{image_features, BackendDescriptor, EncoderBackend};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use clip::{ClipArch, ClipBackend};
pub use freeze::{apply_freeze_policy, plan_freeze, FreezePolicy, FreezeReport};
pub use head::{build_head, ClassificationHead, HeadConfig};
pub use inference::{classify, score_with_head, score_with_prompts};
pub use params::{ParamGroup, ParamStore};
pub use prompts::{zero_shot_scores, PromptSet};
pub use stub::{stub_backend, StubBackend, StubConfig};
