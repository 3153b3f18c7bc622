//! Configuration and the end-to-end stages behind the command-line tool.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_adapt, cmd_eval, cmd_fewshot, cmd_report, cmd_zeroshot, load_reports, load_workspace, AdaptArtifacts,
    Baselines, FewShotArtifacts, Workspace,
};
pub use config::{BackendKind, Overrides, RunConfig, DATA_ROOT_ENV};
