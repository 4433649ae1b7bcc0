//! Synthetic paired data: moving-shape scenes, editing pairs for each
//! editing sub-task, reference images, dual verification and dataset export.

pub mod build;
pub mod pairs;
pub mod scene;
pub mod style;
pub mod verify;

pub use build::{build_dataset, build_samples, DatasetConfig, GeneratedSample};
pub use pairs::{
    diff_objects, extract_reference, make_insertion_pair, make_modify_pair, make_removal_pair,
    make_style_pair, EditKind, EditPair, ModifyMode,
};
pub use scene::{render, RenderedScene, SceneSpec};
pub use verify::{verify_sample, RejectReason, Verdict};
